#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qcluster/matrix.hpp"
#include "qcluster/rng.hpp"

namespace qcluster::ingest {

// One row of the transaction table. Field set mirrors the nine attributes the
// preprocessing pipeline consumes.
struct TransactionRecord {
    std::uint64_t block_number = 0;
    std::string transaction_hash;
    std::int64_t timestamp = 0;  // seconds since epoch
    std::string from_address;
    std::string to_address;
    std::string token_name;
    std::string token_symbol;
    double token_value = 0.0;  // token units
    double gas_price = 0.0;    // wei

    bool operator==(const TransactionRecord&) const = default;
};

struct TransactionTable {
    std::vector<TransactionRecord> records;

    std::size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    bool operator==(const TransactionTable&) const = default;
};

inline constexpr std::array<std::string_view, 9> kAttributeNames = {
    "block_number", "transaction_hash", "timestamp",    "from_address", "to_address",
    "token_name",   "token_symbol",     "token_value",  "gas_price"};

struct ParseFormat {
    char delimiter = ',';
};

class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

// Minimal delimited-line splitter with double-quote support ("" escapes a quote).
inline std::vector<std::string> split_fields(const std::string& line, char delimiter) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == delimiter) {
            fields.push_back(std::move(field));
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

template <typename T>
T parse_number(const std::string& text, std::size_t row, std::string_view column);

template <>
inline double parse_number<double>(const std::string& text, std::size_t row, std::string_view column) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &pos);
    } catch (const std::exception&) {
        throw ParseError("row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': cannot parse '" + text + "' as a number");
    }
    if (pos != text.size() || !std::isfinite(v))
        throw ParseError("row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': cannot parse '" + text + "' as a number");
    return v;
}

template <>
inline std::uint64_t parse_number<std::uint64_t>(const std::string& text, std::size_t row,
                                                 std::string_view column) {
    if (text.empty() || text[0] == '-')
        throw ParseError("row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': cannot parse '" + text + "' as a non-negative integer");
    std::size_t pos = 0;
    std::uint64_t v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        throw ParseError("row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': cannot parse '" + text + "' as a non-negative integer");
    }
    if (pos != text.size())
        throw ParseError("row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': cannot parse '" + text + "' as a non-negative integer");
    return v;
}

template <>
inline std::int64_t parse_number<std::int64_t>(const std::string& text, std::size_t row,
                                               std::string_view column) {
    std::size_t pos = 0;
    std::int64_t v = 0;
    try {
        v = std::stoll(text, &pos);
    } catch (const std::exception&) {
        throw ParseError("row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': cannot parse '" + text + "' as an integer");
    }
    if (pos != text.size())
        throw ParseError("row " + std::to_string(row) + ", column '" + std::string(column) +
                         "': cannot parse '" + text + "' as an integer");
    return v;
}

}  // namespace detail

// Parses delimited text with a header row naming all nine attributes (any
// column order, extra columns ignored). Malformed rows throw; nothing is
// skipped silently.
inline TransactionTable parse_transactions(std::istream& in, const ParseFormat& format = {}) {
    std::string header_line;
    if (!std::getline(in, header_line)) throw ParseError("empty input");
    header_line = detail::strip_cr(header_line);
    const auto header = detail::split_fields(header_line, format.delimiter);

    std::map<std::string_view, std::size_t> column_index;
    for (std::size_t i = 0; i < header.size(); ++i) column_index.emplace(header[i], i);
    for (const auto name : kAttributeNames)
        if (!column_index.contains(name))
            throw ParseError("missing required column '" + std::string(name) + "'");

    const auto idx = [&](std::string_view name) { return column_index.at(name); };

    TransactionTable table;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        ++row;
        const auto fields = detail::split_fields(line, format.delimiter);
        if (fields.size() < header.size())
            throw ParseError("row " + std::to_string(row) + ": expected " +
                             std::to_string(header.size()) + " fields, got " +
                             std::to_string(fields.size()));
        TransactionRecord rec;
        rec.block_number = detail::parse_number<std::uint64_t>(fields[idx("block_number")], row, "block_number");
        rec.transaction_hash = fields[idx("transaction_hash")];
        rec.timestamp = detail::parse_number<std::int64_t>(fields[idx("timestamp")], row, "timestamp");
        rec.from_address = fields[idx("from_address")];
        rec.to_address = fields[idx("to_address")];
        rec.token_name = fields[idx("token_name")];
        rec.token_symbol = fields[idx("token_symbol")];
        rec.token_value = detail::parse_number<double>(fields[idx("token_value")], row, "token_value");
        rec.gas_price = detail::parse_number<double>(fields[idx("gas_price")], row, "gas_price");

        if (rec.transaction_hash.empty())
            throw ParseError("row " + std::to_string(row) + ", column 'transaction_hash': must be non-empty");
        if (rec.timestamp < 0)
            throw ParseError("row " + std::to_string(row) + ", column 'timestamp': must be non-negative");
        if (rec.token_value < 0)
            throw ParseError("row " + std::to_string(row) + ", column 'token_value': must be non-negative");
        if (rec.gas_price < 0)
            throw ParseError("row " + std::to_string(row) + ", column 'gas_price': must be non-negative");
        table.records.push_back(std::move(rec));
    }
    return table;
}

inline void write_transactions(const TransactionTable& table, std::ostream& out, char delimiter = ',') {
    for (std::size_t i = 0; i < kAttributeNames.size(); ++i) {
        if (i) out << delimiter;
        out << kAttributeNames[i];
    }
    out << '\n';
    out.precision(17);
    for (const auto& r : table.records) {
        out << r.block_number << delimiter << r.transaction_hash << delimiter << r.timestamp
            << delimiter << r.from_address << delimiter << r.to_address << delimiter << r.token_name
            << delimiter << r.token_symbol << delimiter << r.token_value << delimiter << r.gas_price
            << '\n';
    }
}

struct LabelEncoding {
    std::vector<std::size_t> codes;
    std::map<std::string, std::size_t> mapping;  // value -> code, sorted lexicographic
};

// Codes follow sorted lexicographic order of the distinct values, so the
// encoding is stable under row shuffling.
inline LabelEncoding label_encode(std::span<const std::string> values) {
    if (values.empty()) throw std::invalid_argument("label_encode: empty sequence");
    LabelEncoding enc;
    for (const auto& v : values) enc.mapping.emplace(v, 0);
    std::size_t code = 0;
    for (auto& [value, c] : enc.mapping) c = code++;
    enc.codes.reserve(values.size());
    for (const auto& v : values) enc.codes.push_back(enc.mapping.at(v));
    return enc;
}

inline std::string label_decode(const LabelEncoding& enc, std::size_t code) {
    for (const auto& [value, c] : enc.mapping)
        if (c == code) return value;
    throw std::invalid_argument("label_decode: unknown code " + std::to_string(code));
}

// Quantile with linear interpolation between order statistics (position
// (n-1)*q), evaluated on an already sorted sequence.
inline double interpolated_quantile(std::span<const double> sorted, double q) {
    const double pos = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = static_cast<std::size_t>(std::ceil(pos));
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

struct RobustScaleParams {
    double median = 0.0;
    double iqr = 1.0;  // 1.0 substituted when Q3 - Q1 == 0
};

inline RobustScaleParams robust_scale_params(std::span<const double> values) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    RobustScaleParams p;
    p.median = interpolated_quantile(sorted, 0.5);
    const double iqr = interpolated_quantile(sorted, 0.75) - interpolated_quantile(sorted, 0.25);
    p.iqr = iqr == 0.0 ? 1.0 : iqr;
    return p;
}

// (x - median) / IQR, with the divisor replaced by 1 when the IQR is zero so
// constant columns map to zero instead of Inf.
inline std::vector<double> robust_scale(std::span<const double> values) {
    if (values.size() < 2) throw std::invalid_argument("robust_scale: need at least 2 values");
    const auto p = robust_scale_params(values);
    std::vector<double> out;
    out.reserve(values.size());
    for (const double v : values) out.push_back((v - p.median) / p.iqr);
    return out;
}

// phase = 2*pi * (timestamp mod period) / period
inline std::pair<double, double> cyclical_encode(double timestamp, double period) {
    if (period <= 0.0) throw std::invalid_argument("cyclical_encode: period must be positive");
    double m = std::fmod(timestamp, period);
    if (m < 0.0) m += period;
    const double phase = 2.0 * std::numbers::pi * m / period;
    return {std::sin(phase), std::cos(phase)};
}

struct PreprocessConfig {
    double cyclical_period = 86400.0;  // one day
    bool drop_block_number = false;    // raw block height dominates distances; kept by default
};

// Column layout (fixed): block_number (unless dropped), timestamp_sin,
// timestamp_cos, from_address, to_address, token_name, token_symbol,
// token_value, gas_price.
inline FeatureMatrix assemble_features(const TransactionTable& table, const PreprocessConfig& config = {}) {
    if (table.empty()) throw std::invalid_argument("assemble_features: empty table");
    const std::size_t n = table.size();

    const auto collect_strings = [&](auto field) {
        std::vector<std::string> v;
        v.reserve(n);
        for (const auto& r : table.records) v.push_back(r.*field);
        return v;
    };
    const auto collect_doubles = [&](auto getter) {
        std::vector<double> v;
        v.reserve(n);
        for (const auto& r : table.records) v.push_back(getter(r));
        return v;
    };
    // Single-record tables hit the IQR-0 fallback (center only).
    const auto scaled = [&](std::span<const double> values) {
        if (values.size() == 1) return std::vector<double>{0.0};
        return robust_scale(values);
    };

    const auto from_codes = label_encode(collect_strings(&TransactionRecord::from_address)).codes;
    const auto to_codes = label_encode(collect_strings(&TransactionRecord::to_address)).codes;
    const auto name_codes = label_encode(collect_strings(&TransactionRecord::token_name)).codes;
    const auto symbol_codes = label_encode(collect_strings(&TransactionRecord::token_symbol)).codes;
    const auto value_scaled = scaled(collect_doubles([](const auto& r) { return r.token_value; }));
    const auto gas_scaled = scaled(collect_doubles([](const auto& r) { return r.gas_price; }));

    FeatureMatrix m;
    if (!config.drop_block_number) m.column_names.push_back("block_number");
    for (const char* name : {"timestamp_sin", "timestamp_cos", "from_address", "to_address",
                             "token_name", "token_symbol", "token_value", "gas_price"})
        m.column_names.push_back(name);

    m.values = Matrix(n, m.column_names.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = table.records[i];
        std::size_t c = 0;
        if (!config.drop_block_number) m.values.at(i, c++) = static_cast<double>(r.block_number);
        const auto [ts_sin, ts_cos] =
            cyclical_encode(static_cast<double>(r.timestamp), config.cyclical_period);
        m.values.at(i, c++) = ts_sin;
        m.values.at(i, c++) = ts_cos;
        m.values.at(i, c++) = static_cast<double>(from_codes[i]);
        m.values.at(i, c++) = static_cast<double>(to_codes[i]);
        m.values.at(i, c++) = static_cast<double>(name_codes[i]);
        m.values.at(i, c++) = static_cast<double>(symbol_codes[i]);
        m.values.at(i, c++) = value_scaled[i];
        m.values.at(i, c++) = gas_scaled[i];
    }
    return m;
}

// Synthetic generator profile. groups > 1 plants that many well-separated
// record groups (distinct block ranges, time-of-day bands, actor pools, one
// token per group, distinct value scales); groups == 1 produces one mixed pool.
struct SynthProfile {
    std::string name = "default";
    int groups = 1;
    int senders = 8;     // per group when groups > 1
    int receivers = 10;  // per group when groups > 1
    int tokens = 3;      // total when groups == 1; one per group otherwise
    double value_scale = 100.0;
};

// Accepts "default" or "<G>-blobs" (e.g. "3-blobs").
inline SynthProfile parse_profile(const std::string& text) {
    SynthProfile p;
    p.name = text;
    if (text == "default") return p;
    const auto dash = text.find("-blobs");
    if (dash != std::string::npos && dash > 0 && dash + 6 == text.size()) {
        int groups = 0;
        try {
            std::size_t pos = 0;
            groups = std::stoi(text, &pos);
            if (pos != dash) groups = 0;
        } catch (const std::exception&) {
            groups = 0;
        }
        if (groups >= 1) {
            p.groups = groups;
            p.senders = 3;
            p.receivers = 3;
            p.tokens = 1;
            return p;
        }
    }
    throw std::invalid_argument("unknown synthetic profile '" + text + "' (expected 'default' or '<G>-blobs')");
}

namespace detail {
inline std::string hex_address(Rng& rng, char group_digit) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s = "0x";
    s += group_digit;
    for (int i = 0; i < 39; ++i) s += kHex[rng.uniform_index(16)];
    return s;
}

inline std::string hex_hash(Rng& rng) {
    static constexpr char kHex[] = "0123456789abcdef";
    std::string s = "0x";
    for (int i = 0; i < 64; ++i) s += kHex[rng.uniform_index(16)];
    return s;
}
}  // namespace detail

// Deterministic for fixed (seed, n, profile). Record i belongs to planted
// group i % groups, so n = 90 with 3 groups yields exactly 30 records each.
inline TransactionTable synth_transactions(std::uint64_t seed, std::size_t n, const SynthProfile& profile = {}) {
    if (n == 0) throw std::invalid_argument("synth_transactions: n must be >= 1");
    if (profile.groups < 1) throw std::invalid_argument("synth_transactions: groups must be >= 1");

    const int groups = profile.groups;
    Rng pool_rng(derive_seed(seed, "synth-pools"));
    Rng rec_rng(derive_seed(seed, "synth-records"));

    struct GroupSpec {
        std::vector<std::string> senders;
        std::vector<std::string> receivers;
        std::vector<std::pair<std::string, std::string>> tokens;  // (name, symbol)
        std::uint64_t block_base;
        double day_second_base;   // time-of-day band start
        double value_center;
        double gas_center;
    };

    std::vector<GroupSpec> specs(groups);
    static constexpr char kHexDigits[] = "0123456789abcdef";
    for (int g = 0; g < groups; ++g) {
        auto& spec = specs[g];
        const char digit = kHexDigits[g % 16];
        for (int i = 0; i < profile.senders; ++i) spec.senders.push_back(detail::hex_address(pool_rng, digit));
        for (int i = 0; i < profile.receivers; ++i) spec.receivers.push_back(detail::hex_address(pool_rng, digit));
        const int tokens = groups > 1 ? 1 : profile.tokens;
        for (int t = 0; t < tokens; ++t) {
            const int id = groups > 1 ? g : t;
            spec.tokens.emplace_back("Token" + std::string(1, static_cast<char>('A' + id % 26)),
                                     "TK" + std::string(1, static_cast<char>('A' + id % 26)));
        }
        spec.block_base = 14'000'000ULL + static_cast<std::uint64_t>(g) * 100'000ULL;
        spec.day_second_base = static_cast<double>((g * (86400 / std::max(groups, 1))) % 86400);
        spec.value_center = profile.value_scale * std::pow(25.0, g);
        spec.gas_center = 2e10 * (1.0 + 3.0 * g);
    }

    TransactionTable table;
    table.records.reserve(n);
    const std::int64_t day_base = 1'700'000'000LL - 1'700'000'000LL % 86400;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& spec = specs[i % static_cast<std::size_t>(groups)];
        TransactionRecord r;
        r.block_number = spec.block_base + i * 3 + rec_rng.uniform_index(3);
        r.transaction_hash = detail::hex_hash(rec_rng);
        const double band = groups > 1 ? 7200.0 : 86400.0;
        const double day_second =
            std::fmod(spec.day_second_base + rec_rng.uniform(0.0, band), 86400.0);
        r.timestamp = day_base + static_cast<std::int64_t>(i / 16) * 86400 +
                      static_cast<std::int64_t>(day_second);
        r.from_address = spec.senders[rec_rng.uniform_index(spec.senders.size())];
        r.to_address = spec.receivers[rec_rng.uniform_index(spec.receivers.size())];
        const auto& token = spec.tokens[rec_rng.uniform_index(spec.tokens.size())];
        r.token_name = token.first;
        r.token_symbol = token.second;
        r.token_value = spec.value_center * std::exp(rec_rng.gaussian(0.0, 0.2));
        r.gas_price = spec.gas_center * std::exp(rec_rng.gaussian(0.0, 0.15));
        table.records.push_back(std::move(r));
    }
    return table;
}

}  // namespace qcluster::ingest
