#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcluster/cluster.hpp"

namespace qcluster::report {

// Silhouette renders with six fixed decimals (0.999777 style).
inline std::string format_silhouette(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

// Davies-Bouldin: fixed six decimals down to 1e-6, scientific below that with
// the exponent's leading zero stripped (1.111477e-8, not 1.111477e-08).
inline std::string format_davies_bouldin(double v) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    if (v == 0.0 || std::abs(v) >= 1e-6) {
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return buf;
    }
    std::snprintf(buf, sizeof(buf), "%.6e", v);
    std::string s = buf;
    const auto e = s.find('e');
    std::string mantissa = s.substr(0, e);
    std::string exponent = s.substr(e + 1);
    std::string sign;
    if (!exponent.empty() && (exponent[0] == '-' || exponent[0] == '+')) {
        if (exponent[0] == '-') sign = "-";
        exponent.erase(0, 1);
    }
    while (exponent.size() > 1 && exponent[0] == '0') exponent.erase(0, 1);
    return mantissa + "e" + sign + exponent;
}

// Calinski-Harabasz: thousands-grouped integer (15,833,657,123,341 style).
inline std::string format_calinski_harabasz(double v) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : "-inf";
    const bool negative = v < 0;
    const auto magnitude = static_cast<unsigned long long>(std::llround(std::abs(v)));
    std::string digits = std::to_string(magnitude);
    std::string grouped;
    for (std::size_t i = 0; i < digits.size(); ++i) {
        if (i > 0 && (digits.size() - i) % 3 == 0) grouped += ',';
        grouped += digits[i];
    }
    return (negative ? "-" : "") + grouped;
}

inline std::string format_epoch(const std::optional<int>& epoch) {
    return epoch ? std::to_string(*epoch) : "-";
}

inline std::vector<std::string> metrics_header() {
    return {"K", "Method", "Depth", "Epoch", "Silhouette Score", "Davies-Bouldin", "Calinski-Harabasz"};
}

inline std::vector<std::string> metrics_row_cells(const cluster::MetricsRow& row) {
    return {std::to_string(row.k),
            cluster::method_name(row.method),
            std::to_string(row.depth),
            format_epoch(row.epoch),
            format_silhouette(row.silhouette),
            format_davies_bouldin(row.davies_bouldin),
            format_calinski_harabasz(row.calinski_harabasz)};
}

// Plain-text table, columns left-aligned and padded, groups separated by k.
inline std::string render_metrics_text(const std::vector<cluster::MetricsRow>& rows) {
    std::vector<std::vector<std::string>> table;
    table.push_back(metrics_header());
    for (const auto& row : rows) table.push_back(metrics_row_cells(row));

    std::vector<std::size_t> widths(table.front().size(), 0);
    for (const auto& cells : table)
        for (std::size_t c = 0; c < cells.size(); ++c) widths[c] = std::max(widths[c], cells[c].size());

    std::ostringstream out;
    int prev_k = -1;
    for (std::size_t r = 0; r < table.size(); ++r) {
        if (r > 0) {
            const int k = rows[r - 1].k;
            if (prev_k != -1 && k != prev_k) out << '\n';
            prev_k = k;
        }
        for (std::size_t c = 0; c < table[r].size(); ++c) {
            if (c) out << "  ";
            out << table[r][c];
            if (c + 1 < table[r].size())
                out << std::string(widths[c] - table[r][c].size(), ' ');
        }
        out << '\n';
    }
    return out.str();
}

namespace detail {
inline std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string quoted = "\"";
    for (const char c : s) {
        if (c == '"') quoted += '"';
        quoted += c;
    }
    quoted += '"';
    return quoted;
}

inline std::string full_precision(double v) {
    if (!std::isfinite(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace detail

// Machine-readable rendering: full-precision values, same column names.
inline std::string render_metrics_csv(const std::vector<cluster::MetricsRow>& rows) {
    std::ostringstream out;
    const auto header = metrics_header();
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c) out << ',';
        out << detail::csv_quote(header[c]);
    }
    out << '\n';
    for (const auto& row : rows) {
        out << row.k << ',' << detail::csv_quote(cluster::method_name(row.method)) << ',' << row.depth
            << ',' << format_epoch(row.epoch) << ',' << detail::full_precision(row.silhouette) << ','
            << detail::full_precision(row.davies_bouldin) << ','
            << detail::full_precision(row.calinski_harabasz) << '\n';
    }
    return out.str();
}

inline nlohmann::json metrics_json(const std::vector<cluster::MetricsRow>& rows) {
    nlohmann::json array = nlohmann::json::array();
    const auto number_or_inf = [](double v) -> nlohmann::json {
        if (std::isfinite(v)) return v;
        return v > 0 ? "inf" : "-inf";  // JSON has no infinities
    };
    for (const auto& row : rows) {
        nlohmann::json item;
        item["k"] = row.k;
        item["method"] = cluster::method_name(row.method);
        item["depth"] = row.depth;
        if (row.epoch)
            item["epoch"] = *row.epoch;
        else
            item["epoch"] = nullptr;
        item["silhouette"] = number_or_inf(row.silhouette);
        item["davies_bouldin"] = number_or_inf(row.davies_bouldin);
        item["calinski_harabasz"] = number_or_inf(row.calinski_harabasz);
        array.push_back(std::move(item));
    }
    return array;
}

// Per-k qualitative comparison table (K / QNN Key Characteristics / QF Key
// Characteristics / Overall Recommendation).
struct StrategyRow {
    int k = 0;
    std::string qnn_characteristics;
    std::string qf_characteristics;
    std::string recommendation;
};

inline std::string render_strategy_text(const std::vector<StrategyRow>& rows,
                                        const std::string& global_synthesis) {
    std::ostringstream out;
    out << "K | QNN Key Characteristics | QF Key Characteristics | Overall Recommendation\n";
    for (const auto& row : rows)
        out << row.k << " | " << row.qnn_characteristics << " | " << row.qf_characteristics << " | "
            << row.recommendation << '\n';
    if (!global_synthesis.empty()) out << '\n' << global_synthesis << '\n';
    return out.str();
}

inline std::string render_strategy_csv(const std::vector<StrategyRow>& rows) {
    std::ostringstream out;
    out << "K,QNN Key Characteristics,QF Key Characteristics,Overall Recommendation\n";
    for (const auto& row : rows)
        out << row.k << ',' << detail::csv_quote(row.qnn_characteristics) << ','
            << detail::csv_quote(row.qf_characteristics) << ',' << detail::csv_quote(row.recommendation)
            << '\n';
    return out.str();
}

}  // namespace qcluster::report
