#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qcluster/cluster.hpp"
#include "qcluster/ingest.hpp"

namespace qcluster::agent {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Identifier re-encoding
// ---------------------------------------------------------------------------

// Bijective re-encoding of hashed identifiers into compact human-readable
// tokens (TX-n for transaction hashes, ADDR-n for addresses; senders and
// receivers share the ADDR namespace). Token names and symbols stay verbatim:
// they carry semantics and are already short.
struct IdMap {
    std::map<std::string, std::string> forward;  // original -> compact
    std::map<std::string, std::string> inverse;  // compact -> original
};

inline std::pair<ingest::TransactionTable, IdMap> reencode_identifiers(
    const ingest::TransactionTable& table) {
    if (table.empty()) throw std::invalid_argument("reencode_identifiers: empty table");
    IdMap map;
    std::size_t next_tx = 1;
    std::size_t next_addr = 1;
    const auto encode = [&map](const std::string& value, const char* prefix, std::size_t& counter) {
        const auto it = map.forward.find(value);
        if (it != map.forward.end()) return it->second;
        const std::string token = std::string(prefix) + "-" + std::to_string(counter++);
        map.forward.emplace(value, token);
        map.inverse.emplace(token, value);
        return token;
    };

    ingest::TransactionTable compact = table;
    for (auto& rec : compact.records) {
        rec.transaction_hash = encode(rec.transaction_hash, "TX", next_tx);
        rec.from_address = encode(rec.from_address, "ADDR", next_addr);
        rec.to_address = encode(rec.to_address, "ADDR", next_addr);
    }
    return {std::move(compact), std::move(map)};
}

inline ingest::TransactionTable decode_identifiers(const ingest::TransactionTable& compact,
                                                   const IdMap& map) {
    ingest::TransactionTable table = compact;
    const auto decode = [&map](const std::string& token) {
        const auto it = map.inverse.find(token);
        if (it == map.inverse.end())
            throw std::invalid_argument("decode_identifiers: unknown token '" + token + "'");
        return it->second;
    };
    for (auto& rec : table.records) {
        rec.transaction_hash = decode(rec.transaction_hash);
        rec.from_address = decode(rec.from_address);
        rec.to_address = decode(rec.to_address);
    }
    return table;
}

// ---------------------------------------------------------------------------
// Clustered information base (nested strategy -> depth -> epoch -> clusters)
// ---------------------------------------------------------------------------

struct ClusterKey {
    std::string strategy;  // "QNN" | "QF"
    int k = 0;
    int depth = 0;
    int epoch = 0;
    int cluster = 0;

    auto operator<=>(const ClusterKey&) const = default;
};

struct EpochKey {
    std::string strategy;
    int k = 0;
    int depth = 0;
    int epoch = 0;

    auto operator<=>(const EpochKey&) const = default;
};

// One strategy's nested partition structure for a fixed k. Iteration over
// depths, epochs and clusters is ascending and stable.
struct ClusteredInfoBase {
    std::string strategy;
    int k = 0;
    std::map<int, std::map<int, std::vector<std::vector<std::size_t>>>> partitions;
};

inline ClusteredInfoBase build_info_base(
    const std::string& strategy, int k,
    const std::map<std::pair<int, int>, cluster::ClusterAssignment>& assignments,
    const ingest::TransactionTable& table) {
    ClusteredInfoBase base;
    base.strategy = strategy;
    base.k = k;
    for (const auto& [key, assignment] : assignments) {
        const auto [depth, epoch] = key;
        if (assignment.labels.size() != table.size())
            throw std::invalid_argument("build_info_base: assignment size does not match table size");
        if (assignment.k != k)
            throw std::invalid_argument("build_info_base: assignment k does not match base k");
        std::vector<std::vector<std::size_t>> clusters(static_cast<std::size_t>(k));
        for (std::size_t i = 0; i < assignment.labels.size(); ++i) {
            const int label = assignment.labels[i];
            if (label < 0 || label >= k)
                throw std::invalid_argument("build_info_base: label out of range");
            clusters[static_cast<std::size_t>(label)].push_back(i);
        }
        for (std::size_t c = 0; c < clusters.size(); ++c)
            if (clusters[c].empty())
                throw std::invalid_argument("build_info_base: cluster " + std::to_string(c) +
                                            " at depth " + std::to_string(depth) + ", epoch " +
                                            std::to_string(epoch) + " is empty (partition must cover all clusters)");
        base.partitions[depth][epoch] = std::move(clusters);
    }
    return base;
}

// ---------------------------------------------------------------------------
// Text backends
// ---------------------------------------------------------------------------

class TextBackend {
  public:
    virtual ~TextBackend() = default;
    virtual std::string generate(const json& context) = 0;
    virtual std::string name() const = 0;
};

namespace detail {
inline std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}
}  // namespace detail

// Deterministic template fill from a rule table keyed on context["kind"].
// Ships as the default so the whole stage-2 pipeline runs offline.
class MockBackend final : public TextBackend {
  public:
    std::string name() const override { return "mock"; }

    std::string generate(const json& context) override {
        const std::string kind = context.value("kind", "");
        if (kind == "cluster_meaning") return cluster_meaning_text(context);
        if (kind == "intra_epoch_contrast") return contrast_text(context);
        if (kind == "intra_epoch_rationale") return rationale_text(context);
        if (kind == "inter_strategy") return inter_strategy_text(context);
        if (kind == "strategy_qnn") return strategy_side_text(context, "trained-circuit");
        if (kind == "strategy_qf") return strategy_side_text(context, "random-circuit");
        if (kind == "strategy_recommendation") return recommendation_text(context);
        if (kind == "global_synthesis") return synthesis_text(context);
        throw std::invalid_argument("mock backend: unknown context kind '" + kind + "'");
    }

  private:
    static std::string cluster_meaning_text(const json& c) {
        const auto& stats = c.at("stats");
        std::ostringstream out;
        if (stats.at("singleton").get<bool>()) {
            const auto& rep = c.at("representatives").at(0);
            out << "This singleton cluster holds one transaction of "
                << detail::format_value(rep.at("token_value").get<double>()) << ' '
                << rep.at("token_symbol").get<std::string>() << " from "
                << rep.at("from_address").get<std::string>() << " to "
                << rep.at("to_address").get<std::string>() << ", an extreme transaction isolated from its peers.";
            return out.str();
        }
        out << "Cluster of " << stats.at("size").get<std::size_t>() << " transactions dominated by token "
            << stats.at("dominant_token").get<std::string>() << ", with values between "
            << detail::format_value(stats.at("value_min").get<double>()) << " and "
            << detail::format_value(stats.at("value_max").get<double>()) << '.';
        if (stats.at("dominant_sender").get<bool>())
            out << " Sender " << stats.at("top_sender").get<std::string>() << " accounts for "
                << detail::format_value(100.0 * stats.at("top_sender_share").get<double>())
                << "% of the records.";
        return out.str();
    }

    static std::string contrast_text(const json& c) {
        const auto& a = c.at("a");
        const auto& b = c.at("b");
        const auto size_a = a.at("size").get<std::size_t>();
        const auto size_b = b.at("size").get<std::size_t>();
        std::ostringstream out;
        out << "Cluster " << a.at("cluster").get<int>() << " (" << size_a << " records, token "
            << a.at("dominant_token").get<std::string>() << ") vs cluster " << b.at("cluster").get<int>()
            << " (" << size_b << " records, token " << b.at("dominant_token").get<std::string>() << "): ";
        if (size_a == size_b)
            out << "equal size";
        else
            out << (size_a > size_b ? "the former is larger" : "the latter is larger");
        const bool overlap = a.at("value_min").get<double>() <= b.at("value_max").get<double>() &&
                             b.at("value_min").get<double>() <= a.at("value_max").get<double>();
        out << (overlap ? "; value ranges overlap." : "; value ranges are disjoint.");
        return out.str();
    }

    static std::string rationale_text(const json& c) {
        if (c.at("all_identical").get<bool>())
            return "All clusters share identical statistics; this is an indistinct partition.";
        std::vector<std::string> factors;
        if (c.at("sizes_differ").get<bool>()) factors.push_back("cluster size");
        if (c.at("tokens_differ").get<bool>()) factors.push_back("dominant token");
        if (c.at("values_differ").get<bool>()) factors.push_back("value range");
        std::ostringstream out;
        out << "The partition separates records by ";
        for (std::size_t i = 0; i < factors.size(); ++i) {
            if (i) out << (i + 1 == factors.size() ? " and " : ", ");
            out << factors[i];
        }
        out << '.';
        return out.str();
    }

    static std::string inter_strategy_text(const json& c) {
        std::ostringstream out;
        out << "QNN produced " << c.at("qnn_singletons").get<int>()
            << " singleton cluster(s) versus " << c.at("qf_singletons").get<int>()
            << " under QF; dominant tokens "
            << (c.at("tokens_diverge").get<bool>() ? "diverge between the strategies."
                                                   : "agree between the strategies.");
        return out.str();
    }

    static std::string strategy_side_text(const json& c, const char* flavour) {
        std::ostringstream out;
        out << "At K=" << c.at("k").get<int>() << " the " << flavour << " strategy formed "
            << c.at("singletons").get<int>() << " singleton cluster(s) across "
            << c.at("epochs").get<int>() << " analyzed epoch(s), most often dominated by token "
            << c.at("top_token").get<std::string>() << '.';
        return out.str();
    }

    static std::string recommendation_text(const json& c) {
        const int qnn = c.at("qnn_singletons").get<int>();
        const int qf = c.at("qf_singletons").get<int>();
        std::ostringstream out;
        out << "At K=" << c.at("k").get<int>() << ", ";
        if (qnn > qf)
            out << "the trained strategy isolates extremes while the random strategy yields broader groupings; "
                   "prefer the trained side for anomaly screening and the random side for coverage.";
        else if (qf > qnn)
            out << "the random strategy fragments more than the trained one; prefer the trained side for "
                   "stable partitions.";
        else
            out << "both strategies fragment equally; choose by the quantitative metrics.";
        return out.str();
    }

    static std::string synthesis_text(const json& c) {
        std::ostringstream out;
        out << "Recommended cluster count: K=" << c.at("recommended_k").get<int>()
            << " (fewest singleton clusters, then highest mean silhouette across the sweep).";
        return out.str();
    }
};

// The generate_text operation: renders the structured context through the
// configured backend.
inline std::string generate_text(TextBackend& backend, const json& context) {
    return backend.generate(context);
}

// ---------------------------------------------------------------------------
// Cluster meaning and comparisons
// ---------------------------------------------------------------------------

struct ClusterStats {
    std::size_t size = 0;
    bool singleton = false;
    std::string top_sender;
    double top_sender_share = 0.0;
    bool dominant_sender = false;  // share >= threshold
    std::string dominant_token;    // plurality winner
    double value_min = 0.0;
    double value_max = 0.0;

    bool operator==(const ClusterStats&) const = default;
};

struct MeaningConfig {
    std::size_t representative_cap = 10;       // R
    double dominant_sender_threshold = 0.8;
};

struct ClusterInfo {
    ClusterKey key;
    ClusterStats stats;
    std::vector<std::size_t> representatives;  // row indices, largest value then earliest timestamp
    std::string summary;
};

namespace detail {

inline ClusterStats compute_stats(const std::vector<std::size_t>& members,
                                  const ingest::TransactionTable& table, const MeaningConfig& config) {
    ClusterStats stats;
    stats.size = members.size();
    stats.singleton = members.size() == 1;
    std::map<std::string, std::size_t> senders;
    std::map<std::string, std::size_t> tokens;
    stats.value_min = std::numeric_limits<double>::infinity();
    stats.value_max = -std::numeric_limits<double>::infinity();
    for (const std::size_t i : members) {
        const auto& rec = table.records[i];
        ++senders[rec.from_address];
        ++tokens[rec.token_name];
        stats.value_min = std::min(stats.value_min, rec.token_value);
        stats.value_max = std::max(stats.value_max, rec.token_value);
    }
    // Plurality winners; ties resolved by lexicographic order (map iteration).
    std::size_t best_sender = 0;
    for (const auto& [sender, count] : senders)
        if (count > best_sender) {
            best_sender = count;
            stats.top_sender = sender;
        }
    stats.top_sender_share = static_cast<double>(best_sender) / static_cast<double>(members.size());
    stats.dominant_sender = stats.top_sender_share >= config.dominant_sender_threshold;
    std::size_t best_token = 0;
    for (const auto& [token, count] : tokens)
        if (count > best_token) {
            best_token = count;
            stats.dominant_token = token;
        }
    return stats;
}

inline json stats_json(const ClusterStats& stats) {
    return json{{"size", stats.size},
                {"singleton", stats.singleton},
                {"top_sender", stats.top_sender},
                {"top_sender_share", stats.top_sender_share},
                {"dominant_sender", stats.dominant_sender},
                {"dominant_token", stats.dominant_token},
                {"value_min", stats.value_min},
                {"value_max", stats.value_max}};
}

inline json key_json(const ClusterKey& key) {
    return json{{"strategy", key.strategy}, {"k", key.k},      {"depth", key.depth},
                {"epoch", key.epoch},       {"cluster", key.cluster}};
}

}  // namespace detail

// Deterministic stats plus a backend-written summary built from a structured
// context carrying the stats and up to R representative records.
inline ClusterInfo cluster_meaning(const ClusterKey& key, const std::vector<std::size_t>& members,
                                   const ingest::TransactionTable& table, TextBackend& backend,
                                   const MeaningConfig& config = {}) {
    if (members.empty()) throw std::invalid_argument("cluster_meaning: empty cluster");
    ClusterInfo info;
    info.key = key;
    info.stats = detail::compute_stats(members, table, config);

    info.representatives = members;
    std::sort(info.representatives.begin(), info.representatives.end(),
              [&table](std::size_t a, std::size_t b) {
                  const auto& ra = table.records[a];
                  const auto& rb = table.records[b];
                  if (ra.token_value != rb.token_value) return ra.token_value > rb.token_value;
                  if (ra.timestamp != rb.timestamp) return ra.timestamp < rb.timestamp;
                  return a < b;
              });
    if (info.representatives.size() > config.representative_cap)
        info.representatives.resize(config.representative_cap);

    json context{{"context_version", 1},
                 {"kind", "cluster_meaning"},
                 {"key", detail::key_json(key)},
                 {"stats", detail::stats_json(info.stats)}};
    json reps = json::array();
    for (const std::size_t i : info.representatives) {
        const auto& rec = table.records[i];
        reps.push_back(json{{"transaction_hash", rec.transaction_hash},
                            {"from_address", rec.from_address},
                            {"to_address", rec.to_address},
                            {"token_name", rec.token_name},
                            {"token_symbol", rec.token_symbol},
                            {"token_value", rec.token_value},
                            {"timestamp", rec.timestamp}});
    }
    context["representatives"] = std::move(reps);
    info.summary = generate_text(backend, context);
    return info;
}

struct EpochComparisonRecord {
    EpochKey key;
    std::vector<int> clusters;            // cluster indices, ascending
    std::vector<std::string> contrasts;   // one per cluster pair, index order
    std::string rationale;
    int singleton_count = 0;
    std::vector<std::size_t> cluster_sizes;
    std::vector<std::string> dominant_tokens;
};

// Pairwise contrasts among the epoch's clusters plus a partitioning
// rationale. All inputs must share (strategy, k, depth, epoch).
inline EpochComparisonRecord intra_epoch_compare(const std::vector<ClusterInfo>& infos,
                                                 TextBackend& backend) {
    if (infos.size() < 2) throw std::invalid_argument("intra_epoch_compare: need >= 2 clusters");
    const EpochKey key{infos.front().key.strategy, infos.front().key.k, infos.front().key.depth,
                       infos.front().key.epoch};
    for (const auto& info : infos)
        if (EpochKey{info.key.strategy, info.key.k, info.key.depth, info.key.epoch} != key)
            throw std::invalid_argument("intra_epoch_compare: mismatched epoch keys");

    EpochComparisonRecord record;
    record.key = key;
    for (const auto& info : infos) {
        record.clusters.push_back(info.key.cluster);
        record.singleton_count += info.stats.singleton ? 1 : 0;
        record.cluster_sizes.push_back(info.stats.size);
        record.dominant_tokens.push_back(info.stats.dominant_token);
    }

    const auto cluster_json = [](const ClusterInfo& info) {
        json j = detail::stats_json(info.stats);
        j["cluster"] = info.key.cluster;
        return j;
    };
    for (std::size_t a = 0; a < infos.size(); ++a)
        for (std::size_t b = a + 1; b < infos.size(); ++b) {
            json context{{"context_version", 1},
                         {"kind", "intra_epoch_contrast"},
                         {"a", cluster_json(infos[a])},
                         {"b", cluster_json(infos[b])}};
            record.contrasts.push_back(generate_text(backend, context));
        }

    bool all_identical = true;
    bool sizes_differ = false, tokens_differ = false, values_differ = false;
    for (std::size_t i = 1; i < infos.size(); ++i) {
        if (infos[i].stats != infos.front().stats) all_identical = false;
        if (infos[i].stats.size != infos.front().stats.size) sizes_differ = true;
        if (infos[i].stats.dominant_token != infos.front().stats.dominant_token) tokens_differ = true;
        if (infos[i].stats.value_min != infos.front().stats.value_min ||
            infos[i].stats.value_max != infos.front().stats.value_max)
            values_differ = true;
    }
    json context{{"context_version", 1},
                 {"kind", "intra_epoch_rationale"},
                 {"all_identical", all_identical},
                 {"sizes_differ", sizes_differ},
                 {"tokens_differ", tokens_differ},
                 {"values_differ", values_differ}};
    record.rationale = generate_text(backend, context);
    return record;
}

struct InterStrategyDiff {
    int k = 0;
    int depth = 0;
    int qnn_epoch = 0;
    int qf_epoch = 0;
    int singleton_delta = 0;  // QNN singletons minus QF singletons
    std::vector<std::string> qnn_only_tokens;
    std::vector<std::string> qf_only_tokens;
    std::string narrative;

    bool structurally_empty() const {
        return singleton_delta == 0 && qnn_only_tokens.empty() && qf_only_tokens.empty();
    }
};

// QNN-vs-QF difference record for one epoch pair at equal (k, depth). The
// epochs are each strategy's analyzed epoch and may differ.
inline InterStrategyDiff inter_strategy_compare(const EpochComparisonRecord& qnn,
                                                const EpochComparisonRecord& qf, TextBackend& backend) {
    if (qnn.key.strategy != "QNN" || qf.key.strategy != "QF")
        throw std::invalid_argument("inter_strategy_compare: records must be a (QNN, QF) pair");
    if (qnn.key.k != qf.key.k || qnn.key.depth != qf.key.depth)
        throw std::invalid_argument("inter_strategy_compare: (k, depth) coordinates do not match");

    InterStrategyDiff diff;
    diff.k = qnn.key.k;
    diff.depth = qnn.key.depth;
    diff.qnn_epoch = qnn.key.epoch;
    diff.qf_epoch = qf.key.epoch;
    diff.singleton_delta = qnn.singleton_count - qf.singleton_count;

    const std::set<std::string> qnn_tokens(qnn.dominant_tokens.begin(), qnn.dominant_tokens.end());
    const std::set<std::string> qf_tokens(qf.dominant_tokens.begin(), qf.dominant_tokens.end());
    for (const auto& t : qnn_tokens)
        if (!qf_tokens.contains(t)) diff.qnn_only_tokens.push_back(t);
    for (const auto& t : qf_tokens)
        if (!qnn_tokens.contains(t)) diff.qf_only_tokens.push_back(t);

    json context{{"context_version", 1},
                 {"kind", "inter_strategy"},
                 {"k", diff.k},
                 {"depth", diff.depth},
                 {"qnn_singletons", qnn.singleton_count},
                 {"qf_singletons", qf.singleton_count},
                 {"tokens_diverge", !diff.qnn_only_tokens.empty() || !diff.qf_only_tokens.empty()}};
    diff.narrative = generate_text(backend, context);
    return diff;
}

// ---------------------------------------------------------------------------
// Knowledge base (Cluster-level / intra-epoch / strategy-level)
// ---------------------------------------------------------------------------

struct PerKRecord {
    int k = 0;
    std::string qnn_characteristics;
    std::string qf_characteristics;
    std::string recommendation;
    std::vector<InterStrategyDiff> diffs;
};

struct StrategyKnowledge {
    std::map<int, PerKRecord> per_k;
    int recommended_k = 0;
    std::string global_synthesis;
};

struct KnowledgeBase {
    IdMap idmap;
    std::map<ClusterKey, ClusterInfo> cluster_infos;
    std::map<EpochKey, EpochComparisonRecord> epoch_comparisons;
    StrategyKnowledge strategy;
};

// Per-k quantitative context the stage-1 sweep hands to the strategy-level
// analysis (the argmax rule needs silhouettes).
struct KMetricSummary {
    double mean_silhouette = 0.0;
};

namespace detail {

struct StrategySideDigest {
    int singletons = 0;
    int epochs = 0;
    std::map<std::string, int> token_counts;

    std::string top_token() const {
        std::string best = "-";
        int best_count = 0;
        for (const auto& [token, count] : token_counts)
            if (count > best_count) {
                best_count = count;
                best = token;
            }
        return best;
    }
};

}  // namespace detail

// Step 4 of the analytical pipeline: per-k strategy records plus the global
// synthesis. The recommended k minimizes total singleton count and breaks
// ties by the higher mean silhouette.
inline StrategyKnowledge global_strategy_analysis(const KnowledgeBase& kb, const std::vector<int>& k_range,
                                                  const std::map<int, KMetricSummary>& metric_summaries,
                                                  TextBackend& backend,
                                                  std::vector<InterStrategyDiff> diffs = {}) {
    StrategyKnowledge knowledge;

    std::map<int, detail::StrategySideDigest> qnn_digest;
    std::map<int, detail::StrategySideDigest> qf_digest;
    for (const auto& [key, record] : kb.epoch_comparisons) {
        auto& digest = key.strategy == "QNN" ? qnn_digest[key.k] : qf_digest[key.k];
        digest.singletons += record.singleton_count;
        digest.epochs += 1;
        for (const auto& token : record.dominant_tokens) ++digest.token_counts[token];
    }

    int best_k = 0;
    int best_singletons = std::numeric_limits<int>::max();
    double best_sil = -std::numeric_limits<double>::infinity();
    for (const int k : k_range) {
        if (!qnn_digest.contains(k) || !qf_digest.contains(k))
            throw std::invalid_argument("global_strategy_analysis: missing epoch comparisons for k = " +
                                        std::to_string(k));
        if (!metric_summaries.contains(k))
            throw std::invalid_argument("global_strategy_analysis: missing metric summary for k = " +
                                        std::to_string(k));
        const int singletons = qnn_digest[k].singletons + qf_digest[k].singletons;
        const double sil = metric_summaries.at(k).mean_silhouette;
        if (singletons < best_singletons || (singletons == best_singletons && sil > best_sil)) {
            best_singletons = singletons;
            best_sil = sil;
            best_k = k;
        }

        PerKRecord record;
        record.k = k;
        const auto side_context = [&](const detail::StrategySideDigest& digest, const char* kind) {
            return json{{"context_version", 1}, {"kind", kind},
                        {"k", k},               {"singletons", digest.singletons},
                        {"epochs", digest.epochs}, {"top_token", digest.top_token()}};
        };
        record.qnn_characteristics = generate_text(backend, side_context(qnn_digest[k], "strategy_qnn"));
        record.qf_characteristics = generate_text(backend, side_context(qf_digest[k], "strategy_qf"));
        record.recommendation = generate_text(
            backend, json{{"context_version", 1},
                          {"kind", "strategy_recommendation"},
                          {"k", k},
                          {"qnn_singletons", qnn_digest[k].singletons},
                          {"qf_singletons", qf_digest[k].singletons}});
        for (auto& diff : diffs)
            if (diff.k == k) record.diffs.push_back(diff);
        knowledge.per_k.emplace(k, std::move(record));
    }

    knowledge.recommended_k = best_k;
    knowledge.global_synthesis = generate_text(
        backend, json{{"context_version", 1},
                      {"kind", "global_synthesis"},
                      {"recommended_k", best_k},
                      {"total_singletons", best_singletons}});
    return knowledge;
}

// ---------------------------------------------------------------------------
// Analytical pipeline driver (per-depth/epoch steps 1-3, then step 4)
// ---------------------------------------------------------------------------

struct AnalysisResult {
    KnowledgeBase kb;
    std::vector<InterStrategyDiff> diffs;
};

// Walks paired QNN/QF info bases for one k: cluster meanings, intra-epoch
// comparisons, and inter-strategy diffs for index-aligned epoch pairs.
inline std::vector<InterStrategyDiff> analyze_k(KnowledgeBase& kb, const ClusteredInfoBase& qnn_base,
                                                const ClusteredInfoBase& qf_base,
                                                const ingest::TransactionTable& table, TextBackend& backend,
                                                const MeaningConfig& config = {}) {
    if (qnn_base.k != qf_base.k)
        throw std::invalid_argument("analyze_k: info bases disagree on k");
    const int k = qnn_base.k;

    const auto analyze_epoch = [&](const std::string& strategy, int depth, int epoch,
                                   const std::vector<std::vector<std::size_t>>& clusters) {
        std::vector<ClusterInfo> infos;
        for (std::size_t c = 0; c < clusters.size(); ++c) {
            const ClusterKey key{strategy, k, depth, epoch, static_cast<int>(c)};
            auto info = cluster_meaning(key, clusters[c], table, backend, config);
            infos.push_back(info);
            kb.cluster_infos.emplace(key, std::move(info));
        }
        auto record = intra_epoch_compare(infos, backend);
        const EpochKey key = record.key;
        kb.epoch_comparisons.emplace(key, std::move(record));
        return key;
    };

    std::vector<InterStrategyDiff> diffs;
    for (const auto& [depth, qnn_epochs] : qnn_base.partitions) {
        std::vector<EpochKey> qnn_keys;
        for (const auto& [epoch, clusters] : qnn_epochs)
            qnn_keys.push_back(analyze_epoch("QNN", depth, epoch, clusters));

        const auto qf_it = qf_base.partitions.find(depth);
        if (qf_it == qf_base.partitions.end()) continue;
        std::vector<EpochKey> qf_keys;
        for (const auto& [epoch, clusters] : qf_it->second)
            qf_keys.push_back(analyze_epoch("QF", depth, epoch, clusters));

        const std::size_t pairs = std::min(qnn_keys.size(), qf_keys.size());
        for (std::size_t i = 0; i < pairs; ++i)
            diffs.push_back(inter_strategy_compare(kb.epoch_comparisons.at(qnn_keys[i]),
                                                   kb.epoch_comparisons.at(qf_keys[i]), backend));
    }
    return diffs;
}

// Completeness and referential integrity: every comparison references
// existing cluster keys, every diff references existing comparisons, one
// strategy record per k.
inline void validate_knowledge_base(const KnowledgeBase& kb, const std::vector<int>& k_range) {
    for (const auto& [key, record] : kb.epoch_comparisons) {
        if (static_cast<int>(record.clusters.size()) != key.k)
            throw std::runtime_error("knowledge base: epoch comparison cluster count != k");
        for (const int c : record.clusters)
            if (!kb.cluster_infos.contains(ClusterKey{key.strategy, key.k, key.depth, key.epoch, c}))
                throw std::runtime_error("knowledge base: comparison references missing cluster info");
    }
    for (const auto& [key, info] : kb.cluster_infos) {
        if (!kb.epoch_comparisons.contains(EpochKey{key.strategy, key.k, key.depth, key.epoch}))
            throw std::runtime_error("knowledge base: cluster info has no epoch comparison");
    }
    for (const int k : k_range)
        if (!kb.strategy.per_k.contains(k))
            throw std::runtime_error("knowledge base: missing strategy record for k = " + std::to_string(k));
    for (const auto& [k, record] : kb.strategy.per_k)
        for (const auto& diff : record.diffs) {
            if (!kb.epoch_comparisons.contains(EpochKey{"QNN", diff.k, diff.depth, diff.qnn_epoch}) ||
                !kb.epoch_comparisons.contains(EpochKey{"QF", diff.k, diff.depth, diff.qf_epoch}))
                throw std::runtime_error("knowledge base: diff references missing epoch comparison");
        }
}

// ---------------------------------------------------------------------------
// Persistence: directory of JSON documents
// ---------------------------------------------------------------------------

namespace detail {

inline void write_json_file(const std::filesystem::path& path, const json& value) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << value.dump(2) << '\n';
}

inline std::string strategy_dir(const std::string& strategy) {
    std::string lower = strategy;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return lower;
}

inline json cluster_info_json(const ClusterInfo& info, const ingest::TransactionTable& table) {
    json reps = json::array();
    for (const std::size_t i : info.representatives) {
        const auto& rec = table.records[i];
        reps.push_back(json{{"row", i},
                            {"transaction_hash", rec.transaction_hash},
                            {"from_address", rec.from_address},
                            {"to_address", rec.to_address},
                            {"token_name", rec.token_name},
                            {"token_symbol", rec.token_symbol},
                            {"token_value", rec.token_value},
                            {"timestamp", rec.timestamp}});
    }
    return json{{"key", key_json(info.key)},
                {"stats", stats_json(info.stats)},
                {"representatives", std::move(reps)},
                {"summary", info.summary}};
}

inline json epoch_comparison_json(const EpochComparisonRecord& record) {
    return json{{"strategy", record.key.strategy},
                {"k", record.key.k},
                {"depth", record.key.depth},
                {"epoch", record.key.epoch},
                {"clusters", record.clusters},
                {"contrasts", record.contrasts},
                {"rationale", record.rationale},
                {"singleton_count", record.singleton_count},
                {"cluster_sizes", record.cluster_sizes},
                {"dominant_tokens", record.dominant_tokens}};
}

inline json diff_json(const InterStrategyDiff& diff) {
    json structured = json::object();
    if (diff.singleton_delta != 0) structured["singleton_delta"] = diff.singleton_delta;
    if (!diff.qnn_only_tokens.empty()) structured["qnn_only_tokens"] = diff.qnn_only_tokens;
    if (!diff.qf_only_tokens.empty()) structured["qf_only_tokens"] = diff.qf_only_tokens;
    return json{{"k", diff.k},
                {"depth", diff.depth},
                {"qnn_epoch", diff.qnn_epoch},
                {"qf_epoch", diff.qf_epoch},
                {"structured_diff", std::move(structured)},
                {"narrative", diff.narrative}};
}

}  // namespace detail

// Layout: idmap.json, cluster_info/{strategy}/{k}/{depth}/{epoch}/{c}.json,
// epoch_comparison/{strategy}/{k}/{depth}/{epoch}.json, strategy/{k}.json,
// strategy/global.json.
inline std::vector<std::filesystem::path> write_knowledge_base(const std::filesystem::path& dir,
                                                               const KnowledgeBase& kb,
                                                               const ingest::TransactionTable& table) {
    std::vector<std::filesystem::path> written;
    const auto emit = [&written](const std::filesystem::path& path, const json& value) {
        detail::write_json_file(path, value);
        written.push_back(path);
    };

    json idmap{{"forward", json::object()}};
    for (const auto& [original, compact] : kb.idmap.forward) idmap["forward"][original] = compact;
    emit(dir / "idmap.json", idmap);

    for (const auto& [key, info] : kb.cluster_infos)
        emit(dir / "cluster_info" / detail::strategy_dir(key.strategy) / std::to_string(key.k) /
                 std::to_string(key.depth) / std::to_string(key.epoch) /
                 (std::to_string(key.cluster) + ".json"),
             detail::cluster_info_json(info, table));

    for (const auto& [key, record] : kb.epoch_comparisons)
        emit(dir / "epoch_comparison" / detail::strategy_dir(key.strategy) / std::to_string(key.k) /
                 std::to_string(key.depth) / (std::to_string(key.epoch) + ".json"),
             detail::epoch_comparison_json(record));

    for (const auto& [k, record] : kb.strategy.per_k) {
        json diffs = json::array();
        for (const auto& diff : record.diffs) diffs.push_back(detail::diff_json(diff));
        emit(dir / "strategy" / (std::to_string(k) + ".json"),
             json{{"k", k},
                  {"qnn_characteristics", record.qnn_characteristics},
                  {"qf_characteristics", record.qf_characteristics},
                  {"recommendation", record.recommendation},
                  {"epoch_diffs", std::move(diffs)}});
    }
    emit(dir / "strategy" / "global.json",
         json{{"recommended_k", kb.strategy.recommended_k},
              {"global_synthesis", kb.strategy.global_synthesis}});
    return written;
}

}  // namespace qcluster::agent
