// Acceptance suite: one criterion per entry, one pass/fail line each.
// Run with no arguments for the full gate, or name criteria to filter.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qcluster/qcluster.hpp"

using namespace qcluster;

namespace {

struct Failure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool condition, const std::string& message) {
    if (!condition) throw Failure(message);
}

void require_close(double actual, double expected, double tolerance, const std::string& what) {
    if (!(std::abs(actual - expected) <= tolerance))
        throw Failure(what + ": got " + std::to_string(actual) + ", expected " +
                      std::to_string(expected) + " within " + std::to_string(tolerance));
}

Matrix random_points(Rng& rng, std::size_t n, std::size_t d, double spread = 10.0) {
    Matrix x(n, d);
    for (auto& v : x.data) v = rng.uniform(-spread, spread);
    return x;
}

std::vector<int> random_labels(Rng& rng, std::size_t n, int k) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i)
        labels[i] = i < static_cast<std::size_t>(k) ? static_cast<int>(i)
                                                    : static_cast<int>(rng.uniform_index(k));
    return labels;
}

// --- criterion: metric-oracle-equivalence -----------------------------------
// 100 seeded random instances (n <= 50, d <= 8, k <= 5); all three metrics
// match the brute-force formulas within 1e-9; wall time under 10 s.
void metric_oracle_equivalence() {
    const auto start = std::chrono::steady_clock::now();
    Rng rng(20240601);
    int checked = 0;
    while (checked < 100) {
        const std::size_t n = 5 + rng.uniform_index(46);
        const std::size_t d = 1 + rng.uniform_index(8);
        const int k = 2 + static_cast<int>(rng.uniform_index(4));
        if (n <= static_cast<std::size_t>(k)) continue;
        const auto x = random_points(rng, n, d);
        const auto labels = random_labels(rng, n, k);

        require_close(cluster::silhouette(x, labels), oracles::silhouette(x, labels), 1e-9,
                      "silhouette vs oracle (instance " + std::to_string(checked) + ")");
        require_close(cluster::davies_bouldin(x, labels), oracles::davies_bouldin(x, labels), 1e-9,
                      "davies_bouldin vs oracle (instance " + std::to_string(checked) + ")");
        const double ch = cluster::calinski_harabasz(x, labels);
        const double ch_oracle = oracles::calinski_harabasz(x, labels);
        if (!(std::abs(ch - ch_oracle) <= 1e-9 + 1e-9 * std::abs(ch_oracle)))
            throw Failure("calinski_harabasz vs oracle (instance " + std::to_string(checked) + ")");
        ++checked;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require(seconds < 10.0, "metric oracle sweep took " + std::to_string(seconds) + " s (limit 10 s)");
}

// --- criterion: hand-computed-fixtures ---------------------------------------
// The 4-point instance {(0,0),(0,1),(10,0),(10,1)} split left/right:
// silhouette = 21 - 2*sqrt(101) ~ 0.90025, DB = 0.1, CH = 200. The frozen
// constants are re-derived by the independent oracle before being asserted.
void hand_computed_fixtures() {
    Matrix x(4, 2);
    x.data = {0, 0, 0, 1, 10, 0, 10, 1};
    const std::vector<int> labels{0, 0, 1, 1};

    const double frozen_sil = 21.0 - 2.0 * std::sqrt(101.0);
    require_close(oracles::silhouette(x, labels), frozen_sil, 1e-12, "oracle re-derivation (silhouette)");
    require_close(oracles::davies_bouldin(x, labels), 0.1, 1e-12, "oracle re-derivation (DB)");
    require_close(oracles::calinski_harabasz(x, labels), 200.0, 1e-9, "oracle re-derivation (CH)");

    require_close(cluster::silhouette(x, labels), frozen_sil, 1e-6, "silhouette fixture");
    require_close(frozen_sil, 0.90025, 5e-6, "frozen silhouette rounds to the documented 0.90025");
    require_close(cluster::davies_bouldin(x, labels), 0.1, 1e-6, "davies_bouldin fixture");
    require_close(cluster::calinski_harabasz(x, labels), 200.0, 1e-6, "calinski_harabasz fixture");
}

// --- criterion: kmeans-desk-optimality ---------------------------------------
// On seeded instances with n <= 10, kmeans with >= 50 restarts attains the
// exhaustive-enumeration minimum SSE.
void kmeans_desk_optimality() {
    Rng rng(77001);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t n = 4 + rng.uniform_index(7);  // 4..10
        const std::size_t d = 1 + rng.uniform_index(3);
        const int max_k = static_cast<int>(std::min<std::size_t>(5, n - 1));
        const int k = 2 + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(max_k - 1)));
        const auto x = random_points(rng, n, d);

        const auto result = cluster::kmeans(x, k, 60, 200, static_cast<std::uint64_t>(trial));
        const double best = oracles::min_sse_exhaustive(x, k);
        if (!(result.inertia <= best + 1e-9 && result.inertia >= best - 1e-9))
            throw Failure("instance " + std::to_string(trial) + ": kmeans inertia " +
                          std::to_string(result.inertia) + " vs exhaustive minimum " +
                          std::to_string(best));
    }
}

// --- criterion: statevector-validity ------------------------------------------
// 1,000 random circuits (n <= 6, depth <= 5) keep unit norm within 1e-10;
// 2-qubit fixtures match the dense matrix-product oracle within 1e-12.
void statevector_validity() {
    Rng rng(31415);
    for (int trial = 0; trial < 1000; ++trial) {
        quantum::CircuitSpec spec;
        spec.n_qubits = 1 + static_cast<int>(rng.uniform_index(6));
        spec.depth = 1 + static_cast<int>(rng.uniform_index(5));
        for (std::size_t i = 0; i < spec.expected_params(); ++i)
            spec.params.push_back(rng.uniform(0.0, 6.283185307179586));
        const auto state = quantum::simulate_statevector(spec);
        require(std::abs(state.norm() - 1.0) < 1e-10,
                "norm deviated at trial " + std::to_string(trial));
    }

    Rng fixture_rng(999);
    for (int trial = 0; trial < 50; ++trial) {
        quantum::CircuitSpec spec;
        spec.n_qubits = 2;
        spec.depth = 1 + static_cast<int>(fixture_rng.uniform_index(4));
        for (std::size_t i = 0; i < spec.expected_params(); ++i)
            spec.params.push_back(fixture_rng.uniform(0.0, 6.283185307179586));
        const auto state = quantum::simulate_statevector(spec);
        const auto expected = oracles::simulate_dense(2, spec.depth, spec.params);
        for (std::size_t i = 0; i < expected.size(); ++i)
            require(std::abs(state.amplitudes[i] - expected[i]) < 1e-12,
                    "2-qubit amplitude mismatch at trial " + std::to_string(trial));
    }
}

// --- criterion: gradient-correctness -------------------------------------------
// Parameter-shift gradient of the full composite-loss pipeline on 1- and
// 2-qubit models vs central finite differences (h = 1e-4), relative error
// below 1e-3, 20 random parameter draws.
void gradient_correctness() {
    Rng rng(2718);
    int draws = 0;
    for (const auto [input_dim, output_dim, depth] :
         {std::tuple<std::size_t, std::size_t, int>{1, 1, 2},   // 2 weights -> 1 qubit
          std::tuple<std::size_t, std::size_t, int>{1, 2, 2}})  // 4 weights -> 2 qubits
        for (int trial = 0; trial < 10; ++trial, ++draws) {
            auto model = quantum::make_qnn_model(input_dim, output_dim, depth);
            require(model.circuit.n_qubits <= 2, "model exceeded two qubits");
            model.circuit.params =
                quantum::sample_circuit_params(rng, model.circuit.expected_params());

            Matrix x(5, input_dim);
            for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
            swav::PrototypeBank bank = swav::make_prototype_bank(3, output_dim, 0.2, 0.05, rng);
            Matrix noise1(5, output_dim), noise2(5, output_dim);
            for (auto& v : noise1.data) v = rng.gaussian(0.0, 0.05);
            for (auto& v : noise2.data) v = rng.gaussian(0.0, 0.05);

            const auto grads = swav::pipeline_loss_and_gradient(x, model, bank, noise1, noise2);
            const auto loss_at = [&](const std::vector<double>& theta) {
                auto m = model;
                m.circuit.params = theta;
                return swav::pipeline_loss(x, m, bank, noise1, noise2);
            };
            const auto fd =
                oracles::finite_difference_gradient(loss_at, model.circuit.params, 1e-4);
            for (std::size_t i = 0; i < fd.size(); ++i) {
                const double scale =
                    std::max({std::abs(fd[i]), std::abs(grads.theta_grad[i]), 1e-10});
                if (!(std::abs(grads.theta_grad[i] - fd[i]) / scale < 1e-3))
                    throw Failure("draw " + std::to_string(draws) + " component " + std::to_string(i) +
                                  ": shift " + std::to_string(grads.theta_grad[i]) + " vs fd " +
                                  std::to_string(fd[i]));
            }
        }
    require(draws == 20, "expected 20 parameter draws");
}

// --- criterion: training-progress ------------------------------------------------
// On the 3-blob profile (n = 90), the final-epoch mean loss beats the
// first-epoch mean loss in at least 9 of 10 seeds, under 60 s.
void training_progress() {
    const auto start = std::chrono::steady_clock::now();
    const auto table = ingest::synth_transactions(500, 90, ingest::parse_profile("3-blobs"));
    const auto features = ingest::assemble_features(table);

    int improved = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        swav::TrainConfig config;
        config.num_epochs = 20;
        config.batch_size = 32;
        config.seed = seed;
        config.output_dim = 4;
        Rng proto_rng(derive_seed(seed, "acceptance-bank"));
        auto bank = swav::make_prototype_bank(8, 4, config.temperature, config.smoothing, proto_rng);
        const auto trained = swav::train_qnn_swav(features.values, config, std::move(bank), 2);
        require(trained.loss_history.size() == 20, "unexpected loss history length");
        if (trained.loss_history.back() < trained.loss_history.front()) ++improved;
    }
    require(improved >= 9, "loss improved in only " + std::to_string(improved) + "/10 seeds");

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    require(seconds < 60.0, "training-progress took " + std::to_string(seconds) + " s (limit 60 s)");
}

// --- criterion: directional-qnn-vs-qf ----------------------------------------------
// Trained-QNN best-epoch silhouette >= mean random-QF silhouette (20 runs) on
// the 3-blob profile at k = 3 in >= 8 of 10 seeds; and the report renderer
// reproduces the reference table values bit-exactly. Checked under both
// feature configurations: the default (raw block heights dominate distances,
// so the comparison near-ties) and drop_block_number (quantum columns carry
// real weight, so the ordering is informative).
int directional_wins(const FeatureMatrix& features) {
    int wins = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const auto qf_runs = quantum::random_quantum_features(features.values, 1, 4, 20,
                                                              derive_seed(seed, "dir-qf"));
        double qf_sum = 0.0;
        for (const auto& run : qf_runs) {
            const auto hybrid = cluster::detail::concat_columns(features.values, run.matrix);
            const auto assignment = cluster::kmeans(hybrid, 3, 10, 100, derive_seed(seed, "dir-qf-km"));
            qf_sum += cluster::silhouette(hybrid, assignment.labels);
        }
        const double qf_mean = qf_sum / 20.0;

        swav::TrainConfig config;
        config.num_epochs = 10;
        config.batch_size = 32;
        config.seed = seed;
        config.output_dim = 4;
        Rng proto_rng(derive_seed(seed, "dir-bank"));
        auto bank = swav::make_prototype_bank(8, 4, config.temperature, config.smoothing, proto_rng);
        const auto trained = swav::train_qnn_swav(features.values, config, std::move(bank), 2);

        double qnn_best = -1.0;
        for (const auto& snapshot : trained.per_epoch_features) {
            const auto hybrid = cluster::detail::concat_columns(features.values, snapshot.matrix);
            const auto assignment =
                cluster::kmeans(hybrid, 3, 10, 100, derive_seed(seed, "dir-qnn-km"));
            qnn_best = std::max(qnn_best, cluster::silhouette(hybrid, assignment.labels));
        }
        if (qnn_best >= qf_mean) ++wins;
    }
    return wins;
}

void directional_qnn_vs_qf() {
    const auto table = ingest::synth_transactions(640, 90, ingest::parse_profile("3-blobs"));

    const int default_wins = directional_wins(ingest::assemble_features(table));
    require(default_wins >= 8, "default features: QNN beat the QF mean in only " +
                                   std::to_string(default_wins) + "/10 seeds");

    ingest::PreprocessConfig no_block;
    no_block.drop_block_number = true;
    const int informative_wins = directional_wins(ingest::assemble_features(table, no_block));
    require(informative_wins >= 8, "drop_block_number features: QNN beat the QF mean in only " +
                                       std::to_string(informative_wins) + "/10 seeds");

    // Reference-table rendering (values not reproducible at desk scale; the
    // formatter is held to them bit-exactly instead).
    require(report::format_silhouette(0.999777) == "0.999777", "silhouette formatting");
    require(report::format_davies_bouldin(1.111477e-8) == "1.111477e-8", "DB formatting");
    require(report::format_calinski_harabasz(1.5833657123341e13) == "15,833,657,123,341",
            "CH formatting");
    cluster::MetricsRow row{2, cluster::Method::Qnn, 2, 1, 0.999777, 1.111477e-8, 1.5833657123341e13};
    const auto cells = report::metrics_row_cells(row);
    const std::vector<std::string> expected{"2",        "QNN",         "2", "1", "0.999777",
                                            "1.111477e-8", "15,833,657,123,341"};
    require(cells == expected, "reference row cells");
}

// Shared tiny pipeline config for the stage-2 criteria.
pipeline::PipelineConfig acceptance_pipeline_config(const std::filesystem::path& dir) {
    pipeline::PipelineConfig config;
    config.synthetic_profile = "3-blobs";
    config.synthetic_rows = 36;
    config.k_range = {2, 3};
    config.depth_range = {1, 2};
    config.prototype_range = {4};
    config.num_epochs = 3;
    config.qf_runs = 4;
    config.output_dim = 2;
    config.batch_size = 12;
    config.kmeans_restarts = 5;
    config.seed = 2024;
    config.out_dir = dir.string();
    return config;
}

// --- criterion: kb-completeness --------------------------------------------------
// Full mock run over k in {2,3}, depths {1,2}: exactly one ClusterInfo per
// cluster key, one EpochComparisonRecord per analyzed epoch, one
// StrategyKnowledge record per k, and referential integrity across the tree.
void kb_completeness() {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "qcluster_acceptance_kb";
    fs::remove_all(dir);
    pipeline::run_pipeline(acceptance_pipeline_config(dir));

    const auto kb = dir / "kb";
    std::map<std::string, int> expected_cluster_counts;  // epoch_comparison path -> k

    // One analyzed epoch per (strategy, k, depth) in default mode.
    int comparison_count = 0;
    for (const std::string strategy : {"qnn", "qf"})
        for (const int k : {2, 3}) {
            for (const int depth : {1, 2}) {
                const auto depth_dir = kb / "epoch_comparison" / strategy / std::to_string(k) /
                                       std::to_string(depth);
                require(fs::exists(depth_dir), "missing comparisons under " + depth_dir.string());
                int epochs_here = 0;
                for (const auto& entry : fs::directory_iterator(depth_dir)) {
                    ++epochs_here;
                    ++comparison_count;
                    expected_cluster_counts[entry.path().string()] = k;
                }
                require(epochs_here == 1,
                        "expected exactly one analyzed epoch at " + depth_dir.string());
            }
        }
    require(comparison_count == 2 * 2 * 2, "expected 8 epoch comparison records");

    // Each comparison references exactly k existing cluster-info documents.
    int cluster_files = 0;
    for (const auto& [path, k] : expected_cluster_counts) {
        std::ifstream in(path);
        nlohmann::json doc;
        in >> doc;
        require(static_cast<int>(doc.at("clusters").size()) == k, "cluster list size != k in " + path);
        const fs::path comparison_path(path);
        const auto epoch_stem = comparison_path.stem().string();
        for (const auto& c : doc.at("clusters")) {
            const auto info_path = kb / "cluster_info" /
                                   doc.at("strategy").get<std::string>() /
                                   std::to_string(doc.at("k").get<int>()) /
                                   std::to_string(doc.at("depth").get<int>()) / epoch_stem /
                                   (std::to_string(c.get<int>()) + ".json");
            // Stored strategy names are upper-case; directories are lower-case.
            const auto lowered = kb / "cluster_info" /
                                 (doc.at("strategy").get<std::string>() == "QNN" ? "qnn" : "qf") /
                                 std::to_string(doc.at("k").get<int>()) /
                                 std::to_string(doc.at("depth").get<int>()) / epoch_stem /
                                 (std::to_string(c.get<int>()) + ".json");
            require(fs::exists(lowered), "missing cluster info " + lowered.string());
            ++cluster_files;
        }
    }

    int actual_cluster_files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(kb / "cluster_info"))
        if (entry.is_regular_file()) ++actual_cluster_files;
    require(actual_cluster_files == cluster_files,
            "cluster_info holds extra documents: " + std::to_string(actual_cluster_files) + " vs " +
                std::to_string(cluster_files));

    // One strategy record per k plus the global synthesis.
    for (const int k : {2, 3})
        require(fs::exists(kb / "strategy" / (std::to_string(k) + ".json")),
                "missing strategy record for k=" + std::to_string(k));
    require(fs::exists(kb / "strategy" / "global.json"), "missing global synthesis");

    // Diffs reference analyzed epochs that exist.
    for (const int k : {2, 3}) {
        std::ifstream in(kb / "strategy" / (std::to_string(k) + ".json"));
        nlohmann::json doc;
        in >> doc;
        require(doc.at("epoch_diffs").size() == 2, "expected one diff per depth");
        for (const auto& diff : doc.at("epoch_diffs")) {
            const auto qnn_path = kb / "epoch_comparison" / "qnn" / std::to_string(k) /
                                  std::to_string(diff.at("depth").get<int>()) /
                                  (std::to_string(diff.at("qnn_epoch").get<int>()) + ".json");
            const auto qf_path = kb / "epoch_comparison" / "qf" / std::to_string(k) /
                                 std::to_string(diff.at("depth").get<int>()) /
                                 (std::to_string(diff.at("qf_epoch").get<int>()) + ".json");
            require(fs::exists(qnn_path), "diff references missing " + qnn_path.string());
            require(fs::exists(qf_path), "diff references missing " + qf_path.string());
        }
    }
    fs::remove_all(dir);
}

// --- criterion: determinism ---------------------------------------------------------
// Two mock-backend runs with identical config and seeds produce hash-identical
// output trees. timings.json holds wall-clock diagnostics and is excluded.
void determinism() {
    namespace fs = std::filesystem;
    const auto hash_tree = [](const fs::path& root) {
        std::vector<std::string> files;
        for (const auto& entry : fs::recursive_directory_iterator(root))
            if (entry.is_regular_file() && entry.path().filename() != "timings.json")
                files.push_back(fs::relative(entry.path(), root).generic_string());
        std::sort(files.begin(), files.end());
        std::uint64_t h = 0xcbf29ce484222325ULL;
        const auto mix = [&h](const char* data, std::size_t size) {
            for (std::size_t i = 0; i < size; ++i) {
                h ^= static_cast<unsigned char>(data[i]);
                h *= 0x100000001b3ULL;
            }
        };
        for (const auto& rel : files) {
            mix(rel.data(), rel.size());
            std::ifstream in(root / rel, std::ios::binary);
            std::ostringstream content;
            content << in.rdbuf();
            const auto bytes = content.str();
            mix(bytes.data(), bytes.size());
        }
        return h;
    };

    const auto dir_a = fs::temp_directory_path() / "qcluster_acceptance_det_a";
    const auto dir_b = fs::temp_directory_path() / "qcluster_acceptance_det_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    pipeline::run_pipeline(acceptance_pipeline_config(dir_a));
    pipeline::run_pipeline(acceptance_pipeline_config(dir_b));

    // manifest.json echoes out_dir, which legitimately differs; rewrite both
    // configs to a common path before hashing so everything else must match.
    const auto normalize_manifest = [](const fs::path& dir) {
        std::ifstream in(dir / "manifest.json");
        nlohmann::json doc;
        in >> doc;
        doc["config"]["out_dir"] = "OUT";
        std::ofstream out(dir / "manifest.json", std::ios::binary);
        out << doc.dump(2) << '\n';
    };
    normalize_manifest(dir_a);
    normalize_manifest(dir_b);

    require(hash_tree(dir_a) == hash_tree(dir_b), "output trees differ between identical runs");
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

// --- criterion: reencode-roundtrip -----------------------------------------------------
// decode(encode(table)) == table on 1,000 randomized tables; the compact
// identifier context never exceeds the raw context.
void reencode_roundtrip() {
    const auto identifier_size = [](const ingest::TransactionTable& table) {
        std::size_t total = 0;
        for (const auto& rec : table.records)
            total += rec.transaction_hash.size() + rec.from_address.size() + rec.to_address.size();
        return total;
    };

    Rng rng(97);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng.uniform_index(40);
        ingest::SynthProfile profile;
        if (trial % 3 == 1) profile = ingest::parse_profile("3-blobs");
        if (trial % 3 == 2) profile.tokens = 1;
        const auto table =
            ingest::synth_transactions(static_cast<std::uint64_t>(trial) * 7919 + 13, n, profile);
        const auto [compact, idmap] = agent::reencode_identifiers(table);
        require(agent::decode_identifiers(compact, idmap) == table,
                "round trip failed at trial " + std::to_string(trial));
        require(identifier_size(compact) <= identifier_size(table),
                "compact context grew at trial " + std::to_string(trial));
    }
}

struct Criterion {
    std::string name;
    std::function<void()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> criteria{
        {"metric-oracle-equivalence", metric_oracle_equivalence},
        {"hand-computed-fixtures", hand_computed_fixtures},
        {"kmeans-desk-optimality", kmeans_desk_optimality},
        {"statevector-validity", statevector_validity},
        {"gradient-correctness", gradient_correctness},
        {"training-progress", training_progress},
        {"directional-qnn-vs-qf", directional_qnn_vs_qf},
        {"kb-completeness", kb_completeness},
        {"determinism", determinism},
        {"reencode-roundtrip", reencode_roundtrip},
    };

    std::set<std::string> filter;
    for (int i = 1; i < argc; ++i) filter.insert(argv[i]);

    int failures = 0;
    int ran = 0;
    for (const auto& criterion : criteria) {
        if (!filter.empty() && !filter.contains(criterion.name)) continue;
        ++ran;
        const auto start = std::chrono::steady_clock::now();
        try {
            criterion.run();
            const double ms = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - start)
                                  .count();
            std::printf("[PASS] %-26s (%.0f ms)\n", criterion.name.c_str(), ms);
        } catch (const std::exception& e) {
            ++failures;
            std::printf("[FAIL] %-26s %s\n", criterion.name.c_str(), e.what());
        }
    }
    if (ran == 0) {
        std::fprintf(stderr, "no criteria matched the given filter\n");
        return 2;
    }
    std::printf("%d/%d criteria passed\n", ran - failures, ran);
    return failures == 0 ? 0 : 1;
}
