#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qcluster/agent.hpp"
#include "qcluster/cluster.hpp"
#include "qcluster/ingest.hpp"
#include "qcluster/matrix.hpp"
#include "qcluster/quantum.hpp"
#include "qcluster/remote_backend.hpp"
#include "qcluster/report.hpp"
#include "qcluster/swav.hpp"
#include "qcluster/version.hpp"

namespace qcluster::pipeline {

using nlohmann::json;

// Distinct exit codes per failing stage, for scripted use.
enum class Stage : int {
    Config = 2,
    Ingest = 3,
    Quantum = 4,
    Cluster = 5,
    Agent = 6,
    Report = 7,
};

inline const char* stage_name(Stage stage) {
    switch (stage) {
        case Stage::Config: return "config";
        case Stage::Ingest: return "ingest";
        case Stage::Quantum: return "quantum";
        case Stage::Cluster: return "cluster";
        case Stage::Agent: return "agent";
        case Stage::Report: return "report";
    }
    return "?";
}

class StageError : public std::runtime_error {
  public:
    StageError(Stage stage, const std::string& message)
        : std::runtime_error(std::string(stage_name(stage)) + " stage failed: " + message),
          stage_(stage) {}

    Stage stage() const { return stage_; }
    int exit_code() const { return static_cast<int>(stage_); }

  private:
    Stage stage_;
};

struct PipelineConfig {
    // input: either a delimited-text file or the synthetic generator
    std::string input_path;  // empty -> synthetic
    std::string synthetic_profile = "3-blobs";
    std::size_t synthetic_rows = 90;
    char delimiter = ',';
    ingest::PreprocessConfig preprocess;

    // sweep
    std::vector<int> k_range = {2, 3, 4, 5, 6};
    std::vector<int> depth_range = {1, 2};
    std::vector<int> prototype_range = {8};
    int num_epochs = 10;
    int qf_runs = 20;

    // model + training
    std::size_t output_dim = 4;
    double gamma = 1.0;
    double temperature = 0.1;
    double smoothing = 0.01;
    double noise_sigma = 0.05;
    double learning_rate = 1e-2;
    double clip_norm = 1.0;
    std::size_t batch_size = 32;
    bool finite_diff_gradient = false;

    // clustering
    int kmeans_restarts = 10;
    int kmeans_max_iter = 100;

    unsigned workers = 0;  // sweep/training worker pool size; 0 = hardware concurrency
    std::uint64_t seed = 42;

    // stage 2
    std::string backend = "mock";  // mock | remote
    std::string endpoint;
    std::string model_name = "default";
    std::string credential_env;
    bool all_epochs = false;
    agent::MeaningConfig meaning;

    std::string out_dir = "out";

    void validate() const {
        if (input_path.empty() && synthetic_profile.empty())
            throw std::invalid_argument("either an input path or a synthetic profile is required");
        if (k_range.empty()) throw std::invalid_argument("k_range must be non-empty");
        if (depth_range.empty()) throw std::invalid_argument("depth_range must be non-empty");
        if (prototype_range.empty()) throw std::invalid_argument("prototype_range must be non-empty");
        if (num_epochs < 1) throw std::invalid_argument("num_epochs must be >= 1");
        if (qf_runs < 1) throw std::invalid_argument("qf_runs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (backend != "mock" && backend != "remote")
            throw std::invalid_argument("backend must be 'mock' or 'remote'");
        if (backend == "remote" && endpoint.empty())
            throw std::invalid_argument("remote backend requires --endpoint");
        if (out_dir.empty()) throw std::invalid_argument("output directory must be set");
    }
};

inline void to_json(json& j, const PipelineConfig& c) {
    j = json{{"input_path", c.input_path},
             {"synthetic_profile", c.synthetic_profile},
             {"synthetic_rows", c.synthetic_rows},
             {"delimiter", std::string(1, c.delimiter)},
             {"cyclical_period", c.preprocess.cyclical_period},
             {"drop_block_number", c.preprocess.drop_block_number},
             {"k_range", c.k_range},
             {"depth_range", c.depth_range},
             {"prototype_range", c.prototype_range},
             {"num_epochs", c.num_epochs},
             {"qf_runs", c.qf_runs},
             {"output_dim", c.output_dim},
             {"gamma", c.gamma},
             {"temperature", c.temperature},
             {"smoothing", c.smoothing},
             {"noise_sigma", c.noise_sigma},
             {"learning_rate", c.learning_rate},
             {"clip_norm", c.clip_norm},
             {"batch_size", c.batch_size},
             {"finite_diff_gradient", c.finite_diff_gradient},
             {"kmeans_restarts", c.kmeans_restarts},
             {"kmeans_max_iter", c.kmeans_max_iter},
             {"workers", c.workers},
             {"seed", c.seed},
             {"backend", c.backend},
             {"endpoint", c.endpoint},
             {"model_name", c.model_name},
             {"credential_env", c.credential_env},
             {"all_epochs", c.all_epochs},
             {"representative_cap", c.meaning.representative_cap},
             {"dominant_sender_threshold", c.meaning.dominant_sender_threshold},
             {"out_dir", c.out_dir}};
}

inline void from_json(const json& j, PipelineConfig& c) {
    j.at("input_path").get_to(c.input_path);
    j.at("synthetic_profile").get_to(c.synthetic_profile);
    j.at("synthetic_rows").get_to(c.synthetic_rows);
    c.delimiter = j.at("delimiter").get<std::string>().at(0);
    j.at("cyclical_period").get_to(c.preprocess.cyclical_period);
    j.at("drop_block_number").get_to(c.preprocess.drop_block_number);
    j.at("k_range").get_to(c.k_range);
    j.at("depth_range").get_to(c.depth_range);
    j.at("prototype_range").get_to(c.prototype_range);
    j.at("num_epochs").get_to(c.num_epochs);
    j.at("qf_runs").get_to(c.qf_runs);
    j.at("output_dim").get_to(c.output_dim);
    j.at("gamma").get_to(c.gamma);
    j.at("temperature").get_to(c.temperature);
    j.at("smoothing").get_to(c.smoothing);
    j.at("noise_sigma").get_to(c.noise_sigma);
    j.at("learning_rate").get_to(c.learning_rate);
    j.at("clip_norm").get_to(c.clip_norm);
    j.at("batch_size").get_to(c.batch_size);
    j.at("finite_diff_gradient").get_to(c.finite_diff_gradient);
    j.at("kmeans_restarts").get_to(c.kmeans_restarts);
    j.at("kmeans_max_iter").get_to(c.kmeans_max_iter);
    j.at("workers").get_to(c.workers);
    j.at("seed").get_to(c.seed);
    j.at("backend").get_to(c.backend);
    j.at("endpoint").get_to(c.endpoint);
    j.at("model_name").get_to(c.model_name);
    j.at("credential_env").get_to(c.credential_env);
    j.at("all_epochs").get_to(c.all_epochs);
    j.at("representative_cap").get_to(c.meaning.representative_cap);
    j.at("dominant_sender_threshold").get_to(c.meaning.dominant_sender_threshold);
    j.at("out_dir").get_to(c.out_dir);
}

struct StageTiming {
    std::string stage;
    double milliseconds = 0.0;
};

// Deterministic re-run record (manifest.json) plus non-deterministic
// diagnostics (timings, written separately so output trees hash equal).
struct RunManifest {
    PipelineConfig config;
    std::string version;
    std::vector<std::string> artifacts;  // relative to out_dir, sorted
    std::vector<StageTiming> timings;
};

// Column-wise concatenation, classical columns first, names prefixed by
// origin so collisions cannot arise.
inline FeatureMatrix assemble_hybrid(const FeatureMatrix& classical, const quantum::QuantumFeatures& q) {
    if (classical.rows() != q.matrix.rows)
        throw std::invalid_argument("assemble_hybrid: row count mismatch (" +
                                    std::to_string(classical.rows()) + " vs " +
                                    std::to_string(q.matrix.rows) + ")");
    FeatureMatrix hybrid;
    hybrid.values = cluster::detail::concat_columns(classical.values, q.matrix);
    hybrid.column_names.reserve(classical.cols() + q.matrix.cols);
    for (const auto& name : classical.column_names) hybrid.column_names.push_back("classical." + name);
    for (std::size_t i = 0; i < q.matrix.cols; ++i)
        hybrid.column_names.push_back("quantum.q" + std::to_string(i));
    return hybrid;
}

namespace detail {

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

inline void write_snapshot(const std::filesystem::path& path, const quantum::QuantumFeatures& q) {
    FeatureMatrix container;
    container.values = q.matrix;
    for (std::size_t i = 0; i < q.matrix.cols; ++i)
        container.column_names.push_back("q" + std::to_string(i));
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    write_binary(container, out);

    const json sidecar{{"strategy", q.provenance.strategy},
                       {"depth", q.provenance.depth},
                       {"epoch", q.provenance.epoch},
                       {"seed", q.provenance.seed}};
    write_text_file(path.string() + ".provenance.json", sidecar.dump(2) + "\n");
}

}  // namespace detail

// Runs the whole two-stage flow: ingest, both feature-extraction branches,
// the clustering sweep, the agent analysis, and report emission.
inline RunManifest run_pipeline(const PipelineConfig& config) {
    try {
        config.validate();
    } catch (const std::exception& e) {
        throw StageError(Stage::Config, e.what());
    }

    const std::filesystem::path out_dir(config.out_dir);
    RunManifest manifest;
    manifest.config = config;
    manifest.version = kVersion;

    const auto record_artifact = [&](const std::filesystem::path& path) {
        manifest.artifacts.push_back(std::filesystem::relative(path, out_dir).generic_string());
    };
    const auto timed = [&manifest](const std::string& stage, auto&& body) {
        const auto start = std::chrono::steady_clock::now();
        body();
        const auto elapsed = std::chrono::duration<double, std::milli>(
            std::chrono::steady_clock::now() - start);
        manifest.timings.push_back(StageTiming{stage, elapsed.count()});
    };

    // --- ingest ------------------------------------------------------------
    ingest::TransactionTable table;
    FeatureMatrix classical;
    timed("ingest", [&] {
        try {
            if (!config.input_path.empty()) {
                std::ifstream in(config.input_path);
                if (!in) throw std::runtime_error("cannot open input file " + config.input_path);
                table = ingest::parse_transactions(in, ingest::ParseFormat{config.delimiter});
            } else {
                const auto profile = ingest::parse_profile(config.synthetic_profile);
                table = ingest::synth_transactions(config.seed, config.synthetic_rows, profile);
            }
            classical = ingest::assemble_features(table, config.preprocess);
            std::filesystem::create_directories(out_dir / "features");
            std::ofstream csv(out_dir / "features" / "classical.csv");
            write_delimited(classical, csv);
            record_artifact(out_dir / "features" / "classical.csv");
            std::ofstream bin(out_dir / "features" / "classical.qcm", std::ios::binary);
            write_binary(classical, bin);
            record_artifact(out_dir / "features" / "classical.qcm");
        } catch (const std::exception& e) {
            throw StageError(Stage::Ingest, e.what());
        }
    });

    // --- quantum feature extraction -----------------------------------------
    cluster::SweepInputs sweep_inputs;
    std::vector<swav::TrainedModel> trained_cells;
    timed("quantum", [&] {
        try {
            for (const int depth : config.depth_range) {
                auto runs = quantum::random_quantum_features(
                    classical.values, depth, config.output_dim, config.qf_runs,
                    derive_seed(config.seed, "qf-depth", static_cast<std::uint64_t>(depth)),
                    config.gamma);
                for (auto& run : runs) sweep_inputs.qf_runs.push_back(std::move(run));
            }

            swav::TrainConfig train_config;
            train_config.num_epochs = config.num_epochs;
            train_config.batch_size = std::min(config.batch_size, classical.rows());
            train_config.learning_rate = config.learning_rate;
            train_config.clip_norm = config.clip_norm;
            train_config.noise_sigma = config.noise_sigma;
            train_config.seed = config.seed;
            train_config.depth_range = config.depth_range;
            train_config.prototype_range = config.prototype_range;
            train_config.output_dim = config.output_dim;
            train_config.gamma = config.gamma;
            train_config.temperature = config.temperature;
            train_config.smoothing = config.smoothing;
            train_config.finite_diff_gradient = config.finite_diff_gradient;
            trained_cells = swav::train_sweep(classical.values, train_config, config.workers);

            for (const auto& cell : trained_cells) {
                const auto cell_dir = out_dir / "models" /
                                      ("qnn_p" + std::to_string(cell.num_prototypes) + "_d" +
                                       std::to_string(cell.depth));
                json model_doc{{"theta", cell.model.circuit.params},
                               {"n_qubits", cell.model.circuit.n_qubits},
                               {"depth", cell.depth},
                               {"num_prototypes", cell.num_prototypes},
                               {"gamma", cell.model.gamma},
                               {"input_dim", cell.model.input_dim},
                               {"output_dim", cell.model.output_dim},
                               {"prototypes", cell.bank.prototypes.data},
                               {"temperature", cell.bank.temperature},
                               {"smoothing", cell.bank.smoothing},
                               {"loss_history", cell.loss_history},
                               {"seed", config.seed}};
                detail::write_text_file(cell_dir / "model.json", model_doc.dump(2) + "\n");
                record_artifact(cell_dir / "model.json");
                for (const auto& snapshot : cell.per_epoch_features) {
                    const auto path =
                        cell_dir / ("epoch_" + std::to_string(snapshot.provenance.epoch) + ".qcm");
                    detail::write_snapshot(path, snapshot);
                    record_artifact(path);
                    record_artifact(path.string() + ".provenance.json");
                }
                for (const auto& snapshot : cell.per_epoch_features)
                    sweep_inputs.qnn_snapshots.push_back(snapshot);
            }
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(Stage::Quantum, e.what());
        }
    });

    // --- clustering sweep ----------------------------------------------------
    cluster::SweepResult sweep;
    timed("cluster", [&] {
        try {
            cluster::SweepOptions options;
            options.k_range = config.k_range;
            options.restarts = config.kmeans_restarts;
            options.max_iter = config.kmeans_max_iter;
            options.seed = config.seed;
            options.workers = config.workers;
            sweep = cluster::evaluate_sweep(classical.values, sweep_inputs, options);
        } catch (const std::exception& e) {
            throw StageError(Stage::Cluster, e.what());
        }
    });

    // --- stage 2: agent analysis ----------------------------------------------
    agent::KnowledgeBase kb;
    timed("agent", [&] {
        try {
            std::unique_ptr<agent::TextBackend> backend;
            if (config.backend == "mock") {
                backend = std::make_unique<agent::MockBackend>();
            } else {
                agent::RemoteConfig remote;
                remote.endpoint = config.endpoint;
                remote.model = config.model_name;
                remote.credential_env = config.credential_env;
                backend = std::make_unique<agent::RemoteBackend>(remote);
            }

            auto [compact, idmap] = agent::reencode_identifiers(table);
            kb.idmap = std::move(idmap);

            std::vector<agent::InterStrategyDiff> all_diffs;
            for (const int k : config.k_range) {
                // Analyzed epochs per (strategy, depth): every epoch with
                // --all-epochs, otherwise the silhouette argmax.
                const auto select = [&](const std::string& strategy) {
                    // With --all-epochs every (depth, epoch) is analyzed;
                    // otherwise only the silhouette argmax per depth.
                    // Duplicate (depth, epoch) cells (several prototype
                    // counts) resolve to the higher silhouette.
                    std::map<std::pair<int, int>, std::size_t> chosen;  // (depth, epoch) -> cell index
                    std::map<int, std::size_t> best_per_depth;
                    for (std::size_t idx = 0; idx < sweep.cells.size(); ++idx) {
                        const auto& cell = sweep.cells[idx];
                        if (cell.k != k || cell.strategy != strategy) continue;
                        if (config.all_epochs) {
                            const auto key = std::make_pair(cell.depth, cell.epoch);
                            const auto it = chosen.find(key);
                            if (it == chosen.end() || cell.silhouette > sweep.cells[it->second].silhouette)
                                chosen[key] = idx;
                        } else {
                            const auto it = best_per_depth.find(cell.depth);
                            if (it == best_per_depth.end() ||
                                cell.silhouette > sweep.cells[it->second].silhouette)
                                best_per_depth[cell.depth] = idx;
                        }
                    }
                    if (!config.all_epochs)
                        for (const auto& [depth, idx] : best_per_depth)
                            chosen[{depth, sweep.cells[idx].epoch}] = idx;
                    std::map<std::pair<int, int>, cluster::ClusterAssignment> assignments;
                    for (const auto& [key, idx] : chosen) assignments[key] = sweep.cells[idx].assignment;
                    return assignments;
                };

                const auto qnn_base = agent::build_info_base("QNN", k, select("QNN"), compact);
                const auto qf_base = agent::build_info_base("QF", k, select("QF"), compact);
                auto diffs = agent::analyze_k(kb, qnn_base, qf_base, compact, *backend, config.meaning);
                for (auto& diff : diffs) all_diffs.push_back(std::move(diff));
            }

            std::map<int, agent::KMetricSummary> summaries;
            std::map<int, std::pair<double, int>> sil_acc;
            for (const auto& row : sweep.rows) {
                sil_acc[row.k].first += row.silhouette;
                sil_acc[row.k].second += 1;
            }
            for (const auto& [k, acc] : sil_acc)
                summaries[k] = agent::KMetricSummary{acc.first / static_cast<double>(acc.second)};

            kb.strategy =
                agent::global_strategy_analysis(kb, config.k_range, summaries, *backend, all_diffs);
            agent::validate_knowledge_base(kb, config.k_range);

            for (const auto& path : agent::write_knowledge_base(out_dir / "kb", kb, compact))
                record_artifact(path);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(Stage::Agent, e.what());
        }
    });

    // --- reports ---------------------------------------------------------------
    timed("report", [&] {
        try {
            detail::write_text_file(out_dir / "metrics.txt", report::render_metrics_text(sweep.rows));
            record_artifact(out_dir / "metrics.txt");
            detail::write_text_file(out_dir / "metrics.csv", report::render_metrics_csv(sweep.rows));
            record_artifact(out_dir / "metrics.csv");
            detail::write_text_file(out_dir / "metrics.json",
                                    report::metrics_json(sweep.rows).dump(2) + "\n");
            record_artifact(out_dir / "metrics.json");

            std::vector<report::StrategyRow> strategy_rows;
            for (const auto& [k, record] : kb.strategy.per_k)
                strategy_rows.push_back(report::StrategyRow{k, record.qnn_characteristics,
                                                            record.qf_characteristics,
                                                            record.recommendation});
            detail::write_text_file(out_dir / "kb" / "strategy_summary.txt",
                                    report::render_strategy_text(strategy_rows, kb.strategy.global_synthesis));
            record_artifact(out_dir / "kb" / "strategy_summary.txt");
            detail::write_text_file(out_dir / "kb" / "strategy_summary.csv",
                                    report::render_strategy_csv(strategy_rows));
            record_artifact(out_dir / "kb" / "strategy_summary.csv");

            std::sort(manifest.artifacts.begin(), manifest.artifacts.end());
            manifest.artifacts.push_back("manifest.json");
            json manifest_doc{{"tool", "qcluster"},
                              {"version", manifest.version},
                              {"seed", config.seed},
                              {"config", config},
                              {"artifacts", manifest.artifacts}};
            detail::write_text_file(out_dir / "manifest.json", manifest_doc.dump(2) + "\n");

            json timing_doc = json::object();
            for (const auto& t : manifest.timings) timing_doc[t.stage] = t.milliseconds;
            detail::write_text_file(out_dir / "timings.json", timing_doc.dump(2) + "\n");
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(Stage::Report, e.what());
        }
    });

    return manifest;
}

inline PipelineConfig load_config_from_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    json doc;
    in >> doc;
    return doc.at("config").get<PipelineConfig>();
}

}  // namespace qcluster::pipeline
