// Command-line front end for the two-stage clustering pipeline.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qcluster/pipeline.hpp"
#include "qcluster/version.hpp"

namespace {

// "A..B" inclusive range, or a single integer.
std::vector<int> parse_range(const std::string& text) {
    const auto dots = text.find("..");
    if (dots == std::string::npos) return {std::stoi(text)};
    const int lo = std::stoi(text.substr(0, dots));
    const int hi = std::stoi(text.substr(dots + 2));
    if (hi < lo) throw CLI::ValidationError("range", "'" + text + "' is descending");
    std::vector<int> out;
    for (int v = lo; v <= hi; ++v) out.push_back(v);
    return out;
}

std::vector<int> parse_list(const std::string& text) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto comma = text.find(',', start);
        const auto piece = text.substr(start, comma == std::string::npos ? std::string::npos
                                                                         : comma - start);
        if (!piece.empty()) out.push_back(std::stoi(piece));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    if (out.empty()) throw CLI::ValidationError("list", "'" + text + "' holds no integers");
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quantum-assisted transaction clustering with agent-generated reports"};
    app.set_version_flag("--version", std::string("qcluster ") + qcluster::kVersion);

    qcluster::pipeline::PipelineConfig config;
    std::string k_range = "2..6";
    std::string depth_range = "1..2";
    std::string prototypes = "8";
    std::string manifest_path;

    auto* input = app.add_option("--input", config.input_path, "Delimited-text transaction file");
    auto* synthetic = app.add_option("--synthetic", config.synthetic_profile,
                                     "Synthetic profile ('default' or '<G>-blobs')");
    input->excludes(synthetic);
    std::string delimiter = ",";
    app.add_option("--delimiter", delimiter, "Input field delimiter")->default_val(",");
    app.add_option("--rows", config.synthetic_rows, "Synthetic row count")->default_val(90);
    app.add_option("--k-range", k_range, "Cluster counts, A..B or single K")->default_val("2..6");
    app.add_option("--depth-range", depth_range, "Circuit depths, A..B or single depth")
        ->default_val("1..2");
    app.add_option("--epochs", config.num_epochs, "Training epochs per sweep cell")->default_val(10);
    app.add_option("--prototypes", prototypes, "Prototype counts, comma separated")->default_val("8");
    app.add_option("--qf-runs", config.qf_runs, "Monte-Carlo runs for random features")->default_val(20);
    app.add_option("--seed", config.seed, "Master seed")->default_val(42);
    app.add_option("--backend", config.backend, "Text backend: mock | remote")->default_val("mock");
    app.add_option("--endpoint", config.endpoint, "Remote backend endpoint (http://host:port/path)");
    app.add_option("--model", config.model_name, "Remote model name")->default_val("default");
    app.add_option("--credential-env", config.credential_env,
                   "Environment variable holding the remote bearer token");
    app.add_option("--out", config.out_dir, "Output directory")->default_val("out");
    app.add_flag("--all-epochs", config.all_epochs, "Run stage 2 on every epoch, not just the best");
    app.add_option("--output-dim", config.output_dim, "Quantum feature dimension")->default_val(4);
    app.add_option("--cyclical-period", config.preprocess.cyclical_period,
                   "Timestamp cyclical-encoding period in seconds")
        ->default_val(86400.0);
    app.add_flag("--drop-block-number", config.preprocess.drop_block_number,
                 "Exclude block_number from the feature matrix");
    app.add_option("--workers", config.workers, "Worker pool size for sweep cells (0 = all cores)")
        ->default_val(0);
    app.add_option("--from-manifest", manifest_path,
                   "Re-run a previous pipeline from its manifest.json (other flags ignored)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (!manifest_path.empty()) {
            const std::string out_override = app.count("--out") ? config.out_dir : "";
            config = qcluster::pipeline::load_config_from_manifest(manifest_path);
            if (!out_override.empty()) config.out_dir = out_override;
        } else {
            config.k_range = parse_range(k_range);
            config.depth_range = parse_range(depth_range);
            config.prototype_range = parse_list(prototypes);
            if (delimiter.size() != 1)
                throw CLI::ValidationError("--delimiter", "must be a single character");
            config.delimiter = delimiter[0];
            if (!config.input_path.empty()) config.synthetic_profile.clear();
        }

        const auto manifest = qcluster::pipeline::run_pipeline(config);

        std::cout << "pipeline complete: " << manifest.artifacts.size() << " artifacts in "
                  << config.out_dir << "\n";
        for (const auto& timing : manifest.timings)
            std::printf("  %-8s %10.1f ms\n", timing.stage.c_str(), timing.milliseconds);
        return 0;
    } catch (const qcluster::pipeline::StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
