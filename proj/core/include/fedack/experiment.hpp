#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedack/server.hpp"

namespace fedack {

enum class Method { fedack, fedack_a, fedavg, fedprox };

Method method_from_string(const std::string& s);
std::string method_to_string(Method m);

struct ModelConfig {
    int hidden = 32;
    int feature_dim = 16;
    int attention_dim = 16;
    int noise_dim = 8;
    std::vector<int> disc_hidden = {32, 32};
    std::vector<int> gen_hidden = {32};
    std::optional<std::vector<int>> d2_hidden; // defaults to disc_hidden
};

struct ExperimentConfig {
    std::optional<std::string> dataset_path; // JSONL; otherwise synthesize
    SynthSpec synth;
    double test_frac = 0.2;
    PartitionSpec partition;
    Method method = Method::fedack;
    int rounds = 100;
    int local_steps = 5;
    int batch = 64;
    double lr = 0.01;
    LossWeights weights;
    double select_fraction = 1.0;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    std::string out_dir = "runs";
    ModelConfig model;
    double fedprox_rho = 0.01;
    DistillConfig distill{-1, 64, false}; // steps < 0 means "use local_steps"
    bool parallel_clients = true;
    bool checkpoint_every_round = false;
    std::vector<double> targets = {0.6, 0.7, 0.8, 0.9};

    void validate() const;
    std::string to_json() const; // effective configuration dump
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig from_json_file(const std::filesystem::path& path);
    std::string hash() const; // FNV-1a over the canonical dump

    // Resolved pieces.
    LossWeights effective_weights() const; // fedack_a forces mu = 0
    int distill_steps() const { return distill.steps < 0 ? local_steps : distill.steps; }
    std::filesystem::path resolved_out_dir() const; // honors FEDACK_OUT
};

struct RunResult {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<double> accuracy_curve;
    double max_accuracy = 0.0;
    std::vector<std::pair<double, std::optional<int>>> rounds_to_target_map;
    double wall_seconds = 0.0;

    std::string to_json() const;
};

// First 1-based round index whose accuracy reaches the target, if any.
std::optional<int> rounds_to_target(const std::vector<double>& curve, double target);

// One seeded run. Writes metrics.csv (incrementally; partial file survives an
// abort), run_result.json, effective_config.json, final checkpoints and the
// per-client extractor states under run_dir.
RunResult run_single(const ExperimentConfig& cfg, std::uint64_t seed,
                     const std::filesystem::path& run_dir);

struct MultiRunSummary {
    std::vector<RunResult> runs;
    double mean_max_accuracy = 0.0;
    double std_max_accuracy = 0.0;
};

// Runs every configured seed under <out>/<method>/seed_<s>/ and writes
// summary.json next to them.
MultiRunSummary cmd_train(const ExperimentConfig& cfg);

// Reads a finished run directory and pushes the held-out test users through
// each stored client extractor. Requires feature_dim == 2.
void cmd_export_features(const std::filesystem::path& run_dir,
                         const std::filesystem::path& csv_out);

// Mean over classes of pairwise cosine similarity between per-client
// class-mean feature vectors; in [-1, 1].
double feature_consistency_score(const std::filesystem::path& features_csv);

struct SweepResult {
    std::string param;
    std::vector<double> values;
    // rows: (value, seed, max_accuracy)
    std::vector<std::tuple<double, std::uint64_t, double>> runs;
};

// Grid over gamma / mu / tau / alpha (Dirichlet concentration). Writes
// sweep_runs.csv and sweep_summary.csv under the sweep directory.
SweepResult cmd_sweep(const ExperimentConfig& base, const std::string& param,
                      const std::vector<double>& values,
                      const std::filesystem::path& sweep_dir);

// Shortest round-trip decimal formatting, deterministic across runs.
std::string fmt_double(double v);

} // namespace fedack
