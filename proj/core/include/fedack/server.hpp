#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedack/client.hpp"

namespace fedack {

struct SelectionPolicy {
    double fraction = 1.0; // C in (0, 1]
    std::uint64_t seed = 0;
};

// Uniform sample without replacement, deterministic in (seed, round), sorted
// ascending. Selected count is max(1, round(C * K)).
std::vector<int> select_clients(const SelectionPolicy& policy, int n_clients, int round);

// Weighted average by shard size, summed in ascending client-id order.
// All-zero weights fall back to an unweighted mean with a warning.
std::pair<ParamSet, ParamSet> aggregate(const std::vector<const ClientUpdate*>& updates);
std::pair<ParamSet, ParamSet> aggregate(const std::vector<ClientUpdate>& updates);

struct DistillConfig {
    int steps = 5;
    int batch = 64;
    // Optional fine-tuning of the global discriminator with the same KD
    // signal; the default trains the generator only.
    bool finetune_disc = false;
};

struct ServerState {
    ExtractorConfig ext_cfg;
    GeneratorConfig gen_cfg;
    ParamSet global_extractor;
    ParamSet global_disc;
    ParamSet global_gen;
    AdamState gen_opt;
    std::optional<AdamState> disc_opt;
    int round = 0;
    LabelStats stats;
};

ServerState make_server(const ClientModels& models, std::uint64_t seed);

// `steps` optimizer updates of the global generator against the round's
// teacher discriminators, using the post-aggregation global discriminator.
void distill_global_generator(ServerState& state,
                              const std::vector<std::pair<int, const ParamSet*>>& teachers,
                              const LabelStats& stats, const DistillConfig& cfg,
                              double lr, Rng& rng);

struct RoundReport {
    int round = 0;
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::vector<int> participants;
    std::vector<std::array<std::int64_t, 2>> label_counts; // per participant

    std::string to_json() const;
};

struct RunContext {
    const Dataset* dataset = nullptr;
    std::vector<int> test_idx;
    TrainParams train;
    SelectionPolicy selection;
    DistillConfig distill;
    std::uint64_t global_seed = 0;
    bool parallel_clients = true;
    double fedprox_rho = 0.01;
};

// One communication round: select -> broadcast -> parallel local rounds ->
// aggregate -> distill -> evaluate.
RoundReport run_round(ServerState& state, std::vector<ClientState>& clients,
                      const RunContext& ctx);

// FedAvg / FedProx comparison round: no generators, no distillation.
RoundReport baseline_round(ServerState& state, std::vector<ClientState>& clients,
                           Strategy strategy, const RunContext& ctx);

double evaluate_accuracy(const ParamSet& extractor, const ParamSet& disc,
                         const Dataset& ds, const std::vector<int>& test_idx,
                         const ExtractorConfig& cfg);

} // namespace fedack
