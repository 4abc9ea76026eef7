#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fedack/losses.hpp"

namespace fedack {

struct Broadcast {
    ParamSet global_gen;
    ParamSet global_extractor;
    ParamSet global_disc;
    int round = 0;
};

struct ClientUpdate {
    int client_id = 0;
    ParamSet extractor;
    ParamSet d1;
    std::int64_t n_k = 0;
    std::array<std::int64_t, 2> counts{0, 0};

    std::string to_json() const;
    static ClientUpdate from_json(const std::string& text);
};

// Local budget per stage: `steps` minibatch updates of size `batch`, one
// gradient update per step.
struct TrainParams {
    int steps = 5;
    int batch = 64;
    double lr = 0.01;
    LossWeights weights;
};

struct ClientModels {
    ExtractorConfig extractor;
    DiscriminatorConfig d1;
    DiscriminatorConfig d2; // may differ from d1; never leaves the client
    GeneratorConfig gen;
};

struct StageStats {
    double mean_loss = 0.0;
    int steps = 0;
};

struct ClientState {
    int client_id = 0;
    const Dataset* dataset = nullptr;
    std::vector<int> shard; // indices into dataset->users

    ClientModels models;
    ParamSet d1, d2, extractor, local_gen;
    ParamSet extractor_prev;            // snapshot of last round's trained extractor
    ParamSet global_extractor_frozen;   // r_glo source, retained at broadcast
    ParamSet global_gen_cache;          // read-only copy of the broadcast generator

    AdamState opt_d1, opt_d2, opt_extractor, opt_gen;

    std::int64_t shard_size() const { return static_cast<std::int64_t>(shard.size()); }
    std::array<std::int64_t, 2> shard_label_counts() const;
};

// D2 and the local generator get client-specific seeds; D1 and the extractor
// start from the shared initial parameters.
ClientState make_client(int client_id, const Dataset* dataset, std::vector<int> shard,
                        const ClientModels& models, const ParamSet& init_extractor,
                        const ParamSet& init_d1, std::uint64_t init_seed);

// Overwrites the local extractor and D1 with the broadcast copies, caches the
// global generator, retains a frozen copy of the incoming global extractor,
// and resets the per-round optimizer states. extractor_prev is untouched.
void receive_broadcast(ClientState& state, const Broadcast& msg);

StageStats stage1_train_discriminators(ClientState& state, const TrainParams& tp, Rng& rng);
StageStats stage2_train_extractor(ClientState& state, const TrainParams& tp, Rng& rng);
StageStats stage3_train_local_generator(ClientState& state, const TrainParams& tp, Rng& rng);

struct LocalRoundResult {
    ClientUpdate update;
    StageStats stage1, stage2, stage3;
};

// receive -> stage1 -> stage2 -> stage3 -> snapshot extractor_prev -> update.
// Deterministic given (state, msg, global_seed): the client RNG derives from
// (global_seed, round, client_id).
LocalRoundResult local_round(ClientState& state, const Broadcast& msg,
                             const TrainParams& tp, std::uint64_t global_seed);

enum class Strategy { fedavg, fedprox };

// Plain classifier training of extractor + D1 head, with an optional proximal
// pull toward the broadcast parameters (fedprox).
LocalRoundResult baseline_local_round(ClientState& state, const Broadcast& msg,
                                      const TrainParams& tp, Strategy strategy,
                                      double rho, std::uint64_t global_seed);

} // namespace fedack
