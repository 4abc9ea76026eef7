#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedack/nn.hpp"
#include "fedack/tensor.hpp"

namespace fedack {

enum class Lang { source, target };

struct ContextEmbedding {
    Tensor tokens; // {m, d}, m >= 1
    Lang language = Lang::source;
};

// Semantically parallel embedding pair; synthetic pairs satisfy
// target tokens = A * source token + noise for a hidden orthogonal A.
struct BilingualPair {
    ContextEmbedding source;
    ContextEmbedding target;
};

struct MapperConfig {
    int dim = 16;
    std::vector<int> mapper_hidden = {32, 32};
    std::vector<int> disc_hidden = {32, 32, 32};
    double lr = 0.01;
    int batch = 32;
    double holdout_frac = 0.1;
    // Weight of the parallel-pair regression term in the mapper step. The
    // adversarial game alone only matches distributions: with isotropic token
    // clouds every orthogonal map is a fixed point, so pairwise recovery needs
    // the parallel signal the corpus provides. 0 disables it.
    double pair_weight = 1.0;
};

struct MapperState {
    MapperConfig cfg;
    ParamSet mapper;
    ParamSet disc;
    AdamState mapper_opt;
    AdamState disc_opt;
};

struct AlignmentReport {
    int epochs = 0;
    std::vector<double> disc_losses; // per-epoch means of the Eq.-style D loss
    std::vector<double> gen_losses;  // per-epoch means of the mapper loss
    double init_holdout_cosine = 0.0;
    double final_holdout_cosine = 0.0;
    std::uint64_t seed = 0;

    std::string to_json() const;
    void save(const std::filesystem::path& path) const;
};

MapperState make_mapper(const MapperConfig& cfg, Rng& rng);

// Mean over tokens: (1/m) * sum_k z_k. Hard error on an empty embedding.
Tensor mean_pool(const ContextEmbedding& emb);

// Token-wise application of the mapper MLP; preserves the token count.
ContextEmbedding map_context(const MapperState& state, const ContextEmbedding& emb);

// (D(real) - 1)^2 + (D(mapped) - 0)^2 for one language direction.
double align_disc_loss(const MapperState& state, const Tensor& pooled_real,
                       const Tensor& pooled_mapped);

// (D(mapped_x) - 1)^2 + (D(mapped_y) - 1)^2 with the discriminator frozen.
double align_gen_loss(const MapperState& state, const Tensor& pooled_mapped_x,
                      const Tensor& pooled_mapped_y);

// Mean cosine between pooled real embeddings and pooled mapped counterparts,
// both directions, over the given pairs.
double mean_pair_cosine(const MapperState& state, const std::vector<BilingualPair>& pairs);

// Alternating discriminator / mapper optimization; deterministic in seed.
std::pair<MapperState, AlignmentReport>
train_alignment(const std::vector<BilingualPair>& pairs, int epochs, std::uint64_t seed,
                const MapperConfig& cfg = {});

// source tokens ~ N(0,1)^d; target = A*source + eps with A hidden random
// orthogonal, eps ~ N(0, noise_sigma^2).
std::vector<BilingualPair> synth_bilingual(int n_pairs, int d, int tokens_per_side,
                                           double noise_sigma, std::uint64_t seed);

void save_pairs_jsonl(const std::vector<BilingualPair>& pairs,
                      const std::filesystem::path& path);
std::vector<BilingualPair> load_pairs_jsonl(const std::filesystem::path& path);

} // namespace fedack
