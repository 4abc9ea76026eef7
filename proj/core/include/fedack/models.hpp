#pragma once

#include <optional>
#include <vector>

#include "fedack/data.hpp"
#include "fedack/nn.hpp"

namespace fedack {

// Backbone feature extractor: property MLP + mean-pooled tweet embeddings
// aggregated by additive attention + fusion MLP producing the user
// representation r_u of dimension feature_dim.
struct ExtractorConfig {
    int prop_dim = 8;
    int tweet_embed_dim = 16;
    int hidden_dim = 32;
    int feature_dim = 16; // >= 2; 2 enables the planar feature-export mode
    int attention_dim = 16;

    void validate() const;
};

struct DiscriminatorConfig {
    int input_dim = 16;
    std::vector<int> hidden = {32, 32};
    int classes = 2;

    void validate() const;
};

struct GeneratorConfig {
    int noise_dim = 8;
    int classes = 2;
    std::vector<int> hidden = {32};
    int feature_dim = 16; // output dim, matches the extractor

    void validate() const;
};

enum class Provenance { current, global, previous };

struct Representation {
    std::vector<double> values;
    Provenance provenance = Provenance::current;
};

// Generator output living in the extractor's representation space.
struct PseudoSample {
    std::vector<double> features;
    int label = 0;
    std::vector<double> noise;
};

ParamSet make_extractor(const ExtractorConfig& cfg, Rng& rng);
ParamSet make_discriminator(const DiscriminatorConfig& cfg, Rng& rng);
ParamSet make_generator(const GeneratorConfig& cfg, Rng& rng);

// ---- tape-mode forwards ------------------------------------------------------

struct AttnResult {
    Var output;       // {1, d}
    Var weights;      // {1, M}; undefined when empty
    bool empty_input = false;
};

// weights_j = softmax_j(v . tanh(W h_j)); output = sum_j weights_j h_j.
// An empty tweet list yields the zero vector with empty_input set.
AttnResult attention_aggregate_t(Tape& tape, const Bound& ext,
                                 const std::vector<Tensor>& tweet_means, int embed_dim);

Var extractor_forward_t(Tape& tape, const Bound& ext, const UserRecord& user,
                        const ExtractorConfig& cfg);

// Stacked representations for a batch of users: {B, F}.
Var extractor_batch_t(Tape& tape, const Bound& ext,
                      const std::vector<const UserRecord*>& users,
                      const ExtractorConfig& cfg);

// Raw logits {B, classes}; softmax is applied by the loss layer.
Var discriminator_forward_t(Tape& tape, const Bound& d, Var input);

// input rows are concat(z, onehot(label)); output {B, F} through tanh.
Var generator_forward_t(Tape& tape, const Bound& g, Var input);

// ---- eval-mode (no gradients) -------------------------------------------------

Tensor mean_pool_tokens(const Tensor& tokens); // {1, d} mean over rows

Representation extractor_forward(const ParamSet& params, const UserRecord& user,
                                 const ExtractorConfig& cfg,
                                 Provenance provenance = Provenance::current);

Tensor extractor_batch(const ParamSet& params,
                       const std::vector<const UserRecord*>& users,
                       const ExtractorConfig& cfg);

Tensor discriminator_forward(const ParamSet& params, const Tensor& input);

// Builds the concat(z, onehot(label)) input matrix for a generator batch.
Tensor generator_input(const GeneratorConfig& cfg, const Tensor& z,
                       const std::vector<int>& labels);

PseudoSample generator_forward(const ParamSet& params, const GeneratorConfig& cfg,
                               const std::vector<double>& z, int label);

Tensor generator_batch(const ParamSet& params, const GeneratorConfig& cfg,
                       const Tensor& z, const std::vector<int>& labels);

// Sample a batch of Gaussian noise rows {n, noise_dim}.
Tensor sample_noise(int n, int noise_dim, Rng& rng);

} // namespace fedack
