#pragma once

#include <vector>

#include "fedack/data.hpp"
#include "fedack/models.hpp"
#include "fedack/nn.hpp"

namespace fedack {

struct LossWeights {
    double alpha_kd = 1.0; // knowledge-distillation weight
    double gamma = 0.5;    // adversarial weight
    double mu = 0.5;       // contrastive weight
    double tau = 0.5;      // contrastive temperature, > 0

    void validate() const;
};

struct ProbPair {
    std::vector<double> p, q;
};

// ---- scalar building blocks ---------------------------------------------------

// Mean cross-entropy of raw logits against class labels; empty batch is an error.
Var cls_loss_t(Tape& tape, Var logits, const std::vector<int>& labels);

// Direct KL(p || q) over probability vectors, q clamped below at 1e-12.
double kl_divergence(const ProbPair& pair);

// Mean over the batch of KL(softmax(D(reps_i)) || softmax(D(pseudo_i))); the
// pseudo branch is the teacher signal and is detached.
Var kd_loss_t(Tape& tape, const Bound& d, Var reps, Var pseudo);

// Mean over the batch of KL(softmax(D1(x_i)) || softmax(D2(x_i))). Gradients
// flow into both discriminators (and into x when it is on the tape).
Var adv_loss_t(Tape& tape, const Bound& d1, const Bound& d2, Var input);

// Per-sample drift regularizer: -log( e^{s_glo/tau} / (e^{s_glo/tau} + e^{s_pre/tau}) )
// with s_* the cosine similarity of r against the global / previous-round
// representation. r_glo and r_pre must enter as constants (detached).
Var contrastive_loss_t(Tape& tape, Var r, Var r_glo, Var r_pre, double tau);
double contrastive_loss(const std::vector<double>& r, const std::vector<double>& r_glo,
                        const std::vector<double>& r_pre, double tau);

// exp( (1/N^2) sum_{i,j} -|x_i - x_j| * |z_i - z_j| ), in (0, 1]; equals 1 when
// the batch collapses or N = 1.
Var diversity_loss_t(Tape& tape, Var feats, const Tensor& noise);
double diversity_loss(const Tensor& feats, const Tensor& noise);

// ---- composite stage losses ----------------------------------------------------

// All component inputs prepared by the caller. reps/pseudo_* are plain value
// matrices: stage 1 trains the discriminators only.
struct DiscBatch {
    Tensor reps;                         // {B, F} from the frozen extractor
    std::vector<int> labels;             // B real labels
    Tensor pseudo_global;                // {B, F} from the frozen global generator
    Tensor pseudo_local;                 // {B2, F} from the frozen local generator
    std::vector<int> pseudo_local_labels;
};

struct DiscLossParts {
    Var total, cls, dis1, dis2, advg, adv;
};

// cls + alpha*(dis1 + dis2) + gamma*(advg - adv); cls averages the D1 and D2
// cross-entropies over real and global-generator pseudo samples.
DiscLossParts disc_total_loss_t(Tape& tape, const Bound& d1, const Bound& d2,
                                const DiscBatch& batch, const LossWeights& w);

struct ExtractorBatch {
    std::vector<const UserRecord*> users;
    std::vector<int> labels;
};

struct ExtLossParts {
    Var total, cls, adv, con;
};

// cls + gamma*adv + mu*mean(con); classification logits come from the frozen
// D1 on the current extractor's representations; r_glo/r_pre come from the
// frozen global and previous-round extractors and are detached.
ExtLossParts extractor_total_loss_t(Tape& tape, const Bound& extractor,
                                    const Bound& d1, const Bound& d2,
                                    const ParamSet& global_extractor,
                                    const ParamSet& prev_extractor,
                                    const ExtractorBatch& batch, const LossWeights& w,
                                    const ExtractorConfig& cfg);

struct GenLossParts {
    Var total, cls, advg, var;
};

// cls - advg + var on a fresh pseudo batch; discriminators frozen. cls averages
// the D1 and D2 cross-entropies against the conditioning labels.
GenLossParts local_gen_loss_t(Tape& tape, const Bound& gk, const GeneratorConfig& gcfg,
                              const Bound& d1, const Bound& d2, const Tensor& noise,
                              const std::vector<int>& labels);

struct GlobalGenBatch {
    Tensor noise;            // {N, Z}
    std::vector<int> labels; // labels drawn from p(y)
};

// (1/K) sum_k sum_i alpha^{k,y_i} [ KL(softmax(T_k(x_i)) || softmax(D(x_i))) + CE_i ]
// where x = G(noise, labels) and CE_i is teacher T_k's cross-entropy against
// y_i. teacher_ids index into stats. Only theta_G trains unless the global
// discriminator is bound trainable by the caller.
Var global_gen_loss_t(Tape& tape,
                      const std::vector<std::pair<int, const ParamSet*>>& teachers,
                      const Bound& global_disc, const Bound& generator,
                      const GeneratorConfig& gcfg, const LabelStats& stats,
                      const GlobalGenBatch& batch);

} // namespace fedack
