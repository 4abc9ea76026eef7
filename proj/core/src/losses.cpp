#include "fedack/losses.hpp"

#include <cmath>

#include "fedack/common.hpp"

namespace fedack {

void LossWeights::validate() const {
    check(tau > 0.0, "LossWeights: tau must be > 0");
    check(alpha_kd >= 0.0 && gamma >= 0.0 && mu >= 0.0,
          "LossWeights: weights must be >= 0");
    check(std::isfinite(alpha_kd) && std::isfinite(gamma) && std::isfinite(mu) &&
              std::isfinite(tau),
          "LossWeights: weights must be finite");
}

Var cls_loss_t(Tape& tape, Var logits, const std::vector<int>& labels) {
    (void)tape;
    check(!labels.empty(), "cls_loss: empty batch");
    return nll(log_softmax(logits), labels);
}

double kl_divergence(const ProbPair& pair) {
    check(pair.p.size() == pair.q.size(), "kl_divergence: length mismatch");
    Tape tape;
    Var p = tape.constant(Tensor::vec(pair.p));
    Var q = tape.constant(Tensor::vec(pair.q));
    return kl_div(p, q).scalar();
}

Var kd_loss_t(Tape& tape, const Bound& d, Var reps, Var pseudo) {
    check(reps.val().rows() == pseudo.val().rows(),
          "kd_loss: batch size mismatch, " + reps.val().shape_str() + " vs " +
              pseudo.val().shape_str());
    const int batch = reps.val().rows();
    Var p = softmax(discriminator_forward_t(tape, d, reps));
    Var q = detach(softmax(discriminator_forward_t(tape, d, pseudo)));
    return scale(kl_div(p, q), 1.0 / batch);
}

Var adv_loss_t(Tape& tape, const Bound& d1, const Bound& d2, Var input) {
    check(input.val().rows() >= 1, "adv_loss: empty batch");
    const int batch = input.val().rows();
    Var p = softmax(discriminator_forward_t(tape, d1, input));
    Var q = softmax(discriminator_forward_t(tape, d2, input));
    return scale(kl_div(p, q), 1.0 / batch);
}

Var contrastive_loss_t(Tape& tape, Var r, Var r_glo, Var r_pre, double tau) {
    (void)tape;
    check(tau > 0.0, "contrastive_loss: tau must be > 0");
    Var s_glo = cosine_sim(r, r_glo);
    Var s_pre = cosine_sim(r, r_pre);
    return softplus(scale(sub(s_pre, s_glo), 1.0 / tau));
}

double contrastive_loss(const std::vector<double>& r, const std::vector<double>& r_glo,
                        const std::vector<double>& r_pre, double tau) {
    Tape tape;
    Var vr = tape.constant(Tensor::vec(r));
    Var vg = tape.constant(Tensor::vec(r_glo));
    Var vp = tape.constant(Tensor::vec(r_pre));
    return contrastive_loss_t(tape, vr, vg, vp, tau).scalar();
}

Var diversity_loss_t(Tape& tape, Var feats, const Tensor& noise) {
    (void)tape;
    const Tensor& x = feats.val();
    const int n = x.rows();
    check(n >= 1, "diversity_loss: empty batch");
    check(noise.rows() == n, "diversity_loss: noise batch size " +
                                 std::to_string(noise.rows()) + " vs features " +
                                 std::to_string(n));
    if (n == 1) return exp_op(scale(sum(feats), 0.0)); // exactly exp(0) = 1

    // |z_i - z_j| are constants of the pairing.
    std::vector<Var> rows_v;
    rows_v.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) rows_v.push_back(row(feats, i));

    Var acc;
    bool first = true;
    const int zd = noise.cols();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double zdist = 0.0;
            for (int c = 0; c < zd; ++c) {
                const double dz = noise.at(i, c) - noise.at(j, c);
                zdist += dz * dz;
            }
            zdist = std::sqrt(zdist);
            Var diff = sub(rows_v[static_cast<size_t>(i)], rows_v[static_cast<size_t>(j)]);
            Var dist = sqrt_op(sum(mul(diff, diff)));
            Var term = scale(dist, -2.0 * zdist); // ordered pairs (i,j) and (j,i)
            acc = first ? term : add(acc, term);
            first = false;
        }
    }
    return exp_op(scale(acc, 1.0 / (static_cast<double>(n) * n)));
}

double diversity_loss(const Tensor& feats, const Tensor& noise) {
    Tape tape;
    Var f = tape.constant(feats);
    return diversity_loss_t(tape, f, noise).scalar();
}

DiscLossParts disc_total_loss_t(Tape& tape, const Bound& d1, const Bound& d2,
                                const DiscBatch& batch, const LossWeights& w) {
    w.validate();
    check(batch.reps.rows() == static_cast<int>(batch.labels.size()),
          "disc_total_loss: label count mismatch");
    check(batch.pseudo_global.rows() == batch.reps.rows(),
          "disc_total_loss: global pseudo batch size mismatch");
    check(batch.pseudo_local.rows() == static_cast<int>(batch.pseudo_local_labels.size()),
          "disc_total_loss: local pseudo label count mismatch");

    Var reps = tape.constant(batch.reps);
    Var pseudo_g = tape.constant(batch.pseudo_global);
    Var pseudo_l = tape.constant(batch.pseudo_local);

    // Classification covers real and global-generator pseudo samples, for both
    // discriminators; pseudo labels mirror the real batch labels.
    Var joint = vcat(reps, pseudo_g);
    std::vector<int> joint_labels = batch.labels;
    joint_labels.insert(joint_labels.end(), batch.labels.begin(), batch.labels.end());
    Var ce1 = cls_loss_t(tape, discriminator_forward_t(tape, d1, joint), joint_labels);
    Var ce2 = cls_loss_t(tape, discriminator_forward_t(tape, d2, joint), joint_labels);
    DiscLossParts parts;
    parts.cls = scale(add(ce1, ce2), 0.5);

    parts.dis1 = kd_loss_t(tape, d1, reps, pseudo_g);
    parts.dis2 = kd_loss_t(tape, d2, reps, pseudo_g);
    // In the discriminator update the shared D1 is the reference branch of
    // both adversarial terms (as the teacher branch is in the KD terms): the
    // exclusive D2 carves its own boundary against a stable anchor. Values
    // are identical to adv_loss_t; only the gradient routing differs.
    auto ref_adv = [&](Var input) {
        Var p = detach(softmax(discriminator_forward_t(tape, d1, input)));
        Var q = softmax(discriminator_forward_t(tape, d2, input));
        return scale(kl_div(p, q), 1.0 / input.val().rows());
    };
    parts.advg = ref_adv(pseudo_l);
    parts.adv = ref_adv(reps);

    parts.total = add(parts.cls,
                      add(scale(add(parts.dis1, parts.dis2), w.alpha_kd),
                          scale(sub(parts.advg, parts.adv), w.gamma)));
    return parts;
}

ExtLossParts extractor_total_loss_t(Tape& tape, const Bound& extractor,
                                    const Bound& d1, const Bound& d2,
                                    const ParamSet& global_extractor,
                                    const ParamSet& prev_extractor,
                                    const ExtractorBatch& batch, const LossWeights& w,
                                    const ExtractorConfig& cfg) {
    w.validate();
    check(!batch.users.empty(), "extractor_total_loss: empty batch");
    check(batch.users.size() == batch.labels.size(),
          "extractor_total_loss: label count mismatch");

    Var reps = extractor_batch_t(tape, extractor, batch.users, cfg);
    ExtLossParts parts;
    parts.cls = cls_loss_t(tape, discriminator_forward_t(tape, d1, reps), batch.labels);
    parts.adv = adv_loss_t(tape, d1, d2, reps);

    // r_glo / r_pre recomputed per minibatch from the frozen snapshots, detached.
    Var con_sum;
    for (size_t i = 0; i < batch.users.size(); ++i) {
        Var r = row(reps, static_cast<int>(i));
        Var r_glo = tape.constant(Tensor::vec(
            extractor_forward(global_extractor, *batch.users[i], cfg, Provenance::global)
                .values));
        Var r_pre = tape.constant(Tensor::vec(
            extractor_forward(prev_extractor, *batch.users[i], cfg, Provenance::previous)
                .values));
        Var c = contrastive_loss_t(tape, r, r_glo, r_pre, w.tau);
        con_sum = i == 0 ? c : add(con_sum, c);
    }
    parts.con = scale(con_sum, 1.0 / static_cast<double>(batch.users.size()));

    parts.total =
        add(parts.cls, add(scale(parts.adv, w.gamma), scale(parts.con, w.mu)));
    return parts;
}

GenLossParts local_gen_loss_t(Tape& tape, const Bound& gk, const GeneratorConfig& gcfg,
                              const Bound& d1, const Bound& d2, const Tensor& noise,
                              const std::vector<int>& labels) {
    check(noise.rows() == static_cast<int>(labels.size()),
          "local_gen_loss: label count mismatch");
    Var input = tape.constant(generator_input(gcfg, noise, labels));
    Var feats = generator_forward_t(tape, gk, input);

    GenLossParts parts;
    Var ce1 = cls_loss_t(tape, discriminator_forward_t(tape, d1, feats), labels);
    Var ce2 = cls_loss_t(tape, discriminator_forward_t(tape, d2, feats), labels);
    parts.cls = scale(add(ce1, ce2), 0.5);
    parts.advg = adv_loss_t(tape, d1, d2, feats);
    parts.var = diversity_loss_t(tape, feats, noise);
    parts.total = add(sub(parts.cls, parts.advg), parts.var);
    return parts;
}

Var global_gen_loss_t(Tape& tape,
                      const std::vector<std::pair<int, const ParamSet*>>& teachers,
                      const Bound& global_disc, const Bound& generator,
                      const GeneratorConfig& gcfg, const LabelStats& stats,
                      const GlobalGenBatch& batch) {
    check(!teachers.empty(), "global_gen_loss: no teachers");
    check(batch.noise.rows() == static_cast<int>(batch.labels.size()),
          "global_gen_loss: label count mismatch");
    const int n = batch.noise.rows();
    check(n >= 1, "global_gen_loss: empty sample batch");

    Var input = tape.constant(generator_input(gcfg, batch.noise, batch.labels));
    Var feats = generator_forward_t(tape, generator, input);
    Var q = softmax(discriminator_forward_t(tape, global_disc, feats));

    Var acc;
    bool first = true;
    for (const auto& [client_id, teacher] : teachers) {
        std::vector<double> wts(static_cast<size_t>(n));
        bool any = false;
        for (int i = 0; i < n; ++i) {
            wts[static_cast<size_t>(i)] = stats.alpha(client_id, batch.labels[static_cast<size_t>(i)]);
            if (wts[static_cast<size_t>(i)] != 0.0) any = true;
        }
        if (!any) continue; // teacher holds none of the sampled labels
        Tape& t = tape;
        Bound tb = bind_frozen(t, *teacher);
        Var logits = discriminator_forward_t(t, tb, feats);
        Var kl = weighted_kl_rows(softmax(logits), q, wts);
        Var ce = weighted_nll(log_softmax(logits), batch.labels, wts);
        Var term = add(kl, ce);
        acc = first ? term : add(acc, term);
        first = false;
    }
    if (first) {
        // Every teacher weight vanished; the loss is identically zero but must
        // stay differentiable wrt the generator.
        return scale(sum(feats), 0.0);
    }
    return scale(acc, 1.0 / static_cast<double>(teachers.size()));
}

} // namespace fedack
