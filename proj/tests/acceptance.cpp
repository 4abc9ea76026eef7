// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 10 re-executes this binary to compare metrics across
// process boundaries; the child mode is "--child-train <dir> <seed>".

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <vector>

#include "fedack/experiment.hpp"
#include "fedack/lingual.hpp"
#include "testutil.hpp"

using namespace fedack;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
    std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": "
              << detail << std::endl;
    if (!pass) ++g_failures;
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// ---- shared small-model helpers ------------------------------------------------

ExtractorConfig tiny_ext() {
    ExtractorConfig cfg;
    cfg.prop_dim = 3;
    cfg.tweet_embed_dim = 4;
    cfg.hidden_dim = 5;
    cfg.feature_dim = 4;
    cfg.attention_dim = 3;
    return cfg;
}

DiscriminatorConfig tiny_disc(int f = 4) {
    DiscriminatorConfig cfg;
    cfg.input_dim = f;
    cfg.hidden = {6};
    return cfg;
}

GeneratorConfig tiny_gen(int f = 4) {
    GeneratorConfig cfg;
    cfg.noise_dim = 3;
    cfg.feature_dim = f;
    cfg.hidden = {6};
    return cfg;
}

UserRecord random_user(const ExtractorConfig& cfg, Rng& rng, int n_tweets) {
    UserRecord u;
    u.id = "acc";
    u.label = rng.uniform_int(2);
    u.props.resize(static_cast<size_t>(cfg.prop_dim));
    for (auto& v : u.props) v = rng.normal();
    for (int t = 0; t < n_tweets; ++t)
        u.tweets.push_back(testutil::random_matrix(2 + rng.uniform_int(2),
                                                   cfg.tweet_embed_dim, rng));
    return u;
}

std::vector<double> ref_disc_row(const ParamSet& d, const Tensor& x, int r) {
    std::vector<double> in(static_cast<size_t>(x.cols()));
    for (int c = 0; c < x.cols(); ++c) in[static_cast<size_t>(c)] = x.at(r, c);
    return testutil::ref_mlp(d, "disc", in, testutil::RefAct::leaky_relu,
                             testutil::RefAct::none);
}

// ---- criterion 1: gradient correctness ----------------------------------------

bool grad_check_all(std::string& detail) {
    const double t0 = now_seconds();
    double worst = 0.0;
    std::string worst_where;

    auto track = [&](const std::string& name, const testutil::GradCheckResult& r) {
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_where = name + " " + r.worst;
        }
    };

    for (int instance = 0; instance < 5; ++instance) {
        Rng rng(1000 + static_cast<std::uint64_t>(instance) * 17);
        ExtractorConfig ecfg = tiny_ext();
        DiscriminatorConfig dcfg = tiny_disc(ecfg.feature_dim);
        GeneratorConfig gcfg = tiny_gen(ecfg.feature_dim);

        ParamSet ext = make_extractor(ecfg, rng);
        ParamSet glo = make_extractor(ecfg, rng);
        ParamSet prev = make_extractor(ecfg, rng);
        ParamSet d1 = make_discriminator(dcfg, rng);
        ParamSet d2 = make_discriminator(dcfg, rng);
        ParamSet gk = make_generator(gcfg, rng);
        ParamSet g = make_generator(gcfg, rng);

        const int batch = 2 + rng.uniform_int(3); // <= 4
        std::vector<UserRecord> users;
        ExtractorBatch ebatch;
        for (int i = 0; i < batch; ++i) users.push_back(random_user(ecfg, rng, 1 + rng.uniform_int(2)));
        for (auto& u : users) {
            ebatch.users.push_back(&u);
            ebatch.labels.push_back(u.label);
        }
        LossWeights w;
        w.alpha_kd = 0.7;
        w.gamma = 0.6;
        w.mu = 0.8;
        w.tau = 0.5;

        DiscBatch dbatch;
        dbatch.reps = testutil::random_matrix(batch, ecfg.feature_dim, rng);
        dbatch.labels = ebatch.labels;
        dbatch.pseudo_global = testutil::random_matrix(batch, ecfg.feature_dim, rng);
        dbatch.pseudo_local = testutil::random_matrix(batch, ecfg.feature_dim, rng);
        dbatch.pseudo_local_labels.resize(static_cast<size_t>(batch));
        for (auto& y : dbatch.pseudo_local_labels) y = rng.uniform_int(2);

        // discriminators through the full stage-1 loss
        auto disc_loss = [&](bool grad) {
            Tape tape;
            Bound b1 = grad ? bind_trainable(tape, d1) : bind_frozen(tape, d1);
            Bound b2 = grad ? bind_trainable(tape, d2) : bind_frozen(tape, d2);
            Var loss = disc_total_loss_t(tape, b1, b2, dbatch, w).total;
            if (grad) {
                d1.zero_grad();
                d2.zero_grad();
                tape.backward(loss);
            }
            return loss.scalar();
        };
        disc_loss(true);
        track("D1", testutil::finite_diff_check(d1, [&] { return disc_loss(false); }));
        track("D2", testutil::finite_diff_check(d2, [&] { return disc_loss(false); }));

        // extractor through the full stage-2 loss
        auto ext_loss = [&](bool grad) {
            Tape tape;
            Bound be = grad ? bind_trainable(tape, ext) : bind_frozen(tape, ext);
            Var loss = extractor_total_loss_t(tape, be, bind_frozen(tape, d1),
                                              bind_frozen(tape, d2), glo, prev, ebatch, w,
                                              ecfg)
                           .total;
            if (grad) {
                ext.zero_grad();
                tape.backward(loss);
            }
            return loss.scalar();
        };
        ext_loss(true);
        track("extractor", testutil::finite_diff_check(ext, [&] { return ext_loss(false); }));

        // local generator through the full stage-3 loss
        Tensor z = testutil::random_matrix(batch, gcfg.noise_dim, rng);
        std::vector<int> zlabels(static_cast<size_t>(batch));
        for (auto& y : zlabels) y = rng.uniform_int(2);
        auto gk_loss = [&](bool grad) {
            Tape tape;
            Bound bg = grad ? bind_trainable(tape, gk) : bind_frozen(tape, gk);
            Var loss = local_gen_loss_t(tape, bg, gcfg, bind_frozen(tape, d1),
                                        bind_frozen(tape, d2), z, zlabels)
                           .total;
            if (grad) {
                gk.zero_grad();
                tape.backward(loss);
            }
            return loss.scalar();
        };
        gk_loss(true);
        track("local generator", testutil::finite_diff_check(gk, [&] { return gk_loss(false); }));

        // global generator through the distillation loss
        LabelStats stats;
        stats.counts = {{6, 2}, {1, 7}};
        GlobalGenBatch gbatch;
        gbatch.noise = z;
        gbatch.labels = zlabels;
        auto g_loss = [&](bool grad) {
            Tape tape;
            Bound bg = grad ? bind_trainable(tape, g) : bind_frozen(tape, g);
            Var loss = global_gen_loss_t(tape, {{0, &d1}, {1, &d2}},
                                         bind_frozen(tape, d2), bg, gcfg, stats, gbatch);
            if (grad) {
                g.zero_grad();
                tape.backward(loss);
            }
            return loss.scalar();
        };
        g_loss(true);
        track("global generator", testutil::finite_diff_check(g, [&] { return g_loss(false); }));

        // lingual mapper and alignment discriminator through their losses
        MapperConfig mcfg;
        mcfg.dim = 4;
        mcfg.mapper_hidden = {6};
        mcfg.disc_hidden = {6};
        MapperState mst = make_mapper(mcfg, rng);
        Tensor src = testutil::random_matrix(3, 4, rng);
        Tensor tgt = testutil::random_matrix(3, 4, rng);

        auto mapper_loss = [&](bool grad) {
            Tape tape;
            Bound bm = grad ? bind_trainable(tape, mst.mapper) : bind_frozen(tape, mst.mapper);
            Bound bd = bind_frozen(tape, mst.disc);
            Var toks = tape.constant(tgt);
            Var mapped = mlp_forward(bm, "map", toks, Act::leaky_relu, Act::none);
            Var pooled = scale(matmul(tape.constant(Tensor({1, 3}, 1.0)), mapped), 1.0 / 3.0);
            Var score = sigmoid(mlp_forward(bd, "adisc", pooled, Act::leaky_relu, Act::none));
            Var d = add_scalar(score, -1.0);
            Var loss = sum(mul(d, d));
            if (grad) {
                mst.mapper.zero_grad();
                tape.backward(loss);
            }
            return loss.scalar();
        };
        mapper_loss(true);
        track("lingual mapper",
              testutil::finite_diff_check(mst.mapper, [&] { return mapper_loss(false); }));

        auto adisc_loss = [&](bool grad) {
            Tape tape;
            Bound bd = grad ? bind_trainable(tape, mst.disc) : bind_frozen(tape, mst.disc);
            Var real = tape.constant(Tensor::matrix(1, 4, {src.at(0, 0), src.at(0, 1),
                                                           src.at(0, 2), src.at(0, 3)}));
            Var mapped = tape.constant(Tensor::matrix(1, 4, {tgt.at(0, 0), tgt.at(0, 1),
                                                             tgt.at(0, 2), tgt.at(0, 3)}));
            Var sr = sigmoid(mlp_forward(bd, "adisc", real, Act::leaky_relu, Act::none));
            Var sm = sigmoid(mlp_forward(bd, "adisc", mapped, Act::leaky_relu, Act::none));
            Var dr = add_scalar(sr, -1.0);
            Var loss = add(sum(mul(dr, dr)), sum(mul(sm, sm)));
            if (grad) {
                mst.disc.zero_grad();
                tape.backward(loss);
            }
            return loss.scalar();
        };
        adisc_loss(true);
        track("alignment discriminator",
              testutil::finite_diff_check(mst.disc, [&] { return adisc_loss(false); }));
    }

    const double elapsed = now_seconds() - t0;
    std::ostringstream os;
    os << "autodiff vs finite differences, max rel err " << worst << " (worst: "
       << worst_where << "), " << elapsed << " s";
    detail = os.str();
    return worst < 1e-3 && elapsed < 30.0;
}

// ---- criterion 2: loss oracles --------------------------------------------------

bool loss_oracles(std::string& detail) {
    Rng rng(2024);
    double worst = 0.0;
    auto track = [&](double err) { worst = std::max(worst, err); };

    // anchors
    {
        Tape tape;
        Var uniform = tape.constant(Tensor::matrix(1, 2, {0.0, 0.0}));
        track(std::fabs(cls_loss_t(tape, uniform, {0}).scalar() - std::log(2.0)));
        track(std::fabs(kl_divergence({{1.0, 0.0}, {0.5, 0.5}}) - std::log(2.0)));
        track(std::fabs(contrastive_loss({1, 0}, {2, 0}, {3, 0}, 0.7) - std::log(2.0)));
        track(std::fabs(contrastive_loss({1, 0}, {1, 0}, {0, 1}, 0.5) -
                        std::log(1.0 + std::exp(-2.0))));
        Tensor collapsed({3, 4});
        for (auto& v : collapsed.data) v = 0.5;
        Tensor zc = testutil::random_matrix(3, 2, rng);
        track(std::fabs(diversity_loss(collapsed, zc) - 1.0));
        Tensor single = testutil::random_matrix(1, 4, rng);
        Tensor z1 = testutil::random_matrix(1, 2, rng);
        track(std::fabs(diversity_loss(single, z1) - 1.0));
    }

    for (int trial = 0; trial < 100; ++trial) {
        // kl
        const int n = 2 + rng.uniform_int(4);
        std::vector<double> p(static_cast<size_t>(n)), q(static_cast<size_t>(n));
        double sp = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            p[static_cast<size_t>(i)] = rng.uniform() + 1e-3;
            q[static_cast<size_t>(i)] = rng.uniform() + 1e-3;
            sp += p[static_cast<size_t>(i)];
            sq += q[static_cast<size_t>(i)];
        }
        for (auto& v : p) v /= sp;
        for (auto& v : q) v /= sq;
        track(std::fabs(kl_divergence({p, q}) - testutil::ref_kl(p, q)));

        // cls
        std::vector<double> logits = {rng.normal(), rng.normal()};
        const int label = rng.uniform_int(2);
        Tape tape;
        Var lv = tape.constant(Tensor::matrix(1, 2, logits));
        track(std::fabs(cls_loss_t(tape, lv, {label}).scalar() -
                        testutil::ref_cross_entropy(logits, label)));

        // contrastive
        std::vector<double> r = {rng.normal(), rng.normal(), rng.normal()};
        std::vector<double> gvec = {rng.normal(), rng.normal(), rng.normal()};
        std::vector<double> pv = {rng.normal(), rng.normal(), rng.normal()};
        const double tau = 0.2 + rng.uniform();
        const double sg = testutil::ref_cosine(r, gvec);
        const double spb = testutil::ref_cosine(r, pv);
        const double expect =
            -std::log(std::exp(sg / tau) / (std::exp(sg / tau) + std::exp(spb / tau)));
        track(std::fabs(contrastive_loss(r, gvec, pv, tau) - expect));

        // diversity (batch of 4)
        Tensor feats = testutil::random_matrix(4, 3, rng);
        Tensor noise = testutil::random_matrix(4, 2, rng);
        double s = 0.0;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double dx = 0.0, dz = 0.0;
                for (int c = 0; c < 3; ++c) {
                    const double d = feats.at(i, c) - feats.at(j, c);
                    dx += d * d;
                }
                for (int c = 0; c < 2; ++c) {
                    const double d = noise.at(i, c) - noise.at(j, c);
                    dz += d * d;
                }
                s += -std::sqrt(dx) * std::sqrt(dz);
            }
        track(std::fabs(diversity_loss(feats, noise) - std::exp(s / 16.0)));

        // align losses
        MapperConfig mcfg;
        mcfg.dim = 4;
        mcfg.mapper_hidden = {6};
        mcfg.disc_hidden = {6};
        Rng mrng(3000 + static_cast<std::uint64_t>(trial));
        MapperState st = make_mapper(mcfg, mrng);
        Tensor real = testutil::random_matrix(1, 4, mrng);
        Tensor mapped = testutil::random_matrix(1, 4, mrng);
        auto dout = [&](const Tensor& x) {
            std::vector<double> in(x.data.begin(), x.data.end());
            auto v = testutil::ref_mlp(st.disc, "adisc", in, testutil::RefAct::leaky_relu,
                                       testutil::RefAct::none);
            return 1.0 / (1.0 + std::exp(-v[0]));
        };
        const double dr = dout(real);
        const double dm = dout(mapped);
        track(std::fabs(align_disc_loss(st, real, mapped) -
                        ((dr - 1.0) * (dr - 1.0) + dm * dm)));
        track(std::fabs(align_gen_loss(st, real, mapped) -
                        ((dr - 1.0) * (dr - 1.0) + (dm - 1.0) * (dm - 1.0))));
    }

    std::ostringstream os;
    os << "kl/cls/contrastive/diversity/align vs direct summation, max abs err " << worst;
    detail = os.str();
    return worst < 1e-10;
}

// ---- criterion 3: composite decomposition ---------------------------------------

bool composite_decomposition(std::string& detail) {
    Rng rng(31337);
    double worst = 0.0;
    auto track = [&](double err) { worst = std::max(worst, err); };

    for (int trial = 0; trial < 20; ++trial) {
        ExtractorConfig ecfg = tiny_ext();
        DiscriminatorConfig dcfg = tiny_disc(ecfg.feature_dim);
        GeneratorConfig gcfg = tiny_gen(ecfg.feature_dim);
        ParamSet d1 = make_discriminator(dcfg, rng);
        ParamSet d2 = make_discriminator(dcfg, rng);
        ParamSet ext = make_extractor(ecfg, rng);
        ParamSet glo = make_extractor(ecfg, rng);
        ParamSet prev = make_extractor(ecfg, rng);
        ParamSet gk = make_generator(gcfg, rng);
        ParamSet g = make_generator(gcfg, rng);

        LossWeights w;
        w.alpha_kd = 0.3 + rng.uniform();
        w.gamma = 0.3 + rng.uniform();
        w.mu = 0.3 + rng.uniform();
        w.tau = 0.3 + rng.uniform();

        const int batch = 3;

        // ---- Eq. 10 against a full reference recomputation
        DiscBatch db;
        db.reps = testutil::random_matrix(batch, ecfg.feature_dim, rng);
        db.labels = {0, 1, 1};
        db.pseudo_global = testutil::random_matrix(batch, ecfg.feature_dim, rng);
        db.pseudo_local = testutil::random_matrix(batch, ecfg.feature_dim, rng);
        db.pseudo_local_labels = {1, 0, 1};
        {
            Tape tape;
            Var total = disc_total_loss_t(tape, bind_frozen(tape, d1),
                                          bind_frozen(tape, d2), db, w)
                            .total;
            double cls = 0.0;
            for (const ParamSet* d : {&d1, &d2}) {
                double ce = 0.0;
                for (int i = 0; i < batch; ++i) {
                    ce += testutil::ref_cross_entropy(ref_disc_row(*d, db.reps, i),
                                                      db.labels[static_cast<size_t>(i)]);
                    ce += testutil::ref_cross_entropy(ref_disc_row(*d, db.pseudo_global, i),
                                                      db.labels[static_cast<size_t>(i)]);
                }
                cls += 0.5 * ce / (2.0 * batch);
            }
            auto mean_kl = [&](const ParamSet& da, const ParamSet& dbp, const Tensor& xa,
                               const Tensor& xb) {
                double acc = 0.0;
                for (int i = 0; i < batch; ++i)
                    acc += testutil::ref_kl(
                        testutil::ref_softmax(ref_disc_row(da, xa, i)),
                        testutil::ref_softmax(ref_disc_row(dbp, xb, i)));
                return acc / batch;
            };
            const double dis1 = mean_kl(d1, d1, db.reps, db.pseudo_global);
            const double dis2 = mean_kl(d2, d2, db.reps, db.pseudo_global);
            const double advg = mean_kl(d1, d2, db.pseudo_local, db.pseudo_local);
            const double adv = mean_kl(d1, d2, db.reps, db.reps);
            const double expect =
                cls + w.alpha_kd * (dis1 + dis2) + w.gamma * (advg - adv);
            track(std::fabs(total.scalar() - expect));
        }

        // ---- Eq. 12 against reference extractor + disc forwards
        std::vector<UserRecord> users;
        for (int i = 0; i < batch; ++i) users.push_back(random_user(ecfg, rng, 1 + rng.uniform_int(2)));
        ExtractorBatch eb;
        for (auto& u : users) {
            eb.users.push_back(&u);
            eb.labels.push_back(u.label);
        }
        {
            Tape tape;
            Bound be = bind_trainable(tape, ext);
            Var total = extractor_total_loss_t(tape, be, bind_frozen(tape, d1),
                                               bind_frozen(tape, d2), glo, prev, eb, w,
                                               ecfg)
                            .total;
            double cls = 0.0, adv = 0.0, con = 0.0;
            for (int i = 0; i < batch; ++i) {
                auto r = testutil::ref_extractor_forward(ext, users[static_cast<size_t>(i)].props,
                                                         users[static_cast<size_t>(i)].tweets,
                                                         ecfg.tweet_embed_dim);
                auto rg = testutil::ref_extractor_forward(glo, users[static_cast<size_t>(i)].props,
                                                          users[static_cast<size_t>(i)].tweets,
                                                          ecfg.tweet_embed_dim);
                auto rp = testutil::ref_extractor_forward(prev, users[static_cast<size_t>(i)].props,
                                                          users[static_cast<size_t>(i)].tweets,
                                                          ecfg.tweet_embed_dim);
                auto l1 = testutil::ref_mlp(d1, "disc", r, testutil::RefAct::leaky_relu,
                                            testutil::RefAct::none);
                auto l2 = testutil::ref_mlp(d2, "disc", r, testutil::RefAct::leaky_relu,
                                            testutil::RefAct::none);
                cls += testutil::ref_cross_entropy(l1, users[static_cast<size_t>(i)].label);
                adv += testutil::ref_kl(testutil::ref_softmax(l1), testutil::ref_softmax(l2));
                const double sg = testutil::ref_cosine(r, rg);
                const double sp = testutil::ref_cosine(r, rp);
                con += -std::log(std::exp(sg / w.tau) /
                                 (std::exp(sg / w.tau) + std::exp(sp / w.tau)));
            }
            const double expect = cls / batch + w.gamma * adv / batch + w.mu * con / batch;
            track(std::fabs(total.scalar() - expect));
        }

        // ---- Eq. 14 against reference generator + disc forwards
        Tensor z = testutil::random_matrix(batch, gcfg.noise_dim, rng);
        std::vector<int> zl = {0, 1, 0};
        {
            Tape tape;
            Var total = local_gen_loss_t(tape, bind_trainable(tape, gk), gcfg,
                                         bind_frozen(tape, d1), bind_frozen(tape, d2), z, zl)
                            .total;
            Tensor feats = generator_batch(gk, gcfg, z, zl);
            // reference feats as well
            double ref_err = 0.0;
            for (int i = 0; i < batch; ++i) {
                std::vector<double> in;
                for (int c = 0; c < gcfg.noise_dim; ++c) in.push_back(z.at(i, c));
                in.push_back(zl[static_cast<size_t>(i)] == 0 ? 1.0 : 0.0);
                in.push_back(zl[static_cast<size_t>(i)] == 1 ? 1.0 : 0.0);
                auto rf = testutil::ref_mlp(gk, "gen", in, testutil::RefAct::relu,
                                            testutil::RefAct::tanh);
                for (int c = 0; c < gcfg.feature_dim; ++c)
                    ref_err = std::max(ref_err, std::fabs(rf[static_cast<size_t>(c)] - feats.at(i, c)));
            }
            track(ref_err);
            double cls = 0.0, advg = 0.0;
            for (int i = 0; i < batch; ++i) {
                auto l1 = ref_disc_row(d1, feats, i);
                auto l2 = ref_disc_row(d2, feats, i);
                cls += 0.5 * (testutil::ref_cross_entropy(l1, zl[static_cast<size_t>(i)]) +
                              testutil::ref_cross_entropy(l2, zl[static_cast<size_t>(i)]));
                advg += testutil::ref_kl(testutil::ref_softmax(l1), testutil::ref_softmax(l2));
            }
            double s = 0.0;
            for (int i = 0; i < batch; ++i)
                for (int j = 0; j < batch; ++j) {
                    double dx = 0.0, dz = 0.0;
                    for (int c = 0; c < gcfg.feature_dim; ++c) {
                        const double d = feats.at(i, c) - feats.at(j, c);
                        dx += d * d;
                    }
                    for (int c = 0; c < gcfg.noise_dim; ++c) {
                        const double d = z.at(i, c) - z.at(j, c);
                        dz += d * d;
                    }
                    s += -std::sqrt(dx) * std::sqrt(dz);
                }
            const double var = std::exp(s / (batch * batch));
            const double expect = cls / batch - advg / batch + var;
            track(std::fabs(total.scalar() - expect));
        }

        // ---- Eq. 16 against a per-term recomputation
        LabelStats stats;
        stats.counts = {{5 + rng.uniform_int(10), rng.uniform_int(5)},
                        {rng.uniform_int(5), 5 + rng.uniform_int(10)}};
        GlobalGenBatch gb;
        gb.noise = testutil::random_matrix(batch, gcfg.noise_dim, rng);
        gb.labels = {1, 0, 1};
        {
            Tape tape2;
            Var loss2 = global_gen_loss_t(tape2, {{0, &d1}, {1, &d2}},
                                          bind_frozen(tape2, d2), bind_trainable(tape2, gk),
                                          gcfg, stats, gb);
            Tensor feats = generator_batch(gk, gcfg, gb.noise, gb.labels);
            double expect = 0.0;
            const std::vector<const ParamSet*> teachers = {&d1, &d2};
            for (int k = 0; k < 2; ++k)
                for (int i = 0; i < batch; ++i) {
                    const int y = gb.labels[static_cast<size_t>(i)];
                    const double a = stats.alpha(k, y);
                    auto tl = ref_disc_row(*teachers[static_cast<size_t>(k)], feats, i);
                    auto dl = ref_disc_row(d2, feats, i);
                    expect += a * (testutil::ref_kl(testutil::ref_softmax(tl),
                                                    testutil::ref_softmax(dl)) +
                                   testutil::ref_cross_entropy(tl, y));
                }
            expect /= 2.0;
            track(std::fabs(loss2.scalar() - expect));
        }
    }

    std::ostringstream os;
    os << "Eq.10/12/14/16 vs component-sum oracles (signs included), max abs err "
       << worst;
    detail = os.str();
    return worst < 1e-10;
}

// ---- criterion 4: aggregation exactness ------------------------------------------

bool aggregation_exactness(std::string& detail) {
    Rng rng(44);
    double worst = 0.0;
    bool perm_ok = true;
    for (int trial = 0; trial < 50; ++trial) {
        const int n_updates = 2 + rng.uniform_int(5);
        std::vector<ClientUpdate> updates;
        for (int k = 0; k < n_updates; ++k) {
            ClientUpdate u;
            u.client_id = k;
            Rng prng(500 + static_cast<std::uint64_t>(trial) * 31 + static_cast<std::uint64_t>(k));
            u.extractor = make_mlp("e", {3, 4, 2}, prng);
            u.d1 = make_mlp("d", {2, 3, 2}, prng);
            u.n_k = rng.uniform_int(40);
            u.counts = {u.n_k / 2, u.n_k - u.n_k / 2};
            updates.push_back(std::move(u));
        }
        std::int64_t total = 0;
        for (const auto& u : updates) total += u.n_k;
        if (total == 0) updates[0].n_k = 1, total = 1;

        auto [ext, d1] = aggregate(updates);
        for (size_t e = 0; e < ext.entries.size(); ++e)
            for (size_t i = 0; i < ext.entries[e].tensor.data.size(); ++i) {
                double expect = 0.0;
                for (const auto& u : updates)
                    expect += static_cast<double>(u.n_k) / static_cast<double>(total) *
                              u.extractor.entries[e].tensor.data[i];
                worst = std::max(worst,
                                 std::fabs(ext.entries[e].tensor.data[i] - expect));
            }

        // permutation invariance, bit-exact
        std::vector<ClientUpdate> shuffled = updates;
        rng.shuffle(shuffled);
        auto [ext2, d12] = aggregate(shuffled);
        for (size_t e = 0; e < ext.entries.size(); ++e)
            if (ext.entries[e].tensor.data != ext2.entries[e].tensor.data ||
                d1.entries[e < d1.entries.size() ? e : 0].tensor.data !=
                    d12.entries[e < d12.entries.size() ? e : 0].tensor.data)
                perm_ok = false;
    }
    std::ostringstream os;
    os << "weighted-average vs oracle, max abs err " << worst
       << "; permutation invariance " << (perm_ok ? "bit-exact" : "VIOLATED");
    detail = os.str();
    return worst < 1e-12 && perm_ok;
}

// ---- criterion 5: partition statistics -------------------------------------------

bool partition_statistics(std::string& detail) {
    SynthSpec spec;
    spec.n_users = 500;
    spec.prop_dim = 4;
    spec.embed_dim = 4;
    spec.tweets_min = 1;
    spec.tweets_max = 2;
    spec.class_sep = 1.0;
    spec.seed = 7;
    Dataset ds = synth_dataset(spec);

    bool partition_ok = true;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        PartitionSpec ps;
        ps.n_clients = 9;
        ps.concentration = 0.2;
        ps.seed = seed;
        Partition p = dirichlet_partition(ds, ps);
        std::vector<bool> seen(ds.users.size(), false);
        size_t total = 0;
        for (const auto& shard : p.shards) {
            total += shard.size();
            for (int idx : shard) {
                if (seen[static_cast<size_t>(idx)]) partition_ok = false;
                seen[static_cast<size_t>(idx)] = true;
            }
        }
        if (total != ds.users.size()) partition_ok = false;
    }

    auto mean_max_share = [&](double conc) {
        double acc = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            PartitionSpec ps;
            ps.n_clients = 10;
            ps.concentration = conc;
            ps.seed = seed;
            Partition p = dirichlet_partition(ds, ps);
            LabelStats stats = label_counts(ds, p.shards);
            double per_class = 0.0;
            for (int y = 0; y < 2; ++y) {
                double mx = 0.0;
                for (int k = 0; k < 10; ++k) mx = std::max(mx, stats.alpha(k, y));
                per_class += mx;
            }
            acc += per_class / 2.0;
        }
        return acc / 20.0;
    };
    const double share_01 = mean_max_share(0.1);
    const double share_10 = mean_max_share(1.0);

    bool ratios_exact = true;
    {
        PartitionSpec ps;
        ps.n_clients = 6;
        ps.concentration = 0.5;
        ps.seed = 3;
        Partition p = dirichlet_partition(ds, ps);
        LabelStats stats = label_counts(ds, p.shards);
        for (int y = 0; y < 2; ++y) {
            double col = 0.0;
            for (int k = 0; k < 6; ++k) col += stats.alpha(k, y);
            if (stats.label_total(y) > 0 && std::fabs(col - 1.0) > 1e-15)
                ratios_exact = false;
        }
        if (std::fabs(stats.p_y(0) + stats.p_y(1) - 1.0) > 1e-15) ratios_exact = false;
    }

    std::ostringstream os;
    os << "100-seed exhaustive/disjoint " << (partition_ok ? "ok" : "VIOLATED")
       << "; max-share at conc 0.1 = " << share_01 << " > " << share_10
       << " at 1.0; ratio renormalization " << (ratios_exact ? "exact" : "VIOLATED");
    detail = os.str();
    return partition_ok && share_01 > share_10 && ratios_exact;
}

// ---- criteria 6-8: directional experiments ---------------------------------------

ExperimentConfig scenario_config(const fs::path& out) {
    ExperimentConfig cfg;
    cfg.synth.n_users = 2000;
    cfg.synth.prop_dim = 8;
    cfg.synth.embed_dim = 16;
    cfg.synth.tweets_min = 2;
    cfg.synth.tweets_max = 6;
    cfg.synth.class_sep = 2.0;
    cfg.partition.n_clients = 10;
    cfg.partition.concentration = 0.1;
    cfg.rounds = 30;
    cfg.local_steps = 5;
    cfg.batch = 64;
    cfg.lr = 0.01;
    cfg.weights.alpha_kd = 1.0;
    cfg.weights.gamma = 0.5;
    cfg.weights.mu = 0.5;
    cfg.weights.tau = 0.5;
    cfg.select_fraction = 0.5;
    cfg.seeds = {0, 1, 2};
    cfg.out_dir = out.string();
    cfg.model.hidden = 32;
    cfg.model.feature_dim = 16;
    cfg.model.attention_dim = 16;
    cfg.model.noise_dim = 8;
    cfg.model.disc_hidden = {32, 32};
    cfg.model.gen_hidden = {32};
    cfg.parallel_clients = true;
    return cfg;
}

struct ScenarioRuns {
    std::vector<RunResult> fedack, fedack_a, fedavg;
    double wall_seconds = 0.0;
};

double mean_max(const std::vector<RunResult>& runs) {
    double s = 0.0;
    for (const auto& r : runs) s += r.max_accuracy;
    return s / static_cast<double>(runs.size());
}

ScenarioRuns run_scenario(const fs::path& out) {
    const double t0 = now_seconds();
    ScenarioRuns runs;
    ExperimentConfig cfg = scenario_config(out);
    for (std::uint64_t seed : cfg.seeds) {
        ExperimentConfig c = cfg;
        c.method = Method::fedack;
        runs.fedack.push_back(run_single(c, seed, out / "fedack" / ("seed_" + std::to_string(seed))));
        c.method = Method::fedack_a;
        runs.fedack_a.push_back(
            run_single(c, seed, out / "fedack_a" / ("seed_" + std::to_string(seed))));
        c.method = Method::fedavg;
        runs.fedavg.push_back(run_single(c, seed, out / "fedavg" / ("seed_" + std::to_string(seed))));
    }
    runs.wall_seconds = now_seconds() - t0;
    return runs;
}

bool directional_experiment(const ScenarioRuns& runs, std::string& detail) {
    const double acc_fedack = mean_max(runs.fedack);
    const double acc_abl = mean_max(runs.fedack_a);
    const double acc_avg = mean_max(runs.fedavg);
    std::ostringstream os;
    os << "mean max accuracy: fedack " << acc_fedack << ", fedack_a " << acc_abl
       << ", fedavg " << acc_avg << " (need fedack >= fedavg+0.03 and >= fedack_a); "
       << runs.wall_seconds << " s";
    detail = os.str();
    return acc_fedack >= acc_avg + 0.03 && acc_fedack >= acc_abl &&
           runs.wall_seconds <= 600.0;
}

bool efficiency_proxy(const ScenarioRuns& runs, std::string& detail) {
    // target = FedAvg's final mean accuracy
    double target = 0.0;
    for (const auto& r : runs.fedavg) target += r.accuracy_curve.back();
    target /= static_cast<double>(runs.fedavg.size());
    target = std::min(std::max(target, 1e-6), 1.0 - 1e-6);

    auto mean_rt = [&](const std::vector<RunResult>& rs) {
        double acc = 0.0;
        for (const auto& r : rs) {
            auto rt = rounds_to_target(r.accuracy_curve, target);
            acc += rt ? static_cast<double>(*rt)
                      : static_cast<double>(r.accuracy_curve.size() + 1);
        }
        return acc / static_cast<double>(rs.size());
    };
    const double rt_fedack = mean_rt(runs.fedack);
    const double rt_fedavg = mean_rt(runs.fedavg);
    std::ostringstream os;
    os << "rounds to reach fedavg's final mean accuracy (" << target
       << "): fedack " << rt_fedack << ", fedavg " << rt_fedavg;
    detail = os.str();
    return rt_fedack <= rt_fedavg;
}

bool feature_consistency(const fs::path& out, std::string& detail) {
    ExperimentConfig cfg = scenario_config(out / "planar");
    cfg.model.feature_dim = 2;
    cfg.partition.concentration = 0.5;
    cfg.rounds = 15; // the consistency contrast stabilizes well before 30 rounds

    auto run_method = [&](Method m) {
        cfg.method = m;
        double score_sum = 0.0;
        for (std::uint64_t seed : cfg.seeds) {
            const fs::path dir =
                out / "planar" / method_to_string(m) / ("seed_" + std::to_string(seed));
            run_single(cfg, seed, dir);
            const fs::path csv = dir / "features.csv";
            cmd_export_features(dir, csv);
            score_sum += feature_consistency_score(csv);
        }
        return score_sum / static_cast<double>(cfg.seeds.size());
    };
    const double s_fedack = run_method(Method::fedack);
    const double s_fedavg = run_method(Method::fedavg);
    std::ostringstream os;
    os << "planar feature consistency: fedack " << s_fedack << " vs fedavg " << s_fedavg;
    detail = os.str();
    return s_fedack > s_fedavg;
}

// ---- criterion 9: cross-lingual alignment -----------------------------------------

bool alignment_recovery(std::string& detail) {
    const double t0 = now_seconds();
    auto pairs = synth_bilingual(500, 16, 6, 0.01, 0);
    MapperConfig cfg;
    cfg.dim = 16;
    auto [st0, rep0] = train_alignment(pairs, 0, 0, cfg);
    auto [st, rep] = train_alignment(pairs, 200, 0, cfg);
    const double elapsed = now_seconds() - t0;
    std::ostringstream os;
    os << "holdout cosine " << rep.final_holdout_cosine << " after " << rep.epochs
       << " epochs (init " << rep0.final_holdout_cosine << "), " << elapsed << " s";
    detail = os.str();
    return rep.final_holdout_cosine >= 0.9 && rep0.final_holdout_cosine < 0.3 &&
           elapsed < 60.0;
}

// ---- criterion 10: cross-process determinism ---------------------------------------

int child_train(const fs::path& dir, std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.synth.n_users = 200;
    cfg.synth.prop_dim = 4;
    cfg.synth.embed_dim = 6;
    cfg.synth.tweets_min = 1;
    cfg.synth.tweets_max = 3;
    cfg.synth.class_sep = 2.0;
    cfg.partition.n_clients = 4;
    cfg.partition.concentration = 0.3;
    cfg.rounds = 3;
    cfg.local_steps = 4;
    cfg.batch = 32;
    cfg.seeds = {seed};
    cfg.out_dir = dir.string();
    cfg.model.hidden = 12;
    cfg.model.feature_dim = 6;
    cfg.model.attention_dim = 6;
    cfg.model.noise_dim = 4;
    cfg.model.disc_hidden = {12};
    cfg.model.gen_hidden = {12};
    cfg.method = Method::fedack;
    run_single(cfg, seed, dir);
    return 0;
}

bool determinism(const char* self, const fs::path& out, std::string& detail) {
    const fs::path a = out / "det_a";
    const fs::path b = out / "det_b";
    fs::create_directories(out);
    const std::string cmd_a =
        std::string(self) + " --child-train " + a.string() + " 5 > /dev/null 2>&1";
    const std::string cmd_b =
        std::string(self) + " --child-train " + b.string() + " 5 > /dev/null 2>&1";
    if (std::system(cmd_a.c_str()) != 0 || std::system(cmd_b.c_str()) != 0) {
        detail = "child training process failed";
        return false;
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)),
                           std::istreambuf_iterator<char>());
    };
    const std::string ca = slurp(a / "metrics.csv");
    const std::string cb = slurp(b / "metrics.csv");
    detail = "two process invocations, metrics.csv " +
             std::string(ca == cb && !ca.empty() ? "byte-identical (" +
                                                       std::to_string(ca.size()) + " bytes)"
                                                 : "DIFFER");
    return !ca.empty() && ca == cb;
}

} // namespace

int main(int argc, char** argv) {
    if (argc == 4 && std::string(argv[1]) == "--child-train")
        return child_train(argv[2], std::stoull(argv[3]));

    fs::path out = fs::current_path() / "acceptance_out";
    fs::remove_all(out);
    fs::create_directories(out);

    std::string detail;

    try {
        report(1, grad_check_all(detail), detail);
        report(2, loss_oracles(detail), detail);
        report(3, composite_decomposition(detail), detail);
        report(4, aggregation_exactness(detail), detail);
        report(5, partition_statistics(detail), detail);

        ScenarioRuns runs = run_scenario(out / "scenario");
        report(6, directional_experiment(runs, detail), detail);
        report(7, efficiency_proxy(runs, detail), detail);
        report(8, feature_consistency(out, detail), detail);
        report(9, alignment_recovery(detail), detail);
        report(10, determinism(argv[0], out, detail), detail);
    } catch (const std::exception& e) {
        std::cout << "[FAIL] acceptance aborted: " << e.what() << std::endl;
        return 1;
    }

    std::cout << (g_failures == 0 ? "all criteria passed"
                                  : std::to_string(g_failures) + " criteria failed")
              << std::endl;
    return g_failures == 0 ? 0 : 1;
}
