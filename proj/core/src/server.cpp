#include "fedack/server.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>

#include "json.hpp"

#include "fedack/common.hpp"

namespace fedack {

std::vector<int> select_clients(const SelectionPolicy& policy, int n_clients, int round) {
    check(n_clients >= 1, "select_clients: need at least one client");
    check(policy.fraction > 0.0 && policy.fraction <= 1.0,
          "select_clients: fraction must be in (0, 1]");
    const int n_sel = std::max(
        1, static_cast<int>(std::llround(policy.fraction * n_clients)));
    std::vector<int> ids(static_cast<size_t>(n_clients));
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng = Rng::derive(policy.seed, 0x5E1u, static_cast<std::uint64_t>(round));
    // Partial Fisher-Yates: the first n_sel slots become the sample.
    for (int i = 0; i < n_sel; ++i) {
        const int j = i + rng.uniform_int(n_clients - i);
        std::swap(ids[static_cast<size_t>(i)], ids[static_cast<size_t>(j)]);
    }
    ids.resize(static_cast<size_t>(n_sel));
    std::sort(ids.begin(), ids.end());
    return ids;
}

std::pair<ParamSet, ParamSet> aggregate(const std::vector<const ClientUpdate*>& updates) {
    check(!updates.empty(), "aggregate: no updates");
    std::vector<const ClientUpdate*> ordered = updates;
    std::sort(ordered.begin(), ordered.end(),
              [](const ClientUpdate* a, const ClientUpdate* b) {
                  return a->client_id < b->client_id;
              });
    for (size_t i = 1; i < ordered.size(); ++i)
        check(ordered[i]->client_id != ordered[i - 1]->client_id,
              "aggregate: duplicate client id " + std::to_string(ordered[i]->client_id));

    std::int64_t total = 0;
    for (const auto* u : ordered) total += u->n_k;
    std::vector<double> weights(ordered.size());
    if (total == 0) {
        warn("aggregate: all shard sizes are zero, falling back to unweighted mean");
        for (auto& w : weights) w = 1.0 / static_cast<double>(ordered.size());
    } else {
        for (size_t i = 0; i < ordered.size(); ++i)
            weights[i] = static_cast<double>(ordered[i]->n_k) / static_cast<double>(total);
    }

    ParamSet ext = ordered[0]->extractor;
    ParamSet disc = ordered[0]->d1;
    scale_params(ext, weights[0]);
    scale_params(disc, weights[0]);
    for (size_t i = 1; i < ordered.size(); ++i) {
        axpy(ext, weights[i], ordered[i]->extractor);
        axpy(disc, weights[i], ordered[i]->d1);
    }
    check(ext.all_finite() && disc.all_finite(), "aggregate: non-finite parameters");
    return {std::move(ext), std::move(disc)};
}

std::pair<ParamSet, ParamSet> aggregate(const std::vector<ClientUpdate>& updates) {
    std::vector<const ClientUpdate*> ptrs;
    ptrs.reserve(updates.size());
    for (const auto& u : updates) ptrs.push_back(&u);
    return aggregate(ptrs);
}

ServerState make_server(const ClientModels& models, std::uint64_t seed) {
    ServerState st;
    st.ext_cfg = models.extractor;
    st.gen_cfg = models.gen;
    Rng rng_ext = Rng::derive(seed, 0xE07u);
    st.global_extractor = make_extractor(models.extractor, rng_ext);
    Rng rng_d = Rng::derive(seed, 0xD1u);
    st.global_disc = make_discriminator(models.d1, rng_d);
    Rng rng_g = Rng::derive(seed, 0x66u);
    st.global_gen = make_generator(models.gen, rng_g);
    st.gen_opt = AdamState::init(st.global_gen, {});
    return st;
}

void distill_global_generator(ServerState& state,
                              const std::vector<std::pair<int, const ParamSet*>>& teachers,
                              const LabelStats& stats, const DistillConfig& cfg,
                              double lr, Rng& rng) {
    if (cfg.steps <= 0 || teachers.empty()) return;
    const double p1 = stats.p_y(1);
    for (int y = 0; y < 2; ++y)
        if (stats.label_total(y) == 0)
            warn("distill: label " + std::to_string(y) +
                 " absent from participating shards; it will never be sampled");

    state.gen_opt.cfg.lr = lr;
    if (cfg.finetune_disc && !state.disc_opt)
        state.disc_opt = AdamState::init(state.global_disc, {lr});

    for (int step = 0; step < cfg.steps; ++step) {
        GlobalGenBatch batch;
        batch.noise = sample_noise(cfg.batch, state.gen_cfg.noise_dim, rng);
        batch.labels.resize(static_cast<size_t>(cfg.batch));
        for (auto& y : batch.labels) y = rng.uniform() < p1 ? 1 : 0;

        Tape tape;
        Bound gen = bind_trainable(tape, state.global_gen);
        Bound disc = cfg.finetune_disc ? bind_trainable(tape, state.global_disc)
                                       : bind_frozen(tape, state.global_disc);
        Var loss = global_gen_loss_t(tape, teachers, disc, gen, state.gen_cfg, stats, batch);
        check(std::isfinite(loss.scalar()), "distill: non-finite loss");
        state.global_gen.zero_grad();
        if (cfg.finetune_disc) state.global_disc.zero_grad();
        tape.backward(loss);
        adam_step(state.global_gen, state.gen_opt);
        if (cfg.finetune_disc) {
            state.disc_opt->cfg.lr = lr;
            adam_step(state.global_disc, *state.disc_opt);
        }
    }
}

double evaluate_accuracy(const ParamSet& extractor, const ParamSet& disc,
                         const Dataset& ds, const std::vector<int>& test_idx,
                         const ExtractorConfig& cfg) {
    check(!test_idx.empty(), "evaluate_accuracy: empty test set");
    const size_t chunk = 256;
    std::int64_t correct = 0;
    for (size_t start = 0; start < test_idx.size(); start += chunk) {
        const size_t end = std::min(test_idx.size(), start + chunk);
        std::vector<const UserRecord*> users;
        users.reserve(end - start);
        for (size_t i = start; i < end; ++i)
            users.push_back(&ds.users[static_cast<size_t>(test_idx[i])]);
        Tensor reps = extractor_batch(extractor, users, cfg);
        Tensor logits = discriminator_forward(disc, reps);
        for (size_t i = 0; i < users.size(); ++i) {
            int best = 0;
            for (int c = 1; c < logits.cols(); ++c)
                if (logits.at(static_cast<int>(i), c) > logits.at(static_cast<int>(i), best))
                    best = c;
            if (best == users[i]->label) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(test_idx.size());
}

namespace {

std::vector<LocalRoundResult> run_clients(std::vector<ClientState>& clients,
                                          const std::vector<int>& selected,
                                          const Broadcast& msg, const RunContext& ctx,
                                          bool baseline, Strategy strategy) {
    std::vector<LocalRoundResult> results(selected.size());
    auto work = [&](size_t i) {
        ClientState& st = clients[static_cast<size_t>(selected[i])];
        results[i] = baseline
                         ? baseline_local_round(st, msg, ctx.train, strategy,
                                                ctx.fedprox_rho, ctx.global_seed)
                         : local_round(st, msg, ctx.train, ctx.global_seed);
    };
    if (ctx.parallel_clients && selected.size() > 1) {
        std::vector<std::future<void>> futures;
        futures.reserve(selected.size());
        for (size_t i = 0; i < selected.size(); ++i)
            futures.push_back(std::async(std::launch::async, work, i));
        for (auto& f : futures) f.get(); // any client failure aborts the round
    } else {
        for (size_t i = 0; i < selected.size(); ++i) work(i);
    }
    return results;
}

RoundReport build_report(int round, double accuracy,
                         const std::vector<int>& participants,
                         const std::vector<LocalRoundResult>& results, bool baseline) {
    RoundReport rep;
    rep.round = round;
    rep.accuracy = accuracy;
    rep.participants = participants;
    double loss_sum = 0.0;
    int counted = 0;
    for (const auto& r : results) {
        rep.label_counts.push_back({r.update.counts[0], r.update.counts[1]});
        const StageStats& s = baseline ? r.stage1 : r.stage2;
        if (s.steps > 0) {
            loss_sum += s.mean_loss;
            ++counted;
        }
    }
    if (counted > 0) rep.mean_loss = loss_sum / counted;
    return rep;
}

} // namespace

RoundReport run_round(ServerState& state, std::vector<ClientState>& clients,
                      const RunContext& ctx) {
    check(ctx.dataset != nullptr, "run_round: null dataset");
    const int t = state.round + 1;
    const auto selected = select_clients(ctx.selection, static_cast<int>(clients.size()), t);

    Broadcast msg;
    msg.global_gen = state.global_gen;
    msg.global_extractor = state.global_extractor;
    msg.global_disc = state.global_disc;
    msg.round = t;

    auto results = run_clients(clients, selected, msg, ctx, false, Strategy::fedavg);

    std::vector<const ClientUpdate*> updates;
    updates.reserve(results.size());
    for (const auto& r : results) updates.push_back(&r.update);
    auto [ext, disc] = aggregate(updates);
    state.global_extractor = std::move(ext);
    state.global_disc = std::move(disc);

    // Label statistics of this round's participants drive the distillation.
    LabelStats stats;
    stats.counts.assign(clients.size(), {0, 0});
    std::vector<std::pair<int, const ParamSet*>> teachers;
    for (const auto& r : results) {
        stats.counts[static_cast<size_t>(r.update.client_id)] = r.update.counts;
        teachers.emplace_back(r.update.client_id, &r.update.d1);
    }
    state.stats = stats;
    Rng distill_rng = Rng::derive(ctx.global_seed, 0xD157u, static_cast<std::uint64_t>(t));
    distill_global_generator(state, teachers, stats, ctx.distill, ctx.train.lr, distill_rng);

    const double acc = evaluate_accuracy(state.global_extractor, state.global_disc,
                                         *ctx.dataset, ctx.test_idx, state.ext_cfg);
    state.round = t;
    return build_report(t, acc, selected, results, false);
}

RoundReport baseline_round(ServerState& state, std::vector<ClientState>& clients,
                           Strategy strategy, const RunContext& ctx) {
    check(ctx.dataset != nullptr, "baseline_round: null dataset");
    const int t = state.round + 1;
    const auto selected = select_clients(ctx.selection, static_cast<int>(clients.size()), t);

    Broadcast msg;
    msg.global_gen = state.global_gen;
    msg.global_extractor = state.global_extractor;
    msg.global_disc = state.global_disc;
    msg.round = t;

    auto results = run_clients(clients, selected, msg, ctx, true, strategy);

    std::vector<const ClientUpdate*> updates;
    updates.reserve(results.size());
    for (const auto& r : results) updates.push_back(&r.update);
    auto [ext, disc] = aggregate(updates);
    state.global_extractor = std::move(ext);
    state.global_disc = std::move(disc);

    const double acc = evaluate_accuracy(state.global_extractor, state.global_disc,
                                         *ctx.dataset, ctx.test_idx, state.ext_cfg);
    state.round = t;
    return build_report(t, acc, selected, results, true);
}

std::string RoundReport::to_json() const {
    nlohmann::ordered_json j;
    j["round"] = round;
    j["accuracy"] = accuracy;
    j["mean_loss"] = mean_loss;
    j["participants"] = participants;
    auto counts = nlohmann::ordered_json::array();
    for (const auto& c : label_counts) counts.push_back({c[0], c[1]});
    j["label_counts"] = std::move(counts);
    return j.dump();
}

} // namespace fedack
