#include "fedack/client.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"

#include "fedack/common.hpp"

namespace fedack {

namespace {

constexpr std::uint64_t kStage1Tag = 1;
constexpr std::uint64_t kStage2Tag = 2;
constexpr std::uint64_t kStage3Tag = 3;

// Uniform sample without replacement of up to `batch` shard indices.
std::vector<int> sample_batch(const std::vector<int>& shard, int batch, Rng& rng) {
    std::vector<int> order = shard;
    if (static_cast<int>(order.size()) <= batch) {
        rng.shuffle(order);
        return order;
    }
    for (int i = 0; i < batch; ++i) {
        const int j = i + rng.uniform_int(static_cast<int>(order.size()) - i);
        std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
    }
    order.resize(static_cast<size_t>(batch));
    return order;
}

} // namespace

std::array<std::int64_t, 2> ClientState::shard_label_counts() const {
    std::array<std::int64_t, 2> counts{0, 0};
    for (int idx : shard)
        counts[static_cast<size_t>(dataset->users[static_cast<size_t>(idx)].label)] += 1;
    return counts;
}

ClientState make_client(int client_id, const Dataset* dataset, std::vector<int> shard,
                        const ClientModels& models, const ParamSet& init_extractor,
                        const ParamSet& init_d1, std::uint64_t init_seed) {
    check(dataset != nullptr, "make_client: null dataset");
    ClientState st;
    st.client_id = client_id;
    st.dataset = dataset;
    st.shard = std::move(shard);
    st.models = models;
    st.extractor = init_extractor;
    st.d1 = init_d1;
    // D2 starts from the shared discriminator weights when the architectures
    // agree: the adversarial pair then separates gradually through training
    // instead of fighting from two unrelated random draws.
    Rng rng_d2 = Rng::derive(init_seed, 0xD2u, static_cast<std::uint64_t>(client_id));
    ParamSet d2_fresh = make_discriminator(models.d2, rng_d2);
    st.d2 = d2_fresh.compatible_with(init_d1) ? init_d1 : std::move(d2_fresh);
    Rng rng_gk = Rng::derive(init_seed, 0x6Bu, static_cast<std::uint64_t>(client_id));
    st.local_gen = make_generator(models.gen, rng_gk);
    st.extractor_prev = st.extractor; // round 1 uses the initial extractor
    st.global_extractor_frozen = st.extractor;
    st.opt_d1 = AdamState::init(st.d1, {});
    st.opt_d2 = AdamState::init(st.d2, {});
    st.opt_extractor = AdamState::init(st.extractor, {});
    st.opt_gen = AdamState::init(st.local_gen, {});
    return st;
}

void receive_broadcast(ClientState& state, const Broadcast& msg) {
    check(state.extractor.compatible_with(msg.global_extractor),
          "receive_broadcast: extractor incompatible with broadcast");
    check(state.d1.compatible_with(msg.global_disc),
          "receive_broadcast: D1 incompatible with broadcast");
    state.extractor = msg.global_extractor;
    state.d1 = msg.global_disc;
    state.global_extractor_frozen = msg.global_extractor;
    state.global_gen_cache = msg.global_gen;
    state.opt_d1 = AdamState::init(state.d1, state.opt_d1.cfg);
    state.opt_d2 = AdamState::init(state.d2, state.opt_d2.cfg);
    state.opt_extractor = AdamState::init(state.extractor, state.opt_extractor.cfg);
    state.opt_gen = AdamState::init(state.local_gen, state.opt_gen.cfg);
}

StageStats stage1_train_discriminators(ClientState& state, const TrainParams& tp, Rng& rng) {
    StageStats stats;
    if (state.shard.empty()) {
        warn("client " + std::to_string(state.client_id) + ": empty shard, stage 1 skipped");
        return stats;
    }
    state.opt_d1.cfg.lr = tp.lr;
    state.opt_d2.cfg.lr = tp.lr;
    const auto& users = state.dataset->users;
    double loss_sum = 0.0;
    for (int step = 0; step < tp.steps; ++step) {
        {
            const auto mb = sample_batch(state.shard, tp.batch, rng);
            const int n = static_cast<int>(mb.size());
            DiscBatch batch;
            std::vector<const UserRecord*> ptrs;
            ptrs.reserve(mb.size());
            batch.labels.reserve(mb.size());
            for (int idx : mb) {
                ptrs.push_back(&users[static_cast<size_t>(idx)]);
                batch.labels.push_back(users[static_cast<size_t>(idx)].label);
            }
            batch.reps = extractor_batch(state.extractor, ptrs, state.models.extractor);
            // Global-generator pseudo data conditioned on the real batch labels.
            Tensor zg = sample_noise(n, state.models.gen.noise_dim, rng);
            batch.pseudo_global =
                generator_batch(state.global_gen_cache, state.models.gen, zg, batch.labels);
            // Local-generator pseudo data with uniform labels.
            Tensor zl = sample_noise(n, state.models.gen.noise_dim, rng);
            batch.pseudo_local_labels.resize(static_cast<size_t>(n));
            for (auto& y : batch.pseudo_local_labels) y = rng.uniform_int(2);
            batch.pseudo_local = generator_batch(state.local_gen, state.models.gen, zl,
                                                 batch.pseudo_local_labels);

            Tape tape;
            Bound d1 = bind_trainable(tape, state.d1);
            Bound d2 = bind_trainable(tape, state.d2);
            Var loss = disc_total_loss_t(tape, d1, d2, batch, tp.weights).total;
            check(std::isfinite(loss.scalar()),
                  "stage1: non-finite loss on client " + std::to_string(state.client_id));
            state.d1.zero_grad();
            state.d2.zero_grad();
            tape.backward(loss);
            adam_step(state.d1, state.opt_d1);
            adam_step(state.d2, state.opt_d2);
            loss_sum += loss.scalar();
            ++stats.steps;
        }
    }
    if (stats.steps > 0) stats.mean_loss = loss_sum / stats.steps;
    return stats;
}

StageStats stage2_train_extractor(ClientState& state, const TrainParams& tp, Rng& rng) {
    StageStats stats;
    if (state.shard.empty()) {
        warn("client " + std::to_string(state.client_id) + ": empty shard, stage 2 skipped");
        return stats;
    }
    state.opt_extractor.cfg.lr = tp.lr;
    const auto& users = state.dataset->users;
    double loss_sum = 0.0;
    for (int step = 0; step < tp.steps; ++step) {
        {
            const auto mb = sample_batch(state.shard, tp.batch, rng);
            ExtractorBatch batch;
            for (int idx : mb) {
                batch.users.push_back(&users[static_cast<size_t>(idx)]);
                batch.labels.push_back(users[static_cast<size_t>(idx)].label);
            }
            Tape tape;
            Bound ext = bind_trainable(tape, state.extractor);
            Bound d1 = bind_frozen(tape, state.d1);
            Bound d2 = bind_frozen(tape, state.d2);
            Var loss = extractor_total_loss_t(tape, ext, d1, d2,
                                              state.global_extractor_frozen,
                                              state.extractor_prev, batch, tp.weights,
                                              state.models.extractor)
                           .total;
            check(std::isfinite(loss.scalar()),
                  "stage2: non-finite loss on client " + std::to_string(state.client_id));
            state.extractor.zero_grad();
            tape.backward(loss);
            adam_step(state.extractor, state.opt_extractor);
            loss_sum += loss.scalar();
            ++stats.steps;
        }
    }
    if (stats.steps > 0) stats.mean_loss = loss_sum / stats.steps;
    return stats;
}

StageStats stage3_train_local_generator(ClientState& state, const TrainParams& tp, Rng& rng) {
    StageStats stats;
    if (state.shard.empty()) {
        warn("client " + std::to_string(state.client_id) + ": empty shard, stage 3 skipped");
        return stats;
    }
    state.opt_gen.cfg.lr = tp.lr;
    // Pseudo batches mirror the real batch size.
    const int batch_n = static_cast<int>(std::min<size_t>(state.shard.size(),
                                                          static_cast<size_t>(tp.batch)));
    double loss_sum = 0.0;
    for (int step = 0; step < tp.steps; ++step) {
        {
            Tensor z = sample_noise(batch_n, state.models.gen.noise_dim, rng);
            std::vector<int> labels(static_cast<size_t>(batch_n));
            for (auto& y : labels) y = rng.uniform_int(2);

            Tape tape;
            Bound gk = bind_trainable(tape, state.local_gen);
            Bound d1 = bind_frozen(tape, state.d1);
            Bound d2 = bind_frozen(tape, state.d2);
            Var loss =
                local_gen_loss_t(tape, gk, state.models.gen, d1, d2, z, labels).total;
            check(std::isfinite(loss.scalar()),
                  "stage3: non-finite loss on client " + std::to_string(state.client_id));
            state.local_gen.zero_grad();
            tape.backward(loss);
            adam_step(state.local_gen, state.opt_gen);
            loss_sum += loss.scalar();
            ++stats.steps;
        }
    }
    if (stats.steps > 0) stats.mean_loss = loss_sum / stats.steps;
    return stats;
}

LocalRoundResult local_round(ClientState& state, const Broadcast& msg,
                             const TrainParams& tp, std::uint64_t global_seed) {
    receive_broadcast(state, msg);
    LocalRoundResult res;
    {
        Rng rng = Rng::derive(global_seed, static_cast<std::uint64_t>(msg.round),
                              static_cast<std::uint64_t>(state.client_id), kStage1Tag);
        res.stage1 = stage1_train_discriminators(state, tp, rng);
    }
    {
        Rng rng = Rng::derive(global_seed, static_cast<std::uint64_t>(msg.round),
                              static_cast<std::uint64_t>(state.client_id), kStage2Tag);
        res.stage2 = stage2_train_extractor(state, tp, rng);
    }
    {
        Rng rng = Rng::derive(global_seed, static_cast<std::uint64_t>(msg.round),
                              static_cast<std::uint64_t>(state.client_id), kStage3Tag);
        res.stage3 = stage3_train_local_generator(state, tp, rng);
    }
    state.extractor_prev = state.extractor; // once per round, after stage 3

    res.update.client_id = state.client_id;
    res.update.extractor = state.extractor;
    res.update.d1 = state.d1;
    res.update.n_k = state.shard_size();
    res.update.counts = state.shard_label_counts();
    return res;
}

LocalRoundResult baseline_local_round(ClientState& state, const Broadcast& msg,
                                      const TrainParams& tp, Strategy strategy,
                                      double rho, std::uint64_t global_seed) {
    receive_broadcast(state, msg);
    LocalRoundResult res;
    Rng rng = Rng::derive(global_seed, static_cast<std::uint64_t>(msg.round),
                          static_cast<std::uint64_t>(state.client_id), kStage1Tag);
    StageStats stats;
    if (state.shard.empty()) {
        warn("client " + std::to_string(state.client_id) + ": empty shard, round skipped");
    } else {
        state.opt_extractor.cfg.lr = tp.lr;
        state.opt_d1.cfg.lr = tp.lr;
        const auto& users = state.dataset->users;
        double loss_sum = 0.0;
        for (int step = 0; step < tp.steps; ++step) {
            {
                const auto mb = sample_batch(state.shard, tp.batch, rng);
                std::vector<const UserRecord*> ptrs;
                std::vector<int> labels;
                for (int idx : mb) {
                    ptrs.push_back(&users[static_cast<size_t>(idx)]);
                    labels.push_back(users[static_cast<size_t>(idx)].label);
                }
                Tape tape;
                Bound ext = bind_trainable(tape, state.extractor);
                Bound d1 = bind_trainable(tape, state.d1);
                Var reps = extractor_batch_t(tape, ext, ptrs, state.models.extractor);
                Var loss =
                    cls_loss_t(tape, discriminator_forward_t(tape, d1, reps), labels);
                if (strategy == Strategy::fedprox && rho > 0.0) {
                    // (rho/2) * || theta - theta_broadcast ||^2 over both nets
                    Var prox;
                    bool first = true;
                    auto add_prox = [&](const Bound& bound, const ParamSet& anchor) {
                        for (size_t i = 0; i < bound.vars.size(); ++i) {
                            Tensor a = anchor.entries[i].tensor;
                            a.requires_grad = false;
                            a.grad.clear();
                            Var d = sub(bound.at(i), tape.constant(std::move(a)));
                            Var s = sum(mul(d, d));
                            prox = first ? s : add(prox, s);
                            first = false;
                        }
                    };
                    add_prox(ext, msg.global_extractor);
                    add_prox(d1, msg.global_disc);
                    loss = add(loss, scale(prox, rho / 2.0));
                }
                check(std::isfinite(loss.scalar()), "baseline: non-finite loss on client " +
                                                        std::to_string(state.client_id));
                state.extractor.zero_grad();
                state.d1.zero_grad();
                tape.backward(loss);
                adam_step(state.extractor, state.opt_extractor);
                adam_step(state.d1, state.opt_d1);
                loss_sum += loss.scalar();
                ++stats.steps;
            }
        }
        if (stats.steps > 0) stats.mean_loss = loss_sum / stats.steps;
    }
    res.stage1 = stats;
    state.extractor_prev = state.extractor;

    res.update.client_id = state.client_id;
    res.update.extractor = state.extractor;
    res.update.d1 = state.d1;
    res.update.n_k = state.shard_size();
    res.update.counts = state.shard_label_counts();
    return res;
}

std::string ClientUpdate::to_json() const {
    nlohmann::ordered_json j;
    j["client_id"] = client_id;
    j["n_k"] = n_k;
    j["counts"] = counts;
    j["extractor"] = nlohmann::ordered_json::parse(extractor.to_json());
    j["d1"] = nlohmann::ordered_json::parse(d1.to_json());
    return j.dump();
}

ClientUpdate ClientUpdate::from_json(const std::string& text) {
    auto j = nlohmann::ordered_json::parse(text);
    ClientUpdate u;
    u.client_id = j.at("client_id").get<int>();
    u.n_k = j.at("n_k").get<std::int64_t>();
    auto c = j.at("counts").get<std::vector<std::int64_t>>();
    check(c.size() == 2, "ClientUpdate::from_json: counts must have 2 entries");
    u.counts = {c[0], c[1]};
    u.extractor = ParamSet::from_json(j.at("extractor").dump());
    u.d1 = ParamSet::from_json(j.at("d1").dump());
    return u;
}

} // namespace fedack
