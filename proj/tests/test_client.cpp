#include "doctest.h"

#include <cmath>

#include "fedack/client.hpp"
#include "testutil.hpp"

using namespace fedack;

namespace {

struct Fixture {
    Dataset ds;
    ClientModels models;
    ParamSet init_ext, init_d1;
    Broadcast bcast;

    explicit Fixture(int users = 80, double sep = 4.0, std::uint64_t seed = 0) {
        SynthSpec spec;
        spec.n_users = users;
        spec.prop_dim = 4;
        spec.embed_dim = 5;
        spec.tweets_min = 1;
        spec.tweets_max = 3;
        spec.class_sep = sep;
        spec.seed = seed;
        ds = synth_dataset(spec);

        models.extractor.prop_dim = 4;
        models.extractor.tweet_embed_dim = 5;
        models.extractor.hidden_dim = 8;
        models.extractor.feature_dim = 6;
        models.extractor.attention_dim = 4;
        models.d1.input_dim = 6;
        models.d1.hidden = {8};
        models.d2 = models.d1;
        models.gen.noise_dim = 4;
        models.gen.feature_dim = 6;
        models.gen.hidden = {8};

        Rng re = Rng::derive(seed, 0xE07u);
        init_ext = make_extractor(models.extractor, re);
        Rng rd = Rng::derive(seed, 0xD1u);
        init_d1 = make_discriminator(models.d1, rd);
        Rng rg = Rng::derive(seed, 0x66u);
        bcast.global_gen = make_generator(models.gen, rg);
        bcast.global_extractor = init_ext;
        bcast.global_disc = init_d1;
        bcast.round = 1;
    }

    std::vector<int> all_indices() const {
        std::vector<int> idx(ds.users.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        return idx;
    }

    ClientState client(std::vector<int> shard, int id = 0) const {
        return make_client(id, &ds, std::move(shard), models, init_ext, init_d1, 7);
    }

    TrainParams params(int steps = 15, int batch = 16) const {
        TrainParams tp;
        tp.steps = steps;
        tp.batch = batch;
        tp.lr = 0.01;
        return tp;
    }
};

bool same_params(const ParamSet& a, const ParamSet& b) {
    if (!a.compatible_with(b)) return false;
    for (size_t i = 0; i < a.entries.size(); ++i)
        if (a.entries[i].tensor.data != b.entries[i].tensor.data) return false;
    return true;
}

double d1_train_accuracy(const ClientState& st) {
    int correct = 0;
    std::vector<const UserRecord*> users;
    for (int idx : st.shard) users.push_back(&st.dataset->users[static_cast<size_t>(idx)]);
    Tensor reps = extractor_batch(st.extractor, users, st.models.extractor);
    Tensor logits = discriminator_forward(st.d1, reps);
    for (size_t i = 0; i < users.size(); ++i) {
        const int pred = logits.at(static_cast<int>(i), 1) > logits.at(static_cast<int>(i), 0) ? 1 : 0;
        if (pred == users[i]->label) ++correct;
    }
    return static_cast<double>(correct) / users.size();
}

} // namespace

TEST_CASE("receive_broadcast overwrites shared nets and keeps eps_prev") {
    Fixture f;
    ClientState st = f.client(f.all_indices());
    ParamSet prev_before = st.extractor_prev;

    // self-broadcast leaves values unchanged
    receive_broadcast(st, f.bcast);
    CHECK(same_params(st.extractor, f.bcast.global_extractor));
    CHECK(same_params(st.d1, f.bcast.global_disc));
    CHECK(same_params(st.extractor_prev, prev_before));
    CHECK(same_params(st.global_extractor_frozen, f.bcast.global_extractor));

    // two clients converge to identical shared nets after the same broadcast
    ClientState other = f.client(f.all_indices(), 1);
    receive_broadcast(other, f.bcast);
    CHECK(same_params(st.d1, other.d1));
    CHECK(same_params(st.extractor, other.extractor));
    // D2 starts from the shared discriminator weights but never receives a
    // broadcast afterwards; the local generators are client-specific draws
    CHECK(same_params(st.d2, f.init_d1));
    CHECK_FALSE(same_params(st.local_gen, other.local_gen));

    // incompatible broadcast is a hard error
    Broadcast bad = f.bcast;
    bad.global_disc = ParamSet();
    CHECK_THROWS(receive_broadcast(st, bad));
}

TEST_CASE("stage 1: zero steps is a no-op; empty shard warns and skips") {
    Fixture f;
    ClientState st = f.client(f.all_indices());
    receive_broadcast(st, f.bcast);
    ParamSet d1_before = st.d1;
    Rng rng(1);
    TrainParams tp = f.params(0);
    auto stats = stage1_train_discriminators(st, tp, rng);
    CHECK(stats.steps == 0);
    CHECK(same_params(st.d1, d1_before));

    ClientState empty = f.client({}, 2);
    receive_broadcast(empty, f.bcast);
    auto estats = stage1_train_discriminators(empty, f.params(), rng);
    CHECK(estats.steps == 0);
}

TEST_CASE("stage 1 trains D1 to high accuracy on separable data; stages are isolated") {
    Fixture f(120, 4.0, 2);
    ClientState st = f.client(f.all_indices());
    receive_broadcast(st, f.bcast);
    ParamSet ext_before = st.extractor;
    ParamSet gk_before = st.local_gen;

    Rng rng(3);
    // budget equivalent to ten passes over the shard
    TrainParams tp = f.params(80);
    auto stats = stage1_train_discriminators(st, tp, rng);
    CHECK(stats.steps > 0);
    CHECK(d1_train_accuracy(st) >= 0.9);
    // stage isolation: extractor and local generator untouched
    CHECK(same_params(st.extractor, ext_before));
    CHECK(same_params(st.local_gen, gk_before));
}

TEST_CASE("stage 1 with alpha=gamma=0 reduces to classifier training with decreasing loss") {
    Fixture f(120, 4.0, 4);
    ClientState st = f.client(f.all_indices());
    receive_broadcast(st, f.bcast);
    TrainParams tp = f.params(8, 120); // full-batch: loss comparable across steps
    tp.weights.alpha_kd = 0.0;
    tp.weights.gamma = 0.0;
    std::vector<double> losses;
    for (int block = 0; block < 3; ++block) {
        Rng rng = Rng::derive(11, static_cast<std::uint64_t>(block));
        losses.push_back(stage1_train_discriminators(st, tp, rng).mean_loss);
    }
    CHECK(losses[1] < losses[0]);
    CHECK(losses[2] < losses[1]);
}

TEST_CASE("stage 2: detached snapshot with mu=0 leaves gradients unchanged") {
    Fixture f(60, 2.0, 5);
    ClientState st = f.client(f.all_indices());
    receive_broadcast(st, f.bcast);
    TrainParams tp = f.params(4, 60);
    tp.weights.mu = 0.0;

    auto run_stage2 = [&](ClientState client) {
        Rng rng(21);
        stage2_train_extractor(client, tp, rng);
        return client.extractor;
    };
    ClientState a = st;
    ClientState b = st;
    // perturb the previous-round snapshot only
    for (auto& e : b.extractor_prev.entries)
        for (auto& v : e.tensor.data) v += 0.37;
    CHECK(same_params(run_stage2(a), run_stage2(b)));
}

TEST_CASE("stage 2 with contrastive weight pulls representations toward the global net") {
    Fixture f(120, 2.0, 6);
    ClientState st = f.client(f.all_indices());
    receive_broadcast(st, f.bcast);

    // Make the frozen global extractor distinct from the current one so that
    // sim(r, r_glo) has room to grow.
    Rng rg(55);
    st.global_extractor_frozen = make_extractor(f.models.extractor, rg);
    ParamSet global_ref = st.global_extractor_frozen;

    auto mean_cos_to_global = [&](const ClientState& client) {
        double acc = 0.0;
        std::vector<const UserRecord*> users;
        for (int idx : client.shard) users.push_back(&f.ds.users[static_cast<size_t>(idx)]);
        Tensor cur = extractor_batch(client.extractor, users, f.models.extractor);
        Tensor glo = extractor_batch(global_ref, users, f.models.extractor);
        for (int r = 0; r < cur.rows(); ++r) {
            std::vector<double> a(static_cast<size_t>(cur.cols())), b(static_cast<size_t>(cur.cols()));
            for (int c = 0; c < cur.cols(); ++c) {
                a[static_cast<size_t>(c)] = cur.at(r, c);
                b[static_cast<size_t>(c)] = glo.at(r, c);
            }
            acc += testutil::ref_cosine(a, b);
        }
        return acc / cur.rows();
    };

    const double before = mean_cos_to_global(st);
    TrainParams tp = f.params(40);
    tp.weights.mu = 0.5;
    tp.weights.gamma = 0.0;
    Rng rng(31);
    stage2_train_extractor(st, tp, rng);
    CHECK(mean_cos_to_global(st) > before);
}

TEST_CASE("stage 3 improves generator classifiability and keeps diversity") {
    Fixture f(100, 4.0, 7);
    ClientState st = f.client(f.all_indices());
    receive_broadcast(st, f.bcast);
    Rng rng(41);
    stage1_train_discriminators(st, f.params(25), rng);

    auto gen_ce = [&](const ClientState& client) {
        Rng zr(101);
        Tensor z = sample_noise(32, f.models.gen.noise_dim, zr);
        std::vector<int> labels(32);
        for (auto& y : labels) y = zr.uniform_int(2);
        Tensor feats = generator_batch(client.local_gen, f.models.gen, z, labels);
        Tensor logits = discriminator_forward(client.d1, feats);
        double ce = 0.0;
        for (int i = 0; i < 32; ++i) {
            std::vector<double> row(static_cast<size_t>(logits.cols()));
            for (int c = 0; c < logits.cols(); ++c) row[static_cast<size_t>(c)] = logits.at(i, c);
            ce += testutil::ref_cross_entropy(row, labels[static_cast<size_t>(i)]);
        }
        return ce / 32.0;
    };
    auto gen_diversity = [&](const ClientState& client) {
        Rng zr(102);
        Tensor z = sample_noise(16, f.models.gen.noise_dim, zr);
        std::vector<int> labels(16);
        for (auto& y : labels) y = zr.uniform_int(2);
        Tensor feats = generator_batch(client.local_gen, f.models.gen, z, labels);
        return diversity_loss(feats, z);
    };

    const double ce_before = gen_ce(st);
    ParamSet d1_before = st.d1;
    ParamSet ext_before = st.extractor;
    Rng rng3(43);
    stage3_train_local_generator(st, f.params(40), rng3);
    CHECK(gen_ce(st) < ce_before);
    CHECK(gen_diversity(st) < 1.0); // no total collapse
    // stage isolation
    CHECK(same_params(st.d1, d1_before));
    CHECK(same_params(st.extractor, ext_before));
}

TEST_CASE("local_round: determinism, shard-size contract, eps_prev snapshot") {
    Fixture f(60, 2.0, 8);
    TrainParams tp = f.params(4, 32);

    auto run = [&] {
        ClientState st = f.client(f.all_indices(), 3);
        return local_round(st, f.bcast, tp, 99);
    };
    LocalRoundResult a = run();
    LocalRoundResult b = run();
    CHECK(same_params(a.update.extractor, b.update.extractor));
    CHECK(same_params(a.update.d1, b.update.d1));
    CHECK(a.update.n_k == b.update.n_k);
    CHECK(a.update.n_k == 60);
    CHECK(a.update.counts[0] + a.update.counts[1] == 60);
    CHECK(a.update.client_id == 3);

    // eps_prev snapshots the post-stage-3 extractor exactly once
    ClientState st = f.client(f.all_indices(), 4);
    local_round(st, f.bcast, tp, 99);
    CHECK(same_params(st.extractor_prev, st.extractor));
}

TEST_CASE("local_round on an empty shard echoes the broadcast") {
    Fixture f;
    ClientState st = f.client({}, 5);
    TrainParams tp = f.params(4);
    LocalRoundResult res = local_round(st, f.bcast, tp, 1);
    CHECK(res.update.n_k == 0);
    CHECK(same_params(res.update.extractor, f.bcast.global_extractor));
    CHECK(same_params(res.update.d1, f.bcast.global_disc));
}

TEST_CASE("client update wire format round trip") {
    Fixture f(20);
    ClientState st = f.client(f.all_indices(), 6);
    LocalRoundResult res = local_round(st, f.bcast, f.params(4, 20), 5);
    ClientUpdate back = ClientUpdate::from_json(res.update.to_json());
    CHECK(back.client_id == res.update.client_id);
    CHECK(back.n_k == res.update.n_k);
    CHECK(back.counts == res.update.counts);
    CHECK(same_params(back.extractor, res.update.extractor));
    CHECK(same_params(back.d1, res.update.d1));
}

TEST_CASE("fedprox with rho=0 matches fedavg bit for bit") {
    Fixture f(60, 2.0, 10);
    TrainParams tp = f.params(6, 32);
    auto run = [&](Strategy s, double rho) {
        ClientState st = f.client(f.all_indices(), 0);
        return baseline_local_round(st, f.bcast, tp, s, rho, 7);
    };
    LocalRoundResult avg = run(Strategy::fedavg, 0.0);
    LocalRoundResult prox0 = run(Strategy::fedprox, 0.0);
    CHECK(same_params(avg.update.extractor, prox0.update.extractor));
    CHECK(same_params(avg.update.d1, prox0.update.d1));

    LocalRoundResult prox = run(Strategy::fedprox, 0.5);
    CHECK_FALSE(same_params(avg.update.extractor, prox.update.extractor));
}
