#include <benchmark/benchmark.h>

#include "fedack/client.hpp"
#include "fedack/losses.hpp"
#include "fedack/server.hpp"

using namespace fedack;

namespace {

ClientModels bench_models() {
    ClientModels m;
    m.extractor.prop_dim = 8;
    m.extractor.tweet_embed_dim = 16;
    m.extractor.hidden_dim = 32;
    m.extractor.feature_dim = 16;
    m.extractor.attention_dim = 16;
    m.d1.input_dim = 16;
    m.d1.hidden = {32, 32};
    m.d2 = m.d1;
    m.gen.noise_dim = 8;
    m.gen.feature_dim = 16;
    m.gen.hidden = {32};
    return m;
}

Dataset bench_dataset(int users) {
    SynthSpec spec;
    spec.n_users = users;
    spec.prop_dim = 8;
    spec.embed_dim = 16;
    spec.class_sep = 2.0;
    spec.seed = 1;
    return synth_dataset(spec);
}

} // namespace

static void BM_MatMul(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    Rng rng(1);
    Tensor a({n, n});
    Tensor b({n, n});
    for (auto& v : a.data) v = rng.normal();
    for (auto& v : b.data) v = rng.normal();
    for (auto _ : state) {
        Tape tape;
        Var y = matmul(tape.constant(a), tape.constant(b));
        benchmark::DoNotOptimize(y.val().data.data());
    }
}
BENCHMARK(BM_MatMul)->Arg(16)->Arg(64);

static void BM_ExtractorForward(benchmark::State& state) {
    ClientModels m = bench_models();
    Dataset ds = bench_dataset(64);
    Rng rng(2);
    ParamSet ext = make_extractor(m.extractor, rng);
    std::vector<const UserRecord*> users;
    for (const auto& u : ds.users) users.push_back(&u);
    for (auto _ : state) {
        Tensor reps = extractor_batch(ext, users, m.extractor);
        benchmark::DoNotOptimize(reps.data.data());
    }
}
BENCHMARK(BM_ExtractorForward);

static void BM_Stage1Step(benchmark::State& state) {
    ClientModels m = bench_models();
    Dataset ds = bench_dataset(64);
    Rng rng(3);
    ParamSet ext = make_extractor(m.extractor, rng);
    ParamSet d1 = make_discriminator(m.d1, rng);
    ParamSet d2 = make_discriminator(m.d2, rng);
    ParamSet gen = make_generator(m.gen, rng);

    std::vector<const UserRecord*> users;
    std::vector<int> labels;
    for (const auto& u : ds.users) {
        users.push_back(&u);
        labels.push_back(u.label);
    }
    DiscBatch batch;
    batch.reps = extractor_batch(ext, users, m.extractor);
    batch.labels = labels;
    Tensor z = sample_noise(64, m.gen.noise_dim, rng);
    batch.pseudo_global = generator_batch(gen, m.gen, z, labels);
    batch.pseudo_local = batch.pseudo_global;
    batch.pseudo_local_labels = labels;

    AdamState o1 = AdamState::init(d1, {});
    AdamState o2 = AdamState::init(d2, {});
    for (auto _ : state) {
        Tape tape;
        Bound b1 = bind_trainable(tape, d1);
        Bound b2 = bind_trainable(tape, d2);
        Var loss = disc_total_loss_t(tape, b1, b2, batch, {}).total;
        d1.zero_grad();
        d2.zero_grad();
        tape.backward(loss);
        adam_step(d1, o1);
        adam_step(d2, o2);
        benchmark::DoNotOptimize(loss.scalar());
    }
}
BENCHMARK(BM_Stage1Step);

static void BM_DirichletPartition(benchmark::State& state) {
    Dataset ds = bench_dataset(2000);
    PartitionSpec spec;
    spec.n_clients = 10;
    spec.concentration = 0.1;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        spec.seed = seed++;
        Partition p = dirichlet_partition(ds, spec);
        benchmark::DoNotOptimize(p.shards.data());
    }
}
BENCHMARK(BM_DirichletPartition);

static void BM_FullRound(benchmark::State& state) {
    ClientModels m = bench_models();
    Dataset ds = bench_dataset(400);
    PartitionSpec ps;
    ps.n_clients = 4;
    ps.concentration = 0.5;
    ps.seed = 1;
    Partition part = dirichlet_partition(ds, ps);

    for (auto _ : state) {
        state.PauseTiming();
        ServerState server = make_server(m, 1);
        std::vector<ClientState> clients;
        for (int k = 0; k < 4; ++k)
            clients.push_back(make_client(k, &ds, part.shards[static_cast<size_t>(k)], m,
                                          server.global_extractor, server.global_disc, 1));
        RunContext ctx;
        ctx.dataset = &ds;
        for (int i = 0; i < 80; ++i) ctx.test_idx.push_back(i);
        ctx.train.steps = 2;
        ctx.train.batch = 64;
        ctx.selection.fraction = 1.0;
        ctx.selection.seed = 1;
        ctx.distill.steps = 1;
        ctx.global_seed = 1;
        ctx.parallel_clients = true;
        state.ResumeTiming();
        RoundReport rep = run_round(server, clients, ctx);
        benchmark::DoNotOptimize(rep.accuracy);
    }
}
BENCHMARK(BM_FullRound)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
