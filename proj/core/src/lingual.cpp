#include "fedack/lingual.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "fedack/common.hpp"
#include "fedack/rng.hpp"

namespace fedack {

namespace {

// Random orthogonal matrix via modified Gram-Schmidt on a Gaussian matrix.
std::vector<std::vector<double>> random_orthogonal(int d, Rng& rng) {
    std::vector<std::vector<double>> a(static_cast<size_t>(d),
                                       std::vector<double>(static_cast<size_t>(d)));
    for (auto& r : a)
        for (auto& v : r) v = rng.normal();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < i; ++j) {
            double dot = 0.0;
            for (int k = 0; k < d; ++k) dot += a[static_cast<size_t>(i)][static_cast<size_t>(k)] * a[static_cast<size_t>(j)][static_cast<size_t>(k)];
            for (int k = 0; k < d; ++k) a[static_cast<size_t>(i)][static_cast<size_t>(k)] -= dot * a[static_cast<size_t>(j)][static_cast<size_t>(k)];
        }
        double norm = 0.0;
        for (int k = 0; k < d; ++k) norm += a[static_cast<size_t>(i)][static_cast<size_t>(k)] * a[static_cast<size_t>(i)][static_cast<size_t>(k)];
        norm = std::sqrt(norm);
        check(norm > 1e-12, "random_orthogonal: degenerate draw");
        for (int k = 0; k < d; ++k) a[static_cast<size_t>(i)][static_cast<size_t>(k)] /= norm;
    }
    return a;
}

Var disc_score(Tape&, const Bound& disc, Var pooled) {
    return sigmoid(mlp_forward(disc, "adisc", pooled, Act::leaky_relu, Act::none));
}

Var sq_err(Var pred, double target) {
    Var d = add_scalar(pred, -target);
    return sum(mul(d, d));
}

// One mapping direction of a minibatch: all tokens stacked into a single
// matrix plus the averaging matrix that pools them back per pair. Pairs with
// equal token counts on both sides also carry the token-aligned real side,
// which gives the pair-regression term a per-token signal.
struct DirectionBatch {
    Tensor stacked;       // {sum_m, d}
    Tensor pool;          // {B, sum_m}, rows average each pair's token block
    Tensor pooled_real;   // {B, d} of the direction's real side
    Tensor aligned_real;  // {sum_m, d}, valid when token_aligned
    Tensor token_weight;  // {sum_m, d}, 1/(B*m_i) per row, valid when token_aligned
    bool token_aligned = true;
};

DirectionBatch build_direction(const std::vector<const BilingualPair*>& train,
                               const std::vector<int>& idx, size_t start, size_t end,
                               bool map_target_to_source, int d) {
    DirectionBatch out;
    const int b = static_cast<int>(end - start);
    int total = 0;
    for (size_t k = start; k < end; ++k) {
        const BilingualPair& p = *train[static_cast<size_t>(idx[k])];
        total += map_target_to_source ? p.target.tokens.rows() : p.source.tokens.rows();
        if (p.target.tokens.rows() != p.source.tokens.rows()) out.token_aligned = false;
    }
    out.stacked = Tensor({total, d});
    out.pool = Tensor({b, total});
    out.pooled_real = Tensor({b, d});
    if (out.token_aligned) {
        out.aligned_real = Tensor({total, d});
        out.token_weight = Tensor({total, d});
    }
    int offset = 0;
    for (size_t k = start; k < end; ++k) {
        const BilingualPair& p = *train[static_cast<size_t>(idx[k])];
        const Tensor& toks = map_target_to_source ? p.target.tokens : p.source.tokens;
        const Tensor& real_toks = map_target_to_source ? p.source.tokens : p.target.tokens;
        const Tensor real = mean_pool(map_target_to_source ? p.source : p.target);
        const int row = static_cast<int>(k - start);
        for (int c = 0; c < d; ++c) out.pooled_real.at(row, c) = real.data[static_cast<size_t>(c)];
        for (int r = 0; r < toks.rows(); ++r) {
            for (int c = 0; c < d; ++c) out.stacked.at(offset + r, c) = toks.at(r, c);
            out.pool.at(row, offset + r) = 1.0 / toks.rows();
            if (out.token_aligned)
                for (int c = 0; c < d; ++c) {
                    out.aligned_real.at(offset + r, c) = real_toks.at(r, c);
                    out.token_weight.at(offset + r, c) = 1.0 / (b * toks.rows());
                }
        }
        offset += toks.rows();
    }
    return out;
}

struct MappedDirection {
    Var tokens; // {sum_m, d}
    Var pooled; // {B, d}
};

MappedDirection map_direction(Tape& tape, const Bound& mapper, const DirectionBatch& dir) {
    MappedDirection out;
    out.tokens = mlp_forward(mapper, "map", tape.constant(dir.stacked), Act::leaky_relu,
                             Act::none);
    out.pooled = matmul(tape.constant(dir.pool), out.tokens);
    return out;
}

// Mean over pairs of the per-pair regression error: token-level when both
// sides are token-aligned (the synthetic corpus always is), pooled otherwise.
Var pair_regression(Tape& tape, const MappedDirection& mapped, const DirectionBatch& dir,
                    int batch_size) {
    if (dir.token_aligned) {
        Var diff = sub(mapped.tokens, tape.constant(dir.aligned_real));
        return sum(mul(tape.constant(dir.token_weight), mul(diff, diff)));
    }
    Var diff = sub(mapped.pooled, tape.constant(dir.pooled_real));
    return scale(sum(mul(diff, diff)), 1.0 / batch_size);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na < 1e-30 || nb < 1e-30) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

} // namespace

MapperState make_mapper(const MapperConfig& cfg, Rng& rng) {
    check(cfg.dim >= 1, "make_mapper: dim must be positive");
    MapperState st;
    st.cfg = cfg;
    std::vector<int> mw;
    mw.push_back(cfg.dim);
    for (int h : cfg.mapper_hidden) mw.push_back(h);
    mw.push_back(cfg.dim);
    st.mapper = make_mlp("map", mw, rng);
    std::vector<int> dw;
    dw.push_back(cfg.dim);
    for (int h : cfg.disc_hidden) dw.push_back(h);
    dw.push_back(1);
    st.disc = make_mlp("adisc", dw, rng);
    st.mapper_opt = AdamState::init(st.mapper, {cfg.lr});
    st.disc_opt = AdamState::init(st.disc, {cfg.lr});
    return st;
}

Tensor mean_pool(const ContextEmbedding& emb) {
    check(emb.tokens.rank() == 2 && emb.tokens.rows() >= 1,
          "mean_pool: empty context embedding");
    const int m = emb.tokens.rows();
    const int d = emb.tokens.cols();
    Tensor out({1, d});
    for (int r = 0; r < m; ++r)
        for (int c = 0; c < d; ++c) out.data[static_cast<size_t>(c)] += emb.tokens.at(r, c);
    for (auto& v : out.data) v /= m;
    return out;
}

ContextEmbedding map_context(const MapperState& state, const ContextEmbedding& emb) {
    check(emb.tokens.cols() == state.cfg.dim,
          "map_context: token dim " + std::to_string(emb.tokens.cols()) +
              " does not match mapper dim " + std::to_string(state.cfg.dim));
    Tape tape;
    Bound b = bind_frozen(tape, state.mapper);
    Var toks = tape.constant(emb.tokens);
    Var mapped = mlp_forward(b, "map", toks, Act::leaky_relu, Act::none);
    ContextEmbedding out;
    out.tokens = mapped.val();
    out.language = emb.language == Lang::source ? Lang::target : Lang::source;
    return out;
}

double align_disc_loss(const MapperState& state, const Tensor& pooled_real,
                       const Tensor& pooled_mapped) {
    Tape tape;
    Bound disc = bind_frozen(tape, state.disc);
    Var lr = sq_err(disc_score(tape, disc, tape.constant(pooled_real)), 1.0);
    Var lm = sq_err(disc_score(tape, disc, tape.constant(pooled_mapped)), 0.0);
    return add(lr, lm).scalar();
}

double align_gen_loss(const MapperState& state, const Tensor& pooled_mapped_x,
                      const Tensor& pooled_mapped_y) {
    Tape tape;
    Bound disc = bind_frozen(tape, state.disc);
    Var lx = sq_err(disc_score(tape, disc, tape.constant(pooled_mapped_x)), 1.0);
    Var ly = sq_err(disc_score(tape, disc, tape.constant(pooled_mapped_y)), 1.0);
    return add(lx, ly).scalar();
}

double mean_pair_cosine(const MapperState& state, const std::vector<BilingualPair>& pairs) {
    if (pairs.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& pair : pairs) {
        const Tensor px = mean_pool(pair.source);
        const Tensor py = mean_pool(pair.target);
        const Tensor mx = mean_pool(map_context(state, pair.target)); // -> source space
        const Tensor my = mean_pool(map_context(state, pair.source)); // -> target space
        acc += 0.5 * (cosine(px.data, mx.data) + cosine(py.data, my.data));
    }
    return acc / static_cast<double>(pairs.size());
}

std::pair<MapperState, AlignmentReport>
train_alignment(const std::vector<BilingualPair>& pairs, int epochs, std::uint64_t seed,
                const MapperConfig& cfg) {
    check(pairs.size() >= 2, "train_alignment: need at least 2 pairs");
    check(epochs >= 0, "train_alignment: epochs must be >= 0");
    for (const auto& p : pairs) {
        check(p.source.tokens.cols() == cfg.dim && p.target.tokens.cols() == cfg.dim,
              "train_alignment: pair dims do not match mapper config");
    }

    Rng rng = Rng::derive(seed, 0xA116u);
    MapperState st = make_mapper(cfg, rng);

    // Held-out tail after a seeded shuffle.
    std::vector<int> order(pairs.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int n_hold = std::max(1, static_cast<int>(std::llround(cfg.holdout_frac *
                                                                 static_cast<double>(pairs.size()))));
    const int n_train = static_cast<int>(pairs.size()) - n_hold;
    check(n_train >= 1, "train_alignment: holdout fraction leaves no training pairs");
    std::vector<const BilingualPair*> train;
    std::vector<BilingualPair> holdout;
    for (int i = 0; i < n_train; ++i) train.push_back(&pairs[static_cast<size_t>(order[static_cast<size_t>(i)])]);
    for (int i = n_train; i < static_cast<int>(pairs.size()); ++i)
        holdout.push_back(pairs[static_cast<size_t>(order[static_cast<size_t>(i)])]);

    AlignmentReport report;
    report.seed = seed;
    report.epochs = epochs;
    report.init_holdout_cosine = mean_pair_cosine(st, holdout);

    std::vector<int> idx(train.size());
    std::iota(idx.begin(), idx.end(), 0);
    const int batch = std::max(1, cfg.batch);

    for (int epoch = 0; epoch < epochs; ++epoch) {
        rng.shuffle(idx);
        double d_sum = 0.0, g_sum = 0.0;
        int steps = 0;
        for (size_t start = 0; start < idx.size(); start += static_cast<size_t>(batch)) {
            const size_t end = std::min(idx.size(), start + static_cast<size_t>(batch));
            const double inv_b = 1.0 / static_cast<double>(end - start);
            const DirectionBatch to_src = build_direction(train, idx, start, end, true, cfg.dim);
            const DirectionBatch to_tgt = build_direction(train, idx, start, end, false, cfg.dim);

            // --- discriminator step: real -> 1, mapped -> 0, both directions
            {
                Tape tape;
                Bound disc = bind_trainable(tape, st.disc);
                Bound mapper = bind_frozen(tape, st.mapper);
                Var acc;
                bool first = true;
                for (const DirectionBatch* dir : {&to_src, &to_tgt}) {
                    Var mapped = detach(map_direction(tape, mapper, *dir).pooled);
                    Var l = add(sq_err(disc_score(tape, disc, tape.constant(dir->pooled_real)), 1.0),
                                sq_err(disc_score(tape, disc, mapped), 0.0));
                    acc = first ? l : add(acc, l);
                    first = false;
                }
                Var loss = scale(acc, inv_b);
                check(std::isfinite(loss.scalar()), "train_alignment: non-finite discriminator loss");
                st.disc.zero_grad();
                tape.backward(loss);
                adam_step(st.disc, st.disc_opt);
                d_sum += loss.scalar();
            }

            // --- mapper step: fool the discriminator; parallel pairs keep the
            // map anchored to the corpus correspondence.
            {
                Tape tape;
                Bound disc = bind_frozen(tape, st.disc);
                Bound mapper = bind_trainable(tape, st.mapper);
                Var acc;
                bool first = true;
                const int b = static_cast<int>(end - start);
                for (const DirectionBatch* dir : {&to_src, &to_tgt}) {
                    MappedDirection mapped = map_direction(tape, mapper, *dir);
                    Var l = scale(sq_err(disc_score(tape, disc, mapped.pooled), 1.0), inv_b);
                    if (cfg.pair_weight > 0.0)
                        l = add(l, scale(pair_regression(tape, mapped, *dir, b),
                                         cfg.pair_weight));
                    acc = first ? l : add(acc, l);
                    first = false;
                }
                check(std::isfinite(acc.scalar()), "train_alignment: non-finite mapper loss");
                st.mapper.zero_grad();
                tape.backward(acc);
                adam_step(st.mapper, st.mapper_opt);
                g_sum += acc.scalar();
            }
            ++steps;
        }
        report.disc_losses.push_back(d_sum / std::max(1, steps));
        report.gen_losses.push_back(g_sum / std::max(1, steps));
    }

    report.final_holdout_cosine =
        epochs == 0 ? report.init_holdout_cosine : mean_pair_cosine(st, holdout);
    return {std::move(st), std::move(report)};
}

std::vector<BilingualPair> synth_bilingual(int n_pairs, int d, int tokens_per_side,
                                           double noise_sigma, std::uint64_t seed) {
    check(d >= 2, "synth_bilingual: d must be >= 2");
    check(n_pairs >= 0, "synth_bilingual: n_pairs must be >= 0");
    check(tokens_per_side >= 1, "synth_bilingual: tokens_per_side must be >= 1");
    check(noise_sigma >= 0.0, "synth_bilingual: noise_sigma must be >= 0");
    std::vector<BilingualPair> pairs;
    if (n_pairs == 0) return pairs;

    Rng rng = Rng::derive(seed, 0xB111u);
    // A = Q^T D Q with D = diag(+-1): random orthogonal and involutive, so the
    // single shared mapper can realize both directions at once (A = A^{-1}).
    const auto q = random_orthogonal(d, rng);
    std::vector<double> signs(static_cast<size_t>(d));
    bool mixed = false;
    for (auto& s : signs) {
        s = rng.uniform() < 0.5 ? -1.0 : 1.0;
        if (s != signs[0]) mixed = true;
    }
    if (!mixed) signs[0] = -signs[0]; // avoid the degenerate A = +-I draw
    std::vector<std::vector<double>> a(static_cast<size_t>(d),
                                       std::vector<double>(static_cast<size_t>(d), 0.0));
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
                a[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                    q[static_cast<size_t>(k)][static_cast<size_t>(i)] * signs[static_cast<size_t>(k)] *
                    q[static_cast<size_t>(k)][static_cast<size_t>(j)];
    pairs.reserve(static_cast<size_t>(n_pairs));
    for (int i = 0; i < n_pairs; ++i) {
        BilingualPair p;
        p.source.language = Lang::source;
        p.target.language = Lang::target;
        p.source.tokens = Tensor({tokens_per_side, d});
        p.target.tokens = Tensor({tokens_per_side, d});
        for (int r = 0; r < tokens_per_side; ++r) {
            for (int c = 0; c < d; ++c) p.source.tokens.at(r, c) = rng.normal();
            for (int c = 0; c < d; ++c) {
                double v = 0.0;
                for (int k = 0; k < d; ++k)
                    v += a[static_cast<size_t>(c)][static_cast<size_t>(k)] * p.source.tokens.at(r, k);
                p.target.tokens.at(r, c) = v + noise_sigma * rng.normal();
            }
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::string AlignmentReport::to_json() const {
    nlohmann::ordered_json j;
    j["epochs"] = epochs;
    j["seed"] = seed;
    j["init_holdout_cosine"] = init_holdout_cosine;
    j["final_holdout_cosine"] = final_holdout_cosine;
    j["disc_losses"] = disc_losses;
    j["gen_losses"] = gen_losses;
    return j.dump(2);
}

void AlignmentReport::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    check(out.good(), "AlignmentReport::save: cannot open " + path.string());
    out << to_json() << "\n";
    check(out.good(), "AlignmentReport::save: write failed");
}

void save_pairs_jsonl(const std::vector<BilingualPair>& pairs,
                      const std::filesystem::path& path) {
    std::ofstream out(path);
    check(out.good(), "save_pairs_jsonl: cannot open " + path.string());
    for (const auto& p : pairs) {
        nlohmann::ordered_json j;
        auto dump_tokens = [](const Tensor& t) {
            auto m = nlohmann::ordered_json::array();
            for (int r = 0; r < t.rows(); ++r) {
                auto rowj = nlohmann::ordered_json::array();
                for (int c = 0; c < t.cols(); ++c) rowj.push_back(t.at(r, c));
                m.push_back(std::move(rowj));
            }
            return m;
        };
        j["src"] = dump_tokens(p.source.tokens);
        j["tgt"] = dump_tokens(p.target.tokens);
        out << j.dump() << "\n";
    }
    check(out.good(), "save_pairs_jsonl: write failed for " + path.string());
}

std::vector<BilingualPair> load_pairs_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    check(in.good(), "load_pairs_jsonl: cannot open " + path.string());
    std::vector<BilingualPair> pairs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::ordered_json j;
        try {
            j = nlohmann::ordered_json::parse(line);
        } catch (const std::exception& e) {
            fail("load_pairs_jsonl: " + path.string() + ":" + std::to_string(line_no) +
                 ": " + e.what());
        }
        auto parse_tokens = [&](const nlohmann::ordered_json& m) {
            const int rows = static_cast<int>(m.size());
            check(rows >= 1, "load_pairs_jsonl: empty token matrix at line " +
                                 std::to_string(line_no));
            const int cols = static_cast<int>(m.at(0).size());
            Tensor t({rows, cols});
            for (int r = 0; r < rows; ++r)
                for (int c = 0; c < cols; ++c)
                    t.at(r, c) = m.at(static_cast<size_t>(r)).at(static_cast<size_t>(c)).get<double>();
            return t;
        };
        BilingualPair p;
        p.source.tokens = parse_tokens(j.at("src"));
        p.source.language = Lang::source;
        p.target.tokens = parse_tokens(j.at("tgt"));
        p.target.language = Lang::target;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

} // namespace fedack
