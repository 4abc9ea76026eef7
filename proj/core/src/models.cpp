#include "fedack/models.hpp"

#include <cmath>

#include "fedack/common.hpp"

namespace fedack {

void ExtractorConfig::validate() const {
    check(prop_dim > 0 && tweet_embed_dim > 0 && hidden_dim > 0 && attention_dim > 0,
          "ExtractorConfig: dims must be positive");
    check(feature_dim >= 2, "ExtractorConfig: feature_dim must be >= 2");
}

void DiscriminatorConfig::validate() const {
    check(input_dim > 0 && classes >= 2, "DiscriminatorConfig: bad dims");
    for (int h : hidden) check(h > 0, "DiscriminatorConfig: hidden widths must be positive");
}

void GeneratorConfig::validate() const {
    check(noise_dim > 0 && classes >= 2 && feature_dim > 0, "GeneratorConfig: bad dims");
    for (int h : hidden) check(h > 0, "GeneratorConfig: hidden widths must be positive");
}

ParamSet make_extractor(const ExtractorConfig& cfg, Rng& rng) {
    cfg.validate();
    ParamSet ps;
    // property MLP: two dense layers with relu
    auto prop = make_mlp("prop", {cfg.prop_dim, cfg.hidden_dim, cfg.hidden_dim}, rng);
    for (auto& e : prop.entries) ps.add(e.name, std::move(e.tensor));
    // additive attention over tweets
    ps.add("attn.w", glorot_uniform(cfg.tweet_embed_dim, cfg.attention_dim,
                                    {cfg.tweet_embed_dim, cfg.attention_dim}, rng));
    ps.add("attn.v", glorot_uniform(cfg.attention_dim, 1, {cfg.attention_dim, 1}, rng));
    // fusion MLP: hidden relu, linear output
    auto fuse = make_mlp("fuse", {cfg.hidden_dim + cfg.tweet_embed_dim, cfg.hidden_dim,
                                  cfg.feature_dim},
                         rng);
    for (auto& e : fuse.entries) ps.add(e.name, std::move(e.tensor));
    return ps;
}

ParamSet make_discriminator(const DiscriminatorConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<int> widths;
    widths.push_back(cfg.input_dim);
    for (int h : cfg.hidden) widths.push_back(h);
    widths.push_back(cfg.classes);
    return make_mlp("disc", widths, rng);
}

ParamSet make_generator(const GeneratorConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<int> widths;
    widths.push_back(cfg.noise_dim + cfg.classes);
    for (int h : cfg.hidden) widths.push_back(h);
    widths.push_back(cfg.feature_dim);
    return make_mlp("gen", widths, rng);
}

AttnResult attention_aggregate_t(Tape& tape, const Bound& ext,
                                 const std::vector<Tensor>& tweet_means, int embed_dim) {
    AttnResult res;
    if (tweet_means.empty()) {
        res.output = tape.constant(Tensor({1, embed_dim}));
        res.empty_input = true;
        return res;
    }
    const int m = static_cast<int>(tweet_means.size());
    Tensor stacked({m, embed_dim});
    for (int j = 0; j < m; ++j) {
        const Tensor& h = tweet_means[static_cast<size_t>(j)];
        check(h.size() == embed_dim, "attention_aggregate: tweet vector has " +
                                         std::to_string(h.size()) + " dims, expected " +
                                         std::to_string(embed_dim));
        for (int c = 0; c < embed_dim; ++c) stacked.at(j, c) = h.data[static_cast<size_t>(c)];
    }
    Var h_mat = tape.constant(std::move(stacked));
    Var scores = matmul(tanh_op(matmul(h_mat, ext["attn.w"])), ext["attn.v"]); // {M,1}
    Var weights = softmax(reshape(scores, {1, m}));
    res.output = matmul(weights, h_mat); // {1, d}
    res.weights = weights;
    return res;
}

Var extractor_forward_t(Tape& tape, const Bound& ext, const UserRecord& user,
                        const ExtractorConfig& cfg) {
    check(static_cast<int>(user.props.size()) == cfg.prop_dim,
          "extractor_forward: user '" + user.id + "' has " +
              std::to_string(user.props.size()) + " props, config says " +
              std::to_string(cfg.prop_dim));
    Var up = tape.constant(Tensor::matrix(1, cfg.prop_dim, user.props));
    Var rp = mlp_forward(ext, "prop", up, Act::relu, Act::relu);

    std::vector<Tensor> means;
    means.reserve(user.tweets.size());
    for (const auto& tw : user.tweets) means.push_back(mean_pool_tokens(tw));
    Var rt = attention_aggregate_t(tape, ext, means, cfg.tweet_embed_dim).output;

    return mlp_forward(ext, "fuse", concat_cols(rp, rt), Act::relu, Act::none);
}

Var extractor_batch_t(Tape& tape, const Bound& ext,
                      const std::vector<const UserRecord*>& users,
                      const ExtractorConfig& cfg) {
    check(!users.empty(), "extractor_batch: empty batch");
    std::vector<Var> rows;
    rows.reserve(users.size());
    for (const UserRecord* u : users)
        rows.push_back(extractor_forward_t(tape, ext, *u, cfg));
    return stack_rows(rows);
}

Var discriminator_forward_t(Tape& tape, const Bound& d, Var input) {
    (void)tape;
    return mlp_forward(d, "disc", input, Act::leaky_relu, Act::none);
}

Var generator_forward_t(Tape& tape, const Bound& g, Var input) {
    (void)tape;
    return mlp_forward(g, "gen", input, Act::relu, Act::tanh);
}

// ---- eval-mode ----------------------------------------------------------------

Tensor mean_pool_tokens(const Tensor& tokens) {
    check(tokens.rank() == 2 && tokens.rows() >= 1,
          "mean_pool_tokens: need a nonempty token matrix, got " + tokens.shape_str());
    const int q = tokens.rows();
    const int d = tokens.cols();
    Tensor out({1, d});
    for (int r = 0; r < q; ++r)
        for (int c = 0; c < d; ++c) out.data[static_cast<size_t>(c)] += tokens.at(r, c);
    for (auto& v : out.data) v /= q;
    return out;
}

Representation extractor_forward(const ParamSet& params, const UserRecord& user,
                                 const ExtractorConfig& cfg, Provenance provenance) {
    Tape tape;
    Bound b = bind_frozen(tape, params);
    Var r = extractor_forward_t(tape, b, user, cfg);
    Representation rep;
    rep.values = r.val().data;
    rep.provenance = provenance;
    return rep;
}

Tensor extractor_batch(const ParamSet& params,
                       const std::vector<const UserRecord*>& users,
                       const ExtractorConfig& cfg) {
    Tape tape;
    Bound b = bind_frozen(tape, params);
    return extractor_batch_t(tape, b, users, cfg).val();
}

Tensor discriminator_forward(const ParamSet& params, const Tensor& input) {
    Tape tape;
    Bound b = bind_frozen(tape, params);
    Var in = tape.constant(input);
    return discriminator_forward_t(tape, b, in).val();
}

Tensor generator_input(const GeneratorConfig& cfg, const Tensor& z,
                       const std::vector<int>& labels) {
    const int n = z.rows();
    check(z.cols() == cfg.noise_dim, "generator_input: noise dim " +
                                         std::to_string(z.cols()) + ", config says " +
                                         std::to_string(cfg.noise_dim));
    check(n == static_cast<int>(labels.size()), "generator_input: label count mismatch");
    Tensor in({n, cfg.noise_dim + cfg.classes});
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        check(y >= 0 && y < cfg.classes,
              "generator_input: label " + std::to_string(y) + " out of range");
        for (int j = 0; j < cfg.noise_dim; ++j) in.at(i, j) = z.at(i, j);
        in.at(i, cfg.noise_dim + y) = 1.0;
    }
    return in;
}

PseudoSample generator_forward(const ParamSet& params, const GeneratorConfig& cfg,
                               const std::vector<double>& z, int label) {
    check(static_cast<int>(z.size()) == cfg.noise_dim,
          "generator_forward: noise has " + std::to_string(z.size()) +
              " dims, config says " + std::to_string(cfg.noise_dim));
    Tensor zrow = Tensor::matrix(1, cfg.noise_dim, z);
    Tensor out = generator_batch(params, cfg, zrow, {label});
    PseudoSample ps;
    ps.features = out.data;
    ps.label = label;
    ps.noise = z;
    return ps;
}

Tensor generator_batch(const ParamSet& params, const GeneratorConfig& cfg,
                       const Tensor& z, const std::vector<int>& labels) {
    Tape tape;
    Bound b = bind_frozen(tape, params);
    Var in = tape.constant(generator_input(cfg, z, labels));
    return generator_forward_t(tape, b, in).val();
}

Tensor sample_noise(int n, int noise_dim, Rng& rng) {
    Tensor z({n, noise_dim});
    for (auto& v : z.data) v = rng.normal();
    return z;
}

} // namespace fedack
