#include "fedack/nn.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

#include "fedack/common.hpp"

namespace fedack {

Tensor& ParamSet::add(const std::string& name, Tensor t) {
    check(index_of(name) < 0, "ParamSet: duplicate parameter name '" + name + "'");
    entries.push_back({name, std::move(t)});
    return entries.back().tensor;
}

int ParamSet::index_of(const std::string& name) const {
    for (size_t i = 0; i < entries.size(); ++i)
        if (entries[i].name == name) return static_cast<int>(i);
    return -1;
}

Tensor& ParamSet::get(const std::string& name) {
    int i = index_of(name);
    check(i >= 0, "ParamSet: no parameter named '" + name + "'");
    return entries[static_cast<size_t>(i)].tensor;
}

const Tensor& ParamSet::get(const std::string& name) const {
    int i = index_of(name);
    check(i >= 0, "ParamSet: no parameter named '" + name + "'");
    return entries[static_cast<size_t>(i)].tensor;
}

const Tensor* ParamSet::find(const std::string& name) const {
    int i = index_of(name);
    return i < 0 ? nullptr : &entries[static_cast<size_t>(i)].tensor;
}

bool ParamSet::compatible_with(const ParamSet& other) const {
    if (entries.size() != other.entries.size()) return false;
    for (size_t i = 0; i < entries.size(); ++i) {
        if (entries[i].name != other.entries[i].name) return false;
        if (entries[i].tensor.shape != other.entries[i].tensor.shape) return false;
    }
    return true;
}

void ParamSet::set_requires_grad(bool v) {
    for (auto& e : entries) e.tensor.requires_grad = v;
}

void ParamSet::zero_grad() {
    for (auto& e : entries) e.tensor.zero_grad();
}

bool ParamSet::all_finite() const {
    for (const auto& e : entries)
        if (!e.tensor.all_finite()) return false;
    return true;
}

bool ParamSet::all_grads_present() const {
    for (const auto& e : entries)
        if (!e.tensor.has_grad()) return false;
    return true;
}

long ParamSet::total_size() const {
    long n = 0;
    for (const auto& e : entries) n += e.tensor.size();
    return n;
}

std::string ParamSet::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& e : entries) {
        j[e.name] = {{"shape", e.tensor.shape}, {"data", e.tensor.data}};
    }
    return j.dump();
}

ParamSet ParamSet::from_json(const std::string& text) {
    ParamSet ps;
    auto j = nlohmann::ordered_json::parse(text);
    check(j.is_object(), "ParamSet::from_json: expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        Tensor t;
        t.shape = it.value().at("shape").get<std::vector<int>>();
        t.data = it.value().at("data").get<std::vector<double>>();
        check(static_cast<int>(t.data.size()) == shape_size(t.shape),
              "ParamSet::from_json: entry '" + it.key() + "' data length " +
                  std::to_string(t.data.size()) + " does not match shape " +
                  t.shape_str());
        ps.add(it.key(), std::move(t));
    }
    return ps;
}

void ParamSet::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    check(out.good(), "ParamSet::save: cannot open " + path.string());
    out << to_json() << "\n";
    check(out.good(), "ParamSet::save: write failed for " + path.string());
}

ParamSet ParamSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    check(in.good(), "ParamSet::load: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    return from_json(text);
}

void axpy(ParamSet& x, double c, const ParamSet& y) {
    check(x.compatible_with(y), "axpy: parameter sets are not aggregation-compatible");
    for (size_t i = 0; i < x.entries.size(); ++i) {
        auto& xd = x.entries[i].tensor.data;
        const auto& yd = y.entries[i].tensor.data;
        for (size_t k = 0; k < xd.size(); ++k) xd[k] += c * yd[k];
    }
}

void scale_params(ParamSet& x, double c) {
    for (auto& e : x.entries)
        for (auto& v : e.tensor.data) v *= c;
}

AdamState AdamState::init(const ParamSet& params, AdamConfig cfg) {
    AdamState s;
    s.cfg = cfg;
    s.first_moment.reserve(params.entries.size());
    s.second_moment.reserve(params.entries.size());
    for (const auto& e : params.entries) {
        s.first_moment.emplace_back(e.tensor.data.size(), 0.0);
        s.second_moment.emplace_back(e.tensor.data.size(), 0.0);
    }
    return s;
}

void adam_step(ParamSet& params, AdamState& state) {
    check(state.first_moment.size() == params.entries.size(),
          "adam_step: state does not mirror the parameter set");
    state.step_count += 1;
    const auto& c = state.cfg;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step_count));
    for (size_t i = 0; i < params.entries.size(); ++i) {
        Tensor& t = params.entries[i].tensor;
        check(t.has_grad(), "adam_step: missing gradient on parameter '" +
                                params.entries[i].name + "'");
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (size_t k = 0; k < t.data.size(); ++k) {
            const double g = t.grad[k];
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            t.data[k] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
            check(std::isfinite(t.data[k]),
                  "adam_step: non-finite update on parameter '" +
                      params.entries[i].name + "'");
        }
    }
}

Tensor glorot_uniform(int fan_in, int fan_out, std::vector<int> shape, Rng& rng) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

ParamSet make_mlp(const std::string& prefix, const std::vector<int>& widths, Rng& rng) {
    check(widths.size() >= 2, "make_mlp: need at least input and output widths");
    ParamSet ps;
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
        const int in = widths[l];
        const int out = widths[l + 1];
        ps.add(prefix + ".w" + std::to_string(l), glorot_uniform(in, out, {in, out}, rng));
        ps.add(prefix + ".b" + std::to_string(l), Tensor({1, out}));
    }
    return ps;
}

Var Bound::operator[](const std::string& name) const {
    int i = params->index_of(name);
    check(i >= 0, "Bound: no parameter named '" + name + "'");
    return vars[static_cast<size_t>(i)];
}

Bound bind_trainable(Tape& tape, ParamSet& params) {
    Bound b;
    b.params = &params;
    b.vars.reserve(params.entries.size());
    for (auto& e : params.entries) {
        e.tensor.requires_grad = true;
        b.vars.push_back(tape.leaf(e.tensor));
    }
    return b;
}

Bound bind_frozen(Tape& tape, const ParamSet& params) {
    Bound b;
    b.params = &params;
    b.vars.reserve(params.entries.size());
    for (const auto& e : params.entries) {
        Tensor t = e.tensor;
        t.requires_grad = false;
        t.grad.clear();
        b.vars.push_back(tape.constant(std::move(t)));
    }
    return b;
}

Var apply_act(Var x, Act act) {
    switch (act) {
        case Act::none: return x;
        case Act::relu: return relu(x);
        case Act::leaky_relu: return leaky_relu(x);
        case Act::tanh: return tanh_op(x);
        case Act::sigmoid: return sigmoid(x);
    }
    fail("apply_act: unknown activation");
}

int mlp_layers(const ParamSet& params, const std::string& prefix) {
    int n = 0;
    while (params.index_of(prefix + ".w" + std::to_string(n)) >= 0) ++n;
    check(n > 0, "mlp_layers: no layers with prefix '" + prefix + "'");
    return n;
}

Var mlp_forward(const Bound& b, const std::string& prefix, Var x, Act hidden, Act out) {
    const int layers = mlp_layers(*b.params, prefix);
    Var h = x;
    for (int l = 0; l < layers; ++l) {
        h = dense(h, b[prefix + ".w" + std::to_string(l)],
                  b[prefix + ".b" + std::to_string(l)]);
        h = apply_act(h, l + 1 < layers ? hidden : out);
    }
    return h;
}

} // namespace fedack
