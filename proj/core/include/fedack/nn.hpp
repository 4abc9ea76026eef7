#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fedack/rng.hpp"
#include "fedack/tape.hpp"
#include "fedack/tensor.hpp"

namespace fedack {

// Ordered, named parameter tensors of one network. Two sets are
// aggregation-compatible iff names and shapes match pairwise in order.
struct ParamSet {
    struct Entry {
        std::string name;
        Tensor tensor;
    };
    std::vector<Entry> entries;

    Tensor& add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    const Tensor* find(const std::string& name) const;
    int index_of(const std::string& name) const; // -1 if absent

    bool compatible_with(const ParamSet& other) const;
    void set_requires_grad(bool v);
    void zero_grad();
    bool all_finite() const;
    bool all_grads_present() const;
    long total_size() const;
    bool empty() const { return entries.empty(); }

    std::string to_json() const;
    static ParamSet from_json(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static ParamSet load(const std::filesystem::path& path);
};

// x += c * y over all parameters; sets must be compatible.
void axpy(ParamSet& x, double c, const ParamSet& y);
void scale_params(ParamSet& x, double c);

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    long step_count = 0;

    static AdamState init(const ParamSet& params, AdamConfig cfg);
};

// One Adam update with bias correction from the gradients stored on the
// parameter tensors. Missing gradients or non-finite updates are hard errors.
void adam_step(ParamSet& params, AdamState& state);

// ---- initialization ---------------------------------------------------------

Tensor glorot_uniform(int fan_in, int fan_out, std::vector<int> shape, Rng& rng);

// Dense stack "<prefix>.w0/b0 ... w{L-1}/b{L-1}" over the given widths
// (widths.size() >= 2). Weights are glorot uniform, biases zero.
ParamSet make_mlp(const std::string& prefix, const std::vector<int>& widths, Rng& rng);

// ---- tape binding -----------------------------------------------------------

// A ParamSet bound onto a tape, entry order preserved.
struct Bound {
    const ParamSet* params = nullptr;
    std::vector<Var> vars;

    Var operator[](const std::string& name) const;
    Var at(size_t i) const { return vars[i]; }
};

Bound bind_trainable(Tape& tape, ParamSet& params);
Bound bind_frozen(Tape& tape, const ParamSet& params);

enum class Act { none, relu, leaky_relu, tanh, sigmoid };

Var apply_act(Var x, Act act);

// Forward through the dense stack created by make_mlp. hidden applies to all
// layers but the last; out to the last.
Var mlp_forward(const Bound& b, const std::string& prefix, Var x, Act hidden, Act out);
int mlp_layers(const ParamSet& params, const std::string& prefix);

} // namespace fedack
