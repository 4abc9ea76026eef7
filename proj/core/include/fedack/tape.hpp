#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "fedack/tensor.hpp"

namespace fedack {

class Tape;

// Handle into a tape node. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    int idx = -1;

    bool defined() const { return tape != nullptr && idx >= 0; }
    const Tensor& val() const;
    double scalar() const;
};

// Reverse-mode autodiff tape. Nodes are appended in topological order during
// the forward pass; backward() sweeps them in reverse. A leaf bound to an
// external Tensor with requires_grad accumulates its gradient back into that
// tensor's grad buffer.
class Tape {
public:
    Var leaf(Tensor& t);
    Var constant(Tensor t);
    Var constant_scalar(double v);

    // loss must be a scalar (single element). Gradients accumulate into the
    // grad buffers of all requires_grad leaf tensors.
    void backward(Var loss);

    int size() const { return static_cast<int>(nodes_.size()); }
    void clear();

    // --- graph building interface (used by the op functions) ---
    using BackFn = std::function<void(Tape&, int self)>;
    Var make(Tensor val, std::vector<int> parents, BackFn back);

    const Tensor& value(int idx) const { return nodes_[static_cast<size_t>(idx)].val; }
    bool needs_grad(int idx) const { return nodes_[static_cast<size_t>(idx)].requires_grad; }
    // Gradient buffer of a node, allocated on first use.
    std::vector<double>& grad_buf(int idx);
    bool grad_allocated(int idx) const { return nodes_[static_cast<size_t>(idx)].grad_alloc; }

private:
    struct Node {
        Tensor val;
        std::vector<double> grad;
        bool requires_grad = false;
        bool grad_alloc = false;
        Tensor* external = nullptr;
        std::vector<int> parents;
        BackFn back;
    };
    std::deque<Node> nodes_;
};

// ---- operations -----------------------------------------------------------
// All ops validate shapes and record a backward closure when any input
// requires grad. Elementwise ops require identical shapes.

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);

Var relu(Var a);
Var leaky_relu(Var a, double alpha = 0.2);
Var tanh_op(Var a);
Var sigmoid(Var a);
Var exp_op(Var a);
Var log_op(Var a);   // input clamped below at 1e-12
Var sqrt_op(Var a);  // derivative 0 at 0
Var softplus(Var a); // log(1 + e^x), overflow-safe

Var matmul(Var a, Var b);
Var add_rowvec(Var m, Var v);
Var dense(Var input, Var weights, Var bias);
Var concat_cols(Var a, Var b);
Var vcat(Var a, Var b);
Var stack_rows(const std::vector<Var>& rows);
Var row(Var m, int i);
Var reshape(Var a, std::vector<int> new_shape);

Var sum(Var a);
Var mean(Var a);
Var softmax(Var a);     // row-wise, max-subtracted
Var log_softmax(Var a); // row-wise

// Mean over rows of -logp[i, labels[i]].
Var nll(Var logp, const std::vector<int>& labels);
// Sum over rows of -w[i] * logp[i, labels[i]].
Var weighted_nll(Var logp, const std::vector<int>& labels, const std::vector<double>& w);
// Sum over all entries of p * log(p/q); q clamped below at 1e-12.
Var kl_div(Var p, Var q);
// Sum over rows of w[i] * KL(p_i || q_i).
Var weighted_kl_rows(Var p, Var q, const std::vector<double>& w);
// Cosine similarity of two equal-size tensors viewed flat; 0 if either norm is 0.
Var cosine_sim(Var a, Var b);

Var detach(Var a);

} // namespace fedack
