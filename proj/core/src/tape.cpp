#include "fedack/tape.hpp"

#include <algorithm>
#include <cmath>

#include "fedack/common.hpp"

namespace fedack {

namespace {
constexpr double kLogFloor = 1e-12;
constexpr double kNormFloor = 1e-30;
} // namespace

const Tensor& Var::val() const {
    check(defined(), "Var: use of undefined variable");
    return tape->value(idx);
}

double Var::scalar() const {
    const Tensor& t = val();
    check(t.size() == 1, "Var::scalar: tensor has shape " + t.shape_str());
    return t.data[0];
}

Var Tape::leaf(Tensor& t) {
    Node n;
    n.val = t;
    n.requires_grad = t.requires_grad;
    n.external = t.requires_grad ? &t : nullptr;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor t) {
    Node n;
    n.val = std::move(t);
    n.requires_grad = false;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant_scalar(double v) {
    return constant(Tensor::scalar(v));
}

Var Tape::make(Tensor val, std::vector<int> parents, BackFn back) {
    Node n;
    n.val = std::move(val);
    for (int p : parents)
        if (nodes_[static_cast<size_t>(p)].requires_grad) n.requires_grad = true;
    if (n.requires_grad) {
        n.parents = std::move(parents);
        n.back = std::move(back);
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

std::vector<double>& Tape::grad_buf(int idx) {
    Node& n = nodes_[static_cast<size_t>(idx)];
    if (!n.grad_alloc) {
        n.grad.assign(n.val.data.size(), 0.0);
        n.grad_alloc = true;
    }
    return n.grad;
}

void Tape::backward(Var loss) {
    check(loss.defined() && loss.tape == this, "backward: loss is not on this tape");
    const Tensor& lv = value(loss.idx);
    check(lv.size() == 1,
          "backward: loss must be scalar, got shape " + lv.shape_str());
    check(needs_grad(loss.idx),
          "backward: loss does not depend on any trainable parameter");
    grad_buf(loss.idx)[0] = 1.0;
    for (int i = loss.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (!n.requires_grad || !n.grad_alloc) continue;
        if (n.back) n.back(*this, i);
        if (n.external) {
            n.external->ensure_grad();
            for (size_t j = 0; j < n.grad.size(); ++j) n.external->grad[j] += n.grad[j];
        }
    }
}

void Tape::clear() {
    nodes_.clear();
}

// ---- op helpers ------------------------------------------------------------

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    check(a.val().same_shape(b.val()),
          std::string(op) + ": shape mismatch " + a.val().shape_str() + " vs " +
              b.val().shape_str());
}

// Elementwise unary op with derivative computed from (x, y).
template <class F, class DF>
Var unary(Var a, F f, DF /*df*/, const char* /*name*/) {
    const Tensor& x = a.val();
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v = f(v);
    Tensor ycopy = y;
    return a.tape->make(std::move(y), {a.idx}, [a, x, ycopy](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * DF()(x.data[i], ycopy.data[i]);
    });
}

} // namespace

// ---- elementwise -----------------------------------------------------------

Var add(Var a, Var b) {
    check_same_shape(a, b, "add");
    Tensor y = a.val();
    y.requires_grad = false;
    y.grad.clear();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] += b.val().data[i];
    return a.tape->make(std::move(y), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        for (Var v : {a, b}) {
            if (!t.needs_grad(v.idx)) continue;
            auto& gv = t.grad_buf(v.idx);
            for (size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
    });
}

Var sub(Var a, Var b) {
    check_same_shape(a, b, "sub");
    Tensor y = a.val();
    y.requires_grad = false;
    y.grad.clear();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] -= b.val().data[i];
    return a.tape->make(std::move(y), {a.idx, b.idx}, [a, b](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (t.needs_grad(a.idx)) {
            auto& ga = t.grad_buf(a.idx);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(b.idx)) {
            auto& gb = t.grad_buf(b.idx);
            for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
        }
    });
}

Var mul(Var a, Var b) {
    check_same_shape(a, b, "mul");
    Tensor y = a.val();
    y.requires_grad = false;
    y.grad.clear();
    const Tensor xa = a.val();
    const Tensor xb = b.val();
    for (size_t i = 0; i < y.data.size(); ++i) y.data[i] *= xb.data[i];
    return a.tape->make(std::move(y), {a.idx, b.idx}, [a, b, xa, xb](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (t.needs_grad(a.idx)) {
            auto& ga = t.grad_buf(a.idx);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * xb.data[i];
        }
        if (t.needs_grad(b.idx)) {
            auto& gb = t.grad_buf(b.idx);
            for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * xa.data[i];
        }
    });
}

Var scale(Var a, double c) {
    Tensor y = a.val();
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v *= c;
    return a.tape->make(std::move(y), {a.idx}, [a, c](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
}

Var add_scalar(Var a, double c) {
    Tensor y = a.val();
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v += c;
    return a.tape->make(std::move(y), {a.idx}, [a](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var neg(Var a) {
    return scale(a, -1.0);
}

// ---- unary nonlinearities ---------------------------------------------------

namespace {
struct DRelu {
    double operator()(double x, double) const { return x > 0.0 ? 1.0 : 0.0; }
};
struct DTanh {
    double operator()(double, double y) const { return 1.0 - y * y; }
};
struct DSigmoid {
    double operator()(double, double y) const { return y * (1.0 - y); }
};
struct DExp {
    double operator()(double, double y) const { return y; }
};
} // namespace

Var relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, DRelu(), "relu");
}

Var leaky_relu(Var a, double alpha) {
    const Tensor x = a.val();
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v = v > 0.0 ? v : alpha * v;
    return a.tape->make(std::move(y), {a.idx}, [a, x, alpha](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] * (x.data[i] > 0.0 ? 1.0 : alpha);
    });
}

Var tanh_op(Var a) {
    return unary(a, [](double x) { return std::tanh(x); }, DTanh(), "tanh");
}

Var sigmoid(Var a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, DSigmoid(),
                 "sigmoid");
}

Var exp_op(Var a) {
    return unary(a, [](double x) { return std::exp(x); }, DExp(), "exp");
}

Var log_op(Var a) {
    const Tensor x = a.val();
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v = std::log(std::max(v, kLogFloor));
    return a.tape->make(std::move(y), {a.idx}, [a, x](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] / std::max(x.data[i], kLogFloor);
    });
}

Var sqrt_op(Var a) {
    const Tensor x = a.val();
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data) v = std::sqrt(std::max(v, 0.0));
    Tensor ycopy = y;
    return a.tape->make(std::move(y), {a.idx}, [a, ycopy](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i) {
            double s = ycopy.data[i];
            ga[i] += s > 1e-12 ? g[i] / (2.0 * s) : 0.0;
        }
    });
}

Var softplus(Var a) {
    const Tensor x = a.val();
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (auto& v : y.data)
        v = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    return a.tape->make(std::move(y), {a.idx}, [a, x](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i)
            ga[i] += g[i] / (1.0 + std::exp(-x.data[i]));
    });
}

// ---- linear algebra / shape -------------------------------------------------

Var matmul(Var a, Var b) {
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    check(tb.rank() == 2, "matmul: rhs must be rank 2, got " + tb.shape_str());
    const int m = ta.rows();
    const int k = ta.cols();
    check(k == tb.rows(), "matmul: inner dims disagree " + ta.shape_str() + " vs " +
                              tb.shape_str());
    const int n = tb.cols();
    Tensor y({m, n});
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) {
            const double av = ta.data[static_cast<size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = &tb.data[static_cast<size_t>(p) * n];
            double* yrow = &y.data[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
        }
    const Tensor xa = ta;
    const Tensor xb = tb;
    return a.tape->make(std::move(y), {a.idx, b.idx},
                        [a, b, xa, xb, m, k, n](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (t.needs_grad(a.idx)) {
            auto& ga = t.grad_buf(a.idx); // dA = G * B^T
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (int j = 0; j < n; ++j)
                        s += g[static_cast<size_t>(i) * n + j] *
                             xb.data[static_cast<size_t>(p) * n + j];
                    ga[static_cast<size_t>(i) * k + p] += s;
                }
        }
        if (t.needs_grad(b.idx)) {
            auto& gb = t.grad_buf(b.idx); // dB = A^T * G
            for (int p = 0; p < k; ++p)
                for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i)
                        s += xa.data[static_cast<size_t>(i) * k + p] *
                             g[static_cast<size_t>(i) * n + j];
                    gb[static_cast<size_t>(p) * n + j] += s;
                }
        }
    });
}

Var add_rowvec(Var m, Var v) {
    const Tensor& tm = m.val();
    const Tensor& tv = v.val();
    const int rows = tm.rows();
    const int cols = tm.cols();
    check(tv.size() == cols, "add_rowvec: vector size " + tv.shape_str() +
                                 " does not match matrix " + tm.shape_str());
    Tensor y = tm;
    y.requires_grad = false;
    y.grad.clear();
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) y.data[static_cast<size_t>(i) * cols + j] += tv.data[static_cast<size_t>(j)];
    return m.tape->make(std::move(y), {m.idx, v.idx}, [m, v, rows, cols](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (t.needs_grad(m.idx)) {
            auto& gm = t.grad_buf(m.idx);
            for (size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
        }
        if (t.needs_grad(v.idx)) {
            auto& gv = t.grad_buf(v.idx);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j)
                    gv[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * cols + j];
        }
    });
}

Var dense(Var input, Var weights, Var bias) {
    const Tensor& x = input.val();
    const Tensor& w = weights.val();
    check(w.rank() == 2, "dense: weights must be rank 2, got " + w.shape_str());
    check(x.cols() == w.rows(), "dense: input " + x.shape_str() +
                                    " incompatible with weights " + w.shape_str());
    check(bias.val().size() == w.cols(), "dense: bias " + bias.val().shape_str() +
                                             " incompatible with weights " +
                                             w.shape_str());
    return add_rowvec(matmul(input, weights), bias);
}

Var concat_cols(Var a, Var b) {
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    const int rows = ta.rows();
    check(tb.rows() == rows, "concat_cols: row mismatch " + ta.shape_str() + " vs " +
                                 tb.shape_str());
    const int ca = ta.cols();
    const int cb = tb.cols();
    Tensor y({rows, ca + cb});
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < ca; ++j) y.at(i, j) = ta.data[static_cast<size_t>(i) * ca + j];
        for (int j = 0; j < cb; ++j) y.at(i, ca + j) = tb.data[static_cast<size_t>(i) * cb + j];
    }
    return a.tape->make(std::move(y), {a.idx, b.idx},
                        [a, b, rows, ca, cb](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        const int cols = ca + cb;
        if (t.needs_grad(a.idx)) {
            auto& ga = t.grad_buf(a.idx);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < ca; ++j)
                    ga[static_cast<size_t>(i) * ca + j] += g[static_cast<size_t>(i) * cols + j];
        }
        if (t.needs_grad(b.idx)) {
            auto& gb = t.grad_buf(b.idx);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cb; ++j)
                    gb[static_cast<size_t>(i) * cb + j] += g[static_cast<size_t>(i) * cols + ca + j];
        }
    });
}

Var vcat(Var a, Var b) {
    const Tensor& ta = a.val();
    const Tensor& tb = b.val();
    const int cols = ta.cols();
    check(tb.cols() == cols, "vcat: column mismatch " + ta.shape_str() + " vs " +
                                 tb.shape_str());
    const int ra = ta.rows();
    const int rb = tb.rows();
    Tensor y({ra + rb, cols});
    std::copy(ta.data.begin(), ta.data.end(), y.data.begin());
    std::copy(tb.data.begin(), tb.data.end(), y.data.begin() + ta.size());
    return a.tape->make(std::move(y), {a.idx, b.idx}, [a, b, ra, rb, cols](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (t.needs_grad(a.idx)) {
            auto& ga = t.grad_buf(a.idx);
            for (size_t i = 0; i < static_cast<size_t>(ra) * cols; ++i) ga[i] += g[i];
        }
        if (t.needs_grad(b.idx)) {
            auto& gb = t.grad_buf(b.idx);
            const size_t off = static_cast<size_t>(ra) * cols;
            for (size_t i = 0; i < static_cast<size_t>(rb) * cols; ++i) gb[i] += g[off + i];
        }
    });
}

Var stack_rows(const std::vector<Var>& rows) {
    check(!rows.empty(), "stack_rows: empty row list");
    Tape* tape = rows[0].tape;
    const int cols = rows[0].val().size();
    Tensor y({static_cast<int>(rows.size()), cols});
    std::vector<int> parents;
    parents.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const Tensor& r = rows[i].val();
        check(r.size() == cols, "stack_rows: row " + std::to_string(i) + " has shape " +
                                    r.shape_str() + ", expected " +
                                    std::to_string(cols) + " entries");
        std::copy(r.data.begin(), r.data.end(),
                  y.data.begin() + static_cast<long>(i) * cols);
        parents.push_back(rows[i].idx);
    }
    std::vector<Var> rcopy = rows;
    return tape->make(std::move(y), std::move(parents), [rcopy, cols](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        for (size_t i = 0; i < rcopy.size(); ++i) {
            if (!t.needs_grad(rcopy[i].idx)) continue;
            auto& gr = t.grad_buf(rcopy[i].idx);
            for (int j = 0; j < cols; ++j) gr[static_cast<size_t>(j)] += g[i * cols + j];
        }
    });
}

Var row(Var m, int i) {
    const Tensor& tm = m.val();
    check(tm.rank() == 2, "row: need rank-2 tensor, got " + tm.shape_str());
    check(i >= 0 && i < tm.rows(), "row: index " + std::to_string(i) + " out of range");
    const int cols = tm.cols();
    Tensor y({1, cols});
    std::copy(tm.data.begin() + static_cast<long>(i) * cols,
              tm.data.begin() + static_cast<long>(i + 1) * cols, y.data.begin());
    return m.tape->make(std::move(y), {m.idx}, [m, i, cols](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(m.idx)) return;
        auto& gm = t.grad_buf(m.idx);
        for (int j = 0; j < cols; ++j) gm[static_cast<size_t>(i) * cols + j] += g[static_cast<size_t>(j)];
    });
}

Var reshape(Var a, std::vector<int> new_shape) {
    const Tensor& x = a.val();
    check(shape_size(new_shape) == x.size(),
          "reshape: size mismatch " + x.shape_str() + " -> " + shape_str(new_shape));
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    y.shape = std::move(new_shape);
    return a.tape->make(std::move(y), {a.idx}, [a](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

// ---- reductions -------------------------------------------------------------

Var sum(Var a) {
    const Tensor& x = a.val();
    double s = 0.0;
    for (double v : x.data) s += v;
    return a.tape->make(Tensor::scalar(s), {a.idx}, [a](Tape& t, int self) {
        const double g = t.grad_buf(self)[0];
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (auto& v : ga) v += g;
    });
}

Var mean(Var a) {
    const int n = a.val().size();
    return scale(sum(a), 1.0 / n);
}

Var softmax(Var a) {
    const Tensor& x = a.val();
    const int rows = x.rows();
    const int cols = x.cols();
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (int i = 0; i < rows; ++i) {
        double mx = -1e308;
        for (int j = 0; j < cols; ++j) mx = std::max(mx, x.data[static_cast<size_t>(i) * cols + j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) {
            double e = std::exp(x.data[static_cast<size_t>(i) * cols + j] - mx);
            y.data[static_cast<size_t>(i) * cols + j] = e;
            z += e;
        }
        for (int j = 0; j < cols; ++j) y.data[static_cast<size_t>(i) * cols + j] /= z;
    }
    Tensor p = y;
    return a.tape->make(std::move(y), {a.idx}, [a, p, rows, cols](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (int i = 0; i < rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < cols; ++j)
                dot += g[static_cast<size_t>(i) * cols + j] * p.data[static_cast<size_t>(i) * cols + j];
            for (int j = 0; j < cols; ++j) {
                const size_t k = static_cast<size_t>(i) * cols + j;
                ga[k] += p.data[k] * (g[k] - dot);
            }
        }
    });
}

Var log_softmax(Var a) {
    const Tensor& x = a.val();
    const int rows = x.rows();
    const int cols = x.cols();
    Tensor y = x;
    y.requires_grad = false;
    y.grad.clear();
    for (int i = 0; i < rows; ++i) {
        double mx = -1e308;
        for (int j = 0; j < cols; ++j) mx = std::max(mx, x.data[static_cast<size_t>(i) * cols + j]);
        double z = 0.0;
        for (int j = 0; j < cols; ++j) z += std::exp(x.data[static_cast<size_t>(i) * cols + j] - mx);
        const double lz = mx + std::log(z);
        for (int j = 0; j < cols; ++j) y.data[static_cast<size_t>(i) * cols + j] -= lz;
    }
    Tensor ls = y;
    return a.tape->make(std::move(y), {a.idx}, [a, ls, rows, cols](Tape& t, int self) {
        auto& g = t.grad_buf(self);
        if (!t.needs_grad(a.idx)) return;
        auto& ga = t.grad_buf(a.idx);
        for (int i = 0; i < rows; ++i) {
            double gsum = 0.0;
            for (int j = 0; j < cols; ++j) gsum += g[static_cast<size_t>(i) * cols + j];
            for (int j = 0; j < cols; ++j) {
                const size_t k = static_cast<size_t>(i) * cols + j;
                ga[k] += g[k] - std::exp(ls.data[k]) * gsum;
            }
        }
    });
}

// ---- classification / divergence --------------------------------------------

Var nll(Var logp, const std::vector<int>& labels) {
    const Tensor& lp = logp.val();
    const int rows = lp.rows();
    const int cols = lp.cols();
    check(rows == static_cast<int>(labels.size()),
          "nll: batch size " + std::to_string(rows) + " vs " +
              std::to_string(labels.size()) + " labels");
    check(rows > 0, "nll: empty batch");
    double s = 0.0;
    for (int i = 0; i < rows; ++i) {
        check(labels[static_cast<size_t>(i)] >= 0 && labels[static_cast<size_t>(i)] < cols,
              "nll: label out of range");
        s -= lp.data[static_cast<size_t>(i) * cols + labels[static_cast<size_t>(i)]];
    }
    s /= rows;
    std::vector<int> lab = labels;
    return logp.tape->make(Tensor::scalar(s), {logp.idx}, [logp, lab, rows, cols](Tape& t, int self) {
        const double g = t.grad_buf(self)[0];
        if (!t.needs_grad(logp.idx)) return;
        auto& gl = t.grad_buf(logp.idx);
        for (int i = 0; i < rows; ++i)
            gl[static_cast<size_t>(i) * cols + lab[static_cast<size_t>(i)]] -= g / rows;
    });
}

Var weighted_nll(Var logp, const std::vector<int>& labels, const std::vector<double>& w) {
    const Tensor& lp = logp.val();
    const int rows = lp.rows();
    const int cols = lp.cols();
    check(rows == static_cast<int>(labels.size()) && rows == static_cast<int>(w.size()),
          "weighted_nll: batch/label/weight size mismatch");
    double s = 0.0;
    for (int i = 0; i < rows; ++i)
        s -= w[static_cast<size_t>(i)] * lp.data[static_cast<size_t>(i) * cols + labels[static_cast<size_t>(i)]];
    std::vector<int> lab = labels;
    std::vector<double> wc = w;
    return logp.tape->make(Tensor::scalar(s), {logp.idx}, [logp, lab, wc, rows, cols](Tape& t, int self) {
        const double g = t.grad_buf(self)[0];
        if (!t.needs_grad(logp.idx)) return;
        auto& gl = t.grad_buf(logp.idx);
        for (int i = 0; i < rows; ++i)
            gl[static_cast<size_t>(i) * cols + lab[static_cast<size_t>(i)]] -= g * wc[static_cast<size_t>(i)];
    });
}

namespace {

double kl_term(double p, double q) {
    if (p <= 0.0) return 0.0;
    return p * (std::log(std::max(p, kLogFloor)) - std::log(std::max(q, kLogFloor)));
}

} // namespace

Var kl_div(Var p, Var q) {
    check_same_shape(p, q, "kl_div");
    const Tensor xp = p.val();
    const Tensor xq = q.val();
    double s = 0.0;
    for (size_t i = 0; i < xp.data.size(); ++i) s += kl_term(xp.data[i], xq.data[i]);
    return p.tape->make(Tensor::scalar(s), {p.idx, q.idx}, [p, q, xp, xq](Tape& t, int self) {
        const double g = t.grad_buf(self)[0];
        if (t.needs_grad(p.idx)) {
            auto& gp = t.grad_buf(p.idx);
            for (size_t i = 0; i < xp.data.size(); ++i)
                gp[i] += g * (std::log(std::max(xp.data[i], kLogFloor)) -
                              std::log(std::max(xq.data[i], kLogFloor)) + 1.0);
        }
        if (t.needs_grad(q.idx)) {
            auto& gq = t.grad_buf(q.idx);
            for (size_t i = 0; i < xp.data.size(); ++i)
                gq[i] -= g * xp.data[i] / std::max(xq.data[i], kLogFloor);
        }
    });
}

Var weighted_kl_rows(Var p, Var q, const std::vector<double>& w) {
    check_same_shape(p, q, "weighted_kl_rows");
    const Tensor xp = p.val();
    const Tensor xq = q.val();
    const int rows = xp.rows();
    const int cols = xp.cols();
    check(rows == static_cast<int>(w.size()), "weighted_kl_rows: weight count mismatch");
    double s = 0.0;
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            s += w[static_cast<size_t>(i)] *
                 kl_term(xp.data[static_cast<size_t>(i) * cols + j], xq.data[static_cast<size_t>(i) * cols + j]);
    std::vector<double> wc = w;
    return p.tape->make(Tensor::scalar(s), {p.idx, q.idx},
                        [p, q, xp, xq, wc, rows, cols](Tape& t, int self) {
        const double g = t.grad_buf(self)[0];
        if (t.needs_grad(p.idx)) {
            auto& gp = t.grad_buf(p.idx);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                    const size_t k = static_cast<size_t>(i) * cols + j;
                    gp[k] += g * wc[static_cast<size_t>(i)] *
                             (std::log(std::max(xp.data[k], kLogFloor)) -
                              std::log(std::max(xq.data[k], kLogFloor)) + 1.0);
                }
        }
        if (t.needs_grad(q.idx)) {
            auto& gq = t.grad_buf(q.idx);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) {
                    const size_t k = static_cast<size_t>(i) * cols + j;
                    gq[k] -= g * wc[static_cast<size_t>(i)] * xp.data[k] /
                             std::max(xq.data[k], kLogFloor);
                }
        }
    });
}

Var cosine_sim(Var a, Var b) {
    const Tensor xa = a.val();
    const Tensor xb = b.val();
    check(xa.size() == xb.size(), "cosine_sim: size mismatch " + xa.shape_str() +
                                      " vs " + xb.shape_str());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < xa.data.size(); ++i) {
        dot += xa.data[i] * xb.data[i];
        na += xa.data[i] * xa.data[i];
        nb += xb.data[i] * xb.data[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    const bool degenerate = na < kNormFloor || nb < kNormFloor;
    const double s = degenerate ? 0.0 : dot / (na * nb);
    return a.tape->make(Tensor::scalar(s), {a.idx, b.idx},
                        [a, b, xa, xb, na, nb, s, degenerate](Tape& t, int self) {
        if (degenerate) return; // similarity pinned to 0, no gradient
        const double g = t.grad_buf(self)[0];
        if (t.needs_grad(a.idx)) {
            auto& ga = t.grad_buf(a.idx);
            for (size_t i = 0; i < xa.data.size(); ++i)
                ga[i] += g * (xb.data[i] / (na * nb) - s * xa.data[i] / (na * na));
        }
        if (t.needs_grad(b.idx)) {
            auto& gb = t.grad_buf(b.idx);
            for (size_t i = 0; i < xb.data.size(); ++i)
                gb[i] += g * (xa.data[i] / (na * nb) - s * xb.data[i] / (nb * nb));
        }
    });
}

Var detach(Var a) {
    return a.tape->constant(a.val());
}

} // namespace fedack
