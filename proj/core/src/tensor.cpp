#include "fedack/tensor.hpp"

#include <cmath>
#include <sstream>

#include "fedack/common.hpp"

namespace fedack {

int shape_size(const std::vector<int>& shape) {
    int n = 1;
    for (int d : shape) {
        check(d > 0, "tensor shape entries must be positive, got " + shape_str(shape));
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

Tensor::Tensor(std::vector<int> s, double fill)
    : shape(std::move(s)), data(static_cast<size_t>(shape_size(shape)), fill) {}

Tensor Tensor::scalar(double v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
}

Tensor Tensor::vec(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data = std::move(v);
    check(!t.data.empty(), "Tensor::vec: empty vector");
    return t;
}

Tensor Tensor::matrix(int rows, int cols, std::vector<double> v) {
    Tensor t;
    t.shape = {rows, cols};
    t.data = std::move(v);
    check(static_cast<int>(t.data.size()) == shape_size(t.shape),
          "Tensor::matrix: data length " + std::to_string(t.data.size()) +
              " does not match shape " + t.shape_str());
    return t;
}

void Tensor::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
    grad.assign(data.size(), 0.0);
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string Tensor::shape_str() const {
    return fedack::shape_str(shape);
}

} // namespace fedack
