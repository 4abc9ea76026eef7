#pragma once

#include <string>
#include <vector>

namespace fedack {

// Dense row-major tensor of doubles. Rank 1 ({n}) and rank 2 ({rows, cols})
// are the shapes used throughout; scalars are shape {1}. A rank-1 tensor acts
// as a single row wherever a matrix is expected.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad; // empty, or data.size() once allocated

    Tensor() = default;
    Tensor(std::vector<int> s, double fill = 0.0);

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s), 0.0); }
    static Tensor scalar(double v);
    static Tensor vec(std::vector<double> v);
    static Tensor matrix(int rows, int cols, std::vector<double> v);

    int size() const { return static_cast<int>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int rows() const { return rank() == 2 ? shape[0] : 1; }
    int cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    void ensure_grad();
    void zero_grad();
    bool has_grad() const { return grad.size() == data.size() && !data.empty(); }

    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

int shape_size(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

} // namespace fedack
