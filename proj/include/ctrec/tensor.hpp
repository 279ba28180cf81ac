#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "ctrec/common.hpp"

namespace ctrec {

using real = double;

// Dense row-major tensor of doubles. Plain value type; the autodiff layer
// wraps it, everything else passes it around by value or const reference.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, real fill = 0.0)
        : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

    static Tensor from(std::vector<int> shape, std::vector<real> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (checked_size(t.shape_) != static_cast<int64_t>(data.size()))
            throw ContractViolation("Tensor::from: shape/data size mismatch");
        t.data_ = std::move(data);
        return t;
    }

    static Tensor scalar(real v) { return from({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    real* data() { return data_.data(); }
    const real* data() const { return data_.data(); }

    real& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    real operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    real& at(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    real at(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    real& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    real at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
    }
    real& at(int i, int j, int k, int l) {
        return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    real at(int i, int j, int k, int l) const {
        return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(real v) { std::fill(data_.begin(), data_.end(), v); }

private:
    static int64_t checked_size(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ContractViolation("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<real> data_;
};

// Copy of one index along the leading dimension: (N, ...) -> (...).
Tensor slice_front(const Tensor& t, int i);
// Gather of several leading indices: (N, ...) -> (|idx|, ...).
Tensor gather_front(const Tensor& t, const std::vector<int>& idx);

// C = alpha * A(m x k) * B(k x n) + beta * C. Row-major, contiguous.
void gemm_nn(int m, int n, int k, real alpha, const real* a, const real* b, real beta, real* c);
// C = alpha * A^T(m x k, stored k x m) * B(k x n) + beta * C
void gemm_tn(int m, int n, int k, real alpha, const real* a, const real* b, real beta, real* c);
// C = alpha * A(m x k) * B^T(k x n, stored n x k) + beta * C
void gemm_nt(int m, int n, int k, real alpha, const real* a, const real* b, real beta, real* c);

}  // namespace ctrec
