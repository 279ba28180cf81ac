#include "ctrec/tensor.hpp"

#include <cstring>

namespace ctrec {

Tensor slice_front(const Tensor& t, int i) {
    if (t.rank() < 1 || i < 0 || i >= t.dim(0)) throw ContractViolation("slice_front: bad index");
    std::vector<int> shape(t.shape().begin() + 1, t.shape().end());
    const int64_t stride = t.size() / t.dim(0);
    Tensor out(shape);
    std::memcpy(out.data(), t.data() + i * stride, static_cast<size_t>(stride) * sizeof(real));
    return out;
}

Tensor gather_front(const Tensor& t, const std::vector<int>& idx) {
    if (t.rank() < 1) throw ContractViolation("gather_front: rank-0 tensor");
    std::vector<int> shape = t.shape();
    shape[0] = static_cast<int>(idx.size());
    const int64_t stride = t.size() / t.dim(0);
    Tensor out(shape);
    for (size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || idx[k] >= t.dim(0)) throw ContractViolation("gather_front: bad index");
        std::memcpy(out.data() + static_cast<int64_t>(k) * stride, t.data() + idx[k] * stride,
                    static_cast<size_t>(stride) * sizeof(real));
    }
    return out;
}

// Straightforward ikj kernels. Row-major C accumulates one A element against
// a full B row, which the compiler vectorizes well; deterministic because
// every C element is produced by a single fixed-order loop.

void gemm_nn(int m, int n, int k, real alpha, const real* a, const real* b, real beta, real* c) {
    for (int i = 0; i < m; ++i) {
        real* ci = c + static_cast<size_t>(i) * n;
        if (beta == 0.0) {
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        } else if (beta != 1.0) {
            for (int j = 0; j < n; ++j) ci[j] *= beta;
        }
        const real* ai = a + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const real av = alpha * ai[p];
            const real* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void gemm_tn(int m, int n, int k, real alpha, const real* a, const real* b, real beta, real* c) {
    // a stored (k x m): a[p*m + i]
    for (int i = 0; i < m; ++i) {
        real* ci = c + static_cast<size_t>(i) * n;
        if (beta == 0.0) {
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        } else if (beta != 1.0) {
            for (int j = 0; j < n; ++j) ci[j] *= beta;
        }
        for (int p = 0; p < k; ++p) {
            const real av = alpha * a[static_cast<size_t>(p) * m + i];
            const real* bp = b + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

void gemm_nt(int m, int n, int k, real alpha, const real* a, const real* b, real beta, real* c) {
    // b stored (n x k): b[j*k + p]; dot-product form
    for (int i = 0; i < m; ++i) {
        const real* ai = a + static_cast<size_t>(i) * k;
        real* ci = c + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const real* bj = b + static_cast<size_t>(j) * k;
            real acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * ci[j]);
        }
    }
}

}  // namespace ctrec
