#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "ctrec/tensor.hpp"

namespace ctrec {

// Dynamic-tape reverse-mode autodiff over Tensor. Each forward pass builds a
// fresh graph of AdNodes referencing persistent leaf parameters; backward()
// runs the tape in reverse topological order. Single-threaded by design.

struct AdNode {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<std::shared_ptr<AdNode>> parents;
    std::function<void(AdNode&)> backward_fn;

    void ensure_grad() {
        if (!grad_alloc) {
            grad = Tensor(value.shape());
            grad_alloc = true;
        }
    }
};

class Var {
public:
    Var() = default;
    explicit Var(Tensor v, bool requires_grad = false)
        : node_(std::make_shared<AdNode>()) {
        node_->value = std::move(v);
        node_->requires_grad = requires_grad;
    }

    bool defined() const { return static_cast<bool>(node_); }
    const Tensor& value() const { return node_->value; }
    Tensor& value_mut() { return node_->value; }
    bool requires_grad() const { return node_->requires_grad; }

    const Tensor& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() {
        if (node_->grad_alloc) node_->grad.fill(0.0);
    }

    Var detach() const { return Var(node_->value, false); }

    std::shared_ptr<AdNode> node() const { return node_; }

private:
    std::shared_ptr<AdNode> node_;
};

// Runs reverse-mode accumulation from a scalar root (size-1 tensor).
void backward(const Var& root);

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(AdNode&)> bw);

// ---- elementwise / scalar ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var add(const Var& a, real s);
Var mul(const Var& a, real s);
Var vabs(const Var& a);
Var vexp(const Var& a);
Var relu(const Var& a);

// broadcast against a scalar ({1}) Var
Var bcast_sub(const Var& x, const Var& s);   // x - s
Var bcast_mul(const Var& x, const Var& s);   // x * s
Var bcast_div(const Var& x, const Var& s);   // x / s
Var div_scalar(const Var& a, const Var& b);  // {1} / {1}

// ---- reductions (scalar {1} results) ----
Var reduce_sum(const Var& a);
Var reduce_mean(const Var& a);
Var reduce_min(const Var& a);  // subgradient to first argmin
Var reduce_max(const Var& a);
Var min2(const Var& a, const Var& b);  // scalars
Var max2(const Var& a, const Var& b);

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);            // (N,K) x (K,C)
Var rowscale(const Var& x, const Var& s);          // (N,C) * s[C] per column
Var column(const Var& w, int c);                   // (K,C) -> (K)
Var elem(const Var& v, int i);                     // (K) -> {1}

// ---- neural net ----
Var conv2d(const Var& x, const Var& w, int stride, int pad);      // no bias
Var group_norm(const Var& x, const Var& gamma, const Var& beta, int groups, real eps = 1e-5);
Var global_avg_pool(const Var& x);                 // (N,C,H,W) -> (N,C)

// ---- 2-d map ops for the loss stack ----
Var reflect_pad2d(const Var& x, int p);            // (h,w) -> (h+2p, w+2p)
Var box_sum2d(const Var& x, int win);              // valid window sums
// Backward bilinear warp, clamp-to-edge sampling; flow is (2,h,w) constant,
// channel 0 = x displacement, channel 1 = y displacement.
Var warp_bilinear(const Var& map, const Tensor& flow);
// CAM assembly: features (K,h,w) are constants, eff_col (K) learns.
Var cam_combine(const Tensor& features, const Var& eff_col);

// Frame-summed focal terms: sum_i -(1 - p_y)^gamma * log p_y over rows of
// logits (N,C). Stable log-sum-exp; gradient handled in closed form.
Var focal_loss_sum(const Var& logits, const std::vector<int>& labels, real gamma);

}  // namespace ctrec
