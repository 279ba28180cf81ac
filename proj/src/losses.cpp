#include "ctrec/losses.hpp"

namespace ctrec {

void LossConfig::validate() const {
    if (gamma < 0) throw ConfigError("loss: gamma must be non-negative");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("loss: alpha must be in [0,1]");
    if (beta < 0) throw ConfigError("loss: beta must be non-negative");
    if (ssim_window < 1 || ssim_window % 2 == 0)
        throw ConfigError("loss: ssim_window must be odd and >= 1");
    if (ssim_c1 <= 0 || ssim_c2 <= 0) throw ConfigError("loss: SSIM constants must be positive");
}

Var focal_loss(const Var& logits, int class_y, real gamma) {
    if (logits.value().rank() != 2 || logits.value().dim(0) != 3)
        throw ContractViolation("focal_loss: (3,C) logits expected");
    return focal_loss_sum(logits, {class_y, class_y, class_y}, gamma);
}

Var ssim(const Var& a, const Var& b, const LossConfig& cfg) {
    cfg.validate();
    if (!a.value().same_shape(b.value()) || a.value().rank() != 2)
        throw ContractViolation("ssim: two rank-2 maps of equal shape expected");
    const int win = cfg.ssim_window;
    const int pad = win / 2;
    const real inv_n = 1.0 / (win * win);

    const Var ap = reflect_pad2d(a, pad);
    const Var bp = reflect_pad2d(b, pad);
    const Var mu_a = mul(box_sum2d(ap, win), inv_n);
    const Var mu_b = mul(box_sum2d(bp, win), inv_n);
    const Var e_aa = mul(box_sum2d(mul(ap, ap), win), inv_n);
    const Var e_bb = mul(box_sum2d(mul(bp, bp), win), inv_n);
    const Var e_ab = mul(box_sum2d(mul(ap, bp), win), inv_n);
    const Var var_a = sub(e_aa, mul(mu_a, mu_a));
    const Var var_b = sub(e_bb, mul(mu_b, mu_b));
    const Var cov = sub(e_ab, mul(mu_a, mu_b));

    const Var num = mul(add(mul(mul(mu_a, mu_b), 2.0), cfg.ssim_c1),
                        add(mul(cov, 2.0), cfg.ssim_c2));
    const Var den = mul(add(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), cfg.ssim_c1),
                        add(add(var_a, var_b), cfg.ssim_c2));
    // elementwise division via reciprocal-free route: num * den^-1. A dedicated
    // elementwise div keeps gradients simpler.
    Tensor ratio = num.value();
    for (int64_t i = 0; i < ratio.size(); ++i) ratio[i] /= den.value()[i];
    Var out = make_op(std::move(ratio), {num, den}, [](AdNode& n) {
        const Tensor& numv = n.parents[0]->value;
        const Tensor& denv = n.parents[1]->value;
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            real* dst = n.parents[0]->grad.data();
            for (int64_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i] / denv[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            real* dst = n.parents[1]->grad.data();
            for (int64_t i = 0; i < n.grad.size(); ++i)
                dst[i] += -n.grad[i] * numv[i] / (denv[i] * denv[i]);
        }
    });
    return reduce_mean(out);
}

Var photometric_loss(const Var& a, const Var& b, const LossConfig& cfg) {
    if (!a.value().same_shape(b.value()))
        throw ContractViolation("photometric_loss: shape mismatch");
    const Var lo = min2(reduce_min(a), reduce_min(b));
    const Var hi = max2(reduce_max(a), reduce_max(b));
    if (hi.value()[0] == lo.value()[0]) return Var(Tensor::scalar(0.0));  // constant pair
    const Var range = sub(hi, lo);
    const Var an = bcast_div(bcast_sub(a, lo), range);
    const Var bn = bcast_div(bcast_sub(b, lo), range);
    const Var structural = mul(add(mul(ssim(an, bn, cfg), -1.0), 1.0), cfg.alpha / 2.0);
    const Var l1 = mul(reduce_mean(vabs(sub(an, bn))), 1.0 - cfg.alpha);
    return add(structural, l1);
}

Var flow_consistency_loss(const std::array<Var, 3>& cams, const FlowPair& flows,
                          const LossConfig& cfg) {
    const Var warped_past = warp(cams[0], flows.past);
    const Var warped_future = warp(cams[2], flows.future);
    return add(photometric_loss(cams[1], warped_past, cfg),
               photometric_loss(cams[1], warped_future, cfg));
}

Tensor downscale_flow(const Tensor& flow, int target_h, int target_w) {
    if (flow.rank() != 3 || flow.dim(0) != 2)
        throw ContractViolation("downscale_flow: (2,H,W) flow expected");
    const int h = flow.dim(1), w = flow.dim(2);
    if (target_h < 1 || target_w < 1 || h % target_h != 0 || w % target_w != 0)
        throw ContractViolation("downscale_flow: source dims must be integer multiples of target");
    const int by = h / target_h, bx = w / target_w;
    const real scale_u = 1.0 / bx, scale_v = 1.0 / by;
    Tensor out({2, target_h, target_w});
    for (int c = 0; c < 2; ++c) {
        const real rescale = c == 0 ? scale_u : scale_v;
        for (int oy = 0; oy < target_h; ++oy) {
            for (int ox = 0; ox < target_w; ++ox) {
                real acc = 0;
                for (int dy = 0; dy < by; ++dy)
                    for (int dx = 0; dx < bx; ++dx) acc += flow.at(c, oy * by + dy, ox * bx + dx);
                out.at(c, oy, ox) = acc / (by * bx) * rescale;
            }
        }
    }
    return out;
}

Var total_loss(const Var& cls, const Var& fc, real beta) {
    if (beta == 0.0) return cls;
    return add(cls, mul(fc, beta));
}

}  // namespace ctrec
