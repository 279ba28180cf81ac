#pragma once

#include <array>

#include "ctrec/autodiff.hpp"
#include "ctrec/synthgen.hpp"

namespace ctrec {

struct LossConfig {
    real gamma = 5.0;         // focal exponent
    real alpha = 0.85;        // SSIM share of the photometric loss
    real beta = 0.02;         // flow-consistency weight
    int ssim_window = 3;      // odd, uniform window
    real ssim_c1 = 1e-4;      // 0.01^2
    real ssim_c2 = 9e-4;      // 0.03^2

    void validate() const;
};

// Frame-summed focal term for one sequence: logits (3,C), one label.
Var focal_loss(const Var& logits, int class_y, real gamma);

// map resampled at p + flow(p), bilinear, clamp-to-edge. Re-exported from
// the autodiff layer under its domain name.
inline Var warp(const Var& map, const Tensor& flow) { return warp_bilinear(map, flow); }

// Mean SSIM index with a uniform window and reflection padding. Inputs are
// expected normalized to [0,1] by the caller.
Var ssim(const Var& a, const Var& b, const LossConfig& cfg);

// alpha/2 (1 - SSIM) + (1 - alpha) |a - b|_1 after joint min-max
// normalization of the pair; a constant pair is defined as zero loss.
Var photometric_loss(const Var& a, const Var& b, const LossConfig& cfg);

// L_ph(M2, warp(M1, past)) + L_ph(M2, warp(M3, future)); flows must already
// be at CAM resolution (see downscale_flow).
Var flow_consistency_loss(const std::array<Var, 3>& cams, const FlowPair& flows,
                          const LossConfig& cfg);

// Block average-pool each channel and rescale displacements into the target
// grid's pixel units. Source dims must be integer multiples of the target.
Tensor downscale_flow(const Tensor& flow, int target_h, int target_w);

Var total_loss(const Var& cls, const Var& fc, real beta);
inline real total_loss(real cls, real fc, real beta) { return cls + beta * fc; }

}  // namespace ctrec
