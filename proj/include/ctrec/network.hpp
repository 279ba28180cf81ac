#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ctrec/autodiff.hpp"

namespace ctrec {

enum class ExpertId { full = 0, day = 1, night = 2 };
const char* to_string(ExpertId e);

struct ModelConfig {
    int num_classes = 0;
    int input_size = 64;   // square inputs
    int output_stride = 16;  // 16 (desk scale) or 32 (full-scale geometry)
    int stem_channels = 64;
    std::array<int, 4> stage_channels{64, 64, 128, 128};
    int head_channels = 128;
    int gn_groups = 8;
    int num_sub_experts = 2;  // day/night; anything else is rejected
    uint64_t seed = 0;

    int cam_size() const { return input_size / output_stride; }
    void validate() const;
};

struct Conv {
    Var w;  // (out, in, k, k)
    int stride = 1;
    int pad = 1;
    Var forward(const Var& x) const { return conv2d(x, w, stride, pad); }
};

struct Norm {
    Var gamma, beta;
    int groups = 1;
    Var forward(const Var& x) const { return group_norm(x, gamma, beta, groups); }
};

struct BasicBlock {
    Conv conv1, conv2;
    Norm norm1, norm2;
    bool has_proj = false;
    Conv proj;
    Norm norm_proj;
    Var forward(const Var& x) const;
};

struct Backbone {
    Conv stem;
    Norm stem_norm;
    std::array<BasicBlock, 4> stages;
    Var forward(const Var& images) const;  // (N,3,H,W) -> (N,d,H/16,W/16)
};

// Residual block + GAP + weight-scaled linear classifier. The per-class
// scale is stored as log_scale so it stays positive under optimization;
// the effective classifier weight for class c is exp(log_scale[c]) * w[:,c].
struct ExpertHead {
    BasicBlock block;
    Var w;          // (d', C)
    Var log_scale;  // (C)

    struct Out {
        Var logits;    // (N, C)
        Var features;  // (N, d', h, w)
    };
    Out forward(const Var& backbone_features) const;
};

// Per-frame logits and feature maps for one 3-frame sequence (value level).
struct ExpertOutput {
    Tensor logits;    // (3, C)
    Tensor features;  // (3, d', h, w)
};

struct ExpertModel {
    ModelConfig config;
    Backbone backbone;
    std::array<ExpertHead, 3> experts;  // indexed by ExpertId

    const ExpertHead& expert(ExpertId e) const { return experts[static_cast<size_t>(e)]; }
    ExpertHead& expert(ExpertId e) { return experts[static_cast<size_t>(e)]; }

    Var backbone_forward(const Var& images) const { return backbone.forward(images); }
    ExpertOutput forward_expert(const std::array<Tensor, 3>& frames, ExpertId e) const;

    std::vector<std::pair<std::string, Var>> named_parameters() const;
    std::vector<Var> backbone_parameters() const;
    std::vector<Var> head_parameters(ExpertId e) const;
};

ExpertModel build_model(const ModelConfig& config);

// Eq.-style CAM: weighted channel sum with the features held constant, so
// gradients reach only the classifier weight and scale.
Var class_activation_map(const ExpertHead& head, const Tensor& features_dhw, int class_y);
Tensor cam_value(const ExpertHead& head, const Tensor& features_dhw, int class_y);

// Squared l2-norm of the effective classifier weights.
real classifier_weight_sqnorm(const ExpertHead& head);

// ---- checkpoint archive ----
struct CheckpointMeta {
    ModelConfig config;
    std::vector<std::string> class_names;
    bool domain_experts = true;
    bool flow_consistency = true;
};

void save_checkpoint(const ExpertModel& model, const CheckpointMeta& meta, const std::string& path);
std::pair<ExpertModel, CheckpointMeta> load_checkpoint(const std::string& path);

}  // namespace ctrec
