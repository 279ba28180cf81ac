#pragma once

#include <string>
#include <vector>

#include "ctrec/manifest.hpp"
#include "ctrec/network.hpp"

namespace ctrec {

struct Prediction {
    std::string sequence_id;
    int frame = 0;  // 0-based frame index the image came from
    Domain domain = Domain::day;
    int y_true = -1;
    int y_pred = -1;
    std::vector<real> fused_logits;
    std::vector<real> full_logits;
    std::vector<real> sub_logits;  // raw, before norm scaling; empty when unused
    real norm_scale = 1.0;
    ExpertId sub_expert_used = ExpertId::full;  // full means "no sub expert"
};

// x_z rescaled by the ratio of effective classifier weight norms.
std::vector<real> scale_sub_logits(const std::vector<real>& x_z, real sqnorm_z, real sqnorm_full);

// Elementwise mean of the two expert logit vectors.
std::vector<real> fuse(const std::vector<real>& x_full, const std::vector<real>& x_sub);

// Ties break toward the lowest class index.
int argmax_logits(const std::vector<real>& x);

// Single-image prediction: detect the domain, run the shared backbone once,
// fuse the full-domain expert with the matching sub-domain expert.
class Predictor {
public:
    Predictor(const ExpertModel& model, const CheckpointMeta& meta, int domain_tolerance = 0);

    Prediction predict(const Image8& image) const;

    const CheckpointMeta& meta() const { return meta_; }

private:
    const ExpertModel& model_;
    CheckpointMeta meta_;
    int tolerance_;
    real sqnorm_full_;
    real sqnorm_day_;
    real sqnorm_night_;
};

void save_predictions(const std::vector<Prediction>& preds, const std::string& path);
std::vector<Prediction> load_predictions(const std::string& path);

}  // namespace ctrec
