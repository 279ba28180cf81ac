#include "ctrec/inference.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

using json = nlohmann::ordered_json;

namespace ctrec {

std::vector<real> scale_sub_logits(const std::vector<real>& x_z, real sqnorm_z, real sqnorm_full) {
    if (sqnorm_full <= 0)
        throw ContractViolation("scale_sub_logits: degenerate model, full classifier norm is zero");
    const real ratio = std::sqrt(sqnorm_z) / std::sqrt(sqnorm_full);
    std::vector<real> out(x_z.size());
    for (size_t i = 0; i < x_z.size(); ++i) out[i] = ratio * x_z[i];
    return out;
}

std::vector<real> fuse(const std::vector<real>& x_full, const std::vector<real>& x_sub) {
    if (x_full.size() != x_sub.size()) throw ContractViolation("fuse: logit length mismatch");
    std::vector<real> out(x_full.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (x_full[i] + x_sub[i]);
    return out;
}

int argmax_logits(const std::vector<real>& x) {
    if (x.empty()) throw ContractViolation("argmax_logits: empty vector");
    int best = 0;
    for (size_t i = 1; i < x.size(); ++i)
        if (x[i] > x[best]) best = static_cast<int>(i);
    return best;
}

Predictor::Predictor(const ExpertModel& model, const CheckpointMeta& meta, int domain_tolerance)
    : model_(model),
      meta_(meta),
      tolerance_(domain_tolerance),
      sqnorm_full_(classifier_weight_sqnorm(model.expert(ExpertId::full))),
      sqnorm_day_(classifier_weight_sqnorm(model.expert(ExpertId::day))),
      sqnorm_night_(classifier_weight_sqnorm(model.expert(ExpertId::night))) {}

Prediction Predictor::predict(const Image8& image) const {
    Prediction p;
    p.domain = detect_domain(image, tolerance_);

    Tensor input = resize_bilinear(image_to_tensor(image), model_.config.input_size,
                                   model_.config.input_size);
    Tensor batch({1, 3, model_.config.input_size, model_.config.input_size});
    std::copy(input.data(), input.data() + input.size(), batch.data());
    const Var features = model_.backbone_forward(Var(std::move(batch)));

    const auto logits_of = [&](ExpertId e) {
        const Tensor t = model_.expert(e).forward(features).logits.value();
        return std::vector<real>(t.data(), t.data() + t.size());
    };
    p.full_logits = logits_of(ExpertId::full);

    if (!meta_.domain_experts) {
        p.fused_logits = p.full_logits;
    } else {
        const ExpertId z = p.domain == Domain::day ? ExpertId::day : ExpertId::night;
        p.sub_expert_used = z;
        p.sub_logits = logits_of(z);
        const real sqnorm_z = z == ExpertId::day ? sqnorm_day_ : sqnorm_night_;
        p.norm_scale = std::sqrt(sqnorm_z) / std::sqrt(sqnorm_full_);
        p.fused_logits = fuse(p.full_logits, scale_sub_logits(p.sub_logits, sqnorm_z, sqnorm_full_));
    }
    p.y_pred = argmax_logits(p.fused_logits);
    return p;
}

void save_predictions(const std::vector<Prediction>& preds, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw IoError("save_predictions: cannot open " + path);
    for (const auto& p : preds) {
        json j;
        j["sequence_id"] = p.sequence_id;
        j["frame"] = p.frame;
        j["domain"] = to_string(p.domain);
        j["y_true"] = p.y_true;
        j["y_pred"] = p.y_pred;
        j["fused_logits"] = p.fused_logits;
        f << j.dump() << "\n";
    }
    if (!f) throw IoError("save_predictions: write failed for " + path);
}

std::vector<Prediction> load_predictions(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_predictions: cannot open " + path);
    std::vector<Prediction> out;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw IoError("load_predictions: bad record in " + path + ": " + e.what());
        }
        Prediction p;
        p.sequence_id = j.at("sequence_id").get<std::string>();
        p.frame = j.at("frame").get<int>();
        p.domain = domain_from_string(j.at("domain").get<std::string>());
        p.y_true = j.at("y_true").get<int>();
        p.y_pred = j.at("y_pred").get<int>();
        p.fused_logits = j.at("fused_logits").get<std::vector<real>>();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace ctrec
