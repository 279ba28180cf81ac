#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctrec/losses.hpp"
#include "ctrec/manifest.hpp"
#include "ctrec/network.hpp"
#include "ctrec/synthgen.hpp"

namespace ctrec {

struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TrainConfig {
    double lr_full = 0.01;  // 0.001 is the preset for DMZ-style runs
    int epochs = 100;
    int batch_size = 48;
    double momentum = 0.9;
    double weight_decay = 0.0;
    bool domain_experts = true;    // DE ablation switch
    bool flow_consistency = true;  // FC ablation switch
    LossConfig loss;
    uint64_t seed = 0;

    void validate() const;
};

// Linear Scaling Rule: each sub-domain expert runs at the full rate times
// its domain's share of the training data.
struct LearningRates {
    double full = 0;
    double day = 0;
    double night = 0;
    std::vector<std::string> warnings;

    double of(ExpertId e) const {
        return e == ExpertId::full ? full : (e == ExpertId::day ? day : night);
    }
};

LearningRates scaled_lr(double lr_full, const CountTable& counts);

// One loaded + augmented training sequence.
struct TrainSequence {
    const SequenceSample* sample = nullptr;
    std::array<Tensor, 3> frames;  // (3,H,W) at model input resolution
    FlowPair flows;                // at input resolution
};

// Index partition of a batch by domain; the full view is the whole batch.
struct RoutedBatch {
    std::vector<int> full, day, night;
};

RoutedBatch route_batch(const std::vector<TrainSequence>& batch);

struct AugmentResult {
    std::array<Tensor, 3> frames;
    FlowPair flows;
    bool flipped = false;
};

// Resize to the target resolution; with probability 1/2 mirror all frames
// and both flow fields (u negated) so the warp correspondence stays valid.
AugmentResult augment(const std::array<Tensor, 3>& frames, const FlowPair& flows,
                      int target_size, Rng& rng);
Tensor resize_flow(const Tensor& flow, int out_h, int out_w);
Tensor hflip_flow(const Tensor& flow);

struct LossReport {
    double full = 0;
    std::optional<double> day;
    std::optional<double> night;
};

class SgdOptimizer {
public:
    struct Group {
        std::vector<Var> params;
        double lr = 0;
    };
    SgdOptimizer(std::vector<Group> groups, double momentum, double weight_decay);
    void zero_grad();
    // Steps the selected groups; a group left inactive keeps both its
    // parameters and its momentum untouched.
    void step(const std::vector<bool>& active);
    size_t num_groups() const { return groups_.size(); }

private:
    struct Slot {
        Var param;
        Tensor velocity;
    };
    std::vector<std::vector<Slot>> groups_;
    std::vector<double> lrs_;
    double momentum_;
    double weight_decay_;
};

// Owns the optimization loop state for one model. Gradient routing contract:
// the full loss updates backbone + full head; each sub-domain loss updates
// only its own head (features are detached at the backbone boundary).
class Trainer {
public:
    Trainer(ExpertModel& model, const TrainConfig& config, const CountTable& train_counts);

    LossReport train_step(const std::vector<TrainSequence>& batch, const RoutedBatch& routing);
    const LearningRates& rates() const { return rates_; }

private:
    ExpertModel& model_;
    TrainConfig config_;
    LearningRates rates_;
    SgdOptimizer optimizer_;
};

struct FitResult {
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::string log_path;
    int best_epoch = -1;
    double best_loss = 0;
};

// Seeded epochs over the train split; writes a JSON-lines log plus final and
// best-on-train checkpoints under out_dir.
FitResult fit(const DatasetManifest& manifest, const ModelConfig& model_config,
              const TrainConfig& config, const std::string& out_dir, ExpertModel* out_model = nullptr);

}  // namespace ctrec
