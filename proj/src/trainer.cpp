#include "ctrec/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ctrec {

void TrainConfig::validate() const {
    if (lr_full <= 0) throw ConfigError("train: lr_full must be positive");
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
    if (weight_decay < 0) throw ConfigError("train: weight_decay must be non-negative");
    loss.validate();
}

LearningRates scaled_lr(double lr_full, const CountTable& counts) {
    int64_t n_day = 0, n_night = 0;
    for (const auto& c : counts) {
        n_day += c[0];
        n_night += c[1];
    }
    const int64_t total = n_day + n_night;
    if (total <= 0) throw ContractViolation("scaled_lr: no training samples");
    LearningRates lr;
    lr.full = lr_full;
    lr.day = lr_full * static_cast<double>(n_day) / static_cast<double>(total);
    lr.night = lr_full * static_cast<double>(n_night) / static_cast<double>(total);
    if (n_day == 0) lr.warnings.push_back("day domain has no training samples; day expert learning rate is 0");
    if (n_night == 0)
        lr.warnings.push_back("night domain has no training samples; night expert learning rate is 0");
    return lr;
}

RoutedBatch route_batch(const std::vector<TrainSequence>& batch) {
    if (batch.empty()) throw ContractViolation("route_batch: empty batch");
    RoutedBatch r;
    for (size_t i = 0; i < batch.size(); ++i) {
        r.full.push_back(static_cast<int>(i));
        if (batch[i].sample->domain == Domain::day)
            r.day.push_back(static_cast<int>(i));
        else
            r.night.push_back(static_cast<int>(i));
    }
    return r;
}

Tensor resize_flow(const Tensor& flow, int out_h, int out_w) {
    if (flow.rank() != 3 || flow.dim(0) != 2)
        throw ContractViolation("resize_flow: (2,h,w) flow expected");
    const int h = flow.dim(1), w = flow.dim(2);
    if (h == out_h && w == out_w) return flow;
    Tensor out = resize_bilinear(flow, out_h, out_w);
    const real su = static_cast<real>(out_w) / w, sv = static_cast<real>(out_h) / h;
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            out.at(0, y, x) *= su;
            out.at(1, y, x) *= sv;
        }
    return out;
}

Tensor hflip_flow(const Tensor& flow) {
    Tensor out = hflip_image(flow);  // same mirroring, channels kept
    const int h = out.dim(1), w = out.dim(2);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(0, y, x) = -out.at(0, y, x);
    return out;
}

AugmentResult augment(const std::array<Tensor, 3>& frames, const FlowPair& flows,
                      int target_size, Rng& rng) {
    AugmentResult res;
    for (int j = 0; j < 3; ++j)
        res.frames[static_cast<size_t>(j)] =
            resize_bilinear(frames[static_cast<size_t>(j)], target_size, target_size);
    res.flows.past = resize_flow(flows.past, target_size, target_size);
    res.flows.future = resize_flow(flows.future, target_size, target_size);
    res.flipped = rng.next_bool();
    if (res.flipped) {
        for (auto& f : res.frames) f = hflip_image(f);
        res.flows.past = hflip_flow(res.flows.past);
        res.flows.future = hflip_flow(res.flows.future);
    }
    return res;
}

// ---------------- optimizer ----------------

SgdOptimizer::SgdOptimizer(std::vector<Group> groups, double momentum, double weight_decay)
    : momentum_(momentum), weight_decay_(weight_decay) {
    for (auto& g : groups) {
        std::vector<Slot> slots;
        for (auto& p : g.params) slots.push_back({p, Tensor(p.value().shape())});
        groups_.push_back(std::move(slots));
        lrs_.push_back(g.lr);
    }
}

void SgdOptimizer::zero_grad() {
    for (auto& g : groups_)
        for (auto& s : g) s.param.zero_grad();
}

void SgdOptimizer::step(const std::vector<bool>& active) {
    if (active.size() != groups_.size())
        throw ContractViolation("SgdOptimizer::step: active mask size mismatch");
    for (size_t gi = 0; gi < groups_.size(); ++gi) {
        if (!active[gi]) continue;
        const double lr = lrs_[gi];
        for (auto& s : groups_[gi]) {
            Tensor& p = s.param.value_mut();
            const Tensor& g = s.param.grad();
            for (int64_t i = 0; i < p.size(); ++i) {
                real gv = g[i] + weight_decay_ * p[i];
                s.velocity[i] = momentum_ * s.velocity[i] + gv;
                p[i] -= lr * s.velocity[i];
            }
        }
    }
}

// ---------------- trainer ----------------

Trainer::Trainer(ExpertModel& model, const TrainConfig& config, const CountTable& train_counts)
    : model_(model),
      config_(config),
      rates_(scaled_lr(config.lr_full, train_counts)),
      optimizer_(
          [&] {
              std::vector<SgdOptimizer::Group> groups;
              SgdOptimizer::Group full;
              full.params = model.backbone_parameters();
              for (auto& p : model.head_parameters(ExpertId::full)) full.params.push_back(p);
              full.lr = rates_.full;
              groups.push_back(std::move(full));
              groups.push_back({model.head_parameters(ExpertId::day), rates_.day});
              groups.push_back({model.head_parameters(ExpertId::night), rates_.night});
              return groups;
          }(),
          config.momentum, config.weight_decay) {
    config_.validate();
}

namespace {

// Per-expert objective on its routed subset: mean over sequences of the
// frame-summed focal term, plus beta times the mean flow-consistency term
// computed on gradient-stopped feature maps.
Var expert_loss(const ExpertHead& head, const Var& subset_features,
                const std::vector<const TrainSequence*>& seqs, const TrainConfig& cfg,
                int cam_size) {
    const ExpertHead::Out out = head.forward(subset_features);
    std::vector<int> labels;
    labels.reserve(seqs.size() * 3);
    for (const auto* s : seqs)
        for (int j = 0; j < 3; ++j) labels.push_back(s->sample->class_label);
    const real inv_b = 1.0 / static_cast<real>(seqs.size());
    Var cls = mul(focal_loss_sum(out.logits, labels, cfg.loss.gamma), inv_b);
    if (!cfg.flow_consistency) return cls;

    const Tensor feats = out.features.value();  // gradient stop: constants from here on
    Var fc_sum;
    for (size_t b = 0; b < seqs.size(); ++b) {
        const int y = seqs[b]->sample->class_label;
        std::array<Var, 3> cams;
        for (int j = 0; j < 3; ++j)
            cams[static_cast<size_t>(j)] =
                class_activation_map(head, slice_front(feats, static_cast<int>(3 * b) + j), y);
        FlowPair cam_flows{downscale_flow(seqs[b]->flows.past, cam_size, cam_size),
                           downscale_flow(seqs[b]->flows.future, cam_size, cam_size)};
        Var fc = flow_consistency_loss(cams, cam_flows, cfg.loss);
        fc_sum = fc_sum.defined() ? add(fc_sum, fc) : fc;
    }
    return total_loss(cls, mul(fc_sum, inv_b), cfg.loss.beta);
}

Tensor stack_frames(const std::vector<TrainSequence>& batch, const std::vector<int>& idx,
                    int input_size) {
    Tensor out({static_cast<int>(idx.size()) * 3, 3, input_size, input_size});
    int64_t offset = 0;
    for (int i : idx) {
        for (int j = 0; j < 3; ++j) {
            const Tensor& f = batch[static_cast<size_t>(i)].frames[static_cast<size_t>(j)];
            if (f.rank() != 3 || f.dim(1) != input_size || f.dim(2) != input_size)
                throw ContractViolation("train_step: frame resolution mismatch");
            std::copy(f.data(), f.data() + f.size(), out.data() + offset);
            offset += f.size();
        }
    }
    return out;
}

std::vector<int> frame_rows(const std::vector<int>& seq_idx,
                            const std::vector<int>& batch_order) {
    // rows of the stacked (3B, ...) tensor belonging to the given sequences;
    // batch_order maps batch index -> position in the stack
    std::vector<int> rows;
    rows.reserve(seq_idx.size() * 3);
    for (int i : seq_idx) {
        const int at = batch_order[static_cast<size_t>(i)];
        for (int j = 0; j < 3; ++j) rows.push_back(3 * at + j);
    }
    return rows;
}

}  // namespace

LossReport Trainer::train_step(const std::vector<TrainSequence>& batch, const RoutedBatch& routing) {
    if (batch.empty()) throw ContractViolation("train_step: empty batch");
    const int input_size = model_.config.input_size;
    const int cam_size = model_.config.cam_size();

    // full expert sees the whole batch, in batch order
    std::vector<int> order(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) order[i] = static_cast<int>(i);

    const Var images(stack_frames(batch, routing.full, input_size));
    const Var backbone_features = model_.backbone_forward(images);

    std::vector<const TrainSequence*> full_seqs;
    for (int i : routing.full) full_seqs.push_back(&batch[static_cast<size_t>(i)]);
    Var loss_full = expert_loss(model_.expert(ExpertId::full), backbone_features, full_seqs,
                                config_, cam_size);

    LossReport report;
    report.full = loss_full.value()[0];
    Var total = loss_full;

    std::vector<bool> active = {true, false, false};
    if (config_.domain_experts) {
        const Tensor detached = backbone_features.value();
        for (ExpertId e : {ExpertId::day, ExpertId::night}) {
            const auto& idx = e == ExpertId::day ? routing.day : routing.night;
            if (idx.empty()) continue;
            std::vector<const TrainSequence*> seqs;
            for (int i : idx) seqs.push_back(&batch[static_cast<size_t>(i)]);
            // detached gather severs gradient flow into the backbone
            const Var sub_features(gather_front(detached, frame_rows(idx, order)));
            Var loss_z = expert_loss(model_.expert(e), sub_features, seqs, config_, cam_size);
            if (e == ExpertId::day)
                report.day = loss_z.value()[0];
            else
                report.night = loss_z.value()[0];
            active[static_cast<size_t>(e)] = true;
            total = add(total, loss_z);
        }
    }

    const bool bad = !std::isfinite(report.full) ||
                     (report.day && !std::isfinite(*report.day)) ||
                     (report.night && !std::isfinite(*report.night));
    if (bad) {
        std::string ids;
        for (const auto& s : batch) ids += (ids.empty() ? "" : ", ") + s.sample->id;
        throw TrainingError("train_step: non-finite loss on batch [" + ids + "]");
    }

    optimizer_.zero_grad();
    backward(total);
    optimizer_.step(active);
    return report;
}

// ---------------- fit ----------------

namespace {

struct LoadedSequence {
    const SequenceSample* sample;
    std::array<Tensor, 3> frames;  // native resolution, [0,1]
    FlowPair flows;
};

}  // namespace

FitResult fit(const DatasetManifest& manifest, const ModelConfig& model_config,
              const TrainConfig& config, const std::string& out_dir, ExpertModel* out_model) {
    config.validate();
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("fit: cannot create " + out_dir + ": " + ec.message());

    std::vector<LoadedSequence> train_set;
    for (const auto& s : manifest.samples) {
        if (s.split != Split::train) continue;
        LoadedSequence ls;
        ls.sample = &s;
        for (int j = 0; j < 3; ++j)
            ls.frames[static_cast<size_t>(j)] = image_to_tensor(png_read(manifest.frame_path(s, j)));
        const auto fpaths = flow_paths(manifest, s);
        for (int k = 0; k < 2; ++k)
            if (!fs::exists(fpaths[static_cast<size_t>(k)]))
                throw IoError("fit: missing flow file for sequence " + s.id + ": " +
                              fpaths[static_cast<size_t>(k)]);
        ls.flows.past = flo_read(fpaths[0]);
        ls.flows.future = flo_read(fpaths[1]);
        train_set.push_back(std::move(ls));
    }
    if (train_set.empty()) throw ConfigError("fit: manifest has no training samples");

    ModelConfig mc = model_config;
    mc.num_classes = manifest.num_classes();
    ExpertModel model = build_model(mc);
    Trainer trainer(model, config, manifest.train_counts());

    const std::string log_path = (fs::path(out_dir) / "train_log.jsonl").string();
    std::ofstream log(log_path);
    if (!log) throw IoError("fit: cannot open " + log_path);
    json lr_table;
    lr_table["full"] = trainer.rates().full;
    lr_table["day"] = trainer.rates().day;
    lr_table["night"] = trainer.rates().night;
    {
        json header;
        header["event"] = "start";
        header["train_sequences"] = train_set.size();
        header["num_classes"] = mc.num_classes;
        header["lr_table"] = lr_table;
        header["warnings"] = trainer.rates().warnings;
        log << header.dump() << "\n";
    }

    CheckpointMeta meta{mc, manifest.class_names, config.domain_experts, config.flow_consistency};
    const std::string final_path = (fs::path(out_dir) / "checkpoint_final.bin").string();
    const std::string best_path = (fs::path(out_dir) / "checkpoint_best.bin").string();

    FitResult result{final_path, best_path, log_path, -1, 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<int> indices(train_set.size());
        for (size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
        Rng shuffle_rng(derive_seed(config.seed, hash_str("epoch-shuffle") ^
                                                     static_cast<uint64_t>(epoch)));
        shuffle_rng.shuffle(indices);

        double sum_full = 0, sum_day = 0, sum_night = 0;
        int steps = 0, steps_day = 0, steps_night = 0;
        for (size_t start = 0; start < indices.size();
             start += static_cast<size_t>(config.batch_size)) {
            const size_t end =
                std::min(indices.size(), start + static_cast<size_t>(config.batch_size));
            std::vector<TrainSequence> batch;
            for (size_t k = start; k < end; ++k) {
                const LoadedSequence& ls = train_set[static_cast<size_t>(indices[k])];
                Rng aug_rng(derive_seed(config.seed,
                                        hash_str("augment") ^ hash_str(ls.sample->id) ^
                                            (static_cast<uint64_t>(epoch) << 24)));
                AugmentResult aug = augment(ls.frames, ls.flows, mc.input_size, aug_rng);
                TrainSequence ts;
                ts.sample = ls.sample;
                ts.frames = std::move(aug.frames);
                ts.flows = std::move(aug.flows);
                batch.push_back(std::move(ts));
            }
            const RoutedBatch routing = route_batch(batch);
            const LossReport r = trainer.train_step(batch, routing);
            sum_full += r.full;
            if (r.day) {
                sum_day += *r.day;
                steps_day++;
            }
            if (r.night) {
                sum_night += *r.night;
                steps_night++;
            }
            steps++;
        }

        const double l_full = sum_full / steps;
        const double epoch_loss = l_full + (steps_day ? sum_day / steps_day : 0.0) +
                                  (steps_night ? sum_night / steps_night : 0.0);
        json rec;
        rec["epoch"] = epoch;
        rec["L_full"] = l_full;
        if (steps_day)
            rec["L_day"] = sum_day / steps_day;
        else
            rec["L_day"] = nullptr;
        if (steps_night)
            rec["L_night"] = sum_night / steps_night;
        else
            rec["L_night"] = nullptr;
        rec["lr_table"] = lr_table;
        rec["wallclock_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log << rec.dump() << "\n";
        log.flush();

        if (result.best_epoch < 0 || epoch_loss < result.best_loss) {
            result.best_epoch = epoch;
            result.best_loss = epoch_loss;
            save_checkpoint(model, meta, best_path);
        }
    }
    save_checkpoint(model, meta, final_path);
    if (out_model) *out_model = model;
    return result;
}

}  // namespace ctrec
