#include "ctrec/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

using json = nlohmann::ordered_json;

namespace ctrec {

namespace {

void check_keys(const json& j, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: '" + prefix + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!ok.count(key))
            throw ConfigError("config: unknown key '" + (prefix.empty() ? key : prefix + "." + key) +
                              "'");
    }
}

template <typename T>
void read(const json& j, const char* key, const std::string& prefix, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for '" +
                          (prefix.empty() ? key : prefix + "." + key) + "'");
    }
}

void read_pair(const json& j, const char* key, const std::string& prefix,
               std::array<double, 2>& out) {
    if (!j.contains(key)) return;
    std::vector<double> v;
    read(j, key, prefix, v);
    if (v.size() != 2)
        throw ConfigError("config: '" + prefix + "." + key + "' must have two entries");
    out = {v[0], v[1]};
}

void apply_synth(const json& j, SynthSpec& s) {
    check_keys(j, "synth",
               {"num_classes", "height", "width", "counts", "head_count", "tail_count", "decay",
                "domain_bias", "velocity_min", "velocity_max", "day_brightness",
                "night_brightness", "num_locations", "sprite_size"});
    read(j, "num_classes", "synth", s.num_classes);
    read(j, "height", "synth", s.height);
    read(j, "width", "synth", s.width);
    if (j.contains("counts")) {
        std::vector<std::vector<int>> rows;
        read(j, "counts", "synth", rows);
        s.counts.clear();
        for (const auto& r : rows) {
            if (r.size() != 2)
                throw ConfigError("config: synth.counts entries must be [day, night] pairs");
            s.counts.push_back({r[0], r[1]});
        }
    }
    read(j, "head_count", "synth", s.head_count);
    read(j, "tail_count", "synth", s.tail_count);
    read(j, "decay", "synth", s.decay);
    read(j, "domain_bias", "synth", s.domain_bias);
    read(j, "velocity_min", "synth", s.velocity_min);
    read(j, "velocity_max", "synth", s.velocity_max);
    read_pair(j, "day_brightness", "synth", s.day_brightness);
    read_pair(j, "night_brightness", "synth", s.night_brightness);
    read(j, "num_locations", "synth", s.num_locations);
    read(j, "sprite_size", "synth", s.sprite_size);
}

void apply_model(const json& j, ModelConfig& m) {
    check_keys(j, "model",
               {"input_size", "output_stride", "stem_channels", "stage_channels", "head_channels",
                "gn_groups", "num_sub_experts"});
    read(j, "input_size", "model", m.input_size);
    read(j, "output_stride", "model", m.output_stride);
    read(j, "stem_channels", "model", m.stem_channels);
    if (j.contains("stage_channels")) {
        std::vector<int> v;
        read(j, "stage_channels", "model", v);
        if (v.size() != 4)
            throw ConfigError("config: model.stage_channels must have four entries");
        std::copy(v.begin(), v.end(), m.stage_channels.begin());
    }
    read(j, "head_channels", "model", m.head_channels);
    read(j, "gn_groups", "model", m.gn_groups);
    read(j, "num_sub_experts", "model", m.num_sub_experts);
}

void apply_train(const json& j, TrainConfig& t) {
    check_keys(j, "train",
               {"lr_full", "epochs", "batch_size", "momentum", "weight_decay", "domain_experts",
                "flow_consistency"});
    read(j, "lr_full", "train", t.lr_full);
    read(j, "epochs", "train", t.epochs);
    read(j, "batch_size", "train", t.batch_size);
    read(j, "momentum", "train", t.momentum);
    read(j, "weight_decay", "train", t.weight_decay);
    read(j, "domain_experts", "train", t.domain_experts);
    read(j, "flow_consistency", "train", t.flow_consistency);
}

void apply_loss(const json& j, LossConfig& l) {
    check_keys(j, "loss", {"gamma", "alpha", "beta", "ssim_window"});
    read(j, "gamma", "loss", l.gamma);
    read(j, "alpha", "loss", l.alpha);
    read(j, "beta", "loss", l.beta);
    read(j, "ssim_window", "loss", l.ssim_window);
}

json* descend(json& root, const std::string& dotted, std::string& leaf) {
    json* cur = &root;
    size_t start = 0;
    for (;;) {
        const size_t dot = dotted.find('.', start);
        if (dot == std::string::npos) {
            leaf = dotted.substr(start);
            return cur;
        }
        const std::string part = dotted.substr(start, dot - start);
        if (part.empty()) throw ConfigError("config: bad --set path '" + dotted + "'");
        if (!cur->contains(part)) (*cur)[part] = json::object();
        cur = &(*cur)[part];
        if (!cur->is_object()) throw ConfigError("config: --set path '" + dotted + "' crosses a value");
        start = dot + 1;
    }
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_override) {
    json doc = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw ConfigError("config: cannot open " + config_path);
        try {
            f >> doc;
        } catch (const json::exception& e) {
            throw ConfigError("config: invalid JSON in " + config_path + ": " + e.what());
        }
        if (!doc.is_object()) throw ConfigError("config: top level must be a JSON object");
    }
    for (const std::string& kv : overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("config: --set expects key=value, got '" + kv + "'");
        const std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        json value;
        try {
            value = json::parse(raw);
        } catch (const json::exception&) {
            value = raw;  // unquoted strings pass through
        }
        std::string leaf;
        json* obj = descend(doc, key, leaf);
        if (leaf.empty()) throw ConfigError("config: bad --set path '" + key + "'");
        (*obj)[leaf] = value;
    }

    check_keys(doc, "", {"seed", "synth", "pipeline", "model", "train", "loss", "eval"});
    RunConfig cfg;
    read(doc, "seed", "", cfg.seed);
    if (seed_override) cfg.seed = *seed_override;
    if (doc.contains("synth")) apply_synth(doc["synth"], cfg.synth);
    if (doc.contains("pipeline")) {
        check_keys(doc["pipeline"], "pipeline", {"train_fraction", "domain_tolerance"});
        read(doc["pipeline"], "train_fraction", "pipeline", cfg.pipeline.train_fraction);
        read(doc["pipeline"], "domain_tolerance", "pipeline", cfg.pipeline.domain_tolerance);
    }
    if (doc.contains("model")) apply_model(doc["model"], cfg.model);
    if (doc.contains("train")) apply_train(doc["train"], cfg.train);
    if (doc.contains("loss")) apply_loss(doc["loss"], cfg.train.loss);
    if (doc.contains("eval")) {
        check_keys(doc["eval"], "eval", {"per_frame", "domain_tolerance"});
        read(doc["eval"], "per_frame", "eval", cfg.eval.per_frame);
        read(doc["eval"], "domain_tolerance", "eval", cfg.eval.domain_tolerance);
    }
    if (cfg.pipeline.domain_tolerance < 0 || cfg.eval.domain_tolerance < 0)
        throw ConfigError("config: domain_tolerance must be non-negative");
    if (!(cfg.pipeline.train_fraction > 0.0 && cfg.pipeline.train_fraction < 1.0))
        throw ConfigError("config: pipeline.train_fraction must be in (0,1)");

    // one master seed fans out into independent per-subsystem streams
    cfg.synth.seed = derive_seed(cfg.seed, hash_str("synth"));
    cfg.model.seed = derive_seed(cfg.seed, hash_str("model"));
    cfg.train.seed = derive_seed(cfg.seed, hash_str("train"));
    return cfg;
}

}  // namespace ctrec
