#include "ctrec/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

using json = nlohmann::ordered_json;

namespace ctrec {

const char* to_string(ExpertId e) {
    switch (e) {
        case ExpertId::full: return "full";
        case ExpertId::day: return "day";
        default: return "night";
    }
}

void ModelConfig::validate() const {
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (num_sub_experts != 2)
        throw ConfigError("model: only two sub-domain experts (day/night) are supported");
    if (output_stride != 16 && output_stride != 32)
        throw ConfigError("model: output_stride must be 16 or 32");
    if (input_size < output_stride || input_size % output_stride != 0)
        throw ConfigError("model: input_size must be a positive multiple of output_stride");
    if (stem_channels < 1 || head_channels < 1) throw ConfigError("model: bad channel counts");
    auto divisible = [&](int c) { return c % gn_groups == 0; };
    if (gn_groups < 1 || !divisible(stem_channels) || !divisible(head_channels))
        throw ConfigError("model: channels must be divisible by gn_groups");
    for (int c : stage_channels)
        if (c < 1 || !divisible(c)) throw ConfigError("model: channels must be divisible by gn_groups");
}

namespace {

struct Init {
    Rng rng;
    explicit Init(uint64_t seed) : rng(seed) {}

    real gaussian() {
        // Box-Muller; u1 kept away from zero
        const real u1 = 1.0 - rng.next_real();
        const real u2 = rng.next_real();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Var conv_weight(int out, int in, int k) {
        Tensor t({out, in, k, k});
        const real std = std::sqrt(2.0 / (in * k * k));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = std * gaussian();
        return Var(std::move(t), true);
    }

    Var linear_weight(int rows, int cols) {
        // near-zero start: logits begin uniform with the scales at 1
        Tensor t({rows, cols});
        const real std = 0.01;
        for (int64_t i = 0; i < t.size(); ++i) t[i] = std * gaussian();
        return Var(std::move(t), true);
    }

    Var constant(int n, real v) { return Var(Tensor({n}, v), true); }
};

Conv make_conv(Init& init, int in, int out, int k, int stride, int pad) {
    return Conv{init.conv_weight(out, in, k), stride, pad};
}

Norm make_norm(Init& init, int channels, int groups, real gamma_init = 1.0) {
    return Norm{init.constant(channels, gamma_init), init.constant(channels, 0.0), groups};
}

BasicBlock make_block(Init& init, int in, int out, int stride, int groups) {
    BasicBlock b;
    b.conv1 = make_conv(init, in, out, 3, stride, 1);
    b.norm1 = make_norm(init, out, groups);
    b.conv2 = make_conv(init, out, out, 3, 1, 1);
    // zero-init on the residual branch: blocks start as the identity map
    b.norm2 = make_norm(init, out, groups, 0.0);
    b.has_proj = stride != 1 || in != out;
    if (b.has_proj) {
        b.proj = make_conv(init, in, out, 1, stride, 0);
        b.norm_proj = make_norm(init, out, groups);
    }
    return b;
}

}  // namespace

Var BasicBlock::forward(const Var& x) const {
    Var y = relu(norm1.forward(conv1.forward(x)));
    y = norm2.forward(conv2.forward(y));
    const Var shortcut = has_proj ? norm_proj.forward(proj.forward(x)) : x;
    return relu(add(y, shortcut));
}

Var Backbone::forward(const Var& images) const {
    Var x = relu(stem_norm.forward(stem.forward(images)));
    for (const auto& stage : stages) x = stage.forward(x);
    return x;
}

ExpertHead::Out ExpertHead::forward(const Var& backbone_features) const {
    Var a = block.forward(backbone_features);
    Var pooled = global_avg_pool(a);
    Var logits = rowscale(matmul(pooled, w), vexp(log_scale));
    return {std::move(logits), std::move(a)};
}

ExpertModel build_model(const ModelConfig& config) {
    config.validate();
    Init init(derive_seed(config.seed, hash_str("model-init")));
    ExpertModel m;
    m.config = config;

    m.backbone.stem = make_conv(init, 3, config.stem_channels, 3, 2, 1);
    m.backbone.stem_norm = make_norm(init, config.stem_channels, config.gn_groups);
    int in = config.stem_channels;
    for (int s = 0; s < 4; ++s) {
        const int out = config.stage_channels[static_cast<size_t>(s)];
        // stem(2) * stages = output_stride: first stage runs at stride 1 for
        // the desk-scale 16, stride 2 for the full-scale 32
        const int stride = s == 0 ? config.output_stride / 16 : 2;
        m.backbone.stages[static_cast<size_t>(s)] =
            make_block(init, in, out, stride, config.gn_groups);
        in = out;
    }
    for (auto& head : m.experts) {
        head.block = make_block(init, in, config.head_channels, 1, config.gn_groups);
        head.w = init.linear_weight(config.head_channels, config.num_classes);
        head.log_scale = init.constant(config.num_classes, 0.0);  // scales start at 1
    }
    return m;
}

ExpertOutput ExpertModel::forward_expert(const std::array<Tensor, 3>& frames, ExpertId e) const {
    const int hw = config.input_size;
    Tensor batch({3, 3, hw, hw});
    for (int j = 0; j < 3; ++j) {
        const Tensor& f = frames[static_cast<size_t>(j)];
        if (f.rank() != 3 || f.dim(0) != 3 || f.dim(1) != hw || f.dim(2) != hw)
            throw ContractViolation("forward_expert: frame resolution mismatch");
        std::copy(f.data(), f.data() + f.size(), batch.data() + j * f.size());
    }
    const Var feats = backbone_forward(Var(std::move(batch)));
    const ExpertHead::Out out = expert(e).forward(feats);
    return {out.logits.value(), out.features.value()};
}

namespace {

void collect_block(const std::string& prefix, const BasicBlock& b,
                   std::vector<std::pair<std::string, Var>>& out) {
    out.emplace_back(prefix + ".conv1.w", b.conv1.w);
    out.emplace_back(prefix + ".norm1.gamma", b.norm1.gamma);
    out.emplace_back(prefix + ".norm1.beta", b.norm1.beta);
    out.emplace_back(prefix + ".conv2.w", b.conv2.w);
    out.emplace_back(prefix + ".norm2.gamma", b.norm2.gamma);
    out.emplace_back(prefix + ".norm2.beta", b.norm2.beta);
    if (b.has_proj) {
        out.emplace_back(prefix + ".proj.w", b.proj.w);
        out.emplace_back(prefix + ".norm_proj.gamma", b.norm_proj.gamma);
        out.emplace_back(prefix + ".norm_proj.beta", b.norm_proj.beta);
    }
}

}  // namespace

std::vector<std::pair<std::string, Var>> ExpertModel::named_parameters() const {
    std::vector<std::pair<std::string, Var>> out;
    out.emplace_back("backbone.stem.w", backbone.stem.w);
    out.emplace_back("backbone.stem_norm.gamma", backbone.stem_norm.gamma);
    out.emplace_back("backbone.stem_norm.beta", backbone.stem_norm.beta);
    for (size_t s = 0; s < 4; ++s)
        collect_block("backbone.stage" + std::to_string(s), backbone.stages[s], out);
    for (int e = 0; e < 3; ++e) {
        const std::string prefix = std::string("expert.") + to_string(static_cast<ExpertId>(e));
        collect_block(prefix + ".block", experts[static_cast<size_t>(e)].block, out);
        out.emplace_back(prefix + ".classifier.w", experts[static_cast<size_t>(e)].w);
        out.emplace_back(prefix + ".classifier.log_scale",
                         experts[static_cast<size_t>(e)].log_scale);
    }
    return out;
}

std::vector<Var> ExpertModel::backbone_parameters() const {
    std::vector<Var> out;
    for (auto& [name, v] : named_parameters())
        if (name.rfind("backbone.", 0) == 0) out.push_back(v);
    return out;
}

std::vector<Var> ExpertModel::head_parameters(ExpertId e) const {
    const std::string prefix = std::string("expert.") + to_string(e) + ".";
    std::vector<Var> out;
    for (auto& [name, v] : named_parameters())
        if (name.rfind(prefix, 0) == 0) out.push_back(v);
    return out;
}

Var class_activation_map(const ExpertHead& head, const Tensor& features_dhw, int class_y) {
    if (class_y < 0 || class_y >= head.w.value().dim(1))
        throw ContractViolation("class_activation_map: class index out of range");
    if (features_dhw.rank() != 3 || features_dhw.dim(0) != head.w.value().dim(0))
        throw ContractViolation("class_activation_map: feature shape mismatch");
    const Var eff = bcast_mul(column(head.w, class_y), elem(vexp(head.log_scale), class_y));
    return cam_combine(features_dhw, eff);
}

Tensor cam_value(const ExpertHead& head, const Tensor& features_dhw, int class_y) {
    // value-only path used by visualization
    ExpertHead frozen;
    frozen.w = head.w.detach();
    frozen.log_scale = head.log_scale.detach();
    return class_activation_map(frozen, features_dhw, class_y).value();
}

real classifier_weight_sqnorm(const ExpertHead& head) {
    const Tensor& w = head.w.value();
    const Tensor& rho = head.log_scale.value();
    const int k = w.dim(0), c = w.dim(1);
    real acc = 0;
    for (int j = 0; j < c; ++j) {
        const real s = std::exp(rho[j]);
        for (int i = 0; i < k; ++i) {
            const real e = s * w.at(i, j);
            acc += e * e;
        }
    }
    return acc;
}

// ---------------- checkpoint ----------------

namespace {

constexpr char kMagic[8] = {'C', 'T', 'R', 'E', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ofstream& f, uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); }
uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

json config_to_json(const ModelConfig& c) {
    json j;
    j["num_classes"] = c.num_classes;
    j["input_size"] = c.input_size;
    j["output_stride"] = c.output_stride;
    j["stem_channels"] = c.stem_channels;
    j["stage_channels"] = c.stage_channels;
    j["head_channels"] = c.head_channels;
    j["gn_groups"] = c.gn_groups;
    j["num_sub_experts"] = c.num_sub_experts;
    j["seed"] = c.seed;
    return j;
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.num_classes = j.at("num_classes").get<int>();
    c.input_size = j.at("input_size").get<int>();
    c.output_stride = j.at("output_stride").get<int>();
    c.stem_channels = j.at("stem_channels").get<int>();
    const auto sc = j.at("stage_channels").get<std::vector<int>>();
    if (sc.size() != 4) throw IoError("checkpoint: stage_channels must have 4 entries");
    std::copy(sc.begin(), sc.end(), c.stage_channels.begin());
    c.head_channels = j.at("head_channels").get<int>();
    c.gn_groups = j.at("gn_groups").get<int>();
    c.num_sub_experts = j.at("num_sub_experts").get<int>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

}  // namespace

void save_checkpoint(const ExpertModel& model, const CheckpointMeta& meta,
                     const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_checkpoint: cannot open " + path);
    f.write(kMagic, 8);
    write_u32(f, kVersion);

    json j;
    j["model"] = config_to_json(model.config);
    j["classes"] = meta.class_names;
    j["domain_experts"] = meta.domain_experts;
    j["flow_consistency"] = meta.flow_consistency;
    const std::string blob = j.dump();
    write_u32(f, static_cast<uint32_t>(blob.size()));
    f.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    const auto params = model.named_parameters();
    write_u32(f, static_cast<uint32_t>(params.size()));
    for (const auto& [name, var] : params) {
        write_u32(f, static_cast<uint32_t>(name.size()));
        f.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Tensor& t = var.value();
        write_u32(f, static_cast<uint32_t>(t.rank()));
        for (int d = 0; d < t.rank(); ++d) write_u32(f, static_cast<uint32_t>(t.dim(d)));
        f.write(reinterpret_cast<const char*>(t.data()),
                static_cast<std::streamsize>(t.size() * sizeof(real)));
    }
    if (!f) throw IoError("save_checkpoint: write failed for " + path);
}

std::pair<ExpertModel, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("load_checkpoint: not a checkpoint file: " + path);
    if (read_u32(f) != kVersion) throw IoError("load_checkpoint: unsupported version in " + path);

    const uint32_t blob_len = read_u32(f);
    std::string blob(blob_len, '\0');
    f.read(blob.data(), blob_len);
    json j;
    try {
        j = json::parse(blob);
    } catch (const json::exception& e) {
        throw IoError(std::string("load_checkpoint: bad metadata: ") + e.what());
    }
    CheckpointMeta meta;
    meta.config = config_from_json(j.at("model"));
    meta.class_names = j.at("classes").get<std::vector<std::string>>();
    meta.domain_experts = j.at("domain_experts").get<bool>();
    meta.flow_consistency = j.at("flow_consistency").get<bool>();

    ExpertModel model = build_model(meta.config);
    std::map<std::string, Var> by_name;
    for (auto& [name, v] : model.named_parameters()) by_name.emplace(name, v);

    const uint32_t n = read_u32(f);
    if (n != by_name.size()) throw IoError("load_checkpoint: parameter count mismatch in " + path);
    for (uint32_t i = 0; i < n; ++i) {
        const uint32_t name_len = read_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        const uint32_t rank = read_u32(f);
        std::vector<int> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int>(read_u32(f));
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError("load_checkpoint: unknown parameter " + name);
        Tensor& dst = it->second.value_mut();
        if (dst.shape() != shape) throw IoError("load_checkpoint: shape mismatch for " + name);
        f.read(reinterpret_cast<char*>(dst.data()),
               static_cast<std::streamsize>(dst.size() * sizeof(real)));
        if (!f) throw IoError("load_checkpoint: truncated data in " + path);
    }
    return {std::move(model), std::move(meta)};
}

}  // namespace ctrec
