#include "ctrec/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace ctrec {

const char* to_string(Domain d) { return d == Domain::day ? "day" : "night"; }
const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        default: return "unassigned";
    }
}

Domain domain_from_string(const std::string& s) {
    if (s == "day") return Domain::day;
    if (s == "night") return Domain::night;
    throw IoError("manifest: unknown domain '" + s + "'");
}

CountTable DatasetManifest::train_counts() const {
    CountTable counts(class_names.size(), {0, 0});
    for (const auto& s : samples) {
        if (s.split != Split::train) continue;
        if (s.class_label < 0 || s.class_label >= num_classes())
            throw ContractViolation("manifest: class label out of range");
        counts[s.class_label][static_cast<int>(s.domain)]++;
    }
    return counts;
}

std::string DatasetManifest::frame_path(const SequenceSample& s, int frame) const {
    return (fs::path(root_dir) / s.frames[static_cast<size_t>(frame)]).string();
}

Domain detect_domain(const Image8& img, int tolerance) {
    if (img.channels != 3) throw IoError("detect_domain: malformed image, 3 channels required");
    if (tolerance < 0) throw ConfigError("detect_domain: tolerance must be non-negative");
    int max_spread = 0;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            int lo = 255, hi = 0;
            for (int c = 0; c < 3; ++c) {
                int v = img.at(y, x, c);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            max_spread = std::max(max_spread, hi - lo);
            if (max_spread > tolerance) return Domain::day;
        }
    }
    return Domain::night;
}

std::optional<std::array<std::string, 3>> select_frames(const std::vector<std::string>& raw) {
    if (raw.size() < 3) return std::nullopt;
    return std::array<std::string, 3>{raw[0], raw[1], raw[2]};
}

void split_train_test(DatasetManifest& m, double train_fraction, uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split_train_test: fraction must be in (0,1)");
    for (const auto& s : m.samples)
        if (s.split != Split::unassigned)
            throw ContractViolation("split_train_test: samples already assigned");

    // indices per (class, domain) stratum, in manifest order
    std::map<std::pair<int, int>, std::vector<size_t>> strata;
    for (size_t i = 0; i < m.samples.size(); ++i)
        strata[{m.samples[i].class_label, static_cast<int>(m.samples[i].domain)}].push_back(i);

    for (auto& [key, idx] : strata) {
        Rng rng(derive_seed(seed, hash_str("split") ^ (static_cast<uint64_t>(key.first) << 20) ^
                                      static_cast<uint64_t>(key.second)));
        rng.shuffle(idx);
        // ceil keeps at least one training sample per non-empty stratum
        const size_t n_train =
            static_cast<size_t>(std::ceil(train_fraction * static_cast<double>(idx.size())));
        for (size_t k = 0; k < idx.size(); ++k)
            m.samples[idx[k]].split = k < n_train ? Split::train : Split::test;
    }
}

void filter_categories(DatasetManifest& m) {
    const int c = m.num_classes();
    // cells[class][domain][split]
    std::vector<std::array<std::array<int, 2>, 2>> cells(c, {{{0, 0}, {0, 0}}});
    for (const auto& s : m.samples) {
        if (s.split == Split::unassigned)
            throw ContractViolation("filter_categories: splits not assigned");
        cells[s.class_label][static_cast<int>(s.domain)][s.split == Split::train ? 0 : 1]++;
    }
    std::vector<int> remap(c, -1);
    std::vector<std::string> kept_names;
    for (int i = 0; i < c; ++i) {
        bool keep = true;
        for (int z = 0; z < 2; ++z)
            for (int sp = 0; sp < 2; ++sp) keep = keep && cells[i][z][sp] > 0;
        if (keep) {
            remap[i] = static_cast<int>(kept_names.size());
            kept_names.push_back(m.class_names[i]);
        }
    }
    if (kept_names.empty())
        throw ConfigError("filter_categories: no class has samples in every domain and split");
    std::vector<SequenceSample> kept;
    kept.reserve(m.samples.size());
    for (auto& s : m.samples) {
        if (remap[s.class_label] < 0) continue;
        s.class_label = remap[s.class_label];
        kept.push_back(std::move(s));
    }
    m.samples = std::move(kept);
    m.class_names = std::move(kept_names);
}

BalanceReport balance_test_domains(DatasetManifest& m, uint64_t seed) {
    BalanceReport report;
    const int c = m.num_classes();
    for (int cls = 0; cls < c; ++cls) {
        std::vector<size_t> test_idx[2];
        for (size_t i = 0; i < m.samples.size(); ++i) {
            const auto& s = m.samples[i];
            if (s.split == Split::test && s.class_label == cls)
                test_idx[static_cast<int>(s.domain)].push_back(i);
        }
        const size_t nd = test_idx[0].size(), nn = test_idx[1].size();
        if (nd == 0 && nn == 0) continue;
        if (nd == 0 || nn == 0) {
            // degenerate: one domain has no test data; keep the class train-only
            const int z = nd == 0 ? 1 : 0;
            for (size_t i : test_idx[z]) m.samples[i].split = Split::unassigned;
            report.classes_dropped_from_test.push_back(cls);
            continue;
        }
        const int z_large = nd >= nn ? 0 : 1;
        const size_t target = std::min(nd, nn);
        auto& idx = test_idx[z_large];
        if (idx.size() == target) continue;
        Rng rng(derive_seed(seed, hash_str("balance") ^ (static_cast<uint64_t>(cls) << 8) ^
                                      static_cast<uint64_t>(z_large)));
        rng.shuffle(idx);
        for (size_t k = target; k < idx.size(); ++k) m.samples[idx[k]].split = Split::unassigned;
        report.subsampled.push_back({cls, static_cast<Domain>(z_large),
                                     static_cast<int>(idx.size() - target)});
    }
    // samples un-assigned above are dropped from the manifest entirely
    std::vector<SequenceSample> kept;
    kept.reserve(m.samples.size());
    for (auto& s : m.samples)
        if (s.split != Split::unassigned) kept.push_back(std::move(s));
    m.samples = std::move(kept);
    return report;
}

DomainStats compute_stats(const CountTable& counts) {
    DomainStats stats;
    stats.per_class.resize(counts.size());
    for (size_t c = 0; c < counts.size(); ++c) {
        const int nd = counts[c][0], nn = counts[c][1];
        auto& pc = stats.per_class[c];
        pc.day_dominant = nd >= nn;
        pc.night_dominant = nn >= nd;
        const int mx = std::max(nd, nn), mn = std::min(nd, nn);
        if (mx == 0)
            pc.imbalance_ratio = 1.0;
        else if (mn == 0)
            pc.imbalance_ratio = std::numeric_limits<double>::infinity();
        else
            pc.imbalance_ratio = static_cast<double>(mx) / static_cast<double>(mn);
    }
    return stats;
}

// ---------------- JSON ----------------

void save_manifest(const DatasetManifest& m, const std::string& path) {
    json j;
    j["classes"] = m.class_names;
    json samples = json::array();
    for (const auto& s : m.samples) {
        if (s.split == Split::unassigned)
            throw ContractViolation("save_manifest: unassigned sample " + s.id);
        json e;
        e["id"] = s.id;
        e["frames"] = {s.frames[0], s.frames[1], s.frames[2]};
        e["class"] = s.class_label;
        e["domain"] = to_string(s.domain);
        e["location"] = s.location;
        e["split"] = to_string(s.split);
        samples.push_back(std::move(e));
    }
    j["samples"] = std::move(samples);
    std::ofstream f(path);
    if (!f) throw IoError("save_manifest: cannot open " + path);
    f << j.dump(2) << "\n";
    if (!f) throw IoError("save_manifest: write failed for " + path);
}

namespace {
void require_keys(const json& j, std::initializer_list<const char*> keys, const char* what) {
    for (const char* k : keys)
        if (!j.contains(k)) throw IoError(std::string("manifest: missing key '") + k + "' in " + what);
}
}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("load_manifest: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw IoError("load_manifest: invalid JSON in " + path + ": " + e.what());
    }
    require_keys(j, {"classes", "samples"}, "document");
    DatasetManifest m;
    m.root_dir = fs::path(path).parent_path().string();
    if (m.root_dir.empty()) m.root_dir = ".";
    m.class_names = j["classes"].get<std::vector<std::string>>();
    std::set<std::string> seen_ids;
    for (const auto& e : j["samples"]) {
        require_keys(e, {"id", "frames", "class", "domain", "location", "split"}, "sample");
        SequenceSample s;
        s.id = e["id"].get<std::string>();
        if (!seen_ids.insert(s.id).second)
            throw IoError("load_manifest: duplicate sequence id " + s.id);
        const auto& fr = e["frames"];
        if (!fr.is_array() || fr.size() != 3)
            throw IoError("load_manifest: sample " + s.id + " must have exactly 3 frames");
        for (size_t i = 0; i < 3; ++i) s.frames[i] = fr[i].get<std::string>();
        s.class_label = e["class"].get<int>();
        if (s.class_label < 0 || s.class_label >= m.num_classes())
            throw IoError("load_manifest: class index out of range for sample " + s.id);
        s.domain = domain_from_string(e["domain"].get<std::string>());
        s.location = e["location"].get<std::string>();
        const std::string sp = e["split"].get<std::string>();
        if (sp == "train")
            s.split = Split::train;
        else if (sp == "test")
            s.split = Split::test;
        else
            throw IoError("load_manifest: bad split '" + sp + "' for sample " + s.id);
        m.samples.push_back(std::move(s));
    }
    return m;
}

}  // namespace ctrec
