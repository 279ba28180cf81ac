#include "ctrec/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include <json.hpp>

using json = nlohmann::ordered_json;

namespace ctrec {

const char* to_string(ShotSplit s) {
    switch (s) {
        case ShotSplit::many: return "many";
        case ShotSplit::medium: return "medium";
        default: return "few";
    }
}

ShotSplit shot_split(int train_count) {
    if (train_count > 100) return ShotSplit::many;
    if (train_count >= 20) return ShotSplit::medium;
    return ShotSplit::few;
}

std::vector<bool> imbalanced_classes(const CountTable& counts) {
    std::vector<bool> out(counts.size(), false);
    for (size_t c = 0; c < counts.size(); ++c) {
        const int mx = std::max(counts[c][0], counts[c][1]);
        const int mn = std::min(counts[c][0], counts[c][1]);
        if (mn <= 0)
            throw ContractViolation("imbalanced_classes: class " + std::to_string(c) +
                                    " has an empty domain; run filter_categories first");
        out[c] = static_cast<double>(mx) / static_cast<double>(mn) >= 3.0;
    }
    return out;
}

MajorMinor label_major_minor(int class_label, Domain domain, const DomainStats& stats) {
    return stats.is_dominant(class_label, domain) ? MajorMinor::major : MajorMinor::minor;
}

EvalReport evaluate(const std::vector<Prediction>& predictions, const DatasetManifest& manifest) {
    std::map<std::string, const Prediction*> by_id;
    for (const auto& p : predictions) {
        if (!by_id.emplace(p.sequence_id, &p).second)
            throw ContractViolation("evaluate: duplicate prediction for sequence " + p.sequence_id);
    }

    const CountTable counts = manifest.train_counts();
    const DomainStats stats = compute_stats(counts);
    const std::vector<bool> imbal = imbalanced_classes(counts);

    EvalReport r;
    std::vector<std::string> missing;
    for (const auto& s : manifest.samples) {
        if (s.split != Split::test) continue;
        auto it = by_id.find(s.id);
        if (it == by_id.end()) {
            missing.push_back(s.id);
            continue;
        }
        const Prediction& p = *it->second;
        const bool ok = p.y_pred == s.class_label;

        const int train_total = counts[s.class_label][0] + counts[s.class_label][1];
        switch (shot_split(train_total)) {
            case ShotSplit::many: r.many.add(ok); break;
            case ShotSplit::medium: r.medium.add(ok); break;
            case ShotSplit::few: r.few.add(ok); break;
        }
        const bool is_imbal = imbal[s.class_label];
        if (label_major_minor(s.class_label, s.domain, stats) == MajorMinor::major) {
            (is_imbal ? r.major_imbalanced : r.major_balanced).add(ok);
            r.major_total.add(ok);
        } else {
            (is_imbal ? r.minor_imbalanced : r.minor_balanced).add(ok);
            r.minor_total.add(ok);
        }
        r.all.add(ok);
    }
    if (!missing.empty()) {
        std::string ids;
        for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
        throw InputMismatchError("evaluate: missing predictions for sequences [" + ids + "]");
    }
    return r;
}

namespace {

json cell_json(const EvalCell& c) {
    json j;
    j["correct"] = c.correct;
    j["total"] = c.total;
    const auto acc = c.accuracy_pct();
    if (acc)
        j["accuracy_pct"] = *acc;
    else
        j["accuracy_pct"] = nullptr;
    return j;
}

std::string cell_text(const EvalCell& c) {
    const auto acc = c.accuracy_pct();
    if (!acc) return "-";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", *acc);
    return buf;
}

}  // namespace

std::string report_to_json(const EvalReport& r) {
    json j;
    j["meta"] = {{"shot_accuracy_mode", "per_sample"}, {"counts_source", "train_split"}};
    j["many"] = cell_json(r.many);
    j["medium"] = cell_json(r.medium);
    j["few"] = cell_json(r.few);
    j["major"] = {{"balanced", cell_json(r.major_balanced)},
                  {"imbalanced", cell_json(r.major_imbalanced)},
                  {"total", cell_json(r.major_total)}};
    j["minor"] = {{"balanced", cell_json(r.minor_balanced)},
                  {"imbalanced", cell_json(r.minor_imbalanced)},
                  {"total", cell_json(r.minor_total)}};
    j["all"] = cell_json(r.all);
    return j.dump(2) + "\n";
}

std::string report_to_text(const EvalReport& r) {
    std::ostringstream os;
    const char* fmt = "%-8s";
    char buf[64];
    os << "Top-1 accuracy (%)\n";
    std::snprintf(buf, sizeof(buf), fmt, "Many");
    os << buf;
    std::snprintf(buf, sizeof(buf), fmt, "Medium");
    os << buf;
    std::snprintf(buf, sizeof(buf), fmt, "Few");
    os << buf;
    os << "| ";
    for (const char* h : {"MJ-Bal", "MJ-Imb", "MJ-Tot"}) {
        std::snprintf(buf, sizeof(buf), fmt, h);
        os << buf;
    }
    os << "| ";
    for (const char* h : {"MN-Bal", "MN-Imb", "MN-Tot"}) {
        std::snprintf(buf, sizeof(buf), fmt, h);
        os << buf;
    }
    os << "| All\n";
    auto emit = [&](const EvalCell& c) {
        std::snprintf(buf, sizeof(buf), fmt, cell_text(c).c_str());
        os << buf;
    };
    emit(r.many);
    emit(r.medium);
    emit(r.few);
    os << "| ";
    emit(r.major_balanced);
    emit(r.major_imbalanced);
    emit(r.major_total);
    os << "| ";
    emit(r.minor_balanced);
    emit(r.minor_imbalanced);
    emit(r.minor_total);
    os << "| " << cell_text(r.all) << "\n";
    return os.str();
}

}  // namespace ctrec
