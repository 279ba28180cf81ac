#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctrec/inference.hpp"
#include "ctrec/manifest.hpp"

namespace ctrec {

enum class ShotSplit { many, medium, few };
const char* to_string(ShotSplit s);

// many > 100, medium in [20, 100], few < 20; counts are train totals per class.
ShotSplit shot_split(int train_count);

// Classes whose train-domain count ratio is >= 3. Every class must have at
// least one train sample per domain (guaranteed after filter_categories).
std::vector<bool> imbalanced_classes(const CountTable& counts);

enum class MajorMinor { major, minor };
// A sample is major when its domain is (one of) the dominant domain(s) of
// its class; ties count as major for both domains.
MajorMinor label_major_minor(int class_label, Domain domain, const DomainStats& stats);

struct EvalCell {
    int64_t correct = 0;
    int64_t total = 0;
    std::optional<double> accuracy_pct() const {
        if (total == 0) return std::nullopt;
        return 100.0 * static_cast<double>(correct) / static_cast<double>(total);
    }
    void add(bool ok) {
        total++;
        correct += ok ? 1 : 0;
    }
};

struct EvalReport {
    EvalCell many, medium, few;
    EvalCell major_balanced, major_imbalanced, major_total;
    EvalCell minor_balanced, minor_imbalanced, minor_total;
    EvalCell all;
};

// One prediction per test sample; missing sequence ids are fatal.
EvalReport evaluate(const std::vector<Prediction>& predictions, const DatasetManifest& manifest);

std::string report_to_json(const EvalReport& r);
std::string report_to_text(const EvalReport& r);

}  // namespace ctrec
