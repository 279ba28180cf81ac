#pragma once

#include <string>
#include <vector>

#include "ctrec/config.hpp"
#include "ctrec/inference.hpp"
#include "ctrec/metrics.hpp"

namespace ctrec {

// gen: generate -> split -> filter categories -> balance test domains -> save.
struct GenResult {
    DatasetManifest manifest;
    BalanceReport balance;
    std::string manifest_path;
    std::string report_path;
};
GenResult run_gen(const RunConfig& cfg, const std::string& out_dir);

// eval: predictions for every test sequence plus the accuracy report.
// The report always scores the first-frame predictions; per_frame adds the
// remaining frames to the dump for diagnostics.
struct EvalOutputs {
    EvalReport report;
    std::vector<Prediction> predictions;  // all dumped records
    std::string predictions_path;
    std::string report_json_path;
    std::string report_text_path;
};
EvalOutputs run_eval(const ExpertModel& model, const CheckpointMeta& meta,
                     const DatasetManifest& manifest, const RunConfig::Eval& options,
                     const std::string& out_dir);

}  // namespace ctrec
