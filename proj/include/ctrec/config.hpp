#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctrec/network.hpp"
#include "ctrec/synthgen.hpp"
#include "ctrec/trainer.hpp"

namespace ctrec {

// Whole-run configuration: a JSON document merged over documented defaults.
// Unknown keys are rejected everywhere (typo safety).
struct RunConfig {
    uint64_t seed = 0;
    SynthSpec synth;

    struct Pipeline {
        double train_fraction = 0.6;  // 0.5 is the DMZ-style preset
        int domain_tolerance = 0;
    } pipeline;

    ModelConfig model;
    TrainConfig train;

    struct Eval {
        bool per_frame = false;
        int domain_tolerance = 0;
    } eval;
};

// Loads config_path (optional), applies "--set key=value" dotted-path
// overrides and the seed override, validates strictly.
RunConfig load_run_config(const std::string& config_path,
                          const std::vector<std::string>& overrides,
                          std::optional<uint64_t> seed_override);

RunConfig default_run_config();

}  // namespace ctrec
