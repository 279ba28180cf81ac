#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctrec/config.hpp"

using namespace ctrec;
namespace fs = std::filesystem;

namespace {

std::string write_config(const std::string& text) {
    const std::string path = (fs::temp_directory_path() / "ctrec_cfg_test.json").string();
    std::ofstream f(path);
    f << text;
    return path;
}

}  // namespace

TEST_CASE("defaults load without a file") {
    const RunConfig cfg = load_run_config("", {}, std::nullopt);
    CHECK(cfg.train.lr_full == doctest::Approx(0.01));
    CHECK(cfg.train.epochs == 100);
    CHECK(cfg.train.batch_size == 48);
    CHECK(cfg.train.loss.gamma == doctest::Approx(5.0));
    CHECK(cfg.train.loss.alpha == doctest::Approx(0.85));
    CHECK(cfg.train.loss.beta == doctest::Approx(0.02));
    CHECK(cfg.pipeline.train_fraction == doctest::Approx(0.6));
    CHECK(cfg.train.domain_experts);
    CHECK(cfg.train.flow_consistency);
}

TEST_CASE("file values and nested sections are applied") {
    const std::string path = write_config(R"({
      "seed": 9,
      "synth": {"num_classes": 4, "counts": [[3,1],[2,2],[1,3],[2,1]], "sprite_size": 12},
      "pipeline": {"train_fraction": 0.5},
      "model": {"input_size": 32, "stem_channels": 8, "stage_channels": [8,8,16,16],
                "head_channels": 16, "gn_groups": 4},
      "train": {"epochs": 3, "batch_size": 4, "lr_full": 0.005},
      "loss": {"gamma": 2.0, "beta": 0.0},
      "eval": {"per_frame": true}
    })");
    const RunConfig cfg = load_run_config(path, {}, std::nullopt);
    CHECK(cfg.seed == 9);
    CHECK(cfg.synth.num_classes == 4);
    CHECK(cfg.synth.counts.size() == 4);
    CHECK(cfg.synth.counts[2] == (std::array<int, 2>{1, 3}));
    CHECK(cfg.pipeline.train_fraction == doctest::Approx(0.5));
    CHECK(cfg.model.input_size == 32);
    CHECK(cfg.model.stage_channels == (std::array<int, 4>{8, 8, 16, 16}));
    CHECK(cfg.train.epochs == 3);
    CHECK(cfg.train.lr_full == doctest::Approx(0.005));
    CHECK(cfg.train.loss.gamma == doctest::Approx(2.0));
    CHECK(cfg.train.loss.beta == doctest::Approx(0.0));
    CHECK(cfg.eval.per_frame);
    // subsystem seeds fan out from the master seed deterministically
    const RunConfig again = load_run_config(path, {}, std::nullopt);
    CHECK(cfg.synth.seed == again.synth.seed);
    CHECK(cfg.train.seed == again.train.seed);
    CHECK(cfg.synth.seed != cfg.train.seed);
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(load_run_config(write_config(R"({"bogus": 1})"), {}, std::nullopt),
                    ConfigError);
    CHECK_THROWS_AS(load_run_config(write_config(R"({"synth": {"bogus": 1}})"), {}, std::nullopt),
                    ConfigError);
    CHECK_THROWS_AS(load_run_config(write_config(R"({"train": {"lr": 0.1}})"), {}, std::nullopt),
                    ConfigError);
    CHECK_THROWS_AS(load_run_config(write_config(R"({"loss": {"gamm": 5}})"), {}, std::nullopt),
                    ConfigError);
}

TEST_CASE("--set overrides with dotted paths and JSON values") {
    const RunConfig cfg = load_run_config(
        "", {"train.epochs=7", "synth.counts=[[2,1],[1,2]]", "synth.num_classes=2",
             "loss.beta=0.5", "eval.per_frame=true"},
        std::nullopt);
    CHECK(cfg.train.epochs == 7);
    REQUIRE(cfg.synth.counts.size() == 2);
    CHECK(cfg.synth.counts[0] == (std::array<int, 2>{2, 1}));
    CHECK(cfg.train.loss.beta == doctest::Approx(0.5));
    CHECK(cfg.eval.per_frame);

    CHECK_THROWS_AS(load_run_config("", {"train.bogus=1"}, std::nullopt), ConfigError);
    CHECK_THROWS_AS(load_run_config("", {"no_equals"}, std::nullopt), ConfigError);
    CHECK_THROWS_AS(load_run_config("", {"seed.deep=1"}, std::nullopt), ConfigError);
}

TEST_CASE("seed override wins over file and --set") {
    const std::string path = write_config(R"({"seed": 5})");
    const RunConfig cfg = load_run_config(path, {"seed=6"}, 7);
    CHECK(cfg.seed == 7);
    const RunConfig cfg2 = load_run_config(path, {"seed=6"}, std::nullopt);
    CHECK(cfg2.seed == 6);
}

TEST_CASE("validation errors") {
    CHECK_THROWS_AS(load_run_config("", {"pipeline.train_fraction=1.5"}, std::nullopt),
                    ConfigError);
    CHECK_THROWS_AS(load_run_config("", {"pipeline.domain_tolerance=-1"}, std::nullopt),
                    ConfigError);
    CHECK_THROWS_AS(load_run_config(write_config("not json"), {}, std::nullopt), ConfigError);
    CHECK_THROWS_AS(load_run_config(write_config(R"({"model": {"stage_channels": [1,2]}})"), {},
                                    std::nullopt),
                    ConfigError);
}
