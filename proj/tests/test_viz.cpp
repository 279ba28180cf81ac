#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <set>

#include "ctrec/pipeline.hpp"
#include "ctrec/viz.hpp"

using namespace ctrec;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    const std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("minmax_normalize maps to [0,1], constants to zero") {
    const Tensor norm = minmax_normalize(Tensor::from({1, 3}, {2.0, 4.0, 6.0}));
    CHECK(norm[0] == 0.0);
    CHECK(norm[1] == doctest::Approx(0.5));
    CHECK(norm[2] == 1.0);

    const Tensor flat = minmax_normalize(Tensor({2, 2}, 3.25));
    for (int64_t i = 0; i < flat.size(); ++i) CHECK(flat[i] == 0.0);
}

TEST_CASE("a constant CAM tints the frame uniformly") {
    Image8 frame(8, 8, 3);
    for (auto& p : frame.px) p = 100;
    const Image8 out = overlay_cam(frame, Tensor({2, 2}, 7.0), 0.4);
    // every pixel gets the same blend of the same base color
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == out.at(0, 0, c));
    // alpha 0 keeps the frame untouched
    const Image8 plain = overlay_cam(frame, Tensor({2, 2}, 7.0), 0.0);
    CHECK(plain.px == frame.px);
}

TEST_CASE("jet colormap endpoints") {
    uint8_t lo[3], mid[3], hi[3];
    colormap_jet(0.0, lo);
    colormap_jet(0.5, mid);
    colormap_jet(1.0, hi);
    CHECK(lo[2] > lo[0]);   // blue end
    CHECK(mid[1] == 255);   // green middle
    CHECK(hi[0] > hi[2]);   // red end
}

TEST_CASE("render_sequences writes five images per sequence and skips unknown ids") {
    const std::string data_dir = fresh_dir("ctrec_viz_data");
    RunConfig cfg;
    cfg.seed = 3;
    cfg.synth.num_classes = 2;
    cfg.synth.height = cfg.synth.width = 32;
    cfg.synth.counts = {{4, 3}, {3, 4}};
    cfg.synth.sprite_size = 10;
    cfg.synth.velocity_max = 2;
    cfg.synth.seed = 3;
    cfg.model.input_size = 32;
    cfg.model.stem_channels = 8;
    cfg.model.stage_channels = {8, 8, 16, 16};
    cfg.model.head_channels = 16;
    cfg.model.gn_groups = 4;
    cfg.model.seed = 4;
    const GenResult gen = run_gen(cfg, data_dir);

    ModelConfig mc = cfg.model;
    mc.num_classes = gen.manifest.num_classes();
    const ExpertModel model = build_model(mc);

    VizOptions options;
    options.sequence_ids = {gen.manifest.samples[0].id, "no_such_id"};
    const std::string out_dir = fresh_dir("ctrec_viz_out");
    const VizResult res = render_sequences(model, gen.manifest, options, out_dir);
    CHECK(res.written.size() == 5);  // 3 CAM overlays + 2 flow renderings
    CHECK(res.skipped_ids == std::vector<std::string>{"no_such_id"});
    for (const auto& path : res.written) {
        CHECK(fs::exists(path));
        const Image8 img = png_read(path);
        CHECK(img.width > 0);
    }

    VizOptions bad;
    bad.expert = "dusk";
    CHECK_THROWS_AS(render_sequences(model, gen.manifest, bad, out_dir), ConfigError);
}
