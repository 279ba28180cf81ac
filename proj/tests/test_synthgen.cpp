#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ctrec/losses.hpp"
#include "ctrec/synthgen.hpp"

using namespace ctrec;
namespace fs = std::filesystem;

namespace {

SynthSpec tiny_spec() {
    SynthSpec spec;
    spec.num_classes = 2;
    spec.height = 48;
    spec.width = 48;
    spec.counts = {{4, 1}, {0, 0}};
    spec.sprite_size = 12;
    spec.velocity_min = 1;
    spec.velocity_max = 3;
    spec.num_locations = 2;
    spec.seed = 77;
    return spec;
}

std::string fresh_dir(const std::string& name) {
    const std::string dir = (fs::temp_directory_path() / name).string();
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("generate_dataset writes 3 PNGs and 2 flo files per sequence") {
    const std::string dir = fresh_dir("ctrec_gen_count");
    const DatasetManifest m = generate_dataset(tiny_spec(), dir);
    CHECK(m.samples.size() == 5);

    size_t pngs = 0, flos = 0;
    for (const auto& e : fs::directory_iterator(dir + "/frames")) pngs += e.path().extension() == ".png";
    for (const auto& e : fs::directory_iterator(dir + "/flows")) flos += e.path().extension() == ".flo";
    CHECK(pngs == 5 * 3);
    CHECK(flos == 5 * 2);

    int day = 0, night = 0;
    for (const auto& s : m.samples) (s.domain == Domain::day ? day : night)++;
    CHECK(day == 4);
    CHECK(night == 1);
    for (const auto& s : m.samples) CHECK(s.split == Split::unassigned);
}

TEST_CASE("same spec and seed produce byte-identical outputs") {
    const std::string a = fresh_dir("ctrec_gen_det_a");
    const std::string b = fresh_dir("ctrec_gen_det_b");
    DatasetManifest ma = generate_dataset(tiny_spec(), a);
    DatasetManifest mb = generate_dataset(tiny_spec(), b);
    for (auto& s : ma.samples) s.split = Split::train;
    for (auto& s : mb.samples) s.split = Split::train;
    save_manifest(ma, a + "/manifest.json");
    save_manifest(mb, b + "/manifest.json");
    CHECK(file_bytes(a + "/manifest.json") == file_bytes(b + "/manifest.json"));
    CHECK(file_bytes(a + "/" + ma.samples[0].frames[0]) ==
          file_bytes(b + "/" + mb.samples[0].frames[0]));
    const auto fa = flow_paths(ma, ma.samples[2]);
    const auto fb = flow_paths(mb, mb.samples[2]);
    CHECK(file_bytes(fa[0]) == file_bytes(fb[0]));
}

TEST_CASE("analytic_flow: signs, zero velocity, and mask accounting") {
    Sprite sp = make_sprite(0, 8, 5);
    const int area = sp.area();
    REQUIRE(area > 0);

    const FlowPair moving = analytic_flow(32, 32, 10, 7, sp, 0, 3);
    int past_nonzero = 0, future_nonzero = 0;
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            if (moving.past.at(0, y, x) != 0 || moving.past.at(1, y, x) != 0) {
                past_nonzero++;
                CHECK(moving.past.at(0, y, x) == -3.0);
                CHECK(moving.past.at(1, y, x) == 0.0);
            }
            if (moving.future.at(0, y, x) != 0 || moving.future.at(1, y, x) != 0) {
                future_nonzero++;
                CHECK(moving.future.at(0, y, x) == 3.0);
            }
        }
    }
    CHECK(past_nonzero == area);
    CHECK(future_nonzero == area);

    const FlowPair still = analytic_flow(32, 32, 10, 7, sp, 0, 0);
    for (int64_t i = 0; i < still.past.size(); ++i) {
        CHECK(still.past[i] == 0.0);
        CHECK(still.future[i] == 0.0);
    }

    // diagonal velocity on a sprite of known area
    const FlowPair diag = analytic_flow(32, 32, 4, 4, sp, 2, 1);
    int count = 0;
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
            if (diag.past.at(0, y, x) != 0 || diag.past.at(1, y, x) != 0) count++;
    CHECK(count == area);
}

TEST_CASE("make_night: replication, idempotence on gray, worked luminance") {
    Image8 img(2, 2, 3);
    img.at(0, 0, 0) = 100;
    img.at(0, 0, 1) = 50;
    img.at(0, 0, 2) = 0;
    const Image8 night = make_night(img, 1.0);
    CHECK(night.at(0, 0, 0) == 59);  // round(0.299*100 + 0.587*50)
    CHECK(night.at(0, 0, 1) == 59);
    CHECK(night.at(0, 0, 2) == 59);
    CHECK(detect_domain(night, 0) == Domain::night);

    Image8 gray(3, 3, 3);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x)
            for (int c = 0; c < 3; ++c) gray.at(y, x, c) = static_cast<uint8_t>(40 * y + x);
    const Image8 same = make_night(gray, 1.0);
    CHECK(same.px == gray.px);
}

TEST_CASE("generated domains always satisfy detect_domain at tolerance 0") {
    const std::string dir = fresh_dir("ctrec_gen_domains");
    SynthSpec spec = tiny_spec();
    spec.counts = {{3, 3}, {2, 2}};
    const DatasetManifest m = generate_dataset(spec, dir);
    for (const auto& s : m.samples) {
        for (int j = 0; j < 3; ++j) {
            const Image8 frame = png_read(m.frame_path(s, j));
            CHECK(detect_domain(frame, 0) == s.domain);
        }
    }
}

TEST_CASE("warping frame 1 by the past flow reproduces frame 2 on the sprite footprint") {
    const std::string dir = fresh_dir("ctrec_gen_warp");
    SynthSpec spec = tiny_spec();
    spec.counts = {{3, 0}, {0, 0}};
    const DatasetManifest m = generate_dataset(spec, dir);
    for (const auto& s : m.samples) {
        const Tensor f1 = image_to_tensor(png_read(m.frame_path(s, 0)));
        const Tensor f2 = image_to_tensor(png_read(m.frame_path(s, 1)));
        const auto fpaths = flow_paths(m, s);
        const Tensor past = flo_read(fpaths[0]);
        for (int c = 0; c < 3; ++c) {
            Tensor channel({spec.height, spec.width});
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x) channel.at(y, x) = f1.at(c, y, x);
            const Tensor warped = warp(Var(channel), past).value();
            for (int y = 0; y < spec.height; ++y)
                for (int x = 0; x < spec.width; ++x)
                    if (past.at(0, y, x) != 0 || past.at(1, y, x) != 0)
                        CHECK(std::abs(warped.at(y, x) - f2.at(c, y, x)) < 1e-6);
        }
    }
}

TEST_CASE("sprites are class-deterministic and classes have distinct shapes") {
    const Sprite a1 = make_sprite(3, 16, 99);
    const Sprite a2 = make_sprite(3, 16, 99);
    CHECK(a1.mask == a2.mask);
    CHECK(a1.texture.px == a2.texture.px);
    const Sprite b = make_sprite(4, 16, 99);
    CHECK(a1.mask != b.mask);
}

TEST_CASE("long-tail generator counts are non-increasing with positive decay") {
    SynthSpec spec;
    spec.num_classes = 6;
    spec.head_count = 40;
    spec.tail_count = 2;
    spec.decay = 0.5;
    spec.domain_bias = 3.0;
    const auto counts = spec.resolve_counts();
    REQUIRE(counts.size() == 6);
    for (size_t c = 1; c < counts.size(); ++c)
        CHECK(counts[c][0] + counts[c][1] <= counts[c - 1][0] + counts[c - 1][1]);
    for (const auto& e : counts) {
        CHECK(e[0] >= 1);
        CHECK(e[1] >= 1);
    }
}

TEST_CASE("spec validation rejects impossible geometry") {
    SynthSpec spec = tiny_spec();
    spec.velocity_max = 30;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = tiny_spec();
    spec.sprite_size = 46;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = tiny_spec();
    spec.counts = {{-1, 2}, {0, 0}};
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = tiny_spec();
    spec.counts = {{1, 1}};
    CHECK_THROWS_AS(generate_dataset(spec, "/tmp/ctrec_unused"), ConfigError);
}
