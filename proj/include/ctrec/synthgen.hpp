#pragma once

#include <array>
#include <string>
#include <vector>

#include "ctrec/image.hpp"
#include "ctrec/manifest.hpp"
#include "ctrec/tensor.hpp"

namespace ctrec {

// Ground-truth displacement fields for one sequence, in pixels at image
// resolution. past = f_{2->1}, future = f_{2->3}; each (2,H,W), x then y.
struct FlowPair {
    Tensor past;
    Tensor future;
};

struct SynthSpec {
    int num_classes = 6;
    int height = 64;
    int width = 64;

    // Either an explicit per-class {day, night} table, or the long-tail
    // generator: count(c) = max(tail, round(head * exp(-decay * c))) split
    // across domains at ratio domain_bias : 1 (dominant domain alternates
    // with class parity).
    std::vector<std::array<int, 2>> counts;  // used when non-empty
    int head_count = 40;
    int tail_count = 4;
    double decay = 0.5;
    double domain_bias = 3.0;

    int velocity_min = 1;  // per-axis integer pixels/frame
    int velocity_max = 3;
    std::array<double, 2> day_brightness{0.85, 1.1};
    std::array<double, 2> night_brightness{0.45, 0.8};
    int num_locations = 6;
    int sprite_size = 16;
    uint64_t seed = 0;

    std::vector<std::array<int, 2>> resolve_counts() const;
    void validate() const;
};

// Class-conditional sprite: boolean footprint plus an RGB texture on a
// square canvas. Deterministic in (class index, dataset seed).
struct Sprite {
    int size = 0;
    std::vector<uint8_t> mask;  // size*size, 0/1
    Image8 texture;

    bool on(int y, int x) const { return mask[static_cast<size_t>(y) * size + x] != 0; }
    int area() const;
};

Sprite make_sprite(int class_idx, int size, uint64_t seed);

// f_{2->1} = -v and f_{2->3} = +v on the sprite's frame-2 footprint, zero
// elsewhere (static background, static camera).
FlowPair analytic_flow(int height, int width, int pos_y, int pos_x, const Sprite& sprite,
                       int vy, int vx);

// Luminance replicated into all channels, scaled into the night range, so
// detect_domain(result, 0) == night.
Image8 make_night(const Image8& img, double brightness);

// Writes 3 PNGs + 2 .flo files per sequence under out_dir (frames/ and
// flows/) and returns the manifest with every sample still unassigned.
DatasetManifest generate_dataset(const SynthSpec& spec, const std::string& out_dir);

// flows/<id>.past.flo and flows/<id>.future.flo next to the manifest.
std::array<std::string, 2> flow_paths(const DatasetManifest& m, const SequenceSample& s);

}  // namespace ctrec
