#include "ctrec/viz.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "ctrec/synthgen.hpp"

namespace fs = std::filesystem;

namespace ctrec {

Tensor minmax_normalize(const Tensor& map) {
    real lo = map[0], hi = map[0];
    for (int64_t i = 1; i < map.size(); ++i) {
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    Tensor out(map.shape());
    if (hi == lo) return out;  // constant map -> zeros
    for (int64_t i = 0; i < map.size(); ++i) out[i] = (map[i] - lo) / (hi - lo);
    return out;
}

void colormap_jet(real v, uint8_t rgb[3]) {
    v = std::min(std::max(v, 0.0), 1.0);
    auto band = [](real x) { return std::min(std::max(x, 0.0), 1.0); };
    rgb[0] = static_cast<uint8_t>(std::lround(255.0 * band(1.5 - std::abs(4.0 * v - 3.0))));
    rgb[1] = static_cast<uint8_t>(std::lround(255.0 * band(1.5 - std::abs(4.0 * v - 2.0))));
    rgb[2] = static_cast<uint8_t>(std::lround(255.0 * band(1.5 - std::abs(4.0 * v - 1.0))));
}

Image8 overlay_cam(const Image8& frame, const Tensor& cam, real alpha) {
    if (cam.rank() != 2) throw ContractViolation("overlay_cam: rank-2 CAM expected");
    Tensor norm = minmax_normalize(cam);
    Tensor as_chw({1, cam.dim(0), cam.dim(1)});
    std::copy(norm.data(), norm.data() + norm.size(), as_chw.data());
    const Tensor up = resize_bilinear(as_chw, frame.height, frame.width);
    Image8 out(frame.height, frame.width, 3);
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) {
            uint8_t rgb[3];
            colormap_jet(up.at(0, y, x), rgb);
            for (int c = 0; c < 3; ++c) {
                const real blended = (1.0 - alpha) * frame.at(y, x, c) + alpha * rgb[c];
                out.at(y, x, c) = static_cast<uint8_t>(std::lround(blended));
            }
        }
    }
    return out;
}

VizResult render_sequences(const ExpertModel& model, const DatasetManifest& manifest,
                           const VizOptions& options, const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("viz: cannot create " + out_dir + ": " + ec.message());

    std::set<std::string> wanted(options.sequence_ids.begin(), options.sequence_ids.end());
    std::set<std::string> found;
    VizResult result;
    for (const auto& s : manifest.samples) {
        if (!wanted.empty() && !wanted.count(s.id)) continue;
        found.insert(s.id);

        ExpertId expert = ExpertId::full;
        if (options.expert == "day")
            expert = ExpertId::day;
        else if (options.expert == "night")
            expert = ExpertId::night;
        else if (options.expert == "auto")
            expert = s.domain == Domain::day ? ExpertId::day : ExpertId::night;
        else if (options.expert != "full")
            throw ConfigError("viz: unknown expert '" + options.expert + "'");

        std::array<Image8, 3> raw;
        std::array<Tensor, 3> frames;
        for (int j = 0; j < 3; ++j) {
            raw[static_cast<size_t>(j)] = png_read(manifest.frame_path(s, j));
            frames[static_cast<size_t>(j)] =
                resize_bilinear(image_to_tensor(raw[static_cast<size_t>(j)]),
                                model.config.input_size, model.config.input_size);
        }
        const ExpertOutput out = model.forward_expert(frames, expert);
        for (int j = 0; j < 3; ++j) {
            const Tensor cam =
                cam_value(model.expert(expert), slice_front(out.features, j), s.class_label);
            const Image8 overlay = overlay_cam(raw[static_cast<size_t>(j)], cam, options.alpha);
            const std::string path =
                (fs::path(out_dir) / (s.id + "_cam_" + std::to_string(j + 1) + ".png")).string();
            png_write(path, overlay);
            result.written.push_back(path);
        }
        const auto fpaths = flow_paths(manifest, s);
        const char* names[2] = {"_flow_past.png", "_flow_future.png"};
        for (int k = 0; k < 2; ++k) {
            const std::string path = (fs::path(out_dir) / (s.id + names[k])).string();
            png_write(path, flow_to_image(flo_read(fpaths[static_cast<size_t>(k)])));
            result.written.push_back(path);
        }
    }
    for (const auto& id : wanted)
        if (!found.count(id)) result.skipped_ids.push_back(id);
    std::sort(result.skipped_ids.begin(), result.skipped_ids.end());
    return result;
}

}  // namespace ctrec
