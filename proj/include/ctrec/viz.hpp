#pragma once

#include <string>
#include <vector>

#include "ctrec/manifest.hpp"
#include "ctrec/network.hpp"

namespace ctrec {

// min-max to [0,1]; a constant map normalizes to all zeros
Tensor minmax_normalize(const Tensor& map);

// jet-style color map over [0,1]
void colormap_jet(real v, uint8_t rgb[3]);

// CAM upsampled to the frame size and alpha-blended over it
Image8 overlay_cam(const Image8& frame, const Tensor& cam, real alpha = 0.4);

struct VizOptions {
    std::vector<std::string> sequence_ids;  // empty selects every sequence
    std::string expert = "full";            // full | day | night | auto
    real alpha = 0.4;
};

struct VizResult {
    std::vector<std::string> written;
    std::vector<std::string> skipped_ids;
};

// Per sequence: three frames with the true-class CAM overlaid plus both flow
// fields rendered with the color wheel. Unknown ids are listed and skipped.
VizResult render_sequences(const ExpertModel& model, const DatasetManifest& manifest,
                           const VizOptions& options, const std::string& out_dir);

}  // namespace ctrec
