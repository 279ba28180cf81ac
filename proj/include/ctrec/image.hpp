#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctrec/tensor.hpp"

namespace ctrec {

// 8-bit interleaved image, row-major HWC.
struct Image8 {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<uint8_t> px;

    Image8() = default;
    Image8(int h, int w, int c) : height(h), width(w), channels(c), px(static_cast<size_t>(h) * w * c, 0) {}

    uint8_t& at(int y, int x, int c) {
        return px[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    uint8_t at(int y, int x, int c) const {
        return px[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

// Minimal PNG codec (8-bit, non-interlaced) over zlib. The writer always
// emits color type 2 (RGB); the reader accepts gray / gray-alpha / RGB /
// RGBA and returns 3 channels.
Image8 png_read(const std::string& path);
void png_write(const std::string& path, const Image8& img);

Tensor image_to_tensor(const Image8& img);          // (3,H,W) scaled to [0,1]
Image8 tensor_to_image(const Tensor& chw);          // clamp to [0,1], round to u8

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w);
Tensor hflip_image(const Tensor& chw);

// ---- Middlebury .flo flow maps, stored internally as (2,h,w): u then v ----
Tensor flo_read(const std::string& path);
void flo_write(const std::string& path, const Tensor& flow);

// Flow field rendered with the optical-flow color wheel (white at zero
// motion). Magnitudes are normalized by the field maximum.
Image8 flow_to_image(const Tensor& flow);
// Direction/magnitude lookup for one normalized vector; exposed for tests.
void flow_wheel_color(real fx, real fy, uint8_t rgb[3]);

}  // namespace ctrec
