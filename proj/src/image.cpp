#include "ctrec/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "ctrec/common.hpp"

namespace ctrec {

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const uint8_t* data, size_t len) {
    put_u32be(out, static_cast<uint32_t>(len));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + start, static_cast<uInt>(4 + len));
    put_u32be(out, crc);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void png_write(const std::string& path, const Image8& img) {
    if (img.channels != 3) throw ContractViolation("png_write: 3-channel image expected");
    const size_t stride = static_cast<size_t>(img.width) * 3;
    std::vector<uint8_t> raw((stride + 1) * img.height);
    for (int y = 0; y < img.height; ++y) {
        raw[y * (stride + 1)] = 0;  // filter: None
        std::memcpy(&raw[y * (stride + 1) + 1], &img.px[y * stride], stride);
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> zdata(bound);
    if (compress2(zdata.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png_write: deflate failed");
    zdata.resize(bound);

    std::vector<uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    uint8_t ihdr[13];
    ihdr[0] = static_cast<uint8_t>(img.width >> 24);
    ihdr[1] = static_cast<uint8_t>(img.width >> 16);
    ihdr[2] = static_cast<uint8_t>(img.width >> 8);
    ihdr[3] = static_cast<uint8_t>(img.width);
    ihdr[4] = static_cast<uint8_t>(img.height >> 24);
    ihdr[5] = static_cast<uint8_t>(img.height >> 16);
    ihdr[6] = static_cast<uint8_t>(img.height >> 8);
    ihdr[7] = static_cast<uint8_t>(img.height);
    ihdr[8] = 8;   // bit depth
    ihdr[9] = 2;   // color type: truecolor
    ihdr[10] = 0;  // compression
    ihdr[11] = 0;  // filter
    ihdr[12] = 0;  // interlace
    append_chunk(out, "IHDR", ihdr, 13);
    append_chunk(out, "IDAT", zdata.data(), zdata.size());
    append_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("png_write: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("png_write: write failed for " + path);
}

Image8 png_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("png_read: cannot open " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw IoError("png_read: not a PNG file: " + path);

    int width = 0, height = 0, bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<uint8_t> zdata;
    size_t pos = 8;
    bool seen_iend = false;
    while (pos + 8 <= buf.size() && !seen_iend) {
        uint32_t len = get_u32be(&buf[pos]);
        if (pos + 12 + len > buf.size()) throw IoError("png_read: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
        const uint8_t* data = &buf[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            width = static_cast<int>(get_u32be(data));
            height = static_cast<int>(get_u32be(data + 4));
            bit_depth = data[8];
            color_type = data[9];
            interlace = data[12];
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            zdata.insert(zdata.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
        pos += 12 + len;
    }
    if (width <= 0 || height <= 0) throw IoError("png_read: missing IHDR in " + path);
    if (bit_depth != 8) throw IoError("png_read: only 8-bit PNGs supported: " + path);
    if (interlace != 0) throw IoError("png_read: interlaced PNGs not supported: " + path);
    int nch;
    switch (color_type) {
        case 0: nch = 1; break;
        case 2: nch = 3; break;
        case 4: nch = 2; break;
        case 6: nch = 4; break;
        default: throw IoError("png_read: unsupported color type in " + path);
    }

    const size_t stride = static_cast<size_t>(width) * nch;
    std::vector<uint8_t> raw((stride + 1) * height);
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, zdata.data(), static_cast<uLong>(zdata.size())) != Z_OK ||
        rawlen != raw.size())
        throw IoError("png_read: inflate failed for " + path);

    // undo scanline filters in place
    std::vector<uint8_t> prev(stride, 0);
    for (int y = 0; y < height; ++y) {
        uint8_t* row = &raw[y * (stride + 1) + 1];
        const int filter = raw[y * (stride + 1)];
        for (size_t x = 0; x < stride; ++x) {
            const int a = x >= static_cast<size_t>(nch) ? row[x - nch] : 0;
            const int b = prev[x];
            const int c = x >= static_cast<size_t>(nch) ? prev[x - nch] : 0;
            int v = row[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw IoError("png_read: bad filter byte in " + path);
            }
            row[x] = static_cast<uint8_t>(v);
        }
        std::memcpy(prev.data(), row, stride);
    }

    Image8 img(height, width, 3);
    for (int y = 0; y < height; ++y) {
        const uint8_t* row = &raw[y * (stride + 1) + 1];
        for (int x = 0; x < width; ++x) {
            const uint8_t* p = row + static_cast<size_t>(x) * nch;
            uint8_t r, g, b;
            switch (color_type) {
                case 0: r = g = b = p[0]; break;
                case 2: r = p[0]; g = p[1]; b = p[2]; break;
                case 4: r = g = b = p[0]; break;
                default: r = p[0]; g = p[1]; b = p[2]; break;  // RGBA: alpha dropped
            }
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    }
    return img;
}

Tensor image_to_tensor(const Image8& img) {
    if (img.channels != 3) throw ContractViolation("image_to_tensor: 3-channel image expected");
    Tensor t({3, img.height, img.width});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) t.at(c, y, x) = img.at(y, x, c) / 255.0;
    return t;
}

Image8 tensor_to_image(const Tensor& chw) {
    if (chw.rank() != 3 || chw.dim(0) != 3)
        throw ContractViolation("tensor_to_image: (3,H,W) tensor expected");
    Image8 img(chw.dim(1), chw.dim(2), 3);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                real v = std::min(std::max(chw.at(c, y, x), 0.0), 1.0);
                img.at(y, x, c) = static_cast<uint8_t>(std::lround(v * 255.0));
            }
    return img;
}

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
    if (chw.rank() != 3) throw ContractViolation("resize_bilinear: rank-3 tensor expected");
    const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    if (out_h == h && out_w == w) return chw;
    Tensor out({c, out_h, out_w});
    // pixel-center alignment: src = (dst + 0.5) * scale - 0.5
    const real sy = static_cast<real>(h) / out_h;
    const real sx = static_cast<real>(w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        real fy = (oy + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<real>(h - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, h - 1);
        const real wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            real fx = (ox + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0), static_cast<real>(w - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, w - 1);
            const real wx = fx - x0;
            for (int ch = 0; ch < c; ++ch) {
                out.at(ch, oy, ox) =
                    (1 - wy) * ((1 - wx) * chw.at(ch, y0, x0) + wx * chw.at(ch, y0, x1)) +
                    wy * ((1 - wx) * chw.at(ch, y1, x0) + wx * chw.at(ch, y1, x1));
            }
        }
    }
    return out;
}

Tensor hflip_image(const Tensor& chw) {
    if (chw.rank() != 3) throw ContractViolation("hflip_image: rank-3 tensor expected");
    const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(ch, y, x) = chw.at(ch, y, w - 1 - x);
    return out;
}

// ---------------- .flo ----------------

void flo_write(const std::string& path, const Tensor& flow) {
    if (flow.rank() != 3 || flow.dim(0) != 2)
        throw ContractViolation("flo_write: (2,h,w) flow expected");
    const int h = flow.dim(1), w = flow.dim(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("flo_write: cannot open " + path);
    f.write("PIEH", 4);
    int32_t wi = w, hi = h;
    f.write(reinterpret_cast<const char*>(&wi), 4);
    f.write(reinterpret_cast<const char*>(&hi), 4);
    std::vector<float> row(static_cast<size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            row[2 * x] = static_cast<float>(flow.at(0, y, x));
            row[2 * x + 1] = static_cast<float>(flow.at(1, y, x));
        }
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!f) throw IoError("flo_write: write failed for " + path);
}

Tensor flo_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("flo_read: cannot open " + path);
    char tag[4];
    f.read(tag, 4);
    if (!f || std::memcmp(tag, "PIEH", 4) != 0)
        throw IoError("flo_read: bad magic in " + path);
    int32_t w = 0, h = 0;
    f.read(reinterpret_cast<char*>(&w), 4);
    f.read(reinterpret_cast<char*>(&h), 4);
    if (!f || w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
        throw IoError("flo_read: bad dimensions in " + path);
    Tensor flow({2, h, w});
    std::vector<float> row(static_cast<size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()),
               static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!f) throw IoError("flo_read: truncated data in " + path);
        for (int x = 0; x < w; ++x) {
            flow.at(0, y, x) = row[2 * x];
            flow.at(1, y, x) = row[2 * x + 1];
        }
    }
    return flow;
}

// ---------------- flow rendering ----------------

namespace {

struct ColorWheel {
    int ncols = 0;
    int colors[60][3];
    ColorWheel() {
        const int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
        int k = 0;
        for (int i = 0; i < RY; ++i, ++k) set(k, 255, 255 * i / RY, 0);
        for (int i = 0; i < YG; ++i, ++k) set(k, 255 - 255 * i / YG, 255, 0);
        for (int i = 0; i < GC; ++i, ++k) set(k, 0, 255, 255 * i / GC);
        for (int i = 0; i < CB; ++i, ++k) set(k, 0, 255 - 255 * i / CB, 255);
        for (int i = 0; i < BM; ++i, ++k) set(k, 255 * i / BM, 0, 255);
        for (int i = 0; i < MR; ++i, ++k) set(k, 255, 0, 255 - 255 * i / MR);
        ncols = k;
    }
    void set(int k, int r, int g, int b) {
        colors[k][0] = r;
        colors[k][1] = g;
        colors[k][2] = b;
    }
};

const ColorWheel& wheel() {
    static ColorWheel cw;
    return cw;
}

}  // namespace

void flow_wheel_color(real fx, real fy, uint8_t rgb[3]) {
    const ColorWheel& cw = wheel();
    const real rad = std::sqrt(fx * fx + fy * fy);
    const real a = std::atan2(-fy, -fx) / M_PI;
    const real fk = (a + 1.0) / 2.0 * (cw.ncols - 1);
    int k0 = static_cast<int>(fk);
    int k1 = (k0 + 1) % cw.ncols;
    const real f = fk - k0;
    for (int b = 0; b < 3; ++b) {
        real col0 = cw.colors[k0][b] / 255.0;
        real col1 = cw.colors[k1][b] / 255.0;
        real col = (1 - f) * col0 + f * col1;
        if (rad <= 1)
            col = 1 - rad * (1 - col);  // white towards zero motion
        else
            col *= 0.75;
        rgb[b] = static_cast<uint8_t>(std::lround(255.0 * col));
    }
}

Image8 flow_to_image(const Tensor& flow) {
    if (flow.rank() != 3 || flow.dim(0) != 2)
        throw ContractViolation("flow_to_image: (2,h,w) flow expected");
    const int h = flow.dim(1), w = flow.dim(2);
    real maxrad = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            maxrad = std::max(maxrad, std::hypot(flow.at(0, y, x), flow.at(1, y, x)));
    if (maxrad == 0) maxrad = 1;
    Image8 img(h, w, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t rgb[3];
            flow_wheel_color(flow.at(0, y, x) / maxrad, flow.at(1, y, x) / maxrad, rgb);
            img.at(y, x, 0) = rgb[0];
            img.at(y, x, 1) = rgb[1];
            img.at(y, x, 2) = rgb[2];
        }
    return img;
}

}  // namespace ctrec
