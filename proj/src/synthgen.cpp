#include "ctrec/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace fs = std::filesystem;

namespace ctrec {

std::vector<std::array<int, 2>> SynthSpec::resolve_counts() const {
    if (!counts.empty()) {
        if (static_cast<int>(counts.size()) != num_classes)
            throw ConfigError("synth: counts table size must equal num_classes");
        return counts;
    }
    std::vector<std::array<int, 2>> out(num_classes);
    for (int c = 0; c < num_classes; ++c) {
        const int total =
            std::max(tail_count, static_cast<int>(std::lround(head_count * std::exp(-decay * c))));
        // dominant domain alternates: even classes diurnal, odd nocturnal
        const int dominant = std::max(1, static_cast<int>(std::lround(
                                             total * domain_bias / (domain_bias + 1.0))));
        const int recessive = std::max(1, total - dominant);
        if (c % 2 == 0)
            out[c] = {dominant, recessive};
        else
            out[c] = {recessive, dominant};
    }
    return out;
}

void SynthSpec::validate() const {
    if (num_classes < 1) throw ConfigError("synth: num_classes must be >= 1");
    if (height < 8 || width < 8) throw ConfigError("synth: image size too small");
    if (velocity_min < 0 || velocity_max < velocity_min)
        throw ConfigError("synth: bad velocity range");
    if (velocity_max >= std::min(height, width) / 4)
        throw ConfigError("synth: velocity range too large for the image size");
    if (sprite_size < 4 || sprite_size + 2 * velocity_max > std::min(height, width))
        throw ConfigError("synth: sprite does not fit in frame at the given velocity range");
    if (num_locations < 1) throw ConfigError("synth: num_locations must be >= 1");
    for (const auto& b : {day_brightness, night_brightness})
        if (!(b[0] > 0.0 && b[1] >= b[0]))
            throw ConfigError("synth: brightness ranges must be positive and ordered");
    if (!counts.empty())
        for (const auto& c : counts)
            if (c[0] < 0 || c[1] < 0) throw ConfigError("synth: counts must be non-negative");
}

int Sprite::area() const {
    int n = 0;
    for (uint8_t v : mask) n += v != 0;
    return n;
}

namespace {

uint8_t clamp_u8(double v) {
    return static_cast<uint8_t>(std::min(std::max(std::lround(v), 0l), 255l));
}

// cheap position hash for procedural textures
uint64_t pix_hash(uint64_t seed, int y, int x) {
    Rng r(seed ^ (static_cast<uint64_t>(y) << 32) ^ static_cast<uint64_t>(static_cast<uint32_t>(x)));
    return r.next_u64();
}

}  // namespace

Sprite make_sprite(int class_idx, int size, uint64_t seed) {
    Rng rng(derive_seed(seed, hash_str("sprite") ^ static_cast<uint64_t>(class_idx)));
    Sprite sp;
    sp.size = size;
    sp.mask.assign(static_cast<size_t>(size) * size, 0);
    sp.texture = Image8(size, size, 3);

    const int kind = class_idx % 6;
    const double cx = (size - 1) / 2.0, cy = (size - 1) / 2.0;
    const double rmax = size / 2.0 - 0.5;
    const double a = rmax * rng.next_real(0.75, 1.0);
    const double b = rmax * rng.next_real(0.55, 0.95);
    const double inner = a * rng.next_real(0.35, 0.55);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double dx = x - cx, dy = y - cy;
            bool on = false;
            switch (kind) {
                case 0:  // ellipse
                    on = dx * dx / (a * a) + dy * dy / (b * b) <= 1.0;
                    break;
                case 1:  // rectangle
                    on = std::abs(dx) <= a * 0.9 && std::abs(dy) <= b * 0.8;
                    break;
                case 2:  // triangle pointing up
                    on = dy >= -b && dy <= b && std::abs(dx) <= (dy + b) / (2 * b) * a;
                    break;
                case 3:  // ring
                    on = dx * dx + dy * dy <= a * a && dx * dx + dy * dy >= inner * inner;
                    break;
                case 4:  // plus sign
                    on = (std::abs(dx) <= a * 0.35 && std::abs(dy) <= b) ||
                         (std::abs(dy) <= b * 0.35 && std::abs(dx) <= a);
                    break;
                default:  // diamond
                    on = std::abs(dx) / a + std::abs(dy) / b <= 1.0;
                    break;
            }
            sp.mask[static_cast<size_t>(y) * size + x] = on ? 1 : 0;
        }
    }

    // texture: saturated base color with a class-specific stripe pattern
    const int base[3] = {rng.next_int(90, 230), rng.next_int(90, 230), rng.next_int(90, 230)};
    const int stripe_period = rng.next_int(3, 6);
    const bool vertical = rng.next_bool();
    const int stripe_delta = rng.next_int(40, 90);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const int phase = (vertical ? x : y) / stripe_period;
            const int d = phase % 2 == 0 ? stripe_delta : -stripe_delta;
            sp.texture.at(y, x, 0) = clamp_u8(base[0] + d);
            sp.texture.at(y, x, 1) = clamp_u8(base[1] - d / 2);
            sp.texture.at(y, x, 2) = clamp_u8(base[2] + (phase % 2 == 0 ? -d / 3 : d / 3));
        }
    }
    return sp;
}

FlowPair analytic_flow(int height, int width, int pos_y, int pos_x, const Sprite& sprite,
                       int vy, int vx) {
    FlowPair fp{Tensor({2, height, width}), Tensor({2, height, width})};
    for (int y = 0; y < sprite.size; ++y) {
        for (int x = 0; x < sprite.size; ++x) {
            if (!sprite.on(y, x)) continue;
            const int iy = pos_y + y, ix = pos_x + x;
            if (iy < 0 || iy >= height || ix < 0 || ix >= width) continue;
            fp.past.at(0, iy, ix) = -vx;
            fp.past.at(1, iy, ix) = -vy;
            fp.future.at(0, iy, ix) = vx;
            fp.future.at(1, iy, ix) = vy;
        }
    }
    return fp;
}

Image8 make_night(const Image8& img, double brightness) {
    if (img.channels != 3) throw ContractViolation("make_night: 3-channel image expected");
    Image8 out(img.height, img.width, 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double lum = std::lround(0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                                           0.114 * img.at(y, x, 2));
            const uint8_t v = clamp_u8(lum * brightness);
            out.at(y, x, 0) = v;
            out.at(y, x, 1) = v;
            out.at(y, x, 2) = v;
        }
    }
    return out;
}

namespace {

Image8 make_background(const SynthSpec& spec, int location) {
    Rng rng(derive_seed(spec.seed, hash_str("background") ^ static_cast<uint64_t>(location)));
    // base colors kept at least 24 apart between channels so day frames
    // always carry channel spread (detect_domain must classify them as day)
    int base[3];
    base[0] = rng.next_int(60, 140);
    base[1] = base[0] + rng.next_int(24, 60);
    base[2] = std::max(30, base[0] - rng.next_int(24, 50));
    const uint64_t noise_seed = rng.next_u64();
    Image8 bg(spec.height, spec.width, 3);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const uint64_t h = pix_hash(noise_seed, y, x);
            for (int c = 0; c < 3; ++c) {
                const int noise = static_cast<int>((h >> (c * 8)) & 0x0f) - 8;  // [-8, 7]
                bg.at(y, x, c) = clamp_u8(base[c] + noise);
            }
        }
    }
    return bg;
}

Image8 compose_frame(const Image8& bg, const Sprite& sp, int pos_y, int pos_x) {
    Image8 frame = bg;
    for (int y = 0; y < sp.size; ++y)
        for (int x = 0; x < sp.size; ++x) {
            if (!sp.on(y, x)) continue;
            for (int c = 0; c < 3; ++c) frame.at(pos_y + y, pos_x + x, c) = sp.texture.at(y, x, c);
        }
    return frame;
}

Image8 apply_day_brightness(const Image8& img, double b) {
    Image8 out(img.height, img.width, 3);
    for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = clamp_u8(img.px[i] * b);
    return out;
}

std::string seq_id(const std::string& cls, Domain z, int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", index);
    return cls + "_" + to_string(z) + "_" + buf;
}

}  // namespace

DatasetManifest generate_dataset(const SynthSpec& spec, const std::string& out_dir) {
    spec.validate();
    std::error_code ec;
    fs::create_directories(fs::path(out_dir) / "frames", ec);
    fs::create_directories(fs::path(out_dir) / "flows", ec);
    if (ec) throw IoError("generate_dataset: cannot create " + out_dir + ": " + ec.message());

    DatasetManifest manifest;
    manifest.root_dir = out_dir;
    for (int c = 0; c < spec.num_classes; ++c) {
        char buf[24];
        std::snprintf(buf, sizeof(buf), "species_%02d", c);
        manifest.class_names.emplace_back(buf);
    }

    const auto counts = spec.resolve_counts();
    std::vector<Sprite> sprites;
    for (int c = 0; c < spec.num_classes; ++c)
        sprites.push_back(make_sprite(c, spec.sprite_size, spec.seed));
    std::vector<Image8> backgrounds;
    for (int l = 0; l < spec.num_locations; ++l) backgrounds.push_back(make_background(spec, l));

    for (int c = 0; c < spec.num_classes; ++c) {
        for (int zi = 0; zi < 2; ++zi) {
            const Domain z = static_cast<Domain>(zi);
            for (int k = 0; k < counts[c][zi]; ++k) {
                const std::string id = seq_id(manifest.class_names[c], z, k);
                Rng rng(derive_seed(spec.seed, hash_str(id)));

                const int location = rng.next_int(0, spec.num_locations - 1);
                int vx = 0, vy = 0;
                do {
                    vx = rng.next_int(-spec.velocity_max, spec.velocity_max);
                    vy = rng.next_int(-spec.velocity_max, spec.velocity_max);
                } while (spec.velocity_min > 0 &&
                         std::max(std::abs(vx), std::abs(vy)) < spec.velocity_min);
                // frame-2 position keeps the sprite inside the frame at 2 +/- v
                const int lo_y = std::abs(vy), hi_y = spec.height - spec.sprite_size - std::abs(vy);
                const int lo_x = std::abs(vx), hi_x = spec.width - spec.sprite_size - std::abs(vx);
                const int pos_y = rng.next_int(lo_y, hi_y);
                const int pos_x = rng.next_int(lo_x, hi_x);

                const Sprite& sp = sprites[c];
                const Image8& bg = backgrounds[location];
                std::array<Image8, 3> frames;
                for (int j = 0; j < 3; ++j)
                    frames[j] = compose_frame(bg, sp, pos_y + (j - 1) * vy, pos_x + (j - 1) * vx);
                if (z == Domain::night) {
                    const double b = rng.next_real(spec.night_brightness[0], spec.night_brightness[1]);
                    for (auto& fr : frames) fr = make_night(fr, b);
                } else {
                    const double b = rng.next_real(spec.day_brightness[0], spec.day_brightness[1]);
                    for (auto& fr : frames) fr = apply_day_brightness(fr, b);
                }

                SequenceSample s;
                s.id = id;
                s.class_label = c;
                s.domain = z;
                char lbuf[16];
                std::snprintf(lbuf, sizeof(lbuf), "loc_%02d", location);
                s.location = lbuf;
                for (int j = 0; j < 3; ++j) {
                    s.frames[j] = "frames/" + id + "_" + std::to_string(j + 1) + ".png";
                    png_write((fs::path(out_dir) / s.frames[j]).string(), frames[j]);
                }
                const FlowPair fp =
                    analytic_flow(spec.height, spec.width, pos_y, pos_x, sp, vy, vx);
                flo_write((fs::path(out_dir) / "flows" / (id + ".past.flo")).string(), fp.past);
                flo_write((fs::path(out_dir) / "flows" / (id + ".future.flo")).string(), fp.future);
                manifest.samples.push_back(std::move(s));
            }
        }
    }
    return manifest;
}

std::array<std::string, 2> flow_paths(const DatasetManifest& m, const SequenceSample& s) {
    const fs::path dir = fs::path(m.root_dir) / "flows";
    return {(dir / (s.id + ".past.flo")).string(), (dir / (s.id + ".future.flo")).string()};
}

}  // namespace ctrec
