#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ctrec/losses.hpp"
#include "ctrec/network.hpp"
#include "support/gradcheck.hpp"

using namespace ctrec;
using ctrec::test::max_grad_error;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, real scale = 1.0) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = scale * (2.0 * rng.next_real() - 1.0);
    return t;
}

// independent frame-summed cross-entropy via log-sum-exp
real cross_entropy_oracle(const Tensor& logits, int y) {
    real total = 0;
    for (int i = 0; i < logits.dim(0); ++i) {
        real mx = logits.at(i, 0);
        for (int j = 1; j < logits.dim(1); ++j) mx = std::max(mx, logits.at(i, j));
        real lse = 0;
        for (int j = 0; j < logits.dim(1); ++j) lse += std::exp(logits.at(i, j) - mx);
        total += -(logits.at(i, y) - (mx + std::log(lse)));
    }
    return total;
}

// brute-force backward bilinear sampling with clamp-to-edge
Tensor warp_oracle(const Tensor& map, const Tensor& flow) {
    const int h = map.dim(0), w = map.dim(1);
    Tensor out({h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            real sx = std::clamp(x + flow.at(0, y, x), 0.0, static_cast<real>(w - 1));
            real sy = std::clamp(y + flow.at(1, y, x), 0.0, static_cast<real>(h - 1));
            const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
            const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
            const real fx = sx - x0, fy = sy - y0;
            out.at(y, x) = (1 - fy) * ((1 - fx) * map.at(y0, x0) + fx * map.at(y0, x1)) +
                           fy * ((1 - fx) * map.at(y1, x0) + fx * map.at(y1, x1));
        }
    }
    return out;
}

ExpertHead make_test_head(int k, int c, Rng& rng) {
    ExpertHead head;
    head.w = Var(random_tensor({k, c}, rng), true);
    head.log_scale = Var(random_tensor({c}, rng, 0.2), true);
    return head;
}

}  // namespace

TEST_CASE("focal loss reproduces the hand-evaluated worked value") {
    // three frames of (0,0) logits, y=0, gamma=5: 3 * 0.5^5 * ln 2
    const Var logits(Tensor({3, 2}, 0.0));
    const real got = focal_loss(logits, 0, 5.0).value()[0];
    const real oracle = 3.0 * std::pow(0.5, 5.0) * std::log(2.0);
    CHECK(std::abs(got - oracle) < 1e-12);
    CHECK(got == doctest::Approx(0.06498254817749487).epsilon(1e-12));
}

TEST_CASE("focal loss at gamma 0 equals cross-entropy") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const int c = rng.next_int(2, 7);
        Tensor logits = random_tensor({3, c}, rng, 5.0);
        const int y = rng.next_int(0, c - 1);
        const real got = focal_loss(Var(logits), y, 0.0).value()[0];
        CHECK(std::abs(got - cross_entropy_oracle(logits, y)) < 1e-9);
    }
}

TEST_CASE("focal loss vanishes for a confidently correct prediction") {
    Tensor logits({3, 2});
    for (int i = 0; i < 3; ++i) {
        logits.at(i, 0) = 50.0;
        logits.at(i, 1) = 0.0;
    }
    CHECK(focal_loss(Var(logits), 0, 5.0).value()[0] < 1e-10);
}

TEST_CASE("focal loss is monotone non-increasing in the true-class logit") {
    Rng rng(103);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor logits = random_tensor({3, 4}, rng, 3.0);
        const int y = rng.next_int(0, 3);
        real prev = focal_loss(Var(logits), y, 5.0).value()[0];
        for (int step = 0; step < 5; ++step) {
            for (int i = 0; i < 3; ++i) logits.at(i, y) += 0.5;
            const real cur = focal_loss(Var(logits), y, 5.0).value()[0];
            CHECK(cur <= prev + 1e-12);
            prev = cur;
        }
    }
}

TEST_CASE("focal loss rejects negative gamma") {
    CHECK_THROWS_AS(focal_loss(Var(Tensor({3, 2}, 0.0)), 0, -1.0), ConfigError);
}

TEST_CASE("focal loss stays finite for logits up to +/-50") {
    Rng rng(105);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor logits({3, 5});
        for (int64_t i = 0; i < logits.size(); ++i) logits[i] = rng.next_real(-50.0, 50.0);
        const int y = rng.next_int(0, 4);
        for (const real gamma : {0.0, 5.0}) {
            Var v(logits, true);
            Var loss = focal_loss(v, y, gamma);
            CHECK(std::isfinite(loss.value()[0]));
            CHECK(loss.value()[0] >= 0.0);
            backward(loss);
            const Tensor& g = v.grad();
            for (int64_t i = 0; i < g.size(); ++i) CHECK(std::isfinite(g[i]));
        }
    }
}

TEST_CASE("warp: zero flow is the identity") {
    Rng rng(107);
    Tensor m = random_tensor({5, 7}, rng);
    const Tensor out = warp(Var(m), Tensor({2, 5, 7}, 0.0)).value();
    for (int64_t i = 0; i < m.size(); ++i) CHECK(out[i] == m[i]);
}

TEST_CASE("warp: integer shift with clamp on a 1x4 map") {
    const Tensor m = Tensor::from({1, 4}, {1.0, 2.0, 3.0, 4.0});
    Tensor flow({2, 1, 4}, 0.0);
    for (int x = 0; x < 4; ++x) flow.at(0, 0, x) = -1.0;
    const Tensor out = warp(Var(m), flow).value();
    CHECK(out[0] == 1.0);  // clamped to the left edge
    CHECK(out[1] == 1.0);
    CHECK(out[2] == 2.0);
    CHECK(out[3] == 3.0);
}

TEST_CASE("warp: half-pixel flow interpolates and clamps at the right edge") {
    const Tensor m = Tensor::from({1, 2}, {0.0, 1.0});
    Tensor flow({2, 1, 2}, 0.0);
    flow.at(0, 0, 0) = 0.5;
    flow.at(0, 0, 1) = 0.5;
    const Tensor out = warp(Var(m), flow).value();
    CHECK(out[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("warp matches the brute-force oracle on random maps and flows") {
    Rng rng(109);
    for (int trial = 0; trial < 200; ++trial) {
        const int h = rng.next_int(1, 16), w = rng.next_int(1, 16);
        Tensor m = random_tensor({h, w}, rng);
        Tensor flow({2, h, w});
        const bool integer_shift = trial % 4 == 0;
        for (int64_t i = 0; i < flow.size(); ++i)
            flow[i] = integer_shift ? rng.next_int(-3, 3) : 6.0 * rng.next_real() - 3.0;
        const Tensor got = warp(Var(m), flow).value();
        const Tensor want = warp_oracle(m, flow);
        for (int64_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) < 1e-6);
    }
}

TEST_CASE("warp is linear in the map argument") {
    Rng rng(113);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_tensor({6, 6}, rng);
        Tensor b = random_tensor({6, 6}, rng);
        Tensor sum = a;
        for (int64_t i = 0; i < sum.size(); ++i) sum[i] += b[i];
        Tensor flow = random_tensor({2, 6, 6}, rng, 2.0);
        const Tensor lhs = warp(Var(sum), flow).value();
        const Tensor ra = warp(Var(a), flow).value();
        const Tensor rb = warp(Var(b), flow).value();
        for (int64_t i = 0; i < lhs.size(); ++i) CHECK(std::abs(lhs[i] - (ra[i] + rb[i])) < 1e-6);
    }
}

TEST_CASE("warp rejects mismatched flow resolution") {
    CHECK_THROWS_AS(warp(Var(Tensor({4, 4}, 0.0)), Tensor({2, 3, 4}, 0.0)), ContractViolation);
}

TEST_CASE("ssim: self-similarity, symmetry, and the constant-map value") {
    LossConfig cfg;
    Rng rng(127);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    CHECK(ssim(Var(a), Var(a), cfg).value()[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(std::abs(ssim(Var(a), Var(b), cfg).value()[0] -
                   ssim(Var(b), Var(a), cfg).value()[0]) < 1e-9);

    // constant 0 vs constant 1 (already normalized): C1 / (1 + C1)
    const real got = ssim(Var(Tensor({4, 4}, 0.0)), Var(Tensor({4, 4}, 1.0)), cfg).value()[0];
    CHECK(got == doctest::Approx(cfg.ssim_c1 / (1.0 + cfg.ssim_c1)).epsilon(1e-12));
    CHECK(got == doctest::Approx(9.99900009999e-5).epsilon(1e-9));

    LossConfig bad = cfg;
    bad.ssim_window = 4;
    CHECK_THROWS_AS(ssim(Var(a), Var(b), bad), ConfigError);
}

TEST_CASE("ssim stays within [-1, 1] on random pairs") {
    LossConfig cfg;
    Rng rng(131);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor a = random_tensor({5, 5}, rng);
        Tensor b = random_tensor({5, 5}, rng);
        const real v = ssim(Var(a), Var(b), cfg).value()[0];
        CHECK(v <= 1.0 + 1e-9);
        CHECK(v >= -1.0 - 1e-9);
    }
}

TEST_CASE("photometric loss: identity, symmetry, worked value") {
    LossConfig cfg;
    Rng rng(137);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    CHECK(photometric_loss(Var(a), Var(a), cfg).value()[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(photometric_loss(Var(a), Var(b), cfg).value()[0] -
                   photometric_loss(Var(b), Var(a), cfg).value()[0]) < 1e-9);

    // a=0, b=1 normalize to themselves: 0.425 (1 - 9.999e-5) + 0.15
    const real got =
        photometric_loss(Var(Tensor({4, 4}, 0.0)), Var(Tensor({4, 4}, 1.0)), cfg).value()[0];
    CHECK(got == doctest::Approx(0.5749575042495751).epsilon(1e-12));
    CHECK(std::abs(got - 0.574958) < 1e-5);

    // constant pair is defined as zero
    CHECK(photometric_loss(Var(Tensor({4, 4}, 2.5)), Var(Tensor({4, 4}, 2.5)), cfg).value()[0] ==
          0.0);
}

TEST_CASE("flow consistency: identical CAMs under zero flow cost nothing") {
    LossConfig cfg;
    Rng rng(139);
    Tensor m = random_tensor({4, 4}, rng);
    FlowPair flows{Tensor({2, 4, 4}, 0.0), Tensor({2, 4, 4}, 0.0)};
    const real got =
        flow_consistency_loss({Var(m), Var(m), Var(m)}, flows, cfg).value()[0];
    CHECK(got == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("flow consistency: a shifted frame-1 CAM warps back onto frame 2") {
    Rng rng(149);
    const int w = 6, h = 4;
    Tensor m2 = random_tensor({h, w}, rng);
    // object moved +1 px in x between frames 1 and 2
    Tensor m1({h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) m1.at(y, x) = m2.at(y, std::min(x + 1, w - 1));
    Tensor past({2, h, w}, 0.0);
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) past[i] = -1.0;  // u channel
    const Tensor warped = warp(Var(m1), past).value();
    for (int y = 0; y < h; ++y)
        for (int x = 1; x < w; ++x)  // clamp effects confined to the first column
            CHECK(std::abs(warped.at(y, x) - m2.at(y, x)) < 1e-6);
}

TEST_CASE("flow consistency gradients w.r.t. classifier weights match finite differences") {
    Rng rng(151);
    LossConfig cfg;
    for (int trial = 0; trial < 20; ++trial) {
        ExpertHead head = make_test_head(3, 4, rng);
        const int y = rng.next_int(0, 3);
        std::array<Tensor, 3> feats;
        for (auto& f : feats) f = random_tensor({3, 4, 4}, rng);
        Tensor past = random_tensor({2, 4, 4}, rng, 1.5);
        Tensor future = random_tensor({2, 4, 4}, rng, 1.5);
        auto make = [&] {
            std::array<Var, 3> cams;
            for (int j = 0; j < 3; ++j)
                cams[static_cast<size_t>(j)] =
                    class_activation_map(head, feats[static_cast<size_t>(j)], y);
            return flow_consistency_loss(cams, FlowPair{past, future}, cfg);
        };
        CHECK(max_grad_error(make, {head.w, head.log_scale}, 1e-5) < 1e-4);
    }
}

TEST_CASE("ssim and photometric gradients w.r.t. the maps match finite differences") {
    Rng rng(153);
    LossConfig cfg;
    for (int trial = 0; trial < 10; ++trial) {
        Var a(random_tensor({4, 4}, rng), true);
        Var b(random_tensor({4, 4}, rng), true);
        CHECK(max_grad_error([&] { return ssim(a, b, cfg); }, {a, b}, 1e-5) < 1e-4);
        CHECK(max_grad_error([&] { return photometric_loss(a, b, cfg); }, {a, b}, 1e-5) < 1e-4);
    }
    // warped route: the map feeding the warp is trainable too
    for (int trial = 0; trial < 10; ++trial) {
        Var m1(random_tensor({4, 4}, rng), true);
        Var m2(random_tensor({4, 4}, rng), true);
        const Tensor flow = random_tensor({2, 4, 4}, rng, 1.5);
        CHECK(max_grad_error([&] { return photometric_loss(m2, warp(m1, flow), cfg); }, {m1, m2},
                             1e-5) < 1e-4);
    }
}

TEST_CASE("flow consistency is non-negative on random instances") {
    Rng rng(157);
    LossConfig cfg;
    for (int trial = 0; trial < 50; ++trial) {
        std::array<Var, 3> cams{Var(random_tensor({4, 4}, rng)), Var(random_tensor({4, 4}, rng)),
                                Var(random_tensor({4, 4}, rng))};
        FlowPair flows{random_tensor({2, 4, 4}, rng, 2.0), random_tensor({2, 4, 4}, rng, 2.0)};
        CHECK(flow_consistency_loss(cams, flows, cfg).value()[0] >= 0.0);
    }
}

TEST_CASE("downscale_flow pools and rescales displacements") {
    Tensor flow({2, 32, 32});
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) flow.at(0, y, x) = 16.0;
    const Tensor out = downscale_flow(flow, 2, 2);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) {
            CHECK(out.at(0, y, x) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(out.at(1, y, x) == doctest::Approx(0.0).epsilon(1e-12));
        }

    const Tensor zero = downscale_flow(Tensor({2, 8, 8}, 0.0), 4, 4);
    for (int64_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);

    Rng rng(163);
    Tensor f = random_tensor({2, 4, 4}, rng);
    const Tensor same = downscale_flow(f, 4, 4);
    for (int64_t i = 0; i < f.size(); ++i) CHECK(same[i] == doctest::Approx(f[i]).epsilon(1e-12));

    CHECK_THROWS_AS(downscale_flow(Tensor({2, 10, 10}, 0.0), 4, 4), ContractViolation);
}

TEST_CASE("total loss composition") {
    CHECK(total_loss(1.0, 0.5, 0.02) == doctest::Approx(1.01).epsilon(1e-12));
    CHECK(total_loss(0.7, 123.0, 0.0) == 0.7);
    CHECK(total_loss(0.0, 0.0, 0.5) == 0.0);
    const Var cls(Tensor::scalar(1.0));
    const Var fc(Tensor::scalar(0.5));
    CHECK(total_loss(cls, fc, 0.02).value()[0] == doctest::Approx(1.01).epsilon(1e-12));
}

TEST_CASE("loss config validation") {
    LossConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.alpha = 1.2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = LossConfig{};
    cfg.ssim_window = 2;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = LossConfig{};
    cfg.beta = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
