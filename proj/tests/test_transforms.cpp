#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "exconsist/rng.hpp"
#include "exconsist/transforms.hpp"

using namespace exconsist;

namespace {

ImageBatch random_image(int n, int c, int h, int w, std::uint64_t seed) {
    ImageBatch x(n, c, h, w);
    Rng rng(seed);
    for (auto& v : x.t.v) v = rng.u01();
    return x;
}

MaskBatch random_mask(int n, int h, int w, std::uint64_t seed) {
    MaskBatch m(n, 2, h, w);
    Rng rng(seed);
    for (int i = 0; i < n; ++i)
        for (int px = 0; px < h * w; ++px) {
            const bool fg = rng.bernoulli(0.4);
            m.t.plane(i, 0)[px] = fg ? 0.0 : 1.0;
            m.t.plane(i, 1)[px] = fg ? 1.0 : 0.0;
        }
    return m;
}

ProbMap random_prob(int n, int c, int h, int w, std::uint64_t seed) {
    ProbMap p(n, c, h, w);
    Rng rng(seed);
    for (int i = 0; i < n; ++i)
        for (int px = 0; px < h * w; ++px) {
            double sum = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double e = std::exp(rng.uniform(-1.0, 1.0));
                p.t.plane(i, ch)[px] = e;
                sum += e;
            }
            for (int ch = 0; ch < c; ++ch) p.t.plane(i, ch)[px] /= sum;
        }
    return p;
}

bool bitwise_equal(const Tensor4& a, const Tensor4& b) {
    return a.same_shape(b) && a.v == b.v;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    REQUIRE(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i)
        m = std::max(m, std::fabs(a.v[i] - b.v[i]));
    return m;
}

GeometricOp make_translation(int axis, double px) {
    GeometricOp g;
    g.kind = GeometricKind::Translation;
    g.axis = axis;
    g.param = px;
    return g;
}

GeometricOp make_flip(int axis) {
    GeometricOp g;
    g.kind = GeometricKind::Flip;
    g.axis = axis;
    return g;
}

IntensityOp iop(IntensityKind k, double p) { return IntensityOp{k, p}; }

}  // namespace

// ---------- samplers ----------

TEST_CASE("sample_basic: deterministic, divergent across seeds") {
    const auto a = sample_basic(42);
    const auto b = sample_basic(42);
    CHECK(to_string(a) == to_string(b));
    CHECK(a.saturation_factor == b.saturation_factor);
    CHECK(a.rotation_deg == b.rotation_deg);
    const auto c = sample_basic(43);
    CHECK(to_string(a) != to_string(c));
}

TEST_CASE("sample_basic: 10k draws stay inside published intervals") {
    double sat_lo = 1e9, sat_hi = -1e9, hue_lo = 1e9, hue_hi = -1e9;
    double rot_lo = 1e9, rot_hi = -1e9, sc_lo = 1e9, sc_hi = -1e9;
    double tx_lo = 1e9, tx_hi = -1e9, ty_lo = 1e9, ty_hi = -1e9;
    bool flips[3] = {false, false, false};
    std::set<std::array<int, 3>> perms;
    for (int i = 0; i < 10000; ++i) {
        const auto t = sample_basic(1000 + i);
        sat_lo = std::min(sat_lo, t.saturation_factor);
        sat_hi = std::max(sat_hi, t.saturation_factor);
        hue_lo = std::min(hue_lo, t.hue_shift);
        hue_hi = std::max(hue_hi, t.hue_shift);
        rot_lo = std::min(rot_lo, t.rotation_deg);
        rot_hi = std::max(rot_hi, t.rotation_deg);
        sc_lo = std::min(sc_lo, t.scale);
        sc_hi = std::max(sc_hi, t.scale);
        tx_lo = std::min(tx_lo, t.translate_x);
        tx_hi = std::max(tx_hi, t.translate_x);
        ty_lo = std::min(ty_lo, t.translate_y);
        ty_hi = std::max(ty_hi, t.translate_y);
        flips[static_cast<int>(t.flip)] = true;
        perms.insert(t.channel_perm);
    }
    CHECK(sat_lo >= 0.9); CHECK(sat_hi <= 1.1);
    CHECK(hue_lo >= -0.1); CHECK(hue_hi <= 0.1);
    CHECK(rot_lo >= -10.0); CHECK(rot_hi <= 10.0);
    CHECK(sc_lo >= 0.75); CHECK(sc_hi <= 1.25);
    CHECK(tx_lo >= -32.0); CHECK(tx_hi <= 32.0);
    CHECK(ty_lo >= -32.0); CHECK(ty_hi <= 32.0);
    // intervals actually explored, not collapsed
    CHECK(sat_hi - sat_lo > 0.15);
    CHECK(rot_hi - rot_lo > 15.0);
    CHECK(flips[0]); CHECK(flips[1]); CHECK(flips[2]);
    CHECK(perms.size() == 6);
}

TEST_CASE("sample_extreme: deterministic, shape of the composition") {
    const auto a = sample_extreme(7, true, 64, 64, 4);
    const auto b = sample_extreme(7, true, 64, 64, 4);
    CHECK(to_string(a) == to_string(b));
    CHECK(a.intensity_ops.size() == 3);
    std::set<int> kinds;
    for (const auto& op : a.intensity_ops) kinds.insert(static_cast<int>(op.kind));
    CHECK(kinds.size() == 3);  // distinct
    CHECK(a.has_geometric);
}

TEST_CASE("sample_extreme: 10k draws — ranges, invert gap, mixing frequency") {
    int n_active = 0;
    int geo_counts[4] = {0, 0, 0, 0};
    bool kind_seen[kNumIntensityKinds] = {};
    for (int i = 0; i < 10000; ++i) {
        const auto t = sample_extreme(50000 + i, true, 64, 64, 4);
        REQUIRE(t.intensity_ops.size() == 3);
        for (const auto& op : t.intensity_ops) {
            kind_seen[static_cast<int>(op.kind)] = true;
            const double p = op.param;
            switch (op.kind) {
                case IntensityKind::Autocontrast:
                case IntensityKind::Color:
                case IntensityKind::Equalize:
                    CHECK(p >= 0.0); CHECK(p <= 1.0);
                    break;
                case IntensityKind::Brightness:
                case IntensityKind::Contrast:
                    CHECK(p >= 0.5); CHECK(p <= 1.0);
                    break;
                case IntensityKind::Invert:
                    CHECK(p >= 0.0); CHECK(p <= 1.0);
                    CHECK(!(p > 0.25 && p < 0.75));  // never in the gap
                    break;
                case IntensityKind::Solarize:
                    CHECK(p >= 0.3); CHECK(p <= 1.0);
                    break;
                case IntensityKind::Posterize:
                    CHECK(p >= 4.0); CHECK(p <= 8.0);
                    CHECK(p == std::floor(p));
                    break;
            }
        }
        REQUIRE(t.has_geometric);
        ++geo_counts[static_cast<int>(t.geometric.kind)];
        switch (t.geometric.kind) {
            case GeometricKind::Rotation:
                CHECK(t.geometric.param >= -10.0); CHECK(t.geometric.param <= 10.0);
                break;
            case GeometricKind::Translation:
                CHECK(t.geometric.param >= -32.0); CHECK(t.geometric.param <= 32.0);
                CHECK((t.geometric.axis == 0 || t.geometric.axis == 1));
                break;
            case GeometricKind::Scale:
                CHECK(t.geometric.param >= 0.75); CHECK(t.geometric.param <= 1.25);
                break;
            case GeometricKind::Flip:
                CHECK((t.geometric.axis == 0 || t.geometric.axis == 1));
                break;
        }
        if (t.mixing.active) {
            ++n_active;
            CHECK(t.mixing.size_ratio >= 0.0);
            CHECK(t.mixing.size_ratio <= 0.5);
            CHECK(t.mixing.size ==
                  static_cast<int>(std::lround(t.mixing.size_ratio * 64)));
            CHECK(t.mixing.x >= 0);
            CHECK(t.mixing.y >= 0);
            CHECK(t.mixing.x + t.mixing.size <= 64);
            CHECK(t.mixing.y + t.mixing.size <= 64);
            CHECK(t.mixing.source_index >= 0);
            CHECK(t.mixing.source_index < 4);
        }
    }
    const double freq = n_active / 10000.0;
    CHECK(freq > 0.48);
    CHECK(freq < 0.52);
    for (int k = 0; k < kNumIntensityKinds; ++k) CHECK(kind_seen[k]);
    for (int k = 0; k < 4; ++k) CHECK(geo_counts[k] > 2000);  // ~2500 each
}

TEST_CASE("sample_extreme: mixing disabled / pooled out / bad source") {
    for (int i = 0; i < 200; ++i) {
        CHECK_FALSE(sample_extreme(i, false, 64, 64, 0).mixing.active);
    }
    ExtremePool no_mix;
    no_mix.mixing = false;
    for (int i = 0; i < 200; ++i)
        CHECK_FALSE(sample_extreme(i, true, 64, 64, 4, no_mix).mixing.active);
    ExtremePool only_geo;
    only_geo.intensity = false;
    only_geo.mixing = false;
    const auto t = sample_extreme(3, true, 64, 64, 4, only_geo);
    CHECK(t.intensity_ops.empty());
    CHECK(t.has_geometric);
    ExtremePool only_int;
    only_int.geometric = false;
    only_int.mixing = false;
    const auto t2 = sample_extreme(3, true, 64, 64, 4, only_int);
    CHECK(t2.intensity_ops.size() == 3);
    CHECK_FALSE(t2.has_geometric);
    CHECK_THROWS_AS(sample_extreme(3, true, 64, 64, 0), std::invalid_argument);
    CHECK_THROWS_AS(sample_extreme(3, true, 0, 64, 4), std::invalid_argument);
}

// ---------- intensity appliers ----------

TEST_CASE("brightness: factor 1 identity, factor 0 black") {
    const auto x = random_image(2, 3, 8, 8, 11);
    const auto id = apply_intensity(iop(IntensityKind::Brightness, 1.0), x);
    CHECK(bitwise_equal(id.t, x.t));
    const auto black = apply_intensity(iop(IntensityKind::Brightness, 0.0), x);
    for (double v : black.t.v) CHECK(v == 0.0);
}

TEST_CASE("invert: blend 1 maps 0.8 to 0.2; blend 0 identity") {
    ImageBatch x(1, 3, 2, 2);
    x.t.fill(0.8);
    const auto inv = apply_intensity(iop(IntensityKind::Invert, 1.0), x);
    for (double v : inv.t.v) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));
    const auto same = apply_intensity(iop(IntensityKind::Invert, 0.0), x);
    CHECK(bitwise_equal(same.t, x.t));
}

TEST_CASE("solarize threshold 0.5: 0.2 stays, 0.8 inverts to 0.2") {
    ImageBatch x(1, 3, 1, 2);
    for (int c = 0; c < 3; ++c) {
        x.t.at(0, c, 0, 0) = 0.2;
        x.t.at(0, c, 0, 1) = 0.8;
    }
    const auto s = apply_intensity(iop(IntensityKind::Solarize, 0.5), x);
    for (int c = 0; c < 3; ++c) {
        CHECK(s.t.at(0, c, 0, 0) == 0.2);
        CHECK(s.t.at(0, c, 0, 1) == doctest::Approx(0.2).epsilon(1e-12));
    }
}

TEST_CASE("posterize: 8 bits is identity on 8-bit-quantized images") {
    ImageBatch x(1, 3, 4, 4);
    Rng rng(5);
    for (auto& v : x.t.v) v = static_cast<double>(rng.uniform_int(0, 255)) / 255.0;
    const auto p = apply_intensity(iop(IntensityKind::Posterize, 8.0), x);
    CHECK(max_abs_diff(p.t, x.t) == 0.0);
    // 4 bits: output takes at most 16 distinct levels per channel
    const auto p4 = apply_intensity(iop(IntensityKind::Posterize, 4.0), x);
    std::set<double> levels(p4.t.v.begin(), p4.t.v.end());
    CHECK(levels.size() <= 16);
}

TEST_CASE("contrast/color/autocontrast/equalize: blend 0 is identity, output in range") {
    const auto x = random_image(2, 3, 8, 8, 21);
    for (auto kind : {IntensityKind::Autocontrast, IntensityKind::Equalize}) {
        const auto y0 = apply_intensity(iop(kind, 0.0), x);
        CHECK(max_abs_diff(y0.t, x.t) == 0.0);
        const auto y1 = apply_intensity(iop(kind, 1.0), x);
        check_image_range(y1.t, "intensity output");
    }
    // color is factor-style: 1 is identity, 0 is black-and-white
    const auto col1 = apply_intensity(iop(IntensityKind::Color, 1.0), x);
    CHECK(max_abs_diff(col1.t, x.t) < 1e-12);
    // contrast factor 1 is identity; factor 0 collapses to the mean gray
    const auto c1 = apply_intensity(iop(IntensityKind::Contrast, 1.0), x);
    CHECK(max_abs_diff(c1.t, x.t) < 1e-12);
    const auto c0 = apply_intensity(iop(IntensityKind::Contrast, 0.0), x);
    for (int i = 0; i < 2; ++i) {
        const double ref = c0.t.plane(i, 0)[0];
        for (int c = 0; c < 3; ++c)
            for (int px = 0; px < 64; ++px)
                CHECK(c0.t.plane(i, c)[px] == doctest::Approx(ref).epsilon(1e-12));
    }
    // color factor 0 is channelwise-equal grayscale
    const auto g = apply_intensity(iop(IntensityKind::Color, 0.0), x);
    for (int i = 0; i < 2; ++i)
        for (int px = 0; px < 64; ++px) {
            CHECK(g.t.plane(i, 0)[px] == doctest::Approx(g.t.plane(i, 1)[px]));
            CHECK(g.t.plane(i, 1)[px] == doctest::Approx(g.t.plane(i, 2)[px]));
        }
}

TEST_CASE("autocontrast blend 1 stretches to full range") {
    ImageBatch x(1, 3, 2, 2);
    for (int c = 0; c < 3; ++c) {
        x.t.at(0, c, 0, 0) = 0.3;
        x.t.at(0, c, 0, 1) = 0.4;
        x.t.at(0, c, 1, 0) = 0.5;
        x.t.at(0, c, 1, 1) = 0.6;
    }
    const auto y = apply_intensity(iop(IntensityKind::Autocontrast, 1.0), x);
    for (int c = 0; c < 3; ++c) {
        CHECK(y.t.at(0, c, 0, 0) == doctest::Approx(0.0));
        CHECK(y.t.at(0, c, 1, 1) == doctest::Approx(1.0));
    }
}

TEST_CASE("intensity: parameter validation") {
    const auto x = random_image(1, 3, 4, 4, 31);
    CHECK_THROWS_AS(apply_intensity(iop(IntensityKind::Brightness, -0.1), x),
                    std::invalid_argument);
    CHECK_THROWS_AS(apply_intensity(iop(IntensityKind::Invert, 1.1), x),
                    std::invalid_argument);
    CHECK_THROWS_AS(apply_intensity(iop(IntensityKind::Posterize, 4.5), x),
                    std::invalid_argument);
    CHECK_THROWS_AS(apply_intensity(iop(IntensityKind::Posterize, 0.0), x),
                    std::invalid_argument);
}

// ---------- geometric appliers ----------

TEST_CASE("geometric identity: rot 0, scale 1, translation 0 leave input unchanged") {
    const auto x = random_image(2, 3, 16, 16, 41);
    GeometricOp rot;  // rotation 0 by default
    CHECK(max_abs_diff(apply_geometric(rot, x.t, Interp::Bilinear, 0.0), x.t) == 0.0);
    GeometricOp sc;
    sc.kind = GeometricKind::Scale;
    sc.param = 1.0;
    CHECK(max_abs_diff(apply_geometric(sc, x.t, Interp::Bilinear, 0.0), x.t) == 0.0);
    CHECK(max_abs_diff(
              apply_geometric(make_translation(0, 0.0), x.t, Interp::Bilinear, 0.0),
              x.t) == 0.0);
}

TEST_CASE("flip: involution, exact") {
    const auto x = random_image(2, 3, 12, 10, 43);
    for (int axis : {0, 1}) {
        const auto once = apply_geometric(make_flip(axis), x.t, Interp::Bilinear, 0.0);
        const auto twice = apply_geometric(make_flip(axis), once, Interp::Bilinear, 0.0);
        CHECK(bitwise_equal(twice, x.t));
        CHECK_FALSE(bitwise_equal(once, x.t));
    }
}

TEST_CASE("integer translation: +8 then -8 restores the interior exactly") {
    const auto x = random_image(1, 3, 24, 24, 47);
    const auto fwd = apply_geometric(make_translation(0, 8.0), x.t, Interp::Bilinear, 0.0);
    const auto back =
        apply_geometric(make_translation(0, -8.0), fwd, Interp::Bilinear, 0.0);
    // interior: columns that never sampled the fill region
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 24; ++y)
            for (int xcol = 8; xcol < 16; ++xcol)
                CHECK(back.at(0, c, y, xcol) == x.t.at(0, c, y, xcol));
    // the wiped band is fill
    for (int y = 0; y < 24; ++y)
        for (int xcol = 0; xcol < 8; ++xcol) CHECK(fwd.at(0, 0, y, xcol) == 0.0);
}

TEST_CASE("integer translation equivariance: shift(f(x)) == f(shift(x)) on interior") {
    const auto x = random_image(1, 2, 16, 16, 151);
    auto f = [](const Tensor4& t) {
        Tensor4 out = t;
        for (auto& v : out.v) v = v * v * 0.5 + 0.1;  // arbitrary per-pixel map
        return out;
    };
    const auto op = make_translation(1, 5.0);
    const auto lhs = apply_geometric(op, f(x.t), Interp::Bilinear, 0.0);
    const auto rhs = f(apply_geometric(op, x.t, Interp::Bilinear, 0.0));
    for (int c = 0; c < 2; ++c)
        for (int y = 5; y < 16; ++y)
            for (int xx = 0; xx < 16; ++xx)
                CHECK(lhs.at(0, c, y, xx) == rhs.at(0, c, y, xx));
}

TEST_CASE("flip equivariance: flip(f(x)) == f(flip(x)) everywhere, bitwise") {
    const auto x = random_image(1, 3, 8, 8, 157);
    auto f = [](const Tensor4& t) {
        Tensor4 out = t;
        for (auto& v : out.v) v = 1.0 - v;
        return out;
    };
    for (int axis : {0, 1}) {
        const auto lhs = apply_geometric(make_flip(axis), f(x.t), Interp::Nearest, 0.0);
        const auto rhs = f(apply_geometric(make_flip(axis), x.t, Interp::Nearest, 0.0));
        CHECK(bitwise_equal(lhs, rhs));
    }
}

TEST_CASE("rotation warp: stays in range, fill appears at corners") {
    const auto x = random_image(1, 3, 32, 32, 53);
    GeometricOp rot;
    rot.kind = GeometricKind::Rotation;
    rot.param = 10.0;
    const auto y = apply_geometric(rot, x.t, Interp::Bilinear, 0.0);
    check_image_range(y, "rotated");
    CHECK(y.at(0, 0, 0, 0) == 0.0);  // corner falls outside the source
}

TEST_CASE("scale warp: upscale keeps center pixel neighborhood, downscale pads") {
    ImageBatch x(1, 1, 17, 17);
    x.t.at(0, 0, 8, 8) = 1.0;  // impulse at the exact center
    GeometricOp sc;
    sc.kind = GeometricKind::Scale;
    sc.param = 1.25;
    const auto up = apply_geometric(sc, x.t, Interp::Bilinear, 0.0);
    CHECK(up.at(0, 0, 8, 8) == doctest::Approx(1.0));  // center is a fixed point
    sc.param = 0.75;
    const auto down = apply_geometric(sc, x.t, Interp::Bilinear, 0.0);
    CHECK(down.at(0, 0, 8, 8) == doctest::Approx(1.0));
    CHECK(down.at(0, 0, 0, 0) == 0.0);  // border now reads fill
}

TEST_CASE("apply_geometric_mask: one-hot preserved under any op") {
    const auto m = random_mask(2, 16, 16, 61);
    GeometricOp rot;
    rot.kind = GeometricKind::Rotation;
    rot.param = -7.3;
    const auto r = apply_geometric_mask(rot, m);
    check_one_hot(r.t, "warped mask");
    const auto f = apply_geometric_mask(make_flip(1), m);
    check_one_hot(f.t, "flipped mask");
    const auto tr = apply_geometric_mask(make_translation(0, 11.7), m);
    check_one_hot(tr.t, "translated mask");
}

TEST_CASE("apply_geometric_prob: rows re-sum to 1, background fill at borders") {
    const auto p = random_prob(2, 3, 16, 16, 67);
    GeometricOp tr = make_translation(1, 6.0);
    const auto q = apply_geometric_prob(tr, p);
    check_prob_rows(q.t, "warped prob");
    // rows shifted in from outside are background one-hot
    CHECK(q.t.at(0, 0, 0, 5) == doctest::Approx(1.0));
    CHECK(q.t.at(0, 1, 0, 5) == doctest::Approx(0.0));
    GeometricOp rot;
    rot.kind = GeometricKind::Rotation;
    rot.param = 9.0;
    check_prob_rows(apply_geometric_prob(rot, p).t, "rotated prob");
}

TEST_CASE("one-hot prob + integer translation = index-shift oracle on 4x4") {
    ProbMap p(1, 2, 4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const bool fg = (y == 1 && x == 2) || (y == 3 && x == 0);
            p.t.at(0, 1, y, x) = fg ? 1.0 : 0.0;
            p.t.at(0, 0, y, x) = fg ? 0.0 : 1.0;
        }
    const auto q = apply_geometric_prob(make_translation(0, 1.0), p);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const bool fg = (x >= 1) && ((y == 1 && x - 1 == 2) || (y == 3 && x - 1 == 0));
            CHECK(q.t.at(0, 1, y, x) == doctest::Approx(fg ? 1.0 : 0.0));
            CHECK(q.t.at(0, 0, y, x) == doctest::Approx(fg ? 0.0 : 1.0));
        }
}

// ---------- mixing ----------

TEST_CASE("mixing: empty rect no-op, full-image paste, complement untouched") {
    const auto target = random_image(3, 3, 16, 16, 71);
    const auto source = random_image(2, 3, 16, 16, 73);
    MixingOp op;
    op.active = true;
    op.source_index = 1;
    SUBCASE("empty") {
        op.x = 5; op.y = 5; op.size = 0;
        const auto out = apply_mixing_images(op, target, source);
        CHECK(bitwise_equal(out.t, target.t));
    }
    SUBCASE("full") {
        op.x = 0; op.y = 0; op.size = 16;
        const auto out = apply_mixing_images(op, target, source);
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 3; ++c)
                for (int px = 0; px < 256; ++px)
                    CHECK(out.t.plane(i, c)[px] == source.t.plane(1, c)[px]);
    }
    SUBCASE("partition") {
        op.x = 3; op.y = 7; op.size = 6;
        const auto out = apply_mixing_images(op, target, source);
        for (int i = 0; i < 3; ++i)
            for (int c = 0; c < 3; ++c)
                for (int y = 0; y < 16; ++y)
                    for (int x = 0; x < 16; ++x) {
                        const bool inside =
                            x >= op.x && x < op.x + op.size && y >= op.y && y < op.y + op.size;
                        const double want = inside ? source.t.at(1, c, y, x)
                                                   : target.t.at(i, c, y, x);
                        CHECK(out.t.at(i, c, y, x) == want);
                    }
    }
    SUBCASE("bounds and index validation") {
        op.x = 12; op.y = 0; op.size = 6;
        CHECK_THROWS_AS(apply_mixing_images(op, target, source), std::invalid_argument);
        op.x = 0; op.size = 4; op.source_index = 5;
        CHECK_THROWS_AS(apply_mixing_images(op, target, source), std::invalid_argument);
        op.source_index = 0; op.active = false;
        CHECK_THROWS_AS(apply_mixing_images(op, target, source), std::invalid_argument);
    }
}

// ---------- basic pipeline ----------

TEST_CASE("apply_basic: identity instance leaves image and mask unchanged") {
    const auto x = random_image(2, 3, 16, 16, 81);
    const auto y = random_mask(2, 16, 16, 83);
    BasicTransformInstance id;  // defaults are the identity
    const auto [xi, yi] = apply_basic(id, x, &y);
    CHECK(bitwise_equal(xi.t, x.t));
    CHECK(bitwise_equal(yi.t, y.t));
}

TEST_CASE("apply_basic: horizontal flip moves image and mask together") {
    const auto x = random_image(1, 3, 8, 8, 91);
    const auto y = random_mask(1, 8, 8, 93);
    BasicTransformInstance t;
    t.flip = FlipState::Horizontal;
    const auto [xf, yf] = apply_basic(t, x, &y);
    for (int c = 0; c < 3; ++c)
        for (int row = 0; row < 8; ++row)
            for (int col = 0; col < 8; ++col)
                CHECK(xf.t.at(0, c, row, col) == x.t.at(0, c, row, 7 - col));
    for (int c = 0; c < 2; ++c)
        for (int row = 0; row < 8; ++row)
            for (int col = 0; col < 8; ++col)
                CHECK(yf.t.at(0, c, row, col) == y.t.at(0, c, row, 7 - col));
    check_one_hot(yf.t, "flipped mask");
}

TEST_CASE("apply_basic: channel perm composed with its inverse is identity") {
    const auto x = random_image(1, 3, 8, 8, 97);
    BasicTransformInstance fwd, inv;
    fwd.channel_perm = {2, 0, 1};
    inv.channel_perm = {1, 2, 0};  // inverse permutation
    const auto [x1, m1] = apply_basic(fwd, x, nullptr);
    const auto [x2, m2] = apply_basic(inv, x1, nullptr);
    CHECK(bitwise_equal(x2.t, x.t));
    CHECK_FALSE(bitwise_equal(x1.t, x.t));
}

TEST_CASE("apply_basic: saturation/hue touch image only; mask tracks geometry only") {
    const auto x = random_image(1, 3, 16, 16, 101);
    const auto y = random_mask(1, 16, 16, 103);
    BasicTransformInstance t;
    t.saturation_factor = 1.1;
    t.hue_shift = 0.07;
    const auto [xi, yi] = apply_basic(t, x, &y);
    CHECK_FALSE(bitwise_equal(xi.t, x.t));  // image changed
    CHECK(bitwise_equal(yi.t, y.t));        // mask untouched by color jitter
    check_image_range(xi.t, "jittered");
}

TEST_CASE("apply_basic: full random instances keep mask one-hot and image in range") {
    const auto x = random_image(2, 3, 32, 32, 107);
    const auto y = random_mask(2, 32, 32, 109);
    for (int i = 0; i < 20; ++i) {
        const auto t = sample_basic(7000 + i);
        const auto [xi, yi] = apply_basic(t, x, &y);
        check_image_range(xi.t, "basic image");
        check_one_hot(yi.t, "basic mask");
    }
}

// ---------- extreme pipelines ----------

TEST_CASE("apply_extreme_to_images: identity-equivalent instance is a no-op") {
    const auto x = random_image(2, 3, 16, 16, 111);
    ExtremeTransformInstance t;
    t.intensity_ops = {iop(IntensityKind::Brightness, 1.0),
                       iop(IntensityKind::Invert, 0.0),
                       iop(IntensityKind::Autocontrast, 0.0)};
    t.has_geometric = true;
    t.geometric.kind = GeometricKind::Rotation;
    t.geometric.param = 0.0;
    const auto out = apply_extreme_to_images(t, x, nullptr);
    CHECK(max_abs_diff(out.t, x.t) == 0.0);
}

TEST_CASE("apply_extreme_to_images: flip-only equals geometric after intensity") {
    const auto x = random_image(1, 3, 8, 8, 113);
    ExtremeTransformInstance t;
    t.intensity_ops = {iop(IntensityKind::Solarize, 0.6)};
    t.has_geometric = true;
    t.geometric = make_flip(0);
    const auto out = apply_extreme_to_images(t, x, nullptr);
    const auto manual = apply_geometric(
        make_flip(0), apply_intensity(iop(IntensityKind::Solarize, 0.6), x).t,
        Interp::Bilinear, 0.0);
    CHECK(bitwise_equal(out.t, manual));
}

TEST_CASE("apply_extreme_to_images: mixing patch equals independently transformed source") {
    const auto x = random_image(2, 3, 16, 16, 121);
    const auto src = random_image(3, 3, 16, 16, 123);
    ExtremeTransformInstance t;
    t.intensity_ops = {iop(IntensityKind::Brightness, 0.7),
                       iop(IntensityKind::Posterize, 5.0)};
    t.has_geometric = true;
    t.geometric = make_translation(1, 4.0);
    t.mixing.active = true;
    t.mixing.x = 2;
    t.mixing.y = 3;
    t.mixing.size = 7;
    t.mixing.source_index = 2;
    const auto out = apply_extreme_to_images(t, x, &src);
    // compose the same ops on the source independently
    ImageBatch ref = src;
    for (const auto& op : t.intensity_ops) ref = apply_intensity(op, ref);
    const auto warped_ref =
        apply_geometric(t.geometric, ref.t, Interp::Bilinear, 0.0);
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 3; ++c)
            for (int y = 3; y < 10; ++y)
                for (int xx = 2; xx < 9; ++xx)
                    CHECK(out.t.at(i, c, y, xx) == warped_ref.at(2, c, y, xx));
    // outside the rect: matches the non-mixed pipeline
    ExtremeTransformInstance t_nomix = t;
    t_nomix.mixing.active = false;
    const auto base = apply_extreme_to_images(t_nomix, x, nullptr);
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 16; ++y)
                for (int xx = 0; xx < 16; ++xx) {
                    const bool inside = xx >= 2 && xx < 9 && y >= 3 && y < 10;
                    if (!inside) CHECK(out.t.at(i, c, y, xx) == base.t.at(i, c, y, xx));
                }
    CHECK_THROWS_AS(apply_extreme_to_images(t, x, nullptr), std::invalid_argument);
}

TEST_CASE("apply_extreme_to_predictions: intensity params are bitwise-irrelevant") {
    const auto p = random_prob(2, 2, 16, 16, 131);
    const auto ref = random_prob(1, 2, 16, 16, 133);
    ExtremeTransformInstance a = sample_extreme(555, true, 16, 16, 1);
    ExtremeTransformInstance b = a;
    // scramble every intensity parameter and even the kinds
    b.intensity_ops = {iop(IntensityKind::Equalize, 0.9),
                       iop(IntensityKind::Brightness, 0.5),
                       iop(IntensityKind::Invert, 1.0)};
    const ProbMap* r = a.mixing.active ? &ref : nullptr;
    const auto qa = apply_extreme_to_predictions(a, p, r);
    const auto qb = apply_extreme_to_predictions(b, p, r);
    CHECK(bitwise_equal(qa.t, qb.t));
    ExtremeTransformInstance c = a;
    c.intensity_ops.clear();
    const auto qc = apply_extreme_to_predictions(c, p, r);
    CHECK(bitwise_equal(qa.t, qc.t));
}

TEST_CASE("apply_extreme_to_predictions: flip-only flips the map") {
    const auto p = random_prob(1, 2, 8, 8, 141);
    ExtremeTransformInstance t;
    t.intensity_ops = {iop(IntensityKind::Brightness, 0.6)};
    t.has_geometric = true;
    t.geometric = make_flip(1);
    const auto q = apply_extreme_to_predictions(t, p, nullptr);
    for (int c = 0; c < 2; ++c)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x)
                CHECK(q.t.at(0, c, y, x) == p.t.at(0, c, 7 - y, x));
}

TEST_CASE("apply_extreme_to_predictions: mixing pastes warped reference, outside is warped target") {
    const auto p = random_prob(2, 2, 16, 16, 143);
    const auto ref = random_prob(1, 2, 16, 16, 145);
    ExtremeTransformInstance t;
    t.has_geometric = true;
    t.geometric.kind = GeometricKind::Rotation;
    t.geometric.param = 6.0;
    t.mixing.active = true;
    t.mixing.x = 4;
    t.mixing.y = 5;
    t.mixing.size = 6;
    t.mixing.source_index = 0;
    const auto q = apply_extreme_to_predictions(t, p, &ref);
    const auto warped_target = apply_geometric_prob(t.geometric, p);
    const auto warped_ref = apply_geometric_prob(t.geometric, ref);
    for (int i = 0; i < 2; ++i)
        for (int c = 0; c < 2; ++c)
            for (int y = 0; y < 16; ++y)
                for (int x = 0; x < 16; ++x) {
                    const bool inside = x >= 4 && x < 10 && y >= 5 && y < 11;
                    const double want = inside ? warped_ref.t.at(0, c, y, x)
                                               : warped_target.t.at(i, c, y, x);
                    CHECK(q.t.at(i, c, y, x) == want);
                }
    check_prob_rows(q.t, "mixed prediction");
    CHECK_THROWS_AS(apply_extreme_to_predictions(t, p, nullptr), std::invalid_argument);
}

TEST_CASE("apply_extreme_to_labeled_pair: image gets intensity+geometric, mask geometric only") {
    const auto x = random_image(1, 3, 16, 16, 161);
    const auto y = random_mask(1, 16, 16, 163);
    ExtremeTransformInstance t;
    t.intensity_ops = {iop(IntensityKind::Invert, 1.0)};
    t.has_geometric = true;
    t.geometric = make_flip(0);
    t.mixing.active = true;  // must be ignored on this path
    t.mixing.size = 4;
    const auto [xi, yi] = apply_extreme_to_labeled_pair(t, x, y);
    const auto img_manual = apply_geometric(
        make_flip(0), apply_intensity(iop(IntensityKind::Invert, 1.0), x).t,
        Interp::Bilinear, 0.0);
    CHECK(bitwise_equal(xi.t, img_manual));
    const auto mask_manual = apply_geometric_mask(make_flip(0), y);
    CHECK(bitwise_equal(yi.t, mask_manual.t));
    check_one_hot(yi.t, "aug mask");
}

// ---------- cross-cutting invariants ----------

TEST_CASE("replay determinism: stored instance applied twice gives identical bytes") {
    const auto x = random_image(2, 3, 32, 32, 171);
    const auto y = random_mask(2, 32, 32, 173);
    const auto src = random_image(2, 3, 32, 32, 175);
    const auto p = random_prob(2, 2, 32, 32, 177);
    const auto pref = random_prob(2, 2, 32, 32, 179);
    for (int i = 0; i < 10; ++i) {
        const auto tb = sample_basic(9100 + i);
        const auto [x1, y1] = apply_basic(tb, x, &y);
        const auto [x2, y2] = apply_basic(tb, x, &y);
        CHECK(bitwise_equal(x1.t, x2.t));
        CHECK(bitwise_equal(y1.t, y2.t));
        const auto te = sample_extreme(9200 + i, true, 32, 32, 2);
        const ImageBatch* s = te.mixing.active ? &src : nullptr;
        const ProbMap* r = te.mixing.active ? &pref : nullptr;
        CHECK(bitwise_equal(apply_extreme_to_images(te, x, s).t,
                            apply_extreme_to_images(te, x, s).t));
        CHECK(bitwise_equal(apply_extreme_to_predictions(te, p, r).t,
                            apply_extreme_to_predictions(te, p, r).t));
    }
}

TEST_CASE("range preservation over random sampled pipelines") {
    const auto x = random_image(2, 3, 32, 32, 181);
    const auto src = random_image(2, 3, 32, 32, 183);
    const auto p = random_prob(2, 2, 32, 32, 187);
    const auto pref = random_prob(2, 2, 32, 32, 189);
    for (int i = 0; i < 50; ++i) {
        const auto te = sample_extreme(9900 + i, true, 32, 32, 2);
        const ImageBatch* s = te.mixing.active ? &src : nullptr;
        const ProbMap* r = te.mixing.active ? &pref : nullptr;
        const auto xi = apply_extreme_to_images(te, x, s);
        check_image_range(xi.t, "extreme image");
        const auto q = apply_extreme_to_predictions(te, p, r);
        check_prob_rows(q.t, "extreme prediction");
        CHECK(q.t.all_finite());
    }
}

TEST_CASE("to_string: equal instances iff equal strings, distinct otherwise") {
    const auto a = sample_extreme(31, true, 64, 64, 4);
    const auto b = sample_extreme(31, true, 64, 64, 4);
    const auto c = sample_extreme(32, true, 64, 64, 4);
    CHECK(to_string(a) == to_string(b));
    CHECK(to_string(a) != to_string(c));
    const auto ba = sample_basic(31);
    const auto bc = sample_basic(32);
    CHECK(to_string(ba) == to_string(sample_basic(31)));
    CHECK(to_string(ba) != to_string(bc));
    // round-trippable precision: %.17g preserves doubles exactly, so two
    // instances differing in the last bit of one param get different strings
    auto d = a;
    if (!d.intensity_ops.empty())
        d.intensity_ops[0].param =
            std::nextafter(d.intensity_ops[0].param, 2.0);
    else
        d.geometric.param = std::nextafter(d.geometric.param, 100.0);
    CHECK(to_string(a) != to_string(d));
}
