#include "exconsist/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace exconsist {

namespace {

constexpr double kPi = 3.14159265358979323846;
// ITU-R 601 luma, the grayscale PIL uses for color/contrast enhancement.
constexpr double kLumR = 0.299, kLumG = 0.587, kLumB = 0.114;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void clamp_all(Tensor4& t) {
    for (auto& v : t.v) v = clamp01(v);
}

// ---- color space ----

void rgb_to_hsv(double r, double g, double b, double& h, double& s, double& v) {
    const double maxc = std::max({r, g, b});
    const double minc = std::min({r, g, b});
    v = maxc;
    const double d = maxc - minc;
    s = maxc <= 0.0 ? 0.0 : d / maxc;
    if (d <= 0.0) {
        h = 0.0;
        return;
    }
    if (maxc == r)
        h = (g - b) / d;
    else if (maxc == g)
        h = (b - r) / d + 2.0;
    else
        h = (r - g) / d + 4.0;
    h /= 6.0;
    if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g, double& b) {
    if (s <= 0.0) {
        r = g = b = v;
        return;
    }
    h = h - std::floor(h);
    const double hh = h * 6.0;
    const int i = std::min(5, static_cast<int>(hh));
    const double f = hh - i;
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (i) {
        case 0: r = v; g = t; b = p; break;
        case 1: r = q; g = v; b = p; break;
        case 2: r = p; g = v; b = t; break;
        case 3: r = p; g = q; b = v; break;
        case 4: r = t; g = p; b = v; break;
        default: r = v; g = p; b = q; break;
    }
}

// Saturation scale + hue shift in one HSV round-trip.
void jitter_sat_hue(Tensor4& img, double sat_factor, double hue_shift) {
    if (sat_factor == 1.0 && hue_shift == 0.0) return;
    const int hw = img.plane_size();
    for (int i = 0; i < img.n; ++i) {
        double* pr = img.plane(i, 0);
        double* pg = img.plane(i, 1);
        double* pb = img.plane(i, 2);
        for (int px = 0; px < hw; ++px) {
            double h, s, v;
            rgb_to_hsv(pr[px], pg[px], pb[px], h, s, v);
            s = clamp01(s * sat_factor);
            h += hue_shift;
            h -= std::floor(h);
            hsv_to_rgb(h, s, v, pr[px], pg[px], pb[px]);
        }
    }
}

// ---- index-exact flips ----

Tensor4 flip_tensor(const Tensor4& in, int axis) {  // 0 = left-right, 1 = top-bottom
    Tensor4 out(in.n, in.c, in.h, in.w);
    for (int i = 0; i < in.n; ++i)
        for (int c = 0; c < in.c; ++c) {
            const double* p = in.plane(i, c);
            double* q = out.plane(i, c);
            for (int y = 0; y < in.h; ++y)
                for (int x = 0; x < in.w; ++x) {
                    const int sy = axis == 1 ? in.h - 1 - y : y;
                    const int sx = axis == 0 ? in.w - 1 - x : x;
                    q[y * in.w + x] = p[sy * in.w + sx];
                }
        }
    return out;
}

// ---- affine warp ----

struct WarpSpec {
    double rot_deg = 0.0, scale = 1.0, tx = 0.0, ty = 0.0;
};

// Inverse-mapping warp: out(p) = in(C + R(-rot)/scale * (p - t - C)).
// For rot=0, scale=1 the source position is exactly p - t in doubles, so
// integer translations hit grid points and bilinear weights degenerate to 1.
Tensor4 warp_affine(const Tensor4& in, const WarpSpec& ws, Interp interp,
                    const std::vector<double>& fill) {
    Tensor4 out(in.n, in.c, in.h, in.w);
    const double cx = (in.w - 1) * 0.5;
    const double cy = (in.h - 1) * 0.5;
    const double th = ws.rot_deg * kPi / 180.0;
    const double c = std::cos(th), s = std::sin(th);
    const double inv_scale = 1.0 / ws.scale;
    const bool pure_shift = (ws.rot_deg == 0.0 && ws.scale == 1.0);
    for (int oy = 0; oy < in.h; ++oy) {
        for (int ox = 0; ox < in.w; ++ox) {
            double ix, iy;
            if (pure_shift) {
                ix = ox - ws.tx;
                iy = oy - ws.ty;
            } else {
                const double dx = ox - ws.tx - cx;
                const double dy = oy - ws.ty - cy;
                ix = cx + (c * dx + s * dy) * inv_scale;
                iy = cy + (-s * dx + c * dy) * inv_scale;
            }
            if (interp == Interp::Nearest) {
                const int nx = static_cast<int>(std::lround(ix));
                const int ny = static_cast<int>(std::lround(iy));
                const bool inside = nx >= 0 && nx < in.w && ny >= 0 && ny < in.h;
                for (int i = 0; i < in.n; ++i)
                    for (int ch = 0; ch < in.c; ++ch)
                        out.plane(i, ch)[oy * in.w + ox] =
                            inside ? in.plane(i, ch)[ny * in.w + nx] : fill[ch];
            } else {
                const double fx = std::floor(ix);
                const double fy = std::floor(iy);
                const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
                const double ax = ix - fx, ay = iy - fy;
                const double w00 = (1.0 - ax) * (1.0 - ay);
                const double w01 = ax * (1.0 - ay);
                const double w10 = (1.0 - ax) * ay;
                const double w11 = ax * ay;
                const bool in00 = x0 >= 0 && x0 < in.w && y0 >= 0 && y0 < in.h;
                const bool in01 = x0 + 1 >= 0 && x0 + 1 < in.w && y0 >= 0 && y0 < in.h;
                const bool in10 = x0 >= 0 && x0 < in.w && y0 + 1 >= 0 && y0 + 1 < in.h;
                const bool in11 = x0 + 1 >= 0 && x0 + 1 < in.w && y0 + 1 >= 0 && y0 + 1 < in.h;
                for (int i = 0; i < in.n; ++i)
                    for (int ch = 0; ch < in.c; ++ch) {
                        const double* p = in.plane(i, ch);
                        const double v00 = in00 ? p[y0 * in.w + x0] : fill[ch];
                        const double v01 = in01 ? p[y0 * in.w + x0 + 1] : fill[ch];
                        const double v10 = in10 ? p[(y0 + 1) * in.w + x0] : fill[ch];
                        const double v11 = in11 ? p[(y0 + 1) * in.w + x0 + 1] : fill[ch];
                        // exact passthrough when the source lands on a grid point
                        double val;
                        if (ax == 0.0 && ay == 0.0)
                            val = v00;
                        else
                            val = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11;
                        out.plane(i, ch)[oy * in.w + ox] = val;
                    }
            }
        }
    }
    return out;
}

WarpSpec warp_of(const GeometricOp& op) {
    WarpSpec ws;
    switch (op.kind) {
        case GeometricKind::Rotation: ws.rot_deg = op.param; break;
        case GeometricKind::Translation:
            (op.axis == 0 ? ws.tx : ws.ty) = op.param;
            break;
        case GeometricKind::Scale: ws.scale = op.param; break;
        case GeometricKind::Flip: break;  // handled by flip_tensor
    }
    return ws;
}

Tensor4 run_geometric(const GeometricOp& op, const Tensor4& x, Interp interp,
                      const std::vector<double>& fill) {
    if (op.kind == GeometricKind::Flip) return flip_tensor(x, op.axis);
    if (op.kind == GeometricKind::Scale && !(op.param > 0.0))
        throw std::invalid_argument("apply_geometric: scale must be positive");
    return warp_affine(x, warp_of(op), interp, fill);
}

std::vector<double> uniform_fill(int channels, double v) {
    return std::vector<double>(channels, v);
}

std::vector<double> background_fill(int channels) {
    std::vector<double> f(channels, 0.0);
    f[0] = 1.0;
    return f;
}

// ---- intensity kernels (per image) ----

void op_brightness(Tensor4& t, double f) {
    for (auto& v : t.v) v = clamp01(v * f);
}

void op_color(Tensor4& t, double f) {
    const int hw = t.plane_size();
    for (int i = 0; i < t.n; ++i) {
        double* r = t.plane(i, 0);
        double* g = t.plane(i, 1);
        double* b = t.plane(i, 2);
        for (int px = 0; px < hw; ++px) {
            const double gray = kLumR * r[px] + kLumG * g[px] + kLumB * b[px];
            r[px] = clamp01(gray + f * (r[px] - gray));
            g[px] = clamp01(gray + f * (g[px] - gray));
            b[px] = clamp01(gray + f * (b[px] - gray));
        }
    }
}

void op_contrast(Tensor4& t, double f) {
    const int hw = t.plane_size();
    for (int i = 0; i < t.n; ++i) {
        double mean = 0.0;
        for (int px = 0; px < hw; ++px)
            mean += kLumR * t.plane(i, 0)[px] + kLumG * t.plane(i, 1)[px] +
                    kLumB * t.plane(i, 2)[px];
        mean /= hw;
        for (int c = 0; c < t.c; ++c) {
            double* p = t.plane(i, c);
            for (int px = 0; px < hw; ++px) p[px] = clamp01(mean + f * (p[px] - mean));
        }
    }
}

void op_invert(Tensor4& t, double blend) {
    for (auto& v : t.v) v = clamp01(blend * (1.0 - v) + (1.0 - blend) * v);
}

void op_solarize(Tensor4& t, double threshold) {
    for (auto& v : t.v)
        if (v > threshold) v = 1.0 - v;
}

void op_posterize(Tensor4& t, int bits) {
    const unsigned mask = ~((1u << (8 - bits)) - 1u) & 0xffu;
    for (auto& v : t.v) {
        const unsigned u8 = static_cast<unsigned>(std::lround(clamp01(v) * 255.0));
        v = static_cast<double>(u8 & mask) / 255.0;
    }
}

void op_autocontrast(Tensor4& t, double blend) {
    const int hw = t.plane_size();
    for (int i = 0; i < t.n; ++i)
        for (int c = 0; c < t.c; ++c) {
            double* p = t.plane(i, c);
            double lo = 1.0, hi = 0.0;
            for (int px = 0; px < hw; ++px) {
                lo = std::min(lo, p[px]);
                hi = std::max(hi, p[px]);
            }
            if (hi <= lo) continue;  // flat channel: stretched == original
            const double inv = 1.0 / (hi - lo);
            for (int px = 0; px < hw; ++px) {
                const double stretched = (p[px] - lo) * inv;
                p[px] = clamp01(blend * stretched + (1.0 - blend) * p[px]);
            }
        }
}

void op_equalize(Tensor4& t, double blend) {
    const int hw = t.plane_size();
    for (int i = 0; i < t.n; ++i)
        for (int c = 0; c < t.c; ++c) {
            double* p = t.plane(i, c);
            int hist[256] = {0};
            for (int px = 0; px < hw; ++px) {
                const int lvl = static_cast<int>(std::lround(clamp01(p[px]) * 255.0));
                ++hist[lvl];
            }
            // classic equalization: lvl -> 255*(cdf - cdf_min)/(N - cdf_min)
            int cdf[256];
            int acc = 0, cdf_min = 0;
            bool seen = false;
            for (int l = 0; l < 256; ++l) {
                acc += hist[l];
                cdf[l] = acc;
                if (!seen && hist[l] > 0) {
                    cdf_min = acc;
                    seen = true;
                }
            }
            if (hw == cdf_min) continue;  // single gray level: identity
            double lut[256];
            const double scale = 255.0 / static_cast<double>(hw - cdf_min);
            for (int l = 0; l < 256; ++l)
                lut[l] = std::lround(std::max(0, cdf[l] - cdf_min) * scale) / 255.0;
            for (int px = 0; px < hw; ++px) {
                const int lvl = static_cast<int>(std::lround(clamp01(p[px]) * 255.0));
                p[px] = clamp01(blend * lut[lvl] + (1.0 - blend) * p[px]);
            }
        }
}

// The applier accepts the full semantic domain ([0,1] blends/factors/
// thresholds, 1..8 integer bits); samplers stay inside the narrower
// published intervals.
void check_intensity_param(const IntensityOp& op) {
    const double p = op.param;
    auto bad = [&](const char* what) {
        throw std::invalid_argument(std::string("apply_intensity: ") + what +
                                    " parameter out of range");
    };
    if (op.kind == IntensityKind::Posterize) {
        if (p < 1.0 || p > 8.0 || p != std::floor(p)) bad("bit count");
    } else {
        if (p < 0.0 || p > 1.0) bad("blend/factor/threshold");
    }
}

}  // namespace

// ---- samplers ----

BasicTransformInstance sample_basic(std::uint64_t seed) {
    Rng rng(seed);
    BasicTransformInstance t;
    // fixed draw order: sat, hue, flip, perm, rot, scale, tx, ty
    t.saturation_factor = rng.uniform(0.9, 1.1);
    t.hue_shift = rng.uniform(-0.1, 0.1);
    const auto f = rng.uniform_index(3);
    t.flip = f == 0 ? FlipState::None : (f == 1 ? FlipState::Horizontal : FlipState::Vertical);
    static constexpr std::array<std::array<int, 3>, 6> kPerms = {{
        {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};
    t.channel_perm = kPerms[rng.uniform_index(6)];
    t.rotation_deg = rng.uniform(-10.0, 10.0);
    t.scale = rng.uniform(0.75, 1.25);
    t.translate_x = rng.uniform(-32.0, 32.0);
    t.translate_y = rng.uniform(-32.0, 32.0);
    return t;
}

ExtremeTransformInstance sample_extreme(std::uint64_t seed, bool mixing_allowed,
                                        int h, int w, int n_source,
                                        const ExtremePool& pool) {
    if (h <= 0 || w <= 0)
        throw std::invalid_argument("sample_extreme: invalid geometry");
    Rng rng(seed);
    ExtremeTransformInstance t;
    // fixed draw order: 3 intensity kinds + params, geometric, mixing
    if (pool.intensity) {
        int kinds[kNumIntensityKinds];
        for (int i = 0; i < kNumIntensityKinds; ++i) kinds[i] = i;
        for (int i = 0; i < 3; ++i) {  // partial Fisher-Yates: distinct kinds
            const int j = i + static_cast<int>(rng.uniform_index(kNumIntensityKinds - i));
            std::swap(kinds[i], kinds[j]);
        }
        for (int i = 0; i < 3; ++i) {
            IntensityOp op;
            op.kind = static_cast<IntensityKind>(kinds[i]);
            switch (op.kind) {
                case IntensityKind::Autocontrast:
                case IntensityKind::Color:
                case IntensityKind::Equalize:
                    op.param = rng.uniform(0.0, 1.0);
                    break;
                case IntensityKind::Brightness:
                case IntensityKind::Contrast:
                    op.param = rng.uniform(0.5, 1.0);
                    break;
                case IntensityKind::Invert: {
                    // equal-mass mixture of U(0,0.25) and U(0.75,1)
                    const double u = rng.u01();
                    op.param = u < 0.5 ? u * 0.5 : 0.75 + (u - 0.5) * 0.5;
                    break;
                }
                case IntensityKind::Solarize:
                    op.param = rng.uniform(0.3, 1.0);
                    break;
                case IntensityKind::Posterize:
                    op.param = static_cast<double>(rng.uniform_int(4, 8));
                    break;
            }
            t.intensity_ops.push_back(op);
        }
    }
    if (pool.geometric) {
        t.has_geometric = true;
        GeometricOp& g = t.geometric;
        g.kind = static_cast<GeometricKind>(rng.uniform_index(4));
        switch (g.kind) {
            case GeometricKind::Rotation: g.param = rng.uniform(-10.0, 10.0); break;
            case GeometricKind::Translation:
                g.axis = static_cast<int>(rng.uniform_index(2));
                g.param = rng.uniform(-32.0, 32.0);
                break;
            case GeometricKind::Scale: g.param = rng.uniform(0.75, 1.25); break;
            case GeometricKind::Flip: g.axis = static_cast<int>(rng.uniform_index(2)); break;
        }
    }
    if (pool.mixing && mixing_allowed) {
        if (n_source <= 0)
            throw std::invalid_argument("sample_extreme: mixing needs a nonempty labeled source");
        t.mixing.active = rng.bernoulli(0.5);
        if (t.mixing.active) {
            t.mixing.size_ratio = rng.uniform(0.0, 0.5);
            t.mixing.size = static_cast<int>(std::lround(t.mixing.size_ratio * std::min(h, w)));
            t.mixing.x = rng.uniform_int(0, w - t.mixing.size);
            t.mixing.y = rng.uniform_int(0, h - t.mixing.size);
            t.mixing.source_index = static_cast<int>(rng.uniform_index(n_source));
        }
    }
    return t;
}

// ---- application paths ----

Tensor4 apply_geometric(const GeometricOp& op, const Tensor4& x, Interp interp,
                        double fill) {
    return run_geometric(op, x, interp, uniform_fill(x.c, fill));
}

ProbMap apply_geometric_prob(const GeometricOp& op, const ProbMap& p) {
    // flips are pure index permutations: no resampling, nothing to renormalize
    if (op.kind == GeometricKind::Flip)
        return ProbMap(flip_tensor(p.t, op.axis));
    Tensor4 out = run_geometric(op, p.t, Interp::Bilinear, background_fill(p.t.c));
    const int hw = out.plane_size();
    for (int i = 0; i < out.n; ++i)
        for (int px = 0; px < hw; ++px) {
            double sum = 0.0;
            for (int c = 0; c < out.c; ++c) sum += out.plane(i, c)[px];
            const double inv = 1.0 / sum;
            for (int c = 0; c < out.c; ++c) out.plane(i, c)[px] *= inv;
        }
    return ProbMap(std::move(out));
}

MaskBatch apply_geometric_mask(const GeometricOp& op, const MaskBatch& m) {
    return MaskBatch(run_geometric(op, m.t, Interp::Nearest, background_fill(m.t.c)));
}

ImageBatch apply_intensity(const IntensityOp& op, const ImageBatch& x) {
    check_intensity_param(op);
    if (x.t.c != 3 && (op.kind == IntensityKind::Color))
        throw std::invalid_argument("apply_intensity: color op expects 3 channels");
    Tensor4 out = x.t;
    switch (op.kind) {
        case IntensityKind::Autocontrast: op_autocontrast(out, op.param); break;
        case IntensityKind::Brightness: op_brightness(out, op.param); break;
        case IntensityKind::Color: op_color(out, op.param); break;
        case IntensityKind::Contrast: op_contrast(out, op.param); break;
        case IntensityKind::Equalize: op_equalize(out, op.param); break;
        case IntensityKind::Invert: op_invert(out, op.param); break;
        case IntensityKind::Solarize: op_solarize(out, op.param); break;
        case IntensityKind::Posterize:
            op_posterize(out, static_cast<int>(op.param));
            break;
    }
    return ImageBatch(std::move(out));
}

namespace {

void check_mixing(const MixingOp& op, const Tensor4& target, const Tensor4& source) {
    if (!op.active) throw std::invalid_argument("apply_mixing: op not active");
    if (op.size < 0 || op.x < 0 || op.y < 0 || op.x + op.size > target.w ||
        op.y + op.size > target.h)
        throw std::invalid_argument("apply_mixing: rect out of bounds");
    if (op.source_index < 0 || op.source_index >= source.n)
        throw std::invalid_argument("apply_mixing: source index out of range");
    if (source.c != target.c || source.h != target.h || source.w != target.w)
        throw std::invalid_argument("apply_mixing: source/target raster mismatch");
}

Tensor4 paste_patch(const MixingOp& op, const Tensor4& target, const Tensor4& source) {
    check_mixing(op, target, source);
    Tensor4 out = target;
    for (int i = 0; i < out.n; ++i)
        for (int c = 0; c < out.c; ++c) {
            const double* sp = source.plane(op.source_index, c);
            double* dp = out.plane(i, c);
            for (int y = op.y; y < op.y + op.size; ++y)
                for (int x = op.x; x < op.x + op.size; ++x)
                    dp[y * out.w + x] = sp[y * out.w + x];
        }
    return out;
}

}  // namespace

ImageBatch apply_mixing_images(const MixingOp& op, const ImageBatch& target,
                               const ImageBatch& labeled_source) {
    return ImageBatch(paste_patch(op, target.t, labeled_source.t));
}

ProbMap apply_mixing_predictions(const MixingOp& op, const ProbMap& target,
                                 const ProbMap& labeled_ref) {
    return ProbMap(paste_patch(op, target.t, labeled_ref.t));
}

std::pair<ImageBatch, MaskBatch> apply_basic(const BasicTransformInstance& t,
                                             const ImageBatch& x, const MaskBatch* y) {
    if (x.t.c != 3) throw std::invalid_argument("apply_basic: expected 3-channel images");
    Tensor4 img = x.t;
    // intensity parts: saturation, hue, channel shuffle — image only
    jitter_sat_hue(img, t.saturation_factor, t.hue_shift);
    if (t.channel_perm != std::array<int, 3>{0, 1, 2}) {
        Tensor4 shuffled(img.n, img.c, img.h, img.w);
        for (int i = 0; i < img.n; ++i)
            for (int c = 0; c < 3; ++c)
                std::copy(img.plane(i, t.channel_perm[c]),
                          img.plane(i, t.channel_perm[c]) + img.plane_size(),
                          shuffled.plane(i, c));
        img = std::move(shuffled);
    }
    // geometric parts: flip then affine — image and mask identically
    Tensor4 mask;
    const bool with_mask = y != nullptr;
    if (with_mask) mask = y->t;
    if (t.flip != FlipState::None) {
        const int axis = t.flip == FlipState::Horizontal ? 0 : 1;
        img = flip_tensor(img, axis);
        if (with_mask) mask = flip_tensor(mask, axis);
    }
    WarpSpec ws{t.rotation_deg, t.scale, t.translate_x, t.translate_y};
    if (!(ws.rot_deg == 0.0 && ws.scale == 1.0 && ws.tx == 0.0 && ws.ty == 0.0)) {
        img = warp_affine(img, ws, Interp::Bilinear, uniform_fill(img.c, 0.0));
        if (with_mask)
            mask = warp_affine(mask, ws, Interp::Nearest, background_fill(mask.c));
    }
    clamp_all(img);
    return {ImageBatch(std::move(img)),
            with_mask ? MaskBatch(std::move(mask)) : MaskBatch()};
}

ImageBatch apply_extreme_to_images(const ExtremeTransformInstance& t, const ImageBatch& x,
                                   const ImageBatch* labeled_source) {
    if (t.mixing.active && labeled_source == nullptr)
        throw std::invalid_argument("apply_extreme_to_images: mixing needs a labeled source");
    auto pipeline = [&](const ImageBatch& in) {
        ImageBatch cur = in;
        for (const auto& op : t.intensity_ops) cur = apply_intensity(op, cur);
        if (t.has_geometric)
            cur = ImageBatch(apply_geometric(t.geometric, cur.t, Interp::Bilinear, 0.0));
        return cur;
    };
    ImageBatch out = pipeline(x);
    if (t.mixing.active) {
        ImageBatch src = pipeline(*labeled_source);
        out = apply_mixing_images(t.mixing, out, src);
    }
    clamp_all(out.t);
    return out;
}

ProbMap apply_extreme_to_predictions(const ExtremeTransformInstance& t, const ProbMap& p,
                                     const ProbMap* labeled_ref) {
    if (t.mixing.active && labeled_ref == nullptr)
        throw std::invalid_argument("apply_extreme_to_predictions: mixing needs a reference");
    ProbMap out = t.has_geometric ? apply_geometric_prob(t.geometric, p) : p;
    if (t.mixing.active) {
        ProbMap ref = t.has_geometric ? apply_geometric_prob(t.geometric, *labeled_ref)
                                      : *labeled_ref;
        out = apply_mixing_predictions(t.mixing, out, ref);
    }
    return out;
}

std::pair<ImageBatch, MaskBatch> apply_extreme_to_labeled_pair(
    const ExtremeTransformInstance& t, const ImageBatch& x, const MaskBatch& y) {
    ImageBatch img = x;
    for (const auto& op : t.intensity_ops) img = apply_intensity(op, img);
    MaskBatch mask = y;
    if (t.has_geometric) {
        img = ImageBatch(apply_geometric(t.geometric, img.t, Interp::Bilinear, 0.0));
        mask = apply_geometric_mask(t.geometric, mask);
    }
    clamp_all(img.t);
    return {std::move(img), std::move(mask)};
}

// ---- serialization ----

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

const char* kind_name(IntensityKind k) {
    switch (k) {
        case IntensityKind::Autocontrast: return "autocontrast";
        case IntensityKind::Brightness: return "brightness";
        case IntensityKind::Color: return "color";
        case IntensityKind::Contrast: return "contrast";
        case IntensityKind::Equalize: return "equalize";
        case IntensityKind::Invert: return "invert";
        case IntensityKind::Solarize: return "solarize";
        case IntensityKind::Posterize: return "posterize";
    }
    return "?";
}

const char* kind_name(GeometricKind k) {
    switch (k) {
        case GeometricKind::Rotation: return "rotation";
        case GeometricKind::Translation: return "translation";
        case GeometricKind::Scale: return "scale";
        case GeometricKind::Flip: return "flip";
    }
    return "?";
}

}  // namespace

std::string to_string(const IntensityOp& op) {
    return std::string(kind_name(op.kind)) + ":" + fmt(op.param);
}

std::string to_string(const GeometricOp& op) {
    std::string s = std::string(kind_name(op.kind)) + ":" + fmt(op.param);
    if (op.kind == GeometricKind::Translation || op.kind == GeometricKind::Flip)
        s += op.axis == 0 ? ":x" : ":y";
    return s;
}

std::string to_string(const BasicTransformInstance& t) {
    std::string s = "basic{sat=" + fmt(t.saturation_factor) + " hue=" + fmt(t.hue_shift);
    s += " flip=";
    s += t.flip == FlipState::None ? "none" : (t.flip == FlipState::Horizontal ? "h" : "v");
    s += " perm=" + std::to_string(t.channel_perm[0]) + std::to_string(t.channel_perm[1]) +
         std::to_string(t.channel_perm[2]);
    s += " rot=" + fmt(t.rotation_deg) + " scale=" + fmt(t.scale) +
         " tx=" + fmt(t.translate_x) + " ty=" + fmt(t.translate_y) + "}";
    return s;
}

std::string to_string(const ExtremeTransformInstance& t) {
    std::string s = "extreme{intensity=[";
    for (std::size_t i = 0; i < t.intensity_ops.size(); ++i) {
        if (i) s += ",";
        s += to_string(t.intensity_ops[i]);
    }
    s += "] geometric=";
    s += t.has_geometric ? to_string(t.geometric) : "none";
    s += " mixing=";
    if (t.mixing.active) {
        s += "rect(" + std::to_string(t.mixing.x) + "," + std::to_string(t.mixing.y) +
             "," + std::to_string(t.mixing.size) + ")src=" +
             std::to_string(t.mixing.source_index) + ":ratio=" + fmt(t.mixing.size_ratio);
    } else {
        s += "off";
    }
    s += "}";
    return s;
}

}  // namespace exconsist
