#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "exconsist/data.hpp"

namespace exconsist {

namespace {

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

void stamp_disc(std::vector<unsigned char>& fg, int h, int w, double cx, double cy,
                double r) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - r)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - r)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + r)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) fg[y * w + x] = 1;
}

void stamp_ellipse(std::vector<unsigned char>& fg, int h, int w, double cx, double cy,
                   double ra, double rb, double theta) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const double rmax = std::max(ra, rb);
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - rmax)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + rmax)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - rmax)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + rmax)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = (ct * dx + st * dy) / ra;
            const double v = (-st * dx + ct * dy) / rb;
            if (u * u + v * v <= 1.0) fg[y * w + x] = 1;
        }
}

// smooth bump used for non-foreground distractor blobs
void add_blob(Tensor4& img, int h, int w, double cx, double cy, double r,
              const double delta[3]) {
    const int y0 = std::max(0, static_cast<int>(std::floor(cy - 2 * r)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(cy + 2 * r)));
    const int x0 = std::max(0, static_cast<int>(std::floor(cx - 2 * r)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(cx + 2 * r)));
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (r * r);
            const double fall = std::exp(-d2);
            for (int c = 0; c < 3; ++c)
                img.at(0, c, y, x) += delta[c] * fall;
        }
}

}  // namespace

void shift_domain_inplace(Tensor4& img) {
    // strong per-channel gamma plus dynamic-range compression and a color
    // cast: the kind of scanner-to-scanner appearance change that breaks a
    // model keyed to absolute intensities while leaving geometry intact
    const int hw = img.plane_size();
    for (int i = 0; i < img.n; ++i) {
        double* r = img.plane(i, 0);
        double* g = img.plane(i, 1);
        double* b = img.plane(i, 2);
        for (int px = 0; px < hw; ++px) {
            const double r0 = r[px], g0 = g[px], b0 = b[px];
            r[px] = clamp01(0.30 + 0.45 * std::pow(r0, 2.0));
            g[px] = clamp01(0.18 + 0.52 * std::pow(g0, 1.6));
            b[px] = clamp01(0.34 + 0.42 * std::pow(b0, 2.4));
        }
    }
}

Dataset synth_generate(int n, int height, int width, const SynthParams& p,
                       std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synth_generate: n must be >= 1");
    if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0)
        throw std::invalid_argument("synth_generate: resolution must be a multiple of 16");
    Dataset ds;
    ds.name = p.shifted ? "synthetic-shifted" : "synthetic";
    ds.height = height;
    ds.width = width;
    const int h = height, w = width;
    const double diag = std::min(h, w);
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, Stream::Synth, {static_cast<std::uint64_t>(i)}));
        DataItem item;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "synth_%04d", i);
        item.stem = buf;
        item.image = Tensor4(1, 3, h, w);
        Tensor4& img = item.image;

        // per-image appearance jitter: global brightness + channel tint
        const double bright = rng.uniform(1.0 - 0.3 * p.jitter, 1.0 + 0.3 * p.jitter);
        double tint[3];
        for (double& t : tint) t = rng.uniform(-p.jitter * 0.25, p.jitter * 0.25);

        // textured background: base color, low-frequency gradient, pixel noise
        const double base[3] = {0.52, 0.50, 0.46};
        const double gx = rng.uniform(-0.12, 0.12), gy = rng.uniform(-0.12, 0.12);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const double grad =
                    gx * (x / static_cast<double>(w) - 0.5) + gy * (y / static_cast<double>(h) - 0.5);
                for (int c = 0; c < 3; ++c)
                    img.at(0, c, y, x) =
                        (base[c] + tint[c] + grad + rng.uniform(-p.noise, p.noise)) * bright;
            }

        // distractor blobs: brighter blue-ish bumps that are NOT foreground
        const int n_blobs = static_cast<int>(rng.uniform_int(1, 3));
        for (int k = 0; k < n_blobs; ++k) {
            const double cx = rng.uniform(0.1 * w, 0.9 * w);
            const double cy = rng.uniform(0.1 * h, 0.9 * h);
            const double r = rng.uniform(diag / 16.0, diag / 8.0);
            const double amp = p.contrast * rng.uniform(0.4, 0.7);
            const double delta[3] = {amp * 0.3, amp * 0.5, amp * 1.0};
            add_blob(img, h, w, cx, cy, r, delta);
        }

        // foreground geometry
        std::vector<unsigned char> fg(static_cast<std::size_t>(h) * w, 0);
        const int nv = p.n_vessels > 0 ? static_cast<int>(rng.uniform_int(1, p.n_vessels)) : 0;
        for (int k = 0; k < nv; ++k) {
            double cx = rng.uniform(0.15 * w, 0.85 * w);
            double cy = rng.uniform(0.15 * h, 0.85 * h);
            double theta = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
            const double radius = rng.uniform(1.0, 1.9);
            const int steps = rng.uniform_int(static_cast<int>(diag * 0.5),
                                              static_cast<int>(diag * 0.9));
            for (int s = 0; s < steps; ++s) {
                stamp_disc(fg, h, w, cx, cy, radius);
                theta += rng.uniform(-0.28, 0.28);
                cx += std::cos(theta);
                cy += std::sin(theta);
                if (cx < 2 || cx > w - 3) theta = 3.14159265358979323846 - theta;
                if (cy < 2 || cy > h - 3) theta = -theta;
                cx = std::clamp(cx, 1.0, w - 2.0);
                cy = std::clamp(cy, 1.0, h - 2.0);
            }
        }
        const int nl = p.n_lesions > 0 ? static_cast<int>(rng.uniform_int(1, p.n_lesions)) : 0;
        for (int k = 0; k < nl; ++k) {
            const double cx = rng.uniform(0.15 * w, 0.85 * w);
            const double cy = rng.uniform(0.15 * h, 0.85 * h);
            const double ra = rng.uniform(diag / 16.0, diag / 8.0);
            const double rb = rng.uniform(diag / 16.0, diag / 8.0);
            stamp_ellipse(fg, h, w, cx, cy, ra, rb,
                          rng.uniform(0.0, 3.14159265358979323846));
        }
        bool any = std::any_of(fg.begin(), fg.end(), [](unsigned char v) { return v != 0; });
        if (!any)  // geometry degenerated: guarantee a nonempty mask
            stamp_disc(fg, h, w, w * 0.5, h * 0.5, std::max(3.0, diag / 10.0));

        // paint foreground: a per-image color direction, norm matched to the
        // classic dark direction so per-pixel contrast stays fixed. jitter
        // blends that fixed direction toward a uniformly random unit vector:
        // at 0 every image shares one dark appearance, near 1 the foreground
        // can be brighter in some channels and darker in others, so no single
        // luminance rule separates it and appearance must be learned from
        // image diversity.
        const double fgscale = rng.uniform(0.85, 1.15);
        double d[3] = {-0.55, -1.0, -0.9};
        if (p.jitter > 0.0) {
            const double n0 = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
            double u[3], nu = 0.0;
            do {
                nu = 0.0;
                for (double& uc : u) {
                    uc = rng.uniform(-1.0, 1.0);
                    nu += uc * uc;
                }
            } while (nu < 0.01 || nu > 1.0);
            nu = std::sqrt(nu);
            double nd = 0.0;
            for (int c = 0; c < 3; ++c) {
                d[c] = (1.0 - p.jitter) * d[c] / n0 + p.jitter * u[c] / nu;
                nd += d[c] * d[c];
            }
            nd = std::sqrt(std::max(nd, 1e-6));
            for (double& dc : d) dc *= n0 / nd;
        }
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                if (!fg[y * w + x]) continue;
                for (int c = 0; c < 3; ++c)
                    img.at(0, c, y, x) += p.contrast * fgscale * d[c] +
                                          rng.uniform(-p.noise, p.noise);
            }

        // land every value on the 8-bit grid so PNG round-trips are exact;
        // the shift applies to the already-quantized unshifted image so the
        // shifted set is exactly the pixelwise remap of the published one
        for (auto& v : img.v) v = std::lround(clamp01(v) * 255.0) / 255.0;
        if (p.shifted) {
            shift_domain_inplace(img);
            for (auto& v : img.v) v = std::lround(v * 255.0) / 255.0;
        }

        item.has_mask = true;
        item.mask = Tensor4(1, 2, h, w);
        for (int px = 0; px < h * w; ++px) {
            item.mask.plane(0, 0)[px] = fg[px] ? 0.0 : 1.0;
            item.mask.plane(0, 1)[px] = fg[px] ? 1.0 : 0.0;
        }
        ds.items.push_back(std::move(item));
    }
    return ds;
}

}  // namespace exconsist
