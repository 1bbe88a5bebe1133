#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace exconsist {

// Dense rank-4 raster in NCHW order, double precision throughout.
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<double> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw std::invalid_argument("Tensor4: negative dimension");
    }

    std::size_t size() const { return v.size(); }
    int plane_size() const { return h * w; }

    double* plane(int i, int ch) {
        return v.data() + (static_cast<std::size_t>(i) * c + ch) * plane_size();
    }
    const double* plane(int i, int ch) const {
        return v.data() + (static_cast<std::size_t>(i) * c + ch) * plane_size();
    }

    double& at(int i, int ch, int y, int x) { return plane(i, ch)[y * w + x]; }
    double at(int i, int ch, int y, int x) const { return plane(i, ch)[y * w + x]; }

    bool same_shape(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" +
               std::to_string(h) + "x" + std::to_string(w);
    }

    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

// Multi-channel image batch, values in [0,1]. Channel count is 3 for RGB
// network inputs; transforms also route single-channel rasters through here.
struct ImageBatch {
    Tensor4 t;
    ImageBatch() = default;
    explicit ImageBatch(Tensor4 t_) : t(std::move(t_)) {}
    ImageBatch(int n, int c, int h, int w) : t(n, c, h, w) {}
};

// One-hot class raster, entries in {0,1}, per-pixel class sum exactly 1.
struct MaskBatch {
    Tensor4 t;
    MaskBatch() = default;
    explicit MaskBatch(Tensor4 t_) : t(std::move(t_)) {}
    MaskBatch(int n, int c, int h, int w) : t(n, c, h, w) {}
};

// Softmax output batch, per-pixel class probabilities summing to 1.
struct ProbMap {
    Tensor4 t;
    ProbMap() = default;
    explicit ProbMap(Tensor4 t_) : t(std::move(t_)) {}
    ProbMap(int n, int c, int h, int w) : t(n, c, h, w) {}
};

inline void check_image_range(const Tensor4& t, const char* what) {
    for (double x : t.v)
        if (!(x >= 0.0 && x <= 1.0))
            throw std::invalid_argument(std::string(what) + ": value outside [0,1]");
}

inline void check_one_hot(const Tensor4& t, const char* what) {
    const int hw = t.plane_size();
    for (int i = 0; i < t.n; ++i) {
        for (int px = 0; px < hw; ++px) {
            double sum = 0.0;
            for (int ch = 0; ch < t.c; ++ch) {
                double x = t.plane(i, ch)[px];
                if (x != 0.0 && x != 1.0)
                    throw std::invalid_argument(std::string(what) + ": entry not in {0,1}");
                sum += x;
            }
            if (sum != 1.0)
                throw std::invalid_argument(std::string(what) + ": pixel class sum != 1");
        }
    }
}

inline void check_prob_rows(const Tensor4& t, const char* what, double tol = 1e-5) {
    const int hw = t.plane_size();
    for (int i = 0; i < t.n; ++i) {
        for (int px = 0; px < hw; ++px) {
            double sum = 0.0;
            for (int ch = 0; ch < t.c; ++ch) sum += t.plane(i, ch)[px];
            if (std::fabs(sum - 1.0) > tol)
                throw std::invalid_argument(std::string(what) + ": pixel prob sum off by > tol");
        }
    }
}

}  // namespace exconsist
