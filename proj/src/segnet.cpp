#include "exconsist/segnet.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace exconsist {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

using MatMap = Eigen::Map<Eigen::MatrixXd>;
using CMatMap = Eigen::Map<const Eigen::MatrixXd>;

// im2col for 3x3 same-padding convolution of one image. Column j = ci*9 +
// (ky+1)*3 + (kx+1) holds the input plane ci shifted by (ky,kx), zero at
// the borders. Rows run over pixels in (y,x) raster order.
void im2col3(const Tensor4& in, int img, Eigen::MatrixXd& col) {
    const int h = in.h, w = in.w, m = h * w;
    col.resize(m, in.c * 9);
    for (int ci = 0; ci < in.c; ++ci) {
        const double* plane = in.plane(img, ci);
        for (int ky = -1; ky <= 1; ++ky) {
            for (int kx = -1; kx <= 1; ++kx) {
                double* dst = col.col(ci * 9 + (ky + 1) * 3 + (kx + 1)).data();
                for (int y = 0; y < h; ++y) {
                    double* row = dst + y * w;
                    const int sy = y + ky;
                    if (sy < 0 || sy >= h) {
                        std::memset(row, 0, sizeof(double) * w);
                        continue;
                    }
                    const double* src = plane + sy * w;
                    if (kx == 0) {
                        std::memcpy(row, src, sizeof(double) * w);
                    } else if (kx < 0) {
                        row[0] = 0.0;
                        std::memcpy(row + 1, src, sizeof(double) * (w - 1));
                    } else {
                        std::memcpy(row, src + 1, sizeof(double) * (w - 1));
                        row[w - 1] = 0.0;
                    }
                }
            }
        }
    }
}

// Transpose of im2col3: scatter-adds column gradients back into the image.
void col2im3(const Eigen::MatrixXd& dcol, int img, Tensor4& din) {
    const int h = din.h, w = din.w;
    for (int ci = 0; ci < din.c; ++ci) {
        double* plane = din.plane(img, ci);
        for (int ky = -1; ky <= 1; ++ky) {
            for (int kx = -1; kx <= 1; ++kx) {
                const double* src = dcol.col(ci * 9 + (ky + 1) * 3 + (kx + 1)).data();
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky;
                    if (sy < 0 || sy >= h) continue;
                    const double* row = src + y * w;
                    double* dst = plane + sy * w;
                    if (kx == 0) {
                        for (int x = 0; x < w; ++x) dst[x] += row[x];
                    } else if (kx < 0) {
                        for (int x = 1; x < w; ++x) dst[x - 1] += row[x];
                    } else {
                        for (int x = 0; x < w - 1; ++x) dst[x + 1] += row[x];
                    }
                }
            }
        }
    }
}

// Bilinear 2x tap table (align-corners-false mapping in = (out+0.5)/2 - 0.5).
struct Tap {
    int lo, hi;
    double wlo, whi;
};

std::vector<Tap> up2_taps(int in_len) {
    std::vector<Tap> taps(in_len * 2);
    for (int o = 0; o < in_len * 2; ++o) {
        const double pos = (o + 0.5) * 0.5 - 0.5;
        int lo = static_cast<int>(std::floor(pos));
        double f = pos - lo;
        int hi = lo + 1;
        if (lo < 0) { lo = 0; hi = 0; f = 0.0; }
        if (hi >= in_len) { hi = in_len - 1; lo = in_len - 1; f = 0.0; }
        taps[o] = {lo, hi, 1.0 - f, f};
    }
    return taps;
}

}  // namespace

void NetworkConfig::validate() const {
    if (depth != 4) throw std::invalid_argument("NetworkConfig: only depth=4 is supported");
    if (in_channels <= 0) throw std::invalid_argument("NetworkConfig: in_channels must be positive");
    if (num_classes < 2) throw std::invalid_argument("NetworkConfig: num_classes must be >= 2");
    if (base_width <= 0) throw std::invalid_argument("NetworkConfig: base_width must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("NetworkConfig: dropout_rate must be in [0,1)");
    if (upsample != "bilinear")
        throw std::invalid_argument("NetworkConfig: upsample must be 'bilinear'");
}

SegNetwork::Conv SegNetwork::make_conv(const std::string& name, int cin, int cout,
                                       int ksize, Rng& init) {
    Conv c;
    c.cin = cin;
    c.cout = cout;
    c.ksize = ksize;
    const int k2 = ksize * ksize;
    ParamArray w{name + ".weight", true, std::vector<double>(static_cast<std::size_t>(cin) * k2 * cout)};
    const double bound = std::sqrt(6.0 / (cin * k2));  // He-uniform
    for (auto& x : w.v) x = init.uniform(-bound, bound);
    ParamArray b{name + ".bias", true, std::vector<double>(cout, 0.0)};
    c.wi = static_cast<int>(params_.size());
    params_.push_back(std::move(w));
    c.bi = static_cast<int>(params_.size());
    params_.push_back(std::move(b));
    c.slot = n_tensor_slots_++;
    return c;
}

SegNetwork::Bn SegNetwork::make_bn(const std::string& name, int ch) {
    Bn bn;
    bn.ch = ch;
    bn.gi = static_cast<int>(params_.size());
    params_.push_back({name + ".gamma", true, std::vector<double>(ch, 1.0)});
    bn.bi = static_cast<int>(params_.size());
    params_.push_back({name + ".beta", true, std::vector<double>(ch, 0.0)});
    bn.rmi = static_cast<int>(params_.size());
    params_.push_back({name + ".running_mean", false, std::vector<double>(ch, 0.0)});
    bn.rvi = static_cast<int>(params_.size());
    params_.push_back({name + ".running_var", false, std::vector<double>(ch, 1.0)});
    bn.slot_xhat = n_tensor_slots_++;
    bn.slot_invstd = n_tensor_slots_++;
    return bn;
}

SegNetwork::Block SegNetwork::make_block(const std::string& name, int cin, int cout,
                                         Rng& init) {
    Block b;
    b.conv_a = make_conv(name + ".conv_a", cin, cout, 3, init);
    b.bn_a = make_bn(name + ".bn_a", cout);
    b.slot_relu_a = n_tensor_slots_++;
    b.conv_b = make_conv(name + ".conv_b", cout, cout, 3, init);
    b.bn_b = make_bn(name + ".bn_b", cout);
    b.slot_relu_b = n_tensor_slots_++;
    return b;
}

SegNetwork::SegNetwork(const NetworkConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng init(seed);
    const int w0 = cfg_.base_width;
    int widths[4] = {w0, w0 * 2, w0 * 4, w0 * 8};

    int cin = cfg_.in_channels;
    for (int k = 0; k < 4; ++k) {
        enc_[k] = make_block("enc" + std::to_string(k), cin, widths[k], init);
        slot_pool_[k] = n_int_slots_++;
        slot_drop_[k] = n_int_slots_++;
        cin = widths[k];
    }
    // Decoder blocks are built top-down (dec3 consumes the bottom feature map).
    int prev = widths[3];
    for (int k = 3; k >= 0; --k) {
        dec_[k] = make_block("dec" + std::to_string(k), prev + widths[k], widths[k], init);
        prev = widths[k];
    }
    head_ = make_conv("head", widths[0], cfg_.num_classes, 1, init);
    slot_softmax_ = n_tensor_slots_++;
}

std::size_t SegNetwork::num_trainable_values() const {
    std::size_t n = 0;
    for (const auto& p : params_)
        if (p.trainable) n += p.v.size();
    return n;
}

GradSet SegNetwork::make_grads() const {
    GradSet g(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (params_[i].trainable) g[i].assign(params_[i].v.size(), 0.0);
    return g;
}

// Conv / BN / pool / upsample kernels. They are member-free; the layer
// descriptors carry the param indices.

static Tensor4 run_conv(const std::vector<ParamArray>& params, int wi, int bi,
                        int cin, int cout, int ksize, int slot,
                        const Tensor4& in, Tape* tape) {
    Tensor4 out(in.n, cout, in.h, in.w);
    const int m = in.h * in.w;
    const std::vector<double>& wv = params[wi].v;
    const std::vector<double>& bv = params[bi].v;
    const int k2 = ksize * ksize;
    CMatMap wmat(wv.data(), static_cast<Eigen::Index>(cin) * k2, cout);
    Eigen::MatrixXd col;
    for (int i = 0; i < in.n; ++i) {
        MatMap out_mat(out.plane(i, 0), m, cout);
        if (ksize == 3) {
            im2col3(in, i, col);
            out_mat.noalias() = col * wmat;
        } else {
            CMatMap in_mat(in.plane(i, 0), m, cin);
            out_mat.noalias() = in_mat * wmat;
        }
        for (int c = 0; c < cout; ++c) out_mat.col(c).array() += bv[c];
    }
    if (tape) tape->tensors[slot] = in;
    return out;
}

static void run_conv_backward(const std::vector<ParamArray>& params, int wi, int bi,
                              int cin, int cout, int ksize, int slot,
                              const Tape& tape, const Tensor4& dout,
                              Tensor4& din, GradSet& grads) {
    const Tensor4& in = tape.tensors[slot];
    din = Tensor4(in.n, in.c, in.h, in.w);
    const int m = in.h * in.w;
    const int k2 = ksize * ksize;
    CMatMap wmat(params[wi].v.data(), static_cast<Eigen::Index>(cin) * k2, cout);
    MatMap dw(grads[wi].data(), static_cast<Eigen::Index>(cin) * k2, cout);
    Eigen::MatrixXd col, dcol;
    for (int i = 0; i < in.n; ++i) {
        CMatMap dout_mat(dout.plane(i, 0), m, cout);
        if (ksize == 3) {
            im2col3(in, i, col);
            dw.noalias() += col.transpose() * dout_mat;
            dcol.noalias() = dout_mat * wmat.transpose();
            col2im3(dcol, i, din);
        } else {
            CMatMap in_mat(in.plane(i, 0), m, cin);
            dw.noalias() += in_mat.transpose() * dout_mat;
            MatMap din_mat(din.plane(i, 0), m, cin);
            din_mat.noalias() = dout_mat * wmat.transpose();
        }
        // fixed-order bias reduction: Eigen's vectorized column sums split by
        // runtime pointer alignment, which makes low bits heap-layout-dependent
        for (int c = 0; c < cout; ++c) {
            const double* p = dout.plane(i, c);
            double s = 0.0;
            for (int q = 0; q < m; ++q) s += p[q];
            grads[bi][static_cast<std::size_t>(c)] += s;
        }
    }
}

static Tensor4 run_bn(const std::vector<ParamArray>& params,
                      std::vector<ParamArray>* stats_update,
                      int gi, int bi, int rmi, int rvi, int slot_xhat,
                      int slot_invstd, const Tensor4& in, Mode mode, Tape* tape) {
    Tensor4 out(in.n, in.c, in.h, in.w);
    const int hw = in.plane_size();
    const double m_count = static_cast<double>(in.n) * hw;
    Tensor4 xhat, invstd_t;
    if (tape) {
        xhat = Tensor4(in.n, in.c, in.h, in.w);
        invstd_t = Tensor4(1, in.c, 1, 1);
    }
    for (int ch = 0; ch < in.c; ++ch) {
        double mean, invstd;
        if (mode == Mode::Train) {
            double sum = 0.0;
            for (int i = 0; i < in.n; ++i) {
                const double* p = in.plane(i, ch);
                for (int px = 0; px < hw; ++px) sum += p[px];
            }
            mean = sum / m_count;
            double ss = 0.0;
            for (int i = 0; i < in.n; ++i) {
                const double* p = in.plane(i, ch);
                for (int px = 0; px < hw; ++px) {
                    const double d = p[px] - mean;
                    ss += d * d;
                }
            }
            const double var = ss / m_count;
            invstd = 1.0 / std::sqrt(var + kBnEps);
            if (stats_update) {
                auto& rm = (*stats_update)[rmi].v[ch];
                auto& rv = (*stats_update)[rvi].v[ch];
                rm = (1.0 - kBnMomentum) * rm + kBnMomentum * mean;
                const double var_unbiased = ss / (m_count - 1.0);
                rv = (1.0 - kBnMomentum) * rv + kBnMomentum * var_unbiased;
            }
        } else {
            mean = params[rmi].v[ch];
            invstd = 1.0 / std::sqrt(params[rvi].v[ch] + kBnEps);
        }
        const double gamma = params[gi].v[ch];
        const double beta = params[bi].v[ch];
        for (int i = 0; i < in.n; ++i) {
            const double* p = in.plane(i, ch);
            double* o = out.plane(i, ch);
            double* xh = tape ? xhat.plane(i, ch) : nullptr;
            for (int px = 0; px < hw; ++px) {
                const double x = (p[px] - mean) * invstd;
                if (xh) xh[px] = x;
                o[px] = gamma * x + beta;
            }
        }
        if (tape) invstd_t.plane(0, ch)[0] = invstd;
    }
    if (tape) {
        tape->tensors[slot_xhat] = std::move(xhat);
        tape->tensors[slot_invstd] = std::move(invstd_t);
    }
    return out;
}

static void run_bn_backward(const std::vector<ParamArray>& params, int gi, int bi,
                            int slot_xhat, int slot_invstd, const Tape& tape,
                            const Tensor4& dout, Tensor4& din, GradSet& grads) {
    const Tensor4& xhat = tape.tensors[slot_xhat];
    const Tensor4& invstd_t = tape.tensors[slot_invstd];
    din = Tensor4(dout.n, dout.c, dout.h, dout.w);
    const int hw = dout.plane_size();
    const double m_count = static_cast<double>(dout.n) * hw;
    for (int ch = 0; ch < dout.c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int i = 0; i < dout.n; ++i) {
            const double* dy = dout.plane(i, ch);
            const double* xh = xhat.plane(i, ch);
            for (int px = 0; px < hw; ++px) {
                sum_dy += dy[px];
                sum_dy_xhat += dy[px] * xh[px];
            }
        }
        grads[gi][ch] += sum_dy_xhat;
        grads[bi][ch] += sum_dy;
        const double gamma = params[gi].v[ch];
        const double invstd = invstd_t.plane(0, ch)[0];
        const double k = gamma * invstd;
        const double mean_dy = sum_dy / m_count;
        const double mean_dy_xhat = sum_dy_xhat / m_count;
        for (int i = 0; i < dout.n; ++i) {
            const double* dy = dout.plane(i, ch);
            const double* xh = xhat.plane(i, ch);
            double* dx = din.plane(i, ch);
            for (int px = 0; px < hw; ++px)
                dx[px] = k * (dy[px] - mean_dy - xh[px] * mean_dy_xhat);
        }
    }
}

static Tensor4 run_relu(int slot, const Tensor4& in, Tape* tape) {
    Tensor4 out = in;
    for (auto& x : out.v)
        if (x < 0.0) x = 0.0;
    if (tape) tape->tensors[slot] = out;
    return out;
}

static void run_relu_backward(int slot, const Tape& tape, const Tensor4& dout,
                              Tensor4& din) {
    const Tensor4& out = tape.tensors[slot];
    din = dout;
    for (std::size_t i = 0; i < din.v.size(); ++i)
        if (out.v[i] <= 0.0) din.v[i] = 0.0;
}

static Tensor4 run_pool(int slot, const Tensor4& in, Tape* tape) {
    Tensor4 out(in.n, in.c, in.h / 2, in.w / 2);
    std::vector<std::int32_t>* idx = nullptr;
    if (tape) {
        tape->ints[slot].assign(out.size(), 0);
        idx = &tape->ints[slot];
    }
    std::size_t o = 0;
    for (int i = 0; i < in.n; ++i) {
        for (int ch = 0; ch < in.c; ++ch) {
            const double* p = in.plane(i, ch);
            double* q = out.plane(i, ch);
            for (int y = 0; y < out.h; ++y) {
                for (int x = 0; x < out.w; ++x) {
                    const int base = (2 * y) * in.w + 2 * x;
                    int best = base;
                    double bv = p[base];
                    if (p[base + 1] > bv) { bv = p[base + 1]; best = base + 1; }
                    if (p[base + in.w] > bv) { bv = p[base + in.w]; best = base + in.w; }
                    if (p[base + in.w + 1] > bv) { bv = p[base + in.w + 1]; best = base + in.w + 1; }
                    q[y * out.w + x] = bv;
                    if (idx) (*idx)[o] = best;
                    ++o;
                }
            }
        }
    }
    return out;
}

static void run_pool_backward(int slot, const Tape& tape, const Tensor4& dout,
                              Tensor4& din) {
    din = Tensor4(dout.n, dout.c, dout.h * 2, dout.w * 2);
    const std::vector<std::int32_t>& idx = tape.ints[slot];
    std::size_t o = 0;
    const int out_hw = dout.plane_size();
    for (int i = 0; i < dout.n; ++i) {
        for (int ch = 0; ch < dout.c; ++ch) {
            const double* dq = dout.plane(i, ch);
            double* dp = din.plane(i, ch);
            for (int px = 0; px < out_hw; ++px) {
                dp[idx[o]] += dq[px];
                ++o;
            }
        }
    }
}

static Tensor4 run_dropout(int slot, const Tensor4& in, double rate, Mode mode,
                           Rng* rng, Tape* tape) {
    if (mode == Mode::Eval || rate == 0.0) return in;
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    Tensor4 out(in.n, in.c, in.h, in.w);
    std::vector<std::int32_t>* mask = nullptr;
    if (tape) {
        tape->ints[slot].assign(in.size(), 0);
        mask = &tape->ints[slot];
    }
    for (std::size_t i = 0; i < in.v.size(); ++i) {
        const bool kept = rng->u01() < keep;
        out.v[i] = kept ? in.v[i] * scale : 0.0;
        if (mask) (*mask)[i] = kept ? 1 : 0;
    }
    return out;
}

static void run_dropout_backward(int slot, const Tape& tape, double rate,
                                 const Tensor4& dout, Tensor4& din) {
    if (rate == 0.0) {
        din = dout;
        return;
    }
    const double scale = 1.0 / (1.0 - rate);
    const std::vector<std::int32_t>& mask = tape.ints[slot];
    din = Tensor4(dout.n, dout.c, dout.h, dout.w);
    for (std::size_t i = 0; i < dout.v.size(); ++i)
        din.v[i] = mask[i] ? dout.v[i] * scale : 0.0;
}

static Tensor4 run_upsample2(const Tensor4& in) {
    Tensor4 out(in.n, in.c, in.h * 2, in.w * 2);
    const auto ty = up2_taps(in.h);
    const auto tx = up2_taps(in.w);
    for (int i = 0; i < in.n; ++i) {
        for (int ch = 0; ch < in.c; ++ch) {
            const double* p = in.plane(i, ch);
            double* q = out.plane(i, ch);
            for (int y = 0; y < out.h; ++y) {
                const Tap& a = ty[y];
                const double* r0 = p + a.lo * in.w;
                const double* r1 = p + a.hi * in.w;
                for (int x = 0; x < out.w; ++x) {
                    const Tap& b = tx[x];
                    q[y * out.w + x] = a.wlo * (b.wlo * r0[b.lo] + b.whi * r0[b.hi]) +
                                       a.whi * (b.wlo * r1[b.lo] + b.whi * r1[b.hi]);
                }
            }
        }
    }
    return out;
}

static void run_upsample2_backward(const Tensor4& dout, Tensor4& din) {
    din = Tensor4(dout.n, dout.c, dout.h / 2, dout.w / 2);
    const auto ty = up2_taps(din.h);
    const auto tx = up2_taps(din.w);
    for (int i = 0; i < dout.n; ++i) {
        for (int ch = 0; ch < dout.c; ++ch) {
            const double* dq = dout.plane(i, ch);
            double* dp = din.plane(i, ch);
            for (int y = 0; y < dout.h; ++y) {
                const Tap& a = ty[y];
                double* r0 = dp + a.lo * din.w;
                double* r1 = dp + a.hi * din.w;
                for (int x = 0; x < dout.w; ++x) {
                    const Tap& b = tx[x];
                    const double g = dq[y * dout.w + x];
                    r0[b.lo] += a.wlo * b.wlo * g;
                    r0[b.hi] += a.wlo * b.whi * g;
                    r1[b.lo] += a.whi * b.wlo * g;
                    r1[b.hi] += a.whi * b.whi * g;
                }
            }
        }
    }
}

static Tensor4 run_concat(const Tensor4& a, const Tensor4& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw std::runtime_error("concat: spatial dims differ (" + a.shape_str() +
                                 " vs " + b.shape_str() + ")");
    Tensor4 out(a.n, a.c + b.c, a.h, a.w);
    const std::size_t pa = static_cast<std::size_t>(a.c) * a.plane_size();
    const std::size_t pb = static_cast<std::size_t>(b.c) * b.plane_size();
    for (int i = 0; i < a.n; ++i) {
        std::memcpy(out.plane(i, 0), a.plane(i, 0), pa * sizeof(double));
        std::memcpy(out.plane(i, a.c), b.plane(i, 0), pb * sizeof(double));
    }
    return out;
}

static void run_concat_backward(const Tensor4& dout, int ca, Tensor4& da, Tensor4& db) {
    const int cb = dout.c - ca;
    da = Tensor4(dout.n, ca, dout.h, dout.w);
    db = Tensor4(dout.n, cb, dout.h, dout.w);
    const std::size_t pa = static_cast<std::size_t>(ca) * dout.plane_size();
    const std::size_t pb = static_cast<std::size_t>(cb) * dout.plane_size();
    for (int i = 0; i < dout.n; ++i) {
        std::memcpy(da.plane(i, 0), dout.plane(i, 0), pa * sizeof(double));
        std::memcpy(db.plane(i, 0), dout.plane(i, ca), pb * sizeof(double));
    }
}

static Tensor4 run_softmax(int slot, const Tensor4& in, Tape* tape) {
    Tensor4 out(in.n, in.c, in.h, in.w);
    const int hw = in.plane_size();
    for (int i = 0; i < in.n; ++i) {
        for (int px = 0; px < hw; ++px) {
            double mx = in.plane(i, 0)[px];
            for (int c = 1; c < in.c; ++c) mx = std::max(mx, in.plane(i, c)[px]);
            double sum = 0.0;
            for (int c = 0; c < in.c; ++c) {
                const double e = std::exp(in.plane(i, c)[px] - mx);
                out.plane(i, c)[px] = e;
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (int c = 0; c < in.c; ++c) out.plane(i, c)[px] *= inv;
        }
    }
    if (tape) tape->tensors[slot] = out;
    return out;
}

static void run_softmax_backward(int slot, const Tape& tape, const Tensor4& dprob,
                                 Tensor4& dlogits) {
    const Tensor4& s = tape.tensors[slot];
    dlogits = Tensor4(s.n, s.c, s.h, s.w);
    const int hw = s.plane_size();
    for (int i = 0; i < s.n; ++i) {
        for (int px = 0; px < hw; ++px) {
            double dot = 0.0;
            for (int c = 0; c < s.c; ++c)
                dot += dprob.plane(i, c)[px] * s.plane(i, c)[px];
            for (int c = 0; c < s.c; ++c)
                dlogits.plane(i, c)[px] =
                    s.plane(i, c)[px] * (dprob.plane(i, c)[px] - dot);
        }
    }
}

ProbMap SegNetwork::forward(const ImageBatch& x, Mode mode, Rng* dropout_rng,
                            Tape* tape) {
    return forward_impl(x, mode, dropout_rng, tape,
                        mode == Mode::Train ? &params_ : nullptr);
}

ProbMap SegNetwork::infer(const ImageBatch& x) const {
    return forward_impl(x, Mode::Eval, nullptr, nullptr, nullptr);
}

ProbMap SegNetwork::forward_impl(const ImageBatch& x, Mode mode, Rng* dropout_rng,
                                 Tape* tape, std::vector<ParamArray>* stats_update) const {
    const Tensor4& in = x.t;
    const int div = 1 << cfg_.depth;
    if (in.c != cfg_.in_channels)
        throw std::invalid_argument("forward: expected " + std::to_string(cfg_.in_channels) +
                                    " channels, got " + std::to_string(in.c));
    if (in.n <= 0 || in.h % div != 0 || in.w % div != 0)
        throw std::invalid_argument("forward: spatial dims must be positive multiples of " +
                                    std::to_string(div) + ", got " + in.shape_str());
    if (mode == Mode::Train && dropout_rng == nullptr)
        throw std::invalid_argument("forward: train mode requires a dropout rng");

    if (tape) {
        tape->mode = mode;
        tape->tensors.assign(n_tensor_slots_, Tensor4());
        tape->ints.assign(n_int_slots_, {});
    }

    auto block_fwd = [&](const Block& blk, Tensor4 cur) {
        cur = run_conv(params_, blk.conv_a.wi, blk.conv_a.bi, blk.conv_a.cin,
                       blk.conv_a.cout, 3, blk.conv_a.slot, cur, tape);
        cur = run_bn(params_, stats_update, blk.bn_a.gi, blk.bn_a.bi, blk.bn_a.rmi,
                     blk.bn_a.rvi, blk.bn_a.slot_xhat, blk.bn_a.slot_invstd, cur, mode, tape);
        cur = run_relu(blk.slot_relu_a, cur, tape);
        cur = run_conv(params_, blk.conv_b.wi, blk.conv_b.bi, blk.conv_b.cin,
                       blk.conv_b.cout, 3, blk.conv_b.slot, cur, tape);
        cur = run_bn(params_, stats_update, blk.bn_b.gi, blk.bn_b.bi, blk.bn_b.rmi,
                     blk.bn_b.rvi, blk.bn_b.slot_xhat, blk.bn_b.slot_invstd, cur, mode, tape);
        cur = run_relu(blk.slot_relu_b, cur, tape);
        return cur;
    };

    Tensor4 cur = in;
    Tensor4 skips[4];
    for (int k = 0; k < 4; ++k) {
        cur = block_fwd(enc_[k], std::move(cur));
        skips[k] = cur;
        cur = run_pool(slot_pool_[k], cur, tape);
        cur = run_dropout(slot_drop_[k], cur, cfg_.dropout_rate, mode, dropout_rng, tape);
    }
    for (int k = 3; k >= 0; --k) {
        cur = run_upsample2(cur);
        cur = run_concat(cur, skips[k]);
        cur = block_fwd(dec_[k], std::move(cur));
    }
    cur = run_conv(params_, head_.wi, head_.bi, head_.cin, head_.cout, 1, head_.slot,
                   cur, tape);
    cur = run_softmax(slot_softmax_, cur, tape);
    return ProbMap(std::move(cur));
}

void SegNetwork::backward(const Tape& tape, const Tensor4& dprob, GradSet& grads) const {
    if (tape.mode != Mode::Train)
        throw std::invalid_argument("backward: tape must come from a train-mode forward");
    if (grads.size() != params_.size())
        throw std::invalid_argument("backward: gradient set misaligned");

    auto block_bwd = [&](const Block& blk, const Tensor4& dout) {
        Tensor4 d1, d2;
        run_relu_backward(blk.slot_relu_b, tape, dout, d1);
        run_bn_backward(params_, blk.bn_b.gi, blk.bn_b.bi, blk.bn_b.slot_xhat,
                        blk.bn_b.slot_invstd, tape, d1, d2, grads);
        run_conv_backward(params_, blk.conv_b.wi, blk.conv_b.bi, blk.conv_b.cin,
                          blk.conv_b.cout, 3, blk.conv_b.slot, tape, d2, d1, grads);
        run_relu_backward(blk.slot_relu_a, tape, d1, d2);
        run_bn_backward(params_, blk.bn_a.gi, blk.bn_a.bi, blk.bn_a.slot_xhat,
                        blk.bn_a.slot_invstd, tape, d2, d1, grads);
        run_conv_backward(params_, blk.conv_a.wi, blk.conv_a.bi, blk.conv_a.cin,
                          blk.conv_a.cout, 3, blk.conv_a.slot, tape, d1, d2, grads);
        return d2;
    };

    Tensor4 dcur, dtmp;
    run_softmax_backward(slot_softmax_, tape, dprob, dcur);
    run_conv_backward(params_, head_.wi, head_.bi, head_.cin, head_.cout, 1, head_.slot,
                      tape, dcur, dtmp, grads);
    dcur = std::move(dtmp);

    Tensor4 dskips[4];
    for (int k = 0; k <= 3; ++k) {
        dcur = block_bwd(dec_[k], dcur);
        Tensor4 dup;
        const int up_ch = dcur.c - enc_[k].conv_b.cout;
        run_concat_backward(dcur, up_ch, dup, dskips[k]);
        run_upsample2_backward(dup, dcur);
    }
    for (int k = 3; k >= 0; --k) {
        run_dropout_backward(slot_drop_[k], tape, cfg_.dropout_rate, dcur, dtmp);
        run_pool_backward(slot_pool_[k], tape, dtmp, dcur);
        for (std::size_t i = 0; i < dcur.v.size(); ++i) dcur.v[i] += dskips[k].v[i];
        dcur = block_bwd(enc_[k], dcur);
    }
}

void ema_update(SegNetwork& teacher, const SegNetwork& student, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::invalid_argument("ema_update: alpha must be in [0,1]");
    auto& tp = teacher.params();
    const auto& sp = student.params();
    if (tp.size() != sp.size())
        throw std::invalid_argument("ema_update: parameter collections differ in size");
    for (std::size_t a = 0; a < tp.size(); ++a) {
        if (tp[a].v.size() != sp[a].v.size())
            throw std::invalid_argument("ema_update: shape mismatch at " + tp[a].name);
        double* t = tp[a].v.data();
        const double* s = sp[a].v.data();
        const std::size_t n = tp[a].v.size();
        for (std::size_t i = 0; i < n; ++i)
            t[i] = alpha * t[i] + (1.0 - alpha) * s[i];
    }
}

}  // namespace exconsist
