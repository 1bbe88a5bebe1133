#include "exconsist/losses.hpp"

namespace exconsist {

double ramp_lambda(int step, const RampSchedule& sched) {
    sched.validate();
    if (step < 0) throw std::invalid_argument("ramp_lambda: step must be >= 0");
    if (step <= sched.t1) return 0.0;
    if (step >= sched.t2) return sched.lambda_max;
    const double tau = static_cast<double>(step - sched.t1) /
                       static_cast<double>(sched.t2 - sched.t1);
    return sched.lambda_max * std::exp(-5.0 * (1.0 - tau) * (1.0 - tau));
}

namespace {

constexpr int kForeground = 1;

void check_pair(const Tensor4& a, const Tensor4& b, double smooth, const Tensor4* da) {
    if (!a.same_shape(b))
        throw std::invalid_argument("dice: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (a.c < 2) throw std::invalid_argument("dice: need at least 2 classes");
    if (!(smooth > 0.0)) throw std::invalid_argument("dice: smooth must be > 0");
    if (da && !da->same_shape(a)) throw std::invalid_argument("dice: gradient shape mismatch");
}

// Supervised form: 1 - (2*sum(p*g)+s) / (sum(p)+sum(g)+s) on the foreground
// plane, batch-averaged. Gradient w.r.t. p optional.
double dice_core(const Tensor4& a, const Tensor4& b, double smooth,
                 double grad_scale, Tensor4* da) {
    check_pair(a, b, smooth, da);
    const int hw = a.plane_size();
    const double inv_batch = 1.0 / static_cast<double>(a.n);
    double loss = 0.0;
    for (int i = 0; i < a.n; ++i) {
        const double* p = a.plane(i, kForeground);
        const double* g = b.plane(i, kForeground);
        double inter = 0.0, sum_p = 0.0, sum_g = 0.0;
        for (int px = 0; px < hw; ++px) {
            inter += p[px] * g[px];
            sum_p += p[px];
            sum_g += g[px];
        }
        const double num = 2.0 * inter + smooth;
        const double den = sum_p + sum_g + smooth;
        loss += 1.0 - num / den;
        if (da) {
            // d/dp[1 - num/den] = (num - 2*g*den) / den^2, batch-averaged
            double* d = da->plane(i, kForeground);
            const double inv_den2 = 1.0 / (den * den);
            const double k = grad_scale * inv_batch;
            for (int px = 0; px < hw; ++px)
                d[px] += k * (num - 2.0 * g[px] * den) * inv_den2;
        }
    }
    return loss * inv_batch;
}

// Consistency form with squared-sum normalizers:
//   1 - (2*sum(a*b)+s) / (sum(a^2)+sum(b^2)+s)
// Zero exactly at a == b for any soft maps (2ab <= a^2+b^2 pointwise), so
// perfect agreement costs nothing regardless of prediction sharpness; the
// plain-sum form would instead reward saturating the outputs.
double soft_core(const Tensor4& a, const Tensor4& b, double smooth,
                 double grad_scale, Tensor4* da) {
    check_pair(a, b, smooth, da);
    const int hw = a.plane_size();
    const double inv_batch = 1.0 / static_cast<double>(a.n);
    double loss = 0.0;
    for (int i = 0; i < a.n; ++i) {
        const double* p = a.plane(i, kForeground);
        const double* q = b.plane(i, kForeground);
        double inter = 0.0, sum_p2 = 0.0, sum_q2 = 0.0;
        for (int px = 0; px < hw; ++px) {
            inter += p[px] * q[px];
            sum_p2 += p[px] * p[px];
            sum_q2 += q[px] * q[px];
        }
        const double num = 2.0 * inter + smooth;
        const double den = sum_p2 + sum_q2 + smooth;
        loss += 1.0 - num / den;
        if (da) {
            // d/dp[1 - num/den] = 2*(num*p - den*q) / den^2, batch-averaged
            double* d = da->plane(i, kForeground);
            const double inv_den2 = 1.0 / (den * den);
            const double k = grad_scale * inv_batch * 2.0;
            for (int px = 0; px < hw; ++px)
                d[px] += k * (num * p[px] - den * q[px]) * inv_den2;
        }
    }
    return loss * inv_batch;
}

}  // namespace

double dice_loss(const ProbMap& pred, const MaskBatch& target, double smooth) {
    return dice_core(pred.t, target.t, smooth, 0.0, nullptr);
}

double dice_loss_grad(const ProbMap& pred, const MaskBatch& target, double smooth,
                      double grad_scale, Tensor4* dpred) {
    return dice_core(pred.t, target.t, smooth, grad_scale, dpred);
}

double soft_dice_consistency(const ProbMap& a, const ProbMap& b, double smooth) {
    return soft_core(a.t, b.t, smooth, 0.0, nullptr);
}

double soft_dice_consistency_grad(const ProbMap& a, const ProbMap& b, double smooth,
                                  double grad_scale, Tensor4* da) {
    return soft_core(a.t, b.t, smooth, grad_scale, da);
}

}  // namespace exconsist
