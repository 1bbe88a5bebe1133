#pragma once

#include <cmath>
#include <stdexcept>

#include "exconsist/tensor.hpp"

namespace exconsist {

// Consistency weight schedule: 0 until t1, lambda_max from t2 on, and a
// Gaussian-style rise lambda_max*exp(-5*(1-tau)^2) in between. The curve
// starts at lambda_max*exp(-5) ~ 0.0067*lambda_max just after t1.
struct RampSchedule {
    int t1 = 0;
    int t2 = 0;
    double lambda_max = 0.0;

    void validate() const {
        if (t1 < 0 || t2 < t1) throw std::invalid_argument("RampSchedule: need 0 <= t1 <= t2");
        if (lambda_max < 0.0) throw std::invalid_argument("RampSchedule: lambda_max must be >= 0");
    }
    bool operator==(const RampSchedule&) const = default;
};

// Per-step loss breakdown. total is computed exactly as
// l_seg + lambda*(l_ec_labeled + l_ec_unlabeled).
struct LossReport {
    double l_seg = 0.0;
    double l_ec_labeled = 0.0;
    double l_ec_unlabeled = 0.0;
    double lambda = 0.0;
    double total = 0.0;
};

double ramp_lambda(int step, const RampSchedule& sched);

// Smoothed Dice complement on the foreground class, averaged over the batch:
//   1 - (2*sum(p*g) + smooth) / (sum(p) + sum(g) + smooth)
// Differentiable in pred everywhere; value in [0,1).
double dice_loss(const ProbMap& pred, const MaskBatch& target, double smooth);

// Same evaluation with gradient w.r.t. pred accumulated into *dpred
// (scaled by grad_scale). dpred must match pred's shape; only the
// foreground plane receives gradient.
double dice_loss_grad(const ProbMap& pred, const MaskBatch& target, double smooth,
                      double grad_scale, Tensor4* dpred);

// Soft Dice disagreement between two probabilistic maps, with squared-sum
// normalizers so identical maps score exactly 0. Symmetric as a value; the
// trainer takes gradients only through `a` (the student side).
double soft_dice_consistency(const ProbMap& a, const ProbMap& b, double smooth);

double soft_dice_consistency_grad(const ProbMap& a, const ProbMap& b, double smooth,
                                  double grad_scale, Tensor4* da);

}  // namespace exconsist
