#pragma once

#include <cstdint>
#include <vector>

#include "exconsist/segnet.hpp"

namespace exconsist {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

// First/second-moment accumulators aligned index-by-index with the network's
// params(); buffer entries stay empty. `t` counts applied steps.
struct AdamState {
    AdamConfig cfg;
    std::int64_t t = 0;
    std::vector<std::vector<double>> m, v;
};

AdamState adam_init(const SegNetwork& net, const AdamConfig& cfg);

// One bias-corrected Adam update of every trainable array.
void adam_step(SegNetwork& net, AdamState& st, const GradSet& grads);

}  // namespace exconsist
