#include "exconsist/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace exconsist {

void AdamConfig::validate() const {
    if (!(lr > 0.0)) throw std::invalid_argument("AdamConfig: lr must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("AdamConfig: beta1 must be in [0,1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("AdamConfig: beta2 must be in [0,1)");
    if (!(eps > 0.0)) throw std::invalid_argument("AdamConfig: eps must be positive");
}

AdamState adam_init(const SegNetwork& net, const AdamConfig& cfg) {
    cfg.validate();
    AdamState st;
    st.cfg = cfg;
    const auto& params = net.params();
    st.m.resize(params.size());
    st.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        st.m[i].assign(params[i].v.size(), 0.0);
        st.v[i].assign(params[i].v.size(), 0.0);
    }
    return st;
}

void adam_step(SegNetwork& net, AdamState& st, const GradSet& grads) {
    auto& params = net.params();
    if (grads.size() != params.size() || st.m.size() != params.size())
        throw std::invalid_argument("adam_step: state misaligned with params");
    st.t += 1;
    const double b1 = st.cfg.beta1, b2 = st.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        const std::size_t n = params[i].v.size();
        if (grads[i].size() != n)
            throw std::invalid_argument("adam_step: gradient shape mismatch at " + params[i].name);
        double* w = params[i].v.data();
        double* m = st.m[i].data();
        double* v = st.v[i].data();
        const double* g = grads[i].data();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
        }
    }
}

}  // namespace exconsist
