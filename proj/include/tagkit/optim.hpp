#ifndef TAGKIT_OPTIM_HPP
#define TAGKIT_OPTIM_HPP

// Adaptive-moment gradient descent over a ParamSet.

#include <cmath>

#include "tagkit/graph.hpp"

namespace tagkit {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One update from the accumulated gradients; t is the 1-based step count used
// for bias correction. Gradients are left untouched (caller zeroes them).
inline void adam_step(ParamSet& ps, const AdamConfig& cfg, long t) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (Param* p : ps.all()) {
        if (!p->trainable) continue;
        if (p->adam_m.size() != p->value.size()) {
            p->adam_m = Tensor::zeros(p->value.shape());
            p->adam_v = Tensor::zeros(p->value.shape());
        }
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            double g = p->grad[i];
            p->adam_m[i] = cfg.beta1 * p->adam_m[i] + (1.0 - cfg.beta1) * g;
            p->adam_v[i] = cfg.beta2 * p->adam_v[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = p->adam_m[i] / bc1;
            double vhat = p->adam_v[i] / bc2;
            p->value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

}  // namespace tagkit

#endif
