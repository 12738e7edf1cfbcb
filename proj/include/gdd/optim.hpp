#pragma once

#include <cmath>
#include <span>

#include "gdd/autodiff.hpp"

namespace gdd {

struct AdamOptions {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected adaptive-moment update, then zeroes the gradients.
template <class Real>
void adam_step(std::span<Parameter<Real>> params, const AdamOptions& opt = {}) {
    for (auto& p : params) {
        auto& m = p.moments();
        ++m.step;
        const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(m.step));
        const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(m.step));
        auto& value = p.mutable_value();
        auto& grad = p.mutable_grad();
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double g = grad[i];
            const double m1 = opt.beta1 * m.first[i] + (1.0 - opt.beta1) * g;
            const double m2 = opt.beta2 * m.second[i] + (1.0 - opt.beta2) * g * g;
            m.first[i] = static_cast<Real>(m1);
            m.second[i] = static_cast<Real>(m2);
            value[i] -= static_cast<Real>(opt.lr * (m1 / c1) / (std::sqrt(m2 / c2) + opt.eps));
        }
        p.zero_grad();
    }
}

template <class Real>
void zero_grads(std::span<Parameter<Real>> params) {
    for (auto& p : params) p.zero_grad();
}

}  // namespace gdd
