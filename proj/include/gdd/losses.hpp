#pragma once

#include <cmath>
#include <string>

#include "gdd/autodiff.hpp"
#include "gdd/degradation.hpp"

namespace gdd {

enum class Task { hs_sr, pansharpen, denoise };

inline const char* to_string(Task t) {
    switch (t) {
        case Task::hs_sr: return "hs-sr";
        case Task::pansharpen: return "pansharpen";
        case Task::denoise: return "denoise";
    }
    return "?";
}

inline Task parse_task(const std::string& s) {
    if (s == "hs-sr" || s == "hs_sr") return Task::hs_sr;
    if (s == "pansharpen") return Task::pansharpen;
    if (s == "denoise") return Task::denoise;
    throw ValidationError("unknown task '" + s + "' (expected hs-sr|pansharpen|denoise)");
}

struct LossConfig {
    double mu = 1.0;
    Task task = Task::hs_sr;
};

inline void validate_mu(double mu) {
    if (!(mu > 0.0) || !std::isfinite(mu)) throw ValidationError("mu must be finite and positive, got " + std::to_string(mu));
}

template <class Real>
struct LossTerms {
    Node<Real> total;
    Node<Real> fidelity;  // first term (already weighted by mu)
    Node<Real> guidance;  // second term; zero for denoising
};

// mu * ||S(X) - Y||_F^2 + ||R(X) - G||_F^2
template <class Real>
LossTerms<Real> hs_sr_loss(const Node<Real>& x, const Tensor<Real>& y, const Tensor<Real>& g, const SpatialDownsampler& s,
                           const SpectralResponse& r, double mu) {
    validate_mu(mu);
    const Node<Real> down = s.apply(x);
    require_same_shape(down.shape(), y.shape(), "hs_sr_loss: S(X) vs Y");
    const Node<Real> proj = r.apply(x);
    require_same_shape(proj.shape(), g.shape(), "hs_sr_loss: R(X) vs G");
    const Node<Real> t1 = scalar_mul(square_sum(sub(down, constant(y))), static_cast<Real>(mu));
    const Node<Real> t2 = square_sum(sub(proj, constant(g)));
    return {add(t1, t2), t1, t2};
}

// mu * ||S(X) - Y||_F^2 + |D grad(X) - grad(G_expanded)|_1, with one weight of
// D per band shared by the x- and y-difference channels.
template <class Real>
LossTerms<Real> pansharpen_loss(const Node<Real>& x, const Tensor<Real>& y, const Tensor<Real>& g_expanded,
                                const SpatialDownsampler& s, const Node<Real>& channel_weights, double mu) {
    validate_mu(mu);
    require_same_shape(x.shape(), g_expanded.shape(), "pansharpen_loss: X vs expanded guidance");
    if (channel_weights.shape() != Shape{x.shape().channels, 1, 1}) {
        throw ShapeError("pansharpen_loss: channel weights " + to_string(channel_weights.shape()) + " do not match " +
                         std::to_string(x.shape().channels) + " bands");
    }
    const Node<Real> down = s.apply(x);
    require_same_shape(down.shape(), y.shape(), "pansharpen_loss: S(X) vs Y");
    const Node<Real> t1 = scalar_mul(square_sum(sub(down, constant(y))), static_cast<Real>(mu));
    const Node<Real> dx = scale_channels(image_gradient(x), channel_weights);
    const Node<Real> t2 = abs_sum(sub(dx, constant(image_gradient(g_expanded))));
    return {add(t1, t2), t1, t2};
}

// ||X - Y||_F^2; the guidance enters only through the network.
template <class Real>
LossTerms<Real> denoise_loss(const Node<Real>& x, const Tensor<Real>& y) {
    require_same_shape(x.shape(), y.shape(), "denoise_loss");
    const Node<Real> t1 = square_sum(sub(x, constant(y)));
    return {t1, t1, constant(Tensor<Real>::scalar(Real(0)))};
}

// Per-band weights D, initialised to one.
template <class Real>
Parameter<Real> make_channel_weights(std::size_t bands) {
    return Parameter<Real>("channel_weights", Tensor<Real>(Shape{bands, 1, 1}, Real(1)));
}

}  // namespace gdd
