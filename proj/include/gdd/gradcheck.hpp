#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gdd/losses.hpp"
#include "gdd/network.hpp"

namespace gdd {

struct GradCheckResult {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::size_t entries = 0;

    bool passed() const { return max_error <= tolerance; }
};

// Compares reverse-mode gradients of `loss_fn` with central differences,
// h = 1e-5 * max(1, |x|). The error is max |analytic - numeric| over the
// checked entries divided by the largest gradient magnitude among them.
// `max_entries` > 0 samples that many (parameter, index) pairs.
template <class Real>
double gradient_check(std::vector<Parameter<Real>>& params, const std::function<Node<Real>()>& loss_fn,
                      std::size_t max_entries = 0, std::uint64_t sample_seed = 0, std::size_t* checked = nullptr) {
    for (auto& p : params) p.zero_grad();
    backward(loss_fn());

    std::vector<std::pair<std::size_t, std::size_t>> entries;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params[k].value().size(); ++i) entries.emplace_back(k, i);
    }
    if (max_entries > 0 && entries.size() > max_entries) {
        Rng rng(sample_seed);
        for (std::size_t i = 0; i < max_entries; ++i) {
            std::swap(entries[i], entries[i + rng.below(entries.size() - i)]);
        }
        entries.resize(max_entries);
    }

    double worst = 0.0, scale = 0.0;
    for (auto [k, i] : entries) {
        Tensor<Real>& v = params[k].mutable_value();
        const Real x0 = v[i];
        const Real h = static_cast<Real>(1e-5 * std::max(1.0, std::abs(static_cast<double>(x0))));
        v[i] = x0 + h;
        const double fp = loss_fn().value().item();
        v[i] = x0 - h;
        const double fm = loss_fn().value().item();
        v[i] = x0;
        const double numeric = (fp - fm) / (2.0 * static_cast<double>(h));
        const double analytic = params[k].grad()[i];
        worst = std::max(worst, std::abs(analytic - numeric));
        scale = std::max({scale, std::abs(analytic), std::abs(numeric)});
    }
    for (auto& p : params) p.zero_grad();
    if (checked) *checked = entries.size();
    return worst / std::max(scale, 1e-300);
}

namespace detail {

inline Tensor<double> random_tensor(Rng& rng, const Shape& s, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(s);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

// Scalar probe <op(...), W> with a fixed random W.
inline Node<double> project(const Node<double>& y, const Tensor<double>& w) { return sum(mul(y, constant(w))); }

}  // namespace detail

// Gradient checks for every differentiable primitive, each loss, and one
// end-to-end forward + loss through a small GDD network.
inline std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 0, double op_tolerance = 1e-5,
                                                        double end_to_end_tolerance = 1e-4) {
    using detail::project;
    using detail::random_tensor;
    Rng rng(seed);
    std::vector<GradCheckResult> results;
    const Shape s{2, 4, 4};

    auto check = [&](std::string name, std::vector<Parameter<double>> params, std::function<Node<double>()> fn,
                     std::size_t max_entries = 0) {
        GradCheckResult r{std::move(name), 0.0, max_entries ? end_to_end_tolerance : op_tolerance, 0};
        r.max_error = gradient_check<double>(params, fn, max_entries, seed, &r.entries);
        results.push_back(std::move(r));
    };
    auto param = [&](const char* name, const Shape& shape, double lo = -1.0, double hi = 1.0) {
        return Parameter<double>(name, random_tensor(rng, shape, lo, hi));
    };

    {
        auto a = param("a", s), b = param("b", s);
        auto w = random_tensor(rng, s);
        check("add", {a, b}, [=] { return project(add(a.node(), b.node()), w); });
        check("sub", {a, b}, [=] { return project(sub(a.node(), b.node()), w); });
        check("mul", {a, b}, [=] { return project(mul(a.node(), b.node()), w); });
        check("scalar_mul", {a}, [=] { return project(scalar_mul(a.node(), 2.5), w); });
        check("leaky_relu", {a}, [=] { return project(leaky_relu(a.node(), 0.1), w); });
        check("sigmoid", {a}, [=] { return project(sigmoid(a.node()), w); });
        check("sum", {a}, [=] { return sum(a.node()); });
        check("abs_sum", {a}, [=] { return abs_sum(a.node()); });
        check("square_sum", {a}, [=] { return square_sum(a.node()); });
        auto wc = random_tensor(rng, Shape{4, 4, 4});
        check("concat_channels", {a, b}, [=] { return project(concat_channels<double>({a.node(), b.node()}), wc); });
        auto d = param("d", Shape{2, 1, 1});
        check("scale_channels", {a, d}, [=] { return project(scale_channels(a.node(), d.node()), w); });
        auto gain = param("gain", Shape{2, 1, 1}, 0.5, 1.5), shift = param("shift", Shape{2, 1, 1});
        check("channel_norm", {a, gain, shift},
              [=] { return project(channel_norm(a.node(), gain.node(), shift.node(), 1e-6), w); });
        auto w8 = random_tensor(rng, Shape{2, 8, 8});
        check("bilinear_upsample2x", {a}, [=] { return project(bilinear_upsample2x(a.node()), w8); });
        auto wg = random_tensor(rng, Shape{4, 4, 4});
        check("image_gradient", {a}, [=] { return project(image_gradient(a.node()), wg); });
    }
    for (std::size_t k : {std::size_t{1}, std::size_t{3}}) {
        for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
            auto x = param("x", s), wt = param("w", Shape{3, 2, k * k}), bias = param("b", Shape{3, 1, 1});
            auto w = random_tensor(rng, Shape{3, 4 / stride, 4 / stride});
            check("conv2d_k" + std::to_string(k) + "_s" + std::to_string(stride), {x, wt, bias},
                  [=] { return project(conv2d(x.node(), wt.node(), bias.node(), stride), w); });
        }
    }
    {
        auto x = param("x", Shape{3, 8, 8}, 0.0, 1.0);
        for (auto kind : {DownsampleKind::block_average, DownsampleKind::bicubic, DownsampleKind::gaussian}) {
            const SpatialDownsampler down(kind, 2);
            auto w = random_tensor(rng, Shape{3, 4, 4});
            check(std::string("downsample_") + to_string(kind), {x}, [=] { return project(down.apply(x.node()), w); });
        }
        const auto r = SpectralResponse::contiguous_groups(3, 2);
        auto w = random_tensor(rng, Shape{2, 8, 8});
        check("spectral_response", {x}, [=] { return project(r.apply(x.node()), w); });
    }
    {
        auto f = param("f", Shape{3, 4, 4}), src = param("src", Shape{2, 4, 4});
        Rng init(seed + 1);
        std::vector<Parameter<double>> sink;
        detail::LayerFactory<double> factory(init, sink);
        auto gate = factory.conv("gate", 2, 3, 1);
        auto w = random_tensor(rng, Shape{3, 4, 4});
        check("uru", {f, src, gate.weight, gate.bias}, [=] { return project(uru(f.node(), src.node(), gate, 0.1), w); });
        check("fru", {f, src, gate.weight, gate.bias}, [=] { return project(fru(f.node(), src.node(), gate, 0.1), w); });
    }
    {
        auto x = param("x", Shape{4, 8, 8}, 0.0, 1.0);
        const auto y = random_tensor(rng, Shape{4, 4, 4}, 0.0, 1.0);
        const auto g = random_tensor(rng, Shape{2, 8, 8}, 0.0, 1.0);
        const SpatialDownsampler block(DownsampleKind::block_average, 2), cubic(DownsampleKind::bicubic, 2);
        const auto r = SpectralResponse::contiguous_groups(4, 2);
        check("hs_sr_loss", {x}, [=] { return hs_sr_loss(x.node(), y, g, block, r, 0.7).total; });
        const auto pan = expand_channels(random_tensor(rng, Shape{1, 8, 8}, 0.0, 1.0), 4);
        auto d = param("d", Shape{4, 1, 1}, 0.5, 1.5);
        check("pansharpen_loss", {x, d}, [=] { return pansharpen_loss(x.node(), y, pan, cubic, d.node(), 0.7).total; });
        const auto yd = random_tensor(rng, Shape{4, 8, 8}, 0.0, 1.0);
        check("denoise_loss", {x}, [=] { return denoise_loss(x.node(), yd).total; });
    }
    {
        const Shape gs{2, 16, 16};
        NetworkConfig net;
        net.scales = 2;
        net.base_channels = 8;
        net.guidance_channels = 8;
        net.seed = seed;
        auto model = build_gdd<double>(net, gs, 4);
        const auto g = random_tensor(rng, gs, 0.0, 1.0);
        const auto y = random_tensor(rng, Shape{4, 8, 8}, 0.0, 1.0);
        const SpatialDownsampler block(DownsampleKind::block_average, 2);
        const auto r = SpectralResponse::contiguous_groups(4, 2);
        check("gdd_end_to_end", model.parameters(),
              [&model, g, y, block, r] { return hs_sr_loss(model.forward(g), y, g, block, r, 1.0).total; }, 20);
    }
    return results;
}

}  // namespace gdd
