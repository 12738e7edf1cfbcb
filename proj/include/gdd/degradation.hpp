#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "gdd/nn_ops.hpp"
#include "gdd/rng.hpp"

namespace gdd {

enum class DownsampleKind { block_average, bicubic, gaussian };

inline const char* to_string(DownsampleKind k) {
    switch (k) {
        case DownsampleKind::block_average: return "block";
        case DownsampleKind::bicubic: return "bicubic";
        case DownsampleKind::gaussian: return "gaussian";
    }
    return "?";
}

// Catmull-Rom family cubic kernel, a = -0.5.
inline double cubic_kernel(double x, double a = -0.5) {
    const double t = std::abs(x);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
    return 0.0;
}

// Half-sample symmetric reflection into [0, n): -1 -> 0, n -> n-1.
inline std::size_t reflect_index(std::ptrdiff_t j, std::size_t n) {
    const auto nn = static_cast<std::ptrdiff_t>(n);
    const std::ptrdiff_t period = 2 * nn;
    j %= period;
    if (j < 0) j += period;
    return static_cast<std::size_t>(j < nn ? j : period - 1 - j);
}

// Spatial downsampling operator S. Separable and linear, realised as one
// dense 1-D matrix per axis.
class SpatialDownsampler {
public:
    SpatialDownsampler(DownsampleKind kind, std::size_t factor) : kind_(kind), factor_(factor) {
        if (factor < 2) throw ValidationError("downsampling factor must be >= 2, got " + std::to_string(factor));
    }

    DownsampleKind kind() const { return kind_; }
    std::size_t factor() const { return factor_; }

    Shape output_shape(const Shape& in) const {
        if (in.height % factor_ != 0 || in.width % factor_ != 0) {
            throw ShapeError("downsample: spatial size " + std::to_string(in.height) + "x" + std::to_string(in.width) +
                             " is not divisible by factor " + std::to_string(factor_));
        }
        return {in.channels, in.height / factor_, in.width / factor_};
    }

    // 1-D operator mapping a length-n axis to length n / factor.
    ResampleMatrix matrix(std::size_t n) const {
        const std::size_t m = n / factor_;
        ResampleMatrix a = ResampleMatrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
        const auto f = static_cast<double>(factor_);
        for (std::size_t i = 0; i < m; ++i) {
            switch (kind_) {
                case DownsampleKind::block_average:
                    for (std::size_t j = i * factor_; j < (i + 1) * factor_; ++j) a(i, j) = 1.0 / f;
                    break;
                case DownsampleKind::bicubic: {
                    // Anti-aliased: kernel stretched by the factor, support 2*factor.
                    const double centre = (static_cast<double>(i) + 0.5) * f - 0.5;
                    const auto lo = static_cast<std::ptrdiff_t>(std::floor(centre - 2.0 * f));
                    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(centre + 2.0 * f));
                    double total = 0.0;
                    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
                        const double w = cubic_kernel((static_cast<double>(j) - centre) / f);
                        if (w == 0.0) continue;
                        a(i, reflect_index(j, n)) += w;
                        total += w;
                    }
                    a.row(i) /= total;
                    break;
                }
                case DownsampleKind::gaussian: {
                    const double sigma = 0.5 * f;
                    const double radius = std::ceil(2.0 * sigma);
                    const double centre = (static_cast<double>(i) + 0.5) * f - 0.5;
                    const auto lo = static_cast<std::ptrdiff_t>(std::ceil(centre - radius));
                    const auto hi = static_cast<std::ptrdiff_t>(std::floor(centre + radius));
                    double total = 0.0;
                    for (std::ptrdiff_t j = lo; j <= hi; ++j) {
                        const double d = static_cast<double>(j) - centre;
                        const double w = std::exp(-d * d / (2.0 * sigma * sigma));
                        a(i, reflect_index(j, n)) += w;
                        total += w;
                    }
                    a.row(i) /= total;
                    break;
                }
            }
        }
        return a;
    }

    template <class Real>
    Tensor<Real> apply(const Tensor<Real>& x) const {
        output_shape(x.shape());
        return separable_map(x, matrix(x.height()), matrix(x.width()));
    }

    template <class Real>
    Node<Real> apply(const Node<Real>& x) const {
        output_shape(x.shape());
        return separable_map(x, matrix(x.shape().height), matrix(x.shape().width), "downsample");
    }

private:
    DownsampleKind kind_;
    std::size_t factor_;
};

template <class Real>
Tensor<Real> block_average_downsample(const Tensor<Real>& x, std::size_t factor) {
    return SpatialDownsampler(DownsampleKind::block_average, factor).apply(x);
}

template <class Real>
Tensor<Real> bicubic_downsample(const Tensor<Real>& x, std::size_t factor) {
    return SpatialDownsampler(DownsampleKind::bicubic, factor).apply(x);
}

// Interpolating bicubic upsampling (no anti-aliasing), replicate border.
inline ResampleMatrix bicubic_upsample_matrix(std::size_t n, std::size_t factor) {
    const std::size_t m = n * factor;
    ResampleMatrix a = ResampleMatrix::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
    const auto f = static_cast<double>(factor);
    for (std::size_t o = 0; o < m; ++o) {
        const double src = (static_cast<double>(o) + 0.5) / f - 0.5;
        const auto base = static_cast<std::ptrdiff_t>(std::floor(src));
        for (std::ptrdiff_t j = base - 1; j <= base + 2; ++j) {
            const double w = cubic_kernel(src - static_cast<double>(j));
            const auto idx = std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(n) - 1);
            a(o, idx) += w;
        }
    }
    return a;
}

template <class Real>
Tensor<Real> bicubic_upsample(const Tensor<Real>& x, std::size_t factor) {
    if (factor < 1) throw ValidationError("bicubic_upsample: factor must be >= 1");
    return separable_map(x, bicubic_upsample_matrix(x.height(), factor), bicubic_upsample_matrix(x.width(), factor));
}

// Spectral response R: c x C, row-stochastic, c < C.
class SpectralResponse {
public:
    SpectralResponse(std::size_t out_bands, std::size_t in_bands, std::vector<double> rows)
        : out_bands_(out_bands), in_bands_(in_bands), m_(rows.begin(), rows.end()) {
        if (m_.size() != out_bands * in_bands) throw ValidationError("spectral response: matrix size mismatch");
        if (out_bands == 0 || out_bands >= in_bands) {
            throw ValidationError("spectral response: need 0 < c < C, got c=" + std::to_string(out_bands) +
                                  ", C=" + std::to_string(in_bands));
        }
        for (std::size_t r = 0; r < out_bands; ++r) {
            double total = 0.0;
            for (std::size_t b = 0; b < in_bands; ++b) {
                const double v = m_[r * in_bands + b];
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    throw ValidationError("spectral response: row " + std::to_string(r) + " has a negative or non-finite entry");
                }
                total += v;
            }
            if (std::abs(total - 1.0) > 1e-9) {
                throw ValidationError("spectral response: row " + std::to_string(r) + " sums to " + std::to_string(total));
            }
        }
    }

    // Contiguous equal-width band groups, e.g. 8 -> 3 gives sizes 3/3/2.
    static SpectralResponse contiguous_groups(std::size_t in_bands, std::size_t out_bands) {
        if (out_bands == 0 || out_bands >= in_bands) {
            throw ValidationError("contiguous_groups: need 0 < c < C");
        }
        const std::size_t width = (in_bands + out_bands - 1) / out_bands;
        std::vector<double> m(out_bands * in_bands, 0.0);
        for (std::size_t r = 0; r < out_bands; ++r) {
            const std::size_t lo = r * width;
            const std::size_t hi = std::min(in_bands, lo + width);
            if (lo >= hi) throw ValidationError("contiguous_groups: empty group");
            for (std::size_t b = lo; b < hi; ++b) m[r * in_bands + b] = 1.0 / static_cast<double>(hi - lo);
        }
        return {out_bands, in_bands, std::move(m)};
    }

    // One row averaging every band (a synthetic panchromatic response).
    static SpectralResponse band_mean(std::size_t in_bands) {
        return {1, in_bands, std::vector<double>(in_bands, 1.0 / static_cast<double>(in_bands))};
    }

    std::size_t out_bands() const { return out_bands_; }
    std::size_t in_bands() const { return in_bands_; }
    double operator()(std::size_t r, std::size_t b) const { return m_[r * in_bands_ + b]; }
    std::vector<double> coefficients() const { return {m_.begin(), m_.end()}; }

    template <class Real>
    Tensor<Real> apply(const Tensor<Real>& x) const {
        check(x.shape());
        Tensor<Real> out(Shape{out_bands_, x.height(), x.width()});
        project(x.raw(), out.raw(), x.shape().plane());
        return out;
    }

    template <class Real>
    Node<Real> apply(const Node<Real>& x) const {
        check(x.shape());
        Tensor<Real> out = apply(x.value());
        const std::size_t plane = x.shape().plane();
        return make_node<Real>(std::move(out), {x}, "spectral_response", [this_m = m_, c = out_bands_, cc = in_bands_,
                                                                          plane](NodeState<Real>& self) {
            Eigen::Map<const RowMatrix<double>> r(this_m.data(), c, cc);
            const RowMatrix<Real> rt = r.transpose().cast<Real>();
            Eigen::Map<const RowMatrix<Real>> dy(self.grad.raw(), c, plane);
            Eigen::Map<RowMatrix<Real>> dx(self.parents[0]->ensure_grad().raw(), cc, plane);
            dx.noalias() += rt * dy;
        });
    }

private:
    void check(const Shape& s) const {
        if (s.channels != in_bands_) {
            throw ShapeError("spectral response expects " + std::to_string(in_bands_) + " bands, got " + to_string(s));
        }
    }

    template <class Real>
    void project(const Real* x, Real* y, std::size_t plane) const {
        Eigen::Map<const RowMatrix<double>> r(m_.data(), out_bands_, in_bands_);
        const RowMatrix<Real> rr = r.cast<Real>();
        Eigen::Map<const RowMatrix<Real>> xm(x, in_bands_, plane);
        Eigen::Map<RowMatrix<Real>> ym(y, out_bands_, plane);
        ym.noalias() = rr * xm;
    }

    std::size_t out_bands_;
    std::size_t in_bands_;
    AlignedVector<double> m_;
};

template <class Real>
Tensor<Real> apply_spectral_response(const Tensor<Real>& x, const SpectralResponse& r) {
    return r.apply(x);
}

// Forward differences: channels [0, C) along width, [C, 2C) along height.
// The last column/row difference is zero (replicate border).
template <class Real>
Tensor<Real> image_gradient(const Tensor<Real>& x) {
    const Shape s = x.shape();
    Tensor<Real> out(Shape{2 * s.channels, s.height, s.width});
    for (std::size_t c = 0; c < s.channels; ++c) {
        for (std::size_t y = 0; y < s.height; ++y) {
            for (std::size_t xx = 0; xx < s.width; ++xx) {
                const Real v = x(c, y, xx);
                out(c, y, xx) = xx + 1 < s.width ? x(c, y, xx + 1) - v : Real(0);
                out(s.channels + c, y, xx) = y + 1 < s.height ? x(c, y + 1, xx) - v : Real(0);
            }
        }
    }
    return out;
}

template <class Real>
Node<Real> image_gradient(const Node<Real>& x) {
    return make_node<Real>(image_gradient(x.value()), {x}, "image_gradient", [](NodeState<Real>& self) {
        auto& gx = self.parents[0]->ensure_grad();
        const Shape s = gx.shape();
        for (std::size_t c = 0; c < s.channels; ++c) {
            for (std::size_t y = 0; y < s.height; ++y) {
                for (std::size_t xx = 0; xx < s.width; ++xx) {
                    if (xx + 1 < s.width) {
                        const Real d = self.grad(c, y, xx);
                        gx(c, y, xx + 1) += d;
                        gx(c, y, xx) -= d;
                    }
                    if (y + 1 < s.height) {
                        const Real d = self.grad(s.channels + c, y, xx);
                        gx(c, y + 1, xx) += d;
                        gx(c, y, xx) -= d;
                    }
                }
            }
        }
    });
}

template <class Real>
struct WaldTriplet {
    Tensor<Real> input;      // Y
    Tensor<Real> guidance;   // G
    Tensor<Real> reference;  // X*
};

// Reduced-resolution benchmark: Y = S(X*), guidance kept at full resolution.
template <class Real>
WaldTriplet<Real> wald_protocol(const Tensor<Real>& hr_image, const Tensor<Real>& hr_guidance, std::size_t factor,
                                DownsampleKind kind) {
    SpatialDownsampler s(kind, factor);
    if (hr_guidance.height() != hr_image.height() || hr_guidance.width() != hr_image.width()) {
        throw ShapeError("wald_protocol: guidance " + to_string(hr_guidance.shape()) + " does not match image " +
                         to_string(hr_image.shape()));
    }
    return {s.apply(hr_image), hr_guidance, hr_image};
}

// Hyperspectral variant: the guidance is the spectral response of X*.
template <class Real>
WaldTriplet<Real> wald_protocol(const Tensor<Real>& hr_image, const SpectralResponse& response, std::size_t factor,
                                DownsampleKind kind) {
    SpatialDownsampler s(kind, factor);
    return {s.apply(hr_image), response.apply(hr_image), hr_image};
}

struct SceneConfig {
    std::size_t rectangles = 10;
    std::size_t details = 12;           // small 2-6 px patches
    double min_rect_fraction = 0.12;
    double max_rect_fraction = 0.45;
    double gradient_amplitude = 0.35;
};

namespace detail {

inline std::vector<double> random_spectrum(Rng& rng, std::size_t channels) {
    const double level = rng.uniform(0.15, 0.85);
    const double amp = rng.uniform(0.0, 0.3);
    const double freq = rng.uniform(0.5, 2.5);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> s(channels);
    for (std::size_t b = 0; b < channels; ++b) {
        const double t = static_cast<double>(b) / static_cast<double>(std::max<std::size_t>(channels, 1));
        s[b] = std::clamp(level + amp * std::sin(freq * std::numbers::pi * t + phase), 0.0, 1.0);
    }
    return s;
}

}  // namespace detail

// Piecewise-smooth scene: shaded background, axis-aligned rectangles with
// their own spectra, plus a few small detail patches. Values in [0, 1].
template <class Real = double>
Tensor<Real> synth_scene(std::uint64_t seed, std::size_t channels, std::size_t size, const SceneConfig& cfg = {}) {
    if (size < 16) throw ValidationError("synth_scene: size must be >= 16, got " + std::to_string(size));
    if (channels == 0) throw ValidationError("synth_scene: channels must be positive");
    Rng rng(seed);
    const auto n = static_cast<double>(size);
    Tensor<double> img(Shape{channels, size, size});

    auto paint = [&](std::size_t y0, std::size_t x0, std::size_t h, std::size_t w, double shade) {
        const auto spectrum = detail::random_spectrum(rng, channels);
        const double gx = rng.uniform(-shade, shade);
        const double gy = rng.uniform(-shade, shade);
        for (std::size_t y = y0; y < std::min(size, y0 + h); ++y) {
            for (std::size_t x = x0; x < std::min(size, x0 + w); ++x) {
                const double u = (static_cast<double>(x) - static_cast<double>(x0)) / n - 0.25;
                const double v = (static_cast<double>(y) - static_cast<double>(y0)) / n - 0.25;
                const double mod = 1.0 + gx * u + gy * v;
                for (std::size_t b = 0; b < channels; ++b) img(b, y, x) = spectrum[b] * mod;
            }
        }
    };

    paint(0, 0, size, size, cfg.gradient_amplitude * 2.0);
    for (std::size_t r = 0; r < cfg.rectangles; ++r) {
        const auto h = static_cast<std::size_t>(n * rng.uniform(cfg.min_rect_fraction, cfg.max_rect_fraction));
        const auto w = static_cast<std::size_t>(n * rng.uniform(cfg.min_rect_fraction, cfg.max_rect_fraction));
        const std::size_t y0 = rng.below(size - std::min(h, size - 1));
        const std::size_t x0 = rng.below(size - std::min(w, size - 1));
        paint(y0, x0, std::max<std::size_t>(h, 1), std::max<std::size_t>(w, 1), cfg.gradient_amplitude);
    }
    for (std::size_t d = 0; d < cfg.details; ++d) {
        const std::size_t h = 2 + rng.below(5);
        const std::size_t w = 2 + rng.below(5);
        paint(rng.below(size - h), rng.below(size - w), h, w, 0.0);
    }
    for (auto& v : img.data()) v = std::clamp(v, 0.0, 1.0);
    return img.cast<Real>();
}

}  // namespace gdd
