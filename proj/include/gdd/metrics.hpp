#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gdd/degradation.hpp"
#include "gdd/tensor.hpp"

namespace gdd {

inline constexpr std::array<std::string_view, 10> kMetricOrder{"rmse", "psnr", "sa_degrees", "ergas", "ssim",
                                                               "q2n",  "scc",  "d_lambda",   "d_s",   "qnr"};

struct MetricReport {
    std::map<std::string, double> values;
    std::size_t scale_ratio = 1;
    double data_range = 1.0;

    void set(std::string_view name, double v) { values[std::string(name)] = v; }
    std::optional<double> get(std::string_view name) const {
        auto it = values.find(std::string(name));
        if (it == values.end()) return std::nullopt;
        return it->second;
    }
};

template <class Real>
double rmse(const Tensor<Real>& x, const Tensor<Real>& ref) {
    require_same_shape(x.shape(), ref.shape(), "rmse");
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(ref[i]);
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(x.size()));
}

// +infinity when the images are identical.
template <class Real>
double psnr(const Tensor<Real>& x, const Tensor<Real>& ref, double range = 1.0) {
    if (!(range > 0.0)) throw ValidationError("psnr: data range must be positive");
    const double e = rmse(x, ref);
    if (e == 0.0) return std::numeric_limits<double>::infinity();
    return 20.0 * std::log10(range / e);
}

// Mean per-pixel spectral angle in degrees; pixels with a near-zero spectrum
// on either side are skipped.
template <class Real>
double spectral_angle(const Tensor<Real>& x, const Tensor<Real>& ref) {
    require_same_shape(x.shape(), ref.shape(), "spectral_angle");
    if (x.channels() < 2) throw ValidationError("spectral_angle: needs at least 2 bands");
    const std::size_t plane = x.shape().plane();
    double acc = 0.0;
    std::size_t counted = 0;
    for (std::size_t p = 0; p < plane; ++p) {
        double dot = 0.0, nx = 0.0, nr = 0.0;
        for (std::size_t c = 0; c < x.channels(); ++c) {
            const double a = x[c * plane + p];
            const double b = ref[c * plane + p];
            dot += a * b;
            nx += a * a;
            nr += b * b;
        }
        nx = std::sqrt(nx);
        nr = std::sqrt(nr);
        if (nx < 1e-12 || nr < 1e-12) continue;
        acc += std::acos(std::clamp(dot / (nx * nr), -1.0, 1.0));
        ++counted;
    }
    if (counted == 0) throw NumericalError("spectral_angle: every pixel has a degenerate spectrum");
    return acc / static_cast<double>(counted) * 180.0 / std::numbers::pi;
}

template <class Real>
double ergas(const Tensor<Real>& x, const Tensor<Real>& ref, double ratio) {
    require_same_shape(x.shape(), ref.shape(), "ergas");
    if (!(ratio >= 1.0)) throw ValidationError("ergas: resolution ratio must be >= 1");
    const std::size_t plane = x.shape().plane();
    double acc = 0.0;
    for (std::size_t c = 0; c < x.channels(); ++c) {
        double se = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < plane; ++i) {
            const double d = static_cast<double>(x[c * plane + i]) - static_cast<double>(ref[c * plane + i]);
            se += d * d;
            mean += ref[c * plane + i];
        }
        mean /= static_cast<double>(plane);
        if (std::abs(mean) < 1e-12) throw NumericalError("ergas: reference band " + std::to_string(c) + " has zero mean");
        const double band_rmse = std::sqrt(se / static_cast<double>(plane));
        acc += (band_rmse / mean) * (band_rmse / mean);
    }
    return 100.0 / ratio * std::sqrt(acc / static_cast<double>(x.channels()));
}

// Windowed SSIM (Gaussian window 11x11, sigma 1.5, valid positions only),
// averaged over bands. The window shrinks to the largest odd size that fits.
template <class Real>
double ssim(const Tensor<Real>& x, const Tensor<Real>& ref, double range = 1.0) {
    require_same_shape(x.shape(), ref.shape(), "ssim");
    if (x.height() < 8 || x.width() < 8) throw ShapeError("ssim: image " + to_string(x.shape()) + " is smaller than 8x8");
    std::size_t win = std::min<std::size_t>({11, x.height(), x.width()});
    if (win % 2 == 0) --win;
    const auto half = static_cast<double>(win / 2);
    std::vector<double> w(win * win);
    double wsum = 0.0;
    for (std::size_t i = 0; i < win; ++i) {
        for (std::size_t j = 0; j < win; ++j) {
            const double dy = static_cast<double>(i) - half;
            const double dx = static_cast<double>(j) - half;
            w[i * win + j] = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
            wsum += w[i * win + j];
        }
    }
    for (auto& v : w) v /= wsum;
    const double c1 = (0.01 * range) * (0.01 * range);
    const double c2 = (0.03 * range) * (0.03 * range);
    double total = 0.0;
    for (std::size_t c = 0; c < x.channels(); ++c) {
        double band = 0.0;
        std::size_t count = 0;
        for (std::size_t y0 = 0; y0 + win <= x.height(); ++y0) {
            for (std::size_t x0 = 0; x0 + win <= x.width(); ++x0) {
                double mx = 0.0, my = 0.0;
                for (std::size_t i = 0; i < win; ++i) {
                    for (std::size_t j = 0; j < win; ++j) {
                        mx += w[i * win + j] * x(c, y0 + i, x0 + j);
                        my += w[i * win + j] * ref(c, y0 + i, x0 + j);
                    }
                }
                double vx = 0.0, vy = 0.0, cxy = 0.0;
                for (std::size_t i = 0; i < win; ++i) {
                    for (std::size_t j = 0; j < win; ++j) {
                        const double a = x(c, y0 + i, x0 + j) - mx;
                        const double b = ref(c, y0 + i, x0 + j) - my;
                        vx += w[i * win + j] * a * a;
                        vy += w[i * win + j] * b * b;
                        cxy += w[i * win + j] * a * b;
                    }
                }
                band += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
        }
        total += band / static_cast<double>(count);
    }
    return total / static_cast<double>(x.channels());
}

namespace hypercomplex {

// Cayley-Dickson product over 2^n real components:
// (a, b)(c, d) = (ac - d*b, da + bc*).
inline std::vector<double> conj(const std::vector<double>& a) {
    std::vector<double> r(a.size());
    r[0] = a[0];
    for (std::size_t i = 1; i < a.size(); ++i) r[i] = -a[i];
    return r;
}

inline std::vector<double> mul(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    if (n == 1) return {a[0] * b[0]};
    const std::size_t h = n / 2;
    const std::vector<double> p(a.begin(), a.begin() + h), q(a.begin() + h, a.end());
    const std::vector<double> r(b.begin(), b.begin() + h), s(b.begin() + h, b.end());
    const auto pr = mul(p, r);
    const auto sq = mul(conj(s), q);
    const auto sp = mul(s, p);
    const auto qr = mul(q, conj(r));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < h; ++i) {
        out[i] = pr[i] - sq[i];
        out[h + i] = sp[i] + qr[i];
    }
    return out;
}

inline double norm(const std::vector<double>& a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

}  // namespace hypercomplex

namespace detail {

inline std::size_t hypercomplex_dim(std::size_t channels) {
    std::size_t d = 1;
    while (d < channels) d *= 2;
    return d;
}

// Q2^n of one block; nullopt when the block is degenerate.
template <class Real>
std::optional<double> q2n_block(const Tensor<Real>& x, const Tensor<Real>& ref, std::size_t y0, std::size_t x0,
                                std::size_t bh, std::size_t bw) {
    const std::size_t dim = hypercomplex_dim(x.channels());
    const auto n = static_cast<double>(bh * bw);
    std::vector<double> m1(dim, 0.0), m2(dim, 0.0);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        for (std::size_t y = y0; y < y0 + bh; ++y) {
            for (std::size_t xx = x0; xx < x0 + bw; ++xx) {
                m1[c] += x(c, y, xx);
                m2[c] += ref(c, y, xx);
            }
        }
        m1[c] /= n;
        m2[c] /= n;
    }
    double v1 = 0.0, v2 = 0.0;
    std::vector<double> cov(dim, 0.0), a(dim, 0.0), b(dim, 0.0);
    for (std::size_t y = y0; y < y0 + bh; ++y) {
        for (std::size_t xx = x0; xx < x0 + bw; ++xx) {
            for (std::size_t c = 0; c < x.channels(); ++c) {
                a[c] = x(c, y, xx) - m1[c];
                b[c] = ref(c, y, xx) - m2[c];
                v1 += a[c] * a[c];
                v2 += b[c] * b[c];
            }
            const auto prod = hypercomplex::mul(a, hypercomplex::conj(b));
            for (std::size_t i = 0; i < dim; ++i) cov[i] += prod[i];
        }
    }
    v1 /= n;
    v2 /= n;
    for (auto& v : cov) v /= n;
    const double nm1 = hypercomplex::norm(m1);
    const double nm2 = hypercomplex::norm(m2);
    const double den = (v1 + v2) * (nm1 * nm1 + nm2 * nm2);
    if (den <= 0.0) return std::nullopt;
    return 4.0 * hypercomplex::norm(cov) * nm1 * nm2 / den;
}

// Classic scalar universal image quality index of one block (signed).
template <class Real>
std::optional<double> uiqi_block(std::span<const Real> a, std::span<const Real> b, std::size_t width, std::size_t y0,
                                 std::size_t x0, std::size_t bh, std::size_t bw) {
    const auto n = static_cast<double>(bh * bw);
    double ma = 0.0, mb = 0.0;
    for (std::size_t y = y0; y < y0 + bh; ++y) {
        for (std::size_t x = x0; x < x0 + bw; ++x) {
            ma += a[y * width + x];
            mb += b[y * width + x];
        }
    }
    ma /= n;
    mb /= n;
    double va = 0.0, vb = 0.0, cab = 0.0;
    for (std::size_t y = y0; y < y0 + bh; ++y) {
        for (std::size_t x = x0; x < x0 + bw; ++x) {
            const double da = a[y * width + x] - ma;
            const double db = b[y * width + x] - mb;
            va += da * da;
            vb += db * db;
            cab += da * db;
        }
    }
    va /= n;
    vb /= n;
    cab /= n;
    const double den = (va + vb) * (ma * ma + mb * mb);
    if (den <= 0.0) return std::nullopt;
    return 4.0 * cab * ma * mb / den;
}

template <class F>
double average_blocks(std::size_t height, std::size_t width, std::size_t block, F&& fn, const char* what) {
    const std::size_t bh = std::min(block, height);
    const std::size_t bw = std::min(block, width);
    double acc = 0.0;
    std::size_t used = 0;
    for (std::size_t y0 = 0; y0 + bh <= height; y0 += bh) {
        for (std::size_t x0 = 0; x0 + bw <= width; x0 += bw) {
            if (auto q = fn(y0, x0, bh, bw)) {
                acc += *q;
                ++used;
            }
        }
    }
    if (used == 0) throw NumericalError(std::string(what) + ": every block is degenerate");
    return acc / static_cast<double>(used);
}

}  // namespace detail

// Q2^n: bands embedded in a 2^ceil(log2 C)-dimensional Cayley-Dickson
// algebra, evaluated on non-overlapping blocks (size clamped to the image)
// and averaged.
template <class Real>
double q2n(const Tensor<Real>& x, const Tensor<Real>& ref, std::size_t block = 32) {
    require_same_shape(x.shape(), ref.shape(), "q2n");
    if (block == 0) throw ValidationError("q2n: block size must be positive");
    return detail::average_blocks(
        x.height(), x.width(), block,
        [&](std::size_t y0, std::size_t x0, std::size_t bh, std::size_t bw) { return detail::q2n_block(x, ref, y0, x0, bh, bw); },
        "q2n");
}

// Scalar universal image quality index of two single planes, block-averaged.
template <class Real>
double uiqi(std::span<const Real> a, std::span<const Real> b, std::size_t height, std::size_t width, std::size_t block = 32) {
    if (a.size() != height * width || b.size() != height * width) throw ShapeError("uiqi: plane size mismatch");
    return detail::average_blocks(
        height, width, block,
        [&](std::size_t y0, std::size_t x0, std::size_t bh, std::size_t bw) {
            return detail::uiqi_block(a, b, width, y0, x0, bh, bw);
        },
        "uiqi");
}

// Pearson correlation of 8-neighbour Laplacian high-pass responses (interior
// pixels), averaged over bands with non-degenerate high-pass.
template <class Real>
double scc(const Tensor<Real>& x, const Tensor<Real>& ref) {
    require_same_shape(x.shape(), ref.shape(), "scc");
    if (x.height() < 3 || x.width() < 3) throw ShapeError("scc: image " + to_string(x.shape()) + " is smaller than 3x3");
    auto highpass = [](const Tensor<Real>& t, std::size_t c, std::size_t y, std::size_t xx) {
        double s = 0.0;
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
                if (dy == 0 && dx == 0) continue;
                s += t(c, static_cast<std::size_t>(static_cast<int>(y) + dy), static_cast<std::size_t>(static_cast<int>(xx) + dx));
            }
        }
        return 8.0 * t(c, y, xx) - s;
    };
    double total = 0.0;
    std::size_t used = 0;
    const std::size_t n = (x.height() - 2) * (x.width() - 2);
    std::vector<double> hx(n), hr(n);
    for (std::size_t c = 0; c < x.channels(); ++c) {
        std::size_t k = 0;
        for (std::size_t y = 1; y + 1 < x.height(); ++y) {
            for (std::size_t xx = 1; xx + 1 < x.width(); ++xx, ++k) {
                hx[k] = highpass(x, c, y, xx);
                hr[k] = highpass(ref, c, y, xx);
            }
        }
        double mx = 0.0, mr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            mx += hx[i];
            mr += hr[i];
        }
        mx /= static_cast<double>(n);
        mr /= static_cast<double>(n);
        double sxx = 0.0, srr = 0.0, sxr = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sxx += (hx[i] - mx) * (hx[i] - mx);
            srr += (hr[i] - mr) * (hr[i] - mr);
            sxr += (hx[i] - mx) * (hr[i] - mr);
        }
        if (sxx <= 0.0 || srr <= 0.0) continue;
        total += sxr / std::sqrt(sxx * srr);
        ++used;
    }
    if (used == 0) throw NumericalError("scc: every band has a constant high-pass response");
    return total / static_cast<double>(used);
}

// Spectral distortion: mean over band pairs of |Q(f_i, f_j) - Q(m_i, m_j)|.
template <class Real>
double d_lambda(const Tensor<Real>& fused, const Tensor<Real>& ms_low, std::size_t block = 32) {
    if (fused.channels() != ms_low.channels()) throw ShapeError("d_lambda: band count mismatch");
    if (fused.channels() < 2) throw ValidationError("d_lambda: needs at least 2 bands");
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < fused.channels(); ++i) {
        for (std::size_t j = i + 1; j < fused.channels(); ++j) {
            const double qf = uiqi(fused.channel(i), fused.channel(j), fused.height(), fused.width(), block);
            const double qm = uiqi(ms_low.channel(i), ms_low.channel(j), ms_low.height(), ms_low.width(), block);
            acc += std::abs(qf - qm);
            ++pairs;
        }
    }
    return acc / static_cast<double>(pairs);
}

// Spatial distortion: mean over bands of |Q(f_b, P) - Q(m_b, P_low)|.
template <class Real>
double d_s(const Tensor<Real>& fused, const Tensor<Real>& ms_low, const Tensor<Real>& pan, const Tensor<Real>& pan_low,
           std::size_t block = 32) {
    if (fused.channels() != ms_low.channels()) throw ShapeError("d_s: band count mismatch");
    if (pan.channels() != 1 || pan_low.channels() != 1) throw ShapeError("d_s: panchromatic images must be single-band");
    if (pan.height() != fused.height() || pan.width() != fused.width() || pan_low.height() != ms_low.height() ||
        pan_low.width() != ms_low.width()) {
        throw ShapeError("d_s: panchromatic sizes do not match the fused / low-resolution images");
    }
    double acc = 0.0;
    for (std::size_t b = 0; b < fused.channels(); ++b) {
        const double qf = uiqi(fused.channel(b), pan.channel(0), fused.height(), fused.width(), block);
        const double qm = uiqi(ms_low.channel(b), pan_low.channel(0), ms_low.height(), ms_low.width(), block);
        acc += std::abs(qf - qm);
    }
    return acc / static_cast<double>(fused.channels());
}

inline double qnr(double d_lambda_value, double d_s_value) { return (1.0 - d_lambda_value) * (1.0 - d_s_value); }

// rmse, psnr, sa, ergas, ssim, q2n, scc against a reference.
template <class Real>
MetricReport full_reference_report(const Tensor<Real>& x, const Tensor<Real>& ref, std::size_t ratio, double range = 1.0) {
    MetricReport r;
    r.scale_ratio = ratio;
    r.data_range = range;
    r.set("rmse", rmse(x, ref));
    r.set("psnr", psnr(x, ref, range));
    if (x.channels() >= 2) r.set("sa_degrees", spectral_angle(x, ref));
    r.set("ergas", ergas(x, ref, static_cast<double>(ratio)));
    if (x.height() >= 8 && x.width() >= 8) r.set("ssim", ssim(x, ref, range));
    r.set("q2n", q2n(x, ref));
    r.set("scc", scc(x, ref));
    return r;
}

// d_lambda, d_s and qnr with no reference; pan_low is derived by bicubic
// downsampling of pan when not supplied.
template <class Real>
void add_no_reference(MetricReport& r, const Tensor<Real>& fused, const Tensor<Real>& ms_low, const Tensor<Real>& pan,
                      std::size_t ratio) {
    const Tensor<Real> pan_low = bicubic_downsample(pan, ratio);
    const double dl = d_lambda(fused, ms_low);
    const double ds = d_s(fused, ms_low, pan, pan_low);
    r.set("d_lambda", dl);
    r.set("d_s", ds);
    r.set("qnr", qnr(dl, ds));
}

}  // namespace gdd
