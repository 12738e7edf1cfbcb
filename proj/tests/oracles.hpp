#pragma once

// Plain-loop metric formulas, written without the library's helpers so the
// unit tests and the acceptance run compare against something independent.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "gdd/tensor.hpp"

namespace gdd::test::oracle {

inline double oracle_rmse(const Tensor<double>& x, const Tensor<double>& r) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t y = 0; y < x.height(); ++y)
            for (std::size_t i = 0; i < x.width(); ++i) s += std::pow(x(c, y, i) - r(c, y, i), 2);
    return std::sqrt(s / static_cast<double>(x.size()));
}

inline double oracle_sa(const Tensor<double>& x, const Tensor<double>& r) {
    double total = 0.0;
    for (std::size_t y = 0; y < x.height(); ++y)
        for (std::size_t i = 0; i < x.width(); ++i) {
            double d = 0, a = 0, b = 0;
            for (std::size_t c = 0; c < x.channels(); ++c) {
                d += x(c, y, i) * r(c, y, i);
                a += x(c, y, i) * x(c, y, i);
                b += r(c, y, i) * r(c, y, i);
            }
            total += std::acos(d / std::sqrt(a * b));
        }
    return total / static_cast<double>(x.height() * x.width()) * 180.0 / std::numbers::pi;
}

inline double oracle_ergas(const Tensor<double>& x, const Tensor<double>& r, double ratio) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.channels(); ++c) {
        double se = 0, m = 0;
        for (std::size_t y = 0; y < x.height(); ++y)
            for (std::size_t i = 0; i < x.width(); ++i) {
                se += std::pow(x(c, y, i) - r(c, y, i), 2);
                m += r(c, y, i);
            }
        const double n = static_cast<double>(x.height() * x.width());
        s += (se / n) / ((m / n) * (m / n));
    }
    return 100.0 / ratio * std::sqrt(s / static_cast<double>(x.channels()));
}

inline double oracle_scc(const Tensor<double>& x, const Tensor<double>& r) {
    auto lap = [](const Tensor<double>& t, std::size_t c, std::size_t y, std::size_t i) {
        return 8.0 * t(c, y, i) - t(c, y - 1, i - 1) - t(c, y - 1, i) - t(c, y - 1, i + 1) - t(c, y, i - 1) -
               t(c, y, i + 1) - t(c, y + 1, i - 1) - t(c, y + 1, i) - t(c, y + 1, i + 1);
    };
    double total = 0.0;
    for (std::size_t c = 0; c < x.channels(); ++c) {
        std::vector<double> a, b;
        for (std::size_t y = 1; y + 1 < x.height(); ++y)
            for (std::size_t i = 1; i + 1 < x.width(); ++i) {
                a.push_back(lap(x, c, y, i));
                b.push_back(lap(r, c, y, i));
            }
        double ma = 0, mb = 0;
        for (std::size_t k = 0; k < a.size(); ++k) ma += a[k], mb += b[k];
        ma /= static_cast<double>(a.size());
        mb /= static_cast<double>(b.size());
        double sab = 0, saa = 0, sbb = 0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            sab += (a[k] - ma) * (b[k] - mb);
            saa += (a[k] - ma) * (a[k] - ma);
            sbb += (b[k] - mb) * (b[k] - mb);
        }
        total += sab / std::sqrt(saa * sbb);
    }
    return total / static_cast<double>(x.channels());
}

// Wang-Bovik index of one whole plane.
inline double oracle_uiqi(std::span<const double> a, std::span<const double> b) {
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    double va = 0, vb = 0, c = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        va += (a[i] - ma) * (a[i] - ma);
        vb += (b[i] - mb) * (b[i] - mb);
        c += (a[i] - ma) * (b[i] - mb);
    }
    return 4.0 * (c / n) * ma * mb / ((va / n + vb / n) * (ma * ma + mb * mb));
}

}  // namespace gdd::test::oracle
