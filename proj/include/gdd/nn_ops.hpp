#pragma once

#include <Eigen/Core>
#include <cmath>
#include <memory>
#include <vector>

#include "gdd/autodiff.hpp"

namespace gdd {

template <class Real>
using RowMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Dense 1-D resampling operator: output index i reads input j with weight (i, j).
using ResampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct ConvGeometry {
    std::size_t in_channels, out_channels, kernel, stride, pad;
    std::size_t in_h, in_w, out_h, out_w;
};

template <class Real>
void im2col(const Real* x, const ConvGeometry& g, Real* col) {
    const std::size_t plane_out = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        const Real* xc = x + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                Real* row = col + ((c * g.kernel + ky) * g.kernel + kx) * plane_out;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    Real* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) {
                        std::fill(dst, dst + g.out_w, Real(0));
                        continue;
                    }
                    const Real* src = xc + iy * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) ? Real(0) : src[ix];
                    }
                }
            }
        }
    }
}

template <class Real>
void col2im_add(const Real* col, const ConvGeometry& g, Real* x) {
    const std::size_t plane_out = g.out_h * g.out_w;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
        Real* xc = x + c * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx) {
                const Real* row = col + ((c * g.kernel + ky) * g.kernel + kx) * plane_out;
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
                    Real* dst = xc + iy * g.in_w;
                    const Real* src = row + oy * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_w)) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 2-D convolution with zero "same" padding (k/2). Weight shape is
// O x C x (k*k), bias O x 1 x 1. Stride 2 halves the spatial extent.
template <class Real>
Node<Real> conv2d(const Node<Real>& x, const Node<Real>& weight, const Node<Real>& bias, std::size_t stride = 1) {
    const Shape xs = x.shape();
    const Shape ws = weight.shape();
    const auto kernel = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(ws.width))));
    if ((kernel != 1 && kernel != 3) || kernel * kernel != ws.width || ws.height != xs.channels) {
        throw ShapeError("conv2d: weight " + to_string(ws) + " incompatible with input " + to_string(xs) +
                         " (expected O x " + std::to_string(xs.channels) + " x k*k, k in {1,3})");
    }
    if (bias.shape() != Shape{ws.channels, 1, 1}) {
        throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " does not match " + std::to_string(ws.channels) +
                         " output channels");
    }
    if (stride != 1 && stride != 2) throw ShapeError("conv2d: stride must be 1 or 2");
    detail::ConvGeometry g{xs.channels, ws.channels, kernel, stride, kernel / 2, xs.height, xs.width, 0, 0};
    g.out_h = (g.in_h + 2 * g.pad - kernel) / stride + 1;
    g.out_w = (g.in_w + 2 * g.pad - kernel) / stride + 1;
    const std::size_t plane_out = g.out_h * g.out_w;
    const std::size_t depth = g.in_channels * kernel * kernel;
    const bool direct = kernel == 1 && stride == 1;

    std::shared_ptr<AlignedVector<Real>> col;
    const Real* col_ptr = x.value().raw();
    if (!direct) {
        col = std::make_shared<AlignedVector<Real>>(depth * plane_out);
        detail::im2col(x.value().raw(), g, col->data());
        col_ptr = col->data();
    }

    Tensor<Real> out(Shape{g.out_channels, g.out_h, g.out_w});
    {
        Eigen::Map<const RowMatrix<Real>> w(weight.value().raw(), g.out_channels, depth);
        Eigen::Map<const RowMatrix<Real>> cm(col_ptr, depth, plane_out);
        Eigen::Map<RowMatrix<Real>> y(out.raw(), g.out_channels, plane_out);
        y.noalias() = w * cm;
        for (std::size_t o = 0; o < g.out_channels; ++o) y.row(o).array() += bias.value()[o];
    }

    return make_node<Real>(std::move(out), {x, weight, bias}, "conv2d", [g, col, depth, direct](NodeState<Real>& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        auto& pb = *self.parents[2];
        const std::size_t plane_out = g.out_h * g.out_w;
        Eigen::Map<const RowMatrix<Real>> dy(self.grad.raw(), g.out_channels, plane_out);
        const Real* col_ptr = direct ? px.value.raw() : col->data();
        Eigen::Map<const RowMatrix<Real>> cm(col_ptr, depth, plane_out);
        if (pw.requires_grad) {
            Eigen::Map<RowMatrix<Real>> dw(pw.ensure_grad().raw(), g.out_channels, depth);
            dw.noalias() += dy * cm.transpose();
        }
        if (pb.requires_grad) {
            auto& db = pb.ensure_grad();
            for (std::size_t o = 0; o < g.out_channels; ++o) db[o] += dy.row(o).sum();
        }
        if (px.requires_grad) {
            Eigen::Map<const RowMatrix<Real>> w(pw.value.raw(), g.out_channels, depth);
            if (direct) {
                Eigen::Map<RowMatrix<Real>> dx(px.ensure_grad().raw(), depth, plane_out);
                dx.noalias() += w.transpose() * dy;
            } else {
                RowMatrix<Real> dcol = w.transpose() * dy;
                detail::col2im_add(dcol.data(), g, px.ensure_grad().raw());
            }
        }
    });
}

// out_c = rows * X_c * cols^T for every channel. Linear; the backward pass
// applies the transposed operator.
template <class Real>
Tensor<Real> separable_map(const Tensor<Real>& x, const ResampleMatrix& rows, const ResampleMatrix& cols) {
    if (static_cast<std::size_t>(rows.cols()) != x.height() || static_cast<std::size_t>(cols.cols()) != x.width()) {
        throw ShapeError("separable_map: operator expects " + std::to_string(rows.cols()) + "x" +
                         std::to_string(cols.cols()) + " planes, got " + to_string(x.shape()));
    }
    const RowMatrix<Real> r = rows.cast<Real>();
    const RowMatrix<Real> ct = cols.cast<Real>().transpose();
    Tensor<Real> out(Shape{x.channels(), static_cast<std::size_t>(rows.rows()), static_cast<std::size_t>(cols.rows())});
    for (std::size_t c = 0; c < x.channels(); ++c) {
        Eigen::Map<const RowMatrix<Real>> xc(x.raw() + c * x.shape().plane(), x.height(), x.width());
        Eigen::Map<RowMatrix<Real>> yc(out.raw() + c * out.shape().plane(), out.height(), out.width());
        RowMatrix<Real> tmp = xc * ct;
        yc.noalias() = r * tmp;
    }
    return out;
}

template <class Real>
Node<Real> separable_map(const Node<Real>& x, const ResampleMatrix& rows, const ResampleMatrix& cols,
                         const char* op = "separable_map") {
    Tensor<Real> out = separable_map(x.value(), rows, cols);
    // The transposed operator maps output planes back to input planes.
    return make_node<Real>(std::move(out), {x}, op, [rows, cols](NodeState<Real>& self) {
        ResampleMatrix rt = rows.transpose();
        ResampleMatrix ctt = cols.transpose();
        Tensor<Real> back = separable_map(self.grad, rt, ctt);
        auto& g = self.parents[0]->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += back[i];
    });
}

// 2x bilinear interpolation weights, half-pixel centres (align_corners=false),
// source coordinate clamped at the borders.
inline ResampleMatrix bilinear_upsample_matrix(std::size_t n) {
    ResampleMatrix m = ResampleMatrix::Zero(static_cast<Eigen::Index>(2 * n), static_cast<Eigen::Index>(n));
    for (std::size_t o = 0; o < 2 * n; ++o) {
        const double src = std::max(0.0, (static_cast<double>(o) + 0.5) / 2.0 - 0.5);
        const auto i0 = static_cast<std::size_t>(std::floor(src));
        const std::size_t i1 = std::min(i0 + 1, n - 1);
        const double frac = src - static_cast<double>(i0);
        m(o, i0) += 1.0 - frac;
        m(o, i1) += frac;
    }
    return m;
}

template <class Real>
Node<Real> bilinear_upsample2x(const Node<Real>& x) {
    if (x.shape().height == 0 || x.shape().width == 0) throw ShapeError("bilinear_upsample2x: empty input");
    return separable_map(x, bilinear_upsample_matrix(x.shape().height), bilinear_upsample_matrix(x.shape().width),
                         "bilinear_upsample2x");
}

// Per-channel spatial standardisation (population variance + eps) followed by
// a learnable per-channel gain and shift (each C x 1 x 1).
template <class Real>
Node<Real> channel_norm(const Node<Real>& x, const Node<Real>& gain, const Node<Real>& shift, Real eps = Real(1e-6)) {
    const Shape xs = x.shape();
    if (xs.plane() < 2) throw ShapeError("channel_norm: spatial extent " + to_string(xs) + " has a single pixel");
    if (gain.shape() != Shape{xs.channels, 1, 1} || shift.shape() != Shape{xs.channels, 1, 1}) {
        throw ShapeError("channel_norm: gain/shift must be " + std::to_string(xs.channels) + "x1x1");
    }
    const std::size_t n = xs.plane();
    auto normalized = std::make_shared<Tensor<Real>>(xs);
    auto inv_std = std::make_shared<std::vector<Real>>(xs.channels);
    Tensor<Real> out(xs);
    for (std::size_t c = 0; c < xs.channels; ++c) {
        const Real* src = x.value().raw() + c * n;
        Real mean = 0;
        for (std::size_t i = 0; i < n; ++i) mean += src[i];
        mean /= static_cast<Real>(n);
        // One correction pass; makes the mean exact for constant channels.
        Real residual = 0;
        for (std::size_t i = 0; i < n; ++i) residual += src[i] - mean;
        mean += residual / static_cast<Real>(n);
        Real var = 0;
        for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
        var /= static_cast<Real>(n);
        const Real is = Real(1) / std::sqrt(var + eps);
        (*inv_std)[c] = is;
        const Real gc = gain.value()[c];
        const Real bc = shift.value()[c];
        Real* xh = normalized->raw() + c * n;
        Real* dst = out.raw() + c * n;
        for (std::size_t i = 0; i < n; ++i) {
            xh[i] = (src[i] - mean) * is;
            dst[i] = gc * xh[i] + bc;
        }
    }
    return make_node<Real>(std::move(out), {x, gain, shift}, "channel_norm", [normalized, inv_std, n](NodeState<Real>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const std::size_t channels = px.value.channels();
        for (std::size_t c = 0; c < channels; ++c) {
            const Real* dy = self.grad.raw() + c * n;
            const Real* xh = normalized->raw() + c * n;
            Real sum_dy = 0;
            Real sum_dy_xh = 0;
            for (std::size_t i = 0; i < n; ++i) {
                sum_dy += dy[i];
                sum_dy_xh += dy[i] * xh[i];
            }
            if (pg.requires_grad) pg.ensure_grad()[c] += sum_dy_xh;
            if (pb.requires_grad) pb.ensure_grad()[c] += sum_dy;
            if (px.requires_grad) {
                const Real scale = pg.value[c] * (*inv_std)[c] / static_cast<Real>(n);
                Real* dx = px.ensure_grad().raw() + c * n;
                const auto nr = static_cast<Real>(n);
                for (std::size_t i = 0; i < n; ++i) dx[i] += scale * (nr * dy[i] - sum_dy - xh[i] * sum_dy_xh);
            }
        }
    });
}

}  // namespace gdd
