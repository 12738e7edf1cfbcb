#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gdd {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Eigen picks vectorised code paths by buffer address; fixing the alignment
// keeps results bit-identical from one allocation to the next.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

template <class T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

struct Shape {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    constexpr std::size_t plane() const { return height * width; }
    constexpr std::size_t numel() const { return channels * height * width; }
    friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

inline std::string to_string(const Shape& s) {
    return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" + std::to_string(s.width);
}

inline void require_same_shape(const Shape& a, const Shape& b, std::string_view op) {
    if (a != b) {
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
    }
}

// Dense channel-major raster, row-major inside each channel plane.
template <class Real>
class Tensor {
public:
    using value_type = Real;

    Tensor() = default;

    explicit Tensor(Shape shape, Real fill = Real(0)) : shape_(shape), data_(shape.numel(), fill) {}

    Tensor(Shape shape, const std::vector<Real>& data) : shape_(shape), data_(data.begin(), data.end()) {
        if (data_.size() != shape_.numel()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                             to_string(shape_));
        }
    }

    static Tensor scalar(Real v) { return Tensor(Shape{1, 1, 1}, v); }

    const Shape& shape() const { return shape_; }
    std::size_t channels() const { return shape_.channels; }
    std::size_t height() const { return shape_.height; }
    std::size_t width() const { return shape_.width; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    Real& operator[](std::size_t i) { return data_[i]; }
    const Real& operator[](std::size_t i) const { return data_[i]; }

    Real& operator()(std::size_t c, std::size_t y, std::size_t x) {
        return data_[(c * shape_.height + y) * shape_.width + x];
    }
    const Real& operator()(std::size_t c, std::size_t y, std::size_t x) const {
        return data_[(c * shape_.height + y) * shape_.width + x];
    }

    std::span<Real> data() { return data_; }
    std::span<const Real> data() const { return data_; }
    Real* raw() { return data_.data(); }
    const Real* raw() const { return data_.data(); }

    std::span<Real> channel(std::size_t c) { return std::span<Real>(data_).subspan(c * shape_.plane(), shape_.plane()); }
    std::span<const Real> channel(std::size_t c) const {
        return std::span<const Real>(data_).subspan(c * shape_.plane(), shape_.plane());
    }

    Real item() const {
        if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(shape_));
        return data_[0];
    }

    void fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
    }

    template <class Other>
    Tensor<Other> cast() const {
        std::vector<Other> out(data_.size());
        std::transform(data_.begin(), data_.end(), out.begin(), [](Real v) { return static_cast<Other>(v); });
        return Tensor<Other>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_{};
    AlignedVector<Real> data_;
};

// Plain (non-differentiable) helpers used by metrics and data generation.
template <class Real>
Tensor<Real> operator-(const Tensor<Real>& a, const Tensor<Real>& b) {
    require_same_shape(a.shape(), b.shape(), "subtract");
    Tensor<Real> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

template <class Real>
Tensor<Real> operator+(const Tensor<Real>& a, const Tensor<Real>& b) {
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor<Real> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <class Real>
Tensor<Real> operator*(Real s, const Tensor<Real>& a) {
    Tensor<Real> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = s * a[i];
    return out;
}

// Replicates a single-band image to `channels` bands.
template <class Real>
Tensor<Real> expand_channels(const Tensor<Real>& band, std::size_t channels) {
    if (band.channels() != 1) {
        throw ShapeError("expand_channels: expected a single-band image, got " + to_string(band.shape()));
    }
    Tensor<Real> out(Shape{channels, band.height(), band.width()});
    for (std::size_t c = 0; c < channels; ++c) std::copy(band.data().begin(), band.data().end(), out.channel(c).begin());
    return out;
}

template <class Real>
Tensor<Real> select_channels(const Tensor<Real>& x, std::span<const std::size_t> bands) {
    Tensor<Real> out(Shape{bands.size(), x.height(), x.width()});
    for (std::size_t i = 0; i < bands.size(); ++i) {
        if (bands[i] >= x.channels()) throw ShapeError("select_channels: band index out of range");
        auto src = x.channel(bands[i]);
        std::copy(src.begin(), src.end(), out.channel(i).begin());
    }
    return out;
}

}  // namespace gdd
