#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gdd/degradation.hpp"
#include "gdd/metrics.hpp"
#include "gdd/tensor.hpp"
#include "gdd/trace.hpp"

namespace gdd {

// On-disk tensor layout (all little-endian):
//   "GDDT" | u32 version = 1 | u32 ndim = 3 | u32 C, H, W | C*H*W float32
namespace tensor_file {
inline constexpr std::array<char, 4> kMagic{'G', 'D', 'D', 'T'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 4 * 5;
}  // namespace tensor_file

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffU));
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::vector<unsigned char> read_all(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// Shortest round-trippable decimal for a double.
inline std::string format_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// Samples are rounded to float32 (round-to-nearest-even) on write.
template <class Real>
void write_tensor(const std::filesystem::path& path, const Tensor<Real>& t) {
    if (!t.all_finite()) throw ValidationError("write_tensor: tensor contains non-finite samples");
    const Shape s = t.shape();
    if (s.channels == 0 || s.height == 0 || s.width == 0) throw ValidationError("write_tensor: zero dimension");
    const auto limit = std::numeric_limits<std::uint32_t>::max();
    if (s.channels > limit || s.height > limit || s.width > limit) throw ValidationError("write_tensor: dimension overflow");
    std::vector<unsigned char> bytes;
    bytes.reserve(tensor_file::kHeaderBytes + 4 * t.size());
    bytes.insert(bytes.end(), tensor_file::kMagic.begin(), tensor_file::kMagic.end());
    detail::put_u32(bytes, tensor_file::kVersion);
    detail::put_u32(bytes, 3);
    detail::put_u32(bytes, static_cast<std::uint32_t>(s.channels));
    detail::put_u32(bytes, static_cast<std::uint32_t>(s.height));
    detail::put_u32(bytes, static_cast<std::uint32_t>(s.width));
    for (Real v : t.data()) detail::put_u32(bytes, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    detail::write_all(path, bytes);
}

template <class Real = double>
Tensor<Real> read_tensor(const std::filesystem::path& path) {
    const auto bytes = detail::read_all(path);
    const std::string where = " in '" + path.string() + "'";
    if (bytes.size() < tensor_file::kHeaderBytes) throw IoError("truncated header" + where);
    if (!std::equal(tensor_file::kMagic.begin(), tensor_file::kMagic.end(), bytes.begin())) {
        throw IoError("bad magic" + where + " (expected GDDT)");
    }
    const std::uint32_t version = detail::get_u32(bytes.data() + 4);
    if (version != tensor_file::kVersion) throw IoError("unsupported version " + std::to_string(version) + where);
    const std::uint32_t ndim = detail::get_u32(bytes.data() + 8);
    if (ndim != 3) throw IoError("unsupported ndim " + std::to_string(ndim) + where);
    const std::uint64_t c = detail::get_u32(bytes.data() + 12);
    const std::uint64_t h = detail::get_u32(bytes.data() + 16);
    const std::uint64_t w = detail::get_u32(bytes.data() + 20);
    if (c == 0 || h == 0 || w == 0) throw IoError("zero dimension" + where);
    // c * h cannot overflow (both < 2^32); the product with w can.
    if (c * h > std::numeric_limits<std::uint64_t>::max() / w) throw IoError("dimension overflow" + where);
    const std::uint64_t count = c * h * w;
    if (count > (std::numeric_limits<std::uint64_t>::max() - tensor_file::kHeaderBytes) / 4) {
        throw IoError("dimension overflow" + where);
    }
    if (bytes.size() != tensor_file::kHeaderBytes + 4 * count) {
        throw IoError("payload is " + std::to_string(bytes.size() - tensor_file::kHeaderBytes) + " bytes, expected " +
                      std::to_string(4 * count) + where);
    }
    Tensor<Real> t(Shape{static_cast<std::size_t>(c), static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    const unsigned char* p = bytes.data() + tensor_file::kHeaderBytes;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float v = std::bit_cast<float>(detail::get_u32(p + 4 * i));
        if (!std::isfinite(v)) throw IoError("non-finite sample at index " + std::to_string(i) + where);
        t[i] = static_cast<Real>(v);
    }
    return t;
}

// Clamp to [0, range], scale to 0..255, round half away from zero.
inline unsigned char quantize_byte(double v, double range) {
    const double t = std::clamp(v / range, 0.0, 1.0);
    return static_cast<unsigned char>(std::round(t * 255.0));
}

namespace detail {

template <class Real>
void write_netpbm(const std::filesystem::path& path, const Tensor<Real>& t, double range, bool color) {
    if (!(range > 0.0)) throw ValidationError("image export: range must be positive");
    const std::string header = std::string(color ? "P6" : "P5") + "\n" + std::to_string(t.width()) + " " +
                               std::to_string(t.height()) + "\n255\n";
    std::vector<unsigned char> bytes(header.begin(), header.end());
    for (std::size_t y = 0; y < t.height(); ++y) {
        for (std::size_t x = 0; x < t.width(); ++x) {
            for (std::size_t c = 0; c < t.channels(); ++c) bytes.push_back(quantize_byte(t(c, y, x), range));
        }
    }
    write_all(path, bytes);
}

}  // namespace detail

template <class Real>
void write_ppm(const std::filesystem::path& path, const Tensor<Real>& rgb, double range = 1.0) {
    if (rgb.channels() != 3) throw ShapeError("write_ppm: expected 3 channels, got " + to_string(rgb.shape()));
    detail::write_netpbm(path, rgb, range, true);
}

template <class Real>
void write_pgm(const std::filesystem::path& path, const Tensor<Real>& gray, double range = 1.0) {
    if (gray.channels() != 1) throw ShapeError("write_pgm: expected 1 channel, got " + to_string(gray.shape()));
    detail::write_netpbm(path, gray, range, false);
}

struct SrfReadResult {
    SpectralResponse response;
    std::vector<std::string> warnings;
};

// c rows of C comma-separated values, no header. Rows summing within
// [0.99, 1.01] but not within 1e-6 of one are normalised with a warning.
inline SrfReadResult read_srf_csv(const std::filesystem::path& path, std::size_t expected_bands) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::vector<std::vector<double>> rows;
    std::vector<std::string> warnings;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(field, &used));
                if (field.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(field);
            } catch (const std::exception&) {
                throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": cannot parse '" + field + "'");
            }
        }
        if (row.size() != expected_bands) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(expected_bands) + " values, found " + std::to_string(row.size()));
        }
        double total = 0.0;
        for (double v : row) {
            if (v < 0.0) throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": negative coefficient");
            total += v;
        }
        if (total < 0.99 || total > 1.01) {
            throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": row sums to " +
                                  detail::format_real(total) + ", outside [0.99, 1.01]");
        }
        if (std::abs(total - 1.0) > 1e-6) {
            warnings.push_back("row " + std::to_string(rows.size()) + " sums to " + detail::format_real(total) +
                               "; normalised");
        }
        if (std::abs(total - 1.0) > 1e-12) {
            for (double& v : row) v /= total;
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError(path.string() + ": no rows");
    std::vector<double> flat;
    for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return {SpectralResponse(rows.size(), expected_bands, std::move(flat)), std::move(warnings)};
}

inline void write_srf_csv(const std::filesystem::path& path, const SpectralResponse& r) {
    std::string text;
    for (std::size_t i = 0; i < r.out_bands(); ++i) {
        for (std::size_t b = 0; b < r.in_bands(); ++b) {
            if (b) text += ',';
            text += detail::format_real(r(i, b));
        }
        text += '\n';
    }
    detail::write_text(path, text);
}

inline std::string trace_csv(const RunTrace& trace) {
    std::string text = "iteration,loss_total,loss_term1,loss_term2,psnr\n";
    for (const auto& r : trace.rows) {
        text += std::to_string(r.iteration) + ',' + detail::format_real(r.loss_total) + ',' +
                detail::format_real(r.loss_term1) + ',' + detail::format_real(r.loss_term2) + ',' +
                (r.psnr ? detail::format_real(*r.psnr) : std::string()) + '\n';
    }
    return text;
}

inline void write_trace_csv(const std::filesystem::path& path, const RunTrace& trace) {
    detail::write_text(path, trace_csv(trace));
}

inline std::string metric_report_csv(const MetricReport& report) {
    std::string header, row;
    for (std::size_t i = 0; i < kMetricOrder.size(); ++i) {
        if (i) {
            header += ',';
            row += ',';
        }
        header += kMetricOrder[i];
        if (auto v = report.get(kMetricOrder[i])) row += detail::format_real(*v);
    }
    return header + "\n" + row + "\n";
}

inline void write_metric_report(const std::filesystem::path& path, const MetricReport& report) {
    detail::write_text(path, metric_report_csv(report));
}

}  // namespace gdd
