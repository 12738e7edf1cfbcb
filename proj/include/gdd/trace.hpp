#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace gdd {

struct TraceRow {
    std::size_t iteration = 0;
    double loss_total = 0.0;
    double loss_term1 = 0.0;
    double loss_term2 = 0.0;
    std::optional<double> psnr;
};

// Rows are in strictly increasing iteration order.
struct RunTrace {
    std::vector<TraceRow> rows;
};

}  // namespace gdd
