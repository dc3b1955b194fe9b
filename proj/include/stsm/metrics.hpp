#pragma once

#include <vector>

#include "stsm/common.hpp"

namespace stsm {

struct MetricReport {
    double rmse = 0.0;
    double mae = 0.0;
    double mape = 0.0;
    double r2 = 0.0;
};

// Denormalized predictions against denormalized targets. MAPE skips targets
// with |target| below the 0.1 floor.
MetricReport evaluate_metrics(const std::vector<double>& predictions,
                              const std::vector<double>& targets);

inline constexpr double kMapeFloor = 0.1;

}  // namespace stsm
