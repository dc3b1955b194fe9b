#pragma once

#include <cstdint>
#include <string>

#include "stsm/dataset.hpp"

namespace stsm {

struct SyntheticSpec {
    int n_locations = 60;
    int days = 14;
    int interval_minutes = 5;
    std::uint64_t seed = 7;
    double noise = 1.0;  // 0 gives an exactly Td-periodic signal
};

// Planar sensor layout with a diurnal signal, spatially correlated
// amplitude/phase/level fields and feature tables that vary smoothly in space.
DatasetBundle generate_synthetic(const SyntheticSpec& spec);

// Writes locations.csv / observations.csv / poi.csv / roads.csv into dir.
void write_bundle_csv(const DatasetBundle& bundle, const std::string& dir);

}  // namespace stsm
