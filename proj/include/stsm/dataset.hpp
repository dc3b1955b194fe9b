#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsm/tensor.hpp"

namespace stsm {

struct Location {
    std::string id;
    double x = 0.0;  // projected metres (east)
    double y = 0.0;  // projected metres (north)
    double lat = 0.0;
    double lon = 0.0;
    int nearest_road = -1;  // index into RoadTable, -1 if none
};

struct PoiRecord {
    std::string id;
    double x = 0.0, y = 0.0;
    int category = 0;  // 1..26
    double levels = 0.0;
    double area_m2 = 0.0;
};
using PoiTable = std::vector<PoiRecord>;

struct RoadRecord {
    std::string sensor_id;
    double highway_level = 0.0;
    double maxspeed = 0.0;
    double is_oneway = 0.0;
    double lanes = 0.0;
};
using RoadTable = std::vector<RoadRecord>;

// Observation tensor [T_total x N x C] with per-cell presence mask.
struct SensorPanel {
    std::vector<std::int64_t> timestamps;  // epoch seconds, uniform interval
    int interval_minutes = 0;
    int td = 0;  // intervals per day
    int n_locations = 0;
    int n_channels = 1;
    std::vector<double> values;   // [T][N][C]
    std::vector<char> present;    // [T][N]

    int steps() const { return static_cast<int>(timestamps.size()); }
    double& value(int t, int n, int c = 0) {
        return values[(static_cast<std::size_t>(t) * n_locations + n) * n_channels + c];
    }
    double value(int t, int n, int c = 0) const {
        return values[(static_cast<std::size_t>(t) * n_locations + n) * n_channels + c];
    }
    bool is_present(int t, int n) const {
        return present[static_cast<std::size_t>(t) * n_locations + n] != 0;
    }
    // Interval-of-day id of step t.
    int interval_id(int t) const {
        std::int64_t day_sec = static_cast<std::int64_t>(interval_minutes) * 60 * td;
        std::int64_t off = ((timestamps[static_cast<std::size_t>(t)] % day_sec) + day_sec) % day_sec;
        return static_cast<int>(off / (static_cast<std::int64_t>(interval_minutes) * 60));
    }
};

struct DatasetBundle {
    std::vector<Location> locations;
    SensorPanel panel;
    PoiTable poi;
    RoadTable roads;
};

enum class SplitMethod { Horizontal, Vertical, Ring };
SplitMethod split_method_from_string(const std::string& s);
std::string to_string(SplitMethod m);

struct RegionSplit {
    std::vector<int> train_idx, valid_idx, test_idx;  // indices into locations
    SplitMethod method = SplitMethod::Vertical;

    std::vector<int> observed() const {
        std::vector<int> o = train_idx;
        o.insert(o.end(), valid_idx.begin(), valid_idx.end());
        return o;
    }
};

struct NormStats {
    std::vector<double> mean;  // per channel
    std::vector<double> std;   // per channel, > 0
    double normalize(double v, int c = 0) const { return (v - mean[static_cast<std::size_t>(c)]) / std[static_cast<std::size_t>(c)]; }
    double denormalize(double v, int c = 0) const { return v * std[static_cast<std::size_t>(c)] + mean[static_cast<std::size_t>(c)]; }
};

struct Window {
    int start = 0;             // index of first input step
    std::vector<int> te;       // interval-of-day ids for the T input steps
};

struct WindowSet {
    int T = 0, T_prime = 0, stride = 1, td = 0;
    std::vector<Window> windows;
};

// locations.csv / observations.csv / poi.csv / roads.csv per the declared schemas.
DatasetBundle load_dataset(const std::string& locations_path, const std::string& observations_path,
                           const std::string& poi_path, const std::string& roads_path);

RegionSplit split_region(const std::vector<Location>& locations, SplitMethod method,
                         double unobserved_ratio);

// Contiguous prefix/suffix split along time.
std::pair<SensorPanel, SensorPanel> temporal_split(const SensorPanel& panel, double train_fraction);

// Z-score fit on the observed-train locations, applied panel-wide.
NormStats zscore_fit(const SensorPanel& panel, const std::vector<int>& train_idx);
void zscore_apply(SensorPanel& panel, const NormStats& stats);

WindowSet make_windows(const SensorPanel& panel, int T, int T_prime, int stride);

// Last-value-carried-forward fill of missing cells (leading gaps backfilled).
void fill_missing_lvcf(SensorPanel& panel);

// Equirectangular projection of lat/lon about the centroid, in metres.
void project_coordinates(std::vector<Location>& locations);

// [N' x T x C] input slice / [N' x T' x C] target slice for the given nodes.
Tensor window_input(const SensorPanel& panel, const Window& w, int T, const std::vector<int>& nodes);
Tensor window_target(const SensorPanel& panel, const Window& w, int T, int T_prime,
                     const std::vector<int>& nodes);

}  // namespace stsm
