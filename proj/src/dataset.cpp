#include "stsm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <numeric>
#include <unordered_map>

#include "stsm/csv.hpp"

namespace stsm {

namespace {

constexpr double kMetresPerDegree = 111320.0;

std::int64_t parse_timestamp(const std::string& s) {
    int Y, M, D, h, m, sec;
    if (std::sscanf(s.c_str(), "%d-%d-%d%*1[T ]%d:%d:%d", &Y, &M, &D, &h, &m, &sec) != 6)
        throw FormatError("bad ISO-8601 timestamp '" + s + "'");
    std::tm tm{};
    tm.tm_year = Y - 1900;
    tm.tm_mon = M - 1;
    tm.tm_mday = D;
    tm.tm_hour = h;
    tm.tm_min = m;
    tm.tm_sec = sec;
    return static_cast<std::int64_t>(timegm(&tm));
}

void project_about(double lat0, double lon0, double lat, double lon, double& x, double& y) {
    x = (lon - lon0) * std::cos(lat0 * M_PI / 180.0) * kMetresPerDegree;
    y = (lat - lat0) * kMetresPerDegree;
}

void require_header(const csv::Table& t, const std::vector<std::string>& expected,
                    const std::string& path) {
    for (const auto& col : expected) {
        bool found = false;
        for (const auto& h : t.header) found = found || h == col;
        if (!found) throw FormatError("file " + path + " is missing column '" + col + "'");
    }
}

}  // namespace

SplitMethod split_method_from_string(const std::string& s) {
    if (s == "horizontal") return SplitMethod::Horizontal;
    if (s == "vertical") return SplitMethod::Vertical;
    if (s == "ring") return SplitMethod::Ring;
    throw ConfigError("unknown split method '" + s + "'");
}

std::string to_string(SplitMethod m) {
    switch (m) {
        case SplitMethod::Horizontal: return "horizontal";
        case SplitMethod::Vertical: return "vertical";
        case SplitMethod::Ring: return "ring";
    }
    return "?";
}

void project_coordinates(std::vector<Location>& locations) {
    if (locations.empty()) return;
    double lat0 = 0.0, lon0 = 0.0;
    for (const auto& l : locations) {
        lat0 += l.lat;
        lon0 += l.lon;
    }
    lat0 /= static_cast<double>(locations.size());
    lon0 /= static_cast<double>(locations.size());
    for (auto& l : locations) project_about(lat0, lon0, l.lat, l.lon, l.x, l.y);
}

DatasetBundle load_dataset(const std::string& locations_path, const std::string& observations_path,
                           const std::string& poi_path, const std::string& roads_path) {
    DatasetBundle b;

    auto loc_t = csv::read_file(locations_path);
    require_header(loc_t, {"sensor_id", "lat", "lon"}, locations_path);
    const int c_id = loc_t.col("sensor_id"), c_lat = loc_t.col("lat"), c_lon = loc_t.col("lon");
    for (const auto& row : loc_t.rows) {
        Location l;
        l.id = row[static_cast<std::size_t>(c_id)];
        l.lat = csv::to_double(row[static_cast<std::size_t>(c_lat)], locations_path);
        l.lon = csv::to_double(row[static_cast<std::size_t>(c_lon)], locations_path);
        if (!std::isfinite(l.lat) || !std::isfinite(l.lon))
            throw InputError("non-finite coordinate for sensor " + l.id);
        b.locations.push_back(std::move(l));
    }
    std::unordered_map<std::string, int> by_id;
    for (std::size_t i = 0; i < b.locations.size(); ++i) {
        if (!by_id.emplace(b.locations[i].id, static_cast<int>(i)).second)
            throw FormatError("duplicate sensor_id '" + b.locations[i].id + "'");
    }
    project_coordinates(b.locations);
    double lat0 = 0.0, lon0 = 0.0;
    for (const auto& l : b.locations) {
        lat0 += l.lat;
        lon0 += l.lon;
    }
    lat0 /= static_cast<double>(std::max<std::size_t>(1, b.locations.size()));
    lon0 /= static_cast<double>(std::max<std::size_t>(1, b.locations.size()));

    auto obs_t = csv::read_file(observations_path);
    if (obs_t.header.empty() || obs_t.header[0] != "timestamp")
        throw FormatError("file " + observations_path + " is missing column 'timestamp'");
    if (obs_t.rows.size() < 2)
        throw FormatError("interval error: observations need at least two timestamps");
    const int n = static_cast<int>(b.locations.size());
    std::vector<int> col_of(static_cast<std::size_t>(n), -1);
    for (std::size_t j = 1; j < obs_t.header.size(); ++j) {
        auto it = by_id.find(obs_t.header[j]);
        if (it == by_id.end())
            throw FormatError("observations column '" + obs_t.header[j] + "' has no matching sensor");
        col_of[static_cast<std::size_t>(it->second)] = static_cast<int>(j);
    }
    for (int i = 0; i < n; ++i)
        if (col_of[static_cast<std::size_t>(i)] < 0)
            throw FormatError("observations file is missing column '" + b.locations[static_cast<std::size_t>(i)].id + "'");

    SensorPanel& p = b.panel;
    p.n_locations = n;
    p.n_channels = 1;
    for (const auto& row : obs_t.rows) p.timestamps.push_back(parse_timestamp(row[0]));
    std::int64_t step = p.timestamps[1] - p.timestamps[0];
    if (step <= 0 || step % 60 != 0)
        throw FormatError("interval error: timestamps must increase in whole minutes");
    for (std::size_t t = 1; t < p.timestamps.size(); ++t)
        if (p.timestamps[t] - p.timestamps[t - 1] != step)
            throw FormatError("interval error: non-uniform timestamp spacing at row " +
                              std::to_string(t));
    p.interval_minutes = static_cast<int>(step / 60);
    if (1440 % p.interval_minutes != 0)
        throw FormatError("interval error: " + std::to_string(p.interval_minutes) +
                          "-minute interval does not divide a day");
    p.td = 1440 / p.interval_minutes;
    p.values.assign(static_cast<std::size_t>(p.steps()) * n, 0.0);
    p.present.assign(static_cast<std::size_t>(p.steps()) * n, 0);
    for (int t = 0; t < p.steps(); ++t) {
        const auto& row = obs_t.rows[static_cast<std::size_t>(t)];
        for (int i = 0; i < n; ++i) {
            const std::string& cell = row[static_cast<std::size_t>(col_of[static_cast<std::size_t>(i)])];
            if (cell.empty()) continue;
            double v = csv::to_double(cell, observations_path);
            if (!std::isfinite(v)) throw InputError("non-finite observation at row " + std::to_string(t));
            p.value(t, i) = v;
            p.present[static_cast<std::size_t>(t) * n + i] = 1;
        }
    }

    auto poi_t = csv::read_file(poi_path);
    require_header(poi_t, {"poi_id", "lat", "lon", "category", "levels", "area_m2"}, poi_path);
    const int pc_id = poi_t.col("poi_id"), pc_lat = poi_t.col("lat"), pc_lon = poi_t.col("lon");
    const int pc_cat = poi_t.col("category"), pc_lvl = poi_t.col("levels"), pc_area = poi_t.col("area_m2");
    for (std::size_t r = 0; r < poi_t.rows.size(); ++r) {
        const auto& row = poi_t.rows[r];
        PoiRecord rec;
        rec.id = row[static_cast<std::size_t>(pc_id)];
        double lat = csv::to_double(row[static_cast<std::size_t>(pc_lat)], poi_path);
        double lon = csv::to_double(row[static_cast<std::size_t>(pc_lon)], poi_path);
        project_about(lat0, lon0, lat, lon, rec.x, rec.y);
        long cat = csv::to_long(row[static_cast<std::size_t>(pc_cat)], poi_path);
        if (cat < 1 || cat > 26)
            throw InputError("unknown POI category " + std::to_string(cat) + " in row " +
                             std::to_string(r + 2) + " of " + poi_path);
        rec.category = static_cast<int>(cat);
        const std::string& lvl = row[static_cast<std::size_t>(pc_lvl)];
        const std::string& area = row[static_cast<std::size_t>(pc_area)];
        rec.levels = lvl.empty() ? 0.0 : csv::to_double(lvl, poi_path);
        rec.area_m2 = area.empty() ? 0.0 : csv::to_double(area, poi_path);
        b.poi.push_back(std::move(rec));
    }

    auto road_t = csv::read_file(roads_path);
    require_header(road_t, {"sensor_id", "highway_level", "maxspeed", "is_oneway", "lanes"}, roads_path);
    const int rc_id = road_t.col("sensor_id"), rc_hw = road_t.col("highway_level");
    const int rc_ms = road_t.col("maxspeed"), rc_ow = road_t.col("is_oneway"), rc_ln = road_t.col("lanes");
    for (const auto& row : road_t.rows) {
        RoadRecord rec;
        rec.sensor_id = row[static_cast<std::size_t>(rc_id)];
        rec.highway_level = csv::to_double(row[static_cast<std::size_t>(rc_hw)], roads_path);
        rec.maxspeed = csv::to_double(row[static_cast<std::size_t>(rc_ms)], roads_path);
        rec.is_oneway = csv::to_double(row[static_cast<std::size_t>(rc_ow)], roads_path);
        if (rec.is_oneway != 0.0 && rec.is_oneway != 1.0)
            throw FormatError("is_oneway must be 0 or 1 for sensor " + rec.sensor_id);
        rec.lanes = csv::to_double(row[static_cast<std::size_t>(rc_ln)], roads_path);
        auto it = by_id.find(rec.sensor_id);
        if (it != by_id.end())
            b.locations[static_cast<std::size_t>(it->second)].nearest_road =
                static_cast<int>(b.roads.size());
        b.roads.push_back(std::move(rec));
    }

    return b;
}

RegionSplit split_region(const std::vector<Location>& locations, SplitMethod method,
                         double unobserved_ratio) {
    if (!(unobserved_ratio > 0.0 && unobserved_ratio < 1.0))
        throw ConfigError("unobserved_ratio must lie in (0,1)");
    const int n = static_cast<int>(locations.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    auto sort_by = [&](auto key) {
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            auto ka = key(locations[static_cast<std::size_t>(a)]);
            auto kb = key(locations[static_cast<std::size_t>(b)]);
            if (ka != kb) return ka < kb;
            return locations[static_cast<std::size_t>(a)].id < locations[static_cast<std::size_t>(b)].id;
        });
    };

    if (method == SplitMethod::Vertical) {
        sort_by([](const Location& l) { return l.x; });
    } else if (method == SplitMethod::Horizontal) {
        sort_by([](const Location& l) { return l.y; });
    } else {
        // Ring: rank by distance from the observed-region centroid. A first pass
        // with the global centroid picks a provisional observed set; the second
        // pass re-ranks with that set's centroid.
        double cx = 0.0, cy = 0.0;
        for (const auto& l : locations) {
            cx += l.x;
            cy += l.y;
        }
        cx /= n;
        cy /= n;
        for (int pass = 0; pass < 2; ++pass) {
            sort_by([&](const Location& l) { return std::hypot(l.x - cx, l.y - cy); });
            int n_obs = n - static_cast<int>(std::floor(n * unobserved_ratio));
            double sx = 0.0, sy = 0.0;
            for (int i = 0; i < n_obs; ++i) {
                sx += locations[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].x;
                sy += locations[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])].y;
            }
            cx = sx / std::max(1, n_obs);
            cy = sy / std::max(1, n_obs);
        }
        sort_by([&](const Location& l) { return std::hypot(l.x - cx, l.y - cy); });
    }

    RegionSplit s;
    s.method = method;
    const int n_test = static_cast<int>(std::floor(n * unobserved_ratio));
    const int n_obs = n - n_test;
    const int n_train = static_cast<int>(std::floor(n_obs * 0.8));
    for (int i = 0; i < n_train; ++i) s.train_idx.push_back(order[static_cast<std::size_t>(i)]);
    for (int i = n_train; i < n_obs; ++i) s.valid_idx.push_back(order[static_cast<std::size_t>(i)]);
    for (int i = n_obs; i < n; ++i) s.test_idx.push_back(order[static_cast<std::size_t>(i)]);
    return s;
}

std::pair<SensorPanel, SensorPanel> temporal_split(const SensorPanel& panel, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must lie in (0,1)");
    const int total = panel.steps();
    const int cut = static_cast<int>(std::floor(total * train_fraction));
    auto slice = [&](int from, int to) {
        SensorPanel out;
        out.interval_minutes = panel.interval_minutes;
        out.td = panel.td;
        out.n_locations = panel.n_locations;
        out.n_channels = panel.n_channels;
        out.timestamps.assign(panel.timestamps.begin() + from, panel.timestamps.begin() + to);
        const std::size_t row = static_cast<std::size_t>(panel.n_locations) * panel.n_channels;
        out.values.assign(panel.values.begin() + from * row, panel.values.begin() + to * row);
        const std::size_t mrow = static_cast<std::size_t>(panel.n_locations);
        out.present.assign(panel.present.begin() + from * mrow, panel.present.begin() + to * mrow);
        return out;
    };
    return {slice(0, cut), slice(cut, total)};
}

NormStats zscore_fit(const SensorPanel& panel, const std::vector<int>& train_idx) {
    if (train_idx.empty()) throw ConfigError("zscore_fit: no observed-train locations");
    NormStats s;
    for (int c = 0; c < panel.n_channels; ++c) {
        double sum = 0.0, sq = 0.0;
        long long cnt = 0;
        for (int t = 0; t < panel.steps(); ++t)
            for (int i : train_idx) {
                const double v = panel.value(t, i, c);
                sum += v;
                sq += v * v;
                ++cnt;
            }
        const double mean = sum / std::max<long long>(1, cnt);
        double var = sq / std::max<long long>(1, cnt) - mean * mean;
        double sd = var > 0.0 ? std::sqrt(var) : 0.0;
        if (sd <= 0.0) {
            std::cerr << "warning: zero variance in channel " << c << ", std clamped to 1\n";
            sd = 1.0;
        }
        s.mean.push_back(mean);
        s.std.push_back(sd);
    }
    return s;
}

void zscore_apply(SensorPanel& panel, const NormStats& stats) {
    for (int t = 0; t < panel.steps(); ++t)
        for (int i = 0; i < panel.n_locations; ++i)
            for (int c = 0; c < panel.n_channels; ++c)
                panel.value(t, i, c) = stats.normalize(panel.value(t, i, c), c);
}

WindowSet make_windows(const SensorPanel& panel, int T, int T_prime, int stride) {
    if (T < 1 || T_prime < 1 || stride < 1)
        throw ConfigError("make_windows: T, T' and stride must be >= 1");
    if (panel.steps() < T + T_prime)
        throw ConfigError("make_windows: panel has " + std::to_string(panel.steps()) +
                          " steps, needs at least " + std::to_string(T + T_prime));
    WindowSet ws;
    ws.T = T;
    ws.T_prime = T_prime;
    ws.stride = stride;
    ws.td = panel.td;
    for (int start = 0; start + T + T_prime <= panel.steps(); start += stride) {
        Window w;
        w.start = start;
        for (int t = 0; t < T; ++t) w.te.push_back(panel.interval_id(start + t));
        ws.windows.push_back(std::move(w));
    }
    return ws;
}

void fill_missing_lvcf(SensorPanel& panel) {
    for (int i = 0; i < panel.n_locations; ++i) {
        int first_present = -1;
        for (int t = 0; t < panel.steps(); ++t)
            if (panel.is_present(t, i)) {
                first_present = t;
                break;
            }
        if (first_present < 0) continue;  // fully missing location stays zero
        for (int t = 0; t < first_present; ++t)
            for (int c = 0; c < panel.n_channels; ++c)
                panel.value(t, i, c) = panel.value(first_present, i, c);
        for (int t = first_present + 1; t < panel.steps(); ++t)
            if (!panel.is_present(t, i))
                for (int c = 0; c < panel.n_channels; ++c)
                    panel.value(t, i, c) = panel.value(t - 1, i, c);
    }
}

Tensor window_input(const SensorPanel& panel, const Window& w, int T, const std::vector<int>& nodes) {
    Tensor x({static_cast<int>(nodes.size()), T, panel.n_channels});
    for (std::size_t ni = 0; ni < nodes.size(); ++ni)
        for (int t = 0; t < T; ++t)
            for (int c = 0; c < panel.n_channels; ++c)
                x(static_cast<int>(ni), t, c) = panel.value(w.start + t, nodes[ni], c);
    return x;
}

Tensor window_target(const SensorPanel& panel, const Window& w, int T, int T_prime,
                     const std::vector<int>& nodes) {
    Tensor x({static_cast<int>(nodes.size()), T_prime, panel.n_channels});
    for (std::size_t ni = 0; ni < nodes.size(); ++ni)
        for (int t = 0; t < T_prime; ++t)
            for (int c = 0; c < panel.n_channels; ++c)
                x(static_cast<int>(ni), t, c) = panel.value(w.start + T + t, nodes[ni], c);
    return x;
}

}  // namespace stsm
