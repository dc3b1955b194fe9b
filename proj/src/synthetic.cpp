#include "stsm/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <random>

#include "stsm/csv.hpp"

namespace stsm {

namespace {

// Lower-triangular Cholesky factor of a squared-exponential kernel over the
// layout, used to draw spatially correlated Gaussian fields.
std::vector<double> kernel_cholesky(const std::vector<Location>& locs, double length_scale) {
    const int n = static_cast<int>(locs.size());
    std::vector<double> k(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double d = std::hypot(locs[static_cast<std::size_t>(i)].x - locs[static_cast<std::size_t>(j)].x,
                                        locs[static_cast<std::size_t>(i)].y - locs[static_cast<std::size_t>(j)].y);
            k[static_cast<std::size_t>(i) * n + j] =
                std::exp(-d * d / (2.0 * length_scale * length_scale)) + (i == j ? 1e-4 : 0.0);
        }
    std::vector<double> l(static_cast<std::size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = k[static_cast<std::size_t>(i) * n + j];
            for (int m = 0; m < j; ++m)
                s -= l[static_cast<std::size_t>(i) * n + m] * l[static_cast<std::size_t>(j) * n + m];
            if (i == j)
                l[static_cast<std::size_t>(i) * n + j] = std::sqrt(std::max(s, 1e-12));
            else
                l[static_cast<std::size_t>(i) * n + j] = s / l[static_cast<std::size_t>(j) * n + j];
        }
    }
    return l;
}

std::vector<double> draw_field(const std::vector<double>& chol, int n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> z(static_cast<std::size_t>(n));
    for (auto& v : z) v = gauss(rng);
    std::vector<double> f(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) f[static_cast<std::size_t>(i)] += chol[static_cast<std::size_t>(i) * n + j] * z[static_cast<std::size_t>(j)];
    return f;
}

std::string format_timestamp(std::int64_t epoch) {
    std::time_t t = static_cast<std::time_t>(epoch);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[72];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d %02d:%02d:%02d", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

}  // namespace

DatasetBundle generate_synthetic(const SyntheticSpec& spec) {
    if (spec.n_locations < 12) throw ConfigError("generate_synthetic: need at least 12 locations");
    if (spec.days < 1 || spec.interval_minutes < 1 || 1440 % spec.interval_minutes != 0)
        throw ConfigError("generate_synthetic: bad days/interval");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    DatasetBundle b;
    const int n = spec.n_locations;
    const double lat0 = 39.0, lon0 = 117.0;
    const double m_per_deg = 111320.0;
    const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    const double cell = 420.0;
    for (int i = 0; i < n; ++i) {
        const int gx = i % grid, gy = i / grid;
        const double x = gx * cell + (unif(rng) - 0.5) * 240.0;
        const double y = gy * cell + (unif(rng) - 0.5) * 240.0;
        Location l;
        char id[16];
        std::snprintf(id, sizeof(id), "s%03d", i);
        l.id = id;
        l.lat = lat0 + y / m_per_deg;
        l.lon = lon0 + x / (m_per_deg * std::cos(lat0 * M_PI / 180.0));
        b.locations.push_back(std::move(l));
    }
    project_coordinates(b.locations);

    auto chol = kernel_cholesky(b.locations, 800.0);
    auto f_mean = draw_field(chol, n, rng);
    auto f_amp = draw_field(chol, n, rng);
    auto f_phase = draw_field(chol, n, rng);
    auto f_load = draw_field(chol, n, rng);
    auto f_poi = draw_field(chol, n, rng);
    auto f_road = draw_field(chol, n, rng);
    auto f_oneway = draw_field(chol, n, rng);

    SensorPanel& p = b.panel;
    p.interval_minutes = spec.interval_minutes;
    p.td = 1440 / spec.interval_minutes;
    p.n_locations = n;
    p.n_channels = 1;
    const int steps = p.td * spec.days;
    const std::int64_t t0 = 1641168000;  // 2022-01-03 00:00:00 UTC, a Monday midnight
    for (int t = 0; t < steps; ++t)
        p.timestamps.push_back(t0 + static_cast<std::int64_t>(t) * spec.interval_minutes * 60);
    p.values.assign(static_cast<std::size_t>(steps) * n, 0.0);
    p.present.assign(static_cast<std::size_t>(steps) * n, 1);

    std::vector<double> mean_i(static_cast<std::size_t>(n)), amp_i(static_cast<std::size_t>(n)), phase_i(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        mean_i[static_cast<std::size_t>(i)] = 55.0 + 8.0 * f_mean[static_cast<std::size_t>(i)];
        amp_i[static_cast<std::size_t>(i)] = std::max(3.0, 9.0 + 2.5 * f_amp[static_cast<std::size_t>(i)]);
        phase_i[static_cast<std::size_t>(i)] = 0.6 * f_phase[static_cast<std::size_t>(i)];
    }
    double u = 0.0;  // slow shared factor, AR(1)
    for (int t = 0; t < steps; ++t) {
        u = 0.98 * u + 0.3 * gauss(rng);
        const double tod = static_cast<double>(t % p.td) / p.td;
        for (int i = 0; i < n; ++i) {
            const double diurnal = amp_i[static_cast<std::size_t>(i)] * std::sin(2.0 * M_PI * tod + phase_i[static_cast<std::size_t>(i)]) +
                                   0.35 * amp_i[static_cast<std::size_t>(i)] * std::sin(4.0 * M_PI * tod + 0.7 * phase_i[static_cast<std::size_t>(i)]);
            const double stochastic = spec.noise * (1.6 * f_load[static_cast<std::size_t>(i)] * u + 1.2 * gauss(rng));
            p.value(t, i) = mean_i[static_cast<std::size_t>(i)] + diurnal + stochastic;
        }
    }

    // POIs cluster around the sensors; category mix tracks the smooth intensity
    // field, so nearby locations end up with similar feature vectors.
    std::vector<double> anchor_w(static_cast<std::size_t>(n));
    double wsum = 0.0;
    for (int i = 0; i < n; ++i) {
        anchor_w[static_cast<std::size_t>(i)] = std::exp(0.8 * f_poi[static_cast<std::size_t>(i)]);
        wsum += anchor_w[static_cast<std::size_t>(i)];
    }
    const int n_poi = 8 * n;
    for (int k = 0; k < n_poi; ++k) {
        double r = unif(rng) * wsum;
        int anchor = 0;
        while (anchor + 1 < n && r > anchor_w[static_cast<std::size_t>(anchor)]) {
            r -= anchor_w[static_cast<std::size_t>(anchor)];
            ++anchor;
        }
        const Location& a = b.locations[static_cast<std::size_t>(anchor)];
        PoiRecord rec;
        char id[16];
        std::snprintf(id, sizeof(id), "p%04d", k);
        rec.id = id;
        rec.x = a.x + gauss(rng) * 140.0;
        rec.y = a.y + gauss(rng) * 140.0;
        const int center = std::clamp(static_cast<int>(std::lround(13.5 + 5.0 * f_poi[static_cast<std::size_t>(anchor)])), 1, 26);
        rec.category = std::clamp(center + static_cast<int>(std::lround(3.0 * (unif(rng) - 0.5) * 2.0)), 1, 26);
        rec.levels = std::max(0.0, std::floor(2.0 + 3.0 * f_poi[static_cast<std::size_t>(anchor)] + gauss(rng)));
        rec.area_m2 = rec.category == 9 ? std::floor(1000.0 + 19000.0 * unif(rng)) : 0.0;
        b.poi.push_back(std::move(rec));
    }

    for (int i = 0; i < n; ++i) {
        RoadRecord rec;
        rec.sensor_id = b.locations[static_cast<std::size_t>(i)].id;
        rec.highway_level = std::clamp(std::lround(3.0 + 1.2 * f_road[static_cast<std::size_t>(i)]), 1L, 5L);
        rec.maxspeed = 30.0 + 10.0 * rec.highway_level;
        rec.is_oneway = f_oneway[static_cast<std::size_t>(i)] > 0.0 ? 1.0 : 0.0;
        rec.lanes = std::clamp(std::lround(1.5 + 0.8 * f_road[static_cast<std::size_t>(i)]), 1L, 4L);
        b.locations[static_cast<std::size_t>(i)].nearest_road = i;
        b.roads.push_back(std::move(rec));
    }

    return b;
}

void write_bundle_csv(const DatasetBundle& bundle, const std::string& dir) {
    std::filesystem::create_directories(dir);
    // Projected x/y are relative to the location centroid; invert that same
    // frame when emitting POI lat/lon so a reload reproduces the geometry.
    double lat_ref = 0.0, lon_ref = 0.0;
    for (const auto& l : bundle.locations) {
        lat_ref += l.lat;
        lon_ref += l.lon;
    }
    lat_ref /= static_cast<double>(std::max<std::size_t>(1, bundle.locations.size()));
    lon_ref /= static_cast<double>(std::max<std::size_t>(1, bundle.locations.size()));
    const double m_per_deg = 111320.0;
    const double cos0 = std::cos(lat_ref * M_PI / 180.0);
    char buf[64];

    csv::Table loc;
    loc.header = {"sensor_id", "lat", "lon"};
    for (const auto& l : bundle.locations) {
        std::snprintf(buf, sizeof(buf), "%.8f", l.lat);
        std::string lat = buf;
        std::snprintf(buf, sizeof(buf), "%.8f", l.lon);
        loc.rows.push_back({l.id, lat, buf});
    }
    csv::write_file(dir + "/locations.csv", loc);

    csv::Table obs;
    obs.header.push_back("timestamp");
    for (const auto& l : bundle.locations) obs.header.push_back(l.id);
    for (int t = 0; t < bundle.panel.steps(); ++t) {
        std::vector<std::string> row;
        row.push_back(format_timestamp(bundle.panel.timestamps[static_cast<std::size_t>(t)]));
        for (int i = 0; i < bundle.panel.n_locations; ++i) {
            if (!bundle.panel.is_present(t, i)) {
                row.emplace_back();
                continue;
            }
            std::snprintf(buf, sizeof(buf), "%.4f", bundle.panel.value(t, i));
            row.emplace_back(buf);
        }
        obs.rows.push_back(std::move(row));
    }
    csv::write_file(dir + "/observations.csv", obs);

    csv::Table poi;
    poi.header = {"poi_id", "lat", "lon", "category", "levels", "area_m2"};
    for (const auto& rec : bundle.poi) {
        std::snprintf(buf, sizeof(buf), "%.8f", lat_ref + rec.y / m_per_deg);
        std::string lat = buf;
        std::snprintf(buf, sizeof(buf), "%.8f", lon_ref + rec.x / (m_per_deg * cos0));
        std::string lon = buf;
        std::snprintf(buf, sizeof(buf), "%.0f", rec.levels);
        std::string lvl = buf;
        std::snprintf(buf, sizeof(buf), "%.0f", rec.area_m2);
        poi.rows.push_back({rec.id, lat, lon, std::to_string(rec.category), lvl, buf});
    }
    csv::write_file(dir + "/poi.csv", poi);

    csv::Table roads;
    roads.header = {"sensor_id", "highway_level", "maxspeed", "is_oneway", "lanes"};
    for (const auto& r : bundle.roads) {
        std::snprintf(buf, sizeof(buf), "%.0f", r.highway_level);
        std::string hw = buf;
        std::snprintf(buf, sizeof(buf), "%.0f", r.maxspeed);
        std::string ms = buf;
        std::snprintf(buf, sizeof(buf), "%.0f", r.is_oneway);
        std::string ow = buf;
        std::snprintf(buf, sizeof(buf), "%.0f", r.lanes);
        roads.rows.push_back({r.sensor_id, hw, ms, ow, buf});
    }
    csv::write_file(dir + "/roads.csv", roads);
}

}  // namespace stsm
