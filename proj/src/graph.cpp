#include "stsm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

namespace stsm {

namespace {
double dist2d(const Location& a, const Location& b) { return std::hypot(a.x - b.x, a.y - b.y); }
}  // namespace

Tensor gaussian_threshold_adjacency(const std::vector<Location>& locations, double sigma,
                                    double epsilon) {
    if (sigma <= 0.0) throw ConfigError("gaussian adjacency: sigma must be > 0");
    if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("gaussian adjacency: epsilon must be in [0,1]");
    const int n = static_cast<int>(locations.size());
    for (const auto& l : locations)
        if (!std::isfinite(l.x) || !std::isfinite(l.y))
            throw InputError("gaussian adjacency: non-finite coordinate for " + l.id);
    Tensor a({n, n}, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const double d = dist2d(locations[static_cast<std::size_t>(i)], locations[static_cast<std::size_t>(j)]);
            if (std::exp(-(d * d) / (sigma * sigma)) >= epsilon) a(i, j) = 1.0;
        }
    return a;
}

double pairwise_distance_std(const std::vector<Location>& locations) {
    const int n = static_cast<int>(locations.size());
    if (n < 2) throw InputError("pairwise_distance_std: need at least two locations");
    double sum = 0.0, sq = 0.0;
    long long cnt = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double d = dist2d(locations[static_cast<std::size_t>(i)], locations[static_cast<std::size_t>(j)]);
            sum += d;
            sq += d * d;
            ++cnt;
        }
    const double mean = sum / cnt;
    return std::sqrt(std::max(0.0, sq / cnt - mean * mean));
}

std::vector<int> one_hop_subgraph(const Tensor& a_sg, int center) {
    const int n = a_sg.dim(0);
    if (center < 0 || center >= n) throw InputError("one_hop_subgraph: unknown center index");
    std::vector<int> out;
    for (int j = 0; j < n; ++j)
        if (j == center || a_sg(center, j) != 0.0) out.push_back(j);
    return out;
}

IdwRow idw_weights(const Location& target, const std::vector<Location>& locations,
                   const std::vector<int>& source_idx) {
    if (source_idx.empty()) throw InputError("idw_weights: no sources");
    IdwRow row;
    double total = 0.0;
    for (int j : source_idx) {
        const double d = dist2d(target, locations[static_cast<std::size_t>(j)]);
        if (d <= 0.0)
            throw InputError("idw_weights: coincident location " + locations[static_cast<std::size_t>(j)].id);
        row.sources.push_back(j);
        row.weights.push_back(1.0 / d);
        total += 1.0 / d;
    }
    for (double& w : row.weights) w /= total;
    return row;
}

Tensor pseudo_observations(const SensorPanel& panel, const std::vector<int>& targets,
                           const std::vector<IdwRow>& rows) {
    if (rows.size() != targets.size())
        throw InternalError("pseudo_observations: missing weight row for a target");
    Tensor out({panel.steps(), static_cast<int>(targets.size()), panel.n_channels}, 0.0);
    for (std::size_t ti = 0; ti < targets.size(); ++ti) {
        const IdwRow& row = rows[ti];
        for (int t = 0; t < panel.steps(); ++t)
            for (int c = 0; c < panel.n_channels; ++c) {
                double v = 0.0;
                for (std::size_t k = 0; k < row.sources.size(); ++k)
                    v += row.weights[k] * panel.value(t, row.sources[k], c);
                out(t, static_cast<int>(ti), c) = v;
            }
    }
    return out;
}

void apply_pseudo_observations(SensorPanel& panel, const std::vector<int>& targets,
                               const std::vector<IdwRow>& rows) {
    Tensor p = pseudo_observations(panel, targets, rows);
    for (std::size_t ti = 0; ti < targets.size(); ++ti)
        for (int t = 0; t < panel.steps(); ++t)
            for (int c = 0; c < panel.n_channels; ++c)
                panel.value(t, targets[ti], c) = p(t, static_cast<int>(ti), c);
}

double dtw_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw InputError("dtw_distance: empty sequence");
    const std::size_t n = a.size(), m = b.size();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> prev(m + 1, kInf), cur(m + 1, kInf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = kInf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double cost = std::abs(a[i - 1] - b[j - 1]);
            cur[j] = cost + std::min({prev[j], cur[j - 1], prev[j - 1]});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

std::vector<std::vector<double>> daily_profiles(const SensorPanel& panel,
                                                const std::vector<int>& nodes) {
    std::vector<std::vector<double>> out;
    for (int i : nodes) {
        std::vector<double> sum(static_cast<std::size_t>(panel.td), 0.0);
        std::vector<int> cnt(static_cast<std::size_t>(panel.td), 0);
        for (int t = 0; t < panel.steps(); ++t) {
            const int slot = panel.interval_id(t);
            sum[static_cast<std::size_t>(slot)] += panel.value(t, i);
            ++cnt[static_cast<std::size_t>(slot)];
        }
        for (int s = 0; s < panel.td; ++s)
            if (cnt[static_cast<std::size_t>(s)] > 0) sum[static_cast<std::size_t>(s)] /= cnt[static_cast<std::size_t>(s)];
        // z-score per location
        double mean = std::accumulate(sum.begin(), sum.end(), 0.0) / panel.td;
        double sq = 0.0;
        for (double v : sum) sq += (v - mean) * (v - mean);
        double sd = std::sqrt(sq / panel.td);
        if (sd <= 0.0) sd = 1.0;
        for (double& v : sum) v = (v - mean) / sd;
        out.push_back(std::move(sum));
    }
    return out;
}

Tensor dtw_matrix(const std::vector<std::vector<double>>& profiles, const std::vector<int>& a,
                  const std::vector<int>& b) {
    Tensor d({static_cast<int>(a.size()), static_cast<int>(b.size())}, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            d(static_cast<int>(i), static_cast<int>(j)) =
                dtw_distance(profiles[static_cast<std::size_t>(a[i])], profiles[static_cast<std::size_t>(b[j])]);
    return d;
}

Tensor temporal_adjacency(const std::vector<std::vector<double>>& profiles,
                          const std::vector<int>& observed, const std::vector<int>& targets,
                          int q_kk, int q_ku, const std::vector<std::string>& ids,
                          const Tensor* obs_obs_dtw) {
    if (q_kk < 1 || q_ku < 1) throw ConfigError("temporal_adjacency: q_kk and q_ku must be >= 1");
    const int n = static_cast<int>(profiles.size());
    Tensor a({n, n}, 0.0);

    Tensor oo;
    if (obs_obs_dtw) {
        oo = *obs_obs_dtw;
    } else {
        oo = dtw_matrix(profiles, observed, observed);
    }

    auto rank_and_pick = [&](const std::vector<double>& dists, const std::vector<int>& cands,
                             int q) {
        std::vector<int> order(cands.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            if (dists[static_cast<std::size_t>(x)] != dists[static_cast<std::size_t>(y)])
                return dists[static_cast<std::size_t>(x)] < dists[static_cast<std::size_t>(y)];
            return ids[static_cast<std::size_t>(cands[static_cast<std::size_t>(x)])] <
                   ids[static_cast<std::size_t>(cands[static_cast<std::size_t>(y)])];
        });
        std::vector<int> picks;
        for (int k = 0; k < std::min<int>(q, static_cast<int>(order.size())); ++k)
            picks.push_back(cands[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])]);
        return picks;
    };

    // Observed-observed: union of directed top-q_kk picks, symmetrized.
    for (std::size_t i = 0; i < observed.size(); ++i) {
        std::vector<double> dists;
        std::vector<int> cands;
        for (std::size_t j = 0; j < observed.size(); ++j) {
            if (j == i) continue;
            dists.push_back(oo(static_cast<int>(i), static_cast<int>(j)));
            cands.push_back(observed[j]);
        }
        for (int pick : rank_and_pick(dists, cands, q_kk)) {
            a(observed[i], pick) = 1.0;
            a(pick, observed[i]) = 1.0;
        }
    }

    // Targets receive only: edges run observed -> target; target rows toward
    // observed columns stay zero.
    for (int u : targets) {
        std::vector<double> dists;
        std::vector<int> cands;
        for (int j : observed) {
            dists.push_back(dtw_distance(profiles[static_cast<std::size_t>(u)], profiles[static_cast<std::size_t>(j)]));
            cands.push_back(j);
        }
        for (int pick : rank_and_pick(dists, cands, q_ku)) a(pick, u) = 1.0;
    }

    return a;
}

Tensor gcn_norm(const Tensor& a, bool symmetric) {
    const int n = a.dim(0);
    Tensor at({n, n});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) at(i, j) = a(i, j) + (i == j ? 1.0 : 0.0);
    std::vector<double> deg(static_cast<std::size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) deg[static_cast<std::size_t>(i)] += at(i, j);
    Tensor out({n, n});
    if (symmetric) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                out(i, j) = at(i, j) / std::sqrt(deg[static_cast<std::size_t>(i)] * deg[static_cast<std::size_t>(j)]);
    } else {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) out(i, j) = at(i, j) / deg[static_cast<std::size_t>(i)];
    }
    return out;
}

void export_adjacency_csv(const Tensor& a, const std::vector<std::string>& ids,
                          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write file: " + path);
    out << "src,dst,weight\n";
    char buf[64];
    for (int i = 0; i < a.dim(0); ++i)
        for (int j = 0; j < a.dim(1); ++j) {
            if (a(i, j) == 0.0) continue;
            std::snprintf(buf, sizeof(buf), "%.17g", a(i, j));
            out << ids[static_cast<std::size_t>(i)] << ',' << ids[static_cast<std::size_t>(j)] << ',' << buf << '\n';
        }
}

}  // namespace stsm
