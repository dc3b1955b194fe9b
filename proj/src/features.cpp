#include "stsm/features.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace stsm {

RegionFeatures poi_region_embedding(const Location& location, const PoiTable& poi, double r_poi) {
    if (r_poi <= 0.0) throw ConfigError("poi_region_embedding: r_poi must be > 0");
    RegionFeatures f;
    f.poi_counts.assign(kPoiCategories, 0.0);
    for (std::size_t r = 0; r < poi.size(); ++r) {
        const PoiRecord& rec = poi[r];
        if (rec.category < 1 || rec.category > kPoiCategories)
            throw InputError("unknown POI category " + std::to_string(rec.category) + " in row " +
                             std::to_string(r));
        const double d = std::hypot(rec.x - location.x, rec.y - location.y);
        if (d > r_poi) continue;
        f.poi_counts[static_cast<std::size_t>(rec.category - 1)] += 1.0;
        f.scale += rec.levels + rec.area_m2;
    }
    return f;
}

std::vector<double> location_embedding(const std::vector<double>& region_part,
                                       const std::vector<double>& road_part) {
    if (region_part.size() != kPoiCategories + 1 || road_part.size() != 4)
        throw InternalError("location_embedding: part length mismatch");
    std::vector<double> full = region_part;
    full.insert(full.end(), road_part.begin(), road_part.end());
    return full;
}

std::vector<std::vector<double>> build_location_embeddings(const std::vector<Location>& locations,
                                                           const PoiTable& poi,
                                                           const RoadTable& roads, double r_poi) {
    const std::size_t n = locations.size();
    std::vector<RegionFeatures> region(n);
    double scale_max = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        region[i] = poi_region_embedding(locations[i], poi, r_poi);
        scale_max = std::max(scale_max, region[i].scale);
    }
    std::vector<std::vector<double>> full(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> region_part = region[i].poi_counts;
        region_part.push_back(scale_max > 0.0 ? region[i].scale / scale_max : 0.0);
        std::vector<double> road_part(4, 0.0);
        if (locations[i].nearest_road >= 0) {
            const RoadRecord& r = roads[static_cast<std::size_t>(locations[i].nearest_road)];
            road_part = {r.highway_level, r.maxspeed, r.is_oneway, r.lanes};
        }
        full[i] = location_embedding(region_part, road_part);
    }
    // Per-dimension min-max scaling across the dataset.
    for (int d = 0; d < kEmbeddingDim; ++d) {
        double lo = full[0][static_cast<std::size_t>(d)], hi = lo;
        for (const auto& v : full) {
            lo = std::min(lo, v[static_cast<std::size_t>(d)]);
            hi = std::max(hi, v[static_cast<std::size_t>(d)]);
        }
        const double range = hi - lo;
        for (auto& v : full)
            v[static_cast<std::size_t>(d)] = range > 0.0 ? (v[static_cast<std::size_t>(d)] - lo) / range : 0.0;
    }
    return full;
}

std::vector<double> subgraph_embedding(const std::vector<std::vector<double>>& member_embeddings) {
    if (member_embeddings.empty()) throw InputError("subgraph_embedding: empty member set");
    std::vector<double> mean(member_embeddings[0].size(), 0.0);
    for (const auto& v : member_embeddings)
        for (std::size_t d = 0; d < mean.size(); ++d) mean[d] += v[d];
    for (double& x : mean) x /= static_cast<double>(member_embeddings.size());
    return mean;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) return 0.0;  // zero-vector convention
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

SimilarityScores similarity_scores(const std::vector<std::vector<double>>& subgraph_embeddings,
                                   const std::vector<double>& unobserved_embedding,
                                   const std::vector<Location>& locations,
                                   const std::vector<int>& observed, double cu_x, double cu_y) {
    if (subgraph_embeddings.size() != observed.size())
        throw InternalError("similarity_scores: one embedding per observed center expected");
    SimilarityScores s;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        s.s_sg.push_back(cosine_similarity(subgraph_embeddings[i], unobserved_embedding));
        const Location& l = locations[static_cast<std::size_t>(observed[i])];
        const double d = std::max(1.0, std::hypot(l.x - cu_x, l.y - cu_y));
        s.sp_sg.push_back(1.0 / d);
    }
    return s;
}

std::vector<double> masking_probabilities(std::vector<double> s_sg,
                                          const std::vector<double>& sp_sg, double delta_m,
                                          double delta_s, int top_k) {
    if (!(delta_m > 0.0 && delta_m < 1.0)) throw ConfigError("masking: delta_m must be in (0,1)");
    if (top_k < 1) throw ConfigError("masking: K must be >= 1");
    if (delta_s <= 0.0) throw ConfigError("masking: delta_s must be > 0");
    const std::size_t n = s_sg.size();
    if (sp_sg.size() != n) throw InternalError("masking: score length mismatch");
    const double delta_ms = delta_m / delta_s;

    // Keep only the top-K similarities; the rest contribute through proximity.
    if (top_k < static_cast<int>(n)) {
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (s_sg[a] != s_sg[b]) return s_sg[a] > s_sg[b];
            return a < b;
        });
        for (std::size_t k = static_cast<std::size_t>(top_k); k < n; ++k) s_sg[order[k]] = 0.0;
    }

    double mean_s = 0.0, mean_sp = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_s += s_sg[i];
        mean_sp += sp_sg[i];
    }
    mean_s /= static_cast<double>(n);
    mean_sp /= static_cast<double>(n);
    if (mean_s == 0.0 && mean_sp == 0.0)
        throw ConfigError("masking: degenerate all-zero similarity and proximity scores");

    std::vector<double> p(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double term_s = mean_s != 0.0 ? s_sg[i] * delta_ms / mean_s : 0.0;
        const double term_sp = mean_sp != 0.0 ? sp_sg[i] * delta_ms / mean_sp : 0.0;
        p[i] = std::clamp((term_s + term_sp) / 2.0, 0.0, 1.0);
    }
    return p;
}

namespace {
std::vector<int> finish_mask(std::vector<char>& in_mask, const std::vector<char>& is_observed) {
    std::vector<int> out;
    for (std::size_t i = 0; i < in_mask.size(); ++i)
        if (in_mask[i] && is_observed[i]) out.push_back(static_cast<int>(i));
    return out;
}
}  // namespace

std::vector<int> draw_selective_mask(const std::vector<double>& probabilities,
                                     const std::vector<int>& observed, const Tensor& a_sg,
                                     std::uint64_t rng_seed) {
    if (probabilities.size() != observed.size())
        throw InternalError("draw_selective_mask: one probability per observed center expected");
    const int n = a_sg.dim(0);
    std::vector<char> is_observed(static_cast<std::size_t>(n), 0), in_mask(static_cast<std::size_t>(n), 0);
    for (int i : observed) is_observed[static_cast<std::size_t>(i)] = 1;
    std::mt19937_64 rng(rng_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (std::size_t k = 0; k < observed.size(); ++k) {
        const bool drawn = unif(rng) < probabilities[k];
        if (!drawn) continue;
        for (int j : one_hop_subgraph(a_sg, observed[k])) in_mask[static_cast<std::size_t>(j)] = 1;
    }
    return finish_mask(in_mask, is_observed);
}

std::vector<int> draw_random_mask(const std::vector<int>& observed, const Tensor& a_sg,
                                  double delta_m, std::uint64_t rng_seed) {
    if (!(delta_m > 0.0 && delta_m < 1.0)) throw ConfigError("masking: delta_m must be in (0,1)");
    const int n = a_sg.dim(0);
    std::vector<char> is_observed(static_cast<std::size_t>(n), 0), in_mask(static_cast<std::size_t>(n), 0);
    for (int i : observed) is_observed[static_cast<std::size_t>(i)] = 1;
    const double threshold = static_cast<double>(observed.size()) * delta_m;
    std::mt19937_64 rng(rng_seed);
    std::vector<int> unpicked = observed;
    int masked_count = 0;
    while (masked_count < threshold && !unpicked.empty()) {
        // Pick a uniformly random center that is itself still unmasked.
        std::vector<int> candidates;
        for (int i : unpicked)
            if (!in_mask[static_cast<std::size_t>(i)]) candidates.push_back(i);
        if (candidates.empty()) break;
        std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
        const int center = candidates[pick(rng)];
        for (int j : one_hop_subgraph(a_sg, center))
            if (is_observed[static_cast<std::size_t>(j)] && !in_mask[static_cast<std::size_t>(j)]) {
                in_mask[static_cast<std::size_t>(j)] = 1;
                ++masked_count;
            }
        unpicked.erase(std::find(unpicked.begin(), unpicked.end(), center));
    }
    return finish_mask(in_mask, is_observed);
}

double mean_subgraph_size(const Tensor& a_sg, const std::vector<int>& observed) {
    double total = 0.0;
    for (int i : observed) total += static_cast<double>(one_hop_subgraph(a_sg, i).size());
    return total / static_cast<double>(observed.size());
}

}  // namespace stsm
