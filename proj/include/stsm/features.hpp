#pragma once

#include <cstdint>
#include <vector>

#include "stsm/dataset.hpp"
#include "stsm/graph.hpp"

namespace stsm {

inline constexpr int kPoiCategories = 26;
inline constexpr int kEmbeddingDim = kPoiCategories + 5;  // counts + scale + 4 road dims

// Raw POI counts per category inside radius r_poi plus the prosperity scale
// (building floors + park areas; normalized later against the dataset max).
struct RegionFeatures {
    std::vector<double> poi_counts;  // length 26
    double scale = 0.0;
};

RegionFeatures poi_region_embedding(const Location& location, const PoiTable& poi, double r_poi);

// Concatenation [counts || scale || road], length 31.
std::vector<double> location_embedding(const std::vector<double>& region_part,
                                       const std::vector<double>& road_part);

// Full per-location embeddings: raw build, scale normalization by dataset max,
// then per-dimension min-max scaling across the dataset.
std::vector<std::vector<double>> build_location_embeddings(const std::vector<Location>& locations,
                                                           const PoiTable& poi,
                                                           const RoadTable& roads, double r_poi);

std::vector<double> subgraph_embedding(const std::vector<std::vector<double>>& member_embeddings);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct SimilarityScores {
    std::vector<double> s_sg;   // cosine similarity to the unobserved embedding
    std::vector<double> sp_sg;  // 1 / dist to the unobserved centroid, floored at 1 m
};

// One entry per observed center, in `observed` order. l_u is the mean
// embedding over unobserved locations; c_u their coordinate centroid.
SimilarityScores similarity_scores(const std::vector<std::vector<double>>& subgraph_embeddings,
                                   const std::vector<double>& unobserved_embedding,
                                   const std::vector<Location>& locations,
                                   const std::vector<int>& observed, double cu_x, double cu_y);

// Masking probabilities: top-K zeroing of similarities, equal-contribution
// normalization against delta_ms = delta_m / delta_s, clipped to [0,1].
std::vector<double> masking_probabilities(std::vector<double> s_sg,
                                          const std::vector<double>& sp_sg, double delta_m,
                                          double delta_s, int top_k);

struct MaskingPlan {
    std::vector<double> similarities;
    std::vector<double> proximities;
    std::vector<double> probabilities;  // per observed center
    std::vector<int> masked;            // location indices, ascending
    double delta_m = 0.0;
    double delta_s = 0.0;
    double delta_ms = 0.0;
    int top_k = 0;
};

// Bernoulli draw per center; masked set is the union of drawn centers'
// sub-graphs intersected with the observed ids.
std::vector<int> draw_selective_mask(const std::vector<double>& probabilities,
                                     const std::vector<int>& observed, const Tensor& a_sg,
                                     std::uint64_t rng_seed);

// Uniformly pick unmasked centers and mask their sub-graphs until
// |mask| >= N_o * delta_m.
std::vector<int> draw_random_mask(const std::vector<int>& observed, const Tensor& a_sg,
                                  double delta_m, std::uint64_t rng_seed);

double mean_subgraph_size(const Tensor& a_sg, const std::vector<int>& observed);

}  // namespace stsm
