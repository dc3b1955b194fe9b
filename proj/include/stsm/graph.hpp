#pragma once

#include <string>
#include <vector>

#include "stsm/dataset.hpp"
#include "stsm/tensor.hpp"

namespace stsm {

// Spatial and temporal adjacency matrices with their thresholds. A_dtw rows
// are senders: entry (i,j) = 1 means i may send a message to j, so the
// (target -> observed) block is identically zero.
struct AdjacencySet {
    Tensor a_s;
    Tensor a_sg;
    Tensor a_dtw;
    double epsilon_s = 0.0;
    double epsilon_sg = 0.0;
    double sigma = 0.0;
};

// Normalized inverse-distance weights from a target to source locations.
struct IdwRow {
    std::vector<int> sources;
    std::vector<double> weights;
};

// Entry (i,j) = 1 iff exp(-dist^2 / sigma^2) >= epsilon.
Tensor gaussian_threshold_adjacency(const std::vector<Location>& locations, double sigma,
                                    double epsilon);

// Standard deviation of all pairwise distances; the default kernel bandwidth.
double pairwise_distance_std(const std::vector<Location>& locations);

// {center} plus the 1-hop neighbours of center under a_sg, ascending indices.
std::vector<int> one_hop_subgraph(const Tensor& a_sg, int center);

IdwRow idw_weights(const Location& target, const std::vector<Location>& locations,
                   const std::vector<int>& source_idx);

// Weighted source average per time step and channel; [steps x targets x C].
Tensor pseudo_observations(const SensorPanel& panel, const std::vector<int>& targets,
                           const std::vector<IdwRow>& rows);
void apply_pseudo_observations(SensorPanel& panel, const std::vector<int>& targets,
                               const std::vector<IdwRow>& rows);

// Classic unconstrained DTW with absolute-difference local cost.
double dtw_distance(const std::vector<double>& a, const std::vector<double>& b);

// Per-location mean value at each interval of day, z-scored per location.
std::vector<std::vector<double>> daily_profiles(const SensorPanel& panel,
                                                const std::vector<int>& nodes);

// DTW distances between two node sets; entry (i,j) = dtw(profiles[a[i]], profiles[b[j]]).
Tensor dtw_matrix(const std::vector<std::vector<double>>& profiles, const std::vector<int>& a,
                  const std::vector<int>& b);

// Top-q DTW-similarity adjacency. Observed-observed picks are symmetrized;
// targets only receive. Ties break by smaller DTW then lexical id.
// obs_obs_dtw, when given, is a cache aligned with `observed` on both axes.
Tensor temporal_adjacency(const std::vector<std::vector<double>>& profiles,
                          const std::vector<int>& observed, const std::vector<int>& targets,
                          int q_kk, int q_ku, const std::vector<std::string>& ids,
                          const Tensor* obs_obs_dtw = nullptr);

// GCN propagation matrix over A+I: symmetric normalization for symmetric A,
// row normalization otherwise.
Tensor gcn_norm(const Tensor& a, bool symmetric);

void export_adjacency_csv(const Tensor& a, const std::vector<std::string>& ids,
                          const std::string& path);

}  // namespace stsm
