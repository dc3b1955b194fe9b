#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stsm/dataset.hpp"
#include "stsm/features.hpp"
#include "stsm/graph.hpp"
#include "stsm/metrics.hpp"
#include "stsm/model.hpp"
#include "stsm/objectives.hpp"
#include "stsm/synthetic.hpp"

namespace stsm {

enum class Variant { STSM, STSM_NC, STSM_R, STSM_RNC };
Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);
bool variant_selective(Variant v);    // selective vs random masking
bool variant_contrastive(Variant v);  // lambda > 0 allowed

struct ExperimentConfig {
    Variant variant = Variant::STSM;
    double learning_rate = 0.01;
    double lr_decay = 0.97;
    int batch_size = 32;
    int epochs = 100;
    int patience = 15;
    double lambda = 0.5;
    double tau = 0.5;
    double delta_m = 0.5;
    double epsilon_s = 0.05;
    double epsilon_sg = 0.5;
    int q_kk = 1;
    int q_ku = 1;
    int top_k = 35;
    double r_poi = 200.0;
    std::uint64_t seed = 1;

    SplitMethod split_method = SplitMethod::Vertical;
    double unobserved_ratio = 0.5;
    double train_fraction = 0.7;
    int stride = 12;        // training window stride
    int test_stride = 0;    // 0 -> T_prime
    int valid_stride = 4;   // validation uses every valid_stride-th window

    ModelConfig model;

    // Either explicit CSV paths or a synthetic spec.
    std::string locations_path, observations_path, poi_path, roads_path;
    bool use_synthetic = true;
    SyntheticSpec synth;

    std::string out_dir = "out";

    void validate() const;
};

ExperimentConfig config_from_json_file(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);

// Everything derived from the dataset that does not depend on training state.
struct PreparedData {
    DatasetBundle bundle;
    RegionSplit split;
    NormStats stats;
    SensorPanel train_norm;  // all N columns, z-scored
    SensorPanel test_norm;
    SensorPanel test_raw;
    WindowSet train_windows, test_windows;
    AdjacencySet adj;  // A_s, A_sg over all N; A_dtw is the test-time matrix

    std::vector<int> obs_nodes;  // ascending global indices of V_o
    std::vector<int> obs_local_of_global;
    Tensor a_s_obs;              // A_s restricted to obs_nodes
    Tensor a_sg_obs;
    Tensor a_dtw_full_obs;       // observed-only DTW graph for the full view
    std::vector<std::vector<double>> obs_profiles;  // local order, train span
    Tensor obs_dtw_cache;        // obs x obs DTW distances, local order
    std::vector<std::string> obs_ids;

    // Selective masking inputs (empty for random variants).
    std::vector<double> mask_probabilities;
    SimilarityScores scores;
    double delta_s = 0.0;

    // Validation view: valid locations masked and pseudo-filled.
    std::vector<int> valid_local;
    SensorPanel valid_view;      // train_norm over obs columns with valid pseudo-filled
    Tensor a_dtw_valid;
};

PreparedData prepare_experiment(const ExperimentConfig& cfg);

struct EpochMask {
    int epoch = 0;
    std::uint64_t seed = 0;
    std::vector<int> masked_global;
    std::vector<double> probabilities;
};

struct TrainResult {
    ModelParams params;  // best-validation weights
    std::vector<LossReport> log;
    std::vector<double> valid_rmse;
    std::vector<EpochMask> masks;
    int best_epoch = -1;
    double best_valid_rmse = 0.0;
};

TrainResult train(const ExperimentConfig& cfg, const PreparedData& data);

struct PredictionSet {
    std::vector<double> predictions;  // flattened [window][n_u][T'] denormalized
    std::vector<double> targets;
};

PredictionSet predict_unobserved(const ExperimentConfig& cfg, const PreparedData& data,
                                 const ModelParams& params);

// Mean-of-training-data and IDW-persistence reference predictors.
PredictionSet baseline_mean(const ExperimentConfig& cfg, const PreparedData& data);
PredictionSet baseline_idw_persistence(const ExperimentConfig& cfg, const PreparedData& data);

struct ExperimentResult {
    MetricReport metrics;
    MetricReport baseline_mean_metrics;
    MetricReport baseline_idw_metrics;
    TrainResult training;
    double wall_seconds = 0.0;
};

// Full pipeline with artifacts written into cfg.out_dir: results.json,
// training_log.csv, mask_audit.json, checkpoint.json and SVG plots.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

Tensor submatrix(const Tensor& a, const std::vector<int>& idx);

}  // namespace stsm
