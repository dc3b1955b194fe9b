#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <string>

#include "stsm/pipeline.hpp"

using namespace stsm;

namespace {

std::string tiny_config_text(const std::string& out_dir, const std::string& variant = "STSM",
                             std::uint64_t seed = 3) {
    return std::string("{") + "\"variant\": \"" + variant + "\"," +
           (variant == "STSM" || variant == "STSM-R" ? "\"lambda\": 0.5," : "") +
           "\"epochs\": 2, \"batch_size\": 4, \"patience\": 3,"
           "\"tau\": 0.5, \"delta_m\": 0.5, \"epsilon_s\": 0.05, \"epsilon_sg\": 0.9,"
           "\"top_k\": 2, \"seed\": " +
           std::to_string(seed) +
           ", \"split_method\": \"vertical\","
           "\"unobserved_ratio\": 0.5, \"train_fraction\": 0.7, \"stride\": 4,"
           "\"valid_stride\": 2,"
           "\"model\": {\"L\": 1, \"k\": 2, \"hidden\": 8, \"mid\": 4, \"proj\": 4,"
           "\"kernel_size\": 2, \"T\": 4, \"T_prime\": 4},"
           "\"synth\": {\"n_locations\": 16, \"days\": 3, \"interval_minutes\": 30,"
           "\"seed\": 11, \"noise\": 1.0},"
           "\"out_dir\": \"" +
           out_dir + "\"}";
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("stsm_pipe_" + std::to_string(std::random_device{}()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("config defaults and variant handling") {
    ExperimentConfig c = config_from_json_text("{}");
    CHECK(c.variant == Variant::STSM);
    CHECK(c.learning_rate == 0.01);
    CHECK(c.lambda == 0.5);
    CHECK(c.use_synthetic);

    // NC variants default lambda to 0 when the key is absent
    ExperimentConfig nc = config_from_json_text("{\"variant\": \"STSM-NC\"}");
    CHECK(nc.lambda == 0.0);
    ExperimentConfig rnc = config_from_json_text("{\"variant\": \"STSM-RNC\"}");
    CHECK(rnc.lambda == 0.0);

    // explicit inconsistency is rejected, not silently fixed
    CHECK_THROWS_AS(config_from_json_text("{\"variant\": \"STSM-NC\", \"lambda\": 0.5}"),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json_text("{\"variant\": \"STSM\", \"lambda\": 0.0}"),
                    ConfigError);
    CHECK_THROWS_AS(config_from_json_text("{\"variant\": \"STSM\", \"batch_size\": 1}"),
                    ConfigError);
}

TEST_CASE("config rejects unknown keys and mixed data sources") {
    CHECK_THROWS_AS(config_from_json_text("{\"epoch\": 5}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("{\"model\": {\"width\": 4}}"), ConfigError);
    CHECK_THROWS_AS(config_from_json_text("not json"), FormatError);
    CHECK_THROWS_AS(config_from_json_text(
                        "{\"data\": {\"locations\": \"a\", \"observations\": \"b\","
                        "\"poi\": \"c\", \"roads\": \"d\"}, \"synth\": {}}"),
                    ConfigError);
    // data block alone disables synthetic input
    ExperimentConfig c = config_from_json_text(
        "{\"data\": {\"locations\": \"a\", \"observations\": \"b\","
        "\"poi\": \"c\", \"roads\": \"d\"}}");
    CHECK_FALSE(c.use_synthetic);
    CHECK(c.roads_path == "d");
}

TEST_CASE("config survives a serialization round trip") {
    TempDir dir;
    ExperimentConfig c = config_from_json_text(tiny_config_text(dir.path.string(), "STSM-R", 9));
    ExperimentConfig back = config_from_json_text(config_to_json_text(c));
    CHECK(config_to_json_text(back) == config_to_json_text(c));
    CHECK(back.variant == Variant::STSM_R);
    CHECK(back.seed == 9);
    CHECK(back.synth.n_locations == 16);
}

TEST_CASE("prepared data invariants") {
    TempDir dir;
    ExperimentConfig cfg = config_from_json_text(tiny_config_text(dir.path.string()));
    PreparedData data = prepare_experiment(cfg);
    const int n = static_cast<int>(data.bundle.locations.size());
    REQUIRE(n == 16);

    // the split partitions all locations
    std::vector<int> seen(static_cast<std::size_t>(n), 0);
    for (int i : data.split.train_idx) ++seen[static_cast<std::size_t>(i)];
    for (int i : data.split.valid_idx) ++seen[static_cast<std::size_t>(i)];
    for (int i : data.split.test_idx) ++seen[static_cast<std::size_t>(i)];
    for (int c : seen) CHECK(c == 1);

    // observed nodes are ascending and consistent with the local map
    CHECK(std::is_sorted(data.obs_nodes.begin(), data.obs_nodes.end()));
    for (std::size_t l = 0; l < data.obs_nodes.size(); ++l)
        CHECK(data.obs_local_of_global[static_cast<std::size_t>(data.obs_nodes[l])] ==
              static_cast<int>(l));

    // the test-time temporal graph never lets unobserved nodes send
    std::set<int> observed(data.obs_nodes.begin(), data.obs_nodes.end());
    for (int u : data.split.test_idx)
        for (int j = 0; j < n; ++j) CHECK(data.adj.a_dtw(u, j) == 0.0);

    // selective variant carries calibrated probabilities per observed center
    REQUIRE(data.mask_probabilities.size() == data.obs_nodes.size());
    for (double p : data.mask_probabilities) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    CHECK(data.delta_s >= 1.0);  // subgraphs include at least their center

    // normalization comes from observed-train columns only and round-trips
    CHECK(data.stats.mean.size() == 1);
    CHECK(data.stats.std[0] > 0.0);
    CHECK(data.train_windows.T == 4);
    CHECK(!data.train_windows.windows.empty());
    CHECK(!data.test_windows.windows.empty());
}

TEST_CASE("training is deterministic for a fixed seed") {
    TempDir dir;
    ExperimentConfig cfg = config_from_json_text(tiny_config_text(dir.path.string()));
    PreparedData data = prepare_experiment(cfg);
    TrainResult a = train(cfg, data);
    TrainResult b = train(cfg, data);
    REQUIRE(a.log.size() == b.log.size());
    CHECK(!a.log.empty());
    for (std::size_t e = 0; e < a.log.size(); ++e) {
        CHECK(a.log[e].l_total == b.log[e].l_total);
        CHECK(a.log[e].l_pred == b.log[e].l_pred);
        CHECK(a.log[e].l_cl == b.log[e].l_cl);
        CHECK(std::isfinite(a.log[e].l_total));
    }
    REQUIRE(a.masks.size() == b.masks.size());
    for (std::size_t e = 0; e < a.masks.size(); ++e) {
        CHECK(a.masks[e].masked_global == b.masks[e].masked_global);
        CHECK(a.masks[e].seed == b.masks[e].seed);
    }
    CHECK(a.best_epoch == b.best_epoch);
    CHECK(a.best_valid_rmse == b.best_valid_rmse);

    // a different seed draws different epoch masks
    ExperimentConfig other = cfg;
    other.seed = 1234;
    TrainResult c = train(other, prepare_experiment(other));
    bool any_diff = c.log.empty() || a.log.empty();
    for (std::size_t e = 0; e < std::min(a.masks.size(), c.masks.size()); ++e)
        any_diff = any_diff || a.masks[e].masked_global != c.masks[e].masked_global;
    CHECK(any_diff);
}

TEST_CASE("prediction from a checkpoint is bitwise reproducible") {
    TempDir dir;
    ExperimentConfig cfg = config_from_json_text(tiny_config_text(dir.path.string()));
    PreparedData data = prepare_experiment(cfg);
    TrainResult tr = train(cfg, data);

    PredictionSet p1 = predict_unobserved(cfg, data, tr.params);
    PredictionSet p2 = predict_unobserved(cfg, data, tr.params);
    CHECK(p1.predictions == p2.predictions);
    CHECK(p1.targets == p2.targets);
    const std::size_t expected = data.test_windows.windows.size() *
                                 data.split.test_idx.size() *
                                 static_cast<std::size_t>(cfg.model.T_prime);
    CHECK(p1.predictions.size() == expected);

    ModelConfig mc = cfg.model;
    mc.td = data.train_norm.td;
    mc.channels = data.train_norm.n_channels;
    const std::string ck_path = (dir.path / "ck.json").string();
    save_checkpoint(ck_path, mc, data.stats, tr.params);
    Checkpoint ck = load_checkpoint(ck_path);
    PredictionSet p3 = predict_unobserved(cfg, data, ck.params);
    CHECK(p3.predictions == p1.predictions);

    // baselines cover the same prediction slots
    CHECK(baseline_mean(cfg, data).predictions.size() == expected);
    CHECK(baseline_idw_persistence(cfg, data).predictions.size() == expected);
}

TEST_CASE("run_experiment writes all artifacts deterministically") {
    TempDir dir;
    const std::string out1 = (dir.path / "a").string(), out2 = (dir.path / "b").string();
    ExperimentConfig cfg1 = config_from_json_text(tiny_config_text(out1));
    ExperimentResult r1 = run_experiment(cfg1);
    for (const char* name : {"results.json", "training_log.csv", "mask_audit.json",
                             "checkpoint.json", "loss_curves.svg", "validation_rmse.svg",
                             "prediction_sample.svg"})
        CHECK(std::filesystem::exists(std::filesystem::path(out1) / name));
    CHECK(std::isfinite(r1.metrics.rmse));
    CHECK(r1.metrics.rmse >= r1.metrics.mae);

    ExperimentConfig cfg2 = config_from_json_text(tiny_config_text(out2));
    run_experiment(cfg2);
    CHECK(slurp(std::filesystem::path(out1) / "results.json") ==
          slurp(std::filesystem::path(out2) / "results.json"));
    CHECK(slurp(std::filesystem::path(out1) / "training_log.csv") ==
          slurp(std::filesystem::path(out2) / "training_log.csv"));
    CHECK(slurp(std::filesystem::path(out1) / "mask_audit.json") ==
          slurp(std::filesystem::path(out2) / "mask_audit.json"));

    const std::string log = slurp(std::filesystem::path(out1) / "training_log.csv");
    CHECK(log.rfind("epoch,L_pred,L_cl,L_total\n", 0) == 0);
}

TEST_CASE("non-contrastive variants train with a zero contrastive term") {
    TempDir dir;
    ExperimentConfig cfg =
        config_from_json_text(tiny_config_text(dir.path.string(), "STSM-RNC"));
    CHECK(cfg.lambda == 0.0);
    PreparedData data = prepare_experiment(cfg);
    CHECK(data.mask_probabilities.empty());  // random masking needs no scores
    TrainResult tr = train(cfg, data);
    for (const auto& e : tr.log) {
        CHECK(e.l_cl == 0.0);
        CHECK(e.l_total == e.l_pred);
    }
}
