#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "stsm/pipeline.hpp"

namespace {

using namespace stsm;

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    std::string variant;
    std::uint64_t seed = 0;
    bool has_seed = false;
};

ExperimentConfig load_config(const GlobalOpts& g) {
    ExperimentConfig cfg = g.config_path.empty() ? ExperimentConfig{}
                                                 : config_from_json_file(g.config_path);
    if (g.has_seed) cfg.seed = g.seed;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    if (!g.variant.empty()) {
        cfg.variant = variant_from_string(g.variant);
        if (!variant_contrastive(cfg.variant)) cfg.lambda = 0.0;
        if (variant_contrastive(cfg.variant) && cfg.lambda <= 0.0) cfg.lambda = 0.5;
    }
    cfg.validate();
    return cfg;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << text;
}

void write_training_artifacts(const ExperimentConfig& cfg, const PreparedData& data,
                              const TrainResult& tr) {
    std::filesystem::create_directories(cfg.out_dir);
    const std::string dir = cfg.out_dir + "/";
    ModelConfig mc = cfg.model;
    mc.td = data.train_norm.td;
    mc.channels = data.train_norm.n_channels;
    save_checkpoint(dir + "checkpoint.json", mc, data.stats, tr.params);

    std::string log = "epoch,L_pred,L_cl,L_total\n";
    char buf[96];
    for (std::size_t e = 0; e < tr.log.size(); ++e) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e, tr.log[e].l_pred,
                      tr.log[e].l_cl, tr.log[e].l_total);
        log += buf;
    }
    write_text(dir + "training_log.csv", log);

    nlohmann::json audit = nlohmann::json::array();
    for (const auto& m : tr.masks) {
        nlohmann::json ids = nlohmann::json::array();
        for (int gidx : m.masked_global)
            ids.push_back(data.bundle.locations[static_cast<std::size_t>(gidx)].id);
        audit.push_back(
            {{"epoch", m.epoch}, {"seed", m.seed}, {"masked_ids", ids}, {"P", m.probabilities}});
    }
    write_text(dir + "mask_audit.json", audit.dump(2) + "\n");
}

void write_predictions_csv(const ExperimentConfig& cfg, const PreparedData& data,
                           const PredictionSet& p, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << "window,location_id,step,prediction,target\n";
    char buf[96];
    std::size_t at = 0;
    for (std::size_t wi = 0; wi < data.test_windows.windows.size(); ++wi)
        for (int u : data.split.test_idx)
            for (int t = 0; t < cfg.model.T_prime; ++t) {
                std::snprintf(buf, sizeof(buf), "%zu,%s,%d,%.17g,%.17g\n", wi,
                              data.bundle.locations[static_cast<std::size_t>(u)].id.c_str(), t,
                              p.predictions[at], p.targets[at]);
                out << buf;
                ++at;
            }
}

nlohmann::json metrics_json(const MetricReport& m) {
    return {{"rmse", m.rmse}, {"mae", m.mae}, {"mape", m.mape}, {"r2", m.r2}};
}

int run_main(int argc, char** argv) {
    CLI::App app{"Spatial-temporal forecasting for regions without observations"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment config JSON");
    app.add_option("--out-dir", g.out_dir, "output directory override");
    auto* seed_opt = app.add_option("--seed", g.seed, "seed override");
    app.add_option("--variant", g.variant,
                   "variant override: STSM, STSM-NC, STSM-R, STSM-RNC (NC forces lambda 0)");

    auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic dataset as CSV files");
    int synth_locations = 0, synth_days = 0, synth_interval = 0;
    cmd_synth->add_option("--locations", synth_locations, "synthetic location count");
    cmd_synth->add_option("--days", synth_days, "synthetic day count");
    cmd_synth->add_option("--interval-minutes", synth_interval, "synthetic sampling interval");
    auto* cmd_graph = app.add_subcommand("build-graph", "export adjacency matrices as CSV");
    auto* cmd_train = app.add_subcommand("train", "train a model and save a checkpoint");
    auto* cmd_predict = app.add_subcommand("predict", "predict the unobserved region");
    auto* cmd_eval = app.add_subcommand("evaluate", "evaluate predictions against ground truth");
    auto* cmd_run = app.add_subcommand("run", "full pipeline with all artifacts");

    for (auto* sub : {cmd_synth, cmd_graph, cmd_train, cmd_predict, cmd_eval, cmd_run})
        sub->fallthrough();

    std::string checkpoint_path;
    cmd_predict->add_option("--checkpoint", checkpoint_path, "checkpoint JSON path");
    cmd_eval->add_option("--checkpoint", checkpoint_path, "checkpoint JSON path");

    CLI11_PARSE(app, argc, argv);
    g.has_seed = seed_opt->count() > 0;
    ExperimentConfig cfg = load_config(g);

    if (cmd_synth->parsed()) {
        if (!cfg.use_synthetic) throw ConfigError("synth needs a config with a 'synth' block");
        if (synth_locations > 0) cfg.synth.n_locations = synth_locations;
        if (synth_days > 0) cfg.synth.days = synth_days;
        if (synth_interval > 0) cfg.synth.interval_minutes = synth_interval;
        std::filesystem::create_directories(cfg.out_dir);
        write_bundle_csv(generate_synthetic(cfg.synth), cfg.out_dir);
        std::cout << "wrote dataset CSVs to " << cfg.out_dir << "\n";
        return 0;
    }

    PreparedData data = prepare_experiment(cfg);
    const std::string dir = cfg.out_dir + "/";

    if (cmd_graph->parsed()) {
        std::filesystem::create_directories(cfg.out_dir);
        std::vector<std::string> ids;
        for (const auto& l : data.bundle.locations) ids.push_back(l.id);
        export_adjacency_csv(data.adj.a_s, ids, dir + "adjacency_s.csv");
        export_adjacency_csv(data.adj.a_sg, ids, dir + "adjacency_sg.csv");
        export_adjacency_csv(data.adj.a_dtw, ids, dir + "adjacency_dtw.csv");
        std::cout << "wrote adjacency CSVs to " << cfg.out_dir << "\n";
        return 0;
    }

    if (cmd_train->parsed()) {
        TrainResult tr = train(cfg, data);
        write_training_artifacts(cfg, data, tr);
        std::cout << "best epoch " << tr.best_epoch << ", valid RMSE " << tr.best_valid_rmse
                  << "\n";
        return 0;
    }

    if (cmd_predict->parsed() || cmd_eval->parsed()) {
        if (checkpoint_path.empty()) checkpoint_path = dir + "checkpoint.json";
        Checkpoint ck = load_checkpoint(checkpoint_path);
        cfg.model = ck.config;
        PredictionSet p = predict_unobserved(cfg, data, ck.params);
        std::filesystem::create_directories(cfg.out_dir);
        write_predictions_csv(cfg, data, p, dir + "predictions.csv");
        if (cmd_eval->parsed()) {
            const MetricReport m = evaluate_metrics(p.predictions, p.targets);
            nlohmann::json res = metrics_json(m);
            write_text(dir + "evaluate.json", res.dump(2) + "\n");
            std::cout << res.dump(2) << "\n";
        } else {
            std::cout << "wrote predictions to " << dir << "predictions.csv\n";
        }
        return 0;
    }

    if (cmd_run->parsed()) {
        ExperimentResult r = run_experiment(cfg);
        std::cout << "test metrics: " << metrics_json(r.metrics).dump() << "\n";
        std::cout << "idw persistence: " << metrics_json(r.baseline_idw_metrics).dump() << "\n";
        std::cout << "artifacts in " << cfg.out_dir << " (" << r.wall_seconds << " s)\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_main(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
