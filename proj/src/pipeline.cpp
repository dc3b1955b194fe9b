#include "stsm/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stsm/csv.hpp"
#include "stsm/svgplot.hpp"

namespace stsm {

using nlohmann::json;

Variant variant_from_string(const std::string& s) {
    if (s == "STSM") return Variant::STSM;
    if (s == "STSM-NC") return Variant::STSM_NC;
    if (s == "STSM-R") return Variant::STSM_R;
    if (s == "STSM-RNC") return Variant::STSM_RNC;
    throw ConfigError("unknown variant '" + s + "'");
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::STSM: return "STSM";
        case Variant::STSM_NC: return "STSM-NC";
        case Variant::STSM_R: return "STSM-R";
        case Variant::STSM_RNC: return "STSM-RNC";
    }
    throw InternalError("unhandled variant");
}

bool variant_selective(Variant v) { return v == Variant::STSM || v == Variant::STSM_NC; }
bool variant_contrastive(Variant v) { return v == Variant::STSM || v == Variant::STSM_R; }

void ExperimentConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
    if (lr_decay <= 0.0 || lr_decay > 1.0) throw ConfigError("lr_decay must be in (0,1]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (tau <= 0.0) throw ConfigError("tau must be > 0");
    if (delta_m <= 0.0 || delta_m > 1.0) throw ConfigError("delta_m must be in (0,1]");
    if (epsilon_s <= 0.0 || epsilon_s >= 1.0) throw ConfigError("epsilon_s must be in (0,1)");
    if (epsilon_sg <= 0.0 || epsilon_sg >= 1.0) throw ConfigError("epsilon_sg must be in (0,1)");
    if (q_kk < 1 || q_ku < 1) throw ConfigError("q_kk and q_ku must be >= 1");
    if (top_k < 0) throw ConfigError("top_k must be >= 0");
    if (r_poi <= 0.0) throw ConfigError("r_poi must be > 0");
    if (unobserved_ratio <= 0.0 || unobserved_ratio >= 1.0)
        throw ConfigError("unobserved_ratio must be in (0,1)");
    if (train_fraction <= 0.0 || train_fraction >= 1.0)
        throw ConfigError("train_fraction must be in (0,1)");
    if (stride < 1) throw ConfigError("stride must be >= 1");
    if (test_stride < 0) throw ConfigError("test_stride must be >= 0");
    if (valid_stride < 1) throw ConfigError("valid_stride must be >= 1");
    if (variant_contrastive(variant)) {
        if (lambda <= 0.0)
            throw ConfigError(to_string(variant) + " requires lambda > 0");
        if (batch_size < 2)
            throw ConfigError(to_string(variant) + " requires batch_size >= 2");
    } else if (lambda != 0.0) {
        throw ConfigError(to_string(variant) + " requires lambda = 0");
    }
    model.validate();
    if (!use_synthetic && (locations_path.empty() || observations_path.empty() ||
                           poi_path.empty() || roads_path.empty()))
        throw ConfigError("data paths must all be set when synthetic input is disabled");
}

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read_field(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw FormatError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config",
               {"variant", "learning_rate", "lr_decay", "batch_size", "epochs", "patience",
                "lambda", "tau", "delta_m", "epsilon_s", "epsilon_sg", "q_kk", "q_ku", "top_k",
                "r_poi", "seed", "split_method", "unobserved_ratio", "train_fraction", "stride",
                "test_stride", "valid_stride", "model", "data", "synth", "out_dir"});
    ExperimentConfig c;
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    read_field(j, "learning_rate", c.learning_rate);
    read_field(j, "lr_decay", c.lr_decay);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "epochs", c.epochs);
    read_field(j, "patience", c.patience);
    if (j.contains("lambda")) {
        c.lambda = j.at("lambda").get<double>();
    } else if (!variant_contrastive(c.variant)) {
        c.lambda = 0.0;
    }
    read_field(j, "tau", c.tau);
    read_field(j, "delta_m", c.delta_m);
    read_field(j, "epsilon_s", c.epsilon_s);
    read_field(j, "epsilon_sg", c.epsilon_sg);
    read_field(j, "q_kk", c.q_kk);
    read_field(j, "q_ku", c.q_ku);
    read_field(j, "top_k", c.top_k);
    read_field(j, "r_poi", c.r_poi);
    read_field(j, "seed", c.seed);
    if (j.contains("split_method"))
        c.split_method = split_method_from_string(j.at("split_method").get<std::string>());
    read_field(j, "unobserved_ratio", c.unobserved_ratio);
    read_field(j, "train_fraction", c.train_fraction);
    read_field(j, "stride", c.stride);
    read_field(j, "test_stride", c.test_stride);
    read_field(j, "valid_stride", c.valid_stride);
    read_field(j, "out_dir", c.out_dir);
    if (j.contains("model")) {
        const json& m = j.at("model");
        check_keys(m, "model", {"L", "k", "hidden", "mid", "proj", "kernel_size", "T", "T_prime"});
        read_field(m, "L", c.model.L);
        read_field(m, "k", c.model.k);
        read_field(m, "hidden", c.model.hidden);
        read_field(m, "mid", c.model.mid);
        read_field(m, "proj", c.model.proj);
        read_field(m, "kernel_size", c.model.kernel_size);
        read_field(m, "T", c.model.T);
        read_field(m, "T_prime", c.model.T_prime);
    }
    if (j.contains("data") && j.contains("synth"))
        throw ConfigError("give either 'data' paths or a 'synth' block, not both");
    if (j.contains("data")) {
        const json& d = j.at("data");
        check_keys(d, "data", {"locations", "observations", "poi", "roads"});
        c.use_synthetic = false;
        read_field(d, "locations", c.locations_path);
        read_field(d, "observations", c.observations_path);
        read_field(d, "poi", c.poi_path);
        read_field(d, "roads", c.roads_path);
    }
    if (j.contains("synth")) {
        const json& s = j.at("synth");
        check_keys(s, "synth", {"n_locations", "days", "interval_minutes", "seed", "noise"});
        c.use_synthetic = true;
        read_field(s, "n_locations", c.synth.n_locations);
        read_field(s, "days", c.synth.days);
        read_field(s, "interval_minutes", c.synth.interval_minutes);
        read_field(s, "seed", c.synth.seed);
        read_field(s, "noise", c.synth.noise);
    }
    c.validate();
    return c;
}

ExperimentConfig config_from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
    json j;
    j["variant"] = to_string(cfg.variant);
    j["learning_rate"] = cfg.learning_rate;
    j["lr_decay"] = cfg.lr_decay;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["patience"] = cfg.patience;
    j["lambda"] = cfg.lambda;
    j["tau"] = cfg.tau;
    j["delta_m"] = cfg.delta_m;
    j["epsilon_s"] = cfg.epsilon_s;
    j["epsilon_sg"] = cfg.epsilon_sg;
    j["q_kk"] = cfg.q_kk;
    j["q_ku"] = cfg.q_ku;
    j["top_k"] = cfg.top_k;
    j["r_poi"] = cfg.r_poi;
    j["seed"] = cfg.seed;
    j["split_method"] = to_string(cfg.split_method);
    j["unobserved_ratio"] = cfg.unobserved_ratio;
    j["train_fraction"] = cfg.train_fraction;
    j["stride"] = cfg.stride;
    j["test_stride"] = cfg.test_stride;
    j["valid_stride"] = cfg.valid_stride;
    j["model"] = {{"L", cfg.model.L},       {"k", cfg.model.k},
                  {"hidden", cfg.model.hidden}, {"mid", cfg.model.mid},
                  {"proj", cfg.model.proj},     {"kernel_size", cfg.model.kernel_size},
                  {"T", cfg.model.T},           {"T_prime", cfg.model.T_prime}};
    if (cfg.use_synthetic) {
        j["synth"] = {{"n_locations", cfg.synth.n_locations},
                      {"days", cfg.synth.days},
                      {"interval_minutes", cfg.synth.interval_minutes},
                      {"seed", cfg.synth.seed},
                      {"noise", cfg.synth.noise}};
    } else {
        j["data"] = {{"locations", cfg.locations_path},
                     {"observations", cfg.observations_path},
                     {"poi", cfg.poi_path},
                     {"roads", cfg.roads_path}};
    }
    j["out_dir"] = cfg.out_dir;
    return j.dump(2) + "\n";
}

Tensor submatrix(const Tensor& a, const std::vector<int>& idx) {
    const int m = static_cast<int>(idx.size());
    Tensor out({m, m}, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            out(i, j) = a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    return out;
}

namespace {

ModelConfig resolved_model(const ExperimentConfig& cfg, const SensorPanel& panel) {
    ModelConfig mc = cfg.model;
    mc.td = panel.td;
    mc.channels = panel.n_channels;
    mc.validate();
    return mc;
}

std::vector<std::string> location_ids(const std::vector<Location>& locations) {
    std::vector<std::string> ids;
    ids.reserve(locations.size());
    for (const auto& l : locations) ids.push_back(l.id);
    return ids;
}

std::vector<IdwRow> idw_rows(const std::vector<Location>& locations,
                             const std::vector<int>& targets, const std::vector<int>& sources) {
    std::vector<IdwRow> rows;
    rows.reserve(targets.size());
    for (int t : targets)
        rows.push_back(idw_weights(locations[static_cast<std::size_t>(t)], locations, sources));
    return rows;
}

// Adam with per-parameter first/second moment state; grads that were never
// touched in a step count as zero.
struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::vector<Tensor> m, v;
    long long t = 0;

    explicit Adam(const ModelParams& params) {
        for (const auto& [name, p] : params.entries) {
            (void)name;
            m.emplace_back(p->val.shape, 0.0);
            v.emplace_back(p->val.shape, 0.0);
        }
    }

    void step(const ModelParams& params, double lr) {
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.entries.size(); ++i) {
            auto& p = params.entries[i].second;
            const bool has_grad = p->grad.shape == p->val.shape;
            for (std::size_t k = 0; k < p->val.data.size(); ++k) {
                const double g = has_grad ? p->grad.data[k] : 0.0;
                if (!std::isfinite(g)) throw NumericError("non-finite gradient in Adam step");
                m[i].data[k] = beta1 * m[i].data[k] + (1.0 - beta1) * g;
                v[i].data[k] = beta2 * v[i].data[k] + (1.0 - beta2) * g * g;
                const double mh = m[i].data[k] / bc1;
                const double vh = v[i].data[k] / bc2;
                p->val.data[k] -= lr * mh / (std::sqrt(vh) + eps);
            }
        }
    }
};

}  // namespace

PreparedData prepare_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    PreparedData d;
    d.bundle = cfg.use_synthetic
                   ? generate_synthetic(cfg.synth)
                   : load_dataset(cfg.locations_path, cfg.observations_path, cfg.poi_path,
                                  cfg.roads_path);
    fill_missing_lvcf(d.bundle.panel);
    d.split = split_region(d.bundle.locations, cfg.split_method, cfg.unobserved_ratio);

    auto [train_panel, test_panel] = temporal_split(d.bundle.panel, cfg.train_fraction);
    d.stats = zscore_fit(train_panel, d.split.train_idx);
    d.test_raw = test_panel;
    zscore_apply(train_panel, d.stats);
    zscore_apply(test_panel, d.stats);
    d.train_norm = std::move(train_panel);
    d.test_norm = std::move(test_panel);

    d.train_windows = make_windows(d.train_norm, cfg.model.T, cfg.model.T_prime, cfg.stride);
    const int test_stride = cfg.test_stride > 0 ? cfg.test_stride : cfg.model.T_prime;
    d.test_windows = make_windows(d.test_norm, cfg.model.T, cfg.model.T_prime, test_stride);

    d.adj.sigma = pairwise_distance_std(d.bundle.locations);
    d.adj.epsilon_s = cfg.epsilon_s;
    d.adj.epsilon_sg = cfg.epsilon_sg;
    d.adj.a_s = gaussian_threshold_adjacency(d.bundle.locations, d.adj.sigma, cfg.epsilon_s);
    d.adj.a_sg = gaussian_threshold_adjacency(d.bundle.locations, d.adj.sigma, cfg.epsilon_sg);

    d.obs_nodes = d.split.observed();
    std::sort(d.obs_nodes.begin(), d.obs_nodes.end());
    const int n = static_cast<int>(d.bundle.locations.size());
    d.obs_local_of_global.assign(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < d.obs_nodes.size(); ++i)
        d.obs_local_of_global[static_cast<std::size_t>(d.obs_nodes[i])] = static_cast<int>(i);
    d.a_s_obs = submatrix(d.adj.a_s, d.obs_nodes);
    d.a_sg_obs = submatrix(d.adj.a_sg, d.obs_nodes);
    for (int g : d.obs_nodes) d.obs_ids.push_back(d.bundle.locations[static_cast<std::size_t>(g)].id);

    d.obs_profiles = daily_profiles(d.train_norm, d.obs_nodes);
    {
        std::vector<int> all_local(d.obs_nodes.size());
        std::iota(all_local.begin(), all_local.end(), 0);
        d.obs_dtw_cache = dtw_matrix(d.obs_profiles, all_local, all_local);
        d.a_dtw_full_obs = temporal_adjacency(d.obs_profiles, all_local, {}, cfg.q_kk, cfg.q_ku,
                                              d.obs_ids, &d.obs_dtw_cache);
    }

    if (variant_selective(cfg.variant)) {
        const auto embeddings =
            build_location_embeddings(d.bundle.locations, d.bundle.poi, d.bundle.roads, cfg.r_poi);
        std::vector<std::vector<double>> unobserved_emb;
        double cu_x = 0.0, cu_y = 0.0;
        for (int u : d.split.test_idx) {
            unobserved_emb.push_back(embeddings[static_cast<std::size_t>(u)]);
            cu_x += d.bundle.locations[static_cast<std::size_t>(u)].x;
            cu_y += d.bundle.locations[static_cast<std::size_t>(u)].y;
        }
        cu_x /= static_cast<double>(d.split.test_idx.size());
        cu_y /= static_cast<double>(d.split.test_idx.size());
        const auto l_u = subgraph_embedding(unobserved_emb);

        std::vector<std::vector<double>> sg_emb;
        for (int center : d.obs_nodes) {
            std::vector<std::vector<double>> members;
            for (int m : one_hop_subgraph(d.adj.a_sg, center))
                members.push_back(embeddings[static_cast<std::size_t>(m)]);
            sg_emb.push_back(subgraph_embedding(members));
        }
        d.scores = similarity_scores(sg_emb, l_u, d.bundle.locations, d.obs_nodes, cu_x, cu_y);
        d.delta_s = mean_subgraph_size(d.adj.a_sg, d.obs_nodes);
        d.mask_probabilities = masking_probabilities(d.scores.s_sg, d.scores.sp_sg, cfg.delta_m,
                                                     d.delta_s, cfg.top_k);
    }

    // Validation view: valid columns replaced by IDW pseudo-observations from
    // the train columns, its DTW graph frozen for the whole run.
    for (int v : d.split.valid_idx)
        d.valid_local.push_back(d.obs_local_of_global[static_cast<std::size_t>(v)]);
    std::sort(d.valid_local.begin(), d.valid_local.end());
    d.valid_view = d.train_norm;
    apply_pseudo_observations(d.valid_view, d.split.valid_idx,
                              idw_rows(d.bundle.locations, d.split.valid_idx, d.split.train_idx));
    {
        std::vector<int> train_local;
        for (int g : d.split.train_idx)
            train_local.push_back(d.obs_local_of_global[static_cast<std::size_t>(g)]);
        std::sort(train_local.begin(), train_local.end());
        auto profiles = d.obs_profiles;
        const auto valid_profiles = daily_profiles(d.valid_view, d.split.valid_idx);
        for (std::size_t i = 0; i < d.split.valid_idx.size(); ++i) {
            const int local = d.obs_local_of_global[static_cast<std::size_t>(d.split.valid_idx[i])];
            profiles[static_cast<std::size_t>(local)] = valid_profiles[i];
        }
        const Tensor cache = submatrix(d.obs_dtw_cache, train_local);
        d.a_dtw_valid = temporal_adjacency(profiles, train_local, d.valid_local, cfg.q_kk,
                                           cfg.q_ku, d.obs_ids, &cache);
    }

    // Test-time DTW graph over all locations from the pseudo-filled test span.
    {
        SensorPanel filled = d.test_norm;
        apply_pseudo_observations(filled, d.split.test_idx,
                                  idw_rows(d.bundle.locations, d.split.test_idx, d.obs_nodes));
        std::vector<int> all_nodes(static_cast<std::size_t>(n));
        std::iota(all_nodes.begin(), all_nodes.end(), 0);
        const auto profiles = daily_profiles(filled, all_nodes);
        d.adj.a_dtw = temporal_adjacency(profiles, d.obs_nodes, d.split.test_idx, cfg.q_kk,
                                         cfg.q_ku, location_ids(d.bundle.locations));
    }
    return d;
}

namespace {

struct EpochGraphs {
    SensorPanel panel;       // masked view input panel (all N columns)
    Tensor a_dtw;            // obs-local temporal adjacency for the masked view
    std::vector<int> masked_global;
};

EpochGraphs build_epoch_view(const ExperimentConfig& cfg, const PreparedData& d,
                             std::uint64_t epoch_seed) {
    EpochGraphs g;
    g.masked_global =
        variant_selective(cfg.variant)
            ? draw_selective_mask(d.mask_probabilities, d.obs_nodes, d.adj.a_sg, epoch_seed)
            : draw_random_mask(d.obs_nodes, d.adj.a_sg, cfg.delta_m, epoch_seed);
    if (g.masked_global.empty()) {
        const std::uint64_t retry = mix_seed(epoch_seed, 1);
        g.masked_global =
            variant_selective(cfg.variant)
                ? draw_selective_mask(d.mask_probabilities, d.obs_nodes, d.adj.a_sg, retry)
                : draw_random_mask(d.obs_nodes, d.adj.a_sg, cfg.delta_m, retry);
    }
    // Masking every observed node would leave no pseudo-observation sources.
    if (g.masked_global.size() >= d.obs_nodes.size())
        g.masked_global.pop_back();

    if (g.masked_global.empty()) {
        std::cerr << "warning: empty mask after redraw; training this epoch unmasked\n";
        g.panel = d.train_norm;
        g.a_dtw = d.a_dtw_full_obs;
        return g;
    }

    std::vector<int> unmasked_global;
    {
        std::set<int> masked(g.masked_global.begin(), g.masked_global.end());
        for (int o : d.obs_nodes)
            if (!masked.count(o)) unmasked_global.push_back(o);
    }
    g.panel = d.train_norm;
    apply_pseudo_observations(g.panel, g.masked_global,
                              idw_rows(d.bundle.locations, g.masked_global, unmasked_global));

    std::vector<int> masked_local, unmasked_local;
    for (int m : g.masked_global)
        masked_local.push_back(d.obs_local_of_global[static_cast<std::size_t>(m)]);
    for (int o : unmasked_global)
        unmasked_local.push_back(d.obs_local_of_global[static_cast<std::size_t>(o)]);

    auto profiles = d.obs_profiles;
    const auto masked_profiles = daily_profiles(g.panel, g.masked_global);
    for (std::size_t i = 0; i < masked_local.size(); ++i)
        profiles[static_cast<std::size_t>(masked_local[i])] = masked_profiles[i];
    const Tensor cache = submatrix(d.obs_dtw_cache, unmasked_local);
    g.a_dtw = temporal_adjacency(profiles, unmasked_local, masked_local, cfg.q_kk, cfg.q_ku,
                                 d.obs_ids, &cache);
    return g;
}

double validation_rmse(const ExperimentConfig& cfg, const ModelConfig& mc, const PreparedData& d,
                       const ModelParams& params) {
    ag::NoGradGuard ng;
    double sse = 0.0;
    long long count = 0;
    for (std::size_t wi = 0; wi < d.train_windows.windows.size();
         wi += static_cast<std::size_t>(cfg.valid_stride)) {
        const Window& w = d.train_windows.windows[wi];
        const Tensor x = window_input(d.valid_view, w, mc.T, d.obs_nodes);
        auto fr = model::forward(mc, params, x, w.te, d.a_s_obs, d.a_dtw_valid);
        const Tensor truth = window_target(d.train_norm, w, mc.T, mc.T_prime, d.obs_nodes);
        for (int v : d.valid_local)
            for (int t = 0; t < mc.T_prime; ++t)
                for (int c = 0; c < mc.channels; ++c) {
                    const double p = d.stats.denormalize(fr.prediction->val(v, t, c), c);
                    const double y = d.stats.denormalize(truth(v, t, c), c);
                    sse += (p - y) * (p - y);
                    ++count;
                }
        ag::release_graph(fr.prediction);
    }
    if (count == 0) throw InternalError("validation produced no samples");
    return std::sqrt(sse / static_cast<double>(count));
}

}  // namespace

TrainResult train(const ExperimentConfig& cfg, const PreparedData& d) {
    const ModelConfig mc = resolved_model(cfg, d.train_norm);
    TrainResult out;
    out.params = ModelParams::init(mc, mix_seed(cfg.seed, 0));
    Adam adam(out.params);

    const bool contrastive = variant_contrastive(cfg.variant) && cfg.lambda > 0.0;
    std::vector<Tensor> best = out.params.snapshot();
    double best_rmse = std::numeric_limits<double>::infinity();
    int best_epoch = -1, bad = 0;

    std::vector<std::size_t> order(d.train_windows.windows.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const std::uint64_t epoch_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1);
        EpochGraphs eg = build_epoch_view(cfg, d, epoch_seed);
        {
            EpochMask audit;
            audit.epoch = epoch;
            audit.seed = epoch_seed;
            audit.masked_global = eg.masked_global;
            if (variant_selective(cfg.variant)) audit.probabilities = d.mask_probabilities;
            out.masks.push_back(std::move(audit));
        }

        std::mt19937_64 rng(mix_seed(epoch_seed, 2));
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch));

        double sum_pred = 0.0, sum_cl = 0.0;
        long long pred_weight = 0, cl_weight = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t b1 =
                std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
            const int m = static_cast<int>(b1 - b0);
            const bool with_cl = contrastive && m >= 2;

            std::vector<Tensor> g_zf, g_zm;
            double batch_cl = 0.0;
            if (with_cl) {
                // Stage one: representation values for every window, no tape.
                std::vector<Tensor> zf_vals, zm_vals;
                {
                    ag::NoGradGuard ng;
                    for (std::size_t i = b0; i < b1; ++i) {
                        const Window& w = d.train_windows.windows[order[i]];
                        auto fr_m = model::forward(mc, out.params,
                                                   window_input(eg.panel, w, mc.T, d.obs_nodes),
                                                   w.te, d.a_s_obs, eg.a_dtw);
                        zm_vals.push_back(graph_representation(fr_m.last_nodes, out.params)->val);
                        auto fr_f = model::forward(mc, out.params,
                                                   window_input(d.train_norm, w, mc.T, d.obs_nodes),
                                                   w.te, d.a_s_obs, d.a_dtw_full_obs);
                        zf_vals.push_back(graph_representation(fr_f.last_nodes, out.params)->val);
                    }
                }
                // Stage two: contrastive loss over representation leaves only.
                std::vector<ag::Var> zf, zm;
                for (int i = 0; i < m; ++i) {
                    zf.push_back(ag::param(zf_vals[static_cast<std::size_t>(i)]));
                    zm.push_back(ag::param(zm_vals[static_cast<std::size_t>(i)]));
                }
                ag::Var l_cl = contrastive_loss(zf, zm, cfg.tau);
                batch_cl = l_cl->val(0);
                ag::backward(l_cl);
                for (int i = 0; i < m; ++i) {
                    g_zf.push_back(zf[static_cast<std::size_t>(i)]->g());
                    g_zm.push_back(zm[static_cast<std::size_t>(i)]->g());
                }
                ag::release_graph(l_cl);
                sum_cl += batch_cl * m;
                cl_weight += m;
            }

            // Stage three: per-window tapes; the contrastive contribution enters
            // through fixed upstream gradients on the representations.
            double batch_pred = 0.0;
            for (std::size_t i = b0; i < b1; ++i) {
                const Window& w = d.train_windows.windows[order[i]];
                auto fr_m = model::forward(mc, out.params,
                                           window_input(eg.panel, w, mc.T, d.obs_nodes), w.te,
                                           d.a_s_obs, eg.a_dtw);
                const Tensor truth = window_target(d.train_norm, w, mc.T, mc.T_prime, d.obs_nodes);
                ag::Var l_pred = prediction_loss(fr_m.prediction, truth);
                batch_pred += l_pred->val(0);
                ag::Var loss = ag::scale(l_pred, 1.0 / m);
                if (with_cl) {
                    ag::Var zm = graph_representation(fr_m.last_nodes, out.params);
                    ag::Var cl_part =
                        ag::dot(ag::constant(g_zm[static_cast<std::size_t>(i - b0)]), zm);
                    auto fr_f = model::forward(mc, out.params,
                                               window_input(d.train_norm, w, mc.T, d.obs_nodes),
                                               w.te, d.a_s_obs, d.a_dtw_full_obs);
                    ag::Var zf = graph_representation(fr_f.last_nodes, out.params);
                    cl_part = ag::add(
                        cl_part, ag::dot(ag::constant(g_zf[static_cast<std::size_t>(i - b0)]), zf));
                    loss = ag::add(loss, ag::scale(cl_part, cfg.lambda));
                }
                ag::backward(loss);
                ag::release_graph(loss);
            }
            batch_pred /= m;
            if (!std::isfinite(batch_pred) || !std::isfinite(batch_cl))
                throw NumericError("training diverged at epoch " + std::to_string(epoch));
            sum_pred += batch_pred * m;
            pred_weight += m;

            adam.step(out.params, lr);
            out.params.zero_grads();
        }

        LossReport rep;
        rep.l_pred = sum_pred / static_cast<double>(pred_weight);
        rep.l_cl = cl_weight > 0 ? sum_cl / static_cast<double>(cl_weight) : 0.0;
        rep.lambda = cfg.lambda;
        rep.tau = cfg.tau;
        rep.batch_size = cfg.batch_size;
        rep.l_total = rep.l_pred + cfg.lambda * rep.l_cl;
        out.log.push_back(rep);

        const double rmse = validation_rmse(cfg, mc, d, out.params);
        if (!std::isfinite(rmse))
            throw NumericError("training diverged at epoch " + std::to_string(epoch));
        out.valid_rmse.push_back(rmse);
        if (rmse < best_rmse) {
            best_rmse = rmse;
            best_epoch = epoch;
            best = out.params.snapshot();
            bad = 0;
        } else if (++bad >= cfg.patience) {
            break;
        }
    }

    out.params.restore(best);
    out.best_epoch = best_epoch;
    out.best_valid_rmse = best_rmse;
    return out;
}

PredictionSet predict_unobserved(const ExperimentConfig& cfg, const PreparedData& d,
                                 const ModelParams& params) {
    const ModelConfig mc = resolved_model(cfg, d.test_norm);
    SensorPanel filled = d.test_norm;
    apply_pseudo_observations(filled, d.split.test_idx,
                              idw_rows(d.bundle.locations, d.split.test_idx, d.obs_nodes));
    std::vector<int> all_nodes(d.bundle.locations.size());
    std::iota(all_nodes.begin(), all_nodes.end(), 0);

    PredictionSet out;
    ag::NoGradGuard ng;
    for (const Window& w : d.test_windows.windows) {
        const Tensor x = window_input(filled, w, mc.T, all_nodes);
        auto fr = model::forward(mc, params, x, w.te, d.adj.a_s, d.adj.a_dtw);
        for (int u : d.split.test_idx)
            for (int t = 0; t < mc.T_prime; ++t)
                for (int c = 0; c < mc.channels; ++c) {
                    out.predictions.push_back(d.stats.denormalize(fr.prediction->val(u, t, c), c));
                    out.targets.push_back(d.test_raw.value(w.start + mc.T + t, u, c));
                }
        ag::release_graph(fr.prediction);
    }
    return out;
}

PredictionSet baseline_mean(const ExperimentConfig& cfg, const PreparedData& d) {
    const ModelConfig mc = resolved_model(cfg, d.test_norm);
    PredictionSet out;
    for (const Window& w : d.test_windows.windows)
        for (int u : d.split.test_idx)
            for (int t = 0; t < mc.T_prime; ++t)
                for (int c = 0; c < mc.channels; ++c) {
                    out.predictions.push_back(d.stats.mean[static_cast<std::size_t>(c)]);
                    out.targets.push_back(d.test_raw.value(w.start + mc.T + t, u, c));
                }
    return out;
}

PredictionSet baseline_idw_persistence(const ExperimentConfig& cfg, const PreparedData& d) {
    const ModelConfig mc = resolved_model(cfg, d.test_norm);
    const auto rows = idw_rows(d.bundle.locations, d.split.test_idx, d.obs_nodes);
    PredictionSet out;
    for (const Window& w : d.test_windows.windows) {
        const int t_last = w.start + mc.T - 1;
        for (std::size_t ui = 0; ui < d.split.test_idx.size(); ++ui) {
            const int u = d.split.test_idx[ui];
            for (int t = 0; t < mc.T_prime; ++t)
                for (int c = 0; c < mc.channels; ++c) {
                    double v = 0.0;
                    for (std::size_t k = 0; k < rows[ui].sources.size(); ++k)
                        v += rows[ui].weights[k] * d.test_raw.value(t_last, rows[ui].sources[k], c);
                    out.predictions.push_back(v);
                    out.targets.push_back(d.test_raw.value(w.start + mc.T + t, u, c));
                }
        }
    }
    return out;
}

namespace {

json metrics_json(const MetricReport& m) {
    return {{"rmse", m.rmse}, {"mae", m.mae}, {"mape", m.mape}, {"r2", m.r2}};
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << text;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    std::filesystem::create_directories(cfg.out_dir);
    const std::string dir = cfg.out_dir + "/";

    PreparedData data = prepare_experiment(cfg);
    ExperimentResult r;
    r.training = train(cfg, data);
    const PredictionSet preds = predict_unobserved(cfg, data, r.training.params);
    r.metrics = evaluate_metrics(preds.predictions, preds.targets);
    const PredictionSet mean_b = baseline_mean(cfg, data);
    r.baseline_mean_metrics = evaluate_metrics(mean_b.predictions, mean_b.targets);
    const PredictionSet idw_b = baseline_idw_persistence(cfg, data);
    r.baseline_idw_metrics = evaluate_metrics(idw_b.predictions, idw_b.targets);
    r.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    {
        const ModelConfig mc = resolved_model(cfg, data.train_norm);
        save_checkpoint(dir + "checkpoint.json", mc, data.stats, r.training.params);
    }

    {
        std::ostringstream log;
        log << "epoch,L_pred,L_cl,L_total\n";
        char buf[96];
        for (std::size_t e = 0; e < r.training.log.size(); ++e) {
            const auto& rep = r.training.log[e];
            std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e, rep.l_pred, rep.l_cl,
                          rep.l_total);
            log << buf;
        }
        write_text(dir + "training_log.csv", log.str());
    }

    {
        json audit = json::array();
        for (const auto& m : r.training.masks) {
            json ids = json::array();
            for (int g : m.masked_global)
                ids.push_back(data.bundle.locations[static_cast<std::size_t>(g)].id);
            audit.push_back(
                {{"epoch", m.epoch}, {"seed", m.seed}, {"masked_ids", ids}, {"P", m.probabilities}});
        }
        write_text(dir + "mask_audit.json", audit.dump(2) + "\n");
    }

    {
        json res;
        res["variant"] = to_string(cfg.variant);
        res["seed"] = cfg.seed;
        res["split_method"] = to_string(cfg.split_method);
        res["n_locations"] = static_cast<int>(data.bundle.locations.size());
        res["n_observed"] = static_cast<int>(data.obs_nodes.size());
        res["n_unobserved"] = static_cast<int>(data.split.test_idx.size());
        res["epochs_run"] = static_cast<int>(r.training.log.size());
        res["best_epoch"] = r.training.best_epoch;
        res["best_valid_rmse"] = r.training.best_valid_rmse;
        res["metrics"] = metrics_json(r.metrics);
        res["baselines"] = {{"mean", metrics_json(r.baseline_mean_metrics)},
                            {"idw_persistence", metrics_json(r.baseline_idw_metrics)}};
        write_text(dir + "results.json", res.dump(2) + "\n");
    }

    {
        std::vector<svgplot::Series> loss_series(3);
        loss_series[0].label = "L_pred";
        loss_series[1].label = "L_cl";
        loss_series[2].label = "L_total";
        for (const auto& rep : r.training.log) {
            loss_series[0].y.push_back(rep.l_pred);
            loss_series[1].y.push_back(rep.l_cl);
            loss_series[2].y.push_back(rep.l_total);
        }
        svgplot::write_line_chart(dir + "loss_curves.svg", "Training losses", "epoch", "loss",
                                  loss_series);

        svgplot::Series vr;
        vr.label = "valid RMSE";
        vr.y = r.training.valid_rmse;
        svgplot::write_line_chart(dir + "validation_rmse.svg", "Validation RMSE", "epoch", "RMSE",
                                  {vr});

        // First unobserved location over the first horizon steps of each window.
        const int horizon = cfg.model.T_prime * static_cast<int>(data.test_windows.windows.size());
        const int block = cfg.model.T_prime * static_cast<int>(data.split.test_idx.size());
        svgplot::Series sp, st;
        sp.label = "predicted";
        st.label = "actual";
        for (int wi = 0; wi < static_cast<int>(data.test_windows.windows.size()); ++wi)
            for (int t = 0; t < cfg.model.T_prime; ++t) {
                const std::size_t at = static_cast<std::size_t>(wi * block + t);
                sp.y.push_back(preds.predictions[at]);
                st.y.push_back(preds.targets[at]);
            }
        (void)horizon;
        svgplot::write_line_chart(dir + "prediction_sample.svg",
                                  "First unobserved location, test horizons", "step", "value",
                                  {st, sp});
    }

    return r;
}

}  // namespace stsm
