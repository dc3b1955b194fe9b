#include "stsm/model.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "stsm/dataset.hpp"
#include "stsm/graph.hpp"

namespace stsm {

using ag::Var;
using nlohmann::json;

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

static std::string to_string(Activation a) {
    switch (a) {
        case Activation::Relu: return "relu";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Identity: return "identity";
    }
    return "?";
}

ag::Var apply_activation(const ag::Var& v, Activation a) {
    switch (a) {
        case Activation::Relu: return ag::relu(v);
        case Activation::Sigmoid: return ag::sigmoid(v);
        case Activation::Identity: return v;
    }
    return v;
}

int ModelConfig::tcn_sublayers() const {
    int n = static_cast<int>(std::ceil(std::log2(static_cast<double>(std::max(2, T)))));
    return std::max(1, n);
}

void ModelConfig::validate() const {
    if (L < 1 || k < 1) throw ConfigError("model: L and k must be >= 1");
    if (hidden < 1 || mid < 1 || proj < 1 || channels < 1) throw ConfigError("model: widths must be >= 1");
    if (kernel_size < 1) throw ConfigError("model: kernel_size must be >= 1");
    if (T < 1 || td < 1) throw ConfigError("model: T and Td must be >= 1");
    if (T != T_prime) throw ConfigError("model: T must equal T' (the horizon reuses the input length)");
}

namespace {

Tensor xavier(std::vector<int> shape, int fan_in, int fan_out, std::mt19937_64& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> unif(-s, s);
    Tensor t(std::move(shape));
    for (double& v : t.data) v = unif(rng);
    return t;
}

}  // namespace

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelParams p;
    auto reg = [&](const std::string& name, Var v) {
        p.entries.emplace_back(name, v);
        return v;
    };
    p.phi1_w = reg("phi1.w", ag::param(xavier({cfg.channels, cfg.hidden}, cfg.channels, cfg.hidden, rng)));
    p.phi1_b = reg("phi1.b", ag::param(Tensor({cfg.hidden}, 0.0)));
    p.phi2_w = reg("phi2.w", ag::param(xavier({1, cfg.hidden}, 1, cfg.hidden, rng)));
    // Start the time gate near one so fusion begins as a pass-through.
    p.phi2_b = reg("phi2.b", ag::param(Tensor({cfg.hidden}, 1.0)));
    for (int l = 0; l < cfg.L; ++l) {
        Block b;
        const std::string prefix = "block" + std::to_string(l) + ".";
        for (int j = 0; j < cfg.tcn_sublayers(); ++j) {
            b.tcn_w.push_back(reg(prefix + "tcn" + std::to_string(j) + ".w",
                                  ag::param(xavier({cfg.kernel_size, cfg.hidden, cfg.hidden},
                                                   cfg.kernel_size * cfg.hidden, cfg.hidden, rng))));
            b.tcn_b.push_back(reg(prefix + "tcn" + std::to_string(j) + ".b",
                                  ag::param(Tensor({cfg.hidden}, 0.0))));
        }
        for (int q = 0; q < cfg.k; ++q) {
            b.gcn_value_w.push_back(reg(prefix + "gcnl" + std::to_string(q) + ".value.w",
                                        ag::param(xavier({cfg.hidden, cfg.hidden}, cfg.hidden, cfg.hidden, rng))));
            b.gcn_gate_w.push_back(reg(prefix + "gcnl" + std::to_string(q) + ".gate.w",
                                       ag::param(xavier({cfg.hidden, cfg.hidden}, cfg.hidden, cfg.hidden, rng))));
        }
        p.blocks.push_back(std::move(b));
    }
    p.phi3_w = reg("phi3.w", ag::param(xavier({cfg.hidden, cfg.mid}, cfg.hidden, cfg.mid, rng)));
    p.phi3_b = reg("phi3.b", ag::param(Tensor({cfg.mid}, 0.0)));
    p.phi4_w = reg("phi4.w", ag::param(xavier({cfg.mid, cfg.channels}, cfg.mid, cfg.channels, rng)));
    p.phi4_b = reg("phi4.b", ag::param(Tensor({cfg.channels}, 0.0)));
    p.head_a_w = reg("head.a.w", ag::param(xavier({cfg.hidden, cfg.proj}, cfg.hidden, cfg.proj, rng)));
    p.head_a_b = reg("head.a.b", ag::param(Tensor({cfg.proj}, 0.0)));
    p.head_b_w = reg("head.b.w", ag::param(xavier({cfg.proj, cfg.proj}, cfg.proj, cfg.proj, rng)));
    p.head_b_b = reg("head.b.b", ag::param(Tensor({cfg.proj}, 0.0)));
    return p;
}

std::vector<Tensor> ModelParams::snapshot() const {
    std::vector<Tensor> out;
    for (const auto& [name, v] : entries) out.push_back(v->val);
    return out;
}

void ModelParams::restore(const std::vector<Tensor>& values) const {
    if (values.size() != entries.size()) throw InternalError("restore: tensor count mismatch");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (values[i].shape != entries[i].second->val.shape)
            throw InternalError("restore: shape mismatch for " + entries[i].first);
        entries[i].second->val = values[i];
    }
}

void ModelParams::zero_grads() const {
    for (const auto& [name, v] : entries) v->zero_grad();
}

namespace model {

ag::Var time_fuse(const Tensor& x, const std::vector<int>& te, int td, const ag::Var& phi1_w,
                  const ag::Var& phi1_b, const ag::Var& phi2_w, const ag::Var& phi2_b) {
    if (x.ndim() != 3) throw InternalError("time_fuse: input must be [N,T,C]");
    if (static_cast<int>(te.size()) != x.dim(1)) throw InternalError("time_fuse: TE length mismatch");
    Tensor te_t({static_cast<int>(te.size()), 1});
    for (std::size_t t = 0; t < te.size(); ++t) {
        if (te[t] < 0 || te[t] >= td) throw InternalError("time_fuse: interval id out of range");
        te_t(static_cast<int>(t), 0) = static_cast<double>(te[t]) / static_cast<double>(td);
    }
    Var xs = ag::affine_lastdim(ag::constant(x), phi1_w, phi1_b);
    Var ts = ag::affine_lastdim(ag::constant(te_t), phi2_w, phi2_b);
    return ag::mul_time(xs, ts);
}

ag::Var tcn_block(const ag::Var& h, const std::vector<ag::Var>& kernels,
                  const std::vector<ag::Var>& biases, Activation act) {
    Var out = h;
    for (std::size_t j = 0; j < kernels.size(); ++j)
        out = apply_activation(ag::conv1d_causal(out, kernels[j], biases[j], 1 << j), act);
    return out;
}

Tensor propagation(const Tensor& a) {
    const int n = a.dim(0);
    bool symmetric = true;
    for (int i = 0; i < n && symmetric; ++i)
        for (int j = i + 1; j < n; ++j)
            if (a(i, j) != a(j, i)) {
                symmetric = false;
                break;
            }
    if (symmetric) return gcn_norm(a, true);
    // Sender-row adjacency: transpose so each receiver row averages the
    // messages it is allowed to take in.
    return gcn_norm(transpose_val(a), false);
}

ag::Var gcn_from_prop(const ag::Var& prop, const ag::Var& z, const ag::Var& w) {
    return ag::matmul(ag::matmul(prop, z), w);
}

ag::Var gcn(const Tensor& a, const ag::Var& z, const ag::Var& w) {
    if (a.ndim() != 2 || a.dim(0) != a.dim(1) || a.dim(0) != z->val.dim(0))
        throw InternalError("gcn: adjacency size mismatch with node count");
    return gcn_from_prop(ag::constant(propagation(a)), z, w);
}

ag::Var gcnl(const ag::Var& prop, const ag::Var& z, const ag::Var& w_value,
             const ag::Var& w_gate) {
    return ag::mul(gcn_from_prop(prop, z, w_value), ag::sigmoid(gcn_from_prop(prop, z, w_gate)));
}

ag::Var gcn_block(const ag::Var& h, const ag::Var& prop_s, const ag::Var& prop_dtw,
                  const ModelParams::Block& block, int k) {
    if (h->val.ndim() != 3) throw InternalError("gcn_block: input must be [N,T,C']");
    if (prop_s->val.dim(0) != h->val.dim(0) || prop_dtw->val.dim(0) != h->val.dim(0))
        throw InternalError("gcn_block: adjacency size mismatch with node count");
    const int T = h->val.dim(1);
    std::vector<Var> props = {prop_s, prop_dtw};
    std::vector<Var> branch_out;
    for (const Var& prop : props) {
        std::vector<Var> slots;
        for (int t = 0; t < T; ++t) {
            Var z = ag::time_slice(h, t);
            Var best;
            for (int q = 0; q < k; ++q) {
                z = gcnl(prop, z, block.gcn_value_w[static_cast<std::size_t>(q)],
                         block.gcn_gate_w[static_cast<std::size_t>(q)]);
                best = best ? ag::maximum(best, z) : z;
            }
            slots.push_back(best);
        }
        branch_out.push_back(ag::stack_time(slots));
    }
    return ag::maximum(branch_out[0], branch_out[1]);
}

ag::Var block_combine(const ag::Var& h_gcn, const ag::Var& h_tcn) {
    if (!h_gcn->val.same_shape(h_tcn->val)) throw InternalError("block_combine: shape mismatch");
    return ag::add(h_gcn, h_tcn);
}

ag::Var output_head(const ag::Var& h, const ModelConfig& cfg, const ModelParams& params) {
    if (cfg.T != cfg.T_prime)
        throw ConfigError("output_head: T must equal T' to reuse the hidden time axis as horizon");
    Var z = ag::affine_lastdim(h, params.phi3_w, params.phi3_b);
    z = apply_activation(z, cfg.hidden_activation);
    // Predictions are z-scored values, so the outer activation slot is identity.
    return ag::affine_lastdim(z, params.phi4_w, params.phi4_b);
}

ForwardResult forward(const ModelConfig& cfg, const ModelParams& params, const Tensor& x,
                      const std::vector<int>& te, const Tensor& a_s, const Tensor& a_dtw) {
    cfg.validate();
    if (x.ndim() != 3 || x.dim(1) != cfg.T || x.dim(2) != cfg.channels)
        throw InternalError("forward: input must be [N,T,C]");
    const int n = x.dim(0);
    if (a_s.dim(0) != n || a_dtw.dim(0) != n)
        throw InternalError("forward: adjacency size mismatch with node count");
    Var prop_s = ag::constant(propagation(a_s));
    Var prop_dtw = ag::constant(propagation(a_dtw));

    Var h = time_fuse(x, te, cfg.td, params.phi1_w, params.phi1_b, params.phi2_w, params.phi2_b);
    for (int l = 0; l < cfg.L; ++l) {
        const auto& b = params.blocks[static_cast<std::size_t>(l)];
        Var h_tcn = tcn_block(h, b.tcn_w, b.tcn_b, cfg.hidden_activation);
        Var h_gcn = gcn_block(h, prop_s, prop_dtw, b, cfg.k);
        h = block_combine(h_gcn, h_tcn);
    }
    ForwardResult out;
    out.last_nodes = ag::time_slice(h, cfg.T - 1);
    out.prediction = output_head(h, cfg, params);
    return out;
}

}  // namespace model

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const NormStats& stats,
                     const ModelParams& params) {
    json j;
    j["config"] = {{"L", cfg.L},
                   {"k", cfg.k},
                   {"hidden", cfg.hidden},
                   {"mid", cfg.mid},
                   {"proj", cfg.proj},
                   {"kernel_size", cfg.kernel_size},
                   {"T", cfg.T},
                   {"T_prime", cfg.T_prime},
                   {"td", cfg.td},
                   {"channels", cfg.channels},
                   {"hidden_activation", to_string(cfg.hidden_activation)}};
    j["norm"] = {{"mean", stats.mean}, {"std", stats.std}};
    json tensors = json::array();
    for (const auto& [name, v] : params.entries)
        tensors.push_back({{"name", name}, {"shape", v->val.shape}, {"data", v->val.data}});
    j["params"] = tensors;
    std::ofstream out(path);
    if (!out) throw InputError("cannot write checkpoint: " + path);
    out << j.dump();
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open checkpoint: " + path);
    json j = json::parse(in);
    Checkpoint c;
    const auto& jc = j.at("config");
    c.config.L = jc.at("L");
    c.config.k = jc.at("k");
    c.config.hidden = jc.at("hidden");
    c.config.mid = jc.at("mid");
    c.config.proj = jc.at("proj");
    c.config.kernel_size = jc.at("kernel_size");
    c.config.T = jc.at("T");
    c.config.T_prime = jc.at("T_prime");
    c.config.td = jc.at("td");
    c.config.channels = jc.at("channels");
    c.config.hidden_activation = activation_from_string(jc.at("hidden_activation"));
    c.norm_mean = j.at("norm").at("mean").get<std::vector<double>>();
    c.norm_std = j.at("norm").at("std").get<std::vector<double>>();
    c.params = ModelParams::init(c.config, 0);
    std::size_t idx = 0;
    for (const auto& jt : j.at("params")) {
        if (idx >= c.params.entries.size()) throw FormatError("checkpoint: too many tensors");
        auto& [name, v] = c.params.entries[idx];
        if (jt.at("name") != name) throw FormatError("checkpoint: unexpected tensor '" + std::string(jt.at("name")) + "'");
        std::vector<int> shape = jt.at("shape").get<std::vector<int>>();
        if (shape != v->val.shape) throw FormatError("checkpoint: shape mismatch for " + name);
        v->val.data = jt.at("data").get<std::vector<double>>();
        if (static_cast<long long>(v->val.data.size()) != Tensor::count(shape))
            throw FormatError("checkpoint: data size mismatch for " + name);
        ++idx;
    }
    if (idx != c.params.entries.size()) throw FormatError("checkpoint: missing tensors");
    return c;
}

}  // namespace stsm
