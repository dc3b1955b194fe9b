#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stsm/autograd.hpp"
#include "stsm/tensor.hpp"

namespace stsm {

enum class Activation { Relu, Sigmoid, Identity };
Activation activation_from_string(const std::string& s);
ag::Var apply_activation(const ag::Var& v, Activation a);

struct ModelConfig {
    int L = 2;             // block count
    int k = 2;             // GCN layers per block
    int hidden = 32;       // channel width C'
    int mid = 16;          // output head inner width
    int proj = 16;         // contrastive head latent width
    int kernel_size = 2;   // temporal kernel width
    int T = 12;
    int T_prime = 12;
    int td = 288;
    int channels = 1;
    Activation hidden_activation = Activation::Relu;

    int tcn_sublayers() const;  // ceil(log2 T), at least 1; dilations 1,2,4,...
    void validate() const;
};

// All learnable tensors, addressable both by structure and by name (the named
// list fixes the optimizer and serialization order).
struct ModelParams {
    ag::Var phi1_w, phi1_b, phi2_w, phi2_b;
    struct Block {
        std::vector<ag::Var> tcn_w, tcn_b;          // per dilated sub-layer
        std::vector<ag::Var> gcn_value_w, gcn_gate_w;  // per GCN layer q
    };
    std::vector<Block> blocks;
    ag::Var phi3_w, phi3_b, phi4_w, phi4_b;
    ag::Var head_a_w, head_a_b, head_b_w, head_b_b;  // contrastive projection

    std::vector<std::pair<std::string, ag::Var>> entries;

    static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
    std::vector<Tensor> snapshot() const;
    void restore(const std::vector<Tensor>& values) const;
    void zero_grads() const;
};

namespace model {

// H^0 = phi1(X) (.) phi2(TE), TE fed as interval-id / Td.
ag::Var time_fuse(const Tensor& x, const std::vector<int>& te, int td, const ag::Var& phi1_w,
                  const ag::Var& phi1_b, const ag::Var& phi2_w, const ag::Var& phi2_b);

// Stacked 1-D dilated causal convolutions, dilation 2^j, output length T.
ag::Var tcn_block(const ag::Var& h, const std::vector<ag::Var>& kernels,
                  const std::vector<ag::Var>& biases, Activation act);

// Norm(A+I) Z W; symmetric normalization for symmetric A, row-normalized
// otherwise. Asymmetric adjacencies are sender-row and are transposed so the
// receiver aggregates its incoming edges.
ag::Var gcn(const Tensor& a, const ag::Var& z, const ag::Var& w);
ag::Var gcn_from_prop(const ag::Var& prop, const ag::Var& z, const ag::Var& w);

// GCNL(A,Z) = GCN(A,Z) (.) sigmoid(GCN(A,Z)) with independent weight sets.
ag::Var gcnl(const ag::Var& prop, const ag::Var& z, const ag::Var& w_value,
             const ag::Var& w_gate);

// Per time slot: chain k GCNL layers, max over layer outputs; concatenate
// slots; max over the two adjacency branches.
ag::Var gcn_block(const ag::Var& h, const ag::Var& prop_s, const ag::Var& prop_dtw,
                  const ModelParams::Block& block, int k);

ag::Var block_combine(const ag::Var& h_gcn, const ag::Var& h_tcn);

// phi4(sigma(phi3(H^L))) position-wise; identity outer activation, the final
// T-length axis is read as the T'-step horizon (requires T == T').
ag::Var output_head(const ag::Var& h, const ModelConfig& cfg, const ModelParams& params);

struct ForwardResult {
    ag::Var prediction;   // [N', T', C]
    ag::Var last_nodes;   // [N', C'] last-block last-step vectors
};

ForwardResult forward(const ModelConfig& cfg, const ModelParams& params, const Tensor& x,
                      const std::vector<int>& te, const Tensor& a_s, const Tensor& a_dtw);

// Propagation matrix used by forward for a given raw adjacency.
Tensor propagation(const Tensor& a);

}  // namespace model

struct NormStats;
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const NormStats& stats,
                     const ModelParams& params);
struct Checkpoint {
    ModelConfig config;
    std::vector<double> norm_mean, norm_std;
    ModelParams params;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stsm
