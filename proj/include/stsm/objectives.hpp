#pragma once

#include <vector>

#include "stsm/autograd.hpp"
#include "stsm/model.hpp"

namespace stsm {

struct LossReport {
    double l_pred = 0.0;
    double l_cl = 0.0;
    double l_total = 0.0;
    double lambda = 0.0;
    double tau = 0.0;
    int batch_size = 0;
};

// Mean squared error over all locations, horizon steps and channels.
ag::Var prediction_loss(const ag::Var& predicted, const Tensor& target);

// Z_G = phi_b(ReLU(phi_a(sum_i h_i))) from the last-step node vectors.
ag::Var graph_representation(const ag::Var& last_step_nodes, const ModelParams& params);

// InfoNCE over (full, masked) graph views; positives pair equal time slots,
// the denominator runs over the M-1 masked views from other slots only.
ag::Var contrastive_loss(const std::vector<ag::Var>& z_full, const std::vector<ag::Var>& z_masked,
                         double tau);

ag::Var total_loss(const ag::Var& l_pred, const ag::Var& l_cl, double lambda);

}  // namespace stsm
