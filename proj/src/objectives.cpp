#include "stsm/objectives.hpp"

#include <cmath>

namespace stsm {

using ag::Var;

ag::Var prediction_loss(const ag::Var& predicted, const Tensor& target) {
    for (double v : predicted->val.data)
        if (!std::isfinite(v)) throw NumericError("prediction_loss: non-finite prediction");
    for (double v : target.data)
        if (!std::isfinite(v)) throw NumericError("prediction_loss: non-finite target");
    return ag::mse(predicted, target);
}

ag::Var graph_representation(const ag::Var& last_step_nodes, const ModelParams& params) {
    Var pooled = ag::sum_rows(last_step_nodes);
    Var z = ag::affine_lastdim(pooled, params.head_a_w, params.head_a_b);
    z = ag::relu(z);
    return ag::affine_lastdim(z, params.head_b_w, params.head_b_b);
}

ag::Var contrastive_loss(const std::vector<ag::Var>& z_full, const std::vector<ag::Var>& z_masked,
                         double tau) {
    const std::size_t m = z_full.size();
    if (m < 2) throw ConfigError("contrastive_loss: batch must hold at least two windows");
    if (z_masked.size() != m) throw InternalError("contrastive_loss: view count mismatch");
    if (tau <= 0.0) throw ConfigError("contrastive_loss: tau must be > 0");
    const double inv_tau = 1.0 / tau;
    Var acc;
    for (std::size_t t = 0; t < m; ++t) {
        Var pos = ag::exp_(ag::scale(ag::cosine(z_full[t], z_masked[t]), inv_tau));
        Var den;
        for (std::size_t tp = 0; tp < m; ++tp) {
            if (tp == t) continue;
            Var neg = ag::exp_(ag::scale(ag::cosine(z_full[t], z_masked[tp]), inv_tau));
            den = den ? ag::add(den, neg) : neg;
        }
        Var term = ag::log_(ag::div(pos, den));
        acc = acc ? ag::add(acc, term) : term;
    }
    return ag::scale(acc, -1.0 / static_cast<double>(m));
}

ag::Var total_loss(const ag::Var& l_pred, const ag::Var& l_cl, double lambda) {
    if (lambda < 0.0) throw ConfigError("total_loss: lambda must be >= 0");
    if (lambda == 0.0) return l_pred;
    return ag::add(l_pred, ag::scale(l_cl, lambda));
}

}  // namespace stsm
