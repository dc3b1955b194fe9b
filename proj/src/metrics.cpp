#include "stsm/metrics.hpp"

#include <cmath>

namespace stsm {

MetricReport evaluate_metrics(const std::vector<double>& predictions,
                              const std::vector<double>& targets) {
    if (targets.empty()) throw InputError("evaluate_metrics: empty target set");
    if (predictions.size() != targets.size())
        throw InputError("evaluate_metrics: prediction/target size mismatch");
    const double n = static_cast<double>(targets.size());
    double sse = 0.0, sae = 0.0, sape = 0.0, mean_t = 0.0;
    long long ape_count = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double err = predictions[i] - targets[i];
        sse += err * err;
        sae += std::abs(err);
        mean_t += targets[i];
        if (std::abs(targets[i]) > kMapeFloor) {
            sape += std::abs(err) / std::abs(targets[i]);
            ++ape_count;
        }
    }
    mean_t /= n;
    double sst = 0.0;
    for (double t : targets) sst += (t - mean_t) * (t - mean_t);
    MetricReport r;
    r.rmse = std::sqrt(sse / n);
    r.mae = sae / n;
    r.mape = ape_count > 0 ? sape / static_cast<double>(ape_count) : 0.0;
    r.r2 = sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : 0.0);
    return r;
}

}  // namespace stsm
