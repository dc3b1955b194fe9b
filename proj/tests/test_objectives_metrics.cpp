#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stsm/metrics.hpp"
#include "stsm/objectives.hpp"

using namespace stsm;
using ag::Var;

namespace {

Var vec(std::initializer_list<double> v) {
    Tensor t({static_cast<int>(v.size())});
    std::copy(v.begin(), v.end(), t.data.begin());
    return ag::constant(std::move(t));
}

std::vector<Var> random_views(int m, int dim, std::mt19937_64& rng, double scale = 1.0) {
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<Var> out;
    for (int i = 0; i < m; ++i) {
        Tensor t({dim});
        for (double& v : t.data) v = scale * d(rng);
        out.push_back(ag::constant(std::move(t)));
    }
    return out;
}

}  // namespace

TEST_CASE("prediction loss is mean squared error") {
    Var p = ag::constant(Tensor::from({2, 2, 1}, {1, 2, 3, 4}));
    Tensor t = Tensor::from({2, 2, 1}, {1, 0, 3, 0});
    CHECK(prediction_loss(p, t)->val(0) == doctest::Approx(5.0).epsilon(1e-12));

    Tensor bad = t;
    bad.data[0] = std::nan("");
    CHECK_THROWS_AS(prediction_loss(p, bad), NumericError);
    Var badp = ag::constant(bad);
    CHECK_THROWS_AS(prediction_loss(badp, t), NumericError);
}

TEST_CASE("graph representation oracle and node-order invariance") {
    ModelParams params;
    params.head_a_w = ag::constant(Tensor::from({2, 2}, {1, 0, 0, 1}));
    params.head_a_b = ag::constant(Tensor({2}, 0.0));
    params.head_b_w = ag::constant(Tensor::from({2, 2}, {1, 0, 0, 1}));
    params.head_b_b = ag::constant(Tensor::from({2}, {1.0, 1.0}));

    Var nodes = ag::constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
    Var z = graph_representation(nodes, params);
    CHECK(z->val(0) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(z->val(1) == doctest::Approx(7.0).epsilon(1e-12));

    Var swapped = ag::constant(Tensor::from({2, 2}, {3, 4, 1, 2}));
    Var zs = graph_representation(swapped, params);
    for (std::size_t i = 0; i < z->val.data.size(); ++i)
        CHECK(zs->val.data[i] == doctest::Approx(z->val.data[i]).epsilon(1e-12));
}

TEST_CASE("contrastive loss closed forms") {
    // orthogonal pair, tau 1: each term log(e/1) = 1, loss -1
    std::vector<Var> f{vec({1, 0}), vec({0, 1})};
    std::vector<Var> m{vec({1, 0}), vec({0, 1})};
    CHECK(contrastive_loss(f, m, 1.0)->val(0) == doctest::Approx(-1.0).epsilon(1e-12));

    // identical views: pos equals every negative, loss log(M-1)
    std::vector<Var> same4(4, vec({0.3, 0.4}));
    CHECK(contrastive_loss(same4, same4, 0.7)->val(0) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-12));
    std::vector<Var> same2(2, vec({0.3, 0.4}));
    CHECK(contrastive_loss(same2, same2, 0.7)->val(0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("contrastive loss rejects bad arguments") {
    std::vector<Var> one{vec({1, 0})};
    CHECK_THROWS_AS(contrastive_loss(one, one, 1.0), ConfigError);
    std::vector<Var> two{vec({1, 0}), vec({0, 1})};
    CHECK_THROWS_AS(contrastive_loss(two, two, 0.0), ConfigError);
    CHECK_THROWS_AS(contrastive_loss(two, one, 1.0), InternalError);
}

TEST_CASE("contrastive loss is scale invariant") {
    std::mt19937_64 rng(31);
    auto f = random_views(5, 8, rng);
    auto m = random_views(5, 8, rng);
    const double base = contrastive_loss(f, m, 0.5)->val(0);
    std::vector<Var> fs, ms;
    for (const auto& v : f) fs.push_back(ag::scale(v, 3.7));
    for (const auto& v : m) ms.push_back(ag::scale(v, 3.7));
    CHECK(contrastive_loss(fs, ms, 0.5)->val(0) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("total loss algebra") {
    Var lp = vec({2.0}), lc = vec({3.0});
    CHECK(total_loss(lp, lc, 0.5)->val(0) == doctest::Approx(3.5).epsilon(1e-12));
    CHECK(total_loss(lp, lc, 0.0) == lp);  // lambda 0 bypasses the CL term
    CHECK_THROWS_AS(total_loss(lp, lc, -0.1), ConfigError);
}

TEST_CASE("metric formulas") {
    const std::vector<double> pred{1.0, 4.0}, tgt{1.0, 2.0};
    MetricReport r = evaluate_metrics(pred, tgt);
    CHECK(r.rmse == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.mae == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.mape == doctest::Approx(0.5).epsilon(1e-12));  // (0/1 + 2/2) / 2
    // sst = 0.5, sse = 4
    CHECK(r.r2 == doctest::Approx(1.0 - 4.0 / 0.5).epsilon(1e-12));
}

TEST_CASE("mape skips targets below the floor") {
    MetricReport r = evaluate_metrics({1.0, 5.0}, {0.05, 4.0});
    CHECK(r.mape == doctest::Approx(0.25).epsilon(1e-12));
    MetricReport all_small = evaluate_metrics({1.0}, {0.0});
    CHECK(all_small.mape == 0.0);
}

TEST_CASE("r2 edge cases and invariants") {
    // constant targets with errors: r2 pinned to 0
    CHECK(evaluate_metrics({1.0, 2.0}, {3.0, 3.0}).r2 == 0.0);
    // perfect constant prediction: r2 = 1
    CHECK(evaluate_metrics({3.0, 3.0}, {3.0, 3.0}).r2 == 1.0);

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> p(40), t(40);
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = d(rng);
            t[i] = d(rng);
        }
        MetricReport r = evaluate_metrics(p, t);
        CHECK(r.rmse >= r.mae);
        CHECK(r.mae >= 0.0);
        CHECK(r.r2 <= 1.0);
    }

    CHECK_THROWS_AS(evaluate_metrics({}, {}), InputError);
    CHECK_THROWS_AS(evaluate_metrics({1.0}, {1.0, 2.0}), InputError);
}
