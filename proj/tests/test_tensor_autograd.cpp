#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "stsm/autograd.hpp"
#include "stsm/tensor.hpp"

using namespace stsm;
using ag::Var;

namespace {

Tensor randt(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.data) v = d(rng);
    return t;
}

// Compares analytic gradients of builder() against central differences on
// every entry of every param; returns the worst relative error.
double max_rel_grad_err(const std::vector<Var>& params, const std::function<Var()>& builder,
                        double eps = 1e-6) {
    for (const auto& p : params) p->zero_grad();
    Var loss = builder();
    ag::backward(loss);
    double worst = 0.0;
    for (const auto& p : params) {
        REQUIRE(p->grad.shape == p->val.shape);
        for (std::size_t i = 0; i < p->val.data.size(); ++i) {
            const double saved = p->val.data[i];
            double fp, fm;
            {
                ag::NoGradGuard ng;
                p->val.data[i] = saved + eps;
                fp = builder()->val(0);
                p->val.data[i] = saved - eps;
                fm = builder()->val(0);
                p->val.data[i] = saved;
            }
            const double num = (fp - fm) / (2.0 * eps);
            const double ana = p->grad.data[i];
            const double rel = std::abs(num - ana) / std::max({std::abs(num), std::abs(ana), 1e-4});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

// Fixed weights so repeated builder calls see the identical reduction.
Var weighted_sum(const Var& x) {
    Tensor w(x->val.shape);
    for (std::size_t i = 0; i < w.data.size(); ++i)
        w.data[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
    return ag::dot(ag::constant(std::move(w)), x);
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.size() == 6);
    t(1, 2) = 4.0;
    CHECK(t.data[5] == 4.0);
    Tensor u({2, 2, 2});
    u(1, 0, 1) = 7.0;
    CHECK(u.data[5] == 7.0);
    CHECK_THROWS_AS(Tensor::from({2, 2}, {1.0, 2.0, 3.0}), InternalError);
}

TEST_CASE("matmul oracle") {
    Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b = Tensor::from({3, 2}, {7, 8, 9, 10, 11, 12});
    Tensor c = matmul_val(a, b);
    CHECK(c(0, 0) == doctest::Approx(58).epsilon(1e-12));
    CHECK(c(0, 1) == doctest::Approx(64).epsilon(1e-12));
    CHECK(c(1, 0) == doctest::Approx(139).epsilon(1e-12));
    CHECK(c(1, 1) == doctest::Approx(154).epsilon(1e-12));
    Tensor at = transpose_val(a);
    CHECK(at.shape == std::vector<int>{3, 2});
    CHECK(at(2, 1) == 6.0);
}

TEST_CASE("elementwise op gradients") {
    std::mt19937_64 rng(42);
    const std::vector<int> shape{3, 4};
    Var a = ag::param(randt(shape, rng, 0.3, 1.2));
    Var b = ag::param(randt(shape, rng, 0.3, 1.2));
    std::vector<Var> params{a, b};

    auto check = [&](const std::function<Var()>& f) {
        CHECK(max_rel_grad_err(params, f) < 1e-5);
    };
    check([&] { return weighted_sum(ag::add(a, b)); });
    check([&] { return weighted_sum(ag::sub(a, b)); });
    check([&] { return weighted_sum(ag::mul(a, b)); });
    check([&] { return weighted_sum(ag::div(a, b)); });
    check([&] { return weighted_sum(ag::scale(a, -1.7)); });
    check([&] { return weighted_sum(ag::sigmoid(a)); });
    check([&] { return weighted_sum(ag::log_(a)); });
    check([&] { return weighted_sum(ag::exp_(a)); });
    check([&] { return weighted_sum(ag::sqrt_(a)); });
}

TEST_CASE("relu and maximum gradients away from kinks") {
    std::mt19937_64 rng(7);
    Tensor av = randt({3, 3}, rng), bv = randt({3, 3}, rng);
    // keep entries away from the relu kink and max ties
    for (std::size_t i = 0; i < av.data.size(); ++i) {
        if (std::abs(av.data[i]) < 0.1) av.data[i] += 0.3;
        if (std::abs(av.data[i] - bv.data[i]) < 0.1) bv.data[i] += 0.4;
    }
    Var a = ag::param(av), b = ag::param(bv);
    CHECK(max_rel_grad_err({a}, [&] { return weighted_sum(ag::relu(a)); }) < 1e-5);
    CHECK(max_rel_grad_err({a, b}, [&] { return weighted_sum(ag::maximum(a, b)); }) < 1e-5);
}

TEST_CASE("maximum tie routes gradient to the first argument") {
    Tensor v = Tensor::from({2}, {1.0, 2.0});
    Var a = ag::param(v), b = ag::param(v);
    Var s = ag::dot(ag::constant(Tensor::from({2}, {1.0, 1.0})), ag::maximum(a, b));
    ag::backward(s);
    CHECK(a->grad.data[0] == 1.0);
    CHECK(a->grad.data[1] == 1.0);
    CHECK(b->grad.shape.empty());
}

TEST_CASE("matmul and affine gradients") {
    std::mt19937_64 rng(9);
    Var a = ag::param(randt({3, 4}, rng));
    Var b = ag::param(randt({4, 2}, rng));
    CHECK(max_rel_grad_err({a, b}, [&] { return weighted_sum(ag::matmul(a, b)); }) < 1e-5);

    Var x = ag::param(randt({2, 3, 4}, rng));
    Var w = ag::param(randt({4, 5}, rng));
    Var bias = ag::param(randt({5}, rng));
    CHECK(max_rel_grad_err({x, w, bias},
                           [&] { return weighted_sum(ag::affine_lastdim(x, w, bias)); }) <
          1e-5);
}

TEST_CASE("causal convolution value and gradient") {
    std::mt19937_64 rng(11);
    // value oracle: ks=2, dilation 1, single channel
    Var x1 = ag::constant(Tensor::from({1, 3, 1}, {1, 2, 3}));
    Var w1 = ag::constant(Tensor::from({2, 1, 1}, {10, 1}));
    Var b1 = ag::constant(Tensor::from({1}, {0.5}));
    Var y = ag::conv1d_causal(x1, w1, b1, 1);
    // y_t = 10*x_{t-1} + 1*x_t + 0.5, left pad zero
    CHECK(y->val(0, 0, 0) == doctest::Approx(1.5));
    CHECK(y->val(0, 1, 0) == doctest::Approx(12.5));
    CHECK(y->val(0, 2, 0) == doctest::Approx(23.5));

    for (int dilation : {1, 2}) {
        Var x = ag::param(randt({2, 6, 3}, rng));
        Var w = ag::param(randt({2, 3, 4}, rng));
        Var b = ag::param(randt({4}, rng));
        CHECK(max_rel_grad_err({x, w, b}, [&] {
                  return weighted_sum(ag::conv1d_causal(x, w, b, dilation));
              }) < 1e-5);
    }
    Var xs = ag::param(randt({1, 2, 1}, rng));
    Var ws = ag::param(randt({6, 1, 1}, rng));
    Var bs = ag::param(randt({1}, rng));
    CHECK_THROWS_AS(ag::conv1d_causal(xs, ws, bs, 1), ConfigError);
    CHECK_THROWS_AS(ag::conv1d_causal(xs, ws, bs, 0), ConfigError);
}

TEST_CASE("time and reduction op gradients") {
    std::mt19937_64 rng(13);
    Var x = ag::param(randt({3, 4, 2}, rng));
    Var m = ag::param(randt({4, 2}, rng));
    CHECK(max_rel_grad_err({x, m}, [&] { return weighted_sum(ag::mul_time(x, m)); }) < 1e-5);
    CHECK(max_rel_grad_err({x}, [&] { return weighted_sum(ag::time_slice(x, 2)); }) < 1e-5);
    CHECK(max_rel_grad_err({x}, [&] {
              std::vector<Var> slices;
              for (int t = 0; t < 4; ++t) slices.push_back(ag::time_slice(x, t));
              return weighted_sum(ag::stack_time(slices));
          }) < 1e-5);

    Var r = ag::param(randt({5, 3}, rng));
    CHECK(max_rel_grad_err({r}, [&] { return weighted_sum(ag::sum_rows(r)); }) < 1e-5);

    Var u = ag::param(randt({6}, rng, 0.2, 1.0));
    Var v = ag::param(randt({6}, rng, 0.2, 1.0));
    CHECK(max_rel_grad_err({u, v}, [&] { return ag::dot(u, v); }) < 1e-5);
    CHECK(max_rel_grad_err({u, v}, [&] { return ag::cosine(u, v); }) < 1e-4);

    Tensor target = randt({5, 3}, rng);
    CHECK(max_rel_grad_err({r}, [&] { return ag::mse(r, target); }) < 1e-5);
}

TEST_CASE("mse value oracle") {
    Var a = ag::constant(Tensor::from({2, 2}, {1, 2, 3, 4}));
    Tensor t = Tensor::from({2, 2}, {1, 0, 3, 1});
    CHECK(ag::mse(a, t)->val(0) == doctest::Approx((0.0 + 4.0 + 0.0 + 9.0) / 4.0).epsilon(1e-12));
}

TEST_CASE("cosine handles a zero vector") {
    Var z = ag::param(Tensor({3}, 0.0));
    Var u = ag::param(Tensor::from({3}, {1.0, 2.0, 2.0}));
    Var c = ag::cosine(z, u);
    CHECK(c->val(0) == 0.0);
    ag::backward(c);  // must not produce NaN
    for (double g : z->grad.data) CHECK(std::isfinite(g));
}

TEST_CASE("no-grad mode records no tape") {
    Var a = ag::param(Tensor::from({2}, {1.0, 2.0}));
    ag::NoGradGuard ng;
    Var s = ag::scale(a, 2.0);
    CHECK(s->parents.empty());
    CHECK_FALSE(s->requires_grad);
}

TEST_CASE("backward accumulates through shared subexpressions") {
    Var a = ag::param(Tensor::from({1}, {3.0}));
    Var sq = ag::mul(a, a);
    Var s = ag::add(sq, sq);  // 2a^2, d/da = 4a = 12
    ag::backward(s);
    CHECK(a->grad.data[0] == doctest::Approx(12.0).epsilon(1e-12));
}

TEST_CASE("release_graph survives deep chains") {
    Var a = ag::param(Tensor::from({1}, {1.0}));
    Var x = a;
    for (int i = 0; i < 200000; ++i) x = ag::scale(x, 1.0);
    ag::release_graph(x);
    CHECK(x->parents.empty());
}
