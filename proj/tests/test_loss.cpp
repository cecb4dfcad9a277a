#include <doctest.h>

#include <cmath>

#include "cwb/dataio.hpp"
#include "cwb/loss.hpp"
#include "oracles.hpp"

using namespace cwb;

namespace {

Vector vec(std::initializer_list<double> xs) {
    Vector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

}  // namespace

TEST_CASE("pseudo residuals, gaussian definition") {
    LossSpec loss{LossFamily::gaussian_l2};
    const Vector r = pseudo_residuals(loss, vec({2.0}), vec({0.5}));
    CHECK(r[0] == 1.5);
}

TEST_CASE("pseudo residuals, binomial at f = 0") {
    LossSpec loss{LossFamily::binomial_logit};
    const Vector r = pseudo_residuals(loss, vec({1.0}), vec({0.0}));
    CHECK(r[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("pseudo residuals match finite differences of the summed risk") {
    oracle::VectorXd y(50), f(50);
    cwb::SplitMix64 rng(42);
    for (int i = 0; i < 50; ++i) {
        y[i] = rng.uniform01() < 0.5 ? 0.0 : 1.0;
        f[i] = 3.0 * (rng.uniform01() - 0.5);
    }
    for (LossFamily fam : {LossFamily::gaussian_l2, LossFamily::binomial_logit}) {
        LossSpec loss{fam};
        const Vector r = pseudo_residuals(loss, y, f);
        const auto total = [&](const oracle::VectorXd& fv) { return sum_loss(loss, y, fv); };
        const oracle::VectorXd g = oracle::finite_difference_gradient(total, f);
        for (int i = 0; i < 50; ++i) {
            CHECK(r[i] == doctest::Approx(-g[i]).epsilon(1e-4));
        }
    }
}

TEST_CASE("empirical risk basics") {
    LossSpec gauss{LossFamily::gaussian_l2};
    CHECK(empirical_risk(gauss, vec({1.0, 2.0}), vec({1.0, 2.0})) == 0.0);

    LossSpec binom{LossFamily::binomial_logit};
    CHECK(empirical_risk(binom, vec({1.0}), vec({0.0})) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("binomial risk is finite and ordered at extreme predictors") {
    LossSpec loss{LossFamily::binomial_logit};
    const double at_pos = empirical_risk(loss, vec({1.0}), vec({1000.0}));
    const double at_neg = empirical_risk(loss, vec({1.0}), vec({-1000.0}));
    CHECK(std::isfinite(at_pos));
    CHECK(std::isfinite(at_neg));
    CHECK(at_pos < at_neg);  // y = 1 prefers large f
    CHECK(at_neg > 999.0);
}

TEST_CASE("binomial response encoding is validated") {
    LossSpec loss{LossFamily::binomial_logit};
    CHECK_THROWS_AS(validate_response(loss, vec({0.0, 0.5})), InputError);
    CHECK_NOTHROW(validate_response(loss, vec({0.0, 1.0})));
}

TEST_CASE("init constant, gaussian pooled mean from site aggregates") {
    LossSpec loss{LossFamily::gaussian_l2};
    CHECK(init_constant(loss, {{6.0, 2}, {4.0, 2}}) == 2.5);
}

TEST_CASE("init constant, binomial") {
    LossSpec loss{LossFamily::binomial_logit};
    CHECK(init_constant(loss, {{2.0, 4}}) == doctest::Approx(0.0).epsilon(1e-15));
    // p = 0.75 -> log 3, cross-checked by direct 1-D minimization of the risk
    const double c = init_constant(loss, {{3.0, 4}});
    CHECK(c == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    Vector y = vec({1.0, 1.0, 1.0, 0.0});
    const double c_oracle = oracle::minimize_scalar(
        [&](double v) {
            Vector f = Vector::Constant(4, v);
            return empirical_risk(loss, y, f);
        },
        -10.0, 10.0);
    CHECK(c == doctest::Approx(c_oracle).epsilon(1e-8));
}

TEST_CASE("init constant minimizes the empirical risk over constants") {
    cwb::SplitMix64 rng(7);
    for (LossFamily fam : {LossFamily::gaussian_l2, LossFamily::binomial_logit}) {
        LossSpec loss{fam};
        Vector y(40);
        for (int i = 0; i < 40; ++i) {
            y[i] = fam == LossFamily::gaussian_l2 ? rng.normal() : (rng.uniform01() < 0.3 ? 1.0 : 0.0);
        }
        const double c = init_constant(loss, {{y.sum(), 40}});
        const double at_c = empirical_risk(loss, y, Vector::Constant(40, c));
        CHECK(at_c <= empirical_risk(loss, y, Vector::Constant(40, c + 0.01)));
        CHECK(at_c <= empirical_risk(loss, y, Vector::Constant(40, c - 0.01)));
    }
}

TEST_CASE("degenerate binomial mean is rejected") {
    LossSpec loss{LossFamily::binomial_logit};
    CHECK_THROWS_AS(init_constant(loss, {{4.0, 4}}), DegenerateResponseError);
    CHECK_THROWS_AS(init_constant(loss, {{0.0, 4}}), DegenerateResponseError);
}

TEST_CASE("distributed init equals pooled init exactly") {
    LossSpec loss{LossFamily::gaussian_l2};
    cwb::SplitMix64 rng(11);
    std::vector<ResponseAggregate> sites;
    double pooled_sum = 0.0;
    long pooled_n = 0;
    for (int s = 0; s < 4; ++s) {
        ResponseAggregate agg;
        agg.n = 10 + s;
        for (long i = 0; i < agg.n; ++i) agg.sum_y += rng.normal();
        sites.push_back(agg);
    }
    // pooled path folds the same per-site sums in ascending site order
    for (const auto& s : sites) {
        pooled_sum += s.sum_y;
        pooled_n += s.n;
    }
    CHECK(init_constant(loss, sites) == pooled_sum / static_cast<double>(pooled_n));
}
