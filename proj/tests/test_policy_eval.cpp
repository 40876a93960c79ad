#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "relsparse/error.hpp"
#include "relsparse/evaluation.hpp"
#include "relsparse/numeric.hpp"
#include "relsparse/simulation.hpp"

using namespace relsparse;

TEST_CASE("beta = b: unit weights, mean reward, divisor-n SE") {
    Vector b(3);
    b << 0.3, -0.2, 0.1;
    const auto d = testutil::random_dataset(40, 3, 4, &b, 5.0);
    const auto est = ipw_value(b, b, d);
    const auto w = importance_weights(b, b, d);
    CHECK((w.array() == 1.0).all());
    CHECK(est.max_weight == 1.0);
    const double mean = d.reward().mean();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < d.reward().size(); ++i) ss += std::pow(d.reward()(i) - mean, 2);
    const double n = static_cast<double>(d.n());
    CHECK(est.v == doctest::Approx(mean).epsilon(1e-13));
    CHECK(est.se == doctest::Approx(std::sqrt(ss / n / n)).epsilon(1e-12));
    CHECK(est.n == d.n());
}

TEST_CASE("zero rewards: zero value, SE and gradient") {
    auto d = testutil::random_dataset(25, 4, 6);
    d = Dataset(d.s0(), d.a0(), d.s1(), Vector::Zero(25), d.covariate_names());
    Vector beta(4);
    beta << 1.0, -2.0, 0.5, 3.0;
    const Vector b = Vector::Constant(4, 0.1);
    const auto est = ipw_value(beta, b, d);
    CHECK(est.v == 0.0);
    CHECK(est.se == 0.0);
    CHECK(value_gradient(beta, b, d).isZero(0.0));
}

TEST_CASE("single trajectory gradient matches hand differentiation") {
    Matrix s0(1, 2), s1 = Matrix::Zero(1, 2);
    s0 << 0.7, -1.3;
    const Dataset d(s0, {1}, s1, Vector::Ones(1), default_covariate_names(2));
    const Vector b = Vector::Zero(2);  // pi_b = 0.5
    Vector beta(2);
    beta << 0.4, 0.9;
    const double p = expit(beta.dot(s0.row(0).transpose()));
    const Vector expected = 2.0 * p * (1.0 - p) * s0.row(0).transpose();
    const Vector g = value_gradient(beta, b, d);
    CHECK(g(0) == doctest::Approx(expected(0)).epsilon(1e-14));
    CHECK(g(1) == doctest::Approx(expected(1)).epsilon(1e-14));
}

TEST_CASE("gradient matches central finite differences on random instances") {
    std::mt19937_64 rng(2024);
    std::uniform_int_distribution<int> nd(1, 50), kd(1, 5);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 20; ++trial) {
        const auto n = static_cast<std::size_t>(nd(rng));
        const auto k = static_cast<std::size_t>(kd(rng));
        Vector b(k), beta(k);
        for (std::size_t j = 0; j < k; ++j) {
            b(j) = 0.5 * z(rng);
            beta(j) = b(j) + 0.5 * z(rng);
        }
        const auto d = testutil::random_dataset(n, k, rng(), &b, 3.0);
        const Vector g = value_gradient(beta, b, d);
        for (std::size_t j = 0; j < k; ++j) {
            const double h = 1e-5;
            Vector up = beta, dn = beta;
            up(j) += h;
            dn(j) -= h;
            const double fd = (ipw_value(up, b, d).v - ipw_value(dn, b, d).v) / (2 * h);
            CHECK(std::abs(g(j) - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST_CASE("value_and_gradient agrees with separate calls") {
    Vector b(3), beta(3);
    b << 0.2, 0.1, -0.3;
    beta << -0.5, 0.4, 0.2;
    const auto d = testutil::random_dataset(30, 3, 12, &b);
    const auto vg = value_and_gradient(beta, b, d);
    CHECK(vg.value == doctest::Approx(ipw_value(beta, b, d).v).epsilon(1e-14));
    CHECK((vg.gradient - value_gradient(beta, b, d)).norm() <= 1e-14);
}

TEST_CASE("positivity violation aborts evaluation naming the row") {
    Matrix s0(3, 1), s1 = Matrix::Zero(3, 1);
    s0 << 0.0, 0.1, 30.0;
    const Dataset d(s0, {0, 1, 0}, s1, Vector::Ones(3), default_covariate_names(1));
    Vector b(1);
    b << 1.0;  // pi_b(a=0 | s=30) ~ 9e-14
    try {
        ipw_value(Vector::Zero(1), b, d);
        FAIL("expected positivity error");
    } catch (const PositivityError& e) {
        CHECK(e.row == 3);
    }
    IpwOptions loose;
    loose.positivity_floor = 1e-20;
    CHECK(std::isfinite(ipw_value(Vector::Zero(1), b, d, loose).v));
}

TEST_CASE("optional weight cap is diagnostic only") {
    Vector b(2), beta(2);
    b << 0.5, -0.5;
    beta << 3.0, 3.0;
    const auto d = testutil::random_dataset(100, 2, 1, &b);
    const auto raw = ipw_value(beta, b, d);
    IpwOptions capped;
    capped.weight_cap = 1.5;
    const auto cap = ipw_value(beta, b, d, capped);
    CHECK(raw.max_weight > 1.5);
    CHECK(cap.max_weight <= 1.5);
}

TEST_CASE("oracle: beta = 0 closed form 63 and tau = 0 gives 45") {
    const auto sim = SimConfig::study_defaults();
    const auto est = onpolicy_value(Vector::Zero(9), sim, 200000, 5);
    CHECK(std::abs(est.value - 63.0) <= 3.0 * est.se);

    auto flat = sim;
    flat.tau.setZero();
    Vector beta = Vector::Zero(9);
    beta(1) = 1.0;
    const auto est0 = onpolicy_value(beta, flat, 200000, 6);
    CHECK(std::abs(est0.value - 45.0) <= 3.0 * est0.se);
}

TEST_CASE("oracle: strong weight on covariate 2 beats the uniform policy") {
    const auto sim = SimConfig::study_defaults();
    Vector beta = Vector::Zero(9);
    beta(1) = 5.0;
    const auto strong = onpolicy_value(beta, sim, 100000, 7);
    CHECK(strong.value > 63.0 + 5.0 * strong.se);
}
