#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "relsparse/error.hpp"
#include "relsparse/evaluation.hpp"
#include "relsparse/optimizer.hpp"
#include "relsparse/simulation.hpp"

using namespace relsparse;

namespace {

// Minimizes 0.5 (z - x)^2 + t |z - b| by repeatedly zooming a uniform grid.
double scalar_prox_oracle(double x, double b, double t) {
    auto f = [&](double z) { return 0.5 * (z - x) * (z - x) + t * std::abs(z - b); };
    double lo = std::min(x, b) - 1.0, hi = std::max(x, b) + 1.0;
    double best = lo;
    for (int level = 0; level < 12; ++level) {
        const int pts = 201;
        const double h = (hi - lo) / (pts - 1);
        double fbest = f(lo);
        best = lo;
        for (int i = 1; i < pts; ++i) {
            const double z = lo + h * i;
            if (f(z) < fbest) {
                fbest = f(z);
                best = z;
            }
        }
        // b itself is a kink; keep it as a candidate at every level
        if (f(b) <= fbest) best = b;
        lo = best - 2 * h;
        hi = best + 2 * h;
    }
    if (best == b) return b;
    // Value comparisons stall near sqrt(eps); refine by bisecting the derivative
    const double side = best > b ? 1.0 : -1.0;
    lo = best - 1e-2;
    hi = best + 1e-2;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((mid - x) + t * side > 0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    const double root = 0.5 * (lo + hi);
    // No stationary point on that piece: the minimum sits at the kink
    return (root - b) * side > 0 && root > best - 1e-2 && root < best + 1e-2 ? root : b;
}

SplitPair simulated_split(std::uint64_t seed, Coefficients& b_out) {
    const auto raw = simulate_dataset(SimConfig::study_defaults(), seed);
    auto sp = split(raw, 0.5, derive_seed(seed, 0));
    sp.train = scale_dataset(sp.train);
    sp.test = apply_scaling(sp.test, *sp.train.scale_factors());
    b_out = fit_behavioral(sp.train, BehavioralCvConfig{}, derive_seed(seed, 1)).b;
    return sp;
}

}  // namespace

TEST_CASE("penalty: hand values") {
    Vector beta(2), b(2);
    b << 0.3, -1.0;
    beta = b;
    CHECK(penalty(beta, b, 7.0) == 0.0);
    beta << 1.3, -3.0;
    CHECK(penalty(beta, b, 0.5) == doctest::Approx(1.5));
    CHECK(penalty(beta, b, 0.0) == 0.0);
    CHECK_THROWS_AS(penalty(Vector::Zero(3), b, 1.0), DimensionError);
}

TEST_CASE("prox: soft-threshold examples") {
    Vector x(2), b(2);
    b << 1.0, 2.0;
    x << 1.3, 1.9;
    CHECK(prox_recentered_l1(x, b, 0.0) == x);
    const Vector z = prox_recentered_l1(x, b, 0.2);
    CHECK(z(0) - b(0) == doctest::Approx(0.1));
    CHECK(z(1) == b(1));
    CHECK(prox_recentered_l1(x, b, 0.3) == b);
    CHECK(prox_recentered_l1(x, b, 5.0) == b);
}

TEST_CASE("prox agrees with scalar grid minimization") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        Vector x(4), b(4);
        for (int j = 0; j < 4; ++j) {
            x(j) = 2.0 * z(rng);
            b(j) = z(rng);
        }
        const double t = u(rng);
        const Vector p = prox_recentered_l1(x, b, t);
        for (int j = 0; j < 4; ++j) {
            CHECK(std::abs(p(j) - scalar_prox_oracle(x(j), b(j), t)) <= 1e-9);
            // Exact optimality: x - p lies in t * subdifferential of |. - b| at p
            if (p(j) == b(j)) {
                CHECK(std::abs(x(j) - b(j)) <= t);
            } else {
                CHECK(std::abs((x(j) - p(j)) - std::copysign(t, p(j) - b(j))) <= 1e-12 * (1.0 + std::abs(x(j))));
            }
        }
    }
}

TEST_CASE("divergence count: strict inequality") {
    Vector b(2), beta(2);
    b << 0.0, 1.0;
    CHECK(divergence_count(b, b, 0.01) == 0);
    beta << 0.02, 1.005;
    CHECK(divergence_count(beta, b, 0.01) == 1);
    beta << 1e-12, 1.0;
    CHECK(divergence_count(beta, b, 0.0) == 1);
    beta << 0.5, 1.5;
    CHECK(divergence_count(beta, b, 0.5) == 0);
}

TEST_CASE("KKT residual is zero exactly at stationary configurations") {
    Vector beta(3), b(3), g(3);
    b << 0.0, 0.0, 0.0;
    beta << 0.5, 0.0, -0.2;
    g << 2.0, -1.5, -2.0;
    CHECK(kkt_residual(beta, b, g, 2.0) == 0.0);
    g(1) = 2.5;
    CHECK(kkt_residual(beta, b, g, 2.0) == doctest::Approx(0.5));
}

TEST_CASE("optimize: huge lambda returns b with no divergence") {
    Vector b(3);
    b << 0.4, -0.3, 0.1;
    const auto d = testutil::random_dataset(60, 3, 9, &b, 10.0);
    const double gmax = value_gradient(b, b, d).lpNorm<Eigen::Infinity>();
    const auto p = optimize(d, b, 10.0 * gmax + 1.0, b);
    CHECK(p.converged);
    CHECK((p.beta - b).lpNorm<Eigen::Infinity>() <= 1e-7);
    CHECK(p.divergence_count == 0);
    CHECK(p.train_value.v == doctest::Approx(d.reward().mean()));
}

TEST_CASE("optimize: K = 1 agrees with brute-force grid search") {
    Matrix s0(3, 1), s1 = Matrix::Zero(3, 1);
    s0 << 1.0, -0.5, 2.0;
    Vector r(3);
    r << 2.0, 1.0, 3.0;
    const Dataset d(s0, {1, 0, 1}, s1, r, default_covariate_names(1));
    Vector b(1);
    b << 0.2;
    for (double lambda : {0.05, 0.3, 1.0}) {
        auto J = [&](double x) {
            Vector beta(1);
            beta << x;
            return ipw_value(beta, b, d).v - penalty(beta, b, lambda);
        };
        double best_x = -30.0, best_j = J(-30.0);
        for (int i = 1; i <= 60000; ++i) {
            const double x = -30.0 + 1e-3 * i;
            const double j = J(x);
            if (j > best_j) {
                best_j = j;
                best_x = x;
            }
        }
        const auto p = optimize(d, b, lambda, b);
        CHECK(p.converged);
        CHECK(std::abs(p.beta(0) - best_x) <= 2e-3);
        CHECK(std::abs(p.objective - best_j) <= 1e-6);
    }
}

TEST_CASE("optimize: invalid lambda") {
    const auto d = testutil::random_dataset(10, 2, 1);
    CHECK_THROWS_AS(optimize(d, Vector::Zero(2), 0.0, Vector::Zero(2)), ConfigError);
    CHECK_THROWS_AS(optimize(d, Vector::Zero(2), -1.0, Vector::Zero(2)), ConfigError);
    OptimizerConfig bad;
    bad.backtrack_factor = 1.0;
    CHECK_THROWS_AS(optimize(d, Vector::Zero(2), 1.0, Vector::Zero(2), bad), ConfigError);
}

TEST_CASE("grid validation") {
    CHECK(normalize_grid({0.1, 1.0, 0.5}) == std::vector<double>{1.0, 0.5, 0.1});
    CHECK_THROWS_AS(normalize_grid({1.0, 0.5, 1.0}), ConfigError);
    CHECK_THROWS_AS(normalize_grid({1.0, 0.0}), ConfigError);
    CHECK_THROWS_AS(normalize_grid({}), ConfigError);
}

TEST_CASE("fit_path: single huge lambda gives b") {
    Coefficients b;
    const auto sp = simulated_split(3, b);
    const auto path = fit_path(sp, b, {1e6}, 0.01);
    REQUIRE(path.points.size() == 1);
    CHECK(path.points[0].beta == b);
    CHECK(path.points[0].divergence_count == 0);
    CHECK(path.points[0].test_value->v == doctest::Approx(sp.test.reward().mean()));
}

TEST_CASE("fit_path on simulated data: monotonicity, stationarity, boundedness, warm starts") {
    Coefficients b;
    const auto sp = simulated_split(11, b);
    const auto grid = make_grid(1e-3, 1e2, 40);
    const OptimizerConfig cfg;
    const auto path = fit_path(sp, b, grid, 0.01, cfg);
    REQUIRE(path.points.size() == 40);
    const double slack = 2 * cfg.grad_tol;
    for (std::size_t i = 0; i < path.points.size(); ++i) {
        const auto& p = path.points[i];
        CHECK(p.beta.allFinite());
        CHECK(p.beta.lpNorm<Eigen::Infinity>() < 50.0);
        CHECK(p.objective ==
              doctest::Approx(p.train_value.v - penalty(p.beta, b, p.lambda)).epsilon(1e-12));
        CHECK(p.divergence_count <= 9);
        if (i > 0) {
            CHECK(p.lambda < path.points[i - 1].lambda);
            CHECK(p.train_value.v >= path.points[i - 1].train_value.v - slack);
            CHECK((p.beta - b).lpNorm<1>() >= (path.points[i - 1].beta - b).lpNorm<1>() - slack);
        }
    }
    // Largest-lambda end reproduces behavior
    CHECK(path.points.front().beta == b);
    // Covariate 2 diverges upward at the first grid point with any divergence
    for (const auto& p : path.points) {
        if (p.divergence_count > 0) {
            CHECK(p.beta(1) > b(1));
            break;
        }
    }
    // Cold starts reach the warm-started objective
    for (std::size_t i : {6u, 10u, 15u}) {
        const auto& warm = path.points[i];
        const auto cold = optimize(sp.train, b, warm.lambda, b, cfg);
        CHECK(cold.objective >= warm.objective - 1e-6);
    }
}

TEST_CASE("path CSV round trip") {
    Coefficients b;
    const auto sp = simulated_split(4, b);
    const auto path = fit_path(sp, b, make_grid(0.1, 30.0, 5), 0.01);
    std::stringstream ss;
    write_path_csv(ss, path);
    const std::string text = ss.str();
    CHECK(text.rfind("lambda,iter,converged,train_value,train_se,test_value,test_se,divergence_count,beta_1", 0) == 0);
    const auto back = parse_path_csv(ss, 0.01);
    REQUIRE(back.points.size() == 5);
    CHECK(back.b == path.b);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(back.points[i].lambda == path.points[i].lambda);
        CHECK(back.points[i].beta == path.points[i].beta);
        CHECK(back.points[i].train_value.v == path.points[i].train_value.v);
        CHECK(back.points[i].test_value->se == path.points[i].test_value->se);
        CHECK(back.points[i].divergence_count == path.points[i].divergence_count);
    }
}
