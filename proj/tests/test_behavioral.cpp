#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "relsparse/behavioral.hpp"
#include "relsparse/error.hpp"
#include "relsparse/policy.hpp"
#include "relsparse/simulation.hpp"

using namespace relsparse;

TEST_CASE("policy_prob: hand values and complement") {
    Vector s(3);
    s << 1.0, -2.0, 0.5;
    CHECK(policy_prob(Vector::Zero(3), s, 1) == 0.5);

    Vector b0 = Vector::Zero(9);
    b0(0) = -0.01;
    b0(1) = 0.02;
    const Vector s45 = Vector::Constant(9, 45.0);
    const double expected = 1.0 / (1.0 + std::exp(-0.45));
    CHECK(policy_prob(b0, s45, 1) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(policy_prob(b0, s45, 1) == doctest::Approx(0.6106).epsilon(1e-4));

    Vector c(3);
    c << 3.0, 1.5, -40.0;
    CHECK(policy_prob(c, s, 0) + policy_prob(c, s, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(policy_prob(Vector::Zero(2), s, 1), DimensionError);
}

TEST_CASE("policy_prob stays inside (0,1) for large linear predictors") {
    Vector s(1);
    s << 1.0;
    Vector c(1);
    c << 30.0;
    const double p1 = policy_prob(c, s, 1);
    const double p0 = policy_prob(c, s, 0);
    CHECK(p1 < 1.0);
    CHECK(p0 > 0.0);
    c << -700.0;
    CHECK(std::isfinite(policy_prob(c, s, 1)));
    CHECK(policy_prob(c, s, 1) >= 0.0);
}

TEST_CASE("positivity check flags rows outside [eps, 1-eps]") {
    Matrix s0(3, 1), s1 = Matrix::Zero(3, 1);
    s0 << 0.0, 20.0, -20.0;
    const Dataset d(s0, {0, 1, 0}, s1, Vector::Ones(3), default_covariate_names(1));
    Vector b(1);
    b << 1.0;
    const auto bad = positivity_violations(b, d, 1e-6);
    REQUIRE(bad.size() == 2);
    CHECK(bad[0] == 1);
    CHECK(bad[1] == 2);
    CHECK(positivity_violations(b, d, 1e-12).empty());
}

TEST_CASE("separation: zero penalty on separable data hits the cap or fails to converge") {
    Matrix s0(6, 1), s1 = Matrix::Zero(6, 1);
    s0 << -3, -2, -1, 1, 2, 3;
    const Dataset d(s0, {0, 0, 0, 1, 1, 1}, s1, Vector::Ones(6), default_covariate_names(1));
    bool pathology = false;
    try {
        const auto fit = fit_behavioral(d, {0.0}, 2, 1);
        pathology = fit.cap_hit;
        CHECK(std::isfinite(fit.b(0)));
    } catch (const ConvergenceError&) {
        pathology = true;
    }
    CHECK(pathology);
}

TEST_CASE("single action class is a separation error") {
    auto d = testutil::random_dataset(20, 2, 1);
    std::vector<std::uint8_t> ones(20, 1);
    const Dataset all_treated(d.s0(), ones, d.s1(), d.reward(), d.covariate_names());
    CHECK_THROWS_AS(fit_behavioral(all_treated, {0.1}, 2, 1), SeparationError);
}

TEST_CASE("zero penalty satisfies the logistic score equations") {
    Vector b(3);
    b << 0.8, -0.5, 0.2;
    const auto d = testutil::random_dataset(400, 3, 17, &b);
    const auto fit = fit_logistic_l1(d, 0.0);
    const Vector p = treat_probabilities(fit.b, d);
    Vector score = Vector::Zero(3);
    for (std::size_t i = 0; i < d.n(); ++i) {
        score += (static_cast<double>(d.a0()[i]) - p(static_cast<Eigen::Index>(i))) *
                 d.s0().row(static_cast<Eigen::Index>(i)).transpose();
    }
    CHECK(score.lpNorm<Eigen::Infinity>() <= 1e-6 * static_cast<double>(d.n()));
}

TEST_CASE("L1 fit is the penalized optimum: subgradient conditions") {
    Vector b(4);
    b << 1.0, 0.0, -0.7, 0.05;
    const auto d = testutil::random_dataset(300, 4, 23, &b);
    const double pen = 0.03;
    const auto fit = fit_logistic_l1(d, pen);
    const Vector p = treat_probabilities(fit.b, d);
    Vector g = Vector::Zero(4);
    for (std::size_t i = 0; i < d.n(); ++i) {
        g += (static_cast<double>(d.a0()[i]) - p(static_cast<Eigen::Index>(i))) *
             d.s0().row(static_cast<Eigen::Index>(i)).transpose();
    }
    g /= static_cast<double>(d.n());
    for (Eigen::Index k = 0; k < 4; ++k) {
        if (fit.b(k) == 0.0) {
            CHECK(std::abs(g(k)) <= pen + 1e-6);
        } else {
            CHECK(g(k) == doctest::Approx(std::copysign(pen, fit.b(k))).epsilon(1e-5));
        }
    }
}

TEST_CASE("huge penalty shrinks to zero with log-loss log 2") {
    const auto d = testutil::random_dataset(100, 3, 2);
    const auto fit = fit_logistic_l1(d, 1e3);
    CHECK(fit.b.isZero(0.0));
    CHECK(mean_log_loss(fit.b, d) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
}

TEST_CASE("simulated data: behavioral fit recovers the active sign pattern") {
    // Covariate 1 has a weak effect and the lasso may zero it on a given draw,
    // so the sign pattern is checked across seeds.
    const auto sim = SimConfig::study_defaults();
    int strictly_negative = 0;
    double active = 0.0, inactive = 0.0;
    for (std::uint64_t seed = 90; seed < 110; ++seed) {
        const auto scaled = scale_dataset(simulate_dataset(sim, seed));
        const auto fit = fit_behavioral(scaled, BehavioralCvConfig{}, 5);
        CHECK(fit.b(0) <= 0.0);
        CHECK(fit.b(1) > 0.0);
        if (fit.b(0) < 0.0) ++strictly_negative;
        active += fit.b(1);
        for (Eigen::Index k = 2; k < 9; ++k) inactive += std::abs(fit.b(k)) / 7.0;
        // CV choice never loses to the heaviest penalty on held-out folds
        const double largest = fit.fold_losses.rbegin()->second;
        CHECK(fit.fold_losses.at(fit.cv_lambda) <= largest);
        CHECK(fit.fold_losses.size() == 20);
    }
    CHECK(strictly_negative > 10);
    CHECK(inactive < 0.25 * active);
}

TEST_CASE("fold assignment is balanced and seeded") {
    const auto f = assign_folds(23, 5, 7);
    std::vector<int> counts(5, 0);
    for (auto x : f) counts[x]++;
    for (int c : counts) CHECK((c == 4 || c == 5));
    CHECK(assign_folds(23, 5, 7) == f);
    CHECK(assign_folds(23, 5, 8) != f);
}

TEST_CASE("behavioral fit JSON round trip") {
    BehavioralFit fit;
    fit.b = Vector::LinSpaced(3, -0.3, 1.0 / 3.0);
    fit.cv_lambda = 0.0123;
    fit.fold_losses = {{0.1, 0.6}, {0.0123, 0.55}};
    fit.scale_factors = Vector::Constant(3, 17.0);
    fit.covariate_names = default_covariate_names(3);
    fit.seed = 77;
    const auto file = std::filesystem::temp_directory_path() / "relsparse_fit.json";
    write_behavioral_fit(file, fit);
    const auto back = read_behavioral_fit(file);
    CHECK(back.b == fit.b);
    CHECK(back.cv_lambda == fit.cv_lambda);
    CHECK(back.fold_losses == fit.fold_losses);
    CHECK(*back.scale_factors == *fit.scale_factors);
    CHECK(back.covariate_names == fit.covariate_names);
    CHECK(back.seed == 77);
    std::filesystem::remove(file);
}

TEST_CASE("calibration: bin partition and constant model") {
    const auto d = testutil::random_dataset(10000, 2, 31);
    const auto curve = calibration_curve(Vector::Zero(2), d, 5);
    std::size_t total = 0;
    double treated = 0.0;
    for (const auto& p : curve.points) {
        CHECK(p.mean_predicted == 0.5);
        CHECK((p.bin_count == 2000));
        total += p.bin_count;
        treated += p.observed_rate * static_cast<double>(p.bin_count);
    }
    CHECK(total == 10000);
    double rate = 0.0;
    for (auto a : d.a0()) rate += a;
    CHECK(treated == doctest::Approx(rate));

    const auto odd = calibration_curve(Vector::Zero(2), testutil::random_dataset(10001, 2, 3), 5);
    for (const auto& p : odd.points) CHECK((p.bin_count == 2000 || p.bin_count == 2001));

    CHECK_THROWS_AS(calibration_curve(Vector::Zero(2), testutil::random_dataset(3, 2, 3), 5),
                    DataError);
    CHECK_THROWS_AS(calibration_curve(Vector::Zero(2), d, 1), DataError);
}

TEST_CASE("calibration: quantile bins are ordered by prediction") {
    Vector b(2);
    b << 1.0, -1.0;
    const auto d = testutil::random_dataset(1000, 2, 8, &b);
    const auto curve = calibration_curve(b, d, 5);
    for (std::size_t j = 1; j < curve.points.size(); ++j) {
        CHECK(curve.points[j].mean_predicted >= curve.points[j - 1].mean_predicted);
    }
    const auto avg = average_curves({curve, curve});
    CHECK(avg.points[2].mean_predicted == curve.points[2].mean_predicted);
    CHECK(avg.points[2].bin_count == 2 * curve.points[2].bin_count);
}
