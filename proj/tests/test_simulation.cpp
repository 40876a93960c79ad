#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "relsparse/error.hpp"
#include "relsparse/simulation.hpp"

using namespace relsparse;

namespace {

PipelineConfig quick_pipeline() {
    PipelineConfig cfg;
    cfg.grid = make_grid(0.5, 50.0, 8);
    return cfg;
}

double sum_values(const auto& m) {
    double s = 0.0;
    for (const auto& [k, v] : m) s += v;
    return s;
}

}  // namespace

TEST_CASE("simulator: no treatment effect keeps the reward mean at 45") {
    auto sim = SimConfig::study_defaults();
    sim.tau.setZero();
    const auto d = simulate_dataset(sim, 1);
    CHECK(d.n() == 1000);
    const double mean = d.reward().mean();
    const double sd = std::sqrt((d.reward().array() - mean).square().sum() / 999.0);
    CHECK(std::abs(mean - 45.0) <= 3.0 * sd / std::sqrt(1000.0));
}

TEST_CASE("simulator: action rate near expit(0.45)") {
    const auto d = simulate_dataset(SimConfig::study_defaults(), 2);
    double rate = 0.0;
    for (auto a : d.a0()) rate += a;
    rate /= 1000.0;
    const double p = 1.0 / (1.0 + std::exp(-0.45));
    CHECK(std::abs(rate - p) <= 3.0 * std::sqrt(p * (1 - p) / 1000.0));
}

TEST_CASE("simulator: generator moments over 1e5 draws") {
    auto sim = SimConfig::study_defaults();
    sim.n = 100000;
    const auto d = simulate_dataset(sim, 3);
    const auto& s = d.s0();
    const double n = 1e5;
    const Eigen::RowVectorXd mean = s.colwise().mean();
    for (Eigen::Index j = 0; j < 9; ++j) {
        CHECK(std::abs(mean(j) - 45.0) <= 4.0 * std::sqrt(300.0 / n));
    }
    const Matrix c = s.rowwise() - mean;
    const double var0 = c.col(0).squaredNorm() / (n - 1);
    const double cov01 = c.col(0).dot(c.col(1)) / (n - 1);
    // Var of the sample variance of a normal: 2 sigma^4 / (n - 1)
    CHECK(std::abs(var0 - 300.0) <= 4.0 * std::sqrt(2.0 * 300.0 * 300.0 / (n - 1)));
    // Var of the sample covariance: (s01^2 + s00 s11) / (n - 1)
    CHECK(std::abs(cov01 - 100.0) <= 4.0 * std::sqrt((100.0 * 100.0 + 300.0 * 300.0) / (n - 1)));
    const double corr = cov01 / std::sqrt(var0 * c.col(1).squaredNorm() / (n - 1));
    CHECK(std::abs(corr - 1.0 / 3.0) <= 3.0 * (1.0 - 1.0 / 9.0) / std::sqrt(n));
}

TEST_CASE("simulator: treatment shifts every coordinate by tau^T s0") {
    auto sim = SimConfig::study_defaults(2);
    sim.transition_sigma = Eigen::MatrixXd::Identity(2, 2) * 1e-12;
    const auto d = simulate_dataset(sim, 4);
    for (std::size_t i = 0; i < 20; ++i) {
        const auto t = d.trajectory(i);
        const double shift = t.a0 ? sim.tau.dot(t.s0) : 0.0;
        CHECK(std::abs(t.s1(0) - (t.s0(0) + shift)) < 1e-4);
        CHECK(std::abs(t.s1(1) - (t.s0(1) + shift)) < 1e-4);
        CHECK(t.reward == t.s1(1));
    }
}

TEST_CASE("simulator: determinism and config validation") {
    const auto sim = SimConfig::study_defaults();
    const auto a = simulate_dataset(sim, 9);
    const auto b = simulate_dataset(sim, 9);
    CHECK(a.s0() == b.s0());
    CHECK(a.reward() == b.reward());
    CHECK(simulate_dataset(sim, 10).s0() != a.s0());

    auto bad = sim;
    bad.sigma0(0, 1) = bad.sigma0(1, 0) = 400.0;  // |corr| > 1
    CHECK_THROWS_AS(simulate_dataset(bad, 1), ConfigError);
    auto asym = sim;
    asym.sigma0(0, 1) = 50.0;
    CHECK_THROWS_AS(asym.validate(), ConfigError);
    auto idx = sim;
    idx.reward_index = 10;
    CHECK_THROWS_AS(idx.validate(), ConfigError);
}

TEST_CASE("monte carlo: identical replicate seeds give zero-width intervals") {
    auto cfg = quick_pipeline();
    cfg.replicate_seeds = std::vector<std::uint64_t>{5, 5};
    const auto s = run_monte_carlo(SimConfig::study_defaults(), 2, cfg);
    CHECK(s.m == 2);
    CHECK(s.coefficient_ci.isZero(0.0));
    CHECK(s.b_ci.isZero(0.0));
}

TEST_CASE("monte carlo: determinism, thread independence, distribution sums") {
    auto cfg = quick_pipeline();
    cfg.seed = 77;
    const auto a = run_monte_carlo(SimConfig::study_defaults(), 4, cfg);
    const auto b = run_monte_carlo(SimConfig::study_defaults(), 4, cfg);
    cfg.threads = 3;
    const auto c = run_monte_carlo(SimConfig::study_defaults(), 4, cfg);
    CHECK(a.mean_coefficients == b.mean_coefficients);
    CHECK(a.mean_coefficients == c.mean_coefficients);
    CHECK(summary_json(a).dump() == summary_json(b).dump());
    CHECK(summary_json(a).dump() == summary_json(c).dump());
    CHECK(sum_values(a.selection_distribution) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sum_values(a.divergence_distribution) == doctest::Approx(1.0).epsilon(1e-12));
    for (Eigen::Index k = 0; k < a.covariate_selection_proportions.size(); ++k) {
        CHECK(a.covariate_selection_proportions(k) >= 0.0);
        CHECK(a.covariate_selection_proportions(k) <= 1.0);
    }
}

TEST_CASE("resamples: identical seeds and behavior-only grid") {
    const auto raw = simulate_dataset(SimConfig::study_defaults(), 21);
    auto cfg = quick_pipeline();
    cfg.replicate_seeds = std::vector<std::uint64_t>{8, 8};
    const auto s = run_resamples(raw, 2, cfg);
    REQUIRE(s.replicates.size() == 2);
    CHECK(s.replicates[0].beta == s.replicates[1].beta);
    CHECK(s.replicates[0].test_value.v == s.replicates[1].test_value.v);

    cfg.replicate_seeds.reset();
    cfg.grid = {1e6, 1e7};
    cfg.selection.vmin_rule = RelativeVmin{0.0};
    const auto flat = run_resamples(raw, 3, cfg);
    for (const auto& r : flat.replicates) {
        CHECK(r.beta == r.b);
        CHECK(r.train_value.v == r.behavioral_train.v);
        CHECK(r.test_value.v == r.behavioral_test.v);
    }
    CHECK(flat.suggested_test_value == flat.behavioral_test_value);
}

TEST_CASE("monte carlo: too few replicates rejected, outputs written") {
    CHECK_THROWS_AS(run_monte_carlo(SimConfig::study_defaults(), 1, quick_pipeline()), ConfigError);
    auto cfg = quick_pipeline();
    const auto s = run_monte_carlo(SimConfig::study_defaults(), 2, cfg);
    const auto dir = std::filesystem::temp_directory_path() / "relsparse_mc_out";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    write_mc_summary(dir, s);
    for (const char* f : {"path_mean.csv", "path_ci.csv", "selection_dist.csv", "divergence_dist.csv",
                          "selection_proportions.csv", "summary.json"}) {
        CHECK(std::filesystem::exists(dir / f));
    }
    std::filesystem::remove_all(dir);
}
