#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relsparse/behavioral.hpp"
#include "relsparse/dataset.hpp"
#include "relsparse/numeric.hpp"
#include "relsparse/optimizer.hpp"
#include "relsparse/selection.hpp"

namespace relsparse {

/// Single-stage synthetic environment. Defaults reproduce the hypotension
/// scenario: K = 9, states around a MAP of 45, treatment acting through the
/// first two covariates, reward = second covariate of the final state.
struct SimConfig {
    std::size_t k = 9;
    std::size_t n = 1000;
    Vector mu0;
    Eigen::MatrixXd sigma0;
    Eigen::MatrixXd transition_sigma;
    Vector tau;
    Vector b0;
    int reward_index = 2;  // 1-based
    std::uint64_t seed = 20240101;

    static SimConfig study_defaults(std::size_t k = 9);

    /// Throws ConfigError on shape mismatches, non-symmetric or non-PD covariances.
    void validate() const;
};

/// Draws S0 ~ N(mu0, sigma0), A0 ~ Bern(expit(b0^T S0)) on raw states and
/// S1 ~ N(S0 + (tau^T S0) A0 * 1, transition_sigma); reward = S1[reward_index].
Dataset simulate_dataset(const SimConfig& cfg, std::uint64_t replicate_seed);

struct OracleEstimate {
    double value = 0.0;
    double se = 0.0;
};

/// Direct Monte-Carlo value of pi_beta in the simulator. `beta` acts on raw
/// states, or on states divided by `scale_factors` when given.
OracleEstimate onpolicy_value(const Coefficients& beta, const SimConfig& sim, std::size_t n_mc,
                              std::uint64_t seed,
                              const std::optional<Vector>& scale_factors = std::nullopt);

inline double onpolicy_value_oracle(const Coefficients& beta, const SimConfig& sim,
                                    std::size_t n_mc, std::uint64_t seed) {
    return onpolicy_value(beta, sim, n_mc, seed).value;
}

/// Everything the per-dataset analysis needs besides the data.
struct PipelineConfig {
    double split_fraction = 0.5;
    std::vector<double> grid = make_grid(1e-3, 1e2, 40, true);
    SelectionConfig selection;
    OptimizerConfig optimizer;
    BehavioralCvConfig behavioral;
    IpwOptions ipw;
    bool add_intercept = false;
    std::uint64_t seed = 20240101;
    std::size_t threads = 1;
    /// Explicit per-replicate seeds; overrides derivation from `seed`.
    std::optional<std::vector<std::uint64_t>> replicate_seeds;
};

/// Outcome of split -> scale -> behavioral fit -> path -> selection on one dataset.
struct AnalysisResult {
    SplitPair split;  // scaled with train factors
    BehavioralFit behavioral;
    LambdaPath path;
    std::optional<SelectionResult> selection;
    std::string selection_error;  // set when selection was infeasible
    std::optional<double> best_train_value;
};

/// Runs the pipeline on a raw (unscaled) dataset. Infeasible selection is
/// recorded in the result, every other failure throws. A pre-fitted
/// behavioral model skips the CV fit.
AnalysisResult run_analysis(const Dataset& raw, const PipelineConfig& cfg, std::uint64_t seed,
                            const std::optional<BehavioralFit>& cached = std::nullopt);

struct ReplicateRecord {
    std::uint64_t seed = 0;
    double lambda = 0.0;
    std::size_t index = 0;
    std::size_t divergence = 0;
    Coefficients beta;
    Coefficients b;
    double cv_lambda = 0.0;
    ValueEstimate train_value;
    ValueEstimate test_value;
    ValueEstimate behavioral_train;
    ValueEstimate behavioral_test;
    std::size_t nonconverged_points = 0;
};

struct McSummary {
    std::size_t m = 0;  // successful replicates
    std::size_t failed = 0;
    std::vector<std::string> failures;
    std::vector<double> grid;
    std::vector<std::string> covariate_names;

    Matrix mean_coefficients;  // grid x K
    Matrix coefficient_ci;     // half-widths z * sd_M
    Vector mean_b;
    Vector b_ci;
    Vector mean_train_value, mean_train_se, mean_test_value, mean_test_se;
    Vector mean_divergence;

    std::map<double, double> selection_distribution;         // lambda -> frequency
    std::map<std::size_t, double> divergence_distribution;   // D -> frequency
    Vector covariate_selection_proportions;

    double behavioral_train_value = 0.0, behavioral_train_se = 0.0;
    double behavioral_test_value = 0.0, behavioral_test_se = 0.0;
    double suggested_train_value = 0.0, suggested_train_se = 0.0;
    double suggested_test_value = 0.0, suggested_test_se = 0.0;

    std::optional<double> lambda_bar;
    std::size_t lambda_bar_divergence = 0;
    std::string lambda_bar_error;

    std::vector<ReplicateRecord> replicates;
};

/// Simulate, split, fit and select `m` times; aggregate over replicates.
McSummary run_monte_carlo(const SimConfig& sim, std::size_t m, const PipelineConfig& cfg);

/// Same aggregation over `r` seeded train/test splits of one raw dataset.
McSummary run_resamples(const Dataset& raw, std::size_t r, const PipelineConfig& cfg);

/// path_mean.csv, path_ci.csv, selection_dist.csv, divergence_dist.csv,
/// selection_proportions.csv and summary.json, each written atomically.
void write_mc_summary(const std::filesystem::path& dir, const McSummary& s,
                      const nlohmann::json& run_info = nlohmann::json::object());

nlohmann::json summary_json(const McSummary& s);

}  // namespace relsparse
