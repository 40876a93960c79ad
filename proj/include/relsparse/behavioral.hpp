#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "relsparse/dataset.hpp"

namespace relsparse {

struct LogisticFitOptions {
    std::size_t max_iters = 20000;
    /// Stop when the sup-norm of the proximal gradient mapping falls below this.
    double tol = 1e-8;
    /// Box on |b_k| (scaled data) that keeps separated fits finite.
    double coef_cap = 50.0;
};

struct LogisticFitResult {
    Coefficients b;
    std::size_t iterations = 0;
    double grad_norm = 0.0;
    bool cap_hit = false;
};

/// Maximizes (1/n) sum_i log pi_b(a_i|s_i) - penalty * ||b||_1 by accelerated
/// proximal gradient (FISTA with adaptive restart) inside the coefficient box.
/// Throws ConvergenceError if the iteration budget runs out.
LogisticFitResult fit_logistic_l1(const Dataset& d, double penalty,
                                  const std::optional<Coefficients>& init = std::nullopt,
                                  const LogisticFitOptions& opts = {});

/// Mean negative log-likelihood per row.
double mean_log_loss(const Coefficients& b, const Dataset& d);

struct BehavioralFit {
    Coefficients b;
    double cv_lambda = 0.0;
    std::map<double, double> fold_losses;  // penalty -> mean held-out log-loss
    std::optional<Vector> scale_factors;
    std::vector<std::string> covariate_names;
    std::uint64_t seed = 0;
    bool cap_hit = false;
};

struct BehavioralCvConfig {
    std::vector<double> penalty_grid = default_behavioral_grid();
    std::size_t folds = 5;
    LogisticFitOptions solver;

    static std::vector<double> default_behavioral_grid();
};

/// L1-penalized logistic regression with the penalty picked by k-fold CV on
/// mean held-out negative log-likelihood, then refit on all of `train`.
BehavioralFit fit_behavioral(const Dataset& train, const std::vector<double>& penalty_grid,
                             std::size_t folds, std::uint64_t seed,
                             const LogisticFitOptions& opts = {});

inline BehavioralFit fit_behavioral(const Dataset& train, const BehavioralCvConfig& cfg,
                                    std::uint64_t seed) {
    return fit_behavioral(train, cfg.penalty_grid, cfg.folds, seed, cfg.solver);
}

/// Seeded fold labels in [0, folds); fold sizes differ by at most one.
std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed);

nlohmann::json to_json(const BehavioralFit& fit);
BehavioralFit behavioral_fit_from_json(const nlohmann::json& j);
void write_behavioral_fit(const std::filesystem::path& path, const BehavioralFit& fit);
BehavioralFit read_behavioral_fit(const std::filesystem::path& path);

struct CalibrationPoint {
    double mean_predicted = 0.0;
    double observed_rate = 0.0;
    std::size_t bin_count = 0;
};

struct CalibrationCurve {
    std::vector<CalibrationPoint> points;
    std::size_t n_bins = 0;
};

/// Bins held-out rows by quantiles of the predicted treatment probability
/// (nearest-rank edges, stable on ties) and compares mean prediction with
/// the observed treatment rate per bin.
CalibrationCurve calibration_curve(const Coefficients& b, const Dataset& heldout,
                                   std::size_t n_bins = 5);

inline CalibrationCurve calibration_curve(const BehavioralFit& fit, const Dataset& heldout,
                                          std::size_t n_bins = 5) {
    return calibration_curve(fit.b, heldout, n_bins);
}

/// Bin-wise average of curves with the same bin count; counts are summed.
CalibrationCurve average_curves(const std::vector<CalibrationCurve>& curves);

void write_calibration_csv(const std::filesystem::path& path, const CalibrationCurve& curve);

}  // namespace relsparse
