#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "relsparse/dataset.hpp"
#include "relsparse/evaluation.hpp"

namespace relsparse {

struct OptimizerConfig {
    std::size_t max_iters = 5000;
    /// Stationarity tolerance on the KKT residual.
    double grad_tol = 1e-7;
    double initial_step = 1.0;
    double backtrack_factor = 0.5;
    double armijo_c = 1e-4;

    void validate() const;
};

/// One solve of the relative-sparsity objective at a fixed lambda.
struct PathPoint {
    double lambda = 0.0;
    Coefficients beta;
    ValueEstimate train_value;
    std::optional<ValueEstimate> test_value;
    double objective = 0.0;  // train_value.v - lambda * ||beta - b||_1
    std::size_t divergence_count = 0;
    std::size_t iterations = 0;
    bool converged = false;
    double residual = 0.0;  // final KKT residual
};

struct LambdaPath {
    std::vector<PathPoint> points;  // decreasing lambda
    Coefficients b;
    std::vector<double> grid;
    double delta = 0.01;
    ValueEstimate behavioral_train;
    std::optional<ValueEstimate> behavioral_test;
    std::vector<std::string> covariate_names;
};

/// lambda * sum_k |beta_k - b_k|.
double penalty(const Coefficients& beta, const Coefficients& b, double lambda);

/// argmin_z 0.5 ||z - x||^2 + threshold * ||z - b||_1, coordinate-wise.
Vector prox_recentered_l1(const Vector& x, const Vector& b, double threshold);

/// Sup-norm distance of the V_n gradient from the subdifferential of
/// lambda * ||. - b||_1 at beta; zero exactly at stationary points.
double kkt_residual(const Coefficients& beta, const Coefficients& b, const Vector& grad,
                    double lambda);

/// Number of coordinates with |beta_k - b_k| > delta (strict).
std::size_t divergence_count(const Coefficients& beta, const Coefficients& b, double delta);

/// Maximizes V_n(beta, b) - lambda * ||beta - b||_1 on `train` by proximal
/// gradient ascent with backtracking from `init`. Returns a point without
/// test value. Non-convergence is reported through `converged`, not thrown.
PathPoint optimize(const Dataset& train, const Coefficients& b, double lambda,
                   const Coefficients& init, const OptimizerConfig& cfg = {},
                   const IpwOptions& ipw = {});

/// Solves every grid value from largest to smallest lambda with warm starts
/// (first solve starts at b) and evaluates train and test value.
LambdaPath fit_path(const SplitPair& split, const Coefficients& b, std::vector<double> grid,
                    double delta, const OptimizerConfig& cfg = {}, const IpwOptions& ipw = {});

/// Sorts the grid in decreasing order; rejects empty, non-positive and duplicate values.
std::vector<double> normalize_grid(std::vector<double> grid);

/// `lambda,iter,converged,train_value,train_se,test_value,test_se,divergence_count,beta_1..beta_K`
/// with a `behavioral` row carrying b directly under the header.
void write_path_csv(const std::filesystem::path& path, const LambdaPath& lp);
void write_path_csv(std::ostream& out, const LambdaPath& lp);
LambdaPath read_path_csv(const std::filesystem::path& path, double delta = 0.01);
LambdaPath parse_path_csv(std::istream& in, double delta = 0.01);

}  // namespace relsparse
