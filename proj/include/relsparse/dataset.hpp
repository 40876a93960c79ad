#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace relsparse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Logistic policy parameters (behavioral `b` or suggested `beta`).
using Coefficients = Eigen::VectorXd;

/// One single-stage record: initial state, binary action, final state, reward.
struct Trajectory {
    Vector s0;
    int a0 = 0;
    Vector s1;
    double reward = 0.0;
};

/// Column-major view of n trajectories sharing state dimension K.
///
/// Rows of `s0`/`s1` are trajectories. `scale_factors`, when set, are the
/// per-covariate divisors already applied to both state blocks.
class Dataset {
public:
    Dataset() = default;
    Dataset(Matrix s0, std::vector<std::uint8_t> a0, Matrix s1, Vector reward,
            std::vector<std::string> covariate_names,
            std::optional<Vector> scale_factors = std::nullopt);

    static Dataset from_trajectories(const std::vector<Trajectory>& rows,
                                     std::vector<std::string> covariate_names = {});

    std::size_t n() const noexcept { return static_cast<std::size_t>(s0_.rows()); }
    std::size_t k() const noexcept { return static_cast<std::size_t>(s0_.cols()); }

    const Matrix& s0() const noexcept { return s0_; }
    const Matrix& s1() const noexcept { return s1_; }
    const std::vector<std::uint8_t>& a0() const noexcept { return a0_; }
    const Vector& reward() const noexcept { return reward_; }
    const std::vector<std::string>& covariate_names() const noexcept { return names_; }
    const std::optional<Vector>& scale_factors() const noexcept { return scale_factors_; }

    Trajectory trajectory(std::size_t i) const;

    /// Rows in the given order (duplicates allowed).
    Dataset subset(const std::vector<std::size_t>& rows) const;

private:
    Matrix s0_;
    std::vector<std::uint8_t> a0_;
    Matrix s1_;
    Vector reward_;
    std::vector<std::string> names_;
    std::optional<Vector> scale_factors_;
};

struct SplitPair {
    Dataset train;
    Dataset test;
    std::uint64_t seed = 0;
    std::vector<std::size_t> train_rows;
    std::vector<std::size_t> test_rows;
};

/// Where the reward comes from when loading a trajectory CSV: the named
/// column, or a 1-based index into the final state.
using RewardSpec = std::variant<std::string, int>;

std::vector<std::string> default_covariate_names(std::size_t k);

Dataset load_dataset(const std::filesystem::path& path, const RewardSpec& reward_spec);
Dataset parse_dataset(std::istream& in, const RewardSpec& reward_spec);

/// Writes the trajectory CSV with an explicit `reward` column at 17
/// significant digits. Atomic (temp file + rename).
void write_dataset(const std::filesystem::path& path, const Dataset& d);
void write_dataset(std::ostream& out, const Dataset& d);

/// Sample standard deviation (divisor n-1) of every s0 covariate.
Vector covariate_sd(const Dataset& d);

/// Divides s0 and s1 by the s0 sample standard deviations of `d`.
Dataset scale_dataset(const Dataset& d);

/// Divides s0 and s1 by `factors`; rewards untouched.
Dataset apply_scaling(const Dataset& d, const Vector& factors);

/// Inverse of apply_scaling using the recorded factors.
Dataset unscale_dataset(const Dataset& d);

/// Appends a constant-1 covariate named `intercept` (factor 1 if scaled).
Dataset append_intercept(const Dataset& d);

/// Seeded shuffle split; |train| = round(fraction * n).
SplitPair split(const Dataset& d, double fraction, std::uint64_t seed);

}  // namespace relsparse
