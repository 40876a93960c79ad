#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace relsparse {

/// Overflow-safe logistic function.
inline double expit(double x) noexcept {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// log(1 + exp(x)) without overflow.
inline double log1pexp(double x) noexcept {
    if (x > 0.0) {
        return x + std::log1p(std::exp(-x));
    }
    return std::log1p(std::exp(x));
}

/// Pairwise (cascade) summation; the reduction tree depends only on the length.
double pairwise_sum(std::span<const double> values) noexcept;

inline double pairwise_sum(const Eigen::VectorXd& v) noexcept {
    return pairwise_sum(std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

/// SplitMix64 finalizer; derives independent stream seeds from (master, counter).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept;

/// 97.5% quantile of the standard normal.
inline constexpr double z975 = 1.959963984540054;

/// `count` points from `hi` down to `lo`, log-spaced when `log_spaced`.
std::vector<double> make_grid(double lo, double hi, std::size_t count, bool log_spaced = true);

}  // namespace relsparse
