#pragma once

#include <optional>

#include "relsparse/dataset.hpp"
#include "relsparse/policy.hpp"

namespace relsparse {

/// Importance-weighted value of a policy with its conservative standard error.
struct ValueEstimate {
    double v = 0.0;
    double se = 0.0;  // sqrt(sigma_n^2 / n), sigma_n^2 with divisor n
    std::size_t n = 0;
    double max_weight = 0.0;
};

struct IpwOptions {
    double positivity_floor = kPositivityFloor;
    /// Diagnostic-only truncation of importance weights; off by default.
    std::optional<double> weight_cap;
};

/// (1/n) sum_i pi_beta(a_i|s_i) / pi_b(a_i|s_i) * r_i.
///
/// Throws PositivityError when pi_b of an observed action falls below the
/// floor; rows are never silently truncated.
ValueEstimate ipw_value(const Coefficients& beta, const Coefficients& b, const Dataset& d,
                        const IpwOptions& opts = {});

/// Exact gradient of ipw_value(beta, b, d).v with respect to beta.
Vector value_gradient(const Coefficients& beta, const Coefficients& b, const Dataset& d,
                      const IpwOptions& opts = {});

/// Value and gradient from one pass over the data (no standard error).
struct ValueAndGradient {
    double value = 0.0;
    Vector gradient;
};
ValueAndGradient value_and_gradient(const Coefficients& beta, const Coefficients& b,
                                    const Dataset& d, const IpwOptions& opts = {});

/// Importance weights pi_beta / pi_b for every row.
Vector importance_weights(const Coefficients& beta, const Coefficients& b, const Dataset& d,
                          const IpwOptions& opts = {});

}  // namespace relsparse
