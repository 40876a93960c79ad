#pragma once

#include <vector>

#include "relsparse/dataset.hpp"

namespace relsparse {

/// Default floor for behavioral action probabilities.
inline constexpr double kPositivityFloor = 1e-6;

/// pi_c(a0 | s0) for the logistic policy expit(c^T s0).
double policy_prob(const Coefficients& c, const Eigen::Ref<const Vector>& s0, int a0);

/// expit(c^T s0_i) for every row.
Vector treat_probabilities(const Coefficients& c, const Dataset& d);

/// pi_c(a0_i | s0_i) for the observed action of every row.
Vector observed_action_probabilities(const Coefficients& c, const Dataset& d);

/// 0-based rows whose treatment probability lies outside [eps, 1 - eps].
std::vector<std::size_t> positivity_violations(const Coefficients& b, const Dataset& d,
                                               double eps = kPositivityFloor);

}  // namespace relsparse
