#include "relsparse/policy.hpp"

#include "relsparse/error.hpp"
#include "relsparse/numeric.hpp"

namespace relsparse {

namespace {

void check_dims(const Coefficients& c, std::size_t k) {
    if (static_cast<std::size_t>(c.size()) != k) {
        throw DimensionError("coefficient length " + std::to_string(c.size()) +
                             " does not match state dimension " + std::to_string(k));
    }
}

}  // namespace

double policy_prob(const Coefficients& c, const Eigen::Ref<const Vector>& s0, int a0) {
    check_dims(c, static_cast<std::size_t>(s0.size()));
    const double eta = c.dot(s0);
    // expit(-x) = 1 - expit(x), computed without cancellation.
    return a0 == 1 ? expit(eta) : expit(-eta);
}

Vector treat_probabilities(const Coefficients& c, const Dataset& d) {
    check_dims(c, d.k());
    const Vector eta = d.s0() * c;
    return eta.unaryExpr([](double x) { return expit(x); });
}

Vector observed_action_probabilities(const Coefficients& c, const Dataset& d) {
    check_dims(c, d.k());
    const Vector eta = d.s0() * c;
    Vector p(eta.size());
    const auto& a = d.a0();
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        p(i) = a[static_cast<std::size_t>(i)] ? expit(eta(i)) : expit(-eta(i));
    }
    return p;
}

std::vector<std::size_t> positivity_violations(const Coefficients& b, const Dataset& d,
                                               double eps) {
    const Vector p = treat_probabilities(b, d);
    std::vector<std::size_t> rows;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        if (p(i) < eps || p(i) > 1.0 - eps) {
            rows.push_back(static_cast<std::size_t>(i));
        }
    }
    return rows;
}

}  // namespace relsparse
