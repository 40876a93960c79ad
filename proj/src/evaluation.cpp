#include "relsparse/evaluation.hpp"

#include <cmath>

#include "relsparse/error.hpp"
#include "relsparse/numeric.hpp"

namespace relsparse {

Vector importance_weights(const Coefficients& beta, const Coefficients& b, const Dataset& d,
                          const IpwOptions& opts) {
    const Vector pb = observed_action_probabilities(b, d);
    for (Eigen::Index i = 0; i < pb.size(); ++i) {
        if (!(pb(i) >= opts.positivity_floor)) {
            throw PositivityError(static_cast<std::size_t>(i) + 1, pb(i));
        }
    }
    Vector w = observed_action_probabilities(beta, d).cwiseQuotient(pb);
    if (opts.weight_cap) {
        w = w.cwiseMin(*opts.weight_cap);
    }
    return w;
}

ValueEstimate ipw_value(const Coefficients& beta, const Coefficients& b, const Dataset& d,
                        const IpwOptions& opts) {
    const Vector w = importance_weights(beta, b, d, opts);
    const Vector terms = w.cwiseProduct(d.reward());
    const auto n = static_cast<double>(d.n());
    ValueEstimate out;
    out.n = d.n();
    out.v = pairwise_sum(terms) / n;
    const Vector dev2 = (terms.array() - out.v).square().matrix();
    const double sigma2 = pairwise_sum(dev2) / n;
    out.se = std::sqrt(sigma2 / n);
    out.max_weight = w.maxCoeff();
    return out;
}

ValueAndGradient value_and_gradient(const Coefficients& beta, const Coefficients& b,
                                    const Dataset& d, const IpwOptions& opts) {
    const Vector w = importance_weights(beta, b, d, opts);
    const Vector terms = w.cwiseProduct(d.reward());
    const Vector p1 = treat_probabilities(beta, d);
    Vector coef(terms.size());
    const auto& a = d.a0();
    for (Eigen::Index i = 0; i < coef.size(); ++i) {
        // d/dbeta pi_beta(a|s) = pi_beta(a|s) (a - expit(beta^T s)) s
        coef(i) = terms(i) * (static_cast<double>(a[static_cast<std::size_t>(i)]) - p1(i));
    }
    if (opts.weight_cap) {
        // Capped weights are constant in beta.
        const Vector raw = importance_weights(beta, b, d, IpwOptions{opts.positivity_floor, {}});
        for (Eigen::Index i = 0; i < coef.size(); ++i) {
            if (raw(i) > *opts.weight_cap) coef(i) = 0.0;
        }
    }
    const auto n = static_cast<double>(d.n());
    ValueAndGradient out;
    out.value = pairwise_sum(terms) / n;
    out.gradient = d.s0().transpose() * coef / n;
    return out;
}

Vector value_gradient(const Coefficients& beta, const Coefficients& b, const Dataset& d,
                      const IpwOptions& opts) {
    return value_and_gradient(beta, b, d, opts).gradient;
}

}  // namespace relsparse
