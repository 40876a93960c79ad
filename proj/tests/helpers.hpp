#pragma once

#include <random>

#include "relsparse/dataset.hpp"

namespace testutil {

/// Small random dataset with standard-normal-ish covariates, logistic actions
/// under `b` and rewards drawn independently.
inline relsparse::Dataset random_dataset(std::size_t n, std::size_t k, std::uint64_t seed,
                                         const relsparse::Vector* b = nullptr,
                                         double reward_scale = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    relsparse::Matrix s0(n, k), s1(n, k);
    std::vector<std::uint8_t> a(n);
    relsparse::Vector r(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            s0(i, j) = z(rng);
            s1(i, j) = z(rng);
        }
        double eta = 0.0;
        if (b) eta = s0.row(i).dot(*b);
        a[i] = u(rng) < 1.0 / (1.0 + std::exp(-eta)) ? 1 : 0;
        r(i) = reward_scale * (1.0 + z(rng));
    }
    return relsparse::Dataset(std::move(s0), std::move(a), std::move(s1), std::move(r),
                              relsparse::default_covariate_names(k));
}

}  // namespace testutil
