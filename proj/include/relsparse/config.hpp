#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "relsparse/simulation.hpp"

namespace relsparse {

struct GridSpec {
    double min = 1e-3;
    double max = 1e2;
    std::size_t count = 40;
    bool log_spaced = true;

    std::vector<double> values() const { return make_grid(min, max, count, log_spaced); }
};

/// Everything one CLI invocation needs. Built from a JSON config file, then
/// patched by command-line flags.
///
/// Key schema (all optional):
///   seed, threads, input, out, reward ("reward" or 1-based s1 index),
///   split_fraction, add_intercept, positivity_floor,
///   grid {min, max, count, log_spaced},
///   selection {c_target, delta, vmin | vmin_se_mult},
///   optimizer {max_iters, grad_tol, initial_step, backtrack_factor, armijo_c},
///   behavioral {penalty_grid [..] | {min, max, count}, folds, model},
///   sim {k, n, mu0, sigma0, transition_sigma, tau, b0, reward_index},
///   mc {m}, resample {r}, calibrate {bins, resamples, fraction}
struct RunConfig {
    std::string mode;
    std::filesystem::path input;
    std::filesystem::path out = "out";
    std::optional<std::filesystem::path> behavioral_model;
    RewardSpec reward = std::string("reward");
    SimConfig sim = SimConfig::study_defaults();
    GridSpec grid;
    PipelineConfig pipeline;
    std::size_t mc_replicates = 100;
    std::size_t resamples = 100;
    std::size_t calibration_bins = 5;
    std::size_t calibration_resamples = 100;
    double calibration_fraction = 0.5;

    /// Pushes grid/seed into the pipeline; validates invariants.
    void finalize();

    nlohmann::json to_json() const;
};

/// Overlays `j` onto `cfg`. Throws ConfigError on wrong types or unknown keys.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);

RunConfig load_run_config(const std::filesystem::path& file);

SimConfig sim_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SimConfig& sim);

}  // namespace relsparse
