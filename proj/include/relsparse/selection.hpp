#pragma once

#include <filesystem>
#include <variant>

#include <nlohmann/json.hpp>

#include "relsparse/optimizer.hpp"

namespace relsparse {

/// V^min given directly, in reward units.
struct AbsoluteVmin {
    double value = 0.0;
};

/// V^min = behavioral train value + `se_multiple` standard errors.
struct RelativeVmin {
    double se_multiple = 2.0;
};

using VminRule = std::variant<AbsoluteVmin, RelativeVmin>;

struct SelectionConfig {
    std::size_t c_target = 1;
    double delta = 0.01;
    VminRule vmin_rule = RelativeVmin{2.0};
};

struct SelectionResult {
    double lambda_selected = 0.0;
    PathPoint point;
    double vmin_used = 0.0;
    std::size_t feasible_set_size = 0;
    std::size_t index = 0;  // position in path.points
};

double resolve_vmin(const LambdaPath& path, const SelectionConfig& cfg);

/// Among grid points whose train value clears V^min, minimizes |D - C| and
/// returns the largest lambda among the minimizers. Divergence counts are
/// recomputed with cfg.delta. Throws InfeasibleSelectionError when no point
/// clears V^min.
SelectionResult select_lambda(const LambdaPath& path, const SelectionConfig& cfg);

/// Indices of grid points whose train value is at least `vmin`.
std::vector<std::size_t> feasible_points(const LambdaPath& path, double vmin);

/// Names of covariates with |beta_k - b_k| > delta at the selected point.
std::vector<std::string> diverging_covariates(const SelectionResult& sel, const LambdaPath& path,
                                              double delta);

nlohmann::json to_json(const SelectionResult& sel, const LambdaPath& path,
                       const SelectionConfig& cfg);
void write_selection_json(const std::filesystem::path& file, const SelectionResult& sel,
                          const LambdaPath& path, const SelectionConfig& cfg);

}  // namespace relsparse
