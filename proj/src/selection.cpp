#include "relsparse/selection.hpp"

#include <cmath>
#include <cstdlib>
#include <limits>

#include "relsparse/error.hpp"
#include "relsparse/io.hpp"

namespace relsparse {

double resolve_vmin(const LambdaPath& path, const SelectionConfig& cfg) {
    if (path.points.empty()) {
        throw ConfigError("cannot resolve V^min on an empty path");
    }
    if (const auto* abs = std::get_if<AbsoluteVmin>(&cfg.vmin_rule)) {
        return abs->value;
    }
    const auto& rel = std::get<RelativeVmin>(cfg.vmin_rule);
    return path.behavioral_train.v + rel.se_multiple * path.behavioral_train.se;
}

std::vector<std::size_t> feasible_points(const LambdaPath& path, double vmin) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < path.points.size(); ++i) {
        if (path.points[i].train_value.v >= vmin) {
            idx.push_back(i);
        }
    }
    return idx;
}

SelectionResult select_lambda(const LambdaPath& path, const SelectionConfig& cfg) {
    if (!(cfg.delta >= 0.0)) {
        throw ConfigError("delta must be >= 0");
    }
    if (static_cast<Eigen::Index>(cfg.c_target) > path.b.size()) {
        throw ConfigError("target divergence count C exceeds K");
    }
    const double vmin = resolve_vmin(path, cfg);
    const auto feasible = feasible_points(path, vmin);
    if (feasible.empty()) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& p : path.points) best = std::max(best, p.train_value.v);
        throw InfeasibleSelectionError(
            "no lambda reaches V^min = " + io::format_double(vmin) +
                " (best train value " + io::format_double(best) +
                "). Increase or decrease C, X, gather more data, or reassess reward.",
            best, vmin);
    }
    std::size_t chosen = feasible.front();
    long best_gap = std::numeric_limits<long>::max();
    for (std::size_t i : feasible) {
        const auto& p = path.points[i];
        const auto d = divergence_count(p.beta, path.b, cfg.delta);
        const long gap = std::labs(static_cast<long>(d) - static_cast<long>(cfg.c_target));
        if (gap < best_gap || (gap == best_gap && p.lambda > path.points[chosen].lambda)) {
            best_gap = gap;
            chosen = i;
        }
    }
    SelectionResult out;
    out.index = chosen;
    out.point = path.points[chosen];
    out.point.divergence_count = divergence_count(out.point.beta, path.b, cfg.delta);
    out.lambda_selected = out.point.lambda;
    out.vmin_used = vmin;
    out.feasible_set_size = feasible.size();
    return out;
}

std::vector<std::string> diverging_covariates(const SelectionResult& sel, const LambdaPath& path,
                                              double delta) {
    std::vector<std::string> names;
    const auto& beta = sel.point.beta;
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
        if (std::abs(beta(k) - path.b(k)) > delta) {
            names.push_back(static_cast<std::size_t>(k) < path.covariate_names.size()
                                ? path.covariate_names[static_cast<std::size_t>(k)]
                                : "s0_" + std::to_string(k + 1));
        }
    }
    return names;
}

nlohmann::json to_json(const SelectionResult& sel, const LambdaPath& path,
                       const SelectionConfig& cfg) {
    nlohmann::json j;
    j["lambda"] = sel.lambda_selected;
    j["vmin"] = sel.vmin_used;
    j["C"] = cfg.c_target;
    j["delta"] = cfg.delta;
    j["divergence_count"] = sel.point.divergence_count;
    j["train_value"] = sel.point.train_value.v;
    j["train_se"] = sel.point.train_value.se;
    if (sel.point.test_value) {
        j["test_value"] = sel.point.test_value->v;
        j["test_se"] = sel.point.test_value->se;
    } else {
        j["test_value"] = nullptr;
        j["test_se"] = nullptr;
    }
    j["beta"] = std::vector<double>(sel.point.beta.begin(), sel.point.beta.end());
    j["behavioral_beta"] = std::vector<double>(path.b.begin(), path.b.end());
    j["diverging_covariates"] = diverging_covariates(sel, path, cfg.delta);
    j["feasible_set_size"] = sel.feasible_set_size;
    j["behavioral_train_value"] = path.behavioral_train.v;
    j["behavioral_train_se"] = path.behavioral_train.se;
    return j;
}

void write_selection_json(const std::filesystem::path& file, const SelectionResult& sel,
                          const LambdaPath& path, const SelectionConfig& cfg) {
    io::atomic_write(file, [&](std::ostream& out) { out << to_json(sel, path, cfg).dump(2) << '\n'; });
}

}  // namespace relsparse
