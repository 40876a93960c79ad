#include "relsparse/config.hpp"

#include <fstream>
#include <set>
#include <thread>

#include "relsparse/error.hpp"

namespace relsparse {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) {
        throw ConfigError("config section '" + where + "' must be an object");
    }
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) {
            throw ConfigError("unknown config key '" + where + (where.empty() ? "" : ".") + key + "'");
        }
    }
}

Vector vector_from(const json& j, std::size_t k, const std::string& what) {
    if (j.is_number()) {
        return Vector::Constant(static_cast<Eigen::Index>(k), j.get<double>());
    }
    const auto v = j.get<std::vector<double>>();
    if (v.size() != k) {
        throw ConfigError(what + " must have " + std::to_string(k) + " entries");
    }
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(k));
}

Eigen::MatrixXd matrix_from(const json& j, std::size_t k, const std::string& what) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.size() != k) {
        throw ConfigError(what + " must be " + std::to_string(k) + " x " + std::to_string(k));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < k; ++i) {
        if (rows[i].size() != k) {
            throw ConfigError(what + " must be " + std::to_string(k) + " x " + std::to_string(k));
        }
        for (std::size_t c = 0; c < k; ++c) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
        }
    }
    return m;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(m.cols());
        for (Eigen::Index c = 0; c < m.cols(); ++c) r[static_cast<std::size_t>(c)] = m(i, c);
        rows.push_back(r);
    }
    return rows;
}

}  // namespace

SimConfig sim_config_from_json(const json& j) {
    check_keys(j, {"k", "n", "mu0", "sigma0", "transition_sigma", "tau", "b0", "reward_index", "seed"},
               "sim");
    const auto k = j.value("k", std::size_t{9});
    if (k < 1) throw ConfigError("sim.k must be >= 1");
    SimConfig sim;
    if (k >= 2) {
        sim = SimConfig::study_defaults(k);
    } else {
        // One covariate: keep the scenario's marginal constants.
        sim.k = 1;
        sim.mu0 = Vector::Constant(1, 45.0);
        sim.sigma0 = Eigen::MatrixXd::Constant(1, 1, 300.0);
        sim.transition_sigma = Eigen::MatrixXd::Constant(1, 1, 300.0);
        sim.tau = Vector::Constant(1, 0.7);
        sim.b0 = Vector::Constant(1, 0.02);
        sim.reward_index = 1;
    }
    sim.n = j.value("n", sim.n);
    if (j.contains("mu0")) sim.mu0 = vector_from(j["mu0"], k, "sim.mu0");
    if (j.contains("tau")) sim.tau = vector_from(j["tau"], k, "sim.tau");
    if (j.contains("b0")) sim.b0 = vector_from(j["b0"], k, "sim.b0");
    if (j.contains("sigma0")) sim.sigma0 = matrix_from(j["sigma0"], k, "sim.sigma0");
    if (j.contains("transition_sigma")) {
        sim.transition_sigma = matrix_from(j["transition_sigma"], k, "sim.transition_sigma");
    }
    sim.reward_index = j.value("reward_index", sim.reward_index);
    sim.seed = j.value("seed", sim.seed);
    return sim;
}

json to_json(const SimConfig& sim) {
    return {{"k", sim.k},
            {"n", sim.n},
            {"mu0", std::vector<double>(sim.mu0.begin(), sim.mu0.end())},
            {"sigma0", matrix_to_json(sim.sigma0)},
            {"transition_sigma", matrix_to_json(sim.transition_sigma)},
            {"tau", std::vector<double>(sim.tau.begin(), sim.tau.end())},
            {"b0", std::vector<double>(sim.b0.begin(), sim.b0.end())},
            {"reward_index", sim.reward_index}};
}

void apply_config_json(RunConfig& cfg, const json& j) {
    try {
        check_keys(j,
                   {"mode", "seed", "threads", "input", "out", "reward", "split_fraction",
                    "add_intercept", "positivity_floor", "grid", "selection", "optimizer",
                    "behavioral", "sim", "mc", "resample", "calibrate"},
                   "");
        auto& p = cfg.pipeline;
        if (j.contains("mode")) cfg.mode = j["mode"].get<std::string>();
        if (j.contains("seed")) p.seed = j["seed"].get<std::uint64_t>();
        if (j.contains("threads")) p.threads = j["threads"].get<std::size_t>();
        if (j.contains("input")) cfg.input = j["input"].get<std::string>();
        if (j.contains("out")) cfg.out = j["out"].get<std::string>();
        if (j.contains("reward")) {
            if (j["reward"].is_string()) {
                cfg.reward = j["reward"].get<std::string>();
            } else {
                cfg.reward = j["reward"].get<int>();
            }
        }
        if (j.contains("split_fraction")) p.split_fraction = j["split_fraction"].get<double>();
        if (j.contains("add_intercept")) p.add_intercept = j["add_intercept"].get<bool>();
        if (j.contains("positivity_floor")) p.ipw.positivity_floor = j["positivity_floor"].get<double>();
        if (j.contains("grid")) {
            const auto& g = j["grid"];
            check_keys(g, {"min", "max", "count", "log_spaced"}, "grid");
            cfg.grid.min = g.value("min", cfg.grid.min);
            cfg.grid.max = g.value("max", cfg.grid.max);
            cfg.grid.count = g.value("count", cfg.grid.count);
            cfg.grid.log_spaced = g.value("log_spaced", cfg.grid.log_spaced);
        }
        if (j.contains("selection")) {
            const auto& s = j["selection"];
            check_keys(s, {"c_target", "delta", "vmin", "vmin_se_mult"}, "selection");
            if (s.contains("vmin") && s.contains("vmin_se_mult")) {
                throw ConfigError("selection.vmin and selection.vmin_se_mult are exclusive");
            }
            p.selection.c_target = s.value("c_target", p.selection.c_target);
            p.selection.delta = s.value("delta", p.selection.delta);
            if (s.contains("vmin")) p.selection.vmin_rule = AbsoluteVmin{s["vmin"].get<double>()};
            if (s.contains("vmin_se_mult")) {
                p.selection.vmin_rule = RelativeVmin{s["vmin_se_mult"].get<double>()};
            }
        }
        if (j.contains("optimizer")) {
            const auto& o = j["optimizer"];
            check_keys(o, {"max_iters", "grad_tol", "initial_step", "backtrack_factor", "armijo_c"},
                       "optimizer");
            auto& oc = p.optimizer;
            oc.max_iters = o.value("max_iters", oc.max_iters);
            oc.grad_tol = o.value("grad_tol", oc.grad_tol);
            oc.initial_step = o.value("initial_step", oc.initial_step);
            oc.backtrack_factor = o.value("backtrack_factor", oc.backtrack_factor);
            oc.armijo_c = o.value("armijo_c", oc.armijo_c);
        }
        if (j.contains("behavioral")) {
            const auto& b = j["behavioral"];
            check_keys(b, {"penalty_grid", "folds", "model", "max_iters", "tol", "coef_cap"},
                       "behavioral");
            if (b.contains("penalty_grid")) {
                const auto& pg = b["penalty_grid"];
                if (pg.is_array()) {
                    p.behavioral.penalty_grid = pg.get<std::vector<double>>();
                } else {
                    check_keys(pg, {"min", "max", "count"}, "behavioral.penalty_grid");
                    p.behavioral.penalty_grid = make_grid(pg.at("min").get<double>(),
                                                          pg.at("max").get<double>(),
                                                          pg.at("count").get<std::size_t>());
                }
            }
            p.behavioral.folds = b.value("folds", p.behavioral.folds);
            p.behavioral.solver.max_iters = b.value("max_iters", p.behavioral.solver.max_iters);
            p.behavioral.solver.tol = b.value("tol", p.behavioral.solver.tol);
            p.behavioral.solver.coef_cap = b.value("coef_cap", p.behavioral.solver.coef_cap);
            if (b.contains("model")) cfg.behavioral_model = b["model"].get<std::string>();
        }
        if (j.contains("sim")) cfg.sim = sim_config_from_json(j["sim"]);
        if (j.contains("mc")) {
            check_keys(j["mc"], {"m"}, "mc");
            cfg.mc_replicates = j["mc"].value("m", cfg.mc_replicates);
        }
        if (j.contains("resample")) {
            check_keys(j["resample"], {"r"}, "resample");
            cfg.resamples = j["resample"].value("r", cfg.resamples);
        }
        if (j.contains("calibrate")) {
            const auto& c = j["calibrate"];
            check_keys(c, {"bins", "resamples", "fraction"}, "calibrate");
            cfg.calibration_bins = c.value("bins", cfg.calibration_bins);
            cfg.calibration_resamples = c.value("resamples", cfg.calibration_resamples);
            cfg.calibration_fraction = c.value("fraction", cfg.calibration_fraction);
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
}

RunConfig load_run_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) {
        throw ConfigError("cannot open config '" + file.string() + "'");
    }
    RunConfig cfg;
    try {
        apply_config_json(cfg, json::parse(in));
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return cfg;
}

void RunConfig::finalize() {
    pipeline.grid = grid.values();
    pipeline.optimizer.validate();
    if (!(pipeline.split_fraction > 0.0 && pipeline.split_fraction < 1.0)) {
        throw ConfigError("split_fraction must lie in (0, 1)");
    }
    if (!(pipeline.selection.delta >= 0.0)) {
        throw ConfigError("selection.delta must be >= 0");
    }
    if (pipeline.threads == 0) {
        pipeline.threads = std::max(1u, std::thread::hardware_concurrency());
    }
    sim.seed = pipeline.seed;
}

json RunConfig::to_json() const {
    json j;
    j["mode"] = mode;
    j["seed"] = pipeline.seed;
    j["threads"] = pipeline.threads;
    j["input"] = input.string();
    j["out"] = out.string();
    if (const auto* col = std::get_if<std::string>(&reward)) {
        j["reward"] = *col;
    } else {
        j["reward"] = std::get<int>(reward);
    }
    j["split_fraction"] = pipeline.split_fraction;
    j["add_intercept"] = pipeline.add_intercept;
    j["positivity_floor"] = pipeline.ipw.positivity_floor;
    j["grid"] = {{"min", grid.min}, {"max", grid.max}, {"count", grid.count},
                 {"log_spaced", grid.log_spaced}};
    json sel = {{"c_target", pipeline.selection.c_target}, {"delta", pipeline.selection.delta}};
    if (const auto* a = std::get_if<AbsoluteVmin>(&pipeline.selection.vmin_rule)) {
        sel["vmin"] = a->value;
    } else {
        sel["vmin_se_mult"] = std::get<RelativeVmin>(pipeline.selection.vmin_rule).se_multiple;
    }
    j["selection"] = sel;
    const auto& o = pipeline.optimizer;
    j["optimizer"] = {{"max_iters", o.max_iters},
                      {"grad_tol", o.grad_tol},
                      {"initial_step", o.initial_step},
                      {"backtrack_factor", o.backtrack_factor},
                      {"armijo_c", o.armijo_c}};
    j["behavioral"] = {{"penalty_grid", pipeline.behavioral.penalty_grid},
                       {"folds", pipeline.behavioral.folds},
                       {"max_iters", pipeline.behavioral.solver.max_iters},
                       {"tol", pipeline.behavioral.solver.tol},
                       {"coef_cap", pipeline.behavioral.solver.coef_cap}};
    if (behavioral_model) j["behavioral"]["model"] = behavioral_model->string();
    j["sim"] = relsparse::to_json(sim);
    j["mc"] = {{"m", mc_replicates}};
    j["resample"] = {{"r", resamples}};
    j["calibrate"] = {{"bins", calibration_bins},
                      {"resamples", calibration_resamples},
                      {"fraction", calibration_fraction}};
    return j;
}

}  // namespace relsparse
