#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "relsparse/behavioral.hpp"
#include "relsparse/error.hpp"
#include "relsparse/evaluation.hpp"
#include "relsparse/numeric.hpp"
#include "relsparse/optimizer.hpp"
#include "relsparse/selection.hpp"
#include "relsparse/simulation.hpp"

namespace py = pybind11;
using namespace relsparse;

namespace {

py::object to_python(const nlohmann::json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<std::uint8_t> to_actions(const std::vector<int>& a) {
    std::vector<std::uint8_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != 0 && a[i] != 1) throw DataError("actions must be 0 or 1");
        out[i] = static_cast<std::uint8_t>(a[i]);
    }
    return out;
}

SelectionConfig selection_config(std::size_t c_target, double delta, std::optional<double> vmin,
                                 double se_multiple) {
    SelectionConfig cfg;
    cfg.c_target = c_target;
    cfg.delta = delta;
    if (vmin) {
        cfg.vmin_rule = AbsoluteVmin{*vmin};
    } else {
        cfg.vmin_rule = RelativeVmin{se_multiple};
    }
    return cfg;
}

PipelineConfig pipeline_config(std::optional<std::vector<double>> grid, std::size_t c_target, double delta,
                               std::optional<double> vmin, double se_multiple, std::uint64_t seed,
                               std::size_t threads) {
    PipelineConfig cfg;
    if (grid) cfg.grid = *grid;
    cfg.selection = selection_config(c_target, delta, vmin, se_multiple);
    cfg.seed = seed;
    cfg.threads = threads;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Relative-sparsity offline policy optimization";

    static py::exception<Error> base(m, "RelsparseError");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<PositivityError>(m, "PositivityError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
    py::register_exception<ConvergenceError>(m, "ConvergenceError", base.ptr());
    py::register_exception<InfeasibleSelectionError>(m, "InfeasibleSelectionError", base.ptr());

    py::class_<Dataset>(m, "Dataset")
        .def(py::init([](Matrix s0, const std::vector<int>& a0, Matrix s1, Vector reward,
                         std::optional<std::vector<std::string>> names) {
                 const auto k = static_cast<std::size_t>(s0.cols());
                 return Dataset(std::move(s0), to_actions(a0), std::move(s1), std::move(reward),
                                names ? *names : default_covariate_names(k));
             }),
             py::arg("s0"), py::arg("a0"), py::arg("s1"), py::arg("reward"), py::arg("covariate_names") = py::none())
        .def_property_readonly("n", &Dataset::n)
        .def_property_readonly("k", &Dataset::k)
        .def_property_readonly("s0", &Dataset::s0)
        .def_property_readonly("s1", &Dataset::s1)
        .def_property_readonly("a0", [](const Dataset& d) {
            return std::vector<int>(d.a0().begin(), d.a0().end());
        })
        .def_property_readonly("reward", &Dataset::reward)
        .def_property_readonly("covariate_names", &Dataset::covariate_names)
        .def_property_readonly("scale_factors", &Dataset::scale_factors)
        .def("__len__", &Dataset::n);

    m.def("load_dataset", [](const std::filesystem::path& p, std::variant<int, std::string> reward) {
        return std::holds_alternative<int>(reward) ? load_dataset(p, RewardSpec(std::get<int>(reward)))
                                                   : load_dataset(p, RewardSpec(std::get<std::string>(reward)));
    }, py::arg("path"), py::arg("reward") = "reward");
    m.def("write_dataset", py::overload_cast<const std::filesystem::path&, const Dataset&>(&write_dataset),
          py::arg("path"), py::arg("dataset"));
    m.def("scale_dataset", &scale_dataset, py::arg("dataset"));
    m.def("apply_scaling", &apply_scaling, py::arg("dataset"), py::arg("factors"));
    m.def("unscale_dataset", &unscale_dataset, py::arg("dataset"));
    m.def("split", [](const Dataset& d, double fraction, std::uint64_t seed) {
        auto sp = split(d, fraction, seed);
        return py::make_tuple(sp.train, sp.test);
    }, py::arg("dataset"), py::arg("fraction") = 0.5, py::arg("seed"));
    m.def("make_grid", &make_grid, py::arg("lo"), py::arg("hi"), py::arg("count"), py::arg("log_spaced") = true);
    m.def("derive_seed", &derive_seed, py::arg("master"), py::arg("index"));

    py::class_<SimConfig>(m, "SimConfig")
        .def_static("study_defaults", &SimConfig::study_defaults, py::arg("k") = 9)
        .def_readwrite("k", &SimConfig::k)
        .def_readwrite("n", &SimConfig::n)
        .def_readwrite("mu0", &SimConfig::mu0)
        .def_readwrite("sigma0", &SimConfig::sigma0)
        .def_readwrite("transition_sigma", &SimConfig::transition_sigma)
        .def_readwrite("tau", &SimConfig::tau)
        .def_readwrite("b0", &SimConfig::b0)
        .def_readwrite("reward_index", &SimConfig::reward_index)
        .def_readwrite("seed", &SimConfig::seed)
        .def("validate", &SimConfig::validate);
    m.def("simulate_dataset", &simulate_dataset, py::arg("sim"), py::arg("seed"));
    m.def("onpolicy_value", [](const Coefficients& beta, const SimConfig& sim, std::size_t n_mc, std::uint64_t seed) {
        const auto o = onpolicy_value(beta, sim, n_mc, seed);
        return py::make_tuple(o.value, o.se);
    }, py::arg("beta"), py::arg("sim"), py::arg("n_mc"), py::arg("seed"));

    py::class_<BehavioralFit>(m, "BehavioralFit")
        .def_readonly("b", &BehavioralFit::b)
        .def_readonly("cv_lambda", &BehavioralFit::cv_lambda)
        .def_readonly("fold_losses", &BehavioralFit::fold_losses)
        .def_readonly("cap_hit", &BehavioralFit::cap_hit)
        .def_readonly("covariate_names", &BehavioralFit::covariate_names);
    m.def("fit_behavioral", [](const Dataset& train, std::uint64_t seed,
                               std::optional<std::vector<double>> penalty_grid, std::size_t folds) {
        BehavioralCvConfig cfg;
        if (penalty_grid) cfg.penalty_grid = *penalty_grid;
        cfg.folds = folds;
        return fit_behavioral(train, cfg, seed);
    }, py::arg("train"), py::arg("seed"), py::arg("penalty_grid") = py::none(), py::arg("folds") = 5);
    m.def("calibration_curve", [](const Coefficients& b, const Dataset& heldout, std::size_t n_bins) {
        py::list out;
        for (const auto& p : calibration_curve(b, heldout, n_bins).points) {
            out.append(py::make_tuple(p.mean_predicted, p.observed_rate, p.bin_count));
        }
        return out;
    }, py::arg("b"), py::arg("heldout"), py::arg("n_bins") = 5);
    m.def("policy_prob", [](const Coefficients& c, const Vector& s0, int a0) { return policy_prob(c, s0, a0); },
          py::arg("c"), py::arg("s0"), py::arg("a0"));

    py::class_<ValueEstimate>(m, "ValueEstimate")
        .def_readonly("v", &ValueEstimate::v)
        .def_readonly("se", &ValueEstimate::se)
        .def_readonly("n", &ValueEstimate::n)
        .def_readonly("max_weight", &ValueEstimate::max_weight)
        .def("__repr__", [](const ValueEstimate& v) {
            return "ValueEstimate(v=" + std::to_string(v.v) + ", se=" + std::to_string(v.se) + ")";
        });
    m.def("ipw_value", [](const Coefficients& beta, const Coefficients& b, const Dataset& d) {
        return ipw_value(beta, b, d);
    }, py::arg("beta"), py::arg("b"), py::arg("dataset"));
    m.def("value_gradient", [](const Coefficients& beta, const Coefficients& b, const Dataset& d) {
        return value_gradient(beta, b, d);
    }, py::arg("beta"), py::arg("b"), py::arg("dataset"));
    m.def("importance_weights", [](const Coefficients& beta, const Coefficients& b, const Dataset& d) {
        return importance_weights(beta, b, d);
    }, py::arg("beta"), py::arg("b"), py::arg("dataset"));

    m.def("penalty", &penalty, py::arg("beta"), py::arg("b"), py::arg("lam"));
    m.def("prox_recentered_l1", &prox_recentered_l1, py::arg("x"), py::arg("b"), py::arg("threshold"));
    m.def("kkt_residual", &kkt_residual, py::arg("beta"), py::arg("b"), py::arg("grad"), py::arg("lam"));
    m.def("divergence_count", &divergence_count, py::arg("beta"), py::arg("b"), py::arg("delta") = 0.01);

    py::class_<PathPoint>(m, "PathPoint")
        .def_readonly("lam", &PathPoint::lambda)
        .def_readonly("beta", &PathPoint::beta)
        .def_readonly("objective", &PathPoint::objective)
        .def_readonly("train_value", &PathPoint::train_value)
        .def_readonly("test_value", &PathPoint::test_value)
        .def_readonly("divergence_count", &PathPoint::divergence_count)
        .def_readonly("iterations", &PathPoint::iterations)
        .def_readonly("converged", &PathPoint::converged)
        .def_readonly("residual", &PathPoint::residual);
    py::class_<LambdaPath>(m, "LambdaPath")
        .def_readonly("b", &LambdaPath::b)
        .def_readonly("grid", &LambdaPath::grid)
        .def_readonly("delta", &LambdaPath::delta)
        .def_readonly("points", &LambdaPath::points)
        .def_readonly("behavioral_train", &LambdaPath::behavioral_train)
        .def_readonly("behavioral_test", &LambdaPath::behavioral_test)
        .def_readonly("covariate_names", &LambdaPath::covariate_names);

    m.def("optimize", [](const Dataset& train, const Coefficients& b, double lam,
                         std::optional<Coefficients> init, std::size_t max_iters, double grad_tol) {
        OptimizerConfig cfg;
        cfg.max_iters = max_iters;
        cfg.grad_tol = grad_tol;
        return optimize(train, b, lam, init ? *init : b, cfg);
    }, py::arg("train"), py::arg("b"), py::arg("lam"), py::arg("init") = py::none(),
          py::arg("max_iters") = 5000, py::arg("grad_tol") = 1e-7);
    m.def("fit_path", [](const Dataset& train, std::optional<Dataset> test, const Coefficients& b,
                         std::vector<double> grid, double delta) {
        SplitPair sp;
        sp.train = train;
        if (test) sp.test = *test;
        return fit_path(sp, b, std::move(grid), delta);
    }, py::arg("train"), py::arg("test"), py::arg("b"), py::arg("grid"), py::arg("delta") = 0.01);

    py::class_<SelectionResult>(m, "SelectionResult")
        .def_readonly("lam", &SelectionResult::lambda_selected)
        .def_readonly("index", &SelectionResult::index)
        .def_readonly("point", &SelectionResult::point)
        .def_readonly("vmin", &SelectionResult::vmin_used)
        .def_readonly("feasible_set_size", &SelectionResult::feasible_set_size);
    m.def("select_lambda", [](const LambdaPath& path, std::size_t c_target, double delta,
                              std::optional<double> vmin, double se_multiple) {
        return select_lambda(path, selection_config(c_target, delta, vmin, se_multiple));
    }, py::arg("path"), py::arg("c_target") = 1, py::arg("delta") = 0.01, py::arg("vmin") = py::none(),
          py::arg("se_multiple") = 2.0);
    m.def("diverging_covariates", &diverging_covariates, py::arg("selection"), py::arg("path"),
          py::arg("delta") = 0.01);

    m.def("run_analysis", [](const Dataset& raw, std::uint64_t seed, std::optional<std::vector<double>> grid,
                             std::size_t c_target, double delta, std::optional<double> vmin, double se_multiple) {
        const auto cfg = pipeline_config(grid, c_target, delta, vmin, se_multiple, seed, 1);
        auto res = run_analysis(raw, cfg, seed);
        py::dict out;
        out["behavioral"] = res.behavioral;
        out["path"] = res.path;
        out["selection"] = res.selection ? py::cast(*res.selection) : py::none();
        return out;
    }, py::arg("raw"), py::arg("seed") = 20240101, py::arg("grid") = py::none(), py::arg("c_target") = 1,
          py::arg("delta") = 0.01, py::arg("vmin") = py::none(), py::arg("se_multiple") = 2.0);
    m.def("run_monte_carlo", [](const SimConfig& sim, std::size_t replicates, std::uint64_t seed,
                                std::optional<std::vector<double>> grid, std::size_t threads) {
        const auto cfg = pipeline_config(grid, 1, 0.01, std::nullopt, 2.0, seed, threads);
        py::gil_scoped_release release;
        const auto s = run_monte_carlo(sim, replicates, cfg);
        py::gil_scoped_acquire acquire;
        return to_python(summary_json(s));
    }, py::arg("sim"), py::arg("m"), py::arg("seed") = 20240101, py::arg("grid") = py::none(),
          py::arg("threads") = 1);
}
