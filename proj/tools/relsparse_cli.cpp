// relsparse: offline single-stage policy optimization with relative sparsity.
//
//   relsparse simulate  --config cfg.json --out data.csv
//   relsparse analyze   --input data.csv --out results/
//   relsparse mc        --config cfg.json --out mc/
//   relsparse resample  --input data.csv --out resample/
//   relsparse calibrate --input data.csv --out calib/
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 infeasible
// selection, 5 numerical failure.

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "relsparse/behavioral.hpp"
#include "relsparse/config.hpp"
#include "relsparse/error.hpp"
#include "relsparse/io.hpp"
#include "relsparse/numeric.hpp"
#include "relsparse/simulation.hpp"

namespace fs = std::filesystem;
using namespace relsparse;

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> input;
    std::optional<std::string> reward;
    std::optional<std::string> behavioral_model;
    std::optional<double> lambda_min, lambda_max;
    std::optional<std::size_t> lambda_count;
    std::optional<std::size_t> c_target;
    std::optional<double> delta;
    std::optional<double> vmin, vmin_se_mult;
    std::optional<double> split_fraction;
    std::optional<std::size_t> threads;
    std::optional<std::size_t> m, r, bins;
};

void add_common(CLI::App& sub, Overrides& o) {
    sub.add_option("--config", o.config, "JSON config file");
    sub.add_option("--seed", o.seed, "master seed");
    sub.add_option("--out", o.out, "output directory (or CSV file for simulate)");
    sub.add_option("--threads", o.threads, "worker threads (0 = hardware)");
}

void add_analysis(CLI::App& sub, Overrides& o) {
    sub.add_option("--input", o.input, "trajectory CSV");
    sub.add_option("--reward", o.reward, "'reward' column or 1-based s1 index");
    sub.add_option("--lambda-min", o.lambda_min, "smallest lambda in the log grid");
    sub.add_option("--lambda-max", o.lambda_max, "largest lambda in the log grid");
    sub.add_option("--lambda-count", o.lambda_count, "number of grid points");
    sub.add_option("--c-target", o.c_target, "target number of diverging coefficients");
    sub.add_option("--delta", o.delta, "divergence tolerance");
    auto* vmin = sub.add_option("--vmin", o.vmin, "absolute value floor");
    auto* mult = sub.add_option("--vmin-se-mult", o.vmin_se_mult,
                                "value floor as behavioral value + X standard errors");
    vmin->excludes(mult);
    sub.add_option("--split-fraction", o.split_fraction, "training fraction");
    sub.add_option("--behavioral-model", o.behavioral_model, "reuse a fitted behavioral model JSON");
}

RunConfig build_config(const std::string& mode, const Overrides& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    cfg.mode = mode;
    auto& p = cfg.pipeline;
    if (o.seed) p.seed = *o.seed;
    if (o.out) cfg.out = *o.out;
    if (o.input) cfg.input = *o.input;
    if (o.reward) {
        if (o.reward->find_first_not_of("0123456789") == std::string::npos) {
            cfg.reward = std::stoi(*o.reward);
        } else {
            cfg.reward = *o.reward;
        }
    }
    if (o.behavioral_model) cfg.behavioral_model = *o.behavioral_model;
    if (o.lambda_min) cfg.grid.min = *o.lambda_min;
    if (o.lambda_max) cfg.grid.max = *o.lambda_max;
    if (o.lambda_count) cfg.grid.count = *o.lambda_count;
    if (o.c_target) p.selection.c_target = *o.c_target;
    if (o.delta) p.selection.delta = *o.delta;
    if (o.vmin) p.selection.vmin_rule = AbsoluteVmin{*o.vmin};
    if (o.vmin_se_mult) p.selection.vmin_rule = RelativeVmin{*o.vmin_se_mult};
    if (o.split_fraction) p.split_fraction = *o.split_fraction;
    if (o.threads) p.threads = *o.threads;
    if (o.m) cfg.mc_replicates = *o.m;
    if (o.r) cfg.resamples = *o.r;
    if (o.bins) cfg.calibration_bins = *o.bins;
    cfg.finalize();
    return cfg;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw ConfigError("cannot create output directory '" + dir.string() + "'");
    }
}

void write_run_json(const fs::path& dir, const RunConfig& cfg) {
    io::atomic_write(dir / "run.json", [&](std::ostream& out) { out << cfg.to_json().dump(2) << '\n'; });
}

Dataset load_input(const RunConfig& cfg) {
    if (cfg.input.empty()) {
        throw ConfigError("--input is required for '" + cfg.mode + "'");
    }
    return load_dataset(cfg.input, cfg.reward);
}

int cmd_simulate(const RunConfig& cfg) {
    fs::path target = cfg.out;
    if (target.extension() != ".csv") {
        ensure_dir(target);
        target /= "dataset.csv";
    } else if (target.has_parent_path()) {
        ensure_dir(target.parent_path());
    }
    const Dataset d = simulate_dataset(cfg.sim, cfg.pipeline.seed);
    write_dataset(target, d);
    std::cout << "wrote " << d.n() << " trajectories (K = " << d.k() << ") to " << target.string()
              << '\n';
    return 0;
}

int cmd_analyze(const RunConfig& cfg) {
    const Dataset raw = load_input(cfg);
    ensure_dir(cfg.out);
    std::optional<BehavioralFit> cached;
    if (cfg.behavioral_model) cached = read_behavioral_fit(*cfg.behavioral_model);
    const auto res = run_analysis(raw, cfg.pipeline, cfg.pipeline.seed, cached);
    if (res.behavioral.cap_hit) {
        std::cerr << "warning: behavioral coefficients hit the magnitude cap (possible separation)\n";
    }
    write_behavioral_fit(cfg.out / "behavioral.json", res.behavioral);
    write_calibration_csv(cfg.out / "calibration.csv",
                          calibration_curve(res.behavioral, res.split.test, cfg.calibration_bins));
    write_path_csv(cfg.out / "path.csv", res.path);
    write_run_json(cfg.out, cfg);
    std::size_t nonconverged = 0;
    for (const auto& p : res.path.points) nonconverged += p.converged ? 0 : 1;
    if (nonconverged) {
        std::cerr << "warning: " << nonconverged << " grid point(s) did not converge\n";
    }
    if (!res.selection) {
        std::cerr << res.selection_error << '\n';
        return static_cast<int>(ErrorKind::infeasible);
    }
    write_selection_json(cfg.out / "selection.json", *res.selection, res.path, cfg.pipeline.selection);
    const auto& sel = *res.selection;
    std::cout << "selected lambda " << sel.lambda_selected << ": D = " << sel.point.divergence_count
              << ", train value " << sel.point.train_value.v << " (behavioral "
              << res.path.behavioral_train.v << ", V^min " << sel.vmin_used << ")";
    if (sel.point.test_value) std::cout << ", test value " << sel.point.test_value->v;
    std::cout << '\n';
    return 0;
}

void report_summary(const McSummary& s, const fs::path& out) {
    std::cout << "replicates: " << s.m << " (failed " << s.failed << ")\n"
              << "behavioral train value: " << s.behavioral_train_value << '\n'
              << "suggested train value:  " << s.suggested_train_value << '\n'
              << "suggested test value:   " << s.suggested_test_value << '\n';
    if (s.lambda_bar) std::cout << "lambda_bar: " << *s.lambda_bar << '\n';
    std::cout << "outputs in " << out.string() << '\n';
}

int cmd_mc(const RunConfig& cfg) {
    ensure_dir(cfg.out);
    const auto s = run_monte_carlo(cfg.sim, cfg.mc_replicates, cfg.pipeline);
    write_mc_summary(cfg.out, s, cfg.to_json());
    report_summary(s, cfg.out);
    return 0;
}

int cmd_resample(const RunConfig& cfg) {
    const Dataset raw = load_input(cfg);
    ensure_dir(cfg.out);
    const auto s = run_resamples(raw, cfg.resamples, cfg.pipeline);
    write_mc_summary(cfg.out, s, cfg.to_json());
    report_summary(s, cfg.out);
    return 0;
}

int cmd_calibrate(const RunConfig& cfg) {
    const Dataset raw_in = load_input(cfg);
    const Dataset raw = cfg.pipeline.add_intercept ? append_intercept(raw_in) : raw_in;
    ensure_dir(cfg.out);
    if (cfg.calibration_resamples < 1) throw ConfigError("calibrate needs at least one resample");
    std::vector<CalibrationCurve> curves;
    for (std::size_t r = 0; r < cfg.calibration_resamples; ++r) {
        const auto seed = derive_seed(cfg.pipeline.seed, r);
        auto sp = split(raw, cfg.calibration_fraction, derive_seed(seed, 0));
        const Dataset train = scale_dataset(sp.train);
        const Dataset test = apply_scaling(sp.test, *train.scale_factors());
        const auto fit = fit_behavioral(train, cfg.pipeline.behavioral, derive_seed(seed, 1));
        curves.push_back(calibration_curve(fit, test, cfg.calibration_bins));
    }
    const auto avg = average_curves(curves);
    write_calibration_csv(cfg.out / "calibration.csv", avg);
    write_run_json(cfg.out, cfg);
    double worst = 0.0;
    for (const auto& p : avg.points) worst = std::max(worst, std::abs(p.mean_predicted - p.observed_rate));
    std::cout << "calibration over " << curves.size() << " resample(s): max |pred - obs| = " << worst
              << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relative-sparsity policy optimization from observational trajectories"};
    app.require_subcommand(1);
    Overrides o;

    auto* sim = app.add_subcommand("simulate", "generate a synthetic trajectory CSV");
    add_common(*sim, o);
    auto* analyze = app.add_subcommand("analyze", "fit behavior, lambda path and selection on one dataset");
    add_common(*analyze, o);
    add_analysis(*analyze, o);
    analyze->add_option("--bins", o.bins, "calibration bins");
    auto* mc = app.add_subcommand("mc", "Monte-Carlo study over simulated datasets");
    add_common(*mc, o);
    add_analysis(*mc, o);
    mc->add_option("--m", o.m, "number of replicates");
    auto* resample = app.add_subcommand("resample", "repeated train/test splits of one dataset");
    add_common(*resample, o);
    add_analysis(*resample, o);
    resample->add_option("--r", o.r, "number of resamples");
    auto* calibrate = app.add_subcommand("calibrate", "held-out calibration curve of the behavioral fit");
    add_common(*calibrate, o);
    add_analysis(*calibrate, o);
    calibrate->add_option("--bins", o.bins, "calibration bins");
    calibrate->add_option("--r", o.r, "number of resamples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorKind::config);
    }

    try {
        const std::string mode = app.get_subcommands().front()->get_name();
        RunConfig cfg = build_config(mode, o);
        if (mode == "calibrate" && o.r) cfg.calibration_resamples = *o.r;
        if (mode == "simulate") return cmd_simulate(cfg);
        if (mode == "analyze") return cmd_analyze(cfg);
        if (mode == "mc") return cmd_mc(cfg);
        if (mode == "resample") return cmd_resample(cfg);
        return cmd_calibrate(cfg);
    } catch (const relsparse::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::numerical);
    }
}
