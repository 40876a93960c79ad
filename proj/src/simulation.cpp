#include "relsparse/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <random>
#include <thread>

#include "relsparse/error.hpp"
#include "relsparse/io.hpp"
#include "relsparse/numeric.hpp"

namespace relsparse {

SimConfig SimConfig::study_defaults(std::size_t k) {
    if (k < 2) {
        throw ConfigError("study defaults need k >= 2");
    }
    const auto kk = static_cast<Eigen::Index>(k);
    SimConfig cfg;
    cfg.k = k;
    cfg.mu0 = Vector::Constant(kk, 45.0);
    cfg.sigma0 = Eigen::MatrixXd::Identity(kk, kk) * 300.0;
    cfg.sigma0(0, 1) = cfg.sigma0(1, 0) = 100.0;
    cfg.transition_sigma = Eigen::MatrixXd::Identity(kk, kk) * 300.0;
    cfg.transition_sigma(0, 1) = cfg.transition_sigma(1, 0) = 200.0;
    cfg.tau = Vector::Zero(kk);
    cfg.tau(0) = 0.1;
    cfg.tau(1) = 0.7;
    cfg.b0 = Vector::Zero(kk);
    cfg.b0(0) = -0.01;
    cfg.b0(1) = 0.02;
    return cfg;
}

namespace {

Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov, const char* name) {
    if (!cov.isApprox(cov.transpose(), 1e-12)) {
        throw ConfigError(std::string(name) + " is not symmetric");
    }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw ConfigError(std::string("Cholesky factorization failed: ") + name +
                          " is not positive definite");
    }
    return llt.matrixL();
}

struct Generator {
    explicit Generator(const SimConfig& cfg)
        : cfg(cfg),
          chol0(cholesky_or_throw(cfg.sigma0, "sigma0")),
          chol1(cholesky_or_throw(cfg.transition_sigma, "transition_sigma")) {}

    const SimConfig& cfg;
    Eigen::MatrixXd chol0;
    Eigen::MatrixXd chol1;

    template <class Rng>
    Vector draw_normal(Rng& rng) const {
        std::normal_distribution<double> z;
        Vector v(static_cast<Eigen::Index>(cfg.k));
        for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = z(rng);
        return v;
    }

    template <class Rng>
    Vector initial_state(Rng& rng) const {
        return cfg.mu0 + chol0 * draw_normal(rng);
    }

    template <class Rng>
    Vector final_state(Rng& rng, const Vector& s0, int a0) const {
        const double shift = a0 ? cfg.tau.dot(s0) : 0.0;
        return (s0.array() + shift).matrix() + chol1 * draw_normal(rng);
    }
};

}  // namespace

void SimConfig::validate() const {
    const auto kk = static_cast<Eigen::Index>(k);
    if (k < 1) throw ConfigError("sim k must be >= 1");
    if (n < 1) throw ConfigError("sim n must be >= 1");
    if (mu0.size() != kk || tau.size() != kk || b0.size() != kk) {
        throw ConfigError("sim mu0, tau and b0 must have length k = " + std::to_string(k));
    }
    if (sigma0.rows() != kk || sigma0.cols() != kk || transition_sigma.rows() != kk ||
        transition_sigma.cols() != kk) {
        throw ConfigError("sim covariance matrices must be k x k");
    }
    if (reward_index < 1 || reward_index > static_cast<int>(k)) {
        throw ConfigError("sim reward_index must lie in [1, k]");
    }
    cholesky_or_throw(sigma0, "sigma0");
    cholesky_or_throw(transition_sigma, "transition_sigma");
}

Dataset simulate_dataset(const SimConfig& cfg, std::uint64_t replicate_seed) {
    cfg.validate();
    const Generator gen(cfg);
    std::mt19937_64 rng(replicate_seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto n = static_cast<Eigen::Index>(cfg.n);
    const auto k = static_cast<Eigen::Index>(cfg.k);
    Matrix s0(n, k), s1(n, k);
    std::vector<std::uint8_t> a0(cfg.n);
    Vector reward(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Vector x0 = gen.initial_state(rng);
        const int a = unif(rng) < expit(cfg.b0.dot(x0)) ? 1 : 0;
        const Vector x1 = gen.final_state(rng, x0, a);
        s0.row(i) = x0.transpose();
        s1.row(i) = x1.transpose();
        a0[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(a);
        reward(i) = x1(cfg.reward_index - 1);
    }
    return Dataset(std::move(s0), std::move(a0), std::move(s1), std::move(reward),
                   default_covariate_names(cfg.k));
}

OracleEstimate onpolicy_value(const Coefficients& beta, const SimConfig& sim, std::size_t n_mc,
                              std::uint64_t seed, const std::optional<Vector>& scale_factors) {
    sim.validate();
    if (n_mc < 2) throw ConfigError("oracle needs n_mc >= 2");
    if (beta.size() != static_cast<Eigen::Index>(sim.k)) {
        throw DimensionError("oracle policy coefficients do not match k");
    }
    Vector effective = beta;
    if (scale_factors) {
        if (scale_factors->size() != beta.size()) throw DimensionError("oracle scale factors");
        effective = beta.cwiseQuotient(*scale_factors);
    }
    const Generator gen(sim);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Vector rewards(static_cast<Eigen::Index>(n_mc));
    for (std::size_t i = 0; i < n_mc; ++i) {
        const Vector x0 = gen.initial_state(rng);
        const int a = unif(rng) < expit(effective.dot(x0)) ? 1 : 0;
        rewards(static_cast<Eigen::Index>(i)) = gen.final_state(rng, x0, a)(sim.reward_index - 1);
    }
    const double mean = pairwise_sum(rewards) / static_cast<double>(n_mc);
    const double var = (rewards.array() - mean).square().sum() / static_cast<double>(n_mc - 1);
    return {mean, std::sqrt(var / static_cast<double>(n_mc))};
}

AnalysisResult run_analysis(const Dataset& raw_in, const PipelineConfig& cfg, std::uint64_t seed,
                            const std::optional<BehavioralFit>& cached) {
    const Dataset raw = cfg.add_intercept ? append_intercept(raw_in) : raw_in;
    AnalysisResult out;
    SplitPair sp = split(raw, cfg.split_fraction, derive_seed(seed, 0));
    if (cached && cached->scale_factors) {
        sp.train = apply_scaling(sp.train, *cached->scale_factors);
    } else {
        sp.train = scale_dataset(sp.train);
    }
    sp.test = apply_scaling(sp.test, *sp.train.scale_factors());
    if (cached) {
        if (static_cast<std::size_t>(cached->b.size()) != raw.k()) {
            throw DimensionError("cached behavioral model has " + std::to_string(cached->b.size()) +
                                 " coefficients, data has K = " + std::to_string(raw.k()));
        }
        out.behavioral = *cached;
    } else {
        out.behavioral = fit_behavioral(sp.train, cfg.behavioral, derive_seed(seed, 1));
    }
    out.path = fit_path(sp, out.behavioral.b, cfg.grid, cfg.selection.delta, cfg.optimizer, cfg.ipw);
    try {
        out.selection = select_lambda(out.path, cfg.selection);
    } catch (const InfeasibleSelectionError& e) {
        out.selection_error = e.what();
        out.best_train_value = e.best_value;
    }
    out.split = std::move(sp);
    return out;
}

namespace {

struct ReplicateOutcome {
    bool ok = false;
    std::string error;
    LambdaPath path;
    ReplicateRecord record;
};

ReplicateOutcome to_outcome(AnalysisResult&& res, std::uint64_t seed) {
    ReplicateOutcome o;
    if (!res.selection) {
        o.error = res.selection_error;
        return o;
    }
    const auto& sel = *res.selection;
    auto& r = o.record;
    r.seed = seed;
    r.lambda = sel.lambda_selected;
    r.index = sel.index;
    r.divergence = sel.point.divergence_count;
    r.beta = sel.point.beta;
    r.b = res.path.b;
    r.cv_lambda = res.behavioral.cv_lambda;
    r.train_value = sel.point.train_value;
    r.test_value = sel.point.test_value.value_or(ValueEstimate{});
    r.behavioral_train = res.path.behavioral_train;
    r.behavioral_test = res.path.behavioral_test.value_or(ValueEstimate{});
    for (const auto& p : res.path.points) r.nonconverged_points += p.converged ? 0 : 1;
    o.path = std::move(res.path);
    o.ok = true;
    return o;
}

template <class Job>
std::vector<ReplicateOutcome> run_parallel(std::size_t m, std::size_t threads, const Job& job) {
    std::vector<ReplicateOutcome> out(m);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t r = next++; r < m; r = next++) {
            try {
                out[r] = job(r);
            } catch (const std::exception& e) {
                out[r].ok = false;
                out[r].error = e.what();
            }
        }
    };
    const std::size_t nt = std::max<std::size_t>(1, std::min(threads, m));
    if (nt == 1) {
        worker();
        return out;
    }
    std::vector<std::thread> pool;
    pool.reserve(nt);
    for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return out;
}

std::vector<std::uint64_t> replicate_seeds(std::size_t m, const PipelineConfig& cfg) {
    if (cfg.replicate_seeds) {
        if (cfg.replicate_seeds->size() != m) {
            throw ConfigError("replicate_seeds must list exactly one seed per replicate");
        }
        return *cfg.replicate_seeds;
    }
    std::vector<std::uint64_t> seeds(m);
    for (std::size_t r = 0; r < m; ++r) seeds[r] = derive_seed(cfg.seed, r);
    return seeds;
}

McSummary aggregate(std::vector<ReplicateOutcome>&& outcomes, const PipelineConfig& cfg) {
    McSummary s;
    std::vector<const ReplicateOutcome*> good;
    for (std::size_t r = 0; r < outcomes.size(); ++r) {
        if (outcomes[r].ok) {
            good.push_back(&outcomes[r]);
        } else {
            s.failures.push_back("replicate " + std::to_string(r) + ": " + outcomes[r].error);
        }
    }
    s.failed = s.failures.size();
    const auto total = outcomes.size();
    if (good.size() < 2 || static_cast<double>(s.failed) >= 0.05 * static_cast<double>(total)) {
        std::string msg = std::to_string(s.failed) + " of " + std::to_string(total) +
                          " replicates failed";
        if (!s.failures.empty()) msg += "; first: " + s.failures.front();
        if (s.failed == 0) msg = "need at least 2 successful replicates";
        throw NumericalError(msg);
    }
    if (s.failed > 0) {
        std::cerr << "warning: excluded " << s.failed << " of " << total
                  << " replicates: " << s.failures.front() << '\n';
    }

    const auto& first = good.front()->path;
    s.m = good.size();
    s.grid = first.grid;
    s.covariate_names = first.covariate_names;
    const auto g = static_cast<Eigen::Index>(s.grid.size());
    const auto k = first.b.size();
    const double m = static_cast<double>(s.m);

    s.mean_coefficients = Matrix::Zero(g, k);
    s.mean_b = Vector::Zero(k);
    s.mean_train_value = s.mean_train_se = s.mean_test_value = s.mean_test_se =
        s.mean_divergence = Vector::Zero(g);
    s.covariate_selection_proportions = Vector::Zero(k);
    for (double l : s.grid) s.selection_distribution[l] = 0.0;

    // Sequential reduction in replicate order keeps results independent of threading.
    for (const auto* o : good) {
        const auto& p = o->path;
        for (Eigen::Index i = 0; i < g; ++i) {
            const auto& pt = p.points[static_cast<std::size_t>(i)];
            s.mean_coefficients.row(i) += pt.beta.transpose();
            s.mean_train_value(i) += pt.train_value.v;
            s.mean_train_se(i) += pt.train_value.se;
            s.mean_test_value(i) += pt.test_value->v;
            s.mean_test_se(i) += pt.test_value->se;
            s.mean_divergence(i) += static_cast<double>(pt.divergence_count);
        }
        s.mean_b += p.b;
        const auto& rec = o->record;
        s.selection_distribution[rec.lambda] += 1.0 / m;
        s.divergence_distribution[rec.divergence] += 1.0 / m;
        for (Eigen::Index j = 0; j < k; ++j) {
            if (std::abs(rec.beta(j) - rec.b(j)) > cfg.selection.delta) {
                s.covariate_selection_proportions(j) += 1.0;
            }
        }
        s.behavioral_train_value += rec.behavioral_train.v;
        s.behavioral_train_se += rec.behavioral_train.se;
        s.behavioral_test_value += rec.behavioral_test.v;
        s.behavioral_test_se += rec.behavioral_test.se;
        s.suggested_train_value += rec.train_value.v;
        s.suggested_train_se += rec.train_value.se;
        s.suggested_test_value += rec.test_value.v;
        s.suggested_test_se += rec.test_value.se;
        s.replicates.push_back(rec);
    }
    s.mean_coefficients /= m;
    s.mean_b /= m;
    // Two-pass variance: identical replicates give exactly zero width.
    s.coefficient_ci = Matrix::Zero(g, k);
    for (Eigen::Index i = 0; i < g; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            double acc = 0.0;
            for (const auto* o : good) {
                const double d = o->path.points[static_cast<std::size_t>(i)].beta(j) -
                                 s.mean_coefficients(i, j);
                acc += d * d;
            }
            s.coefficient_ci(i, j) = z975 * std::sqrt(acc / (m - 1.0));
        }
    }
    s.b_ci = Vector::Zero(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        double acc = 0.0;
        for (const auto* o : good) {
            const double d = o->path.b(j) - s.mean_b(j);
            acc += d * d;
        }
        s.b_ci(j) = z975 * std::sqrt(acc / (m - 1.0));
    }
    s.mean_train_value /= m;
    s.mean_train_se /= m;
    s.mean_test_value /= m;
    s.mean_test_se /= m;
    s.mean_divergence /= m;
    s.covariate_selection_proportions /= m;
    s.behavioral_train_value /= m;
    s.behavioral_train_se /= m;
    s.behavioral_test_value /= m;
    s.behavioral_test_se /= m;
    s.suggested_train_value /= m;
    s.suggested_train_se /= m;
    s.suggested_test_value /= m;
    s.suggested_test_se /= m;

    // Selection once more on the averaged path.
    LambdaPath avg;
    avg.grid = s.grid;
    avg.b = s.mean_b;
    avg.delta = cfg.selection.delta;
    avg.covariate_names = s.covariate_names;
    avg.behavioral_train = ValueEstimate{s.behavioral_train_value, s.behavioral_train_se, 0, 1.0};
    for (Eigen::Index i = 0; i < g; ++i) {
        PathPoint pt;
        pt.lambda = s.grid[static_cast<std::size_t>(i)];
        pt.beta = s.mean_coefficients.row(i).transpose();
        pt.train_value = ValueEstimate{s.mean_train_value(i), s.mean_train_se(i), 0, 0.0};
        pt.test_value = ValueEstimate{s.mean_test_value(i), s.mean_test_se(i), 0, 0.0};
        pt.divergence_count = divergence_count(pt.beta, avg.b, cfg.selection.delta);
        avg.points.push_back(std::move(pt));
    }
    try {
        const auto sel = select_lambda(avg, cfg.selection);
        s.lambda_bar = sel.lambda_selected;
        s.lambda_bar_divergence = sel.point.divergence_count;
    } catch (const InfeasibleSelectionError& e) {
        s.lambda_bar_error = e.what();
    }
    return s;
}

}  // namespace

McSummary run_monte_carlo(const SimConfig& sim, std::size_t m, const PipelineConfig& cfg) {
    if (m < 2) throw ConfigError("Monte-Carlo run needs m >= 2");
    sim.validate();
    cfg.optimizer.validate();
    const auto seeds = replicate_seeds(m, cfg);
    auto outcomes = run_parallel(m, cfg.threads, [&](std::size_t r) {
        const Dataset d = simulate_dataset(sim, derive_seed(seeds[r], 7));
        return to_outcome(run_analysis(d, cfg, seeds[r]), seeds[r]);
    });
    return aggregate(std::move(outcomes), cfg);
}

McSummary run_resamples(const Dataset& raw, std::size_t r, const PipelineConfig& cfg) {
    if (r < 2) throw ConfigError("resampling needs r >= 2");
    cfg.optimizer.validate();
    const auto seeds = replicate_seeds(r, cfg);
    auto outcomes = run_parallel(r, cfg.threads, [&](std::size_t i) {
        return to_outcome(run_analysis(raw, cfg, seeds[i]), seeds[i]);
    });
    return aggregate(std::move(outcomes), cfg);
}

nlohmann::json summary_json(const McSummary& s) {
    using nlohmann::json;
    json j;
    j["m"] = s.m;
    j["failed"] = s.failed;
    j["failures"] = s.failures;
    j["covariate_names"] = s.covariate_names;
    j["grid"] = s.grid;
    j["behavioral"] = {{"train_value", s.behavioral_train_value},
                       {"train_se", s.behavioral_train_se},
                       {"test_value", s.behavioral_test_value},
                       {"test_se", s.behavioral_test_se},
                       {"mean_coefficients", std::vector<double>(s.mean_b.begin(), s.mean_b.end())},
                       {"coefficient_ci", std::vector<double>(s.b_ci.begin(), s.b_ci.end())}};
    j["suggested"] = {{"train_value", s.suggested_train_value},
                      {"train_se", s.suggested_train_se},
                      {"test_value", s.suggested_test_value},
                      {"test_se", s.suggested_test_se}};
    j["lambda_bar"] = s.lambda_bar ? json(*s.lambda_bar) : json(nullptr);
    j["lambda_bar_divergence"] = s.lambda_bar_divergence;
    if (!s.lambda_bar_error.empty()) j["lambda_bar_error"] = s.lambda_bar_error;
    j["covariate_selection_proportions"] =
        std::vector<double>(s.covariate_selection_proportions.begin(),
                            s.covariate_selection_proportions.end());
    json dd = json::object();
    for (const auto& [d, f] : s.divergence_distribution) dd[std::to_string(d)] = f;
    j["divergence_distribution"] = std::move(dd);
    json reps = json::array();
    for (const auto& r : s.replicates) {
        reps.push_back({{"seed", r.seed},
                        {"lambda", r.lambda},
                        {"divergence_count", r.divergence},
                        {"cv_lambda", r.cv_lambda},
                        {"train_value", r.train_value.v},
                        {"test_value", r.test_value.v},
                        {"behavioral_train_value", r.behavioral_train.v},
                        {"behavioral_test_value", r.behavioral_test.v},
                        {"nonconverged_points", r.nonconverged_points},
                        {"beta", std::vector<double>(r.beta.begin(), r.beta.end())},
                        {"b", std::vector<double>(r.b.begin(), r.b.end())}});
    }
    j["replicates"] = std::move(reps);
    return j;
}

void write_mc_summary(const std::filesystem::path& dir, const McSummary& s,
                      const nlohmann::json& run_info) {
    std::filesystem::create_directories(dir);
    const auto k = static_cast<std::size_t>(s.mean_b.size());
    const auto fmt = [](double x) { return io::format_double(x); };

    io::atomic_write(dir / "path_mean.csv", [&](std::ostream& out) {
        out << "lambda,train_value,train_se,test_value,test_se,mean_divergence_count";
        for (std::size_t j = 1; j <= k; ++j) out << ",beta_" << j;
        out << '\n' << "behavioral," << fmt(s.behavioral_train_value) << ','
            << fmt(s.behavioral_train_se) << ',' << fmt(s.behavioral_test_value) << ','
            << fmt(s.behavioral_test_se) << ",0";
        for (std::size_t j = 0; j < k; ++j) out << ',' << fmt(s.mean_b(static_cast<Eigen::Index>(j)));
        out << '\n';
        for (std::size_t i = 0; i < s.grid.size(); ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            out << fmt(s.grid[i]) << ',' << fmt(s.mean_train_value(ii)) << ','
                << fmt(s.mean_train_se(ii)) << ',' << fmt(s.mean_test_value(ii)) << ','
                << fmt(s.mean_test_se(ii)) << ',' << fmt(s.mean_divergence(ii));
            for (std::size_t j = 0; j < k; ++j)
                out << ',' << fmt(s.mean_coefficients(ii, static_cast<Eigen::Index>(j)));
            out << '\n';
        }
    });
    io::atomic_write(dir / "path_ci.csv", [&](std::ostream& out) {
        out << "lambda";
        for (std::size_t j = 1; j <= k; ++j) out << ",beta_" << j << "_halfwidth";
        out << '\n' << "behavioral";
        for (std::size_t j = 0; j < k; ++j) out << ',' << fmt(s.b_ci(static_cast<Eigen::Index>(j)));
        out << '\n';
        for (std::size_t i = 0; i < s.grid.size(); ++i) {
            out << fmt(s.grid[i]);
            for (std::size_t j = 0; j < k; ++j)
                out << ',' << fmt(s.coefficient_ci(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            out << '\n';
        }
    });
    io::atomic_write(dir / "selection_dist.csv", [&](std::ostream& out) {
        out << "lambda,frequency\n";
        for (auto it = s.selection_distribution.rbegin(); it != s.selection_distribution.rend(); ++it) {
            out << fmt(it->first) << ',' << fmt(it->second) << '\n';
        }
    });
    io::atomic_write(dir / "divergence_dist.csv", [&](std::ostream& out) {
        out << "divergence_count,frequency\n";
        for (const auto& [d, f] : s.divergence_distribution) out << d << ',' << fmt(f) << '\n';
    });
    io::atomic_write(dir / "selection_proportions.csv", [&](std::ostream& out) {
        out << "covariate,proportion\n";
        for (std::size_t j = 0; j < k; ++j) {
            out << s.covariate_names[j] << ','
                << fmt(s.covariate_selection_proportions(static_cast<Eigen::Index>(j))) << '\n';
        }
    });
    io::atomic_write(dir / "summary.json", [&](std::ostream& out) {
        auto j = summary_json(s);
        j["run"] = run_info;
        out << j.dump(2) << '\n';
    });
}

}  // namespace relsparse
