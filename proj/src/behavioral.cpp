#include "relsparse/behavioral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "relsparse/error.hpp"
#include "relsparse/io.hpp"
#include "relsparse/numeric.hpp"
#include "relsparse/policy.hpp"

namespace relsparse {

namespace {

Vector actions_as_vector(const Dataset& d) {
    Vector a(static_cast<Eigen::Index>(d.n()));
    for (std::size_t i = 0; i < d.n(); ++i) a(static_cast<Eigen::Index>(i)) = d.a0()[i];
    return a;
}

// Soft-threshold then clip to the box; exact prox of pen*||.||_1 + box indicator.
double shrink_clip(double x, double thresh, double cap) {
    const double s = std::copysign(std::max(std::abs(x) - thresh, 0.0), x);
    return std::clamp(s, -cap, cap);
}

}  // namespace

double mean_log_loss(const Coefficients& b, const Dataset& d) {
    const Vector eta = d.s0() * b;
    Vector terms(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        terms(i) = log1pexp(eta(i)) - (d.a0()[static_cast<std::size_t>(i)] ? eta(i) : 0.0);
    }
    return pairwise_sum(terms) / static_cast<double>(d.n());
}

LogisticFitResult fit_logistic_l1(const Dataset& d, double penalty,
                                  const std::optional<Coefficients>& init,
                                  const LogisticFitOptions& opts) {
    if (!(penalty >= 0.0)) {
        throw ConfigError("behavioral penalty must be >= 0");
    }
    const auto k = static_cast<Eigen::Index>(d.k());
    const double n = static_cast<double>(d.n());
    const Matrix& x = d.s0();
    const Vector a = actions_as_vector(d);

    const Eigen::MatrixXd gram = x.transpose() * x / n;
    const double lip = 0.25 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram, Eigen::EigenvaluesOnly)
                                  .eigenvalues()
                                  .maxCoeff();
    const double step = lip > 0.0 ? 1.0 / lip : 1.0;
    const double thresh = step * penalty;

    Vector cur = init ? *init : Vector::Zero(k);
    if (cur.size() != k) {
        throw DimensionError("initial behavioral coefficients have wrong length");
    }
    cur = cur.unaryExpr([&](double v) { return std::clamp(v, -opts.coef_cap, opts.coef_cap); });
    Vector y = cur;
    Vector next(k);
    double theta = 1.0;
    LogisticFitResult out;
    double gnorm = std::numeric_limits<double>::infinity();

    for (std::size_t it = 1; it <= opts.max_iters; ++it) {
        const Vector eta = x * y;
        const Vector resid = eta.unaryExpr([](double e) { return expit(e); }) - a;
        const Vector grad = x.transpose() * resid / n;
        for (Eigen::Index j = 0; j < k; ++j) {
            next(j) = shrink_clip(y(j) - step * grad(j), thresh, opts.coef_cap);
        }
        gnorm = ((y - next) / step).lpNorm<Eigen::Infinity>();
        if (!std::isfinite(gnorm)) {
            throw NumericalError("behavioral fit produced a non-finite iterate");
        }
        if (gnorm <= opts.tol) {
            out.b = next;
            out.iterations = it;
            out.grad_norm = gnorm;
            out.cap_hit = (next.array().abs() >= opts.coef_cap * (1.0 - 1e-12)).any();
            return out;
        }
        if ((y - next).dot(next - cur) > 0.0) {
            // Momentum points uphill: restart.
            theta = 1.0;
            y = next;
        } else {
            const double theta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
            y = next + ((theta - 1.0) / theta_next) * (next - cur);
            theta = theta_next;
        }
        cur = next;
    }
    throw ConvergenceError("behavioral logistic fit did not converge in " +
                               std::to_string(opts.max_iters) +
                               " iterations; final gradient-mapping norm " + std::to_string(gnorm),
                           gnorm);
}

std::vector<double> BehavioralCvConfig::default_behavioral_grid() {
    return make_grid(1e-4, 1e1, 20, true);
}

std::vector<std::size_t> assign_folds(std::size_t n, std::size_t folds, std::uint64_t seed) {
    if (folds < 2 || folds > n) {
        throw ConfigError("fold count must lie in [2, n]");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> label(n);
    for (std::size_t pos = 0; pos < n; ++pos) {
        label[order[pos]] = pos % folds;
    }
    return label;
}

BehavioralFit fit_behavioral(const Dataset& train, const std::vector<double>& penalty_grid,
                             std::size_t folds, std::uint64_t seed,
                             const LogisticFitOptions& opts) {
    if (penalty_grid.empty()) {
        throw ConfigError("behavioral penalty grid is empty");
    }
    for (double p : penalty_grid) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw ConfigError("behavioral penalties must be finite and >= 0");
        }
    }
    const auto treated = std::count(train.a0().begin(), train.a0().end(), std::uint8_t{1});
    if (treated == 0 || static_cast<std::size_t>(treated) == train.n()) {
        throw SeparationError("training actions contain a single class");
    }

    std::vector<double> grid = penalty_grid;
    std::sort(grid.begin(), grid.end(), std::greater<>());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    const auto label = assign_folds(train.n(), folds, seed);
    std::vector<double> loss_sum(grid.size(), 0.0);
    for (std::size_t f = 0; f < folds; ++f) {
        std::vector<std::size_t> fit_rows, held_rows;
        for (std::size_t i = 0; i < train.n(); ++i) {
            (label[i] == f ? held_rows : fit_rows).push_back(i);
        }
        const Dataset fit_part = train.subset(fit_rows);
        const Dataset held_part = train.subset(held_rows);
        std::optional<Coefficients> warm;
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const auto res = fit_logistic_l1(fit_part, grid[g], warm, opts);
            warm = res.b;
            loss_sum[g] += mean_log_loss(res.b, held_part);
        }
    }

    BehavioralFit out;
    std::size_t best = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double loss = loss_sum[g] / static_cast<double>(folds);
        out.fold_losses[grid[g]] = loss;
        // Strict improvement only: ties keep the larger penalty.
        if (loss < loss_sum[best] / static_cast<double>(folds)) {
            best = g;
        }
    }
    out.cv_lambda = grid[best];
    const auto refit = fit_logistic_l1(train, out.cv_lambda, std::nullopt, opts);
    out.b = refit.b;
    out.cap_hit = refit.cap_hit;
    out.scale_factors = train.scale_factors();
    out.covariate_names = train.covariate_names();
    out.seed = seed;
    return out;
}

nlohmann::json to_json(const BehavioralFit& fit) {
    nlohmann::json j;
    j["covariate_names"] = fit.covariate_names;
    j["scale_factors"] = fit.scale_factors
                             ? nlohmann::json(std::vector<double>(fit.scale_factors->begin(),
                                                                  fit.scale_factors->end()))
                             : nlohmann::json(nullptr);
    j["coefficients"] = std::vector<double>(fit.b.begin(), fit.b.end());
    j["cv_lambda"] = fit.cv_lambda;
    j["seed"] = fit.seed;
    auto losses = nlohmann::json::array();
    for (const auto& [pen, loss] : fit.fold_losses) {
        losses.push_back({{"penalty", pen}, {"mean_heldout_log_loss", loss}});
    }
    j["fold_losses"] = std::move(losses);
    j["cap_hit"] = fit.cap_hit;
    return j;
}

BehavioralFit behavioral_fit_from_json(const nlohmann::json& j) {
    try {
        BehavioralFit fit;
        const auto coef = j.at("coefficients").get<std::vector<double>>();
        fit.b = Eigen::Map<const Vector>(coef.data(), static_cast<Eigen::Index>(coef.size()));
        fit.covariate_names = j.at("covariate_names").get<std::vector<std::string>>();
        if (!j.at("scale_factors").is_null()) {
            const auto sf = j.at("scale_factors").get<std::vector<double>>();
            fit.scale_factors = Eigen::Map<const Vector>(sf.data(), static_cast<Eigen::Index>(sf.size()));
        }
        fit.cv_lambda = j.at("cv_lambda").get<double>();
        fit.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("fold_losses")) {
            for (const auto& e : j["fold_losses"]) {
                fit.fold_losses[e.at("penalty").get<double>()] =
                    e.at("mean_heldout_log_loss").get<double>();
            }
        }
        fit.cap_hit = j.value("cap_hit", false);
        if (fit.covariate_names.size() != static_cast<std::size_t>(fit.b.size())) {
            throw DimensionError("behavioral model: names and coefficients differ in length");
        }
        return fit;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed behavioral model JSON: ") + e.what());
    }
}

void write_behavioral_fit(const std::filesystem::path& path, const BehavioralFit& fit) {
    io::atomic_write(path, [&](std::ostream& out) { out << to_json(fit).dump(2) << '\n'; });
}

BehavioralFit read_behavioral_fit(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open behavioral model '" + path.string() + "'");
    }
    try {
        return behavioral_fit_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("malformed behavioral model JSON: ") + e.what());
    }
}

CalibrationCurve calibration_curve(const Coefficients& b, const Dataset& heldout,
                                   std::size_t n_bins) {
    if (n_bins < 2) {
        throw DataError("binning error: need at least 2 bins");
    }
    const std::size_t n = heldout.n();
    if (n < n_bins) {
        throw DataError("binning error: " + std::to_string(n) + " held-out rows for " +
                        std::to_string(n_bins) + " bins");
    }
    const Vector pred = treat_probabilities(b, heldout);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
        return pred(static_cast<Eigen::Index>(l)) < pred(static_cast<Eigen::Index>(r));
    });
    CalibrationCurve curve;
    curve.n_bins = n_bins;
    for (std::size_t bin = 0; bin < n_bins; ++bin) {
        const std::size_t lo = bin * n / n_bins;
        const std::size_t hi = (bin + 1) * n / n_bins;
        double sp = 0.0, sa = 0.0;
        for (std::size_t r = lo; r < hi; ++r) {
            sp += pred(static_cast<Eigen::Index>(order[r]));
            sa += heldout.a0()[order[r]];
        }
        const double cnt = static_cast<double>(hi - lo);
        curve.points.push_back({sp / cnt, sa / cnt, hi - lo});
    }
    return curve;
}

CalibrationCurve average_curves(const std::vector<CalibrationCurve>& curves) {
    if (curves.empty()) {
        throw DataError("no calibration curves to average");
    }
    CalibrationCurve avg;
    avg.n_bins = curves.front().n_bins;
    avg.points.resize(avg.n_bins);
    for (const auto& c : curves) {
        if (c.n_bins != avg.n_bins || c.points.size() != avg.n_bins) {
            throw DimensionError("calibration curves have different bin counts");
        }
        for (std::size_t i = 0; i < avg.n_bins; ++i) {
            avg.points[i].mean_predicted += c.points[i].mean_predicted;
            avg.points[i].observed_rate += c.points[i].observed_rate;
            avg.points[i].bin_count += c.points[i].bin_count;
        }
    }
    const double m = static_cast<double>(curves.size());
    for (auto& p : avg.points) {
        p.mean_predicted /= m;
        p.observed_rate /= m;
    }
    return avg;
}

void write_calibration_csv(const std::filesystem::path& path, const CalibrationCurve& curve) {
    io::atomic_write(path, [&](std::ostream& out) {
        out << "bin,mean_pred,obs_rate,count\n";
        for (std::size_t i = 0; i < curve.points.size(); ++i) {
            const auto& p = curve.points[i];
            out << i + 1 << ',' << io::format_double(p.mean_predicted) << ','
                << io::format_double(p.observed_rate) << ',' << p.bin_count << '\n';
        }
    });
}

}  // namespace relsparse
