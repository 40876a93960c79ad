#include "relsparse/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "relsparse/error.hpp"
#include "relsparse/io.hpp"
#include "relsparse/numeric.hpp"

namespace relsparse {

namespace {

void check_same_length(const Vector& x, const Vector& b) {
    if (x.size() != b.size()) {
        throw DimensionError("coefficient lengths differ: " + std::to_string(x.size()) + " vs " +
                             std::to_string(b.size()));
    }
}

std::string dump(const Vector& v) {
    std::ostringstream os;
    os << '[';
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        os << (i ? ", " : "") << io::format_double(v(i));
    }
    os << ']';
    return os.str();
}

constexpr double kMaxStep = 1e12;
constexpr double kMinStep = 1e-300;
constexpr double kObjectiveNoise = 1e-13;

}  // namespace

void OptimizerConfig::validate() const {
    if (max_iters == 0) throw ConfigError("optimizer max_iters must be positive");
    if (!(grad_tol > 0.0)) throw ConfigError("optimizer grad_tol must be positive");
    if (!(initial_step > 0.0)) throw ConfigError("optimizer initial_step must be positive");
    if (!(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
        throw ConfigError("optimizer backtrack_factor must lie in (0, 1)");
    }
    if (!(armijo_c > 0.0 && armijo_c < 1.0)) {
        throw ConfigError("optimizer armijo_c must lie in (0, 1)");
    }
}

double penalty(const Coefficients& beta, const Coefficients& b, double lambda) {
    check_same_length(beta, b);
    if (!(lambda >= 0.0)) {
        throw ConfigError("lambda must be >= 0");
    }
    if (lambda == 0.0) {
        return 0.0;
    }
    return lambda * (beta - b).lpNorm<1>();
}

Vector prox_recentered_l1(const Vector& x, const Vector& b, double threshold) {
    check_same_length(x, b);
    if (!(threshold >= 0.0)) {
        throw ConfigError("prox threshold must be >= 0");
    }
    Vector out(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double diff = x(k) - b(k);
        const double mag = std::abs(diff) - threshold;
        out(k) = mag > 0.0 ? b(k) + std::copysign(mag, diff) : b(k);
    }
    return out;
}

double kkt_residual(const Coefficients& beta, const Coefficients& b, const Vector& grad,
                    double lambda) {
    check_same_length(beta, b);
    check_same_length(grad, b);
    double worst = 0.0;
    for (Eigen::Index k = 0; k < beta.size(); ++k) {
        const double diff = beta(k) - b(k);
        const double r = diff == 0.0 ? std::max(std::abs(grad(k)) - lambda, 0.0)
                                     : std::abs(grad(k) - std::copysign(lambda, diff));
        worst = std::max(worst, r);
    }
    return worst;
}

std::size_t divergence_count(const Coefficients& beta, const Coefficients& b, double delta) {
    check_same_length(beta, b);
    if (!(delta >= 0.0)) {
        throw ConfigError("divergence tolerance must be >= 0");
    }
    return static_cast<std::size_t>(((beta - b).array().abs() > delta).count());
}

PathPoint optimize(const Dataset& train, const Coefficients& b, double lambda,
                   const Coefficients& init, const OptimizerConfig& cfg, const IpwOptions& ipw) {
    cfg.validate();
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw ConfigError("lambda must be positive and finite");
    }
    check_same_length(init, b);
    if (static_cast<std::size_t>(b.size()) != train.k()) {
        throw DimensionError("behavioral coefficients do not match K");
    }

    Coefficients beta = init;
    double step = cfg.initial_step;
    auto vg = value_and_gradient(beta, b, train, ipw);
    double obj = vg.value - penalty(beta, b, lambda);
    if (!std::isfinite(obj)) {
        throw NumericalError("non-finite objective at initial iterate " + dump(beta));
    }

    PathPoint point;
    point.lambda = lambda;
    double residual = kkt_residual(beta, b, vg.gradient, lambda);
    // Accelerated proximal gradient with adaptive restart: extrapolate from the
    // last two iterates, fall back to a plain step whenever J_n would drop.
    Coefficients prev = beta;
    std::size_t momentum_age = 0;
    std::size_t it = 0;
    while (residual > cfg.grad_tol && it < cfg.max_iters) {
        ++it;
        // Objective differences below this are rounding noise.
        const double noise = kObjectiveNoise * (1.0 + std::abs(obj));
        const double mom = momentum_age == 0
                               ? 0.0
                               : static_cast<double>(momentum_age - 1) /
                                     static_cast<double>(momentum_age + 2);
        Coefficients y = beta;
        ValueAndGradient y_vg = vg;
        double y_obj = obj;
        if (mom > 0.0) {
            y = beta + mom * (beta - prev);
            y_vg = value_and_gradient(y, b, train, ipw);
            y_obj = y_vg.value - penalty(y, b, lambda);
            if (!std::isfinite(y_obj)) {
                y = beta;
                y_vg = vg;
                y_obj = obj;
            }
        }

        Coefficients cand;
        ValueAndGradient cand_vg;
        double cand_obj = 0.0;
        bool within_noise = false;
        while (true) {
            cand = prox_recentered_l1(y + step * y_vg.gradient, b, step * lambda);
            cand_vg = value_and_gradient(cand, b, train, ipw);
            cand_obj = cand_vg.value - penalty(cand, b, lambda);
            const double moved = (cand - y).norm();
            const double required = y_obj + cfg.armijo_c * moved * moved / step;
            // The curvature test keeps step <= 1 / local Lipschitz constant, which
            // objective comparisons cannot certify once gains reach rounding level.
            const bool flat_enough = step * (cand_vg.gradient - y_vg.gradient).norm() <= moved;
            if (std::isfinite(cand_obj) && cand_obj >= required - noise && flat_enough) {
                within_noise = cand_obj < required;
                break;
            }
            step *= cfg.backtrack_factor;
            if (step < kMinStep) {
                throw NumericalError("line search collapsed at iterate " + dump(y) +
                                     " (objective " + io::format_double(y_obj) + ")");
            }
        }
        if (cand_obj < obj - noise && mom > 0.0) {
            momentum_age = 0;  // restart from beta without momentum
            continue;
        }
        if (cand == beta) break;  // no representable progress left
        prev = std::move(beta);
        beta = std::move(cand);
        obj = cand_obj;
        vg = std::move(cand_vg);
        if (!beta.allFinite() || !std::isfinite(obj)) {
            throw NumericalError("non-finite iterate " + dump(beta));
        }
        residual = kkt_residual(beta, b, vg.gradient, lambda);
        ++momentum_age;
        if (!within_noise) step = std::min(step / cfg.backtrack_factor, kMaxStep);
    }
    point.converged = residual <= cfg.grad_tol;

    if (!beta.allFinite()) {
        throw NumericalError("unbounded solution " + dump(beta));
    }
    point.beta = beta;
    point.iterations = it;
    point.residual = residual;
    point.train_value = ipw_value(beta, b, train, ipw);
    point.objective = point.train_value.v - penalty(beta, b, lambda);
    point.divergence_count = divergence_count(beta, b, 0.01);
    return point;
}

std::vector<double> normalize_grid(std::vector<double> grid) {
    if (grid.empty()) {
        throw ConfigError("lambda grid is empty");
    }
    for (double l : grid) {
        if (!(l > 0.0) || !std::isfinite(l)) {
            throw ConfigError("lambda grid values must be positive and finite");
        }
    }
    std::sort(grid.begin(), grid.end(), std::greater<>());
    if (std::adjacent_find(grid.begin(), grid.end()) != grid.end()) {
        throw ConfigError("lambda grid contains duplicate values");
    }
    return grid;
}

LambdaPath fit_path(const SplitPair& split, const Coefficients& b, std::vector<double> grid,
                    double delta, const OptimizerConfig& cfg, const IpwOptions& ipw) {
    cfg.validate();
    if (!(delta >= 0.0)) {
        throw ConfigError("delta must be >= 0");
    }
    LambdaPath path;
    path.grid = normalize_grid(std::move(grid));
    path.b = b;
    path.delta = delta;
    path.covariate_names = split.train.covariate_names();
    path.behavioral_train = ipw_value(b, b, split.train, ipw);
    path.behavioral_test = ipw_value(b, b, split.test, ipw);

    Coefficients warm = b;
    path.points.reserve(path.grid.size());
    for (double lambda : path.grid) {
        PathPoint p = optimize(split.train, b, lambda, warm, cfg, ipw);
        p.divergence_count = divergence_count(p.beta, b, delta);
        p.test_value = ipw_value(p.beta, b, split.test, ipw);
        warm = p.beta;
        path.points.push_back(std::move(p));
    }
    return path;
}

void write_path_csv(std::ostream& out, const LambdaPath& lp) {
    const auto k = static_cast<std::size_t>(lp.b.size());
    out << "lambda,iter,converged,train_value,train_se,test_value,test_se,divergence_count";
    for (std::size_t j = 1; j <= k; ++j) out << ",beta_" << j;
    out << '\n';
    const auto value_cells = [&](const ValueEstimate& tr, const std::optional<ValueEstimate>& te) {
        out << ',' << io::format_double(tr.v) << ',' << io::format_double(tr.se) << ',';
        if (te) {
            out << io::format_double(te->v) << ',' << io::format_double(te->se);
        } else {
            out << "nan,nan";
        }
    };
    out << "behavioral,0,1";
    value_cells(lp.behavioral_train, lp.behavioral_test);
    out << ",0";
    for (std::size_t j = 0; j < k; ++j) out << ',' << io::format_double(lp.b(static_cast<Eigen::Index>(j)));
    out << '\n';
    for (const auto& p : lp.points) {
        out << io::format_double(p.lambda) << ',' << p.iterations << ',' << (p.converged ? 1 : 0);
        value_cells(p.train_value, p.test_value);
        out << ',' << p.divergence_count;
        for (std::size_t j = 0; j < k; ++j) out << ',' << io::format_double(p.beta(static_cast<Eigen::Index>(j)));
        out << '\n';
    }
}

void write_path_csv(const std::filesystem::path& path, const LambdaPath& lp) {
    io::atomic_write(path, [&](std::ostream& out) { write_path_csv(out, lp); });
}

LambdaPath parse_path_csv(std::istream& in, double delta) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("empty path CSV");
    }
    const auto header = io::split_csv_line(line);
    if (header.size() < 9 || header[0] != "lambda") {
        throw SchemaError("not a path CSV header");
    }
    const auto k = header.size() - 8;
    LambdaPath lp;
    lp.delta = delta;
    lp.covariate_names = default_covariate_names(k);
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++row;
        const auto c = io::split_csv_line(line);
        if (c.size() != header.size()) {
            throw ParseError(row, "wrong number of cells in path CSV");
        }
        try {
            const auto num = [&](std::size_t i) {
                return c[i] == "nan" ? std::nan("") : io::parse_double(c[i]);
            };
            Coefficients beta(static_cast<Eigen::Index>(k));
            for (std::size_t j = 0; j < k; ++j) beta(static_cast<Eigen::Index>(j)) = num(8 + j);
            ValueEstimate tr{num(3), num(4), 0, 0.0};
            std::optional<ValueEstimate> te;
            if (!std::isnan(num(5))) te = ValueEstimate{num(5), num(6), 0, 0.0};
            if (c[0] == "behavioral") {
                lp.b = beta;
                lp.behavioral_train = tr;
                lp.behavioral_test = te;
                continue;
            }
            PathPoint p;
            p.lambda = num(0);
            p.iterations = static_cast<std::size_t>(std::stoull(c[1]));
            p.converged = c[2] == "1";
            p.train_value = tr;
            p.test_value = te;
            p.divergence_count = static_cast<std::size_t>(std::stoull(c[7]));
            p.beta = std::move(beta);
            lp.grid.push_back(p.lambda);
            lp.points.push_back(std::move(p));
        } catch (const std::exception& e) {
            throw ParseError(row, e.what());
        }
    }
    if (lp.b.size() == 0) {
        throw SchemaError("path CSV lacks the behavioral row");
    }
    for (auto& p : lp.points) {
        p.objective = p.train_value.v - penalty(p.beta, lp.b, p.lambda);
    }
    return lp;
}

LambdaPath read_path_csv(const std::filesystem::path& path, double delta) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open path CSV '" + path.string() + "'");
    }
    return parse_path_csv(in, delta);
}

}  // namespace relsparse
