#include "relsparse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "relsparse/error.hpp"
#include "relsparse/io.hpp"

namespace relsparse {

namespace {

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw DataError(std::string("non-finite entry in ") + what);
    }
}

}  // namespace

Dataset::Dataset(Matrix s0, std::vector<std::uint8_t> a0, Matrix s1, Vector reward,
                 std::vector<std::string> covariate_names, std::optional<Vector> scale_factors)
    : s0_(std::move(s0)),
      a0_(std::move(a0)),
      s1_(std::move(s1)),
      reward_(std::move(reward)),
      names_(std::move(covariate_names)),
      scale_factors_(std::move(scale_factors)) {
    const auto n = s0_.rows();
    if (n < 1) {
        throw DataError("empty dataset");
    }
    if (s0_.cols() < 1) {
        throw DimensionError("state dimension must be at least 1");
    }
    if (s1_.rows() != n || s1_.cols() != s0_.cols() || reward_.size() != n ||
        static_cast<Eigen::Index>(a0_.size()) != n) {
        throw DimensionError("inconsistent trajectory field lengths");
    }
    if (names_.empty()) {
        names_ = default_covariate_names(k());
    }
    if (names_.size() != k()) {
        throw DimensionError("expected " + std::to_string(k()) + " covariate names, got " +
                             std::to_string(names_.size()));
    }
    for (std::size_t i = 0; i < a0_.size(); ++i) {
        if (a0_[i] > 1) {
            throw ParseError(i + 1, "action must be 0 or 1");
        }
    }
    require_finite(s0_, "s0");
    require_finite(s1_, "s1");
    if (!reward_.allFinite()) {
        throw DataError("non-finite reward");
    }
    if (scale_factors_) {
        if (static_cast<std::size_t>(scale_factors_->size()) != k()) {
            throw DimensionError("scale factor length does not match K");
        }
        if (!((scale_factors_->array() > 0.0).all() && scale_factors_->allFinite())) {
            throw DimensionError("scale factors must be finite and positive");
        }
    }
}

Dataset Dataset::from_trajectories(const std::vector<Trajectory>& rows,
                                   std::vector<std::string> covariate_names) {
    if (rows.empty()) {
        throw DataError("empty dataset");
    }
    const auto k = rows.front().s0.size();
    Matrix s0(rows.size(), k);
    Matrix s1(rows.size(), k);
    std::vector<std::uint8_t> a0(rows.size());
    Vector reward(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = rows[i];
        if (t.s0.size() != k || t.s1.size() != k) {
            throw DimensionError("trajectory " + std::to_string(i + 1) + " has mismatched K");
        }
        if (t.a0 != 0 && t.a0 != 1) {
            throw ParseError(i + 1, "action must be 0 or 1");
        }
        s0.row(i) = t.s0.transpose();
        s1.row(i) = t.s1.transpose();
        a0[i] = static_cast<std::uint8_t>(t.a0);
        reward(i) = t.reward;
    }
    return Dataset(std::move(s0), std::move(a0), std::move(s1), std::move(reward),
                   std::move(covariate_names));
}

Trajectory Dataset::trajectory(std::size_t i) const {
    return Trajectory{s0_.row(i).transpose(), a0_[i], s1_.row(i).transpose(), reward_(i)};
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    Matrix s0(rows.size(), s0_.cols());
    Matrix s1(rows.size(), s1_.cols());
    std::vector<std::uint8_t> a0(rows.size());
    Vector reward(rows.size());
    for (std::size_t j = 0; j < rows.size(); ++j) {
        const auto i = rows[j];
        s0.row(j) = s0_.row(i);
        s1.row(j) = s1_.row(i);
        a0[j] = a0_[i];
        reward(j) = reward_(i);
    }
    return Dataset(std::move(s0), std::move(a0), std::move(s1), std::move(reward), names_,
                   scale_factors_);
}

std::vector<std::string> default_covariate_names(std::size_t k) {
    std::vector<std::string> names(k);
    for (std::size_t j = 0; j < k; ++j) {
        names[j] = "s0_" + std::to_string(j + 1);
    }
    return names;
}

Dataset parse_dataset(std::istream& in, const RewardSpec& reward_spec) {
    std::string line;
    if (!std::getline(in, line) || line.empty() || line == "\r") {
        throw DataError("empty dataset: no header");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) {
        line.erase(0, 3);  // UTF-8 BOM
    }
    const auto header = io::split_csv_line(line);
    const auto action_col = std::find(header.begin(), header.end(), "a0");
    if (action_col == header.end()) {
        throw SchemaError("missing 'a0' column");
    }
    const auto k = static_cast<std::size_t>(action_col - header.begin());
    if (k == 0) {
        throw SchemaError("no s0 columns before 'a0'");
    }
    const bool has_reward = header.size() == 2 * k + 2;
    if (header.size() != 2 * k + 1 && !has_reward) {
        throw SchemaError("expected " + std::to_string(2 * k + 1) + " or " +
                          std::to_string(2 * k + 2) + " columns, got " +
                          std::to_string(header.size()));
    }
    if (has_reward && header.back() != "reward") {
        throw SchemaError("last column must be 'reward', got '" + header.back() + "'");
    }
    std::vector<std::string> names(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto& c0 = header[j];
        const auto& c1 = header[k + 1 + j];
        if (c0.rfind("s0_", 0) != 0 || c0.size() == 3) {
            throw SchemaError("column " + std::to_string(j + 1) + " must be 's0_<label>', got '" +
                              c0 + "'");
        }
        if (c1 != "s1_" + c0.substr(3)) {
            throw SchemaError("column '" + c1 + "' does not match '" + c0 + "'");
        }
        names[j] = c0;
    }

    int reward_index = 0;
    if (const auto* col = std::get_if<std::string>(&reward_spec)) {
        if (!has_reward || *col != "reward") {
            throw SchemaError("reward column '" + *col + "' not present");
        }
    } else {
        reward_index = std::get<int>(reward_spec);
        if (reward_index < 1 || static_cast<std::size_t>(reward_index) > k) {
            throw ConfigError("reward index " + std::to_string(reward_index) +
                              " outside [1, " + std::to_string(k) + "]");
        }
    }

    std::vector<double> s0v, s1v, rv;
    std::vector<std::uint8_t> a0;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") {
            continue;
        }
        ++row;
        const auto cells = io::split_csv_line(line);
        if (cells.size() != header.size()) {
            throw ParseError(row, "expected " + std::to_string(header.size()) + " cells, got " +
                                      std::to_string(cells.size()));
        }
        const auto cell = [&](std::size_t c) {
            try {
                const double v = io::parse_double(cells[c]);
                if (!std::isfinite(v)) {
                    throw std::invalid_argument("non-finite");
                }
                return v;
            } catch (const std::invalid_argument&) {
                throw ParseError(row, "column '" + header[c] + "': non-numeric or missing cell '" +
                                          cells[c] + "'");
            }
        };
        for (std::size_t j = 0; j < k; ++j) s0v.push_back(cell(j));
        const auto& a = cells[k];
        if (a == "0") {
            a0.push_back(0);
        } else if (a == "1") {
            a0.push_back(1);
        } else {
            throw ParseError(row, "a0 must be 0 or 1, got '" + a + "'");
        }
        for (std::size_t j = 0; j < k; ++j) s1v.push_back(cell(k + 1 + j));
        rv.push_back(reward_index > 0 ? s1v[s1v.size() - k + (reward_index - 1)] : cell(2 * k + 1));
    }
    if (row == 0) {
        throw DataError("empty dataset: header only");
    }
    Matrix s0 = Eigen::Map<Matrix>(s0v.data(), static_cast<Eigen::Index>(row),
                                   static_cast<Eigen::Index>(k));
    Matrix s1 = Eigen::Map<Matrix>(s1v.data(), static_cast<Eigen::Index>(row),
                                   static_cast<Eigen::Index>(k));
    Vector reward = Eigen::Map<Vector>(rv.data(), static_cast<Eigen::Index>(row));
    return Dataset(std::move(s0), std::move(a0), std::move(s1), std::move(reward),
                   std::move(names));
}

Dataset load_dataset(const std::filesystem::path& path, const RewardSpec& reward_spec) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open dataset '" + path.string() + "'");
    }
    return parse_dataset(in, reward_spec);
}

void write_dataset(std::ostream& out, const Dataset& d) {
    const auto k = d.k();
    const auto& names = d.covariate_names();
    for (std::size_t j = 0; j < k; ++j) out << names[j] << ',';
    out << "a0";
    for (std::size_t j = 0; j < k; ++j) out << ",s1_" << names[j].substr(3);
    out << ",reward\n";
    for (std::size_t i = 0; i < d.n(); ++i) {
        for (std::size_t j = 0; j < k; ++j) out << io::format_double(d.s0()(i, j)) << ',';
        out << static_cast<int>(d.a0()[i]);
        for (std::size_t j = 0; j < k; ++j) out << ',' << io::format_double(d.s1()(i, j));
        out << ',' << io::format_double(d.reward()(i)) << '\n';
    }
}

void write_dataset(const std::filesystem::path& path, const Dataset& d) {
    io::atomic_write(path, [&](std::ostream& out) { write_dataset(out, d); });
}

Vector covariate_sd(const Dataset& d) {
    const auto n = static_cast<double>(d.n());
    if (d.n() < 2) {
        throw DataError("need at least 2 rows to estimate covariate scale");
    }
    const Eigen::RowVectorXd mean = d.s0().colwise().mean();
    const Matrix centered = d.s0().rowwise() - mean;
    return (centered.array().square().colwise().sum() / (n - 1.0)).sqrt().transpose();
}

Dataset apply_scaling(const Dataset& d, const Vector& factors) {
    if (static_cast<std::size_t>(factors.size()) != d.k()) {
        throw DimensionError("scale factor length " + std::to_string(factors.size()) +
                             " does not match K = " + std::to_string(d.k()));
    }
    if (!((factors.array() > 0.0).all() && factors.allFinite())) {
        throw DimensionError("scale factors must be finite and positive");
    }
    const Eigen::RowVectorXd inv = factors.cwiseInverse().transpose();
    Matrix s0 = d.s0().array().rowwise() * inv.array();
    Matrix s1 = d.s1().array().rowwise() * inv.array();
    return Dataset(std::move(s0), d.a0(), std::move(s1), d.reward(), d.covariate_names(), factors);
}

Dataset scale_dataset(const Dataset& d) {
    Vector sd = covariate_sd(d);
    const auto& names = d.covariate_names();
    for (std::size_t j = 0; j < d.k(); ++j) {
        if (names[j] == "s0_intercept") {
            sd(j) = 1.0;
        } else if (!(sd(j) > 0.0)) {
            throw DegenerateCovariateError(names[j]);
        }
    }
    return apply_scaling(d, sd);
}

Dataset unscale_dataset(const Dataset& d) {
    if (!d.scale_factors()) {
        return d;
    }
    const Eigen::RowVectorXd f = d.scale_factors()->transpose();
    Matrix s0 = d.s0().array().rowwise() * f.array();
    Matrix s1 = d.s1().array().rowwise() * f.array();
    return Dataset(std::move(s0), d.a0(), std::move(s1), d.reward(), d.covariate_names());
}

Dataset append_intercept(const Dataset& d) {
    const auto n = static_cast<Eigen::Index>(d.n());
    const auto k = static_cast<Eigen::Index>(d.k());
    Matrix s0(n, k + 1);
    Matrix s1(n, k + 1);
    s0.leftCols(k) = d.s0();
    s1.leftCols(k) = d.s1();
    s0.col(k).setOnes();
    s1.col(k).setOnes();
    auto names = d.covariate_names();
    names.emplace_back("s0_intercept");
    std::optional<Vector> factors;
    if (d.scale_factors()) {
        Vector f(k + 1);
        f << *d.scale_factors(), 1.0;
        factors = std::move(f);
    }
    return Dataset(std::move(s0), d.a0(), std::move(s1), d.reward(), std::move(names),
                   std::move(factors));
}

SplitPair split(const Dataset& d, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("split fraction must lie in (0, 1)");
    }
    if (d.n() < 2) {
        throw ConfigError("cannot split fewer than 2 rows");
    }
    const auto n_train = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(d.n())));
    if (n_train == 0 || n_train >= d.n()) {
        throw ConfigError("split fraction " + std::to_string(fraction) + " on " +
                          std::to_string(d.n()) + " rows leaves an empty partition");
    }
    std::vector<std::size_t> idx(d.n());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    SplitPair out;
    out.seed = seed;
    out.train_rows.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test_rows.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    std::sort(out.train_rows.begin(), out.train_rows.end());
    std::sort(out.test_rows.begin(), out.test_rows.end());
    out.train = d.subset(out.train_rows);
    out.test = d.subset(out.test_rows);
    return out;
}

}  // namespace relsparse
