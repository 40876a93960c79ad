#include "relsparse/numeric.hpp"

#include "relsparse/error.hpp"

namespace relsparse {

double pairwise_sum(std::span<const double> values) noexcept {
    constexpr std::size_t block = 16;
    if (values.size() <= block) {
        double s = 0.0;
        for (double v : values) {
            s += v;
        }
        return s;
    }
    const std::size_t half = values.size() / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<double> make_grid(double lo, double hi, std::size_t count, bool log_spaced) {
    if (count == 0) {
        throw ConfigError("grid needs at least one point");
    }
    if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
        throw ConfigError("grid bounds must satisfy 0 < min <= max");
    }
    if (count == 1) {
        return {hi};
    }
    if (lo == hi) {
        throw ConfigError("grid with several points needs min < max");
    }
    std::vector<double> grid(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(count - 1);
        grid[i] = log_spaced ? std::exp(std::log(hi) + t * (std::log(lo) - std::log(hi)))
                             : hi + t * (lo - hi);
    }
    grid.front() = hi;
    grid.back() = lo;
    return grid;
}

}  // namespace relsparse
