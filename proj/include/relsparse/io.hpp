#pragma once

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace relsparse::io {

/// Shortest round-trip representation (17 significant digits at most).
std::string format_double(double x);

/// Strict full-string double parse; throws std::invalid_argument.
double parse_double(std::string_view s);

std::vector<std::string> split_csv_line(std::string_view line);

/// Writes through `fill` into `<path>.tmp` and renames over `path`, so
/// readers never observe a partially written file.
void atomic_write(const std::filesystem::path& path,
                  const std::function<void(std::ostream&)>& fill);

}  // namespace relsparse::io
