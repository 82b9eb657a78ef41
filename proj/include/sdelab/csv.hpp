#pragma once

#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace sdelab {

/// Shortest-round-trip-safe rendering (%.17g) for data files.
std::string fmt_full(double v);
/// Six significant digits (%.6g) for summaries and reports.
std::string fmt6(double v);

/// Comma-separated row terminated by LF.
void write_row(std::ostream& os, std::initializer_list<std::string_view> cells);
void write_row(std::ostream& os, const std::vector<std::string>& cells);

/// Opens a file for binary writing; throws IoError when that fails.
std::ofstream open_output(const std::filesystem::path& path);

}  // namespace sdelab
