#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace riskctl {

/// Shortest round-trip-safe text for a double: printf("%.17g").
std::string format_double(double v);

/// Writes `content` to a temporary file next to `path`, then renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace riskctl
