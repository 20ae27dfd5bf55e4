#pragma once

// File helpers shared by the persistence code. Not installed.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace nanoflow::io {

std::string read_text(const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename, so readers never observe a
/// partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// 17 significant digits, enough to round-trip any double.
std::string format_real(double v);

nlohmann::json read_json(const std::filesystem::path& path);

/// Reads a numeric CSV whose first line must equal `header` exactly.
std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, const std::string& header);

std::string csv_text(const std::string& header, const std::vector<std::span<const double>>& columns);

/// Typed JSON field access with path-qualified error messages.
template <class T>
T field(const nlohmann::json& j, const char* key, const std::filesystem::path& source);

}  // namespace nanoflow::io
