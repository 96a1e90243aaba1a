#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

namespace snprobe {

/// Rounds to 9 significant digits so serialized numbers stay short and
/// stable across platforms.
double sig9(double v);
/// Shortest decimal (at most 9 significant digits) that reads back as the
/// same float, so 0.1f serializes as 0.1.
double sig9(float v);
/// printf-style rendering of the two helpers above.
std::string format_sig9(double v);
std::string format_sig9(float v);

nlohmann::json read_json_file(const std::filesystem::path& path);
/// Two-space indented, trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);
std::string dump_json(const nlohmann::json& j);

} // namespace snprobe
