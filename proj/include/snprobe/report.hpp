#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace snprobe {

struct ReportBundle {
    nlohmann::json report;                      // contents of report.json
    std::vector<std::filesystem::path> files;   // everything written, sorted
    std::size_t sources = 0;                    // run documents consumed
};

/// Collects every run document (JSON carrying a "kind" and a "run" block)
/// in run_dir and writes report.json, summary.md and CSV series into
/// out_dir. Throws IoError when run_dir is missing and DataError when it
/// holds no run documents.
ReportBundle build_report(const std::filesystem::path& run_dir, const std::filesystem::path& out_dir);

/// Markdown table with one row per method and one column per metric.
std::string summary_table(const nlohmann::json& rows);

} // namespace snprobe
