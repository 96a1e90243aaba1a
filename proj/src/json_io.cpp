#include "snprobe/json_io.hpp"

#include "snprobe/error.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace snprobe {

double sig9(double v) {
    if (!std::isfinite(v) || v == 0.0) return v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

double sig9(float v) {
    if (!std::isfinite(v) || v == 0.0f) return v;
    char buf[32];
    for (int digits = 6; digits < 9; ++digits) {
        std::snprintf(buf, sizeof buf, "%.*g", digits, static_cast<double>(v));
        const double d = std::strtod(buf, nullptr);
        if (std::strtof(buf, nullptr) == v && static_cast<float>(d) == v) return d;
    }
    return sig9(static_cast<double>(v));
}

std::string format_sig9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", sig9(v));
    return buf;
}

std::string format_sig9(float v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", sig9(v));
    return buf;
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << dump_json(j);
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace snprobe
