#pragma once

#include "snprobe/dump.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace snprobe {

struct ClassCounts {
    std::uint64_t num_pos = 0;
    std::uint64_t num_neg = 0;
};

/// Per-sample ground truth and the base model's own binary answers.
/// Stored next to the dump as JSON: {dataset_id, sample_ids, labels, model_preds}.
struct SampleManifest {
    std::string dataset_id;
    std::vector<std::string> sample_ids;
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> model_preds;

    std::size_t size() const noexcept { return sample_ids.size(); }
    ClassCounts class_counts() const noexcept;

    /// Equal lengths and 0/1 bits; throws DataError.
    void validate() const;
    /// validate() plus length == header N.
    void validate_against(const DumpHeader& header) const;
};

nlohmann::json to_json(const SampleManifest& m);
SampleManifest manifest_from_json(const nlohmann::json& j);

SampleManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const SampleManifest& m);

} // namespace snprobe
