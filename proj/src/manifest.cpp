#include "snprobe/manifest.hpp"

#include "snprobe/error.hpp"
#include "snprobe/json_io.hpp"

namespace snprobe {

ClassCounts SampleManifest::class_counts() const noexcept {
    ClassCounts c;
    for (auto y : labels) (y ? c.num_pos : c.num_neg) += 1;
    return c;
}

void SampleManifest::validate() const {
    if (labels.size() != sample_ids.size() || model_preds.size() != sample_ids.size())
        throw DataError("manifest '" + dataset_id + "': sample_ids/labels/model_preds lengths " +
                        std::to_string(sample_ids.size()) + "/" + std::to_string(labels.size()) +
                        "/" + std::to_string(model_preds.size()) + " differ");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 1 || model_preds[i] > 1)
            throw DataError("manifest '" + dataset_id + "': non-binary value at sample " +
                            std::to_string(i));
    }
}

void SampleManifest::validate_against(const DumpHeader& header) const {
    validate();
    if (size() != header.num_samples)
        throw DataError("manifest '" + dataset_id + "' has " + std::to_string(size()) +
                        " samples, dump has N=" + std::to_string(header.num_samples));
}

nlohmann::json to_json(const SampleManifest& m) {
    return {{"dataset_id", m.dataset_id},
            {"sample_ids", m.sample_ids},
            {"labels", m.labels},
            {"model_preds", m.model_preds}};
}

namespace {

std::vector<std::uint8_t> bits_from_json(const nlohmann::json& j, const char* key) {
    const auto& arr = j.at(key);
    if (!arr.is_array()) throw FormatError(std::string("manifest: '") + key + "' is not an array");
    std::vector<std::uint8_t> out;
    out.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 1)
            throw DataError(std::string("manifest: '") + key + "' contains a non-binary value");
        out.push_back(static_cast<std::uint8_t>(v.get<int>()));
    }
    return out;
}

} // namespace

SampleManifest manifest_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("manifest: top level must be an object");
    SampleManifest m;
    try {
        m.dataset_id = j.at("dataset_id").get<std::string>();
        m.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
        m.labels = bits_from_json(j, "labels");
        m.model_preds = bits_from_json(j, "model_preds");
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

SampleManifest load_manifest(const std::filesystem::path& path) {
    return manifest_from_json(read_json_file(path));
}

void save_manifest(const std::filesystem::path& path, const SampleManifest& m) {
    m.validate();
    write_json_file(path, to_json(m));
}

} // namespace snprobe
