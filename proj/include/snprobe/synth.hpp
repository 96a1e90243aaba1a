#pragma once

#include "snprobe/dump.hpp"
#include "snprobe/manifest.hpp"
#include "snprobe/parallel.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace snprobe {

enum class Polarity { positive_means_yes, positive_means_no };
/// What a planted neuron tracks: the ground-truth label or the model's answer.
enum class PlantTarget { label, model_pred };

inline constexpr float kDefaultPlantMagnitude = 5.0f;

struct PlantSpec {
    NeuronIndex neuron;
    float fidelity = 1.0f; // p in (0.5, 1]
    Polarity polarity = Polarity::positive_means_yes;
    float magnitude = kDefaultPlantMagnitude;
    PlantTarget target = PlantTarget::label;
};

/// "layer:dim:p[:magnitude[:+|-[:label|model]]]"
PlantSpec parse_plant(std::string_view spec);

struct SynthConfig {
    std::uint64_t seed = 0;
    std::uint64_t num_samples = 0;
    std::uint32_t num_layers = 0;
    std::uint32_t hidden_dim = 0;
    std::vector<PlantSpec> plants;
    float noise_std = 1.0f;
    float label_balance = 0.5f;
    float model_accuracy = 0.7f;
    ScalarKind scalar_kind = ScalarKind::f32;
    TokenPosition token_position = TokenPosition::first_generated;
    Split split = Split::probe;
    std::string model_id = "synthetic";
    std::string dataset_id = "synthetic";

    void validate() const;
};

struct PlantOutcome {
    PlantSpec spec;
    std::uint64_t intended_agreements = 0; // samples where the agreement draw succeeded
    std::uint64_t realized_agreements = 0; // samples where (stored value > 0) matches the target
    double realized_agreement = 0.0;
};

struct AnswerKey {
    SynthConfig config;
    std::uint64_t num_positive = 0;
    std::vector<PlantOutcome> plants;
    std::string dump_digest;
    std::string manifest_digest;
};

struct SynthArtifacts {
    std::filesystem::path dump_path;
    std::filesystem::path manifest_path;
    std::filesystem::path key_path;
    AnswerKey key;
};

/// Writes <prefix>.snd, <prefix>.manifest.json and <prefix>.key.json.
/// Output bytes depend only on the config, never on the thread count.
SynthArtifacts generate(const SynthConfig& config, const std::filesystem::path& prefix,
                        ExecPolicy policy = {});

/// In-memory variant of the label/model-answer draw, exposed for tests.
SampleManifest synth_manifest(const SynthConfig& config);

struct KeyCheckReport {
    bool ok = true;
    std::vector<std::string> mismatches;
};

KeyCheckReport answer_key_check(const DumpHandle& dump, const SampleManifest& manifest,
                                const AnswerKey& key);

nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const AnswerKey& key);
AnswerKey answer_key_from_json(const nlohmann::json& j);
AnswerKey load_answer_key(const std::filesystem::path& path);

} // namespace snprobe
