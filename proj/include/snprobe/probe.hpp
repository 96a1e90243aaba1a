#pragma once

#include "snprobe/dump.hpp"
#include "snprobe/manifest.hpp"
#include "snprobe/parallel.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace snprobe {

enum class Metric { accuracy, precision, recall, f1 };

std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);

/// Eq. "activation > tau"; strict, so exact ties map to 0.
constexpr bool binarize(float value, float tau) noexcept { return value > tau; }

/// Zero denominators yield 0 so scores stay in [0, 1].
double metric_value(Metric m, std::uint64_t tp, std::uint64_t fp, std::uint64_t tn,
                    std::uint64_t fn) noexcept;

/// Per-neuron confusion counts over a dump, stored row-major L x D.
struct ConfusionTensor {
    std::uint32_t num_layers = 0;
    std::uint32_t hidden_dim = 0;
    std::uint64_t num_samples = 0;
    float tau = 0.0f;
    std::vector<std::uint32_t> tp, fp, tn, fn;

    std::size_t size() const noexcept { return tp.size(); }
    std::size_t index(NeuronIndex n) const noexcept {
        return std::size_t{n.layer} * hidden_dim + n.dim;
    }
};

/// Scans every sample; labels[i] is the target bit of sample i (ground truth
/// for probing, model_preds for agreement). Deterministic for any thread
/// count. Throws DataError naming (sample, layer, dim) on NaN/Inf.
ConfusionTensor confusion_counts(const DumpHandle& dump, std::span<const std::uint8_t> labels,
                                 float tau, ExecPolicy policy = {});
ConfusionTensor confusion_counts(const DumpHandle& dump, const SampleManifest& manifest, float tau,
                                 ExecPolicy policy = {});

struct ScoreTensor {
    std::uint32_t num_layers = 0;
    std::uint32_t hidden_dim = 0;
    Metric metric = Metric::accuracy;
    std::string source; // dump digest or path
    std::vector<float> scores;

    float at(NeuronIndex n) const { return scores[std::size_t{n.layer} * hidden_dim + n.dim]; }
    NeuronIndex neuron(std::size_t flat) const noexcept {
        return {static_cast<std::uint32_t>(flat / hidden_dim),
                static_cast<std::uint32_t>(flat % hidden_dim)};
    }
};

ScoreTensor score(const ConfusionTensor& counts, Metric m);

struct ScoredNeuron {
    NeuronIndex neuron;
    float score = 0.0f;
};

/// Argmax; ties resolve to the lexicographically smallest (layer, dim).
ScoredNeuron best_neuron(const ScoreTensor& scores);

/// The lambda threshold is either an explicit value or resolved from the
/// best score ("auto": best - auto_margin).
struct LambdaSpec {
    bool automatic = true;
    float value = 0.0f;

    static LambdaSpec fixed(float v) { return {false, v}; }
    static LambdaSpec auto_select() { return {true, 0.0f}; }
};

inline constexpr float kAutoLambdaMargin = 0.03f;

LambdaSpec parse_lambda(std::string_view s);
float resolve_lambda(const LambdaSpec& spec, const ScoreTensor& scores);

struct ProbeConfig {
    float tau = 0.0f;
    Metric metric = Metric::accuracy;
    LambdaSpec lambda = LambdaSpec::auto_select();
    std::optional<std::uint32_t> layer_cap;
};

struct Provenance {
    std::string dump_path;
    std::string dump_digest;
    std::string manifest_path;
    std::string manifest_digest;
    std::string dataset_id;
    std::string model_id;
};

/// Selected neurons, sorted (layer, dim), with their probing scores.
struct SuperNeuronSet {
    std::vector<NeuronIndex> neurons;
    std::vector<float> probe_scores;
    ProbeConfig config;
    float lambda = 0.0f; // resolved threshold actually applied
    TokenPosition token_position = TokenPosition::first_generated;
    std::uint32_t num_layers = 0;
    std::uint32_t hidden_dim = 0;
    Provenance provenance;

    std::size_t size() const noexcept { return neurons.size(); }
};

/// All neurons with score > lambda (and layer <= layer_cap when given).
/// Throws NoSuperNeuronsError when nothing survives.
SuperNeuronSet select(const ScoreTensor& scores, float lambda,
                      std::optional<std::uint32_t> layer_cap = std::nullopt);

/// Neurons per layer with score > lambda; no error on empty.
std::vector<std::uint32_t> layer_histogram(const ScoreTensor& scores, float lambda,
                                           std::optional<std::uint32_t> layer_cap = std::nullopt);

struct TauPoint {
    float tau = 0.0f;
    float best_accuracy = 0.0f;
    NeuronIndex best;
};

/// -3.0 .. 3.0 step 0.1, computed as k/10 so tau = 0 is exact.
std::vector<float> default_tau_grid();
/// start:stop:step inclusive, each point computed as start + k*step.
std::vector<float> parse_grid(std::string_view spec);

std::vector<TauPoint> sweep_tau(const DumpHandle& dump, std::span<const std::uint8_t> labels,
                                std::span<const float> grid, ExecPolicy policy = {});

struct LambdaPoint {
    float lambda = 0.0f;
    std::uint32_t count = 0; // K
    std::vector<std::uint32_t> per_layer;
    std::optional<std::uint32_t> min_layer; // shallowest layer with a selected neuron
    std::optional<std::uint32_t> exit_layer; // 1 + deepest selected layer
};

/// Enumerates lambda = start - k*step for k = 0.. while lambda >= start - floor_offset
/// (inclusive, small epsilon for float steps).
std::vector<LambdaPoint> sweep_lambda(const ScoreTensor& scores, float start, float floor_offset,
                                      float step);

struct ProbeResult {
    SuperNeuronSet set;
    ScoredNeuron best;
    ScoreTensor scores;
};

/// Full extraction: scan, score, resolve lambda, select.
ProbeResult probe(const DumpHandle& dump, const SampleManifest& manifest, const ProbeConfig& config,
                  ExecPolicy policy = {});

nlohmann::json to_json(const SuperNeuronSet& set);
SuperNeuronSet sn_set_from_json(const nlohmann::json& j);
SuperNeuronSet load_sn_set(const std::filesystem::path& path);

} // namespace snprobe
