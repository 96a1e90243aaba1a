#pragma once

#include "snprobe/dump.hpp"
#include "snprobe/infer.hpp"
#include "snprobe/manifest.hpp"
#include "snprobe/parallel.hpp"
#include "snprobe/probe.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace snprobe {

struct MetricReport {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t n = 0;
    std::uint64_t positives = 0;
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
};

MetricReport metrics(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels);

/// Mean over all (sample, neuron) pairs of [bit == model answer].
double agreement_rate(const SnPredictionMatrix& matrix, std::span<const std::uint8_t> model_preds);

/// Agreement of the aggregated prediction with the model. Convenience
/// variant; the per-neuron rate above is the reported AR.
double aggregated_agreement(std::span<const std::uint8_t> preds,
                            std::span<const std::uint8_t> model_preds);

struct AgreementPoint {
    float lambda = 0.0f;
    double ar = 0.0;
    std::uint32_t count = 0; // K
};

struct AgreementCurve {
    std::vector<AgreementPoint> points;
    std::vector<float> skipped; // lambdas that selected nothing
};

/// For each lambda, AR on `dump` over exactly the neurons whose `scores`
/// exceed lambda. One scan against model_preds; per-neuron agreement counts
/// are then summed per lambda.
AgreementCurve ar_curve(const ScoreTensor& scores, const DumpHandle& dump,
                        const SampleManifest& manifest, std::span<const float> grid, float tau,
                        ExecPolicy policy = {});

std::vector<std::uint32_t> per_layer_counts(const SuperNeuronSet& set);
/// Propagates NoSuperNeuronsError from select on empty selections.
std::vector<std::uint32_t> per_layer_counts(const ScoreTensor& scores, float lambda,
                                            std::optional<std::uint32_t> layer_cap = std::nullopt);

struct NeuronOverlap {
    std::uint32_t num_layers = 0;
    std::uint32_t hidden_dim = 0;
    std::vector<NeuronIndex> neurons; // may be empty
};

/// Exact intersection of >= 2 sets over identical (L, D).
NeuronOverlap overlap(std::span<const SuperNeuronSet> sets);

struct TransferReport {
    MetricReport sn;
    MetricReport model; // model_preds vs labels on the target
    std::uint32_t exit_layer = 0;
    bool token_position_mismatch = false;
    std::string source_dump;
    std::string source_dataset;
    std::string target_dump;
    std::string target_dataset;
};

TransferReport transfer_eval(const SuperNeuronSet& set, const DumpHandle& target,
                             const SampleManifest& target_manifest, AggregationMode mode,
                             TokenPolicy token_policy = {}, ExecPolicy policy = {});

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

} // namespace snprobe
