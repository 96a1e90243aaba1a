#pragma once

#include "snprobe/dump.hpp"
#include "snprobe/parallel.hpp"
#include "snprobe/probe.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace snprobe {

/// N x K gathered activations and their binarized values; column k is
/// neuron k of the set.
struct SnPredictionMatrix {
    std::uint64_t num_samples = 0;
    std::uint32_t num_neurons = 0;
    float tau = 0.0f;
    std::vector<std::uint8_t> bits;
    std::vector<float> raw;
    bool token_position_mismatch = false;

    std::uint8_t bit(std::uint64_t i, std::uint32_t k) const {
        return bits[i * num_neurons + k];
    }
    float value(std::uint64_t i, std::uint32_t k) const { return raw[i * num_neurons + k]; }
};

struct TokenPolicy {
    bool allow_mismatch = false;
};

/// Gathers the K set neurons for every sample and binarizes them with the
/// set's tau. A token-position mismatch throws DataError unless
/// policy.allow_mismatch, in which case the result carries the flag.
SnPredictionMatrix sn_predictions(const DumpHandle& dump, const SuperNeuronSet& set,
                                  TokenPolicy token_policy = {}, ExecPolicy policy = {});

enum class Aggregation {
    majority,  // 1 iff #ones > K/2, ties by TieBreak
    mean_raw,  // 1 iff mean(raw activations) > tau
    mean_bits, // 1 iff mean(bits) > 0.5
};
enum class TieBreak { positive, negative };

std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view s);
std::string_view to_string(TieBreak t);
TieBreak parse_tie_break(std::string_view s);

struct AggregationMode {
    Aggregation mode = Aggregation::majority;
    TieBreak tie_break = TieBreak::positive;
};

std::vector<std::uint8_t> aggregate(const SnPredictionMatrix& matrix, AggregationMode mode,
                                    float tau);

/// Number of decoder layers that must run before every set neuron exists;
/// 1 + deepest 0-based layer.
std::uint32_t early_exit_layer(const SuperNeuronSet& set);

/// Analytic runtime model. Defaults are per-stage seconds measured for a
/// 7B VLM with the stock huggingface pipeline: embed, full-depth prefill,
/// one full-depth decode step. Prefill and decode scale linearly with the
/// fraction of layers executed.
struct CostModel {
    double embed_s = 0.032;
    double prefill_s = 0.085;
    double decode_per_token_s = 0.025;

    void validate() const;
};

inline constexpr std::uint32_t kDefaultDecodeTokens = 128;

double baseline_cost(std::uint32_t num_layers, std::uint32_t decode_tokens, const CostModel& cost);
double early_exit_cost(std::uint32_t num_layers, std::uint32_t exit_layer, const CostModel& cost);

/// baseline_cost / early_exit_cost. Throws InvalidArgument on bad ranges.
double modeled_speedup(std::uint32_t num_layers, std::uint32_t exit_layer,
                       std::uint32_t decode_tokens, const CostModel& cost = {});

struct ExitPlan {
    std::uint32_t exit_layer = 0;
    std::uint32_t num_layers = 0;
    TokenPosition token_position = TokenPosition::first_generated;
    std::uint32_t decode_tokens = kDefaultDecodeTokens;
    CostModel cost;
    double modeled_speedup = 1.0;
};

ExitPlan plan_exit(const SuperNeuronSet& set, std::uint32_t decode_tokens = kDefaultDecodeTokens,
                   const CostModel& cost = {});

nlohmann::json to_json(const ExitPlan& plan);

} // namespace snprobe
