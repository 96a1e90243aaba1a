#include "snprobe/infer.hpp"

#include "snprobe/detail/bytes.hpp"
#include "snprobe/error.hpp"
#include "snprobe/json_io.hpp"

#include <algorithm>
#include <cmath>

namespace snprobe {

std::string_view to_string(Aggregation a) {
    switch (a) {
    case Aggregation::majority: return "majority";
    case Aggregation::mean_raw: return "mean";
    case Aggregation::mean_bits: return "mean-bits";
    }
    return "majority";
}

Aggregation parse_aggregation(std::string_view s) {
    if (s == "majority") return Aggregation::majority;
    if (s == "mean" || s == "mean_raw" || s == "mean-raw") return Aggregation::mean_raw;
    if (s == "mean-bits" || s == "mean_bits") return Aggregation::mean_bits;
    throw InvalidArgument("unknown aggregation '" + std::string(s) +
                          "' (expected majority|mean|mean-bits)");
}

std::string_view to_string(TieBreak t) { return t == TieBreak::positive ? "positive" : "negative"; }

TieBreak parse_tie_break(std::string_view s) {
    if (s == "positive") return TieBreak::positive;
    if (s == "negative") return TieBreak::negative;
    throw InvalidArgument("unknown tie break '" + std::string(s) + "' (expected positive|negative)");
}

SnPredictionMatrix sn_predictions(const DumpHandle& dump, const SuperNeuronSet& set,
                                  TokenPolicy token_policy, ExecPolicy policy) {
    if (set.neurons.empty()) throw InvalidArgument("sn_predictions: empty super neuron set");
    const auto& h = dump.header();
    for (const auto& n : set.neurons) {
        if (n.layer >= h.num_layers || n.dim >= h.hidden_dim)
            throw DataError("super neuron (" + std::to_string(n.layer) + ", " +
                            std::to_string(n.dim) + ") outside dump shape " +
                            std::to_string(h.num_layers) + "x" + std::to_string(h.hidden_dim));
    }
    SnPredictionMatrix m;
    m.token_position_mismatch = h.token_position != set.token_position;
    if (m.token_position_mismatch && !token_policy.allow_mismatch)
        throw DataError(std::string("token position mismatch: set was probed on ") +
                        std::string(to_string(set.token_position)) + ", dump holds " +
                        std::string(to_string(h.token_position)) + " (override to proceed)");

    const std::uint32_t k_count = static_cast<std::uint32_t>(set.neurons.size());
    m.num_samples = h.num_samples;
    m.num_neurons = k_count;
    m.tau = set.config.tau;
    m.bits.resize(h.num_samples * k_count);
    m.raw.resize(h.num_samples * k_count);

    std::vector<std::size_t> offsets;
    offsets.reserve(k_count);
    for (const auto& n : set.neurons)
        offsets.push_back((std::size_t{n.layer} * h.hidden_dim + n.dim) * scalar_size(h.scalar_kind));

    parallel_blocks(h.num_samples, policy, [&](unsigned, std::uint64_t begin, std::uint64_t end) {
        for (std::uint64_t i = begin; i < end; ++i) {
            const std::byte* row = dump.sample_bytes(i).data();
            for (std::uint32_t k = 0; k < k_count; ++k) {
                const float v = detail::load_scalar(h.scalar_kind, row + offsets[k]);
                if (!std::isfinite(v))
                    throw DataError("non-finite activation at sample " + std::to_string(i) +
                                    ", layer " + std::to_string(set.neurons[k].layer) + ", dim " +
                                    std::to_string(set.neurons[k].dim));
                m.raw[i * k_count + k] = v;
                m.bits[i * k_count + k] = binarize(v, m.tau) ? 1 : 0;
            }
        }
    });
    return m;
}

std::vector<std::uint8_t> aggregate(const SnPredictionMatrix& matrix, AggregationMode mode,
                                    float tau) {
    const std::uint32_t k_count = matrix.num_neurons;
    if (k_count == 0) throw InvalidArgument("aggregate: K must be >= 1");
    std::vector<std::uint8_t> out(matrix.num_samples);
    for (std::uint64_t i = 0; i < matrix.num_samples; ++i) {
        switch (mode.mode) {
        case Aggregation::majority: {
            std::uint32_t ones = 0;
            for (std::uint32_t k = 0; k < k_count; ++k) ones += matrix.bit(i, k);
            const std::uint32_t zeros = k_count - ones;
            if (ones != zeros) out[i] = ones > zeros ? 1 : 0;
            else out[i] = mode.tie_break == TieBreak::positive ? 1 : 0;
            break;
        }
        case Aggregation::mean_raw: {
            double sum = 0.0;
            for (std::uint32_t k = 0; k < k_count; ++k) sum += matrix.value(i, k);
            out[i] = sum / k_count > static_cast<double>(tau) ? 1 : 0;
            break;
        }
        case Aggregation::mean_bits: {
            std::uint32_t ones = 0;
            for (std::uint32_t k = 0; k < k_count; ++k) ones += matrix.bit(i, k);
            out[i] = 2 * ones > k_count ? 1 : 0;
            break;
        }
        }
    }
    return out;
}

std::uint32_t early_exit_layer(const SuperNeuronSet& set) {
    if (set.neurons.empty()) throw InvalidArgument("early_exit_layer: empty super neuron set");
    std::uint32_t deepest = 0;
    for (const auto& n : set.neurons) deepest = std::max(deepest, n.layer);
    return deepest + 1;
}

void CostModel::validate() const {
    if (!(embed_s > 0.0) || !(prefill_s > 0.0) || !(decode_per_token_s > 0.0))
        throw InvalidArgument("cost model parameters must be positive");
}

double baseline_cost(std::uint32_t num_layers, std::uint32_t decode_tokens, const CostModel& cost) {
    cost.validate();
    if (num_layers == 0) throw InvalidArgument("cost model: L must be >= 1");
    if (decode_tokens == 0) throw InvalidArgument("cost model: decode tokens must be >= 1");
    return cost.embed_s + cost.prefill_s + cost.decode_per_token_s * decode_tokens;
}

double early_exit_cost(std::uint32_t num_layers, std::uint32_t exit_layer, const CostModel& cost) {
    cost.validate();
    if (exit_layer < 1 || exit_layer > num_layers)
        throw InvalidArgument("cost model: exit layer must lie in [1, L]");
    const double fraction = static_cast<double>(exit_layer) / num_layers;
    return cost.embed_s + cost.prefill_s * fraction;
}

double modeled_speedup(std::uint32_t num_layers, std::uint32_t exit_layer,
                       std::uint32_t decode_tokens, const CostModel& cost) {
    const double sn = early_exit_cost(num_layers, exit_layer, cost);
    return baseline_cost(num_layers, decode_tokens, cost) / sn;
}

ExitPlan plan_exit(const SuperNeuronSet& set, std::uint32_t decode_tokens, const CostModel& cost) {
    ExitPlan plan;
    plan.exit_layer = early_exit_layer(set);
    plan.num_layers = set.num_layers;
    plan.token_position = set.token_position;
    plan.decode_tokens = decode_tokens;
    plan.cost = cost;
    plan.modeled_speedup = modeled_speedup(set.num_layers, plan.exit_layer, decode_tokens, cost);
    return plan;
}

nlohmann::json to_json(const ExitPlan& plan) {
    return {
        {"exit_layer", plan.exit_layer},
        {"num_layers", plan.num_layers},
        {"token_position", to_string(plan.token_position)},
        {"modeled_speedup", sig9(plan.modeled_speedup)},
        {"speedup_model", "analytic"},
        {"cost_params",
         {{"layers_total", plan.num_layers},
          {"decode_tokens_baseline", plan.decode_tokens},
          {"embed_s", sig9(plan.cost.embed_s)},
          {"prefill_s", sig9(plan.cost.prefill_s)},
          {"decode_per_token_s", sig9(plan.cost.decode_per_token_s)}}},
    };
}

} // namespace snprobe
