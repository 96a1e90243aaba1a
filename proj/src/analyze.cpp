#include "snprobe/analyze.hpp"

#include "snprobe/error.hpp"
#include "snprobe/json_io.hpp"

#include <algorithm>
#include <iterator>

namespace snprobe {

MetricReport metrics(std::span<const std::uint8_t> preds, std::span<const std::uint8_t> labels) {
    if (preds.size() != labels.size())
        throw DataError("metrics: " + std::to_string(preds.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
    MetricReport r;
    r.n = preds.size();
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] != 0;
        const bool y = labels[i] != 0;
        if (p && y) ++r.tp;
        else if (p) ++r.fp;
        else if (y) ++r.fn;
        else ++r.tn;
    }
    r.positives = r.tp + r.fn;
    r.accuracy = metric_value(Metric::accuracy, r.tp, r.fp, r.tn, r.fn);
    r.precision = metric_value(Metric::precision, r.tp, r.fp, r.tn, r.fn);
    r.recall = metric_value(Metric::recall, r.tp, r.fp, r.tn, r.fn);
    r.f1 = metric_value(Metric::f1, r.tp, r.fp, r.tn, r.fn);
    return r;
}

double agreement_rate(const SnPredictionMatrix& matrix, std::span<const std::uint8_t> model_preds) {
    if (model_preds.size() != matrix.num_samples)
        throw DataError("agreement_rate: " + std::to_string(model_preds.size()) +
                        " model answers for " + std::to_string(matrix.num_samples) + " samples");
    if (matrix.num_neurons == 0 || matrix.num_samples == 0)
        throw DataError("agreement_rate: empty prediction matrix");
    std::uint64_t matches = 0;
    for (std::uint64_t i = 0; i < matrix.num_samples; ++i)
        for (std::uint32_t k = 0; k < matrix.num_neurons; ++k)
            matches += (matrix.bit(i, k) != 0) == (model_preds[i] != 0) ? 1 : 0;
    return static_cast<double>(matches) /
           (static_cast<double>(matrix.num_samples) * matrix.num_neurons);
}

double aggregated_agreement(std::span<const std::uint8_t> preds,
                            std::span<const std::uint8_t> model_preds) {
    return metrics(preds, model_preds).accuracy;
}

AgreementCurve ar_curve(const ScoreTensor& scores, const DumpHandle& dump,
                        const SampleManifest& manifest, std::span<const float> grid, float tau,
                        ExecPolicy policy) {
    manifest.validate_against(dump.header());
    if (scores.num_layers != dump.num_layers() || scores.hidden_dim != dump.hidden_dim())
        throw DataError("ar_curve: score tensor shape differs from the evaluation dump");
    for (float lam : grid)
        if (!(lam >= 0.0f && lam <= 1.0f)) throw InvalidArgument("ar_curve: grid must lie in [0,1]");

    // tp + tn against model_preds = per-neuron agreement count
    const auto agree = confusion_counts(dump, manifest.model_preds, tau, policy);
    const double n = static_cast<double>(dump.num_samples());

    AgreementCurve curve;
    for (float lam : grid) {
        std::uint64_t matches = 0;
        std::uint32_t k = 0;
        for (std::size_t j = 0; j < scores.scores.size(); ++j) {
            if (scores.scores[j] > lam) {
                matches += std::uint64_t{agree.tp[j]} + agree.tn[j];
                ++k;
            }
        }
        if (k == 0) {
            curve.skipped.push_back(lam);
            continue;
        }
        curve.points.push_back({lam, static_cast<double>(matches) / (n * k), k});
    }
    return curve;
}

std::vector<std::uint32_t> per_layer_counts(const SuperNeuronSet& set) {
    std::vector<std::uint32_t> counts(set.num_layers, 0);
    for (const auto& n : set.neurons) {
        if (n.layer >= set.num_layers) throw DataError("per_layer_counts: neuron outside set shape");
        ++counts[n.layer];
    }
    return counts;
}

std::vector<std::uint32_t> per_layer_counts(const ScoreTensor& scores, float lambda,
                                            std::optional<std::uint32_t> layer_cap) {
    return per_layer_counts(select(scores, lambda, layer_cap));
}

NeuronOverlap overlap(std::span<const SuperNeuronSet> sets) {
    if (sets.size() < 2) throw InvalidArgument("overlap: need at least two sets");
    NeuronOverlap out;
    out.num_layers = sets.front().num_layers;
    out.hidden_dim = sets.front().hidden_dim;
    out.neurons = sets.front().neurons;
    std::sort(out.neurons.begin(), out.neurons.end());
    for (const auto& s : sets.subspan(1)) {
        if (s.num_layers != out.num_layers || s.hidden_dim != out.hidden_dim)
            throw DataError("overlap: sets have different shapes (" + std::to_string(out.num_layers) +
                            "x" + std::to_string(out.hidden_dim) + " vs " +
                            std::to_string(s.num_layers) + "x" + std::to_string(s.hidden_dim) + ")");
        auto other = s.neurons;
        std::sort(other.begin(), other.end());
        std::vector<NeuronIndex> next;
        std::set_intersection(out.neurons.begin(), out.neurons.end(), other.begin(), other.end(),
                              std::back_inserter(next));
        out.neurons = std::move(next);
    }
    return out;
}

TransferReport transfer_eval(const SuperNeuronSet& set, const DumpHandle& target,
                             const SampleManifest& target_manifest, AggregationMode mode,
                             TokenPolicy token_policy, ExecPolicy policy) {
    target_manifest.validate_against(target.header());
    const auto matrix = sn_predictions(target, set, token_policy, policy);
    const auto preds = aggregate(matrix, mode, set.config.tau);

    TransferReport r;
    r.sn = metrics(preds, target_manifest.labels);
    r.model = metrics(target_manifest.model_preds, target_manifest.labels);
    r.exit_layer = early_exit_layer(set);
    r.token_position_mismatch = matrix.token_position_mismatch;
    r.source_dump = set.provenance.dump_path;
    r.source_dataset = set.provenance.dataset_id;
    r.target_dump = target.path().string();
    r.target_dataset = target_manifest.dataset_id;
    return r;
}

nlohmann::json to_json(const MetricReport& r) {
    return {{"accuracy", sig9(r.accuracy)},
            {"precision", sig9(r.precision)},
            {"recall", sig9(r.recall)},
            {"f1", sig9(r.f1)},
            {"n", r.n},
            {"positives", r.positives},
            {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}}};
}

MetricReport metric_report_from_json(const nlohmann::json& j) {
    try {
        MetricReport r;
        const auto& c = j.at("confusion");
        r.tp = c.at("tp").get<std::uint64_t>();
        r.fp = c.at("fp").get<std::uint64_t>();
        r.tn = c.at("tn").get<std::uint64_t>();
        r.fn = c.at("fn").get<std::uint64_t>();
        r.n = r.tp + r.fp + r.tn + r.fn;
        r.positives = r.tp + r.fn;
        r.accuracy = metric_value(Metric::accuracy, r.tp, r.fp, r.tn, r.fn);
        r.precision = metric_value(Metric::precision, r.tp, r.fp, r.tn, r.fn);
        r.recall = metric_value(Metric::recall, r.tp, r.fp, r.tn, r.fn);
        r.f1 = metric_value(Metric::f1, r.tp, r.fp, r.tn, r.fn);
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metric report: ") + e.what());
    }
}

} // namespace snprobe
