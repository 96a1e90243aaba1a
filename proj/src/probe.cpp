#include "snprobe/probe.hpp"

#include "snprobe/detail/bytes.hpp"
#include "snprobe/error.hpp"
#include "snprobe/json_io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

namespace snprobe {

std::string_view to_string(Metric m) {
    switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::precision: return "precision";
    case Metric::recall: return "recall";
    case Metric::f1: return "f1";
    }
    return "accuracy";
}

Metric parse_metric(std::string_view s) {
    if (s == "accuracy" || s == "acc") return Metric::accuracy;
    if (s == "precision") return Metric::precision;
    if (s == "recall") return Metric::recall;
    if (s == "f1") return Metric::f1;
    throw InvalidArgument("unknown metric '" + std::string(s) +
                          "' (expected accuracy|precision|recall|f1)");
}

double metric_value(Metric m, std::uint64_t tp, std::uint64_t fp, std::uint64_t tn,
                    std::uint64_t fn) noexcept {
    const auto ratio = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    switch (m) {
    case Metric::accuracy: return ratio(tp + tn, tp + fp + tn + fn);
    case Metric::precision: return ratio(tp, tp + fp);
    case Metric::recall: return ratio(tp, tp + fn);
    case Metric::f1: {
        const double p = ratio(tp, tp + fp);
        const double r = ratio(tp, tp + fn);
        return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
    }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------
// Scan

namespace {

// bit 0: value > tau, bit 1: value is NaN/Inf
std::array<std::uint8_t, 65536> make_half_lut(float tau) {
    std::array<std::uint8_t, 65536> lut{};
    for (std::uint32_t h = 0; h < lut.size(); ++h) {
        const auto bits = static_cast<std::uint16_t>(h);
        std::uint8_t v = binarize(half_to_float(bits), tau) ? 1 : 0;
        if (!half_is_finite(bits)) v |= 2;
        lut[h] = v;
    }
    return lut;
}

bool scan_f32(const std::byte* p, std::size_t n, float tau, std::uint32_t* hits) {
    std::uint32_t nonfinite = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const auto bits = detail::load_le<std::uint32_t>(p + 4 * j);
        const float v = std::bit_cast<float>(bits);
        hits[j] += binarize(v, tau) ? 1u : 0u;
        nonfinite |= (bits & 0x7f800000u) == 0x7f800000u ? 1u : 0u;
    }
    return nonfinite == 0;
}

bool scan_f16(const std::byte* p, std::size_t n, const std::uint8_t* lut, std::uint32_t* hits) {
    std::uint8_t flags = 0;
    for (std::size_t j = 0; j < n; ++j) {
        const std::uint8_t v = lut[detail::load_le<std::uint16_t>(p + 2 * j)];
        hits[j] += v & 1u;
        flags |= v;
    }
    return (flags & 2u) == 0;
}

[[noreturn]] void report_nonfinite(const DumpHandle& dump, std::uint64_t sample) {
    const auto& h = dump.header();
    const auto bytes = dump.sample_bytes(sample);
    for (std::size_t j = 0; j < h.scalars_per_sample(); ++j) {
        const float v = detail::load_scalar(h.scalar_kind, bytes.data() + j * scalar_size(h.scalar_kind));
        if (!std::isfinite(v)) {
            throw DataError("non-finite activation " + std::to_string(v) + " at sample " +
                            std::to_string(sample) + ", layer " +
                            std::to_string(j / h.hidden_dim) + ", dim " +
                            std::to_string(j % h.hidden_dim));
        }
    }
    throw DataError("non-finite activation in sample " + std::to_string(sample));
}

void check_labels(const DumpHandle& dump, std::span<const std::uint8_t> labels) {
    if (labels.size() != dump.num_samples())
        throw DataError("label vector has " + std::to_string(labels.size()) +
                        " entries, dump has N=" + std::to_string(dump.num_samples()));
    for (auto y : labels)
        if (y > 1) throw DataError("labels must be 0/1");
}

} // namespace

ConfusionTensor confusion_counts(const DumpHandle& dump, std::span<const std::uint8_t> labels,
                                 float tau, ExecPolicy policy) {
    check_labels(dump, labels);
    if (std::isnan(tau)) throw InvalidArgument("tau must not be NaN");
    const auto& h = dump.header();
    const std::size_t cells = h.scalars_per_sample();
    const std::uint64_t n = h.num_samples;
    if (n > std::numeric_limits<std::uint32_t>::max())
        throw DataError("confusion_counts: more than 2^32-1 samples");

    const unsigned workers = worker_count(n, policy);
    // per worker: [positive hits | negative hits]
    std::vector<std::vector<std::uint32_t>> partial(workers);

    const bool f16 = h.scalar_kind == ScalarKind::f16;
    std::array<std::uint8_t, 65536> lut{};
    if (f16) lut = make_half_lut(tau);

    parallel_blocks(n, policy, [&](unsigned w, std::uint64_t begin, std::uint64_t end) {
        auto& hits = partial[w];
        hits.assign(2 * cells, 0);
        for (std::uint64_t i = begin; i < end; ++i) {
            std::uint32_t* dst = hits.data() + (labels[i] ? 0 : cells);
            const std::byte* src = dump.sample_bytes(i).data();
            const bool ok = f16 ? scan_f16(src, cells, lut.data(), dst) : scan_f32(src, cells, tau, dst);
            if (!ok) report_nonfinite(dump, i);
        }
    });

    ConfusionTensor c;
    c.num_layers = h.num_layers;
    c.hidden_dim = h.hidden_dim;
    c.num_samples = n;
    c.tau = tau;
    c.tp.assign(cells, 0);
    c.fp.assign(cells, 0);
    for (const auto& hits : partial) {
        if (hits.empty()) continue;
        for (std::size_t j = 0; j < cells; ++j) {
            c.tp[j] += hits[j];
            c.fp[j] += hits[cells + j];
        }
    }
    std::uint32_t num_pos = 0;
    for (auto y : labels) num_pos += y;
    const auto num_neg = static_cast<std::uint32_t>(n - num_pos);
    c.fn.resize(cells);
    c.tn.resize(cells);
    for (std::size_t j = 0; j < cells; ++j) {
        c.fn[j] = num_pos - c.tp[j];
        c.tn[j] = num_neg - c.fp[j];
    }
    return c;
}

ConfusionTensor confusion_counts(const DumpHandle& dump, const SampleManifest& manifest, float tau,
                                 ExecPolicy policy) {
    manifest.validate_against(dump.header());
    return confusion_counts(dump, manifest.labels, tau, policy);
}

// ---------------------------------------------------------------------------
// Scoring and selection

ScoreTensor score(const ConfusionTensor& counts, Metric m) {
    ScoreTensor s;
    s.num_layers = counts.num_layers;
    s.hidden_dim = counts.hidden_dim;
    s.metric = m;
    s.scores.resize(counts.size());
    for (std::size_t j = 0; j < counts.size(); ++j)
        s.scores[j] = static_cast<float>(
            metric_value(m, counts.tp[j], counts.fp[j], counts.tn[j], counts.fn[j]));
    return s;
}

ScoredNeuron best_neuron(const ScoreTensor& scores) {
    if (scores.scores.empty()) throw InvalidArgument("best_neuron: empty score tensor");
    const auto it = std::max_element(scores.scores.begin(), scores.scores.end());
    const auto flat = static_cast<std::size_t>(it - scores.scores.begin());
    return {scores.neuron(flat), *it};
}

LambdaSpec parse_lambda(std::string_view s) {
    if (s == "auto") return LambdaSpec::auto_select();
    float v = 0.0f;
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end)
        throw InvalidArgument("lambda must be a number in [0,1] or 'auto', got '" + std::string(s) + "'");
    if (!(v >= 0.0f && v <= 1.0f)) throw InvalidArgument("lambda must lie in [0,1]");
    return LambdaSpec::fixed(v);
}

float resolve_lambda(const LambdaSpec& spec, const ScoreTensor& scores) {
    if (!spec.automatic) {
        if (!(spec.value >= 0.0f && spec.value <= 1.0f))
            throw InvalidArgument("lambda must lie in [0,1]");
        return spec.value;
    }
    return std::max(0.0f, best_neuron(scores).score - kAutoLambdaMargin);
}

namespace {

void check_selection_args(const ScoreTensor& scores, float lambda,
                          std::optional<std::uint32_t> layer_cap) {
    if (!(lambda >= 0.0f && lambda <= 1.0f))
        throw InvalidArgument("lambda must lie in [0,1], got " + std::to_string(lambda));
    if (layer_cap && *layer_cap >= scores.num_layers)
        throw InvalidArgument("layer cap " + std::to_string(*layer_cap) + " must be < L=" +
                              std::to_string(scores.num_layers));
}

std::size_t selectable_end(const ScoreTensor& scores, std::optional<std::uint32_t> layer_cap) {
    if (!layer_cap) return scores.scores.size();
    return std::size_t{*layer_cap + 1} * scores.hidden_dim;
}

} // namespace

SuperNeuronSet select(const ScoreTensor& scores, float lambda,
                      std::optional<std::uint32_t> layer_cap) {
    check_selection_args(scores, lambda, layer_cap);
    SuperNeuronSet set;
    set.lambda = lambda;
    set.num_layers = scores.num_layers;
    set.hidden_dim = scores.hidden_dim;
    set.config.metric = scores.metric;
    set.config.lambda = LambdaSpec::fixed(lambda);
    set.config.layer_cap = layer_cap;

    const std::size_t end = selectable_end(scores, layer_cap);
    float max_score = 0.0f;
    for (std::size_t j = 0; j < end; ++j) {
        const float s = scores.scores[j];
        max_score = std::max(max_score, s);
        if (s > lambda) {
            set.neurons.push_back(scores.neuron(j));
            set.probe_scores.push_back(s);
        }
    }
    if (set.neurons.empty()) {
        std::ostringstream msg;
        msg << "no super neurons found: no " << to_string(scores.metric) << " score exceeds lambda="
            << lambda;
        if (layer_cap) msg << " within layers <= " << *layer_cap;
        msg << " (max available score " << max_score << ")";
        throw NoSuperNeuronsError(msg.str(), max_score);
    }
    return set;
}

std::vector<std::uint32_t> layer_histogram(const ScoreTensor& scores, float lambda,
                                           std::optional<std::uint32_t> layer_cap) {
    check_selection_args(scores, lambda, layer_cap);
    std::vector<std::uint32_t> counts(scores.num_layers, 0);
    const std::size_t end = selectable_end(scores, layer_cap);
    for (std::size_t j = 0; j < end; ++j)
        if (scores.scores[j] > lambda) ++counts[j / scores.hidden_dim];
    return counts;
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<float> default_tau_grid() {
    std::vector<float> grid;
    grid.reserve(61);
    for (int k = -30; k <= 30; ++k) grid.push_back(static_cast<float>(k / 10.0));
    return grid;
}

std::vector<float> parse_grid(std::string_view spec) {
    std::array<double, 3> parts{};
    std::size_t pos = 0;
    for (int i = 0; i < 3; ++i) {
        const auto colon = spec.find(':', pos);
        const auto field = spec.substr(pos, colon == std::string_view::npos ? spec.npos : colon - pos);
        if ((i < 2) == (colon == std::string_view::npos))
            throw InvalidArgument("grid must be start:stop:step, got '" + std::string(spec) + "'");
        const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), parts[i]);
        if (ec != std::errc{} || ptr != field.data() + field.size())
            throw InvalidArgument("grid component '" + std::string(field) + "' is not a number");
        pos = colon + 1;
    }
    const auto [start, stop, step] = parts;
    if (!(step > 0.0)) throw InvalidArgument("grid step must be > 0");
    if (stop < start) throw InvalidArgument("grid stop must be >= start");
    const auto count = static_cast<std::int64_t>(std::floor((stop - start) / step + 1e-9));
    std::vector<float> grid;
    for (std::int64_t k = 0; k <= count; ++k)
        grid.push_back(static_cast<float>(sig9(start + static_cast<double>(k) * step)));
    return grid;
}

std::vector<TauPoint> sweep_tau(const DumpHandle& dump, std::span<const std::uint8_t> labels,
                                std::span<const float> grid, ExecPolicy policy) {
    if (grid.empty()) throw InvalidArgument("sweep_tau: empty tau grid");
    std::vector<TauPoint> out;
    out.reserve(grid.size());
    for (float tau : grid) {
        const auto best = best_neuron(score(confusion_counts(dump, labels, tau, policy), Metric::accuracy));
        out.push_back({tau, best.score, best.neuron});
    }
    return out;
}

std::vector<LambdaPoint> sweep_lambda(const ScoreTensor& scores, float start, float floor_offset,
                                      float step) {
    if (!(start >= 0.0f && start <= 1.0f)) throw InvalidArgument("sweep_lambda: start must lie in [0,1]");
    if (!(step > 0.0f)) throw InvalidArgument("sweep_lambda: step must be > 0");
    if (!(floor_offset >= 0.0f)) throw InvalidArgument("sweep_lambda: floor offset must be >= 0");

    const auto steps = static_cast<std::int64_t>(
        std::floor(static_cast<double>(floor_offset) / static_cast<double>(step) + 1e-6));
    std::vector<LambdaPoint> out;
    for (std::int64_t k = 0; k <= steps; ++k) {
        const double lam = sig9(static_cast<double>(start) - static_cast<double>(k) * step);
        if (lam < 0.0) break;
        LambdaPoint p;
        p.lambda = static_cast<float>(lam);
        p.per_layer = layer_histogram(scores, p.lambda);
        for (std::uint32_t l = 0; l < p.per_layer.size(); ++l) {
            if (p.per_layer[l] == 0) continue;
            p.count += p.per_layer[l];
            if (!p.min_layer) p.min_layer = l;
            p.exit_layer = l + 1;
        }
        out.push_back(std::move(p));
    }
    if (out.empty()) throw InvalidArgument("sweep_lambda: empty enumeration");
    return out;
}

ProbeResult probe(const DumpHandle& dump, const SampleManifest& manifest, const ProbeConfig& config,
                  ExecPolicy policy) {
    auto scores = score(confusion_counts(dump, manifest, config.tau, policy), config.metric);
    scores.source = dump.path().string();
    const auto best = best_neuron(scores);
    const float lambda = resolve_lambda(config.lambda, scores);

    auto set = select(scores, lambda, config.layer_cap);
    set.config = config;
    set.token_position = dump.header().token_position;
    set.provenance.dump_path = dump.path().string();
    set.provenance.dataset_id = manifest.dataset_id;
    set.provenance.model_id = dump.header().model_id;
    return {std::move(set), best, std::move(scores)};
}

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json to_json(const SuperNeuronSet& set) {
    nlohmann::json neurons = nlohmann::json::array();
    for (const auto& n : set.neurons) neurons.push_back({n.layer, n.dim});
    nlohmann::json scores = nlohmann::json::array();
    for (float s : set.probe_scores) scores.push_back(sig9(s));

    nlohmann::json config = {
        {"tau", sig9(set.config.tau)},
        {"metric", to_string(set.config.metric)},
        {"lambda", sig9(set.lambda)},
        {"lambda_spec", set.config.lambda.automatic ? nlohmann::json("auto")
                                                    : nlohmann::json(sig9(set.config.lambda.value))},
        {"layer_cap", set.config.layer_cap ? nlohmann::json(*set.config.layer_cap) : nlohmann::json()},
        {"token_position", to_string(set.token_position)},
    };
    const auto& p = set.provenance;
    return {
        {"kind", "super_neuron_set"},
        {"config", std::move(config)},
        {"shape", {set.num_layers, set.hidden_dim}},
        {"neurons", std::move(neurons)},
        {"probe_scores", std::move(scores)},
        {"provenance",
         {{"dump", p.dump_path},
          {"dump_digest", p.dump_digest},
          {"manifest", p.manifest_path},
          {"manifest_digest", p.manifest_digest},
          {"dataset_id", p.dataset_id},
          {"model_id", p.model_id}}},
    };
}

SuperNeuronSet sn_set_from_json(const nlohmann::json& j) {
    SuperNeuronSet set;
    try {
        const auto& config = j.at("config");
        set.config.tau = config.at("tau").get<float>();
        set.config.metric = parse_metric(config.at("metric").get<std::string>());
        set.lambda = config.at("lambda").get<float>();
        const auto& spec = config.value("lambda_spec", nlohmann::json(set.lambda));
        set.config.lambda = spec.is_string() ? parse_lambda(spec.get<std::string>())
                                             : LambdaSpec::fixed(spec.get<float>());
        if (config.contains("layer_cap") && !config.at("layer_cap").is_null())
            set.config.layer_cap = config.at("layer_cap").get<std::uint32_t>();
        set.token_position = parse_token_position(config.value("token_position", "first_generated"));

        const auto& shape = j.at("shape");
        set.num_layers = shape.at(0).get<std::uint32_t>();
        set.hidden_dim = shape.at(1).get<std::uint32_t>();
        for (const auto& n : j.at("neurons"))
            set.neurons.push_back({n.at(0).get<std::uint32_t>(), n.at(1).get<std::uint32_t>()});
        set.probe_scores = j.value("probe_scores", std::vector<float>{});
        if (j.contains("provenance")) {
            const auto& p = j.at("provenance");
            set.provenance.dump_path = p.value("dump", "");
            set.provenance.dump_digest = p.value("dump_digest", "");
            set.provenance.manifest_path = p.value("manifest", "");
            set.provenance.manifest_digest = p.value("manifest_digest", "");
            set.provenance.dataset_id = p.value("dataset_id", "");
            set.provenance.model_id = p.value("model_id", "");
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("super neuron set: ") + e.what());
    } catch (const InvalidArgument& e) {
        throw FormatError(std::string("super neuron set: ") + e.what());
    }
    if (!set.probe_scores.empty() && set.probe_scores.size() != set.neurons.size())
        throw FormatError("super neuron set: probe_scores length differs from neurons");
    if (!std::is_sorted(set.neurons.begin(), set.neurons.end()))
        throw FormatError("super neuron set: neurons must be sorted by (layer, dim)");
    for (const auto& n : set.neurons)
        if (n.layer >= set.num_layers || n.dim >= set.hidden_dim)
            throw FormatError("super neuron set: neuron outside declared shape");
    return set;
}

SuperNeuronSet load_sn_set(const std::filesystem::path& path) {
    return sn_set_from_json(read_json_file(path));
}

} // namespace snprobe
