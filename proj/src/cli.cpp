#include "snprobe/cli.hpp"

#include "snprobe/analyze.hpp"
#include "snprobe/digest.hpp"
#include "snprobe/dump.hpp"
#include "snprobe/error.hpp"
#include "snprobe/infer.hpp"
#include "snprobe/json_io.hpp"
#include "snprobe/manifest.hpp"
#include "snprobe/probe.hpp"
#include "snprobe/report.hpp"
#include "snprobe/synth.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

namespace snprobe::cli {

namespace {

constexpr const char* kToolVersion = "0.1.0";

using nlohmann::json;


// Records input files (path + SHA-256) for provenance.
class Inputs {
  public:
    void add(const std::string& role, const std::string& path) {
        entries_[role] = {{"path", path}, {"sha256", sha256_file(path)}};
    }
    void add_list(const std::string& role, const std::vector<std::string>& paths) {
        json arr = json::array();
        for (const auto& p : paths) arr.push_back({{"path", p}, {"sha256", sha256_file(p)}});
        entries_[role] = std::move(arr);
    }
    const json& get(const std::string& role) const { return entries_.at(role); }
    std::string digest(const std::string& role) const {
        return entries_.at(role).at("sha256").get<std::string>();
    }
    const json& all() const { return entries_; }

  private:
    json entries_ = json::object();
};

struct Context {
    std::ostream& out;
    std::ostream& err;
    bool json_output = false;
    ExecPolicy policy;
    bool verbose = false;
    CLI::App* sub = nullptr;
};

// Skipped when recording the resolved config: they do not change results,
// and leaving out the destination keeps files comparable across runs.
bool is_execution_option(const CLI::Option* opt) {
    const auto& names = opt->get_lnames();
    return std::any_of(names.begin(), names.end(), [](const std::string& n) {
        return n == "help" || n == "out" || n == "threads" || n == "json" || n == "config" || n == "verbose";
    });
}

json resolved_config(const CLI::App& sub) {
    json cfg = json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (is_execution_option(opt)) continue;
        const std::string name = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
        if (opt->count() > 0) {
            const auto& r = opt->results();
            if (opt->get_expected_min() == 0) cfg[name] = true;
            else if (r.size() == 1 && opt->get_items_expected_max() <= 1) cfg[name] = r.front();
            else cfg[name] = r;
        } else if (opt->get_expected_min() == 0) {
            cfg[name] = false;
        } else if (!opt->get_default_str().empty()) {
            cfg[name] = opt->get_default_str();
        } else {
            cfg[name] = nullptr;
        }
    }
    return cfg;
}

json run_block(const Context& ctx, const Inputs& inputs) {
    return {{"tool", "snprobe"},
            {"version", kToolVersion},
            {"subcommand", ctx.sub->get_name()},
            {"config", resolved_config(*ctx.sub)},
            {"inputs", inputs.all()}};
}

void emit(const Context& ctx, json doc, const Inputs& inputs, const std::string& out_path,
          const std::string& summary) {
    doc["run"] = run_block(ctx, inputs);
    if (!out_path.empty()) write_json_file(out_path, doc);
    if (ctx.json_output) ctx.out << dump_json(doc);
    else if (!summary.empty()) ctx.out << summary;
}

TokenPolicy token_policy(bool allow) { return TokenPolicy{allow}; }

void warn_token_mismatch(const Context& ctx, bool mismatch) {
    if (mismatch)
        ctx.err << "warning: token position of the dump differs from the super neuron set "
                   "(proceeding on explicit override)\n";
}

json neuron_json(NeuronIndex n) { return json::array({n.layer, n.dim}); }

json u32_array(const std::vector<std::uint32_t>& v) { return json(v); }

std::uint8_t as_bit(const json& v) {
    if (!v.is_number_integer() || v.get<long long>() < 0 || v.get<long long>() > 1)
        throw DataError("prediction file contains a non-binary value");
    return static_cast<std::uint8_t>(v.get<int>());
}

// ---------------------------------------------------------------------------
// Subcommand options

struct StatsOpts {
    std::string dump, out;
};

struct SweepTauOpts {
    std::string dump, manifest, grid, out;
};

struct ProbeOpts {
    std::string dump, manifest, metric = "accuracy", lambda = "auto", out;
    float tau = 0.0f;
    std::optional<std::uint32_t> layer_cap;
    std::optional<float> sweep_start;
    float sweep_offset = 0.03f;
    float sweep_step = 0.01f;
};

struct InferOpts {
    std::string dump, sn, manifest, mode = "majority", tie = "positive", out;
    bool allow_mismatch = false;
    std::uint32_t decode_tokens = kDefaultDecodeTokens;
};

struct EvalOpts {
    std::string preds, dump, sn, manifest, mode = "majority", tie = "positive", out;
    bool allow_mismatch = false;
    std::uint32_t decode_tokens = kDefaultDecodeTokens;
};

struct AgreementOpts {
    std::string dump, manifest, eval_dump, eval_manifest, grid = "0.5:1.0:0.01", metric = "accuracy";
    std::string mode = "majority", tie = "positive", out;
    float tau = 0.0f;
    bool aggregated = false;
};

struct OverlapOpts {
    std::vector<std::string> sets;
    std::string out;
};

struct TransferOpts {
    std::string sn, dump, manifest, mode = "majority", tie = "positive", out;
    bool allow_mismatch = false;
};

struct SynthOpts {
    std::uint64_t seed = 0;
    std::uint64_t n = 0;
    std::uint32_t layers = 0, dim = 0;
    std::vector<std::string> plants;
    float noise = 1.0f, balance = 0.5f, model_acc = 0.7f;
    std::string scalar = "f32", token = "first", split = "probe", model_id = "synthetic";
    std::string dataset_id = "synthetic", out_prefix;
};

struct ReportOpts {
    std::string run_dir, out;
};

// ---------------------------------------------------------------------------
// Handlers

int cmd_stats(Context& ctx, const StatsOpts& o) {
    Inputs inputs;
    inputs.add("dump", o.dump);
    const auto dump = DumpHandle::open(o.dump);
    const auto st = dump_stats(dump);
    const auto& h = dump.header();
    json doc = {{"kind", "dump_stats"},
                {"header",
                 {{"num_samples", h.num_samples},
                  {"num_layers", h.num_layers},
                  {"hidden_dim", h.hidden_dim},
                  {"scalar_kind", to_string(h.scalar_kind)},
                  {"token_position", to_string(h.token_position)},
                  {"model_id", h.model_id},
                  {"dataset_id", h.dataset_id},
                  {"split", to_string(h.split)}}},
                {"stats",
                 {{"count", st.count},
                  {"mean", sig9(st.mean)},
                  {"std", sig9(st.std)},
                  {"min", sig9(st.min)},
                  {"max", sig9(st.max)}}}};
    std::ostringstream s;
    s << "N=" << h.num_samples << " L=" << h.num_layers << " D=" << h.hidden_dim << " ("
      << to_string(h.scalar_kind) << ", " << to_string(h.token_position) << ")\n"
      << "mean=" << format_sig9(st.mean) << " std=" << format_sig9(st.std) << " min=" << format_sig9(st.min)
      << " max=" << format_sig9(st.max) << "\n";
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

int cmd_sweep_tau(Context& ctx, const SweepTauOpts& o) {
    Inputs inputs;
    inputs.add("dump", o.dump);
    inputs.add("manifest", o.manifest);
    const auto dump = DumpHandle::open(o.dump);
    const auto manifest = load_manifest(o.manifest);
    manifest.validate_against(dump.header());
    const auto grid = o.grid.empty() ? default_tau_grid() : parse_grid(o.grid);
    const auto points = sweep_tau(dump, manifest.labels, grid, ctx.policy);
    const auto model = metrics(manifest.model_preds, manifest.labels);

    json series = json::array();
    std::size_t argmax = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto& p = points[i];
        if (p.best_accuracy > points[argmax].best_accuracy) argmax = i;
        series.push_back({{"tau", sig9(p.tau)},
                          {"best_accuracy", sig9(p.best_accuracy)},
                          {"best_neuron", neuron_json(p.best)}});
    }
    json doc = {{"kind", "tau_sweep"},
                {"points", std::move(series)},
                {"argmax_tau", sig9(points[argmax].tau)},
                {"model_accuracy", sig9(model.accuracy)}};
    std::ostringstream s;
    s << points.size() << " tau points; max accuracy " << format_sig9(points[argmax].best_accuracy)
      << " at tau=" << format_sig9(points[argmax].tau) << " (model " << format_sig9(model.accuracy) << ")\n";
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

int cmd_probe(Context& ctx, const ProbeOpts& o) {
    ProbeConfig config;
    config.tau = o.tau;
    config.metric = parse_metric(o.metric);
    config.lambda = parse_lambda(o.lambda);
    config.layer_cap = o.layer_cap;

    Inputs inputs;
    inputs.add("dump", o.dump);
    inputs.add("manifest", o.manifest);
    const auto dump = DumpHandle::open(o.dump);
    const auto manifest = load_manifest(o.manifest);

    auto result = probe(dump, manifest, config, ctx.policy);
    auto& set = result.set;
    set.provenance.dump_digest = inputs.digest("dump");
    set.provenance.manifest_path = o.manifest;
    set.provenance.manifest_digest = inputs.digest("manifest");

    const float sweep_start = o.sweep_start.value_or(result.best.score);
    const auto sweep = sweep_lambda(result.scores, std::clamp(sweep_start, 0.0f, 1.0f),
                                    o.sweep_offset, o.sweep_step);
    json sweep_json = json::array();
    for (const auto& p : sweep) {
        sweep_json.push_back({{"lambda", sig9(p.lambda)},
                              {"k", p.count},
                              {"per_layer", u32_array(p.per_layer)},
                              {"min_layer", p.min_layer ? json(*p.min_layer) : json()},
                              {"exit_layer", p.exit_layer ? json(*p.exit_layer) : json()}});
    }

    json doc = to_json(set);
    doc["best_neuron"] = {{"neuron", neuron_json(result.best.neuron)}, {"score", sig9(result.best.score)}};
    doc["per_layer_counts"] = u32_array(per_layer_counts(set));
    doc["exit_layer"] = early_exit_layer(set);
    doc["lambda_sweep"] = {{"start", sig9(sweep_start)},
                           {"floor_offset", sig9(o.sweep_offset)},
                           {"step", sig9(o.sweep_step)},
                           {"points", std::move(sweep_json)}};
    doc["model_metrics"] = to_json(metrics(manifest.model_preds, manifest.labels));

    std::ostringstream s;
    s << "selected K=" << set.size() << " super neurons at lambda=" << format_sig9(set.lambda) << " ("
      << to_string(config.metric) << ", tau=" << format_sig9(config.tau) << ")\n"
      << "best neuron (" << result.best.neuron.layer << ", " << result.best.neuron.dim
      << ") score " << format_sig9(result.best.score) << "; exit layer " << early_exit_layer(set) << "\n";
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

json predictions_doc(const SuperNeuronSet& set, const std::vector<std::uint8_t>& preds,
                     const std::vector<std::string>& ids, AggregationMode mode, const json& sn_ref,
                     std::uint32_t decode_tokens) {
    return {{"kind", "predictions"},
            {"sample_ids", ids},
            {"predictions", preds},
            {"mode", to_string(mode.mode)},
            {"tie_break", to_string(mode.tie_break)},
            {"sn_ref", sn_ref},
            {"k", set.size()},
            {"exit_layer", early_exit_layer(set)},
            {"exit_plan", to_json(plan_exit(set, decode_tokens))}};
}

std::vector<std::string> index_ids(std::uint64_t n) {
    std::vector<std::string> ids;
    ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) ids.push_back(std::to_string(i));
    return ids;
}

int cmd_infer(Context& ctx, const InferOpts& o) {
    const AggregationMode mode{parse_aggregation(o.mode), parse_tie_break(o.tie)};
    Inputs inputs;
    inputs.add("dump", o.dump);
    inputs.add("sn", o.sn);
    if (!o.manifest.empty()) inputs.add("manifest", o.manifest);
    const auto dump = DumpHandle::open(o.dump);
    const auto set = load_sn_set(o.sn);

    const auto matrix = sn_predictions(dump, set, token_policy(o.allow_mismatch), ctx.policy);
    warn_token_mismatch(ctx, matrix.token_position_mismatch);
    const auto preds = aggregate(matrix, mode, set.config.tau);

    std::vector<std::string> ids;
    if (!o.manifest.empty()) {
        auto manifest = load_manifest(o.manifest);
        manifest.validate_against(dump.header());
        ids = std::move(manifest.sample_ids);
    } else {
        ids = index_ids(dump.num_samples());
    }
    auto doc = predictions_doc(set, preds, ids, mode, inputs.get("sn"), o.decode_tokens);
    doc["token_position_mismatch"] = matrix.token_position_mismatch;

    std::size_t positives = std::count(preds.begin(), preds.end(), std::uint8_t{1});
    std::ostringstream s;
    s << preds.size() << " predictions (" << positives << " positive) with K=" << set.size()
      << ", mode " << to_string(mode.mode) << "; exit layer " << early_exit_layer(set) << "\n";
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

json metric_row(const std::string& method, const MetricReport& r) {
    json row = to_json(r);
    row["method"] = method;
    return row;
}

std::string method_label(const SuperNeuronSet& set, AggregationMode mode) {
    std::string m = mode.mode == Aggregation::majority ? "maj. vote" : std::string(to_string(mode.mode));
    return "SN lambda=" + format_sig9(set.lambda) + " (" + m + ")";
}

std::string metrics_line(const std::string& label, const MetricReport& r) {
    return label + ": acc " + format_sig9(r.accuracy) + " prec " + format_sig9(r.precision) + " rec " +
           format_sig9(r.recall) + " f1 " + format_sig9(r.f1) + "\n";
}

int cmd_eval(Context& ctx, const EvalOpts& o) {
    const AggregationMode mode{parse_aggregation(o.mode), parse_tie_break(o.tie)};
    Inputs inputs;
    inputs.add("manifest", o.manifest);
    const auto manifest = load_manifest(o.manifest);
    const auto model = metrics(manifest.model_preds, manifest.labels);

    json rows = json::array({metric_row("model", model)});
    json doc = {{"kind", "eval"}};
    std::ostringstream s;
    s << metrics_line("model", model);

    if (!o.preds.empty()) {
        if (!o.dump.empty() || !o.sn.empty())
            throw InvalidArgument("eval: use either --preds or --dump/--sn, not both");
        inputs.add("preds", o.preds);
        const auto pj = read_json_file(o.preds);
        std::vector<std::uint8_t> preds;
        std::vector<std::string> ids;
        try {
            for (const auto& v : pj.at("predictions")) preds.push_back(as_bit(v));
            ids = pj.at("sample_ids").get<std::vector<std::string>>();
        } catch (const json::exception& e) {
            throw FormatError(std::string("predictions file: ") + e.what());
        }
        if (ids != manifest.sample_ids && ids != index_ids(manifest.size()))
            throw DataError("eval: prediction sample ids do not match the manifest");
        const auto r = metrics(preds, manifest.labels);
        auto row = metric_row("SN (" + pj.value("mode", std::string("?")) + ")", r);
        if (pj.contains("exit_layer")) row["exit_layer"] = pj.at("exit_layer");
        if (pj.contains("exit_plan")) row["modeled_speedup"] = pj.at("exit_plan").at("modeled_speedup");
        rows.push_back(std::move(row));
        doc["aggregated_agreement"] = sig9(aggregated_agreement(preds, manifest.model_preds));
        s << metrics_line("SN", r);
    } else {
        if (o.dump.empty() || o.sn.empty())
            throw InvalidArgument("eval: need --preds, or both --dump and --sn");
        inputs.add("dump", o.dump);
        inputs.add("sn", o.sn);
        const auto dump = DumpHandle::open(o.dump);
        manifest.validate_against(dump.header());
        const auto set = load_sn_set(o.sn);
        const auto matrix = sn_predictions(dump, set, token_policy(o.allow_mismatch), ctx.policy);
        warn_token_mismatch(ctx, matrix.token_position_mismatch);
        const auto preds = aggregate(matrix, mode, set.config.tau);
        const auto r = metrics(preds, manifest.labels);
        const auto plan = plan_exit(set, o.decode_tokens);
        auto row = metric_row(method_label(set, mode), r);
        row["k"] = set.size();
        row["exit_layer"] = plan.exit_layer;
        row["modeled_speedup"] = sig9(plan.modeled_speedup);
        rows.push_back(std::move(row));
        doc["agreement_rate"] = sig9(agreement_rate(matrix, manifest.model_preds));
        doc["aggregated_agreement"] = sig9(aggregated_agreement(preds, manifest.model_preds));
        doc["exit_plan"] = to_json(plan);
        doc["per_layer_counts"] = u32_array(per_layer_counts(set));
        s << metrics_line(method_label(set, mode), r) << "AR " << format_sig9(doc["agreement_rate"].get<double>())
          << "; exit layer " << plan.exit_layer << ", modeled speedup " << format_sig9(plan.modeled_speedup)
          << "x\n";
    }
    doc["rows"] = std::move(rows);
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

int cmd_agreement(Context& ctx, const AgreementOpts& o) {
    const auto metric = parse_metric(o.metric);
    const auto grid = parse_grid(o.grid);
    const AggregationMode mode{parse_aggregation(o.mode), parse_tie_break(o.tie)};
    Inputs inputs;
    inputs.add("dump", o.dump);
    inputs.add("manifest", o.manifest);
    if (o.eval_dump.empty() != o.eval_manifest.empty())
        throw InvalidArgument("agreement: --eval-dump and --eval-manifest go together");
    const auto probe_dump = DumpHandle::open(o.dump);
    const auto probe_manifest = load_manifest(o.manifest);
    auto scores = score(confusion_counts(probe_dump, probe_manifest, o.tau, ctx.policy), metric);

    std::optional<DumpHandle> eval_dump_storage;
    std::optional<SampleManifest> eval_manifest_storage;
    if (!o.eval_dump.empty()) {
        inputs.add("eval_dump", o.eval_dump);
        inputs.add("eval_manifest", o.eval_manifest);
        eval_dump_storage = DumpHandle::open(o.eval_dump);
        eval_manifest_storage = load_manifest(o.eval_manifest);
    }
    const DumpHandle& eval_dump = eval_dump_storage ? *eval_dump_storage : probe_dump;
    const SampleManifest& eval_manifest = eval_manifest_storage ? *eval_manifest_storage : probe_manifest;

    const auto curve = ar_curve(scores, eval_dump, eval_manifest, grid, o.tau, ctx.policy);
    for (float lam : curve.skipped)
        ctx.err << "notice: lambda=" << format_sig9(lam) << " selects no neuron; point skipped\n";

    json points = json::array();
    for (const auto& p : curve.points) {
        json row = {{"lambda", sig9(p.lambda)}, {"ar", sig9(p.ar)}, {"k", p.count}};
        if (o.aggregated) {
            auto set = select(scores, p.lambda);
            set.config.tau = o.tau;
            set.token_position = eval_dump.header().token_position;
            const auto matrix = sn_predictions(eval_dump, set, {}, ctx.policy);
            const auto preds = aggregate(matrix, mode, o.tau);
            row["ar_aggregated"] = sig9(aggregated_agreement(preds, eval_manifest.model_preds));
        }
        points.push_back(std::move(row));
    }
    json skipped = json::array();
    for (float lam : curve.skipped) skipped.push_back(sig9(lam));

    json doc = {{"kind", "agreement_curve"},
                {"metric", to_string(metric)},
                {"tau", sig9(o.tau)},
                {"points", std::move(points)},
                {"skipped", std::move(skipped)},
                {"model_accuracy", sig9(metrics(eval_manifest.model_preds, eval_manifest.labels).accuracy)}};
    if (o.aggregated) doc["ar_aggregated_note"] = "aggregated-prediction agreement; not the per-neuron AR";

    std::ostringstream s;
    s << curve.points.size() << " AR points (" << curve.skipped.size() << " skipped)\n";
    for (const auto& p : curve.points)
        s << "  lambda=" << format_sig9(p.lambda) << " K=" << p.count << " AR=" << format_sig9(p.ar) << "\n";
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

int cmd_overlap(Context& ctx, const OverlapOpts& o) {
    Inputs inputs;
    inputs.add_list("sets", o.sets);
    std::vector<SuperNeuronSet> sets;
    for (const auto& p : o.sets) sets.push_back(load_sn_set(p));
    const auto result = overlap(sets);

    json neurons = json::array();
    for (const auto& n : result.neurons) neurons.push_back(neuron_json(n));
    json sources = json::array();
    for (std::size_t i = 0; i < sets.size(); ++i)
        sources.push_back({{"path", o.sets[i]},
                           {"dataset_id", sets[i].provenance.dataset_id},
                           {"lambda", sig9(sets[i].lambda)},
                           {"k", sets[i].size()}});
    json doc = {{"kind", "overlap"},
                {"shape", {result.num_layers, result.hidden_dim}},
                {"neurons", std::move(neurons)},
                {"count", result.neurons.size()},
                {"empty", result.neurons.empty()},
                {"sources", std::move(sources)}};
    if (result.neurons.empty()) ctx.err << "notice: the sets share no neuron\n";
    std::ostringstream s;
    s << "intersection of " << sets.size() << " sets: " << result.neurons.size() << " neurons\n";
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

int cmd_transfer(Context& ctx, const TransferOpts& o) {
    const AggregationMode mode{parse_aggregation(o.mode), parse_tie_break(o.tie)};
    Inputs inputs;
    inputs.add("sn", o.sn);
    inputs.add("dump", o.dump);
    inputs.add("manifest", o.manifest);
    const auto set = load_sn_set(o.sn);
    const auto dump = DumpHandle::open(o.dump);
    const auto manifest = load_manifest(o.manifest);
    const auto r = transfer_eval(set, dump, manifest, mode, token_policy(o.allow_mismatch), ctx.policy);
    warn_token_mismatch(ctx, r.token_position_mismatch);

    auto sn_row = metric_row(method_label(set, mode), r.sn);
    sn_row["k"] = set.size();
    sn_row["exit_layer"] = r.exit_layer;
    json doc = {{"kind", "transfer"},
                {"rows", json::array({metric_row("model", r.model), std::move(sn_row)})},
                {"exit_layer", r.exit_layer},
                {"token_position_mismatch", r.token_position_mismatch},
                {"source", {{"dump", r.source_dump}, {"dump_digest", set.provenance.dump_digest}, {"dataset_id", r.source_dataset}}},
                {"target", {{"dump", r.target_dump}, {"dump_digest", inputs.digest("dump")}, {"dataset_id", r.target_dataset}}}};
    std::ostringstream s;
    s << "transfer " << (r.source_dataset.empty() ? "?" : r.source_dataset) << " -> " << r.target_dataset << "\n"
      << metrics_line("model", r.model) << metrics_line(method_label(set, mode), r.sn);
    emit(ctx, std::move(doc), inputs, o.out, s.str());
    return kExitOk;
}

int cmd_synth(Context& ctx, const SynthOpts& o) {
    SynthConfig c;
    c.seed = o.seed;
    c.num_samples = o.n;
    c.num_layers = o.layers;
    c.hidden_dim = o.dim;
    for (const auto& p : o.plants) c.plants.push_back(parse_plant(p));
    c.noise_std = o.noise;
    c.label_balance = o.balance;
    c.model_accuracy = o.model_acc;
    c.scalar_kind = parse_scalar_kind(o.scalar);
    c.token_position = parse_token_position(o.token);
    c.split = parse_split(o.split);
    c.model_id = o.model_id;
    c.dataset_id = o.dataset_id;

    const auto art = generate(c, o.out_prefix, ctx.policy);
    json doc = to_json(art.key);
    doc["kind"] = "synth";
    doc["files"] = {{"dump", art.dump_path.string()},
                    {"manifest", art.manifest_path.string()},
                    {"key", art.key_path.string()}};
    std::ostringstream s;
    s << "wrote " << art.dump_path.string() << ", " << art.manifest_path.string() << ", "
      << art.key_path.string() << "\n";
    for (const auto& p : art.key.plants)
        s << "  plant (" << p.spec.neuron.layer << ", " << p.spec.neuron.dim << ") p=" << format_sig9(p.spec.fidelity)
          << " realized agreement " << format_sig9(p.realized_agreement) << "\n";
    // stdout only: the key file written by generate() is the artifact
    emit(ctx, std::move(doc), Inputs{}, "", s.str());
    return kExitOk;
}

int cmd_report(Context& ctx, const ReportOpts& o) {
    const auto out_dir = o.out.empty() ? std::filesystem::path(o.run_dir) / "report" : std::filesystem::path(o.out);
    const auto bundle = build_report(o.run_dir, out_dir);
    std::ostringstream s;
    s << "report bundle in " << out_dir.string() << ": " << bundle.files.size() << " files from "
      << bundle.sources << " runs\n";
    if (ctx.json_output) ctx.out << dump_json(bundle.report);
    else ctx.out << s.str();
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Config file: flat `key = value` lines mirroring long flag names.

struct ConfigEntry {
    std::string key, value;
};

std::vector<ConfigEntry> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::vector<ConfigEntry> entries;
    std::string line;
    int lineno = 0;
    const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InvalidArgument(path + ":" + std::to_string(lineno) + ": expected key = value");
        ConfigEntry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1))};
        if (e.key.starts_with("--")) e.key.erase(0, 2);
        if (e.value.size() >= 2 && e.value.front() == '"' && e.value.back() == '"')
            e.value = e.value.substr(1, e.value.size() - 2);
        entries.push_back(std::move(e));
    }
    return entries;
}

bool user_gave(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.starts_with(flag + "=");
    });
}

std::vector<std::string> apply_config(CLI::App& app, std::vector<std::string> args) {
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        else if (args[i].starts_with("--config=")) config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;

    CLI::App* sub = nullptr;
    for (const auto& a : args) {
        for (CLI::App* s : app.get_subcommands({})) {
            if (s->get_name() == a) {
                sub = s;
                break;
            }
        }
        if (sub) break;
    }
    std::vector<std::string> extra;
    for (const auto& e : read_config_file(config_path)) {
        const std::string flag = "--" + e.key;
        const CLI::Option* opt = sub ? sub->get_option_no_throw(flag) : nullptr;
        if (!opt) opt = app.get_option_no_throw(flag);
        if (!opt) throw InvalidArgument("config file: unknown key '" + e.key + "'");
        if (user_gave(args, flag)) continue; // flags win
        if (opt->get_expected_min() == 0) {
            if (e.value == "true" || e.value == "1" || e.value == "yes") extra.push_back(flag);
        } else {
            extra.push_back(flag);
            extra.push_back(e.value);
        }
    }
    args.insert(args.end(), extra.begin(), extra.end());
    return args;
}

} // namespace

int run(std::span<const std::string> arg_span, std::ostream& out, std::ostream& err) {
    CLI::App app{"snprobe: discover, evaluate and analyze super neurons in activation dumps", "snprobe"};
    app.require_subcommand(1);
    app.fallthrough();

    Context ctx{out, err, false, ExecPolicy{0}, false, nullptr};
    std::string config_path;
    app.add_option("--threads", ctx.policy.threads, "Worker threads (0 = all cores)")
        ->envname("SNPROBE_THREADS")
        ->capture_default_str();
    app.add_flag("--json", ctx.json_output, "Machine-readable JSON on stdout");
    app.add_flag("-v,--verbose", ctx.verbose, "Progress diagnostics on stderr");
    app.add_option("--config", config_path, "Flat key = value file; command-line flags win");

    StatsOpts stats;
    auto* s_stats = app.add_subcommand("stats", "Streaming mean/std/min/max over a dump");
    s_stats->add_option("--dump", stats.dump)->required();
    s_stats->add_option("--out", stats.out);

    SweepTauOpts sweep;
    auto* s_sweep = app.add_subcommand("sweep-tau", "Best single-neuron accuracy per activation threshold");
    s_sweep->add_option("--dump", sweep.dump)->required();
    s_sweep->add_option("--manifest", sweep.manifest)->required();
    s_sweep->add_option("--grid", sweep.grid, "start:stop:step (default -3:3:0.1)");
    s_sweep->add_option("--out", sweep.out);

    ProbeOpts pr;
    auto* s_probe = app.add_subcommand("probe", "Score every neuron and select super neurons");
    s_probe->add_option("--dump", pr.dump)->required();
    s_probe->add_option("--manifest", pr.manifest)->required();
    s_probe->add_option("--tau", pr.tau)->capture_default_str();
    s_probe->add_option("--metric", pr.metric)->capture_default_str();
    s_probe->add_option("--lambda", pr.lambda, "Number in [0,1] or 'auto'")->capture_default_str();
    s_probe->add_option("--layer-cap", pr.layer_cap, "Only select from 0-based layers <= cap");
    s_probe->add_option("--sweep-start", pr.sweep_start, "Lambda sweep start (default: best score)");
    s_probe->add_option("--sweep-offset", pr.sweep_offset)->capture_default_str();
    s_probe->add_option("--sweep-step", pr.sweep_step)->capture_default_str();
    s_probe->add_option("--out", pr.out);

    InferOpts inf;
    auto* s_infer = app.add_subcommand("infer", "Apply a super neuron set to a dump");
    s_infer->add_option("--dump", inf.dump)->required();
    s_infer->add_option("--sn", inf.sn)->required();
    s_infer->add_option("--manifest", inf.manifest, "Optional; supplies sample ids");
    s_infer->add_option("--mode", inf.mode, "majority|mean|mean-bits")->capture_default_str();
    s_infer->add_option("--tie", inf.tie, "positive|negative")->capture_default_str();
    s_infer->add_flag("--allow-token-mismatch", inf.allow_mismatch);
    s_infer->add_option("--decode-tokens", inf.decode_tokens)->capture_default_str();
    s_infer->add_option("--out", inf.out);

    EvalOpts ev;
    auto* s_eval = app.add_subcommand("eval", "Accuracy/precision/recall/F1 against ground truth");
    s_eval->add_option("--manifest", ev.manifest)->required();
    s_eval->add_option("--preds", ev.preds);
    s_eval->add_option("--dump", ev.dump);
    s_eval->add_option("--sn", ev.sn);
    s_eval->add_option("--mode", ev.mode)->capture_default_str();
    s_eval->add_option("--tie", ev.tie)->capture_default_str();
    s_eval->add_flag("--allow-token-mismatch", ev.allow_mismatch);
    s_eval->add_option("--decode-tokens", ev.decode_tokens)->capture_default_str();
    s_eval->add_option("--out", ev.out);

    AgreementOpts ag;
    auto* s_agree = app.add_subcommand("agreement", "Agreement rate with the model across lambda");
    s_agree->add_option("--dump", ag.dump, "Probing dump (scores)")->required();
    s_agree->add_option("--manifest", ag.manifest)->required();
    s_agree->add_option("--eval-dump", ag.eval_dump, "Dump to measure AR on (default: --dump)");
    s_agree->add_option("--eval-manifest", ag.eval_manifest);
    s_agree->add_option("--grid", ag.grid)->capture_default_str();
    s_agree->add_option("--tau", ag.tau)->capture_default_str();
    s_agree->add_option("--metric", ag.metric)->capture_default_str();
    s_agree->add_flag("--aggregated", ag.aggregated, "Also report agreement of the aggregated prediction");
    s_agree->add_option("--mode", ag.mode)->capture_default_str();
    s_agree->add_option("--tie", ag.tie)->capture_default_str();
    s_agree->add_option("--out", ag.out);

    OverlapOpts ov;
    auto* s_overlap = app.add_subcommand("overlap", "Intersect super neuron sets");
    s_overlap->add_option("sets", ov.sets)->required()->expected(2, -1);
    s_overlap->add_option("--out", ov.out);

    TransferOpts tr;
    auto* s_transfer = app.add_subcommand("transfer", "Evaluate a set on a foreign dump");
    s_transfer->add_option("--sn", tr.sn)->required();
    s_transfer->add_option("--dump", tr.dump)->required();
    s_transfer->add_option("--manifest", tr.manifest)->required();
    s_transfer->add_option("--mode", tr.mode)->capture_default_str();
    s_transfer->add_option("--tie", tr.tie)->capture_default_str();
    s_transfer->add_flag("--allow-token-mismatch", tr.allow_mismatch);
    s_transfer->add_option("--out", tr.out);

    SynthOpts sy;
    auto* s_synth = app.add_subcommand("synth", "Generate a planted-neuron fixture");
    s_synth->add_option("--seed", sy.seed)->capture_default_str();
    s_synth->add_option("--n", sy.n)->required();
    s_synth->add_option("--layers", sy.layers)->required();
    s_synth->add_option("--dim", sy.dim)->required();
    s_synth->add_option("--plant", sy.plants, "layer:dim:p[:magnitude[:+|-[:label|model]]]");
    s_synth->add_option("--noise", sy.noise)->capture_default_str();
    s_synth->add_option("--balance", sy.balance)->capture_default_str();
    s_synth->add_option("--model-acc", sy.model_acc)->capture_default_str();
    s_synth->add_option("--scalar", sy.scalar, "f16|f32")->capture_default_str();
    s_synth->add_option("--token", sy.token, "first|last")->capture_default_str();
    s_synth->add_option("--split", sy.split, "probe|validation")->capture_default_str();
    s_synth->add_option("--model-id", sy.model_id)->capture_default_str();
    s_synth->add_option("--dataset-id", sy.dataset_id)->capture_default_str();
    s_synth->add_option("--out-prefix", sy.out_prefix)->required();

    ReportOpts rep;
    auto* s_report = app.add_subcommand("report", "Render CSV/JSON series and a summary table");
    s_report->add_option("--run-dir", rep.run_dir)->required();
    s_report->add_option("--out", rep.out, "Bundle directory (default <run-dir>/report)");

    const std::map<CLI::App*, std::function<int()>> handlers = {
        {s_stats, [&] { return cmd_stats(ctx, stats); }},
        {s_sweep, [&] { return cmd_sweep_tau(ctx, sweep); }},
        {s_probe, [&] { return cmd_probe(ctx, pr); }},
        {s_infer, [&] { return cmd_infer(ctx, inf); }},
        {s_eval, [&] { return cmd_eval(ctx, ev); }},
        {s_agree, [&] { return cmd_agreement(ctx, ag); }},
        {s_overlap, [&] { return cmd_overlap(ctx, ov); }},
        {s_transfer, [&] { return cmd_transfer(ctx, tr); }},
        {s_synth, [&] { return cmd_synth(ctx, sy); }},
        {s_report, [&] { return cmd_report(ctx, rep); }},
    };

    try {
        auto args = apply_config(app, {arg_span.begin(), arg_span.end()});
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }

    try {
        for (const auto& [sub, handler] : handlers) {
            if (sub->parsed()) {
                ctx.sub = sub;
                if (ctx.verbose)
                    err << "snprobe " << sub->get_name() << ": " << resolve_threads(ctx.policy) << " worker thread(s)\n";
                const auto t0 = std::chrono::steady_clock::now();
                const int code = handler();
                if (ctx.verbose)
                    err << "snprobe " << sub->get_name() << ": done in "
                        << format_sig9(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count())
                        << " s\n";
                return code;
            }
        }
        err << "error: no subcommand\n";
        return kExitUsage;
    } catch (const NoSuperNeuronsError& e) {
        err << "error: " << e.what() << "\n";
        return kExitNoSuperNeurons;
    } catch (const InvalidArgument& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
}

} // namespace snprobe::cli
