#include "snprobe/analyze.hpp"
#include "snprobe/cli.hpp"
#include "snprobe/dump.hpp"
#include "snprobe/error.hpp"
#include "snprobe/half.hpp"
#include "snprobe/infer.hpp"
#include "snprobe/json_io.hpp"
#include "snprobe/manifest.hpp"
#include "snprobe/probe.hpp"
#include "snprobe/synth.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace snprobe;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using BitArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

std::vector<std::uint8_t> to_bits(const BitArray& a) {
    if (a.ndim() != 1) throw InvalidArgument("expected a 1-D array of 0/1 values");
    return {a.data(), a.data() + a.size()};
}

py::array_t<std::uint8_t> bits_array(const std::vector<std::uint8_t>& v) {
    py::array_t<std::uint8_t> out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<float> grid_array(std::uint32_t layers, std::uint32_t dims, const std::vector<float>& v) {
    py::array_t<float> out({static_cast<py::ssize_t>(layers), static_cast<py::ssize_t>(dims)});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::array_t<std::uint32_t> count_array(std::uint32_t layers, std::uint32_t dims,
                                       const std::vector<std::uint32_t>& v) {
    py::array_t<std::uint32_t> out({static_cast<py::ssize_t>(layers), static_cast<py::ssize_t>(dims)});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::dict metric_dict(const MetricReport& r) {
    py::dict d;
    d["accuracy"] = r.accuracy;
    d["precision"] = r.precision;
    d["recall"] = r.recall;
    d["f1"] = r.f1;
    d["n"] = r.n;
    d["tp"] = r.tp;
    d["fp"] = r.fp;
    d["tn"] = r.tn;
    d["fn"] = r.fn;
    return d;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> neuron_list(const SuperNeuronSet& set) {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> v;
    for (const auto& n : set.neurons) v.emplace_back(n.layer, n.dim);
    return v;
}

void write_dump_array(const std::filesystem::path& path, const FloatArray& values,
                      const std::string& scalar, const std::string& token, const std::string& model_id,
                      const std::string& dataset_id, const std::string& split) {
    if (values.ndim() != 3) throw InvalidArgument("activations must have shape (N, L, D)");
    DumpHeader h;
    h.num_samples = static_cast<std::uint64_t>(values.shape(0));
    h.num_layers = static_cast<std::uint32_t>(values.shape(1));
    h.hidden_dim = static_cast<std::uint32_t>(values.shape(2));
    h.scalar_kind = parse_scalar_kind(scalar);
    h.token_position = parse_token_position(token);
    h.model_id = model_id;
    h.dataset_id = dataset_id;
    h.split = parse_split(split);
    DumpWriter writer(path, h);
    const std::size_t per_sample = h.scalars_per_sample();
    for (std::uint64_t i = 0; i < h.num_samples; ++i)
        writer.write_sample(std::span<const float>(values.data() + i * per_sample, per_sample));
    writer.finish();
}

} // namespace

PYBIND11_MODULE(_snprobe, m) {
    m.doc() = "Super neuron probing over activation dumps";

    auto base = py::register_exception<Error>(m, "SnprobeError");
    py::register_exception<InvalidArgument>(m, "InvalidArgument", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<NoSuperNeuronsError>(m, "NoSuperNeuronsError", base.ptr());

    m.def("float_to_half", &float_to_half);
    m.def("half_to_float", &half_to_float);

    m.def("write_dump", &write_dump_array, py::arg("path"), py::arg("activations"),
          py::arg("scalar") = "f32", py::arg("token") = "first", py::arg("model_id") = "",
          py::arg("dataset_id") = "", py::arg("split") = "probe");

    py::class_<DumpHandle>(m, "Dump")
        .def_static("open", &DumpHandle::open, py::arg("path"))
        .def_property_readonly("num_samples", &DumpHandle::num_samples)
        .def_property_readonly("num_layers", &DumpHandle::num_layers)
        .def_property_readonly("hidden_dim", &DumpHandle::hidden_dim)
        .def_property_readonly("scalar_kind", [](const DumpHandle& d) { return std::string(to_string(d.header().scalar_kind)); })
        .def_property_readonly("token_position", [](const DumpHandle& d) { return std::string(to_string(d.header().token_position)); })
        .def_property_readonly("model_id", [](const DumpHandle& d) { return d.header().model_id; })
        .def_property_readonly("dataset_id", [](const DumpHandle& d) { return d.header().dataset_id; })
        .def("read_sample", [](const DumpHandle& d, std::uint64_t i) {
            const auto s = d.read_sample(i);
            return grid_array(s.layers(), s.dims(), {s.values().begin(), s.values().end()});
        })
        .def("digest", &DumpHandle::digest)
        .def("stats", [](const DumpHandle& d) {
            const auto st = dump_stats(d);
            py::dict r;
            r["count"] = st.count;
            r["mean"] = st.mean;
            r["std"] = st.std;
            r["min"] = st.min;
            r["max"] = st.max;
            return r;
        });

    m.def("confusion_counts", [](const DumpHandle& dump, const BitArray& labels, float tau, unsigned threads) {
        const auto bits = to_bits(labels);
        const auto c = confusion_counts(dump, bits, tau, ExecPolicy{threads});
        py::dict r;
        r["tp"] = count_array(c.num_layers, c.hidden_dim, c.tp);
        r["fp"] = count_array(c.num_layers, c.hidden_dim, c.fp);
        r["tn"] = count_array(c.num_layers, c.hidden_dim, c.tn);
        r["fn"] = count_array(c.num_layers, c.hidden_dim, c.fn);
        return r;
    }, py::arg("dump"), py::arg("labels"), py::arg("tau") = 0.0f, py::arg("threads") = 1);

    m.def("score", [](const DumpHandle& dump, const BitArray& labels, float tau, const std::string& metric, unsigned threads) {
        const auto bits = to_bits(labels);
        const auto s = score(confusion_counts(dump, bits, tau, ExecPolicy{threads}), parse_metric(metric));
        return grid_array(s.num_layers, s.hidden_dim, s.scores);
    }, py::arg("dump"), py::arg("labels"), py::arg("tau") = 0.0f, py::arg("metric") = "accuracy",
       py::arg("threads") = 1);

    m.def("probe", [](const std::filesystem::path& dump_path, const std::filesystem::path& manifest_path,
                      float tau, const std::string& metric, const std::string& lambda,
                      std::optional<std::uint32_t> layer_cap, unsigned threads, std::optional<std::filesystem::path> out) {
        ProbeConfig c{tau, parse_metric(metric), parse_lambda(lambda), layer_cap};
        const auto dump = DumpHandle::open(dump_path);
        const auto result = probe(dump, load_manifest(manifest_path), c, ExecPolicy{threads});
        if (out) write_json_file(*out, to_json(result.set));
        py::dict r;
        r["neurons"] = neuron_list(result.set);
        r["probe_scores"] = result.set.probe_scores;
        r["lambda"] = result.set.lambda;
        r["best"] = py::make_tuple(py::make_tuple(result.best.neuron.layer, result.best.neuron.dim), result.best.score);
        r["exit_layer"] = early_exit_layer(result.set);
        r["scores"] = grid_array(result.scores.num_layers, result.scores.hidden_dim, result.scores.scores);
        return r;
    }, py::arg("dump"), py::arg("manifest"), py::arg("tau") = 0.0f, py::arg("metric") = "accuracy",
       py::arg("lambda_") = "auto", py::arg("layer_cap") = py::none(), py::arg("threads") = 1,
       py::arg("out") = py::none());

    m.def("infer", [](const DumpHandle& dump, const std::filesystem::path& sn_path, const std::string& mode,
                      const std::string& tie, bool allow_token_mismatch, unsigned threads) {
        const auto set = load_sn_set(sn_path);
        const auto matrix = sn_predictions(dump, set, TokenPolicy{allow_token_mismatch}, ExecPolicy{threads});
        return bits_array(aggregate(matrix, {parse_aggregation(mode), parse_tie_break(tie)}, set.config.tau));
    }, py::arg("dump"), py::arg("sn"), py::arg("mode") = "majority", py::arg("tie") = "positive",
       py::arg("allow_token_mismatch") = false, py::arg("threads") = 1);

    m.def("agreement_rate", [](const DumpHandle& dump, const std::filesystem::path& sn_path,
                               const BitArray& model_preds, unsigned threads) {
        const auto set = load_sn_set(sn_path);
        const auto preds = to_bits(model_preds);
        return agreement_rate(sn_predictions(dump, set, {}, ExecPolicy{threads}), preds);
    }, py::arg("dump"), py::arg("sn"), py::arg("model_preds"), py::arg("threads") = 1);

    m.def("metrics", [](const BitArray& preds, const BitArray& labels) {
        return metric_dict(metrics(to_bits(preds), to_bits(labels)));
    }, py::arg("preds"), py::arg("labels"));

    m.def("modeled_speedup", [](std::uint32_t layers, std::uint32_t exit_layer, std::uint32_t tokens) {
        return modeled_speedup(layers, exit_layer, tokens);
    }, py::arg("num_layers"), py::arg("exit_layer"), py::arg("decode_tokens") = kDefaultDecodeTokens);

    m.def("load_manifest", [](const std::filesystem::path& path) {
        const auto mf = load_manifest(path);
        py::dict r;
        r["dataset_id"] = mf.dataset_id;
        r["sample_ids"] = mf.sample_ids;
        r["labels"] = bits_array(mf.labels);
        r["model_preds"] = bits_array(mf.model_preds);
        return r;
    });

    m.def("synth", [](const std::filesystem::path& prefix, std::uint64_t seed, std::uint64_t n,
                      std::uint32_t layers, std::uint32_t dim, const std::vector<std::string>& plants,
                      float noise, float balance, float model_acc, const std::string& scalar, unsigned threads) {
        SynthConfig c;
        c.seed = seed;
        c.num_samples = n;
        c.num_layers = layers;
        c.hidden_dim = dim;
        for (const auto& p : plants) c.plants.push_back(parse_plant(p));
        c.noise_std = noise;
        c.label_balance = balance;
        c.model_accuracy = model_acc;
        c.scalar_kind = parse_scalar_kind(scalar);
        const auto art = generate(c, prefix, ExecPolicy{threads});
        py::dict r;
        r["dump"] = art.dump_path.string();
        r["manifest"] = art.manifest_path.string();
        r["key"] = art.key_path.string();
        return r;
    }, py::arg("prefix"), py::arg("seed"), py::arg("n"), py::arg("layers"), py::arg("dim"),
       py::arg("plants") = std::vector<std::string>{}, py::arg("noise") = 1.0f, py::arg("balance") = 0.5f,
       py::arg("model_acc") = 0.7f, py::arg("scalar") = "f32", py::arg("threads") = 1);

    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
            py::gil_scoped_release release;
            code = cli::run(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    }, py::arg("args"));
}
