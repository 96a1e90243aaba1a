// Acceptance run: one PASS/FAIL line per primary criterion, exit status 1
// if any criterion fails.

#include "fixtures.hpp"
#include "oracles.hpp"

#include "snprobe/analyze.hpp"
#include "snprobe/cli.hpp"
#include "snprobe/digest.hpp"
#include "snprobe/error.hpp"
#include "snprobe/half.hpp"
#include "snprobe/infer.hpp"
#include "snprobe/probe.hpp"
#include "snprobe/synth.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace snprobe;
using fixtures::TempDir;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

int cli_code(std::vector<std::string> args) {
    std::ostringstream out, err;
    return cli::run(args, out, err);
}

Verdict planted_recovery(const TempDir& dir) {
    SynthConfig c;
    c.seed = 7;
    c.num_samples = 3000;
    c.num_layers = 8;
    c.hidden_dim = 64;
    c.noise_std = 1.0f;
    c.plants = {parse_plant("3:17:0.95")};
    const auto art = generate(c, dir / "planted");

    const auto t0 = std::chrono::steady_clock::now();
    const auto dump = DumpHandle::open(art.dump_path);
    const auto result = probe(dump, load_manifest(art.manifest_path), {}, ExecPolicy{1});
    const double elapsed = seconds_since(t0);

    const bool found = result.best.neuron == NeuronIndex{3, 17};
    const bool in_band = result.best.score >= 0.92f && result.best.score <= 0.98f;
    return {found && in_band && elapsed < 5.0,
            fmt("best (%u,%u) score %.4f, %.3f s single-threaded", result.best.neuron.layer,
                result.best.neuron.dim, result.best.score, elapsed)};
}

Verdict oracle_equivalence(const TempDir& dir) {
    std::mt19937 rng(20241014);
    int failures = 0;
    std::string first_failure;
    const auto fail = [&](int cfg, const std::string& what) {
        if (failures++ == 0) first_failure = fmt("config %d: ", cfg) + what;
    };
    for (int cfg = 0; cfg < 50; ++cfg) {
        const std::uint32_t layers = 1 + rng() % 8;
        const std::uint32_t dims = 1 + rng() % 64;
        const std::uint64_t max_n = 100000 / (std::uint64_t{layers} * dims);
        const std::uint64_t n = 1 + rng() % max_n;
        const auto kind = rng() % 2 ? ScalarKind::f16 : ScalarKind::f32;
        const float tau = std::uniform_real_distribution<float>(-1.0f, 1.0f)(rng);
        const unsigned threads = 1 + rng() % 8;

        auto t = fixtures::normal_tensor(n, layers, dims, rng());
        // Exact threshold ties exercise the strict inequality.
        for (std::size_t i = 0; i < t.values.size(); i += 7) t.values[i] = tau;
        if (kind == ScalarKind::f16)
            for (auto& v : t.values) v = half_to_float(float_to_half(v));
        const auto path = dir / ("oracle" + std::to_string(cfg) + ".snd");
        fixtures::write_tensor(path, t, kind);
        const auto labels = fixtures::random_bits(n, rng());
        const auto model = fixtures::random_bits(n, rng());
        const auto dump = DumpHandle::open(path);

        const auto c = confusion_counts(dump, labels, tau, ExecPolicy{threads});
        const auto want = oracle::confusion(t.values, n, layers, dims, labels, tau);
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (c.tp[i] != want.tp[i] || c.fp[i] != want.fp[i] || c.tn[i] != want.tn[i] || c.fn[i] != want.fn[i]) {
                fail(cfg, "confusion counts differ");
                break;
            }
        }

        SuperNeuronSet set;
        set.num_layers = layers;
        set.hidden_dim = dims;
        set.config.tau = tau;
        std::vector<oracle::Neuron> naive_set;
        const std::uint32_t k = 1 + rng() % std::min<std::uint32_t>(9, layers * dims);
        std::vector<std::uint32_t> flat(layers * dims);
        for (std::uint32_t i = 0; i < flat.size(); ++i) flat[i] = i;
        std::shuffle(flat.begin(), flat.end(), rng);
        flat.resize(k);
        std::sort(flat.begin(), flat.end());
        for (auto f : flat) {
            set.neurons.push_back({f / dims, f % dims});
            set.probe_scores.push_back(1.0f);
            naive_set.push_back({f / dims, f % dims});
        }
        const auto matrix = sn_predictions(dump, set, {}, ExecPolicy{threads});
        const auto naive_bits = oracle::gather_bits(t.values, n, layers, dims, naive_set, tau);
        if (matrix.bits != naive_bits) fail(cfg, "sn_predictions differ");

        const auto preds = aggregate(matrix, {}, tau);
        const auto m = metrics(preds, labels);
        const auto om = oracle::metrics(preds, labels);
        if (std::abs(m.accuracy - om.accuracy) > 1e-9 || std::abs(m.precision - om.precision) > 1e-9 ||
            std::abs(m.recall - om.recall) > 1e-9 || std::abs(m.f1 - om.f1) > 1e-9)
            fail(cfg, "metrics differ");

        const double ar = agreement_rate(matrix, model);
        if (std::abs(ar - oracle::agreement(naive_bits, n, k, model)) > 1e-9) fail(cfg, "agreement_rate differs");
        std::filesystem::remove(path);
    }
    return {failures == 0, failures == 0 ? "50/50 configs match the naive loops"
                                         : fmt("%d mismatches; ", failures) + first_failure};
}

Verdict ensemble_property(const TempDir& dir) {
    SynthConfig c;
    c.seed = 11;
    c.num_samples = 3000;
    c.num_layers = 8;
    c.hidden_dim = 64;
    c.plants = {parse_plant("1:3:0.8"), parse_plant("2:40:0.8"), parse_plant("4:9:0.8"), parse_plant("5:63:0.8"),
                parse_plant("7:0:0.8")};
    const auto art = generate(c, dir / "ensemble");
    const auto dump = DumpHandle::open(art.dump_path);
    const auto manifest = load_manifest(art.manifest_path);
    const auto result = probe(dump, manifest, {0.0f, Metric::accuracy, LambdaSpec::fixed(0.7f), std::nullopt});
    if (result.set.size() != 5) return {false, fmt("expected the 5 plants, selected K=%zu", result.set.size())};

    const auto matrix = sn_predictions(dump, result.set);
    const auto vote = metrics(aggregate(matrix, {}, 0.0f), manifest.labels).accuracy;
    double mean_single = 0;
    for (std::uint32_t k = 0; k < 5; ++k) {
        std::vector<std::uint8_t> col;
        for (std::uint64_t i = 0; i < matrix.num_samples; ++i) col.push_back(matrix.bit(i, k));
        mean_single += metrics(col, manifest.labels).accuracy / 5;
    }
    const double analytic = oracle::majority_accuracy(5, 0.8);
    return {std::abs(vote - analytic) <= 0.02 && vote > mean_single,
            fmt("majority %.4f vs analytic %.4f, mean single-neuron %.4f", vote, analytic, mean_single)};
}

Verdict ar_contract(const TempDir& dir) {
    // Replicas of the model's answers: AR must be exactly 1.
    SynthConfig rep;
    rep.seed = 13;
    rep.num_samples = 3000;
    rep.num_layers = 4;
    rep.hidden_dim = 32;
    rep.noise_std = 0.5f;
    rep.model_accuracy = 0.7f;
    rep.plants = {parse_plant("0:5:1:5:+:model"), parse_plant("2:8:1:5:+:model"), parse_plant("3:1:1:5:+:model")};
    const auto a = generate(rep, dir / "replica");
    const auto adump = DumpHandle::open(a.dump_path);
    const auto amanifest = load_manifest(a.manifest_path);
    const auto aset = probe(adump, amanifest, {0.0f, Metric::accuracy, LambdaSpec::fixed(0.6f), std::nullopt}).set;
    const double ar_identical = agreement_rate(sn_predictions(adump, aset), amanifest.model_preds);

    // Neurons better than a 0.7-accurate model, plus weaker model-tracking ones.
    SynthConfig bet;
    bet.seed = 17;
    bet.num_samples = 3000;
    bet.num_layers = 8;
    bet.hidden_dim = 64;
    bet.model_accuracy = 0.7f;
    bet.plants = {parse_plant("1:1:0.9"), parse_plant("3:30:0.9"), parse_plant("5:2:0.9"), parse_plant("6:60:0.9"),
                  parse_plant("0:7:0.95:5:+:model"), parse_plant("2:12:0.95:5:+:model"),
                  parse_plant("4:44:0.95:5:+:model"), parse_plant("7:19:0.95:5:+:model")};
    const auto b = generate(bet, dir / "better");
    const auto bdump = DumpHandle::open(b.dump_path);
    const auto bmanifest = load_manifest(b.manifest_path);
    const auto scores = score(confusion_counts(bdump, bmanifest, 0.0f), Metric::accuracy);
    const std::vector<float> grid = {0.55f, 0.85f};
    const auto curve = ar_curve(scores, bdump, bmanifest, grid, 0.0f);
    if (curve.points.size() != 2) return {false, "AR curve is missing a lambda point"};
    const auto& low = curve.points[0];
    const auto& high = curve.points[1];
    return {ar_identical == 1.0 && aset.size() == 3 && high.ar < low.ar,
            fmt("identical set AR %.9g (K=%zu); AR(0.55)=%.4f K=%u > AR(0.85)=%.4f K=%u", ar_identical, aset.size(),
                low.ar, low.count, high.ar, high.count)};
}

Verdict tau_sweep_peak(const TempDir& dir) {
    SynthConfig c;
    c.seed = 19;
    c.num_samples = 20000;
    c.num_layers = 2;
    c.hidden_dim = 8;
    c.noise_std = 0.25f;
    c.plants = {parse_plant("1:3:1:0.25")};
    const auto art = generate(c, dir / "sign");
    const auto dump = DumpHandle::open(art.dump_path);
    const auto grid = default_tau_grid();
    const auto sweep = sweep_tau(dump, load_manifest(art.manifest_path).labels, grid);
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < sweep.size(); ++i)
        if (sweep[i].best_accuracy > sweep[argmax].best_accuracy) argmax = i;
    bool unique = true;
    for (std::size_t i = 0; i < sweep.size(); ++i)
        if (i != argmax && sweep[i].best_accuracy == sweep[argmax].best_accuracy) unique = false;
    return {sweep.size() == 61 && grid[argmax] == 0.0f && unique,
            fmt("argmax tau=%g (accuracy %.4f; neighbours %.4f / %.4f)", grid[argmax], sweep[argmax].best_accuracy,
                sweep[argmax > 0 ? argmax - 1 : 0].best_accuracy,
                sweep[std::min(argmax + 1, sweep.size() - 1)].best_accuracy)};
}

Verdict early_exit_contract(const TempDir& dir) {
    SynthConfig c;
    c.seed = 23;
    c.num_samples = 2000;
    c.num_layers = 32;
    c.hidden_dim = 16;
    c.plants = {parse_plant("0:4:0.9"), parse_plant("14:2:0.93"), parse_plant("30:9:0.95")};
    const auto art = generate(c, dir / "exit");
    const auto dump = DumpHandle::open(art.dump_path);
    const auto manifest = load_manifest(art.manifest_path);
    const auto capped = probe(dump, manifest, {0.0f, Metric::accuracy, LambdaSpec::fixed(0.8f), 0u}).set;
    const auto lstar = early_exit_layer(capped);

    const double s1 = modeled_speedup(32, 1, 128);
    bool monotone = true;
    double prev = s1;
    for (std::uint32_t l = 2; l <= 32; ++l) {
        const double s = modeled_speedup(32, l, 128);
        if (s > prev) monotone = false;
        prev = s;
    }
    return {lstar == 1 && s1 >= 4.0 && monotone,
            fmt("layer_cap 0 gives l*=%u; modeled speedup at l*=1 is %.2fx, %s in l*", lstar, s1,
                monotone ? "non-increasing" : "NOT monotone")};
}

bool same_file(const std::filesystem::path& a, const std::filesystem::path& b) {
    return sha256_file(a) == sha256_file(b);
}

Verdict determinism_and_format(const TempDir& dir) {
    std::vector<std::string> problems;
    const auto d = [&](const std::string& name) { return (dir / name).string(); };

    // Byte-identical outputs across worker counts. Every run reads the same
    // input paths, so the recorded provenance is identical too.
    const std::vector<std::string> threads = {"1", "4", "8"};
    const std::string dump = d("t1_fx.snd"), manifest_path = d("t1_fx.manifest.json");
    for (const auto& t : threads) {
        const auto s = "t" + t + "_";
        const bool ok =
            cli_code({"--threads", t, "synth", "--seed", "5", "--n", "2500", "--layers", "6", "--dim", "48", "--plant",
                      "2:7:0.9", "--plant", "4:1:0.85", "--scalar", "f16", "--out-prefix", d(s + "fx")}) == 0 &&
            cli_code({"--threads", t, "probe", "--dump", dump, "--manifest", manifest_path, "--lambda", "0.6",
                      "--out", d(s + "sn.json")}) == 0 &&
            cli_code({"--threads", t, "sweep-tau", "--dump", dump, "--manifest", manifest_path, "--out",
                      d(s + "tau.json")}) == 0 &&
            cli_code({"--threads", t, "agreement", "--dump", dump, "--manifest", manifest_path, "--grid",
                      "0.5:1.0:0.01", "--aggregated", "--out", d(s + "ar.json")}) == 0 &&
            cli_code({"--threads", t, "infer", "--dump", dump, "--sn", d("t1_sn.json"), "--manifest", manifest_path,
                      "--out", d(s + "preds.json")}) == 0 &&
            cli_code({"--threads", t, "eval", "--dump", dump, "--sn", d("t1_sn.json"), "--manifest", manifest_path,
                      "--out", d(s + "eval.json")}) == 0;
        if (!ok) problems.push_back("pipeline failed at --threads " + t);
    }
    if (problems.empty()) {
        for (const char* f : {"fx.snd", "fx.manifest.json", "fx.key.json", "sn.json", "tau.json", "ar.json",
                              "preds.json", "eval.json"}) {
            for (const char* t : {"4", "8"}) {
                if (!same_file(dir / ("t1_" + std::string(f)), dir / ("t" + std::string(t) + "_" + f)))
                    problems.push_back(std::string(f) + " differs at --threads " + t);
            }
        }
    }

    // Bit-exact round trip for both scalar kinds.
    for (auto kind : {ScalarKind::f16, ScalarKind::f32}) {
        auto t = fixtures::normal_tensor(37, 5, 11, 3);
        if (kind == ScalarKind::f16)
            for (auto& v : t.values) v = half_to_float(float_to_half(v));
        const auto path = dir / "roundtrip.snd";
        fixtures::write_tensor(path, t, kind);
        const auto dump = DumpHandle::open(path);
        std::vector<float> back;
        for (std::uint64_t i = 0; i < t.n; ++i) {
            const auto s = dump.read_sample(i);
            back.insert(back.end(), s.values().begin(), s.values().end());
        }
        if (back.size() != t.values.size() || std::memcmp(back.data(), t.values.data(), back.size() * 4) != 0)
            problems.push_back(std::string("round trip differs for ") + std::string(to_string(kind)));
    }

    // Damaged dumps are rejected with exit code 2.
    const auto good = dir / "t1_fx.snd";
    const auto damaged = dir / "damaged.snd";
    const std::vector<std::pair<std::string, std::function<void(std::vector<char>&)>>> damages = {
        {"truncated", [](std::vector<char>& b) { b.pop_back(); }},
        {"extended", [](std::vector<char>& b) { b.push_back('\0'); }},
        {"bad magic", [](std::vector<char>& b) { b[3] = 'X'; }},
        {"bad version", [](std::vector<char>& b) { b[8] = 9; }},
        {"bad scalar kind", [](std::vector<char>& b) { b[28] = 5; }},
        {"header only", [](std::vector<char>& b) { b.resize(20); }},
    };
    std::ifstream in(good, std::ios::binary);
    const std::vector<char> original((std::istreambuf_iterator<char>(in)), {});
    for (const auto& [name, damage] : damages) {
        auto bytes = original;
        damage(bytes);
        std::ofstream(damaged, std::ios::binary | std::ios::trunc).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        const int code = cli_code({"probe", "--dump", damaged.string(), "--manifest", manifest_path});
        if (code != 2) problems.push_back(name + " dump gave exit " + std::to_string(code));
    }

    std::string detail = "threads 1/4/8 byte-identical, f16/f32 round trip exact, 6 damaged dumps exit 2";
    if (!problems.empty()) {
        detail = problems.front();
        if (problems.size() > 1) detail += fmt(" (+%zu more)", problems.size() - 1);
    }
    return {problems.empty(), detail};
}

Verdict throughput(const TempDir& dir) {
    SynthConfig c;
    c.seed = 29;
    c.num_samples = 3000;
    c.num_layers = 32;
    c.hidden_dim = 4096;
    c.scalar_kind = ScalarKind::f16;
    c.plants = {parse_plant("17:1234:0.9")};
    const auto t_gen = std::chrono::steady_clock::now();
    const auto art = generate(c, dir / "large", ExecPolicy{0});
    const double gen_s = seconds_since(t_gen);

    const auto t0 = std::chrono::steady_clock::now();
    const auto dump = DumpHandle::open(art.dump_path);
    const auto result = probe(dump, load_manifest(art.manifest_path), {}, ExecPolicy{0});
    const double elapsed = seconds_since(t0);
    const double gib = double(std::filesystem::file_size(art.dump_path)) / (1u << 30);
    std::filesystem::remove(art.dump_path);
    return {elapsed < 60.0 && result.best.neuron == NeuronIndex{17, 1234},
            fmt("probe over %.2f GiB f16 in %.2f s with %u worker(s) (fixture generation %.1f s, untimed)", gib,
                elapsed, resolve_threads(ExecPolicy{0}), gen_s)};
}

} // namespace

int main() {
    TempDir dir("acceptance");
    const std::vector<std::pair<const char*, std::function<Verdict(const TempDir&)>>> criteria = {
        {"planted-recovery", planted_recovery},
        {"oracle-equivalence", oracle_equivalence},
        {"ensemble-property", ensemble_property},
        {"ar-contract", ar_contract},
        {"tau-sweep-peak", tau_sweep_peak},
        {"early-exit-contract", early_exit_contract},
        {"determinism-and-format", determinism_and_format},
        {"throughput", throughput},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Verdict v;
        try {
            v = check(dir);
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s %-24s %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
        std::fflush(stdout);
        failed += v.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
