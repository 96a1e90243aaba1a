#include "snprobe/synth.hpp"

#include "snprobe/detail/bytes.hpp"
#include "snprobe/digest.hpp"
#include "snprobe/error.hpp"
#include "snprobe/json_io.hpp"
#include "snprobe/philox.hpp"
#include "snprobe/probe.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

namespace snprobe {

namespace {

// Philox counter word 3 selects an independent stream.
enum Stream : std::uint32_t {
    kStreamNoise = 0,
    kStreamShuffle = 1,
    kStreamModel = 2,
    kStreamPlant = 3,
};

Philox4x32::Counter counter(std::uint64_t a, std::uint32_t b, Stream stream) {
    return {static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32), b, stream};
}

// Uniform integer in [0, bound) by Lemire's multiply-shift with rejection;
// each rejection moves to the next counter word.
std::uint64_t bounded(const Philox4x32& rng, std::uint64_t index, std::uint64_t bound) {
    for (std::uint32_t attempt = 0;; ++attempt) {
        const auto block = rng(counter(index, attempt, kStreamShuffle));
        const std::uint64_t x = join64(block[0], block[1]);
        const unsigned __int128 m = static_cast<unsigned __int128>(x) * bound;
        const auto low = static_cast<std::uint64_t>(m);
        if (low >= bound || low >= (-bound) % bound) return static_cast<std::uint64_t>(m >> 64);
    }
}

bool plant_target_bit(const PlantSpec& plant, std::uint8_t label, std::uint8_t model_pred) {
    const std::uint8_t t = plant.target == PlantTarget::label ? label : model_pred;
    return plant.polarity == Polarity::positive_means_yes ? t != 0 : t == 0;
}

std::string sample_id(std::uint64_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%06llu", static_cast<unsigned long long>(i));
    return buf;
}

} // namespace

PlantSpec parse_plant(std::string_view spec) {
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
        const auto colon = spec.find(':', pos);
        fields.push_back(spec.substr(pos, colon == spec.npos ? spec.npos : colon - pos));
        if (colon == spec.npos) break;
        pos = colon + 1;
    }
    if (fields.size() < 3 || fields.size() > 6)
        throw InvalidArgument("plant must be layer:dim:p[:magnitude[:+|-[:label|model]]], got '" +
                              std::string(spec) + "'");
    const auto number = [&](std::string_view f, auto& out) {
        const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), out);
        if (ec != std::errc{} || ptr != f.data() + f.size())
            throw InvalidArgument("plant '" + std::string(spec) + "': bad field '" + std::string(f) + "'");
    };
    PlantSpec p;
    number(fields[0], p.neuron.layer);
    number(fields[1], p.neuron.dim);
    number(fields[2], p.fidelity);
    if (fields.size() > 3) number(fields[3], p.magnitude);
    if (fields.size() > 4) {
        if (fields[4] == "+") p.polarity = Polarity::positive_means_yes;
        else if (fields[4] == "-") p.polarity = Polarity::positive_means_no;
        else throw InvalidArgument("plant polarity must be + or -");
    }
    if (fields.size() > 5) {
        if (fields[5] == "label") p.target = PlantTarget::label;
        else if (fields[5] == "model") p.target = PlantTarget::model_pred;
        else throw InvalidArgument("plant target must be label or model");
    }
    return p;
}

void SynthConfig::validate() const {
    if (num_samples == 0 || num_layers == 0 || hidden_dim == 0)
        throw InvalidArgument("synth: N, L and D must be >= 1");
    if (std::uint64_t{num_layers} * hidden_dim > std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("synth: L*D must fit in 32 bits");
    if (!(noise_std >= 0.0f) || !std::isfinite(noise_std)) throw InvalidArgument("synth: noise std must be >= 0");
    if (!(label_balance > 0.0f && label_balance < 1.0f))
        throw InvalidArgument("synth: label balance must lie in (0,1)");
    if (!(model_accuracy >= 0.0f && model_accuracy <= 1.0f))
        throw InvalidArgument("synth: model accuracy must lie in [0,1]");
    std::set<NeuronIndex> seen;
    for (const auto& p : plants) {
        if (p.neuron.layer >= num_layers || p.neuron.dim >= hidden_dim)
            throw InvalidArgument("synth: plant (" + std::to_string(p.neuron.layer) + ", " +
                                  std::to_string(p.neuron.dim) + ") outside " +
                                  std::to_string(num_layers) + "x" + std::to_string(hidden_dim));
        if (!(p.fidelity > 0.5f && p.fidelity <= 1.0f))
            throw InvalidArgument("synth: plant fidelity must lie in (0.5, 1]");
        if (!(p.magnitude > 0.0f) || !std::isfinite(p.magnitude))
            throw InvalidArgument("synth: plant magnitude must be > 0");
        if (!seen.insert(p.neuron).second) throw InvalidArgument("synth: duplicate plant neuron");
    }
}

SampleManifest synth_manifest(const SynthConfig& config) {
    config.validate();
    const Philox4x32 rng(config.seed);
    const std::uint64_t n = config.num_samples;
    auto num_pos = static_cast<std::uint64_t>(std::llround(double{config.label_balance} * n));
    num_pos = std::min(num_pos, n);

    SampleManifest m;
    m.dataset_id = config.dataset_id;
    m.labels.assign(n, 0);
    std::fill_n(m.labels.begin(), num_pos, 1);
    for (std::uint64_t i = n - 1; i > 0; --i) std::swap(m.labels[i], m.labels[bounded(rng, i, i + 1)]);

    m.model_preds.resize(n);
    m.sample_ids.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        const bool correct = unit_open(rng(counter(i, 0, kStreamModel))[0]) < config.model_accuracy;
        m.model_preds[i] = correct ? m.labels[i] : static_cast<std::uint8_t>(1 - m.labels[i]);
        m.sample_ids.push_back(sample_id(i));
    }
    return m;
}

SynthArtifacts generate(const SynthConfig& config, const std::filesystem::path& prefix,
                        ExecPolicy policy) {
    config.validate();
    const auto manifest = synth_manifest(config);
    const Philox4x32 rng(config.seed);

    SynthArtifacts out;
    out.dump_path = prefix;
    out.dump_path += ".snd";
    out.manifest_path = prefix;
    out.manifest_path += ".manifest.json";
    out.key_path = prefix;
    out.key_path += ".key.json";
    if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());

    DumpHeader header;
    header.num_samples = config.num_samples;
    header.num_layers = config.num_layers;
    header.hidden_dim = config.hidden_dim;
    header.scalar_kind = config.scalar_kind;
    header.token_position = config.token_position;
    header.model_id = config.model_id;
    header.dataset_id = config.dataset_id;
    header.split = config.split;

    const std::size_t cells = header.scalars_per_sample();
    const std::size_t sample_bytes = header.sample_bytes();
    const std::size_t nplants = config.plants.size();
    std::vector<std::size_t> plant_flat;
    for (const auto& p : config.plants)
        plant_flat.push_back(std::size_t{p.neuron.layer} * config.hidden_dim + p.neuron.dim);

    // Samples per write batch: ~64 MiB of payload.
    const std::uint64_t batch = std::max<std::uint64_t>(1, (std::uint64_t{64} << 20) / sample_bytes);
    const unsigned max_workers = resolve_threads(policy);
    std::vector<std::byte> buffer;
    std::vector<std::vector<float>> scratch(max_workers, std::vector<float>(cells));
    std::vector<std::uint64_t> intended(nplants, 0), realized(nplants, 0);

    DumpWriter writer(out.dump_path, header);
    for (std::uint64_t first = 0; first < config.num_samples; first += batch) {
        const std::uint64_t count = std::min(batch, config.num_samples - first);
        buffer.resize(count * sample_bytes);
        const unsigned workers = worker_count(count, policy);
        std::vector<std::vector<std::uint64_t>> w_intended(workers, std::vector<std::uint64_t>(nplants, 0));
        std::vector<std::vector<std::uint64_t>> w_realized(workers, std::vector<std::uint64_t>(nplants, 0));

        parallel_blocks(count, policy, [&](unsigned w, std::uint64_t begin, std::uint64_t end) {
            auto& values = scratch[w];
            for (std::uint64_t local = begin; local < end; ++local) {
                const std::uint64_t i = first + local;
                for (std::size_t j = 0; j < cells; j += 2) {
                    const auto z = normal_pair(rng(counter(i, static_cast<std::uint32_t>(j / 2), kStreamNoise)));
                    values[j] = static_cast<float>(config.noise_std * z[0]);
                    if (j + 1 < cells) values[j + 1] = static_cast<float>(config.noise_std * z[1]);
                }
                for (std::size_t k = 0; k < nplants; ++k) {
                    const auto& p = config.plants[k];
                    const bool agree =
                        unit_open(rng(counter(i, static_cast<std::uint32_t>(k), kStreamPlant))[0]) < p.fidelity;
                    const bool target = plant_target_bit(p, manifest.labels[i], manifest.model_preds[i]);
                    const float sign = (agree == target) ? 1.0f : -1.0f;
                    values[plant_flat[k]] = p.magnitude * sign + values[plant_flat[k]];
                    w_intended[w][k] += agree ? 1 : 0;
                }
                std::byte* dst = buffer.data() + local * sample_bytes;
                encode_scalars(config.scalar_kind, values, {dst, sample_bytes});
                for (std::size_t k = 0; k < nplants; ++k) {
                    const float stored = detail::load_scalar(
                        config.scalar_kind, dst + plant_flat[k] * scalar_size(config.scalar_kind));
                    const bool target = plant_target_bit(config.plants[k], manifest.labels[i],
                                                         manifest.model_preds[i]);
                    w_realized[w][k] += binarize(stored, 0.0f) == target ? 1 : 0;
                }
            }
        });
        for (unsigned w = 0; w < workers; ++w)
            for (std::size_t k = 0; k < nplants; ++k) {
                intended[k] += w_intended[w][k];
                realized[k] += w_realized[w][k];
            }
        writer.write_encoded(buffer, count);
    }
    writer.finish();
    save_manifest(out.manifest_path, manifest);

    auto& key = out.key;
    key.config = config;
    key.num_positive = manifest.class_counts().num_pos;
    for (std::size_t k = 0; k < nplants; ++k) {
        PlantOutcome o;
        o.spec = config.plants[k];
        o.intended_agreements = intended[k];
        o.realized_agreements = realized[k];
        o.realized_agreement = static_cast<double>(realized[k]) / static_cast<double>(config.num_samples);
        key.plants.push_back(o);
    }
    key.dump_digest = sha256_file(out.dump_path);
    key.manifest_digest = sha256_file(out.manifest_path);
    write_json_file(out.key_path, to_json(key));
    return out;
}

KeyCheckReport answer_key_check(const DumpHandle& dump, const SampleManifest& manifest,
                                const AnswerKey& key) {
    KeyCheckReport r;
    const auto fail = [&](std::string msg) {
        r.ok = false;
        r.mismatches.push_back(std::move(msg));
    };
    const auto& h = dump.header();
    const auto& c = key.config;
    if (h.num_samples != c.num_samples || h.num_layers != c.num_layers || h.hidden_dim != c.hidden_dim) {
        fail("dump shape differs from the key's configuration");
        return r;
    }
    manifest.validate_against(h);

    const auto dump_digest = dump.digest();
    if (dump_digest != key.dump_digest) fail("dump digest " + dump_digest + " != key " + key.dump_digest);
    const auto manifest_digest = sha256_hex(dump_json(to_json(manifest)));
    if (manifest_digest != key.manifest_digest)
        fail("manifest digest " + manifest_digest + " != key " + key.manifest_digest);
    if (manifest.class_counts().num_pos != key.num_positive)
        fail("positive count " + std::to_string(manifest.class_counts().num_pos) + " != key " +
             std::to_string(key.num_positive));

    for (const auto& plant : key.plants) {
        std::uint64_t agree = 0;
        for (std::uint64_t i = 0; i < h.num_samples; ++i) {
            const float v = dump.read_scalar(i, plant.spec.neuron);
            const bool target = plant_target_bit(plant.spec, manifest.labels[i], manifest.model_preds[i]);
            agree += binarize(v, 0.0f) == target ? 1 : 0;
        }
        if (agree != plant.realized_agreements)
            fail("plant (" + std::to_string(plant.spec.neuron.layer) + ", " +
                 std::to_string(plant.spec.neuron.dim) + "): dump shows " + std::to_string(agree) +
                 " agreements, key records " + std::to_string(plant.realized_agreements));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json plant_json(const PlantSpec& p) {
    return {{"layer", p.neuron.layer},
            {"dim", p.neuron.dim},
            {"fidelity", sig9(p.fidelity)},
            {"magnitude", sig9(p.magnitude)},
            {"polarity", p.polarity == Polarity::positive_means_yes ? "positive_means_yes" : "positive_means_no"},
            {"target", p.target == PlantTarget::label ? "label" : "model"}};
}

PlantSpec plant_from_json(const nlohmann::json& j) {
    PlantSpec p;
    p.neuron = {j.at("layer").get<std::uint32_t>(), j.at("dim").get<std::uint32_t>()};
    p.fidelity = j.at("fidelity").get<float>();
    p.magnitude = j.at("magnitude").get<float>();
    p.polarity = j.at("polarity").get<std::string>() == "positive_means_no" ? Polarity::positive_means_no
                                                                          : Polarity::positive_means_yes;
    p.target = j.at("target").get<std::string>() == "model" ? PlantTarget::model_pred : PlantTarget::label;
    return p;
}

} // namespace

nlohmann::json to_json(const SynthConfig& c) {
    nlohmann::json plants = nlohmann::json::array();
    for (const auto& p : c.plants) plants.push_back(plant_json(p));
    return {{"seed", c.seed},
            {"n", c.num_samples},
            {"layers", c.num_layers},
            {"dim", c.hidden_dim},
            {"plants", std::move(plants)},
            {"noise_std", sig9(c.noise_std)},
            {"label_balance", sig9(c.label_balance)},
            {"model_accuracy", sig9(c.model_accuracy)},
            {"scalar_kind", to_string(c.scalar_kind)},
            {"token_position", to_string(c.token_position)},
            {"split", to_string(c.split)},
            {"model_id", c.model_id},
            {"dataset_id", c.dataset_id}};
}

nlohmann::json to_json(const AnswerKey& key) {
    nlohmann::json plants = nlohmann::json::array();
    for (const auto& o : key.plants) {
        auto j = plant_json(o.spec);
        j["intended_agreements"] = o.intended_agreements;
        j["realized_agreements"] = o.realized_agreements;
        j["realized_agreement"] = sig9(o.realized_agreement);
        plants.push_back(std::move(j));
    }
    return {{"kind", "synth_answer_key"},
            {"config", to_json(key.config)},
            {"num_positive", key.num_positive},
            {"plants", std::move(plants)},
            {"dump_digest", key.dump_digest},
            {"manifest_digest", key.manifest_digest}};
}

AnswerKey answer_key_from_json(const nlohmann::json& j) {
    try {
        AnswerKey key;
        const auto& c = j.at("config");
        key.config.seed = c.at("seed").get<std::uint64_t>();
        key.config.num_samples = c.at("n").get<std::uint64_t>();
        key.config.num_layers = c.at("layers").get<std::uint32_t>();
        key.config.hidden_dim = c.at("dim").get<std::uint32_t>();
        for (const auto& p : c.at("plants")) key.config.plants.push_back(plant_from_json(p));
        key.config.noise_std = c.at("noise_std").get<float>();
        key.config.label_balance = c.at("label_balance").get<float>();
        key.config.model_accuracy = c.at("model_accuracy").get<float>();
        key.config.scalar_kind = parse_scalar_kind(c.at("scalar_kind").get<std::string>());
        key.config.token_position = parse_token_position(c.at("token_position").get<std::string>());
        key.config.split = parse_split(c.at("split").get<std::string>());
        key.config.model_id = c.at("model_id").get<std::string>();
        key.config.dataset_id = c.at("dataset_id").get<std::string>();
        key.num_positive = j.at("num_positive").get<std::uint64_t>();
        for (const auto& p : j.at("plants")) {
            PlantOutcome o;
            o.spec = plant_from_json(p);
            o.intended_agreements = p.at("intended_agreements").get<std::uint64_t>();
            o.realized_agreements = p.at("realized_agreements").get<std::uint64_t>();
            o.realized_agreement = p.at("realized_agreement").get<double>();
            key.plants.push_back(o);
        }
        key.dump_digest = j.at("dump_digest").get<std::string>();
        key.manifest_digest = j.at("manifest_digest").get<std::string>();
        return key;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("answer key: ") + e.what());
    }
}

AnswerKey load_answer_key(const std::filesystem::path& path) {
    return answer_key_from_json(read_json_file(path));
}

} // namespace snprobe
