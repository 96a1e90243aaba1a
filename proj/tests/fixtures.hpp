#pragma once

#include "snprobe/dump.hpp"
#include "snprobe/manifest.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("snprobe-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

struct Tensor {
    std::uint64_t n = 0;
    std::uint32_t layers = 0;
    std::uint32_t dims = 0;
    std::vector<float> values; // N x L x D

    float at(std::uint64_t i, std::uint32_t l, std::uint32_t d) const {
        return values[(i * layers + l) * dims + d];
    }
};

inline Tensor normal_tensor(std::uint64_t n, std::uint32_t layers, std::uint32_t dims, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<float> dist(0.0f, 1.0f);
    Tensor t{n, layers, dims, std::vector<float>(n * layers * dims)};
    for (auto& v : t.values) v = dist(rng);
    return t;
}

inline std::vector<std::uint8_t> random_bits(std::size_t n, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::vector<std::uint8_t> bits(n);
    for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1u);
    return bits;
}

inline snprobe::DumpHeader header_for(const Tensor& t, snprobe::ScalarKind kind = snprobe::ScalarKind::f32) {
    snprobe::DumpHeader h;
    h.num_samples = t.n;
    h.num_layers = t.layers;
    h.hidden_dim = t.dims;
    h.scalar_kind = kind;
    h.model_id = "test-model";
    h.dataset_id = "test-data";
    return h;
}

inline void write_tensor(const std::filesystem::path& path, const Tensor& t,
                         snprobe::ScalarKind kind = snprobe::ScalarKind::f32,
                         snprobe::TokenPosition token = snprobe::TokenPosition::first_generated) {
    auto h = header_for(t, kind);
    h.token_position = token;
    snprobe::DumpWriter w(path, h);
    const std::size_t per = std::size_t{t.layers} * t.dims;
    for (std::uint64_t i = 0; i < t.n; ++i)
        w.write_sample(std::span<const float>(t.values.data() + i * per, per));
    w.finish();
}

inline snprobe::SampleManifest manifest_for(std::vector<std::uint8_t> labels, std::vector<std::uint8_t> preds) {
    snprobe::SampleManifest m;
    m.dataset_id = "test-data";
    for (std::size_t i = 0; i < labels.size(); ++i) m.sample_ids.push_back("q" + std::to_string(i));
    m.labels = std::move(labels);
    m.model_preds = std::move(preds);
    return m;
}

} // namespace fixtures
