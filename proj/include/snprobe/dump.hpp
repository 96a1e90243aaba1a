#pragma once

// Activation dump format.
//
// Layout (little-endian, no padding):
//   bytes 0-7   magic "SNDUMP01"
//   u32         version
//   u64         N (samples)
//   u32         L (layers)
//   u32         D (hidden dim)
//   u8          scalar kind (0 = f16, 1 = f32)
//   u8          token position (0 = first generated, 1 = last generated)
//   u32 + bytes model_id (UTF-8)
//   u32 + bytes dataset_id (UTF-8)
//   u8          split (0 = probe, 1 = validation)
//   payload     row-major [N][L][D]
//
// The file size must equal header size + N*L*D*sizeof(scalar) exactly.

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace snprobe {

enum class ScalarKind : std::uint8_t { f16 = 0, f32 = 1 };
enum class TokenPosition : std::uint8_t { first_generated = 0, last_generated = 1 };
enum class Split : std::uint8_t { probe = 0, validation = 1 };

inline constexpr std::array<char, 8> kDumpMagic = {'S', 'N', 'D', 'U', 'M', 'P', '0', '1'};
inline constexpr std::uint32_t kDumpVersion = 1;

std::string_view to_string(ScalarKind kind);
std::string_view to_string(TokenPosition pos);
std::string_view to_string(Split split);
ScalarKind parse_scalar_kind(std::string_view s);
TokenPosition parse_token_position(std::string_view s);
Split parse_split(std::string_view s);

constexpr std::size_t scalar_size(ScalarKind kind) noexcept {
    return kind == ScalarKind::f16 ? 2 : 4;
}

struct DumpHeader {
    std::uint64_t num_samples = 0;
    std::uint32_t num_layers = 0;
    std::uint32_t hidden_dim = 0;
    ScalarKind scalar_kind = ScalarKind::f32;
    TokenPosition token_position = TokenPosition::first_generated;
    std::string model_id;
    std::string dataset_id;
    Split split = Split::probe;

    std::uint64_t scalars_per_sample() const noexcept {
        return std::uint64_t{num_layers} * hidden_dim;
    }
    std::uint64_t sample_bytes() const noexcept {
        return scalars_per_sample() * scalar_size(scalar_kind);
    }
    std::uint64_t payload_bytes() const noexcept { return num_samples * sample_bytes(); }
    std::uint64_t encoded_size() const noexcept;

    /// Throws InvalidArgument when N, L or D is zero or the payload size overflows.
    void validate() const;

    std::vector<std::byte> encode() const;

    friend bool operator==(const DumpHeader&, const DumpHeader&) = default;
};

/// (layer, dim) coordinate; 0-based, ordered lexicographically.
struct NeuronIndex {
    std::uint32_t layer = 0;
    std::uint32_t dim = 0;

    friend auto operator<=>(const NeuronIndex&, const NeuronIndex&) = default;
};

/// One sample's L x D activations, widened to f32.
class LayerMatrix {
  public:
    LayerMatrix() = default;
    LayerMatrix(std::uint32_t layers, std::uint32_t dims)
        : layers_(layers), dims_(dims), values_(std::size_t{layers} * dims, 0.0f) {}
    LayerMatrix(std::uint32_t layers, std::uint32_t dims, std::vector<float> values);

    std::uint32_t layers() const noexcept { return layers_; }
    std::uint32_t dims() const noexcept { return dims_; }

    float& operator()(std::uint32_t layer, std::uint32_t dim) {
        return values_[std::size_t{layer} * dims_ + dim];
    }
    float operator()(std::uint32_t layer, std::uint32_t dim) const {
        return values_[std::size_t{layer} * dims_ + dim];
    }

    std::span<float> values() noexcept { return values_; }
    std::span<const float> values() const noexcept { return values_; }

    friend bool operator==(const LayerMatrix&, const LayerMatrix&) = default;

  private:
    std::uint32_t layers_ = 0;
    std::uint32_t dims_ = 0;
    std::vector<float> values_;
};

/// Streams samples to a dump file. Exactly N samples must be written before finish().
class DumpWriter {
  public:
    DumpWriter(const std::filesystem::path& path, DumpHeader header);
    DumpWriter(const DumpWriter&) = delete;
    DumpWriter& operator=(const DumpWriter&) = delete;
    DumpWriter(DumpWriter&&) noexcept = default;
    DumpWriter& operator=(DumpWriter&&) noexcept = default;
    ~DumpWriter() = default;

    const DumpHeader& header() const noexcept { return header_; }
    std::uint64_t samples_written() const noexcept { return written_; }

    /// `values` holds one sample, row-major L x D.
    void write_sample(std::span<const float> values);
    void write_sample(const LayerMatrix& sample);

    /// Already-encoded payload bytes for `count` consecutive samples.
    void write_encoded(std::span<const std::byte> bytes, std::uint64_t count);

    void finish();

  private:
    DumpHeader header_;
    std::filesystem::path path_;
    std::ofstream out_;
    std::uint64_t written_ = 0;
    std::vector<std::byte> scratch_;
    bool finished_ = false;
};

void write_dump(const std::filesystem::path& path, const DumpHeader& header,
                std::span<const LayerMatrix> samples);

/// Encodes f32 values into the payload representation of `kind`.
void encode_scalars(ScalarKind kind, std::span<const float> values, std::span<std::byte> out);

/// Read-only handle over a memory-mapped dump. Immutable after open; safe
/// for concurrent readers.
class DumpHandle {
  public:
    static DumpHandle open(const std::filesystem::path& path);

    const DumpHeader& header() const noexcept { return header_; }
    const std::filesystem::path& path() const noexcept { return path_; }
    std::uint64_t num_samples() const noexcept { return header_.num_samples; }
    std::uint32_t num_layers() const noexcept { return header_.num_layers; }
    std::uint32_t hidden_dim() const noexcept { return header_.hidden_dim; }

    LayerMatrix read_sample(std::uint64_t i) const;
    /// `out` must hold L*D floats.
    void read_sample_into(std::uint64_t i, std::span<float> out) const;
    float read_scalar(std::uint64_t i, NeuronIndex neuron) const;

    std::span<const std::byte> sample_bytes(std::uint64_t i) const;
    std::span<const std::byte> payload() const noexcept { return payload_; }
    std::span<const std::byte> file_bytes() const noexcept;

    /// SHA-256 of the whole file, hex.
    std::string digest() const;

  private:
    struct Mapping;

    DumpHandle() = default;

    std::shared_ptr<const Mapping> mapping_;
    std::filesystem::path path_;
    DumpHeader header_;
    std::span<const std::byte> payload_;
};

struct DumpStats {
    std::uint64_t count = 0;
    double mean = 0.0;
    double std = 0.0; // population standard deviation
    double min = 0.0;
    double max = 0.0;
};

DumpStats dump_stats(const DumpHandle& dump);

} // namespace snprobe
