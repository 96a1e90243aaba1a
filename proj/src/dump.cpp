#include "snprobe/dump.hpp"

#include "snprobe/detail/bytes.hpp"
#include "snprobe/digest.hpp"
#include "snprobe/error.hpp"

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <limits>

namespace snprobe {

using detail::load_le;
using detail::store_le;

std::string_view to_string(ScalarKind kind) {
    return kind == ScalarKind::f16 ? "f16" : "f32";
}

std::string_view to_string(TokenPosition pos) {
    return pos == TokenPosition::first_generated ? "first_generated" : "last_generated";
}

std::string_view to_string(Split split) {
    return split == Split::probe ? "probe" : "validation";
}

ScalarKind parse_scalar_kind(std::string_view s) {
    if (s == "f16") return ScalarKind::f16;
    if (s == "f32") return ScalarKind::f32;
    throw InvalidArgument("unknown scalar kind '" + std::string(s) + "' (expected f16|f32)");
}

TokenPosition parse_token_position(std::string_view s) {
    if (s == "first" || s == "first_generated") return TokenPosition::first_generated;
    if (s == "last" || s == "last_generated") return TokenPosition::last_generated;
    throw InvalidArgument("unknown token position '" + std::string(s) + "' (expected first|last)");
}

Split parse_split(std::string_view s) {
    if (s == "probe") return Split::probe;
    if (s == "validation") return Split::validation;
    throw InvalidArgument("unknown split '" + std::string(s) + "' (expected probe|validation)");
}

// ---------------------------------------------------------------------------
// Header

namespace {

constexpr std::uint64_t kFixedHeaderBytes = 8 + 4 + 8 + 4 + 4 + 1 + 1 + 4 + 4 + 1;

bool mul_overflows(std::uint64_t a, std::uint64_t b, std::uint64_t& out) {
    return __builtin_mul_overflow(a, b, &out);
}

} // namespace

std::uint64_t DumpHeader::encoded_size() const noexcept {
    return kFixedHeaderBytes + model_id.size() + dataset_id.size();
}

void DumpHeader::validate() const {
    if (num_samples == 0 || num_layers == 0 || hidden_dim == 0)
        throw InvalidArgument("dump header: N, L and D must all be >= 1");
    std::uint64_t total = 0;
    if (mul_overflows(num_samples, sample_bytes(), total))
        throw InvalidArgument("dump header: payload size overflows 64 bits");
    if (model_id.size() > std::numeric_limits<std::uint32_t>::max() ||
        dataset_id.size() > std::numeric_limits<std::uint32_t>::max())
        throw InvalidArgument("dump header: identifier too long");
}

std::vector<std::byte> DumpHeader::encode() const {
    std::vector<std::byte> out(encoded_size());
    std::byte* p = out.data();
    std::memcpy(p, kDumpMagic.data(), kDumpMagic.size());
    p += kDumpMagic.size();
    store_le<std::uint32_t>(p, kDumpVersion);
    p += 4;
    store_le<std::uint64_t>(p, num_samples);
    p += 8;
    store_le<std::uint32_t>(p, num_layers);
    p += 4;
    store_le<std::uint32_t>(p, hidden_dim);
    p += 4;
    *p++ = static_cast<std::byte>(scalar_kind);
    *p++ = static_cast<std::byte>(token_position);
    for (const std::string* s : {&model_id, &dataset_id}) {
        store_le<std::uint32_t>(p, static_cast<std::uint32_t>(s->size()));
        p += 4;
        std::memcpy(p, s->data(), s->size());
        p += s->size();
    }
    *p++ = static_cast<std::byte>(split);
    return out;
}

namespace {

class HeaderReader {
  public:
    explicit HeaderReader(std::span<const std::byte> bytes) : bytes_(bytes) {}

    std::span<const std::byte> take(std::size_t n) {
        if (bytes_.size() - pos_ < n)
            throw FormatError("dump header truncated at byte " + std::to_string(pos_));
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    template <class T>
    T get() {
        return load_le<T>(take(sizeof(T)).data());
    }

    std::string get_string() {
        const auto len = get<std::uint32_t>();
        auto raw = take(len);
        return {reinterpret_cast<const char*>(raw.data()), raw.size()};
    }

    std::size_t offset() const noexcept { return pos_; }

  private:
    std::span<const std::byte> bytes_;
    std::size_t pos_ = 0;
};

DumpHeader decode_header(std::span<const std::byte> bytes, std::size_t& header_size) {
    HeaderReader r(bytes);
    auto magic = r.take(kDumpMagic.size());
    if (std::memcmp(magic.data(), kDumpMagic.data(), kDumpMagic.size()) != 0)
        throw FormatError("not an activation dump (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kDumpVersion)
        throw FormatError("unsupported dump version " + std::to_string(version));

    DumpHeader h;
    h.num_samples = r.get<std::uint64_t>();
    h.num_layers = r.get<std::uint32_t>();
    h.hidden_dim = r.get<std::uint32_t>();
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw FormatError("invalid scalar kind " + std::to_string(kind));
    h.scalar_kind = static_cast<ScalarKind>(kind);
    const auto pos = r.get<std::uint8_t>();
    if (pos > 1) throw FormatError("invalid token position " + std::to_string(pos));
    h.token_position = static_cast<TokenPosition>(pos);
    h.model_id = r.get_string();
    h.dataset_id = r.get_string();
    const auto split = r.get<std::uint8_t>();
    if (split > 1) throw FormatError("invalid split flag " + std::to_string(split));
    h.split = static_cast<Split>(split);

    try {
        h.validate();
    } catch (const InvalidArgument& e) {
        throw FormatError(e.what());
    }
    header_size = r.offset();
    return h;
}

} // namespace

// ---------------------------------------------------------------------------
// LayerMatrix

LayerMatrix::LayerMatrix(std::uint32_t layers, std::uint32_t dims, std::vector<float> values)
    : layers_(layers), dims_(dims), values_(std::move(values)) {
    if (values_.size() != std::size_t{layers} * dims)
        throw InvalidArgument("LayerMatrix: value count does not match layers x dims");
}

// ---------------------------------------------------------------------------
// Writer

void encode_scalars(ScalarKind kind, std::span<const float> values, std::span<std::byte> out) {
    if (out.size() != values.size() * scalar_size(kind))
        throw InvalidArgument("encode_scalars: output buffer size mismatch");
    std::byte* p = out.data();
    if (kind == ScalarKind::f16) {
        for (float v : values) {
            store_le<std::uint16_t>(p, float_to_half(v));
            p += 2;
        }
    } else if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(p, values.data(), values.size_bytes());
    } else {
        for (float v : values) {
            store_le<float>(p, v);
            p += 4;
        }
    }
}

DumpWriter::DumpWriter(const std::filesystem::path& path, DumpHeader header)
    : header_(std::move(header)), path_(path) {
    header_.validate();
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot create dump " + path_.string());
    const auto encoded = header_.encode();
    out_.write(reinterpret_cast<const char*>(encoded.data()),
               static_cast<std::streamsize>(encoded.size()));
    if (!out_) throw IoError("write failed: " + path_.string());
    scratch_.resize(header_.sample_bytes());
}

void DumpWriter::write_sample(std::span<const float> values) {
    if (finished_) throw InvalidArgument("DumpWriter: write after finish");
    if (values.size() != header_.scalars_per_sample())
        throw DataError("dump writer: sample has " + std::to_string(values.size()) +
                        " scalars, header expects " +
                        std::to_string(header_.scalars_per_sample()));
    if (written_ >= header_.num_samples)
        throw DataError("dump writer: more than N=" + std::to_string(header_.num_samples) +
                        " samples");
    encode_scalars(header_.scalar_kind, values, scratch_);
    out_.write(reinterpret_cast<const char*>(scratch_.data()),
               static_cast<std::streamsize>(scratch_.size()));
    if (!out_) throw IoError("write failed: " + path_.string());
    ++written_;
}

void DumpWriter::write_sample(const LayerMatrix& sample) {
    if (sample.layers() != header_.num_layers || sample.dims() != header_.hidden_dim)
        throw DataError("dump writer: sample is " + std::to_string(sample.layers()) + "x" +
                        std::to_string(sample.dims()) + ", header expects " +
                        std::to_string(header_.num_layers) + "x" +
                        std::to_string(header_.hidden_dim));
    write_sample(sample.values());
}

void DumpWriter::write_encoded(std::span<const std::byte> bytes, std::uint64_t count) {
    if (finished_) throw InvalidArgument("DumpWriter: write after finish");
    if (bytes.size() != count * header_.sample_bytes())
        throw DataError("dump writer: encoded block size mismatch");
    if (written_ + count > header_.num_samples)
        throw DataError("dump writer: more than N=" + std::to_string(header_.num_samples) +
                        " samples");
    out_.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw IoError("write failed: " + path_.string());
    written_ += count;
}

void DumpWriter::finish() {
    if (finished_) return;
    if (written_ != header_.num_samples)
        throw DataError("dump writer: short stream, wrote " + std::to_string(written_) + " of " +
                        std::to_string(header_.num_samples) + " samples");
    out_.flush();
    out_.close();
    if (out_.fail()) throw IoError("close failed: " + path_.string());
    finished_ = true;
}

void write_dump(const std::filesystem::path& path, const DumpHeader& header,
                std::span<const LayerMatrix> samples) {
    DumpWriter w(path, header);
    for (const auto& s : samples) w.write_sample(s);
    w.finish();
}

// ---------------------------------------------------------------------------
// Reader

struct DumpHandle::Mapping {
    const std::byte* data = nullptr;
    std::size_t size = 0;

    Mapping(const Mapping&) = delete;
    Mapping& operator=(const Mapping&) = delete;
    Mapping(const std::byte* d, std::size_t s) : data(d), size(s) {}
    ~Mapping() {
        if (data) ::munmap(const_cast<std::byte*>(data), size);
    }
};

DumpHandle DumpHandle::open(const std::filesystem::path& path) {
    const int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) throw IoError("cannot open dump " + path.string() + ": " + std::strerror(errno));
    struct stat st {};
    if (::fstat(fd, &st) != 0) {
        const int err = errno;
        ::close(fd);
        throw IoError("cannot stat dump " + path.string() + ": " + std::strerror(err));
    }
    const auto file_size = static_cast<std::uint64_t>(st.st_size);
    if (file_size < kFixedHeaderBytes) {
        ::close(fd);
        throw FormatError("dump " + path.string() + " is too short (" + std::to_string(file_size) +
                          " bytes)");
    }
    void* addr = ::mmap(nullptr, file_size, PROT_READ, MAP_PRIVATE, fd, 0);
    const int map_err = errno;
    ::close(fd);
    if (addr == MAP_FAILED)
        throw IoError("cannot map dump " + path.string() + ": " + std::strerror(map_err));
    ::madvise(addr, file_size, MADV_SEQUENTIAL);

    DumpHandle h;
    h.mapping_ = std::make_shared<const Mapping>(static_cast<const std::byte*>(addr), file_size);
    h.path_ = path;
    std::size_t header_size = 0;
    h.header_ = decode_header(h.file_bytes(), header_size);
    const std::uint64_t expected = header_size + h.header_.payload_bytes();
    if (expected != file_size)
        throw FormatError("dump " + path.string() + ": size mismatch, header implies " +
                          std::to_string(expected) + " bytes but file has " +
                          std::to_string(file_size));
    h.payload_ = h.file_bytes().subspan(header_size);
    return h;
}

std::span<const std::byte> DumpHandle::file_bytes() const noexcept {
    if (!mapping_) return {};
    return {mapping_->data, mapping_->size};
}

std::span<const std::byte> DumpHandle::sample_bytes(std::uint64_t i) const {
    if (i >= header_.num_samples)
        throw DataError("sample index " + std::to_string(i) + " out of bounds (N=" +
                        std::to_string(header_.num_samples) + ")");
    const auto stride = header_.sample_bytes();
    return payload_.subspan(i * stride, stride);
}

void DumpHandle::read_sample_into(std::uint64_t i, std::span<float> out) const {
    const auto bytes = sample_bytes(i);
    if (out.size() != header_.scalars_per_sample())
        throw InvalidArgument("read_sample_into: output span size mismatch");
    const std::byte* p = bytes.data();
    if (header_.scalar_kind == ScalarKind::f16) {
        for (std::size_t j = 0; j < out.size(); ++j, p += 2)
            out[j] = half_to_float(load_le<std::uint16_t>(p));
    } else if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), p, out.size_bytes());
    } else {
        for (std::size_t j = 0; j < out.size(); ++j, p += 4) out[j] = load_le<float>(p);
    }
}

LayerMatrix DumpHandle::read_sample(std::uint64_t i) const {
    LayerMatrix m(header_.num_layers, header_.hidden_dim);
    read_sample_into(i, m.values());
    return m;
}

float DumpHandle::read_scalar(std::uint64_t i, NeuronIndex neuron) const {
    if (neuron.layer >= header_.num_layers || neuron.dim >= header_.hidden_dim)
        throw DataError("neuron (" + std::to_string(neuron.layer) + ", " +
                        std::to_string(neuron.dim) + ") outside dump shape " +
                        std::to_string(header_.num_layers) + "x" +
                        std::to_string(header_.hidden_dim));
    const auto bytes = sample_bytes(i);
    const std::size_t offset =
        (std::size_t{neuron.layer} * header_.hidden_dim + neuron.dim) * scalar_size(header_.scalar_kind);
    return detail::load_scalar(header_.scalar_kind, bytes.data() + offset);
}

std::string DumpHandle::digest() const { return sha256_hex(file_bytes()); }

// ---------------------------------------------------------------------------
// Statistics

DumpStats dump_stats(const DumpHandle& dump) {
    const auto& h = dump.header();
    const std::size_t per_sample = h.scalars_per_sample();
    std::vector<float> buf(per_sample);

    DumpStats st;
    double m2 = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    // Per-sample mean/M2, merged across samples (Chan et al. pairwise update).
    for (std::uint64_t i = 0; i < h.num_samples; ++i) {
        dump.read_sample_into(i, buf);
        double sum = 0.0;
        for (float v : buf) {
            sum += v;
            lo = std::min(lo, double{v});
            hi = std::max(hi, double{v});
        }
        const double n_b = static_cast<double>(per_sample);
        const double mean_b = sum / n_b;
        double m2_b = 0.0;
        for (float v : buf) {
            const double d = double{v} - mean_b;
            m2_b += d * d;
        }
        const double n_a = static_cast<double>(st.count);
        const double n = n_a + n_b;
        const double delta = mean_b - st.mean;
        st.mean += delta * (n_b / n);
        m2 += m2_b + delta * delta * (n_a * n_b / n);
        st.count += per_sample;
    }
    st.std = std::sqrt(m2 / static_cast<double>(st.count));
    st.min = lo;
    st.max = hi;
    return st;
}

} // namespace snprobe
