#pragma once
// Deliberately naive reference implementations. They share no code with the
// library beyond plain data types, so agreement with them is meaningful.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

struct Counts {
    std::vector<std::uint64_t> tp, fp, tn, fn;
};

/// values is N x L x D row-major.
inline Counts confusion(const std::vector<float>& values, std::uint64_t n, std::uint32_t layers,
                        std::uint32_t dims, const std::vector<std::uint8_t>& labels, float tau) {
    const std::size_t cells = std::size_t{layers} * dims;
    Counts c{std::vector<std::uint64_t>(cells), std::vector<std::uint64_t>(cells),
             std::vector<std::uint64_t>(cells), std::vector<std::uint64_t>(cells)};
    for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint32_t l = 0; l < layers; ++l) {
            for (std::uint32_t d = 0; d < dims; ++d) {
                const std::size_t cell = std::size_t{l} * dims + d;
                const bool pred = values[i * cells + cell] > tau;
                const bool truth = labels[i] == 1;
                if (pred && truth) ++c.tp[cell];
                else if (pred && !truth) ++c.fp[cell];
                else if (!pred && !truth) ++c.tn[cell];
                else ++c.fn[cell];
            }
        }
    }
    return c;
}

struct Scores {
    double accuracy, precision, recall, f1;
};

inline Scores scores(std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
    Scores s{};
    const double total = double(tp + fp + tn + fn);
    s.accuracy = total > 0 ? double(tp + tn) / total : 0.0;
    s.precision = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
    s.recall = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
    s.f1 = (s.precision + s.recall) > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

inline Scores metrics(const std::vector<std::uint8_t>& preds, const std::vector<std::uint8_t>& labels) {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] && labels[i]) ++tp;
        if (preds[i] && !labels[i]) ++fp;
        if (!preds[i] && !labels[i]) ++tn;
        if (!preds[i] && labels[i]) ++fn;
    }
    return scores(tp, fp, tn, fn);
}

struct Neuron {
    std::uint32_t layer, dim;
};

/// N x K gather of binarized activations.
inline std::vector<std::uint8_t> gather_bits(const std::vector<float>& values, std::uint64_t n,
                                             std::uint32_t layers, std::uint32_t dims,
                                             const std::vector<Neuron>& set, float tau) {
    std::vector<std::uint8_t> bits;
    for (std::uint64_t i = 0; i < n; ++i)
        for (const auto& nr : set)
            bits.push_back(values[i * layers * dims + nr.layer * dims + nr.dim] > tau ? 1 : 0);
    return bits;
}

/// The double sum: (1 / NK) * sum_i sum_k [bit(i,k) == model(i)].
inline double agreement(const std::vector<std::uint8_t>& bits, std::uint64_t n, std::size_t k,
                        const std::vector<std::uint8_t>& model) {
    double matches = 0;
    for (std::uint64_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (bits[i * k + j] == model[i]) matches += 1;
    return matches / double(n * k);
}

/// P(X >= ceil((k+1)/2)) for X ~ Bin(k, p), odd k.
inline double majority_accuracy(int k, double p) {
    double total = 0;
    for (int x = (k + 1) / 2; x <= k; ++x) {
        double binom = 1;
        for (int i = 0; i < x; ++i) binom = binom * (k - i) / (i + 1);
        total += binom * std::pow(p, x) * std::pow(1 - p, k - x);
    }
    return total;
}

} // namespace oracle
