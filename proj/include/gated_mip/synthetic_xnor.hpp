#pragma once

// Synthetic-XNOR: three modalities A, B, C whose signal blocks satisfy
// signal(B) * signal(C) = signal(A) elementwise, buried in Gaussian
// distractors. With probability p one of B or C is replaced by the vector of
// another sample, which keeps marginals but breaks the cross-modal link.

#include "gated_mip/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gmip {

enum class Misalignment : std::uint8_t { none = 0, B = 1, C = 2 };

std::string to_string(Misalignment m);
Misalignment parse_misalignment(const std::string& text);

struct XnorConfig {
    std::size_t bit_length = 16;
    double signal_amplitude = 1.0;
    double distractor_sigma = 3.0;
    std::size_t input_dim = 128;
    double misalignment_prob = 0.0;
    std::size_t num_samples = 30000;
    std::uint64_t seed = 0;

    std::size_t signal_length() const { return 3 * bit_length; }
    void validate() const;
};

struct SyntheticSample {
    std::vector<double> a, b, c;
    Misalignment misaligned = Misalignment::none;
    std::size_t sample_id = 0;

    const std::vector<double>& modality(std::size_t m) const;
};

struct XnorDataset {
    XnorConfig config;
    std::vector<SyntheticSample> samples;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    /// Rows `indices` of modality m (0 = A, 1 = B, 2 = C) as [n x input_dim].
    Tensor modality(std::size_t m, std::span<const std::size_t> indices) const;
    /// Every row of modality m.
    Tensor modality(std::size_t m) const;
};

inline constexpr std::size_t kXnorModalities = 3;

/// Elementwise XNOR of two 0/1 vectors.
std::vector<std::uint8_t> xnor(std::span<const std::uint8_t> u, std::span<const std::uint8_t> v);

XnorDataset generate(const XnorConfig& config);

struct SplitFractions {
    double train = 0.8;
    double val = 0.1;
    double test = 0.1;
};

struct DatasetSplits {
    XnorDataset train, val, test;
};

/// Deterministic disjoint partition by a seeded permutation.
DatasetSplits split(const XnorDataset& dataset, const SplitFractions& fractions, std::uint64_t seed);

void save_binary(const XnorDataset& dataset, const std::filesystem::path& path);
XnorDataset load_binary(const std::filesystem::path& path);
void save_csv(const XnorDataset& dataset, const std::filesystem::path& path);
XnorDataset load_csv(const std::filesystem::path& path);

} // namespace gmip
