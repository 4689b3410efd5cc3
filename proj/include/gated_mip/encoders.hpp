#pragma once

#include "gated_mip/parameter.hpp"
#include "gated_mip/tensor.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace gmip {

/// Dense layer y = x W + b with W of shape [in x out].
struct Linear {
    Tensor weight;
    Tensor bias;

    Linear() = default;
    /// W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), b = 0.
    Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng, bool with_bias = true);

    std::size_t in_features() const { return weight.dim(0); }
    std::size_t out_features() const { return weight.dim(1); }
    Tensor forward(const Tensor& x) const;
    void register_parameters(ParameterSet& params, const std::string& prefix, double lr_multiplier = 1.0);
};

struct MlpEncoderConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims{256, 256};
    std::vector<double> hidden_dropouts{0.0, 0.0};
    std::size_t embedding_dim = 256;
    bool normalize_output = true;

    void validate() const;
};

struct EmbeddingBatch {
    Tensor values; // [B x D]
    std::size_t modality_id = 0;
    bool normalized = false;

    std::size_t rows() const { return values.dim(0); }
    std::size_t dim() const { return values.dim(1); }
};

/// Linear -> ReLU -> Dropout blocks followed by a final Linear projection,
/// optionally l2-normalized.
class MlpEncoder {
public:
    MlpEncoder() = default;
    MlpEncoder(MlpEncoderConfig config, std::uint64_t seed);

    const MlpEncoderConfig& config() const noexcept { return m_config; }
    const std::vector<Linear>& layers() const noexcept { return m_layers; }
    std::vector<Linear>& layers() noexcept { return m_layers; }

    /// Dropout is applied only when `train_mode` and `dropout_rng` are set.
    EmbeddingBatch encode(const Tensor& inputs, std::size_t modality_id, bool train_mode,
                          std::mt19937_64* dropout_rng = nullptr) const;

    void register_parameters(ParameterSet& params, const std::string& prefix);

private:
    MlpEncoderConfig m_config;
    std::vector<Linear> m_layers;
};

inline MlpEncoder init_encoder(const MlpEncoderConfig& config, std::uint64_t seed) { return MlpEncoder(config, seed); }

/// Functional form with a seed for the dropout stream.
EmbeddingBatch encode(const MlpEncoder& encoder, const Tensor& inputs, bool train_mode, std::uint64_t seed,
                      std::size_t modality_id = 0);

/// Epsilon used by every embedding normalization.
inline constexpr double kNormEpsilon = 1e-12;

} // namespace gmip
