#include "gated_mip/encoders.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

#include <cmath>

namespace gmip {

Linear::Linear(std::size_t in_features, std::size_t out_features, std::mt19937_64& rng, bool with_bias) {
    if (in_features == 0 || out_features == 0) throw ConfigError("linear layer dimensions must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    std::vector<double> w(in_features * out_features);
    for (double& x : w) x = bound * (2.0 * uniform01(rng) - 1.0);
    weight = Tensor::from_data({in_features, out_features}, std::move(w), true);
    if (with_bias) bias = Tensor::zeros({out_features}, true);
}

Tensor Linear::forward(const Tensor& x) const {
    Tensor y = matmul(x, weight);
    return bias.defined() ? add_rowvec(y, bias) : y;
}

void Linear::register_parameters(ParameterSet& params, const std::string& prefix, double lr_multiplier) {
    params.add({weight, prefix + ".weight", lr_multiplier, true, true});
    if (bias.defined()) params.add({bias, prefix + ".bias", lr_multiplier, true, false});
}

void MlpEncoderConfig::validate() const {
    if (input_dim == 0) throw ConfigError("encoder input_dim must be positive", "encoders.mlp.input_dim");
    if (embedding_dim == 0) throw ConfigError("embedding dimension must be positive", "modelname.emb_dim");
    if (hidden_dims.size() != hidden_dropouts.size()) {
        throw ConfigError("hidden_dims and hidden_dropouts must have the same length", "encoders.mlp.hidden_dropouts");
    }
    for (std::size_t h : hidden_dims) {
        if (h == 0) throw ConfigError("hidden dimensions must be positive", "encoders.mlp.hidden_dims");
    }
    for (double r : hidden_dropouts) {
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError("dropout rates must lie in [0, 1)", "encoders.mlp.hidden_dropouts");
    }
}

MlpEncoder::MlpEncoder(MlpEncoderConfig config, std::uint64_t seed) : m_config(std::move(config)) {
    m_config.validate();
    auto rng = make_rng(seed);
    std::size_t width = m_config.input_dim;
    for (std::size_t h : m_config.hidden_dims) {
        m_layers.emplace_back(width, h, rng);
        width = h;
    }
    m_layers.emplace_back(width, m_config.embedding_dim, rng);
}

EmbeddingBatch MlpEncoder::encode(const Tensor& inputs, std::size_t modality_id, bool train_mode,
                                  std::mt19937_64* dropout_rng) const {
    if (inputs.rank() != 2 || inputs.dim(1) != m_config.input_dim) {
        throw DimensionError("encoder expects inputs of width " + std::to_string(m_config.input_dim) + ", got " +
                             shape_to_string(inputs.shape()));
    }
    Tensor h = inputs;
    for (std::size_t i = 0; i + 1 < m_layers.size(); ++i) {
        h = relu(m_layers[i].forward(h));
        const double rate = m_config.hidden_dropouts[i];
        if (train_mode && dropout_rng && rate > 0.0) h = dropout(h, rate, *dropout_rng);
    }
    h = m_layers.back().forward(h);
    if (m_config.normalize_output) h = l2_normalize(h, kNormEpsilon);
    return {h, modality_id, m_config.normalize_output};
}

void MlpEncoder::register_parameters(ParameterSet& params, const std::string& prefix) {
    for (std::size_t i = 0; i < m_layers.size(); ++i) {
        m_layers[i].register_parameters(params, prefix + ".layer" + std::to_string(i));
    }
}

EmbeddingBatch encode(const MlpEncoder& encoder, const Tensor& inputs, bool train_mode, std::uint64_t seed,
                      std::size_t modality_id) {
    auto rng = make_rng(seed);
    return encoder.encode(inputs, modality_id, train_mode, &rng);
}

} // namespace gmip
