#include "gated_mip/model.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

namespace gmip {

void ModelConfig::validate() const {
    encoder.validate();
    objective.validate();
    if (num_modalities < 2) throw ConfigError("at least two modalities are required");
    if (objective.target_modality >= num_modalities) {
        throw ConfigError("target modality out of range", "objective.target_modality");
    }
    if (gated()) gate.validate();
    if (!(gate_lr_multiplier > 0.0)) throw ConfigError("gate learning-rate multiplier must be positive", "train.lr_gate_mul");
}

ContrastiveModel::ContrastiveModel(ModelConfig config, std::uint64_t seed) : m_config(std::move(config)) {
    m_config.validate();
    const std::uint64_t init = substream_seed(seed, "init");
    for (std::size_t m = 0; m < m_config.num_modalities; ++m) {
        m_encoders.emplace_back(m_config.encoder, counter_seed(init, m));
        m_encoders.back().register_parameters(m_params, "encoder" + std::to_string(m));
    }
    if (gated()) {
        m_gate = init_gate(m_config.gate, m_config.encoder.embedding_dim, m_config.num_modalities, target(),
                           substream_seed(seed, "gate"));
        m_gate.register_parameters(m_params, m_config.gate, m_config.gate_lr_multiplier);
    }
    m_log_scale = Tensor::scalar(m_config.objective.logit_scale_init, true);
    m_params.add({m_log_scale, "logit_scale", 1.0, true, false});
}

EmbeddingBatch ContrastiveModel::encode(std::size_t modality, const Tensor& inputs, bool train_mode,
                                        std::mt19937_64* dropout_rng) const {
    if (modality >= m_encoders.size()) throw IndexError("modality index out of range");
    return m_encoders[modality].encode(inputs, modality, train_mode, dropout_rng);
}

Tensor ContrastiveModel::pair_scores(const std::vector<Tensor>& anchors, const Tensor& candidates,
                                     const PairIndex& idx) const {
    if (m_config.objective.method == Method::clip) return clip_pair_scores(anchors, candidates, idx, target());
    if (gated()) return symile_logits(anchors, candidates, idx, target(), m_log_scale, &m_config.gate, &m_gate);
    return symile_logits(anchors, candidates, idx, target(), m_log_scale);
}

GateOutput ContrastiveModel::gate_tuples(const std::vector<EmbeddingBatch>& embeddings) const {
    if (!gated()) throw ConfigError("model has no gate", "gate.gate_mode");
    return gate_forward(embeddings, target(), m_config.gate, m_gate);
}

} // namespace gmip
