#pragma once

#include "gated_mip/encoders.hpp"
#include "gated_mip/gate.hpp"
#include "gated_mip/objective.hpp"
#include "gated_mip/parameter.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace gmip {

struct ModelConfig {
    MlpEncoderConfig encoder;
    std::size_t num_modalities = 3;
    ObjectiveConfig objective;
    GateConfig gate;
    /// Learning-rate multiplier attached to gate parameters.
    double gate_lr_multiplier = 5.0;

    bool gated() const { return objective.method == Method::gated_symile && gate.gate_mode != GateMode::none; }
    void validate() const;
};

/// Per-modality MLP encoders, optional gate for the target direction and the
/// learned log logit scale, with every learnable registered in one ParameterSet.
/// Move-only: parameters are shared handles.
class ContrastiveModel {
public:
    ContrastiveModel(ModelConfig config, std::uint64_t seed);
    ContrastiveModel(const ContrastiveModel&) = delete;
    ContrastiveModel& operator=(const ContrastiveModel&) = delete;
    ContrastiveModel(ContrastiveModel&&) = default;
    ContrastiveModel& operator=(ContrastiveModel&&) = default;

    const ModelConfig& config() const noexcept { return m_config; }
    std::size_t target() const noexcept { return m_config.objective.target_modality; }
    bool gated() const noexcept { return m_config.gated(); }

    ParameterSet& parameters() noexcept { return m_params; }
    const ParameterSet& parameters() const noexcept { return m_params; }
    const std::vector<MlpEncoder>& encoders() const noexcept { return m_encoders; }
    const GateParams& gate() const noexcept { return m_gate; }
    const Tensor& log_scale() const noexcept { return m_log_scale; }

    EmbeddingBatch encode(std::size_t modality, const Tensor& inputs, bool train_mode,
                          std::mt19937_64* dropout_rng = nullptr) const;

    /// Ranking scores for (anchor r, candidate idx(r, c)): Symile logits
    /// (gated when configured) or the CLIP sum of similarities.
    Tensor pair_scores(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx) const;

    /// Gate over row-aligned tuples; requires a gated model.
    GateOutput gate_tuples(const std::vector<EmbeddingBatch>& embeddings) const;

private:
    ModelConfig m_config;
    std::vector<MlpEncoder> m_encoders;
    GateParams m_gate;
    Tensor m_log_scale;
    ParameterSet m_params;
};

} // namespace gmip
