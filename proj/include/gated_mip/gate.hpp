#pragma once

// Candidate-conditioned gate in front of the MIP.
//
// For a retrieval direction with target t the gate scores every non-target
// modality m against the target (candidate) embedding:
//
//   q_t = norm(Q_t e_t),  k_m = norm(K_m e_m),  s_m = <q_t, k_m> / tau_gate
//   w_m = sigmoid(s_m)                         (or a softmax over modalities)
//   p_null = sigmoid((h_t(e_t) + u_t) / tau_gate), w_m <- (1 - p_null) w_m
//   e~_m = w_m e_m + (1 - w_m) n_m
//   e^G_m = (1 - alpha) e_m + alpha e~_m,  optionally renormalized
//
// with w_t = 1. Equivalently e^G_m = beta_m e_m + (1 - beta_m) n_m where
// beta_m = 1 - alpha + alpha w_m lies in [1 - alpha, 1].

#include "gated_mip/encoders.hpp"
#include "gated_mip/parameter.hpp"
#include "gated_mip/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gmip {

enum class GateMode { attention, matrix, none };
enum class GateType { sigmoid, softmax };
enum class NeutralType { random_trainable, random_frozen, ones, none };

std::string to_string(GateMode mode);
std::string to_string(GateType type);
std::string to_string(NeutralType type);
GateMode parse_gate_mode(const std::string& text);
GateType parse_gate_type(const std::string& text);
NeutralType parse_neutral_type(const std::string& text);

struct GateConfig {
    GateMode gate_mode = GateMode::attention;
    GateType gate_type = GateType::sigmoid;
    NeutralType neutral_type = NeutralType::random_trainable;
    bool use_null = true;
    bool renormalize = true;
    double gate_temp = 0.5;
    /// Pre-squash gate strength; alpha = sigmoid(gate_strength_init) at init.
    double gate_strength_init = 3.0;
    std::size_t gate_d_k = 256;

    void validate() const;
};

struct GateParams {
    std::size_t target = 0;
    std::size_t num_modalities = 0;
    std::size_t dim = 0;

    Linear query;                // Q_t: R^D -> R^{d_k}
    std::vector<Linear> keys;    // K_m per modality; undefined at the target slot
    Linear null_head;            // h_t: R^D -> R (no bias)
    Tensor null_bias;            // u_t, shape [1]
    std::vector<Tensor> neutral; // raw n_m per modality, [D]; empty for NeutralType::none
    Tensor alpha_raw;            // scalar; alpha = sigmoid(alpha_raw)
    Tensor matrix_logits;        // [M x M], matrix mode only

    Tensor alpha() const;
    /// Unit-norm neutral direction of modality m; undefined for NeutralType::none.
    Tensor neutral_direction(std::size_t m) const;

    void register_parameters(ParameterSet& params, const GateConfig& config, double lr_multiplier,
                             const std::string& prefix = "gate");
};

GateParams init_gate(const GateConfig& config, std::size_t dim, std::size_t num_modalities, std::size_t target,
                     std::uint64_t seed);

struct GateOutput {
    /// Gated embeddings, renormalized when configured.
    std::vector<EmbeddingBatch> gated;
    /// (1 - alpha) e + alpha e~ before renormalization, [B x D] each.
    std::vector<Tensor> pre_normalized;
    /// Final weights [B x M], column t fixed at 1 (after NULL scaling in sigmoid mode).
    Tensor weights;
    /// Weights before NULL scaling [B x M] (equal to `weights` in softmax mode).
    Tensor raw_weights;
    /// [B]; zero when the NULL option is disabled.
    Tensor p_null;
    /// beta = 1 - alpha + alpha * w, [B x M].
    Tensor effective_beta;
    Tensor alpha;
};

/// Gate row-aligned tuples: row i of every batch forms one tuple and the
/// target batch plays the candidate role.
GateOutput gate_forward(const std::vector<EmbeddingBatch>& embeddings, std::size_t target, const GateConfig& config,
                        const GateParams& params);

/// Same as gate_forward; requires gate_mode = matrix.
GateOutput matrix_gate_forward(const std::vector<EmbeddingBatch>& embeddings, std::size_t target,
                               const GateConfig& config, const GateParams& params);

/// beta = 1 - alpha + alpha (1 - p_null) w; all arguments in [0, 1].
double compute_beta(double alpha, double p_null, double w);

/// Gate weights for (anchor r, candidate idx(r, c)) pairs.
struct PairGateWeights {
    std::vector<Tensor> weights;     // per modality, [B x C]; undefined at the target slot
    std::vector<Tensor> raw_weights; // before NULL scaling
    Tensor p_null;                   // [B x C]; undefined without NULL
};

/// `anchors` holds one [B x D] tensor per modality (the target slot is
/// ignored), `candidates` is [N x D] in the target modality.
PairGateWeights pair_gate_weights(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                                  std::size_t target, const GateConfig& config, const GateParams& params);

/// Raw MIP of the gated tuple (anchor r, candidate idx(r, c)) for every pair,
/// [B x C]. Without a gate (config null or gate_mode none) this is the plain
/// MIP. Evaluated in closed form over the interpolation coefficients, so no
/// per-pair embedding is materialized.
Tensor gated_pair_mip(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                      std::size_t target, const GateConfig* config, const GateParams* params);

} // namespace gmip
