#pragma once

// Contrastive objectives and negative sampling.
//
// Pair sampling holds the anchors (non-target modalities) fixed and varies
// only the target: each anchor sees its positive plus K sampled negatives.
// n-sampling reuses the other anchors' targets from the batch.

#include "gated_mip/encoders.hpp"
#include "gated_mip/gate.hpp"
#include "gated_mip/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace gmip {

enum class Method { clip, symile, gated_symile };
enum class Sampling { pair, n };

std::string to_string(Method method);
std::string to_string(Sampling sampling);
Method parse_method(const std::string& text);
Sampling parse_sampling(const std::string& text);

struct ObjectiveConfig {
    Method method = Method::gated_symile;
    Sampling sampling = Sampling::pair;
    std::size_t num_negatives = 128;
    /// gamma at initialization; the logit scale is exp(gamma).
    double logit_scale_init = -0.5;
    std::size_t target_modality = 0;

    void validate() const;
};

struct CandidateSet {
    std::size_t anchor_index = 0;
    /// Indices into the target-modality pool; size K + 1.
    std::vector<std::size_t> candidate_indices;
    std::size_t positive_position = 0;
};

/// Independent pools per anchor: K negatives drawn uniformly without
/// replacement from [0, pool_size) minus the anchor's positive, inserted
/// around the positive at a uniform position. `positives[i]` is the pool
/// index of anchor i's true target.
std::vector<CandidateSet> sample_pair_candidates(std::span<const std::size_t> positives, std::size_t pool_size,
                                                 std::size_t num_negatives, std::mt19937_64& rng);

/// One set of K negatives shared by the whole batch, drawn without
/// replacement from the pool minus every positive of the batch. Each anchor
/// still gets its own uniform positive position.
std::vector<CandidateSet> sample_shared_pair_candidates(std::span<const std::size_t> positives, std::size_t pool_size,
                                                        std::size_t num_negatives, std::mt19937_64& rng);

/// In-batch candidates: anchor i sees the B batch targets with its own at position i.
std::vector<CandidateSet> sample_n_candidates(std::span<const std::size_t> positives);

/// Candidate sets rewritten against a compact list of distinct pool rows.
struct CandidateLayout {
    /// Distinct pool indices in first-use order; row r of the encoded candidates.
    std::vector<std::size_t> pool_indices;
    /// [anchors x candidates] rows into `pool_indices`.
    PairIndex index;
    std::vector<std::size_t> positive_positions;
};

CandidateLayout layout_candidates(const std::vector<CandidateSet>& sets);

/// Logit of every (anchor, candidate) pair under the (gated) Symile critic:
/// exp(gamma) * D^((M-1)/2) * MIP. `anchors` holds one [B x D] tensor per
/// modality (target slot ignored); `candidates` is [N x D].
Tensor symile_logits(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                     std::size_t target, const Tensor& log_scale, const GateConfig* gate_config = nullptr,
                     const GateParams* gate_params = nullptr);

/// Mean cross-entropy of symile_logits against the positive positions.
Tensor symile_loss(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                   std::span<const std::size_t> positive_positions, std::size_t target, const Tensor& log_scale,
                   const GateConfig* gate_config = nullptr, const GateParams* gate_params = nullptr);

/// Sum over non-target m of the symmetric in-batch InfoNCE between e_t and
/// e_m (mean of both directions), with logits exp(gamma) <e_t, e_m>.
Tensor clip_loss(const std::vector<Tensor>& embeddings, const Tensor& log_scale, std::size_t target);

/// CLIP retrieval score sum_{m != t} <candidate, e_m> for every pair.
Tensor clip_pair_scores(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                        std::size_t target);

} // namespace gmip
