#pragma once

// Multilinear inner product (MIP) critic and its perturbation algebra.
//
// For embeddings e_1..e_M in R^D the MIP is sum_j prod_m e_{m,j}. Perturbing a
// non-target modality c by delta changes the score by <a, delta> / tau with
// the residual product a = e_t (.) prod_{m != t, c} e_m, which gives the
// Cauchy-Schwarz bound |change| <= ||a|| ||delta|| / tau. Under the gate the
// perturbation entering the MIP is contracted by beta in [1 - alpha, 1].

#include "gated_mip/tensor.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace gmip {

using Vector = std::vector<double>;

struct MipScoreConfig {
    std::size_t embedding_dim = 256;
    std::size_t num_modalities = 3;

    /// D^((M-1)/2): brings the raw MIP of unit vectors with i.i.d. coordinates
    /// (variance 1/D each) to unit variance.
    double normalization_scale() const {
        return std::pow(static_cast<double>(embedding_dim), (static_cast<double>(num_modalities) - 1.0) / 2.0);
    }
    void validate() const;
};

/// Raw MIP of M >= 2 equal-length vectors.
double mip(std::span<const Vector> embeddings);

/// Row-wise MIP of M >= 2 equal-shape [B x D] tensors -> [B]. Differentiable.
Tensor mip_rows(const std::vector<Tensor>& embeddings);

/// s * D^((M-1)/2) * mip(candidate_c, anchors...) for every candidate row.
/// `anchors` are the M-1 non-target embeddings ([D] or [1 x D]); `candidates`
/// is [C x D]. Returns [C].
Tensor normalized_scores(const std::vector<Tensor>& anchors, const Tensor& candidates, const MipScoreConfig& config,
                         double logit_scale);

/// a = e_t (.) prod_{m != t, c} e_m
Vector residual_product(std::span<const Vector> embeddings, std::size_t target, std::size_t corrupted);

/// Closed form of g_corr - g_clean when e_c -> e_c + delta: <a, delta> / tau.
double score_delta_exact(std::span<const Vector> embeddings, std::size_t target, std::size_t corrupted,
                         std::span<const double> delta, double tau);

/// The same difference evaluated by two full MIP evaluations.
double score_delta_direct(std::span<const Vector> embeddings, std::size_t corrupted, std::span<const double> delta,
                          double tau);

/// ||delta|| * ||a|| / tau
double cauchy_schwarz_bound(std::span<const Vector> embeddings, std::size_t target, std::size_t corrupted,
                            std::span<const double> delta, double tau);

/// beta * ||delta|| * ||a^G|| / tau over the pre-normalization gated embeddings.
double gated_bound(std::span<const Vector> gated, std::size_t target, std::size_t corrupted, double beta,
                   std::span<const double> delta, double tau);

/// Closed-form gated change beta * <a^G, delta> / tau when e^G_c -> e^G_c + beta * delta.
double gated_score_delta_exact(std::span<const Vector> gated, std::size_t target, std::size_t corrupted, double beta,
                               std::span<const double> delta, double tau);

double l2_norm(std::span<const double> v);

} // namespace gmip
