#include "gated_mip/mip.hpp"

#include "gated_mip/errors.hpp"

#include <numeric>

namespace gmip {

namespace {

std::size_t check_tuple(std::span<const Vector> embeddings) {
    if (embeddings.size() < 2) throw DimensionError("MIP needs at least two modalities");
    const std::size_t d = embeddings.front().size();
    for (const auto& e : embeddings) {
        if (e.size() != d) throw DimensionError("MIP embeddings differ in length");
    }
    return d;
}

void check_perturbation(std::span<const Vector> embeddings, std::size_t target, std::size_t corrupted,
                        std::span<const double> delta, double tau) {
    const std::size_t d = check_tuple(embeddings);
    if (target >= embeddings.size()) throw IndexError("target modality out of range");
    if (corrupted >= embeddings.size()) throw IndexError("corrupted modality out of range");
    if (corrupted == target) throw DomainError("corrupted modality must differ from the target");
    if (delta.size() != d) throw DimensionError("perturbation length differs from embedding length");
    if (!(tau > 0.0)) throw DomainError("tau must be positive");
}

double dot(std::span<const double> a, std::span<const double> b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

} // namespace

void MipScoreConfig::validate() const {
    if (embedding_dim == 0) throw ConfigError("embedding dimension must be positive", "modelname.emb_dim");
    if (num_modalities < 2) throw ConfigError("MIP needs at least two modalities");
}

double mip(std::span<const Vector> embeddings) {
    const std::size_t d = check_tuple(embeddings);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        double prod = 1.0;
        for (const auto& e : embeddings) prod *= e[j];
        total += prod;
    }
    return total;
}

Tensor mip_rows(const std::vector<Tensor>& embeddings) {
    if (embeddings.size() < 2) throw DimensionError("MIP needs at least two modalities");
    Tensor prod = embeddings[0];
    for (std::size_t m = 1; m < embeddings.size(); ++m) prod = mul(prod, embeddings[m]);
    return sum(prod, 1);
}

Tensor normalized_scores(const std::vector<Tensor>& anchors, const Tensor& candidates, const MipScoreConfig& config,
                         double logit_scale) {
    if (!(logit_scale > 0.0)) throw DomainError("logit scale must be positive");
    if (anchors.size() + 1 != config.num_modalities) {
        throw DimensionError("expected " + std::to_string(config.num_modalities - 1) + " anchor embeddings");
    }
    if (candidates.rank() != 2 || candidates.dim(1) != config.embedding_dim) {
        throw DimensionError("candidates must be [C x D] with D = " + std::to_string(config.embedding_dim));
    }
    Tensor prod;
    for (const Tensor& a : anchors) {
        if (a.numel() != config.embedding_dim) throw DimensionError("anchor embedding length differs from D");
        const Tensor row = reshape(a, {config.embedding_dim});
        prod = prod.defined() ? mul(prod, row) : row;
    }
    return scale(sum(mul_rowvec(candidates, prod), 1), logit_scale * config.normalization_scale());
}

Vector residual_product(std::span<const Vector> embeddings, std::size_t target, std::size_t corrupted) {
    const std::size_t d = check_tuple(embeddings);
    if (target >= embeddings.size() || corrupted >= embeddings.size()) throw IndexError("modality index out of range");
    Vector a(embeddings[target]);
    for (std::size_t m = 0; m < embeddings.size(); ++m) {
        if (m == target || m == corrupted) continue;
        for (std::size_t j = 0; j < d; ++j) a[j] *= embeddings[m][j];
    }
    return a;
}

double score_delta_exact(std::span<const Vector> embeddings, std::size_t target, std::size_t corrupted,
                         std::span<const double> delta, double tau) {
    check_perturbation(embeddings, target, corrupted, delta, tau);
    return dot(residual_product(embeddings, target, corrupted), delta) / tau;
}

double score_delta_direct(std::span<const Vector> embeddings, std::size_t corrupted, std::span<const double> delta,
                          double tau) {
    check_tuple(embeddings);
    if (corrupted >= embeddings.size()) throw IndexError("corrupted modality out of range");
    std::vector<Vector> perturbed(embeddings.begin(), embeddings.end());
    for (std::size_t j = 0; j < delta.size(); ++j) perturbed[corrupted][j] += delta[j];
    return (mip(perturbed) - mip(embeddings)) / tau;
}

double cauchy_schwarz_bound(std::span<const Vector> embeddings, std::size_t target, std::size_t corrupted,
                            std::span<const double> delta, double tau) {
    check_perturbation(embeddings, target, corrupted, delta, tau);
    return l2_norm(delta) * l2_norm(residual_product(embeddings, target, corrupted)) / tau;
}

double gated_bound(std::span<const Vector> gated, std::size_t target, std::size_t corrupted, double beta,
                   std::span<const double> delta, double tau) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1]");
    return beta * cauchy_schwarz_bound(gated, target, corrupted, delta, tau);
}

double gated_score_delta_exact(std::span<const Vector> gated, std::size_t target, std::size_t corrupted, double beta,
                               std::span<const double> delta, double tau) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw DomainError("beta must lie in [0, 1]");
    return beta * score_delta_exact(gated, target, corrupted, delta, tau);
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

} // namespace gmip
