#include "gated_mip/objective.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/mip.hpp"
#include "gated_mip/rng.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace gmip {

namespace {

// K distinct values from [0, pool_size) \ excluded (sorted, unique), Floyd's algorithm.
std::vector<std::size_t> sample_excluding(std::size_t pool_size, const std::vector<std::size_t>& excluded,
                                          std::size_t count, std::mt19937_64& rng) {
    const std::size_t available = pool_size - excluded.size();
    if (count > available) {
        throw ConfigError("candidate pool of " + std::to_string(pool_size) + " cannot supply " + std::to_string(count) +
                              " negatives",
                          "objective.num_negatives");
    }
    std::vector<std::size_t> ranks;
    ranks.reserve(count);
    for (std::size_t j = available - count; j < available; ++j) {
        const std::size_t r = uniform_index(rng, j + 1);
        ranks.push_back(std::find(ranks.begin(), ranks.end(), r) == ranks.end() ? r : j);
    }
    for (std::size_t& x : ranks) {
        for (std::size_t e : excluded) {
            if (e <= x) ++x;
            else break;
        }
    }
    return ranks;
}

CandidateSet place_positive(std::size_t anchor, std::size_t positive, const std::vector<std::size_t>& negatives,
                            std::mt19937_64& rng) {
    CandidateSet set;
    set.anchor_index = anchor;
    set.positive_position = uniform_index(rng, negatives.size() + 1);
    set.candidate_indices.reserve(negatives.size() + 1);
    set.candidate_indices.insert(set.candidate_indices.end(), negatives.begin(),
                                 negatives.begin() + static_cast<std::ptrdiff_t>(set.positive_position));
    set.candidate_indices.push_back(positive);
    set.candidate_indices.insert(set.candidate_indices.end(),
                                 negatives.begin() + static_cast<std::ptrdiff_t>(set.positive_position), negatives.end());
    return set;
}

void check_positives(std::span<const std::size_t> positives, std::size_t pool_size) {
    for (std::size_t p : positives) {
        if (p >= pool_size) throw IndexError("positive index outside the candidate pool");
    }
}

} // namespace

std::string to_string(Method method) {
    switch (method) {
    case Method::clip: return "clip";
    case Method::symile: return "symile";
    case Method::gated_symile: return "gated_symile";
    }
    return "?";
}

std::string to_string(Sampling sampling) { return sampling == Sampling::pair ? "pair" : "n"; }

Method parse_method(const std::string& text) {
    if (text == "clip") return Method::clip;
    if (text == "symile") return Method::symile;
    if (text == "gated_symile" || text == "gated") return Method::gated_symile;
    throw ConfigError("unknown method '" + text + "'", "objective.method");
}

Sampling parse_sampling(const std::string& text) {
    if (text == "pair") return Sampling::pair;
    if (text == "n") return Sampling::n;
    throw ConfigError("unknown sampling '" + text + "'", "objective.sampling");
}

void ObjectiveConfig::validate() const {
    if (num_negatives < 1) throw ConfigError("at least one negative is required", "objective.num_negatives");
    if (!std::isfinite(logit_scale_init)) throw ConfigError("logit scale init must be finite", "objective.logit_scale_init");
}

std::vector<CandidateSet> sample_pair_candidates(std::span<const std::size_t> positives, std::size_t pool_size,
                                                 std::size_t num_negatives, std::mt19937_64& rng) {
    check_positives(positives, pool_size);
    std::vector<CandidateSet> out;
    out.reserve(positives.size());
    for (std::size_t i = 0; i < positives.size(); ++i) {
        const auto negatives = sample_excluding(pool_size, {positives[i]}, num_negatives, rng);
        out.push_back(place_positive(i, positives[i], negatives, rng));
    }
    return out;
}

std::vector<CandidateSet> sample_shared_pair_candidates(std::span<const std::size_t> positives, std::size_t pool_size,
                                                        std::size_t num_negatives, std::mt19937_64& rng) {
    check_positives(positives, pool_size);
    std::vector<std::size_t> excluded(positives.begin(), positives.end());
    std::sort(excluded.begin(), excluded.end());
    excluded.erase(std::unique(excluded.begin(), excluded.end()), excluded.end());
    const auto negatives = sample_excluding(pool_size, excluded, num_negatives, rng);
    std::vector<CandidateSet> out;
    out.reserve(positives.size());
    for (std::size_t i = 0; i < positives.size(); ++i) out.push_back(place_positive(i, positives[i], negatives, rng));
    return out;
}

std::vector<CandidateSet> sample_n_candidates(std::span<const std::size_t> positives) {
    if (positives.size() < 2) throw ConfigError("n-sampling needs a batch of at least two", "train.batch_size");
    std::vector<CandidateSet> out(positives.size());
    for (std::size_t i = 0; i < positives.size(); ++i) {
        out[i].anchor_index = i;
        out[i].candidate_indices.assign(positives.begin(), positives.end());
        out[i].positive_position = i;
    }
    return out;
}

CandidateLayout layout_candidates(const std::vector<CandidateSet>& sets) {
    CandidateLayout layout;
    if (sets.empty()) return layout;
    const std::size_t cols = sets.front().candidate_indices.size();
    layout.index = PairIndex{sets.size(), cols, std::vector<std::size_t>(sets.size() * cols)};
    std::unordered_map<std::size_t, std::size_t> row_of;
    for (std::size_t r = 0; r < sets.size(); ++r) {
        const auto& set = sets[r];
        if (set.candidate_indices.size() != cols) throw DimensionError("candidate sets differ in size");
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t pool = set.candidate_indices[c];
            auto [it, inserted] = row_of.emplace(pool, layout.pool_indices.size());
            if (inserted) layout.pool_indices.push_back(pool);
            layout.index.index[r * cols + c] = it->second;
        }
        layout.positive_positions.push_back(set.positive_position);
    }
    return layout;
}

Tensor symile_logits(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                     std::size_t target, const Tensor& log_scale, const GateConfig* gate_config,
                     const GateParams* gate_params) {
    const MipScoreConfig score_config{candidates.dim(1), anchors.size()};
    const Tensor raw = gated_pair_mip(anchors, candidates, idx, target, gate_config, gate_params);
    return mul(scale(raw, score_config.normalization_scale()), exp(log_scale));
}

Tensor symile_loss(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                   std::span<const std::size_t> positive_positions, std::size_t target, const Tensor& log_scale,
                   const GateConfig* gate_config, const GateParams* gate_params) {
    const Tensor logits = symile_logits(anchors, candidates, idx, target, log_scale, gate_config, gate_params);
    return log_softmax_cross_entropy(logits, positive_positions);
}

Tensor clip_loss(const std::vector<Tensor>& embeddings, const Tensor& log_scale, std::size_t target) {
    if (embeddings.size() < 2) throw DimensionError("CLIP loss needs at least two modalities");
    if (target >= embeddings.size()) throw IndexError("target modality out of range");
    const std::size_t rows = embeddings[target].dim(0);
    std::vector<std::size_t> diagonal(rows);
    std::iota(diagonal.begin(), diagonal.end(), std::size_t{0});
    const Tensor s = exp(log_scale);
    Tensor total;
    for (std::size_t m = 0; m < embeddings.size(); ++m) {
        if (m == target) continue;
        if (embeddings[m].shape() != embeddings[target].shape()) throw DimensionError("CLIP embeddings differ in shape");
        const Tensor logits = mul(matmul(embeddings[target], transpose(embeddings[m])), s);
        const Tensor pair = scale(add(log_softmax_cross_entropy(logits, diagonal),
                                      log_softmax_cross_entropy(transpose(logits), diagonal)),
                                  0.5);
        total = total.defined() ? add(total, pair) : pair;
    }
    return total;
}

Tensor clip_pair_scores(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                        std::size_t target) {
    Tensor summed;
    for (std::size_t m = 0; m < anchors.size(); ++m) {
        if (m == target) continue;
        summed = summed.defined() ? add(summed, anchors[m]) : anchors[m];
    }
    if (!summed.defined()) throw DimensionError("CLIP scoring needs a non-target modality");
    return gathered_dot(summed, candidates, idx);
}

} // namespace gmip
