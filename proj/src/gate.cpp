#include "gated_mip/gate.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

#include <cmath>

namespace gmip {

namespace {

constexpr double kEps = kNormEpsilon;

Tensor one_minus(const Tensor& t) { return shift(scale(t, -1.0), 1.0); }

PairIndex identity_pairs(std::size_t rows) {
    PairIndex idx{rows, 1, std::vector<std::size_t>(rows)};
    for (std::size_t r = 0; r < rows; ++r) idx.index[r] = r;
    return idx;
}

void check_embeddings(const std::vector<EmbeddingBatch>& embeddings, std::size_t target) {
    if (embeddings.size() < 2) throw DimensionError("gate needs at least two modalities");
    if (target >= embeddings.size()) {
        throw IndexError("target modality " + std::to_string(target) + " out of range for " +
                         std::to_string(embeddings.size()) + " modalities");
    }
    const Shape& shape = embeddings.front().values.shape();
    if (shape.size() != 2) throw DimensionError("gate expects [B x D] embeddings");
    for (const auto& e : embeddings) {
        if (e.values.shape() != shape) throw DimensionError("gate embeddings differ in shape");
    }
}

} // namespace

std::string to_string(GateMode mode) {
    switch (mode) {
    case GateMode::attention: return "attention";
    case GateMode::matrix: return "matrix";
    case GateMode::none: return "none";
    }
    return "?";
}

std::string to_string(GateType type) { return type == GateType::sigmoid ? "sigmoid" : "softmax"; }

std::string to_string(NeutralType type) {
    switch (type) {
    case NeutralType::random_trainable: return "random_trainable";
    case NeutralType::random_frozen: return "random_frozen";
    case NeutralType::ones: return "ones";
    case NeutralType::none: return "none";
    }
    return "?";
}

GateMode parse_gate_mode(const std::string& text) {
    if (text == "attention") return GateMode::attention;
    if (text == "matrix") return GateMode::matrix;
    if (text == "none") return GateMode::none;
    throw ConfigError("unknown gate mode '" + text + "'", "gate.gate_mode");
}

GateType parse_gate_type(const std::string& text) {
    if (text == "sigmoid") return GateType::sigmoid;
    if (text == "softmax") return GateType::softmax;
    throw ConfigError("unknown gate type '" + text + "'", "gate.gate_type");
}

NeutralType parse_neutral_type(const std::string& text) {
    if (text == "random_trainable") return NeutralType::random_trainable;
    if (text == "random_frozen") return NeutralType::random_frozen;
    if (text == "ones") return NeutralType::ones;
    if (text == "none") return NeutralType::none;
    throw ConfigError("unknown neutral type '" + text + "'", "gate.neutral_type");
}

void GateConfig::validate() const {
    if (gate_mode == GateMode::none) return;
    if (!(gate_temp > 0.0)) throw ConfigError("gate temperature must be positive", "gate.gate_temp");
    if (gate_d_k == 0) throw ConfigError("gate projection dimension must be positive", "gate.gate_d_k");
    if (!std::isfinite(gate_strength_init)) throw ConfigError("gate strength must be finite", "gate.gate_strength_init");
}

Tensor GateParams::alpha() const { return sigmoid(alpha_raw); }

Tensor GateParams::neutral_direction(std::size_t m) const {
    if (neutral.empty()) return {};
    return reshape(l2_normalize(reshape(neutral.at(m), {1, dim}), kEps), {dim});
}

void GateParams::register_parameters(ParameterSet& params, const GateConfig& config, double lr_multiplier,
                                     const std::string& prefix) {
    if (config.gate_mode == GateMode::none) return;
    if (config.gate_mode == GateMode::attention) {
        query.register_parameters(params, prefix + ".query", lr_multiplier);
        for (std::size_t m = 0; m < keys.size(); ++m) {
            if (keys[m].weight.defined()) keys[m].register_parameters(params, prefix + ".key" + std::to_string(m), lr_multiplier);
        }
    } else {
        params.add({matrix_logits, prefix + ".matrix_logits", lr_multiplier, true, false});
    }
    if (config.use_null) {
        null_head.register_parameters(params, prefix + ".null_head", lr_multiplier);
        params.add({null_bias, prefix + ".null_bias", lr_multiplier, true, false});
    }
    const bool random_neutral = config.neutral_type == NeutralType::random_trainable ||
                                config.neutral_type == NeutralType::random_frozen;
    if (random_neutral) {
        const bool trainable = config.neutral_type == NeutralType::random_trainable;
        for (std::size_t m = 0; m < neutral.size(); ++m) {
            params.add({neutral[m], prefix + ".neutral" + std::to_string(m), lr_multiplier, trainable, false});
        }
    }
    params.add({alpha_raw, prefix + ".alpha_raw", lr_multiplier, true, false});
}

GateParams init_gate(const GateConfig& config, std::size_t dim, std::size_t num_modalities, std::size_t target,
                     std::uint64_t seed) {
    config.validate();
    if (dim == 0) throw ConfigError("embedding dimension must be positive", "modelname.emb_dim");
    if (num_modalities < 2) throw ConfigError("gate needs at least two modalities");
    if (target >= num_modalities) throw IndexError("target modality out of range");

    GateParams p;
    p.target = target;
    p.num_modalities = num_modalities;
    p.dim = dim;
    if (config.gate_mode == GateMode::none) return p;

    // One substream per component.
    if (config.gate_mode == GateMode::attention) {
        auto rng = make_rng(counter_seed(seed, 0));
        p.query = Linear(dim, config.gate_d_k, rng);
        p.keys.resize(num_modalities);
        for (std::size_t m = 0; m < num_modalities; ++m) {
            if (m == target) continue;
            auto key_rng = make_rng(counter_seed(seed, 1 + m));
            p.keys[m] = Linear(dim, config.gate_d_k, key_rng);
        }
    } else {
        p.matrix_logits = Tensor::zeros({num_modalities, num_modalities}, true);
    }
    if (config.use_null) {
        auto rng = make_rng(counter_seed(seed, 100));
        p.null_head = Linear(dim, 1, rng, /*with_bias=*/false);
        p.null_bias = Tensor::zeros({1}, true);
    }
    if (config.neutral_type != NeutralType::none) {
        for (std::size_t m = 0; m < num_modalities; ++m) {
            std::vector<double> n(dim);
            if (config.neutral_type == NeutralType::ones) {
                std::fill(n.begin(), n.end(), 1.0 / std::sqrt(static_cast<double>(dim)));
            } else {
                auto rng = make_rng(counter_seed(seed, 200 + m));
                double ss = 0.0;
                for (double& x : n) {
                    x = standard_normal(rng);
                    ss += x * x;
                }
                const double norm = std::sqrt(ss);
                for (double& x : n) x /= norm;
            }
            const bool trainable = config.neutral_type == NeutralType::random_trainable;
            p.neutral.push_back(Tensor::from_data({dim}, std::move(n), trainable));
        }
    }
    p.alpha_raw = Tensor::scalar(config.gate_strength_init, true);
    return p;
}

double compute_beta(double alpha, double p_null, double w) {
    const auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in_unit(alpha) || !in_unit(p_null) || !in_unit(w)) throw DomainError("compute_beta: arguments must lie in [0, 1]");
    return 1.0 - alpha + alpha * (1.0 - p_null) * w;
}

PairGateWeights pair_gate_weights(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                                  std::size_t target, const GateConfig& config, const GateParams& params) {
    const std::size_t num_modalities = anchors.size();
    if (target >= num_modalities) throw IndexError("target modality out of range");
    if (config.gate_mode == GateMode::none) throw ConfigError("pair_gate_weights called without a gate", "gate.gate_mode");
    const std::size_t rows = idx.rows, cols = idx.cols;
    const double inv_tau = 1.0 / config.gate_temp;

    std::vector<Tensor> logits(num_modalities);
    if (config.gate_mode == GateMode::attention) {
        const Tensor q = l2_normalize(params.query.forward(candidates), kEps);
        for (std::size_t m = 0; m < num_modalities; ++m) {
            if (m == target) continue;
            const Tensor k = l2_normalize(params.keys.at(m).forward(anchors[m]), kEps);
            logits[m] = scale(gathered_dot(k, q, idx), inv_tau);
        }
    } else {
        const Tensor ones = Tensor::full({rows, cols}, 1.0);
        for (std::size_t m = 0; m < num_modalities; ++m) {
            if (m == target) continue;
            logits[m] = mul(ones, scale(take(params.matrix_logits, target * num_modalities + m), inv_tau));
        }
    }

    Tensor null_logit;
    if (config.use_null) {
        const Tensor z = scale(add_rowvec(params.null_head.forward(candidates), params.null_bias), inv_tau);
        null_logit = gather(z, idx);
    }

    PairGateWeights out;
    out.weights.resize(num_modalities);
    out.raw_weights.resize(num_modalities);
    if (config.gate_type == GateType::sigmoid) {
        Tensor keep;
        if (config.use_null) {
            out.p_null = sigmoid(null_logit);
            keep = one_minus(out.p_null);
        }
        for (std::size_t m = 0; m < num_modalities; ++m) {
            if (m == target) continue;
            out.raw_weights[m] = sigmoid(logits[m]);
            out.weights[m] = keep.defined() ? mul(out.raw_weights[m], keep) : out.raw_weights[m];
        }
        return out;
    }

    // Softmax over the non-target modalities, plus NULL as an extra category.
    std::vector<Tensor> categories;
    for (std::size_t m = 0; m < num_modalities; ++m) {
        if (m != target) categories.push_back(logits[m]);
    }
    if (config.use_null) categories.push_back(null_logit);
    const Tensor probs = softmax_rows(stack_columns(categories));
    std::size_t j = 0;
    for (std::size_t m = 0; m < num_modalities; ++m) {
        if (m == target) continue;
        out.weights[m] = reshape(column(probs, j++), {rows, cols});
        out.raw_weights[m] = out.weights[m];
    }
    if (config.use_null) out.p_null = reshape(column(probs, j), {rows, cols});
    return out;
}

GateOutput gate_forward(const std::vector<EmbeddingBatch>& embeddings, std::size_t target, const GateConfig& config,
                        const GateParams& params) {
    check_embeddings(embeddings, target);
    config.validate();
    const std::size_t num_modalities = embeddings.size();
    const std::size_t rows = embeddings.front().rows();

    GateOutput out;
    if (config.gate_mode == GateMode::none) {
        out.gated = embeddings;
        for (const auto& e : embeddings) out.pre_normalized.push_back(e.values);
        out.weights = Tensor::full({rows, num_modalities}, 1.0);
        out.raw_weights = out.weights;
        out.p_null = Tensor::zeros({rows});
        out.effective_beta = out.weights;
        out.alpha = Tensor::scalar(0.0);
        return out;
    }
    if (params.num_modalities != num_modalities || params.target != target) {
        throw ConfigError("gate parameters were initialized for a different modality layout");
    }

    std::vector<Tensor> values;
    for (const auto& e : embeddings) values.push_back(e.values);
    const PairGateWeights pw = pair_gate_weights(values, values[target], identity_pairs(rows), target, config, params);

    const Tensor alpha = params.alpha();
    const Tensor keep_original = one_minus(alpha);
    const Tensor ones = Tensor::full({rows}, 1.0);

    std::vector<Tensor> weights, raw_weights, betas;
    for (std::size_t m = 0; m < num_modalities; ++m) {
        const Tensor w = m == target ? ones : reshape(pw.weights[m], {rows});
        const Tensor& e = values[m];
        Tensor tilde = scale_rows(e, w);
        if (config.neutral_type != NeutralType::none) tilde = add(tilde, outer(one_minus(w), params.neutral_direction(m)));
        const Tensor pre = add(mul(e, keep_original), mul(tilde, alpha));
        out.pre_normalized.push_back(pre);
        out.gated.push_back({config.renormalize ? l2_normalize(pre, kEps) : pre, m, config.renormalize});
        weights.push_back(w);
        raw_weights.push_back(m == target ? ones : reshape(pw.raw_weights[m], {rows}));
        betas.push_back(add(keep_original, mul(w, alpha)));
    }
    out.weights = stack_columns(weights);
    out.raw_weights = stack_columns(raw_weights);
    out.effective_beta = stack_columns(betas);
    out.p_null = pw.p_null.defined() ? reshape(pw.p_null, {rows}) : Tensor::zeros({rows});
    out.alpha = alpha;
    return out;
}

GateOutput matrix_gate_forward(const std::vector<EmbeddingBatch>& embeddings, std::size_t target,
                               const GateConfig& config, const GateParams& params) {
    if (config.gate_mode != GateMode::matrix) throw ConfigError("matrix_gate_forward requires gate_mode=matrix", "gate.gate_mode");
    return gate_forward(embeddings, target, config, params);
}

Tensor gated_pair_mip(const std::vector<Tensor>& anchors, const Tensor& candidates, const PairIndex& idx,
                      std::size_t target, const GateConfig* config, const GateParams* params) {
    const std::size_t num_modalities = anchors.size();
    if (num_modalities < 2) throw DimensionError("MIP needs at least two modalities");
    if (target >= num_modalities) throw IndexError("target modality out of range");
    std::vector<std::size_t> others;
    for (std::size_t m = 0; m < num_modalities; ++m) {
        if (m != target) others.push_back(m);
    }

    const bool gated = config && params && config->gate_mode != GateMode::none;
    if (!gated) {
        Tensor prod = anchors[others[0]];
        for (std::size_t i = 1; i < others.size(); ++i) prod = mul(prod, anchors[others[i]]);
        return gathered_dot(prod, candidates, idx);
    }

    const PairGateWeights pw = pair_gate_weights(anchors, candidates, idx, target, *config, *params);
    const Tensor alpha = params->alpha();
    const Tensor keep_original = one_minus(alpha);
    const bool has_neutral = config->neutral_type != NeutralType::none;

    std::vector<Tensor> beta(num_modalities), neutral_coef(num_modalities), n(num_modalities);
    for (std::size_t m : others) {
        beta[m] = add(keep_original, mul(pw.weights[m], alpha));
        neutral_coef[m] = one_minus(beta[m]);
        if (has_neutral) n[m] = params->neutral_direction(m);
    }

    // prod_m (beta_m e_m + (1 - beta_m) n_m) expanded over which factors take
    // the neutral term; each product is one gathered inner product with the candidate.
    Tensor total;
    const std::size_t subsets = std::size_t{1} << others.size();
    for (std::size_t mask = 0; mask < subsets; ++mask) {
        if (!has_neutral && mask != 0) continue;
        Tensor row_part, vec_part, coef;
        for (std::size_t i = 0; i < others.size(); ++i) {
            const std::size_t m = others[i];
            const bool use_neutral = (mask >> i) & 1U;
            if (use_neutral) {
                vec_part = vec_part.defined() ? mul(vec_part, n[m]) : n[m];
            } else {
                row_part = row_part.defined() ? mul(row_part, anchors[m]) : anchors[m];
            }
            const Tensor& c = use_neutral ? neutral_coef[m] : beta[m];
            coef = coef.defined() ? mul(coef, c) : c;
        }
        Tensor inner;
        if (row_part.defined()) {
            inner = gathered_dot(vec_part.defined() ? mul_rowvec(row_part, vec_part) : row_part, candidates, idx);
        } else {
            inner = gather(sum(mul_rowvec(candidates, vec_part), 1), idx);
        }
        const Tensor term = mul(coef, inner);
        total = total.defined() ? add(total, term) : term;
    }

    if (config->renormalize) {
        const Tensor ones_cols = Tensor::full({idx.cols}, 1.0);
        for (std::size_t m : others) {
            // ||beta e + (1 - beta) n||^2 expanded per pair.
            Tensor sq = mul(mul(beta[m], beta[m]), outer(row_dot(anchors[m], anchors[m]), ones_cols));
            if (has_neutral) {
                const Tensor en = outer(sum(mul_rowvec(anchors[m], n[m]), 1), ones_cols);
                sq = add(sq, scale(mul(mul(beta[m], neutral_coef[m]), en), 2.0));
                sq = add(sq, mul(mul(neutral_coef[m], neutral_coef[m]), sum(mul(n[m], n[m]))));
            }
            total = div(total, sqrt(clamp_min(sq, kEps * kEps)));
        }
        const Tensor cand_norm = sqrt(clamp_min(row_dot(candidates, candidates), kEps * kEps));
        total = div(total, gather(cand_norm, idx));
    }
    return total;
}

} // namespace gmip
