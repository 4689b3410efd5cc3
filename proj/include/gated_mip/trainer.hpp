#pragma once

// AdamW with linear warmup, global-norm clipping and best-validation model selection.

#include "gated_mip/evaluation.hpp"
#include "gated_mip/model.hpp"
#include "gated_mip/synthetic_xnor.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace gmip {

struct TrainConfig {
    double lr = 1e-3;
    std::size_t warmup_steps = 100;
    double weight_decay = 0.01;
    double lr_gate_mul = 5.0;
    std::size_t max_epochs = 100;
    std::size_t batch_size = 128;
    double grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    /// Validate every n optimizer steps; 0 means once per epoch.
    std::size_t eval_every = 0;
    /// Stop after this many validations without improvement; 0 disables.
    std::size_t patience = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::size_t updates = 0;
};

/// min(1, step / warmup_steps), or 1 without warmup.
double warmup_factor(const TrainConfig& config, std::size_t step_index);

/// One AdamW update over every trainable parameter of `params` using the
/// accumulated gradients. Throws NumericError on a non-finite gradient
/// before touching any value.
void optimizer_step(ParameterSet& params, AdamState& state, const TrainConfig& config, std::size_t step_index);

/// Rescales all gradients so the global L2 norm is at most max_norm; returns the factor.
double clip_gradients(ParameterSet& params, double max_norm);

struct MetricsRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_top1 = 0.0;
};

struct TrainResult {
    ContrastiveModel model;
    std::vector<MetricsRecord> history;
    double best_val_top1 = 0.0;
    std::size_t best_step = 0;
    std::size_t steps = 0;
};

/// Loss of one batch of training rows. Pair sampling draws one set of
/// negatives for the whole batch.
Tensor training_loss(const ContrastiveModel& model, const XnorDataset& data, std::span<const std::size_t> batch,
                     std::mt19937_64& sampling_rng, std::mt19937_64* dropout_rng);

using EvalCallback = std::function<void(const MetricsRecord&)>;

TrainResult train(const ModelConfig& model_config, const XnorDataset& train_set, const XnorDataset& val_set,
                  const TrainConfig& config, const EvalConfig& val_config = {}, const EvalCallback& on_eval = {});

} // namespace gmip
