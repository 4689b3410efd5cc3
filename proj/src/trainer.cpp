#include "gated_mip/trainer.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/rng.hpp"

#include <cmath>
#include <numeric>

namespace gmip {

void TrainConfig::validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be a non-negative number", "train.lr");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative", "train.weight_decay");
    if (!(lr_gate_mul > 0.0)) throw ConfigError("gate learning-rate multiplier must be positive", "train.lr_gate_mul");
    if (batch_size < 1) throw ConfigError("batch size must be positive", "train.batch_size");
    if (!(grad_clip_norm > 0.0)) throw ConfigError("gradient clip norm must be positive", "train.grad_clip_norm");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)", "train.adam_beta1");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)", "train.adam_beta2");
    if (!(adam_epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive", "train.adam_epsilon");
}

double warmup_factor(const TrainConfig& config, std::size_t step_index) {
    if (config.warmup_steps == 0) return 1.0;
    return std::min(1.0, static_cast<double>(step_index) / static_cast<double>(config.warmup_steps));
}

void optimizer_step(ParameterSet& params, AdamState& state, const TrainConfig& config, std::size_t step_index) {
    auto& items = params.items();
    for (const auto& p : items) {
        if (!p.trainable) continue;
        for (double g : p.tensor.grad()) {
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
        }
    }
    if (state.first_moment.size() != items.size()) {
        state.first_moment.assign(items.size(), {});
        state.second_moment.assign(items.size(), {});
        for (std::size_t i = 0; i < items.size(); ++i) {
            state.first_moment[i].assign(items[i].tensor.numel(), 0.0);
            state.second_moment[i].assign(items[i].tensor.numel(), 0.0);
        }
    }
    ++state.updates;
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.updates));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.updates));
    const double base_lr = config.lr * warmup_factor(config, step_index);

    for (std::size_t i = 0; i < items.size(); ++i) {
        auto& p = items[i];
        if (!p.trainable) continue;
        const double lr = base_lr * p.learning_rate_multiplier;
        const auto grad = p.tensor.grad();
        auto value = p.tensor.mutable_data();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < value.size(); ++j) {
            m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
            v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
            if (p.decay) value[j] -= lr * config.weight_decay * value[j];
            value[j] -= lr * (m[j] / correction1) / (std::sqrt(v[j] / correction2) + config.adam_epsilon);
        }
    }
}

double clip_gradients(ParameterSet& params, double max_norm) {
    double total = 0.0;
    for (const auto& p : params.items()) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) total += g * g;
    }
    const double norm = std::sqrt(total);
    if (!(norm > max_norm)) return 1.0;
    const double factor = max_norm / norm;
    for (auto& p : params.items()) {
        if (!p.tensor.has_grad()) continue;
        for (double& g : p.tensor.mutable_grad()) g *= factor;
    }
    return factor;
}

Tensor training_loss(const ContrastiveModel& model, const XnorDataset& data, std::span<const std::size_t> batch,
                     std::mt19937_64& sampling_rng, std::mt19937_64* dropout_rng) {
    const auto& objective = model.config().objective;
    const std::size_t t = model.target();
    const std::size_t mods = model.config().num_modalities;

    std::vector<Tensor> anchors(mods);
    for (std::size_t m = 0; m < mods; ++m) {
        if (m != t) anchors[m] = model.encode(m, data.modality(m, batch), true, dropout_rng).values;
    }
    if (objective.method == Method::clip) {
        anchors[t] = model.encode(t, data.modality(t, batch), true, dropout_rng).values;
        return clip_loss(anchors, model.log_scale(), t);
    }

    const auto sets = objective.sampling == Sampling::n
                          ? sample_n_candidates(batch)
                          : sample_shared_pair_candidates(batch, data.size(), objective.num_negatives, sampling_rng);
    const CandidateLayout layout = layout_candidates(sets);
    const Tensor candidates = model.encode(t, data.modality(t, layout.pool_indices), true, dropout_rng).values;
    if (model.gated()) {
        return symile_loss(anchors, candidates, layout.index, layout.positive_positions, t, model.log_scale(),
                           &model.config().gate, &model.gate());
    }
    return symile_loss(anchors, candidates, layout.index, layout.positive_positions, t, model.log_scale());
}

TrainResult train(const ModelConfig& model_config, const XnorDataset& train_set, const XnorDataset& val_set,
                  const TrainConfig& config, const EvalConfig& val_config, const EvalCallback& on_eval) {
    config.validate();
    ModelConfig effective = model_config;
    effective.gate_lr_multiplier = config.lr_gate_mul;
    TrainResult result{ContrastiveModel(effective, config.seed), {}, 0.0, 0, 0};
    if (config.max_epochs == 0) return result;
    if (train_set.size() < 2) throw ConfigError("training set needs at least two samples", "data.num_samples");

    ParameterSet& params = result.model.parameters();
    auto shuffle_rng = make_rng(substream_seed(config.seed, "shuffle"));
    auto sampling_rng = make_rng(substream_seed(config.seed, "sampling"));
    auto dropout_rng = make_rng(substream_seed(config.seed, "dropout"));

    AdamState state;
    std::size_t step = 0, bad_in_a_row = 0, since_best = 0;
    bool have_best = false;
    std::vector<std::vector<double>> best_values;
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    bool stop = false;

    const auto evaluate = [&](std::size_t epoch) {
        MetricsRecord record;
        record.step = step;
        record.epoch = epoch;
        record.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : std::nan("");
        loss_sum = 0.0;
        loss_count = 0;
        record.val_top1 = val_set.empty() ? std::nan("") : top1_retrieval(result.model, val_set, val_config).top1_accuracy;
        result.history.push_back(record);
        if (on_eval) on_eval(record);
        if (!have_best || record.val_top1 > result.best_val_top1) {
            have_best = true;
            result.best_val_top1 = record.val_top1;
            result.best_step = step;
            best_values = params.snapshot();
            since_best = 0;
        } else if (config.patience && ++since_best >= config.patience) {
            stop = true;
        }
    };

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t epoch = 0; epoch < config.max_epochs && !stop; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
        for (std::size_t begin = 0; begin + 1 < order.size() && !stop; begin += config.batch_size) {
            const std::size_t end = std::min(order.size(), begin + config.batch_size);
            const std::span<const std::size_t> batch(order.data() + begin, end - begin);
            params.zero_grad();
            const Tensor loss = training_loss(result.model, train_set, batch, sampling_rng, &dropout_rng);
            const double value = loss.item();
            bool finite = std::isfinite(value);
            if (finite) {
                loss.backward();
                clip_gradients(params, config.grad_clip_norm);
                try {
                    optimizer_step(params, state, config, step);
                } catch (const NumericError&) {
                    finite = false;
                }
            }
            if (!finite) {
                if (++bad_in_a_row >= 2) throw TrainingError("training diverged: non-finite loss", step);
            } else {
                bad_in_a_row = 0;
                loss_sum += value;
                ++loss_count;
            }
            ++step;
            if (config.eval_every && step % config.eval_every == 0) evaluate(epoch);
        }
        if (!config.eval_every) evaluate(epoch);
    }
    params.zero_grad();
    if (have_best && !val_set.empty()) params.restore(best_values);
    result.steps = step;
    return result;
}

} // namespace gmip
