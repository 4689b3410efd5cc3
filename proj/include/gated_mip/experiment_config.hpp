#pragma once

// Flat `key = value` experiment configuration with dotted keys.
//
//   # comment
//   data.p = 1.0
//   modelname.gate_temp = 0.5
//   train.max_epochs = 30
//
// Every key has one canonical spelling; `modelname.*` and `optimizer.*`
// spellings are accepted as aliases. Unknown keys and malformed values raise
// ConfigError naming the key.

#include "gated_mip/evaluation.hpp"
#include "gated_mip/model.hpp"
#include "gated_mip/synthetic_xnor.hpp"
#include "gated_mip/trainer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace gmip {

enum class KMode { joint, fixed };

struct SweepSettings {
    std::vector<double> p_grid{0.0, 0.25, 0.5, 0.75, 1.0};
    std::size_t num_seeds = 3;
    std::vector<std::string> methods{"clip", "symile", "gated_symile"};
    std::vector<std::size_t> batch_grid{128, 256, 512};
    KMode k_mode = KMode::joint;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    std::string run_name = "run";
    std::string out_dir = "runs";

    XnorConfig data;
    SplitFractions split;
    MlpEncoderConfig encoder;
    ObjectiveConfig objective;
    GateConfig gate;
    TrainConfig train;
    EvalConfig eval;
    SweepSettings sweep;

    ExperimentConfig();

    /// Assigns one key; throws ConfigError(key) for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    /// Canonical keys in output order.
    static std::vector<std::string> keys();

    /// Applies `key = value` lines.
    void merge_text(const std::string& text);
    void merge_file(const std::filesystem::path& path);
    /// Every canonical key with its current value, one per line.
    std::string to_text() const;

    void validate() const;

    /// Seeds of the named streams derived from the root seed.
    XnorConfig data_config() const;
    std::uint64_t split_seed() const;
    TrainConfig train_config() const;
    ModelConfig model_config() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Generated dataset split according to the configuration.
DatasetSplits make_splits(const ExperimentConfig& config);

} // namespace gmip
