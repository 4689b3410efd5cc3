#pragma once

// Experiment grids: every cell is an isolated generate -> train -> evaluate
// run. Cells fan out over worker threads and each finished cell is written to
// its own file, so an interrupted sweep can resume.

#include "gated_mip/experiment_config.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace gmip {

/// A named modification of the base configuration (a method or an ablation).
struct Variant {
    std::string name;
    std::function<void(ExperimentConfig&)> apply;
};

/// clip, symile, gated_symile, or any ablation name.
Variant make_variant(const std::string& name);
/// full, neutral_ones, no_null, frozen_neutral, softmax, no_renorm,
/// ungated_pair, matrix, ungated_n, no_neutral_no_renorm.
std::vector<Variant> ablation_variants();

struct SweepCell {
    Variant variant;
    double p = 0.0;
    std::size_t batch_size = 128;
    std::size_t num_negatives = 128;
    std::uint64_t seed = 0;

    std::string id() const;
};

struct SweepRow {
    std::string method;
    double p = 0.0;
    std::size_t batch_size = 0;
    std::size_t num_negatives = 0;
    std::uint64_t seed = 0;
    double top1 = 0.0;
    std::string pool;
    double runtime_s = 0.0;
    /// Empty on success.
    std::string error;

    bool ok() const noexcept { return error.empty(); }
};

struct SweepOptions {
    std::size_t threads = 1;
    /// Directory for per-cell files; empty disables persistence.
    std::filesystem::path cell_dir;
    bool resume = false;
    std::function<void(const std::string&)> log;
};

/// Worker count: the request capped by GATED_MIP_THREADS when set, at least 1.
std::size_t sweep_threads(std::size_t requested);

/// Trains and evaluates one cell. Training and configuration failures are
/// reported in the row rather than thrown.
SweepRow run_cell(const ExperimentConfig& base, const SweepCell& cell);

std::vector<SweepRow> run_cells(const ExperimentConfig& base, const std::vector<SweepCell>& cells,
                                const SweepOptions& options);

std::vector<SweepRow> sweep_misalignment(const std::vector<Variant>& methods, const std::vector<double>& p_grid,
                                         const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                         const SweepOptions& options);

/// Joint mode sets K = B; fixed mode keeps K at the base configuration's value.
std::vector<SweepRow> sweep_scaling(const std::vector<Variant>& methods, const std::vector<std::size_t>& batch_grid,
                                    KMode mode, const std::vector<double>& p_grid,
                                    const std::vector<std::uint64_t>& seeds, const ExperimentConfig& base,
                                    const SweepOptions& options);

std::vector<SweepRow> sweep_ablation(const std::vector<double>& p_grid, const std::vector<std::uint64_t>& seeds,
                                     const ExperimentConfig& base, const SweepOptions& options);

/// Columns: method,p,B,K,seed,top1,pool,runtime_s. Failed cells are omitted.
std::string results_csv(const std::vector<SweepRow>& rows);
/// {"method": [{"p":..,"B":..,"K":..,"seed":..,"top1":..,"pool":..,"runtime_s":..}, ...], ...}
std::string results_json(const std::vector<SweepRow>& rows);
/// Columns: method,p,B,K,seed,error.
std::string failures_csv(const std::vector<SweepRow>& rows);

} // namespace gmip
