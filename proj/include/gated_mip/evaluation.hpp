#pragma once

// Retrieval metrics and gate diagnostics on a trained model.

#include "gated_mip/model.hpp"
#include "gated_mip/synthetic_xnor.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace gmip {

enum class PoolMode { full, sampled };

std::string to_string(PoolMode mode);
PoolMode parse_pool_mode(const std::string& text);

struct EvalConfig {
    PoolMode pool_mode = PoolMode::sampled;
    /// Negatives per query in sampled mode (0 leaves only the positive).
    std::size_t num_negatives = 128;
    std::uint64_t seed = 7919;
    /// Upper bound on (query, candidate) pairs scored at once.
    std::size_t pair_budget = 1u << 18;
    /// Evaluate only the first n queries when nonzero.
    std::size_t max_queries = 0;
};

struct RetrievalReport {
    double top1_accuracy = 0.0;
    std::size_t correct = 0;
    std::size_t num_queries = 0;
    std::size_t candidate_pool_size = 0;
    std::string method;
    double p = 0.0;
    std::uint64_t seed = 0;
};

/// Number of rows whose positive scores strictly above every other candidate.
std::size_t count_top1(const Tensor& scores, std::span<const std::size_t> positive_positions);

/// Embeddings of every sample, one [N x D] tensor per modality, eval mode.
std::vector<Tensor> embed_dataset(const ContrastiveModel& model, const XnorDataset& dataset,
                                  std::size_t chunk_rows = 1024);

RetrievalReport top1_retrieval(const ContrastiveModel& model, const XnorDataset& dataset, const EvalConfig& config);
RetrievalReport top1_retrieval(const ContrastiveModel& model, const std::vector<Tensor>& embeddings,
                               const EvalConfig& config);

struct MeanStat {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double standard_error = std::numeric_limits<double>::quiet_NaN();
    std::size_t count = 0;

    bool present() const noexcept { return count > 0; }
    static MeanStat of(std::span<const double> values);
};

struct GateDiagnostics {
    std::size_t target = 0;
    double alpha = 0.0;
    /// Per modality; the target entry is the constant 1.
    std::vector<MeanStat> mean_w;
    std::vector<MeanStat> cos_original;
    /// Absent (count 0) without neutral directions.
    std::vector<MeanStat> cos_neutral;
    /// w_{t->B} - w_{t->C} conditioned on the ground-truth swap label.
    MeanStat weight_delta_given_B;
    MeanStat weight_delta_given_C;
    MeanStat p_null;
};

/// Gate statistics over positive tuples of the dataset. Modalities 1 and 2
/// play the roles of B and C.
GateDiagnostics gate_diagnostics(const ContrastiveModel& model, const XnorDataset& dataset);

void write_diagnostics_csv(const GateDiagnostics& diagnostics, const std::filesystem::path& path);

/// Writes `content` to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace gmip
