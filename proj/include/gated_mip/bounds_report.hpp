#pragma once

// Monte-Carlo check of the MIP perturbation algebra: the closed-form score
// change, the Cauchy-Schwarz bound (ungated and gated), its tightness for a
// perturbation aligned with the residual product, and linear contraction in beta.

#include <cstdint>
#include <string>
#include <vector>

namespace gmip {

struct BoundsConfig {
    std::size_t trials = 1000;
    std::uint64_t seed = 0;
    std::size_t max_dim = 64;
    std::size_t num_modalities = 3;
    double tolerance = 1e-12;
    std::vector<double> betas{0.0, 0.25, 0.5, 1.0};
};

struct BetaRow {
    double beta = 0.0;
    /// max |delta(beta) - beta * delta(1)| / max(|beta * delta(1)|, tiny) over trials.
    double max_linearity_error = 0.0;
    /// mean |delta(beta)| / |delta(1)|.
    double mean_ratio = 0.0;
};

struct BoundsReport {
    std::size_t trials = 0;
    std::size_t bound_violations = 0;
    std::size_t gated_bound_violations = 0;
    /// max |delta| / bound over random perturbations.
    double max_random_ratio = 0.0;
    /// min |delta| / bound over aligned perturbations.
    double min_aligned_ratio = 0.0;
    /// max relative error of the closed-form delta against two MIP evaluations.
    double max_exact_relative_error = 0.0;
    std::vector<BetaRow> beta_rows;

    bool passed() const;
};

BoundsReport verify_bounds(const BoundsConfig& config);

/// Human-readable table.
std::string format_report(const BoundsReport& report);
/// statistic,value CSV.
std::string report_csv(const BoundsReport& report);

} // namespace gmip
