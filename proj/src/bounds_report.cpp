#include "gated_mip/bounds_report.hpp"

#include "gated_mip/errors.hpp"
#include "gated_mip/mip.hpp"
#include "gated_mip/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace gmip {

namespace {

constexpr double kTiny = 1e-300;

Vector random_vector(std::size_t d, double scale, std::mt19937_64& rng) {
    Vector v(d);
    for (double& x : v) x = scale * standard_normal(rng);
    return v;
}

double relative(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), kTiny}); }

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

} // namespace

bool BoundsReport::passed() const {
    if (bound_violations || gated_bound_violations) return false;
    if (min_aligned_ratio < 0.999) return false;
    if (max_exact_relative_error > 1e-10) return false;
    return std::all_of(beta_rows.begin(), beta_rows.end(), [](const BetaRow& r) { return r.max_linearity_error <= 1e-8; });
}

BoundsReport verify_bounds(const BoundsConfig& config) {
    if (config.num_modalities < 2) throw ConfigError("at least two modalities are required", "--modalities");
    if (config.max_dim < 2) throw ConfigError("max_dim must be at least 2", "--max-dim");
    for (double b : config.betas) {
        if (!(b >= 0.0 && b <= 1.0)) throw DomainError("beta values must lie in [0, 1]");
    }
    BoundsReport report;
    report.trials = config.trials;
    report.min_aligned_ratio = config.trials ? std::numeric_limits<double>::infinity() : 0.0;
    for (double b : config.betas) report.beta_rows.push_back({b, 0.0, 0.0});

    const std::uint64_t stream = substream_seed(config.seed, "bounds");
    const std::size_t mods = config.num_modalities;
    for (std::size_t trial = 0; trial < config.trials; ++trial) {
        auto rng = make_rng(counter_seed(stream, trial));
        const std::size_t d = 2 + uniform_index(rng, config.max_dim - 1);
        const double unit = 1.0 / std::sqrt(static_cast<double>(d));
        std::vector<Vector> e;
        for (std::size_t m = 0; m < mods; ++m) e.push_back(random_vector(d, unit, rng));
        const std::size_t t = uniform_index(rng, mods);
        std::size_t c = uniform_index(rng, mods - 1);
        if (c >= t) ++c;
        const double tau = 0.05 + 2.0 * uniform01(rng);
        const Vector delta = random_vector(d, unit * (0.01 + uniform01(rng)), rng);

        const double direct = score_delta_direct(e, c, delta, tau);
        const double exact = score_delta_exact(e, t, c, delta, tau);
        const double bound = cauchy_schwarz_bound(e, t, c, delta, tau);
        report.max_exact_relative_error = std::max(report.max_exact_relative_error, relative(exact, direct));
        if (std::abs(direct) > bound + config.tolerance) ++report.bound_violations;
        report.max_random_ratio = std::max(report.max_random_ratio, std::abs(direct) / std::max(bound, kTiny));

        // Aligned perturbation: delta proportional to the residual product attains the bound.
        const Vector a = residual_product(e, t, c);
        const double a_norm = l2_norm(a);
        if (a_norm > 0.0) {
            Vector aligned(a);
            const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
            for (double& x : aligned) x *= sign * l2_norm(delta) / a_norm;
            const double aligned_direct = score_delta_direct(e, c, aligned, tau);
            const double aligned_bound = cauchy_schwarz_bound(e, t, c, aligned, tau);
            if (std::abs(aligned_direct) > aligned_bound + config.tolerance) ++report.bound_violations;
            report.min_aligned_ratio = std::min(report.min_aligned_ratio, std::abs(aligned_direct) / aligned_bound);
        }

        // Gated tuple e^G = beta e + (1 - beta) n, perturbed by beta * delta in modality c.
        std::vector<Vector> neutral;
        for (std::size_t m = 0; m < mods; ++m) {
            Vector n = random_vector(d, 1.0, rng);
            const double norm = l2_norm(n);
            for (double& x : n) x /= norm;
            neutral.push_back(std::move(n));
        }
        const double gate_beta = uniform01(rng);
        std::vector<Vector> gated = e;
        for (std::size_t m = 0; m < mods; ++m) {
            if (m == t) continue;
            for (std::size_t j = 0; j < d; ++j) gated[m][j] = gate_beta * e[m][j] + (1.0 - gate_beta) * neutral[m][j];
        }
        Vector scaled(delta);
        for (double& x : scaled) x *= gate_beta;
        const double gated_direct = score_delta_direct(gated, c, scaled, tau);
        if (std::abs(gated_direct) > gated_bound(gated, t, c, gate_beta, delta, tau) + config.tolerance) {
            ++report.gated_bound_violations;
        }

        const double full = score_delta_direct(gated, c, delta, tau);
        for (auto& row : report.beta_rows) {
            Vector step(delta);
            for (double& x : step) x *= row.beta;
            const double contracted = score_delta_direct(gated, c, step, tau);
            const double expected = row.beta * full;
            const double err = std::abs(contracted - expected) /
                               std::max({std::abs(expected), std::abs(full) * 1e-3, kTiny});
            row.max_linearity_error = std::max(row.max_linearity_error, err);
            if (std::abs(full) > 0.0) row.mean_ratio += std::abs(contracted) / std::abs(full) / static_cast<double>(config.trials);
        }
    }
    return report;
}

std::string format_report(const BoundsReport& r) {
    std::ostringstream out;
    out << "trials                          " << r.trials << '\n'
        << "bound violations                " << r.bound_violations << '\n'
        << "gated bound violations          " << r.gated_bound_violations << '\n'
        << "max |delta| / bound (random)    " << fmt(r.max_random_ratio) << '\n'
        << "min |delta| / bound (aligned)   " << fmt(r.min_aligned_ratio) << '\n'
        << "max closed-form relative error  " << fmt(r.max_exact_relative_error) << '\n'
        << "beta   mean |delta(beta)|/|delta(1)|   max linearity error\n";
    for (const auto& row : r.beta_rows) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%-6g %-32.6g %.3g\n", row.beta, row.mean_ratio, row.max_linearity_error);
        out << buf;
    }
    out << (r.passed() ? "PASS" : "FAIL") << '\n';
    return out.str();
}

std::string report_csv(const BoundsReport& r) {
    std::ostringstream out;
    out << "statistic,value\n"
        << "trials," << r.trials << '\n'
        << "bound_violations," << r.bound_violations << '\n'
        << "gated_bound_violations," << r.gated_bound_violations << '\n'
        << "max_random_ratio," << fmt(r.max_random_ratio) << '\n'
        << "min_aligned_ratio," << fmt(r.min_aligned_ratio) << '\n'
        << "max_exact_relative_error," << fmt(r.max_exact_relative_error) << '\n';
    for (const auto& row : r.beta_rows) {
        out << "beta_" << row.beta << "_mean_ratio," << fmt(row.mean_ratio) << '\n'
            << "beta_" << row.beta << "_max_linearity_error," << fmt(row.max_linearity_error) << '\n';
    }
    out << "passed," << (r.passed() ? "true" : "false") << '\n';
    return out.str();
}

} // namespace gmip
