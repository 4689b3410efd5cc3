#include "gated_mip/bounds_report.hpp"
#include "gated_mip/errors.hpp"
#include "gated_mip/mip.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gmip;

namespace {

std::vector<Vector> random_tuple(std::size_t modalities, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<Vector> out(modalities, Vector(d));
    for (auto& v : out) {
        for (double& x : v) x = normal(rng);
    }
    return out;
}

} // namespace

TEST(Mip, TwoModalitiesIsDotProduct) {
    const std::vector<Vector> e{{1, 2, 3}, {4, -5, 6}};
    EXPECT_DOUBLE_EQ(mip(e), 4 - 10 + 18);
}

TEST(Mip, ThreeModalitiesSumOfCoordinateProducts) {
    const std::vector<Vector> e{{1, 2}, {3, 4}, {5, 6}};
    EXPECT_DOUBLE_EQ(mip(e), 1 * 3 * 5 + 2 * 4 * 6);
}

TEST(Mip, SymmetricUnderModalityPermutationAndMultilinear) {
    std::mt19937_64 rng(1);
    auto e = random_tuple(3, 10, rng);
    const std::vector<Vector> swapped{e[2], e[0], e[1]};
    EXPECT_NEAR(mip(e), mip(swapped), 1e-12);
    const double base = mip(e);
    for (double& x : e[1]) x *= -2.5;
    EXPECT_NEAR(mip(e), -2.5 * base, 1e-12);
}

TEST(Mip, RejectsInvalidTuples) {
    const std::vector<Vector> one{{1, 2}};
    EXPECT_THROW(mip(one), DimensionError);
    const std::vector<Vector> ragged{{1, 2}, {1}};
    EXPECT_THROW(mip(ragged), DimensionError);
}

TEST(Mip, NormalizationScale) {
    MipScoreConfig config{256, 3};
    EXPECT_DOUBLE_EQ(config.normalization_scale(), 256.0);
    config.num_modalities = 2;
    EXPECT_DOUBLE_EQ(config.normalization_scale(), 16.0);
    EXPECT_THROW((MipScoreConfig{0, 3}.validate()), ConfigError);
}

TEST(Mip, NormalizedScoresMatchDefinition) {
    std::mt19937_64 rng(2);
    const auto e = random_tuple(3, 4, rng);
    const Tensor a = Tensor::from_data({4}, e[1]);
    const Tensor b = Tensor::from_data({4}, e[2]);
    const Tensor cands = Tensor::from_data({2, 4}, {e[0][0], e[0][1], e[0][2], e[0][3], 1, 0, 0, 0});
    const Tensor s = normalized_scores({a, b}, cands, {4, 3}, 0.5);
    EXPECT_NEAR(s.data()[0], 0.5 * 4.0 * mip(e), 1e-12);
    EXPECT_NEAR(s.data()[1], 0.5 * 4.0 * e[1][0] * e[2][0], 1e-12);
    EXPECT_THROW(normalized_scores({a, b}, cands, {4, 3}, 0.0), DomainError);
    EXPECT_THROW(normalized_scores({a}, cands, {4, 3}, 1.0), DimensionError);
}

TEST(Mip, MipRowsMatchesScalarMip) {
    std::mt19937_64 rng(3);
    std::vector<Tensor> rows;
    std::vector<std::vector<Vector>> tuples(5);
    std::vector<std::vector<double>> data(3);
    for (std::size_t r = 0; r < 5; ++r) {
        tuples[r] = random_tuple(3, 6, rng);
        for (std::size_t m = 0; m < 3; ++m) data[m].insert(data[m].end(), tuples[r][m].begin(), tuples[r][m].end());
    }
    for (auto& d : data) rows.push_back(Tensor::from_data({5, 6}, d));
    const Tensor out = mip_rows(rows);
    for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(out.data()[r], mip(tuples[r]), 1e-12);
}

TEST(Perturbation, ExactDeltaEqualsTwoEvaluationsAcrossShapes) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::size_t modalities = 2; modalities <= 5; ++modalities) {
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t d = 1 + trial % 40;
            const auto e = random_tuple(modalities, d, rng);
            Vector delta(d);
            for (double& x : delta) x = normal(rng);
            const std::size_t t = trial % modalities;
            const std::size_t c = (t + 1 + trial % (modalities - 1)) % modalities;
            const double tau = 0.3;
            auto perturbed = e;
            for (std::size_t j = 0; j < d; ++j) perturbed[c][j] += delta[j];
            const double oracle = (mip(perturbed) - mip(e)) / tau;
            const double exact = score_delta_exact(e, t, c, delta, tau);
            EXPECT_NEAR(exact, oracle, 1e-10 * std::max(1.0, std::abs(oracle)));
            EXPECT_LE(std::abs(exact), cauchy_schwarz_bound(e, t, c, delta, tau) + 1e-12);
        }
    }
}

TEST(Perturbation, BoundIsAttainedByAlignedDelta) {
    std::mt19937_64 rng(5);
    const auto e = random_tuple(3, 12, rng);
    Vector delta = residual_product(e, 0, 2);
    for (double& x : delta) x *= -0.1;
    const double exact = score_delta_exact(e, 0, 2, delta, 1.0);
    EXPECT_NEAR(std::abs(exact), cauchy_schwarz_bound(e, 0, 2, delta, 1.0), 1e-12);
}

TEST(Perturbation, GatedQuantitiesScaleByBeta) {
    std::mt19937_64 rng(6);
    const auto e = random_tuple(3, 8, rng);
    const Vector delta(8, 0.1);
    const double full = score_delta_exact(e, 1, 0, delta, 0.7);
    for (double beta : {0.0, 0.3, 1.0}) {
        EXPECT_NEAR(gated_score_delta_exact(e, 1, 0, beta, delta, 0.7), beta * full, 1e-14);
        EXPECT_NEAR(gated_bound(e, 1, 0, beta, delta, 0.7), beta * cauchy_schwarz_bound(e, 1, 0, delta, 0.7), 1e-14);
    }
    EXPECT_THROW(gated_bound(e, 1, 0, 1.5, delta, 0.7), DomainError);
}

TEST(Perturbation, ArgumentValidation) {
    const std::vector<Vector> e{{1, 2}, {3, 4}, {5, 6}};
    const Vector delta{1, 1};
    EXPECT_THROW(score_delta_exact(e, 0, 0, delta, 1.0), DomainError);
    EXPECT_THROW(score_delta_exact(e, 0, 3, delta, 1.0), IndexError);
    EXPECT_THROW(score_delta_exact(e, 0, 1, delta, 0.0), DomainError);
    const Vector short_delta{1};
    EXPECT_THROW(score_delta_exact(e, 0, 1, short_delta, 1.0), DimensionError);
}

TEST(BoundsReport, PassesAndIsDeterministic) {
    BoundsConfig config;
    config.trials = 300;
    config.seed = 17;
    const BoundsReport a = verify_bounds(config);
    const BoundsReport b = verify_bounds(config);
    EXPECT_TRUE(a.passed());
    EXPECT_EQ(a.bound_violations, 0u);
    EXPECT_EQ(a.gated_bound_violations, 0u);
    EXPECT_LE(a.max_random_ratio, 1.0 + 1e-12);
    EXPECT_GE(a.min_aligned_ratio, 0.999);
    EXPECT_EQ(format_report(a), format_report(b));
    EXPECT_EQ(report_csv(a), report_csv(b));
    ASSERT_EQ(a.beta_rows.size(), 4u);
    for (const auto& row : a.beta_rows) EXPECT_NEAR(row.mean_ratio, row.beta, 1e-8);
}

TEST(BoundsReport, RejectsBadConfig) {
    BoundsConfig config;
    config.betas = {1.5};
    EXPECT_THROW(verify_bounds(config), DomainError);
    config = {};
    config.num_modalities = 1;
    EXPECT_THROW(verify_bounds(config), ConfigError);
}
