#include "gated_mip/errors.hpp"
#include "gated_mip/mip.hpp"
#include "gated_mip/objective.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace gmip;
using gmip::testing::random_tensor;

TEST(Sampling, PairCandidatesExcludeOwnPositiveAndAreDistinct) {
    std::mt19937_64 rng(1);
    const std::vector<std::size_t> positives{4, 9, 17};
    const auto sets = sample_pair_candidates(positives, 30, 10, rng);
    ASSERT_EQ(sets.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& s = sets[i];
        EXPECT_EQ(s.anchor_index, i);
        ASSERT_EQ(s.candidate_indices.size(), 11u);
        EXPECT_EQ(s.candidate_indices[s.positive_position], positives[i]);
        const std::set<std::size_t> unique(s.candidate_indices.begin(), s.candidate_indices.end());
        EXPECT_EQ(unique.size(), 11u);
    }
    EXPECT_THROW(sample_pair_candidates(positives, 18, 18, rng), ConfigError);
    EXPECT_THROW(sample_pair_candidates(positives, 10, 3, rng), IndexError);
}

TEST(Sampling, SharedCandidatesExcludeEveryBatchPositive) {
    std::mt19937_64 rng(2);
    const std::vector<std::size_t> positives{0, 5, 6, 11};
    const auto sets = sample_shared_pair_candidates(positives, 40, 20, rng);
    std::set<std::size_t> negatives;
    for (std::size_t i = 0; i < sets.size(); ++i) {
        std::set<std::size_t> mine;
        for (std::size_t c = 0; c < sets[i].candidate_indices.size(); ++c) {
            if (c == sets[i].positive_position) continue;
            const std::size_t idx = sets[i].candidate_indices[c];
            EXPECT_EQ(std::count(positives.begin(), positives.end(), idx), 0);
            mine.insert(idx);
        }
        EXPECT_EQ(mine.size(), 20u);
        if (i == 0) negatives = mine;
        else EXPECT_EQ(mine, negatives);
    }
}

TEST(Sampling, NegativesAndPositivePositionAreUniform) {
    std::mt19937_64 rng(3);
    const std::size_t pool = 12, k = 3, trials = 24000;
    std::vector<double> counts(pool, 0.0), positions(k + 1, 0.0);
    const std::vector<std::size_t> positives{0};
    for (std::size_t t = 0; t < trials; ++t) {
        const auto s = sample_pair_candidates(positives, pool, k, rng)[0];
        positions[s.positive_position] += 1;
        for (std::size_t c = 0; c < s.candidate_indices.size(); ++c) {
            if (c != s.positive_position) counts[s.candidate_indices[c]] += 1;
        }
    }
    EXPECT_EQ(counts[0], 0.0);
    const double expected = static_cast<double>(trials * k) / static_cast<double>(pool - 1);
    double chi2 = 0.0;
    for (std::size_t i = 1; i < pool; ++i) chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
    EXPECT_LT(chi2, 31.3); // 10 degrees of freedom, p = 0.0005
    const double expected_pos = static_cast<double>(trials) / static_cast<double>(k + 1);
    double chi2_pos = 0.0;
    for (double c : positions) chi2_pos += (c - expected_pos) * (c - expected_pos) / expected_pos;
    EXPECT_LT(chi2_pos, 17.7); // 3 degrees of freedom, p = 0.0005
}

TEST(Sampling, InBatchCandidates) {
    const std::vector<std::size_t> positives{7, 3, 9};
    const auto sets = sample_n_candidates(positives);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(sets[i].candidate_indices, positives);
        EXPECT_EQ(sets[i].positive_position, i);
    }
    EXPECT_THROW(sample_n_candidates(std::vector<std::size_t>{1}), ConfigError);
}

TEST(Sampling, LayoutDeduplicatesPoolRows) {
    std::vector<CandidateSet> sets(2);
    sets[0].candidate_indices = {5, 8, 2};
    sets[0].positive_position = 1;
    sets[1].candidate_indices = {8, 9, 5};
    sets[1].positive_position = 2;
    const CandidateLayout layout = layout_candidates(sets);
    EXPECT_EQ(layout.pool_indices.size(), 4u);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_EQ(layout.pool_indices[layout.index.at(r, c)], sets[r].candidate_indices[c]);
        }
    }
    EXPECT_EQ(layout.positive_positions, (std::vector<std::size_t>{1, 2}));
}

TEST(Objective, EnumsAndValidation) {
    for (auto m : {Method::clip, Method::symile, Method::gated_symile}) EXPECT_EQ(parse_method(to_string(m)), m);
    for (auto s : {Sampling::pair, Sampling::n}) EXPECT_EQ(parse_sampling(to_string(s)), s);
    EXPECT_THROW(parse_method("infonce"), ConfigError);
    ObjectiveConfig c;
    c.num_negatives = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Objective, SymileLossMatchesHandComputation) {
    std::mt19937_64 rng(4);
    const std::size_t d = 6;
    const Tensor b = l2_normalize(random_tensor({2, d}, rng));
    const Tensor c = l2_normalize(random_tensor({2, d}, rng));
    const Tensor cands = l2_normalize(random_tensor({3, d}, rng));
    const PairIndex idx{2, 3, {0, 1, 2, 2, 0, 1}};
    const std::vector<std::size_t> pos{0, 2};
    const Tensor log_scale = Tensor::scalar(0.3);
    const double s = std::exp(0.3) * static_cast<double>(d);
    double expected = 0.0;
    for (std::size_t r = 0; r < 2; ++r) {
        std::vector<double> logits;
        for (std::size_t k = 0; k < 3; ++k) {
            double m = 0.0;
            for (std::size_t j = 0; j < d; ++j) m += cands.at(idx.at(r, k), j) * b.at(r, j) * c.at(r, j);
            logits.push_back(s * m);
        }
        double z = 0.0;
        for (double l : logits) z += std::exp(l);
        expected += std::log(z) - logits[pos[r]];
    }
    const Tensor loss = symile_loss({Tensor(), b, c}, cands, idx, pos, 0, log_scale);
    EXPECT_NEAR(loss.item(), expected / 2.0, 1e-12);
}

TEST(Objective, ClipLossMatchesHandComputation) {
    std::mt19937_64 rng(5);
    const std::size_t n = 4, d = 5;
    std::vector<Tensor> e;
    for (int m = 0; m < 3; ++m) e.push_back(l2_normalize(random_tensor({n, d}, rng)));
    const double s = std::exp(-0.2);
    double expected = 0.0;
    for (std::size_t m = 1; m < 3; ++m) {
        std::vector<std::vector<double>> l(n, std::vector<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t k = 0; k < d; ++k) l[i][j] += s * e[0].at(i, k) * e[m].at(j, k);
            }
        }
        double rows = 0.0, cols = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double zr = 0.0, zc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                zr += std::exp(l[i][j]);
                zc += std::exp(l[j][i]);
            }
            rows += std::log(zr) - l[i][i];
            cols += std::log(zc) - l[i][i];
        }
        expected += 0.5 * (rows + cols) / static_cast<double>(n);
    }
    EXPECT_NEAR(clip_loss(e, Tensor::scalar(-0.2), 0).item(), expected, 1e-12);
}

TEST(Objective, ClipPairScoresSumSimilarities) {
    std::mt19937_64 rng(6);
    const Tensor b = random_tensor({2, 3}, rng), c = random_tensor({2, 3}, rng), cands = random_tensor({2, 3}, rng);
    const PairIndex idx{2, 2, {0, 1, 1, 0}};
    const Tensor s = clip_pair_scores({Tensor(), b, c}, cands, idx, 0);
    double expected = 0.0;
    for (std::size_t j = 0; j < 3; ++j) expected += (b.at(1, j) + c.at(1, j)) * cands.at(0, j);
    EXPECT_NEAR(s.at(1, 1), expected, 1e-12);
}

TEST(Objective, LossGradientsAtSmallScale) {
    std::mt19937_64 rng(7);
    const std::size_t b = 4, d = 8, k = 3;
    GateConfig gc;
    gc.gate_d_k = 4;
    GateParams gp = init_gate(gc, d, 3, 0, 11);
    for (double& x : gp.null_bias.mutable_data()) x = 0.3;
    Tensor ra = random_tensor({b, 16}, rng), rb = random_tensor({b, 16}, rng);
    Tensor proj_b = random_tensor({16, d}, rng, true, 0.3), proj_c = random_tensor({16, d}, rng, true, 0.3);
    Tensor cand_raw = random_tensor({b + k, 16}, rng);
    Tensor proj_a = random_tensor({16, d}, rng, true, 0.3);
    Tensor log_scale = Tensor::scalar(0.1, true);
    std::mt19937_64 srng(8);
    std::vector<std::size_t> positives{0, 1, 2, 3};
    const auto layout = layout_candidates(sample_shared_pair_candidates(positives, b + k, k, srng));
    const auto loss = [&]() {
        const Tensor eb = l2_normalize(matmul(ra, proj_b));
        const Tensor ec = l2_normalize(matmul(rb, proj_c));
        const Tensor cand = l2_normalize(matmul(cand_raw, proj_a));
        return symile_loss({Tensor(), eb, ec}, cand, layout.index, layout.positive_positions, 0, log_scale, &gc, &gp);
    };
    for (Tensor* p : {&proj_a, &proj_b, &proj_c, &log_scale, &gp.alpha_raw, &gp.query.weight, &gp.keys[2].weight,
                      &gp.null_head.weight, &gp.null_bias, &gp.neutral[1]}) {
        EXPECT_LT(gradient_check(loss, *p, 1e-6), 1e-4);
    }
    const auto clip = [&]() {
        return clip_loss({l2_normalize(matmul(ra, proj_a)), l2_normalize(matmul(rb, proj_b)),
                          l2_normalize(matmul(ra, proj_c))},
                         log_scale, 0);
    };
    EXPECT_LT(gradient_check(clip, proj_b, 1e-6), 1e-4);
    EXPECT_LT(gradient_check(clip, log_scale, 1e-6), 1e-4);
}
