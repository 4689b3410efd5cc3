#include "gated_mip/errors.hpp"
#include "gated_mip/tensor.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

using namespace gmip;
using gmip::testing::project;
using gmip::testing::random_tensor;
using gmip::testing::to_vector;

namespace {

constexpr double kTol = 1e-4;
constexpr double kStep = 1e-6;

struct UnaryCase {
    const char* name;
    std::function<Tensor(const Tensor&)> op;
    double shift = 0.0;
};

void PrintTo(const UnaryCase& c, std::ostream* os) { *os << c.name; }

} // namespace

TEST(Tensor, FactoriesAndShapes) {
    const Tensor z = Tensor::zeros({2, 3});
    EXPECT_EQ(z.numel(), 6u);
    EXPECT_EQ(z.rank(), 2u);
    EXPECT_EQ(z.dim(1), 3u);
    EXPECT_DOUBLE_EQ(Tensor::full({4}, 2.5).data()[3], 2.5);
    EXPECT_DOUBLE_EQ(Tensor::scalar(7.0).item(), 7.0);
    EXPECT_THROW(Tensor::from_data({2, 2}, {1.0, 2.0}), DimensionError);
    EXPECT_THROW(Tensor::zeros({2, 3}).item(), DimensionError);
    EXPECT_EQ(shape_to_string({2, 3}), "[2x3]");
}

TEST(Tensor, MatmulMatchesNaiveLoop) {
    std::mt19937_64 rng(1);
    const Tensor a = random_tensor({5, 7}, rng);
    const Tensor b = random_tensor({7, 3}, rng);
    const Tensor c = matmul(a, b);
    ASSERT_EQ(c.shape(), (Shape{5, 3}));
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            double expected = 0.0;
            for (std::size_t k = 0; k < 7; ++k) expected += a.at(i, k) * b.at(k, j);
            EXPECT_NEAR(c.at(i, j), expected, 1e-12);
        }
    }
    EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Tensor, TransposeAndReductions) {
    const Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor tt = transpose(t);
    EXPECT_EQ(tt.shape(), (Shape{3, 2}));
    EXPECT_DOUBLE_EQ(tt.at(2, 1), 6.0);
    EXPECT_DOUBLE_EQ(sum(t).item(), 21.0);
    EXPECT_DOUBLE_EQ(mean(t).item(), 3.5);
    EXPECT_EQ(to_vector(sum(t, 0)), (std::vector<double>{5, 7, 9}));
    EXPECT_EQ(to_vector(sum(t, 1)), (std::vector<double>{6, 15}));
    EXPECT_EQ(to_vector(mean(t, 1)), (std::vector<double>{2, 5}));
}

TEST(Tensor, ElementwiseBroadcastOfSingleElement) {
    const Tensor t = Tensor::from_data({3}, {1, 2, 3});
    EXPECT_EQ(to_vector(mul(t, Tensor::scalar(2.0))), (std::vector<double>{2, 4, 6}));
    EXPECT_EQ(to_vector(sub(Tensor::scalar(1.0), t)), (std::vector<double>{0, -1, -2}));
    EXPECT_THROW(add(t, Tensor::zeros({2})), DimensionError);
}

TEST(Tensor, SoftmaxRowsSumToOneAndAreShiftInvariant) {
    std::mt19937_64 rng(2);
    const Tensor x = random_tensor({4, 5}, rng, false, 10.0);
    const Tensor p = softmax_rows(x);
    const Tensor q = softmax_rows(shift(x, 1000.0));
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < 5; ++c) {
            total += p.at(r, c);
            EXPECT_NEAR(p.at(r, c), q.at(r, c), 1e-12);
        }
        EXPECT_NEAR(total, 1.0, 1e-12);
    }
}

TEST(Tensor, CrossEntropyMatchesDirectFormula) {
    std::mt19937_64 rng(3);
    const Tensor logits = random_tensor({3, 4}, rng, false, 3.0);
    const std::vector<std::size_t> targets{0, 3, 2};
    double expected = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        double z = 0.0;
        for (std::size_t c = 0; c < 4; ++c) z += std::exp(logits.at(r, c));
        expected += std::log(z) - logits.at(r, targets[r]);
    }
    EXPECT_NEAR(log_softmax_cross_entropy(logits, targets).item(), expected / 3.0, 1e-12);
    const std::vector<std::size_t> bad{0, 4, 0};
    EXPECT_THROW(log_softmax_cross_entropy(logits, bad), IndexError);
}

TEST(Tensor, CrossEntropyStableForHugeLogits) {
    const Tensor logits = Tensor::from_data({1, 3}, {1e4, 0.0, -1e4});
    const std::vector<std::size_t> targets{1};
    EXPECT_NEAR(log_softmax_cross_entropy(logits, targets).item(), 1e4, 1e-6);
}

TEST(Tensor, L2NormalizeProducesUnitRowsAndGuardsZeros) {
    const Tensor x = Tensor::from_data({2, 2}, {3, 4, 0, 0});
    const Tensor n = l2_normalize(x);
    EXPECT_NEAR(n.at(0, 0), 0.6, 1e-15);
    EXPECT_NEAR(n.at(0, 1), 0.8, 1e-15);
    EXPECT_EQ(n.at(1, 0), 0.0);
    EXPECT_TRUE(std::isfinite(n.at(1, 1)));
}

TEST(Tensor, GatheredDotMatchesLoopOnBothPaths) {
    std::mt19937_64 rng(4);
    for (const std::size_t pool : {3u, 200u}) {
        const Tensor x = random_tensor({4, 6}, rng);
        const Tensor y = random_tensor({pool, 6}, rng);
        const PairIndex idx = gmip::testing::random_pairs(4, 5, pool, rng);
        const Tensor out = gathered_dot(x, y, idx);
        for (std::size_t r = 0; r < 4; ++r) {
            for (std::size_t c = 0; c < 5; ++c) {
                double expected = 0.0;
                for (std::size_t j = 0; j < 6; ++j) expected += x.at(r, j) * y.at(idx.at(r, c), j);
                EXPECT_NEAR(out.at(r, c), expected, 1e-12);
            }
        }
    }
    PairIndex bad{1, 1, {9}};
    EXPECT_THROW(gathered_dot(Tensor::zeros({1, 2}), Tensor::zeros({3, 2}), bad), IndexError);
}

TEST(Tensor, DropoutKeepsExpectationAndIsIdentityAtZeroRate) {
    std::mt19937_64 rng(5);
    const Tensor ones = Tensor::full({20000}, 1.0);
    EXPECT_EQ(to_vector(dropout(ones, 0.0, rng)), to_vector(ones));
    const Tensor d = dropout(ones, 0.25, rng);
    std::size_t zeros = 0;
    for (double v : d.data()) {
        if (v == 0.0) ++zeros;
        else EXPECT_NEAR(v, 1.0 / 0.75, 1e-15);
    }
    EXPECT_NEAR(static_cast<double>(zeros) / 20000.0, 0.25, 0.02);
    EXPECT_THROW(dropout(ones, 1.0, rng), DomainError);
}

TEST(Tensor, NoGradGuardStopsRecording) {
    const Tensor x = Tensor::from_data({2}, {1, 2}, true);
    {
        NoGradGuard guard;
        EXPECT_FALSE(grad_enabled());
        EXPECT_FALSE(mul(x, x).requires_grad());
    }
    EXPECT_TRUE(grad_enabled());
    EXPECT_TRUE(mul(x, x).requires_grad());
}

TEST(Tensor, GradientsAccumulateAcrossBackwardCalls) {
    const Tensor x = Tensor::from_data({2}, {1, 2}, true);
    sum(mul(x, x)).backward();
    sum(mul(x, x)).backward();
    EXPECT_EQ(x.grad(), (std::vector<double>{4, 8}));
    Tensor y = x;
    y.zero_grad();
    EXPECT_EQ(x.grad(), (std::vector<double>{0, 0}));
}

TEST(Tensor, SharedSubexpressionGradient) {
    const Tensor x = Tensor::scalar(3.0, true);
    const Tensor y = mul(x, x);
    sum(add(y, mul(y, x))).backward();
    EXPECT_NEAR(x.grad()[0], 2 * 3.0 + 3 * 9.0, 1e-12);
}

class UnaryGradient : public ::testing::TestWithParam<UnaryCase> {};

TEST_P(UnaryGradient, MatchesCentralDifferences) {
    std::mt19937_64 rng(11);
    Tensor x = random_tensor({4, 8}, rng, true);
    if (GetParam().shift != 0.0) {
        for (double& v : x.mutable_data()) v = std::abs(v) + GetParam().shift;
    }
    const auto op = GetParam().op;
    EXPECT_LT(gradient_check([&](const Tensor& t) { return project(op(t)); }, x, kStep), kTol) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(
    Ops, UnaryGradient,
    ::testing::Values(UnaryCase{"exp", [](const Tensor& t) { return exp(t); }},
                      UnaryCase{"log", [](const Tensor& t) { return log(t); }, 0.5},
                      UnaryCase{"sqrt", [](const Tensor& t) { return sqrt(t); }, 0.5},
                      UnaryCase{"relu", [](const Tensor& t) { return relu(t); }},
                      UnaryCase{"sigmoid", [](const Tensor& t) { return sigmoid(t); }},
                      UnaryCase{"clamp_min", [](const Tensor& t) { return clamp_min(t, 0.1); }},
                      UnaryCase{"scale", [](const Tensor& t) { return scale(t, -2.5); }},
                      UnaryCase{"shift", [](const Tensor& t) { return shift(t, 4.0); }},
                      UnaryCase{"sum_all", [](const Tensor& t) { return sum(t); }},
                      UnaryCase{"mean_all", [](const Tensor& t) { return mean(t); }},
                      UnaryCase{"sum_axis0", [](const Tensor& t) { return sum(t, 0); }},
                      UnaryCase{"mean_axis1", [](const Tensor& t) { return mean(t, 1); }},
                      UnaryCase{"l2_normalize", [](const Tensor& t) { return l2_normalize(t); }},
                      UnaryCase{"softmax_rows", [](const Tensor& t) { return softmax_rows(t); }},
                      UnaryCase{"transpose", [](const Tensor& t) { return transpose(t); }},
                      UnaryCase{"reshape", [](const Tensor& t) { return reshape(t, {8, 4}); }},
                      UnaryCase{"column", [](const Tensor& t) { return column(t, 5); }},
                      UnaryCase{"take", [](const Tensor& t) { return take(t, 13); }},
                      UnaryCase{"row_dot_self", [](const Tensor& t) { return row_dot(t, t); }},
                      UnaryCase{"cross_entropy",
                                [](const Tensor& t) {
                                    const std::vector<std::size_t> targets{1, 0, 7, 3};
                                    return log_softmax_cross_entropy(t, targets);
                                }},
                      UnaryCase{"matmul_self_transpose", [](const Tensor& t) { return matmul(t, transpose(t)); }},
                      UnaryCase{"dropout_fixed_mask",
                                [](const Tensor& t) {
                                    std::mt19937_64 mask_rng(3);
                                    return dropout(t, 0.3, mask_rng);
                                }}),
    [](const ::testing::TestParamInfo<UnaryCase>& info) { return std::string(info.param.name); });

TEST(Gradient, BinaryOpsBothOperands) {
    std::mt19937_64 rng(12);
    const std::vector<std::pair<const char*, std::function<Tensor(const Tensor&, const Tensor&)>>> ops{
        {"add", [](const Tensor& a, const Tensor& b) { return add(a, b); }},
        {"sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); }},
        {"mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); }},
        {"div", [](const Tensor& a, const Tensor& b) { return div(a, b); }},
        {"row_dot", [](const Tensor& a, const Tensor& b) { return row_dot(a, b); }},
        {"matmul_bt", [](const Tensor& a, const Tensor& b) { return matmul(a, transpose(b)); }},
    };
    for (const auto& [name, op] : ops) {
        Tensor a = random_tensor({4, 8}, rng, true);
        Tensor b = random_tensor({4, 8}, rng, true);
        for (double& v : b.mutable_data()) v = std::abs(v) + 0.5;
        EXPECT_LT(gradient_check([&]() { return project(op(a, b)); }, a, kStep), kTol) << name << " lhs";
        EXPECT_LT(gradient_check([&]() { return project(op(a, b)); }, b, kStep), kTol) << name << " rhs";
    }
}

TEST(Gradient, BroadcastScalarOperand) {
    std::mt19937_64 rng(13);
    Tensor a = random_tensor({4, 8}, rng, true);
    Tensor s = Tensor::scalar(0.7, true);
    EXPECT_LT(gradient_check([&]() { return project(mul(a, s)); }, s, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(add(s, a)); }, s, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(div(a, s)); }, s, kStep), kTol);
}

TEST(Gradient, RowStructuredOps) {
    std::mt19937_64 rng(14);
    Tensor x = random_tensor({4, 8}, rng, true);
    Tensor v = random_tensor({8}, rng, true);
    Tensor r = random_tensor({4}, rng, true);
    EXPECT_LT(gradient_check([&]() { return project(add_rowvec(x, v)); }, x, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(add_rowvec(x, v)); }, v, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(mul_rowvec(x, v)); }, x, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(mul_rowvec(x, v)); }, v, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(scale_rows(x, r)); }, x, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(scale_rows(x, r)); }, r, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(outer(r, v)); }, r, kStep), kTol);
    EXPECT_LT(gradient_check([&]() { return project(outer(r, v)); }, v, kStep), kTol);
    Tensor c1 = random_tensor({5}, rng, true), c2 = random_tensor({5}, rng, true);
    EXPECT_LT(gradient_check([&]() { return project(stack_columns({c1, c2})); }, c2, kStep), kTol);
}

TEST(Gradient, GatherAndGatheredDotBothPaths) {
    std::mt19937_64 rng(15);
    for (const std::size_t pool : {3u, 64u}) {
        Tensor x = random_tensor({4, 8}, rng, true);
        Tensor y = random_tensor({pool, 8}, rng, true);
        Tensor v = random_tensor({pool}, rng, true);
        const PairIndex idx = gmip::testing::random_pairs(4, 3, pool, rng);
        EXPECT_LT(gradient_check([&]() { return project(gathered_dot(x, y, idx)); }, x, kStep), kTol);
        EXPECT_LT(gradient_check([&]() { return project(gathered_dot(x, y, idx)); }, y, kStep), kTol);
        EXPECT_LT(gradient_check([&]() { return project(gather(v, idx)); }, v, kStep), kTol);
    }
}

TEST(Gradient, CheckerDetectsWrongGradient) {
    Tensor x = Tensor::from_data({3}, {0.3, -0.2, 0.9}, true);
    const double err = gradient_check([&]() { return sum(mul(x, x.detach())); }, x, kStep);
    EXPECT_GT(err, 0.1);
}
