#include <gtest/gtest.h>

#include <cmath>

#include "msgnet/ops.hpp"
#include "support/gradcheck.hpp"

using namespace msgnet;
using msgnet::testing::grad_check;
using msgnet::testing::probe;
using msgnet::testing::random_tensor;

namespace {

constexpr double kGradTol = 1e-4;

Var param(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0)
{
    return Var::parameter(random_tensor(std::move(s), rng, lo, hi));
}

} // namespace

TEST(Ops, BroadcastAddMatchesLoop)
{
    Rng rng(1);
    Var a = param({2, 3, 4}, rng), b = param({3, 1}, rng);
    Tensor y = add(a, b).value();
    for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 3; ++j)
            for (std::size_t k = 0; k < 4; ++k)
                EXPECT_DOUBLE_EQ(y.at({i, j, k}), a.value().at({i, j, k}) + b.value().at({j, 0}));
    Tape::current().clear();
    EXPECT_THROW(add(param({2, 3}, rng), param({4}, rng)), DimensionError);
    Tape::current().clear();
}

TEST(Ops, MatmulMatchesLoopWithBatchBroadcast)
{
    Rng rng(2);
    Var a = param({3, 4}, rng), b = param({2, 4, 5}, rng);
    Tensor y = matmul(a, b).value();
    ASSERT_EQ(y.shape(), (Shape{2, 3, 5}));
    for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 5; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < 4; ++p)
                    s += a.value().at({i, p}) * b.value().at({n, p, j});
                EXPECT_NEAR(y.at({n, i, j}), s, 1e-12);
            }
    Tape::current().clear();
}

TEST(Ops, MatmulMismatchNamesBothShapes)
{
    Rng rng(3);
    try {
        matmul(param({2, 3}, rng), param({4, 5}, rng));
        FAIL();
    } catch (const DimensionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2,3]"), std::string::npos);
        EXPECT_NE(msg.find("[4,5]"), std::string::npos);
    }
    Tape::current().clear();
}

TEST(Ops, SoftmaxRowsSumToOne)
{
    Rng rng(4);
    Var x = param({5, 7}, rng, -30, 30);
    Tensor y = softmax(x, 1).value();
    for (std::size_t r = 0; r < 5; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < 7; ++c) {
            EXPECT_GE(y.at({r, c}), 0.0);
            s += y.at({r, c});
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
    Tape::current().clear();
}

TEST(Ops, SoftmaxSurvivesLargeLogits)
{
    Var x = Var::constant(Tensor({2}, {1000.0, 0.0}));
    Tensor y = softmax(x, 0).value();
    EXPECT_DOUBLE_EQ(y[0], 1.0);
    EXPECT_TRUE(y.all_finite());
}

TEST(Ops, GeluReferenceValues)
{
    Tensor y = gelu(Var::constant(Tensor({3}, {0.0, 1.0, -1.0}))).value();
    EXPECT_DOUBLE_EQ(y[0], 0.0);
    EXPECT_NEAR(y[1], 0.8413447460685429, 1e-15);
    EXPECT_NEAR(y[2], -0.15865525393145707, 1e-15);
}

TEST(Ops, Conv1dMatchesLoopOracle)
{
    Rng rng(5);
    Var x = param({2, 3, 6}, rng), w = param({4, 3, 3}, rng);
    Tensor y = conv1d(x, w).value();
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t o = 0; o < 4; ++o)
            for (std::size_t t = 0; t < 6; ++t) {
                double s = 0.0;
                for (std::size_t c = 0; c < 3; ++c)
                    for (std::size_t k = 0; k < 3; ++k) {
                        const long src = static_cast<long>(t) + static_cast<long>(k) - 1;
                        if (src >= 0 && src < 6)
                            s += w.value().at({o, c, k}) * x.value().at({b, c, static_cast<std::size_t>(src)});
                    }
                EXPECT_NEAR(y.at({b, o, t}), s, 1e-12);
            }
    Tape::current().clear();
}

TEST(Ops, ShapeOpsRoundTrip)
{
    Rng rng(6);
    Var x = param({2, 3, 4}, rng);
    EXPECT_EQ(permute(permute(x, {2, 0, 1}), {1, 2, 0}).value(), x.value());
    EXPECT_EQ(transpose(x, 0, 2).value().at({3, 1, 0}), x.value().at({0, 1, 3}));
    Var joined = concat({slice(x, 1, 0, 1), slice(x, 1, 1, 2)}, 1);
    EXPECT_EQ(joined.value(), x.value());
    Var padded = pad_end(x, 2, 6);
    EXPECT_EQ(padded.value().at({1, 2, 3}), x.value().at({1, 2, 3}));
    EXPECT_EQ(padded.value().at({1, 2, 5}), 0.0);
    EXPECT_THROW(slice(x, 2, 3, 2), RangeError);
    Tape::current().clear();
}

TEST(Ops, ReductionsMatchLoops)
{
    Rng rng(7);
    Var x = param({3, 4}, rng);
    Tensor s1 = sum(x, 1).value();
    Tensor m0 = mean(x, 0, true).value();
    ASSERT_EQ(m0.shape(), (Shape{1, 4}));
    double total = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        double r = 0.0;
        for (std::size_t j = 0; j < 4; ++j)
            r += x.value().at({i, j});
        EXPECT_NEAR(s1[i], r, 1e-14);
        total += r;
    }
    EXPECT_NEAR(sum(x).value().item(), total, 1e-14);
    EXPECT_NEAR(mean(x).value().item(), total / 12.0, 1e-14);
    Tape::current().clear();
}

TEST(Ops, EmbeddingGathersRows)
{
    Var table = Var::constant(Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
    Tensor y = embedding(table, {2, 0, 2}, {3}).value();
    EXPECT_EQ(y, Tensor({3, 2}, {5, 6, 1, 2, 5, 6}));
    EXPECT_THROW(embedding(table, {3}, {1}), RangeError);
}

TEST(Ops, DropoutZeroIsIdentityAndKeepsExpectation)
{
    Rng rng(8);
    Var x = Var::constant(Tensor({20000}, 1.0));
    EXPECT_EQ(dropout(x, 0.0, rng).value(), x.value());
    Tensor y = dropout(x, 0.25, rng).value();
    double s = 0.0;
    for (auto v : y.data())
        s += v;
    EXPECT_NEAR(s / 20000.0, 1.0, 0.03);
    EXPECT_THROW(dropout(x, 1.0, rng), RangeError);
}

TEST(Ops, TopKDescendingWithLowIndexTies)
{
    const std::vector<double> v{1.0, 3.0, 2.0, 3.0, 0.5};
    EXPECT_EQ(top_k(v, 3), (std::vector<std::size_t>{1, 3, 2}));
    EXPECT_THROW(top_k(v, 6), RangeError);
}

// ---- gradient checks for every differentiable primitive ----------------------------

TEST(OpsGrad, ElementwiseBinary)
{
    Rng rng(10);
    Var a = param({2, 3}, rng), b = param({3}, rng), c = param({2, 1}, rng, 0.5, 2.0);
    auto r = grad_check([&] { return probe(div(sub(mul(add(a, b), b), a), c)); }, {{"a", a}, {"b", b}, {"c", c}});
    EXPECT_LT(r.worst, kGradTol) << r.worst_name;
}

TEST(OpsGrad, ElementwiseUnary)
{
    Rng rng(11);
    Var x = param({4, 5}, rng, -2, 2);
    for (auto [name, fn] : std::vector<std::pair<std::string, std::function<Var(const Var&)>>>{
             {"square", [](const Var& v) { return square(v); }},
             {"tanh", [](const Var& v) { return tanh(v); }},
             {"gelu", [](const Var& v) { return gelu(v); }},
             {"relu", [](const Var& v) { return relu(v); }},
             {"abs", [](const Var& v) { return abs(v); }},
             {"scale", [](const Var& v) { return scale(v, -1.7); }},
             {"add_scalar", [](const Var& v) { return add_scalar(v, 0.3); }}}) {
        auto r = grad_check([&] { return probe(fn(x)); }, {{name, x}});
        EXPECT_LT(r.worst, kGradTol) << name;
    }
}

TEST(OpsGrad, ShapeOps)
{
    Rng rng(12);
    Var x = param({2, 3, 4}, rng), y = param({2, 2, 4}, rng);
    auto r = grad_check(
        [&] {
            Var p = permute(x, {1, 2, 0});
            Var t = transpose(reshape(p, {3, 8}), 0, 1);
            Var c = concat({x, y}, 1);
            Var s = slice(c, 1, 2, 3);
            Var pad = pad_end(s, 2, 7);
            return add(probe(t, 1), probe(pad, 2));
        },
        {{"x", x}, {"y", y}});
    EXPECT_LT(r.worst, kGradTol) << r.worst_name;
}

TEST(OpsGrad, Reductions)
{
    Rng rng(13);
    Var x = param({3, 4, 2}, rng);
    auto r = grad_check(
        [&] { return add(add(probe(sum(x, 1), 3), probe(mean(x, -1, true), 4)), scale(mean(square(x)), 2.0)); },
        {{"x", x}});
    EXPECT_LT(r.worst, kGradTol);
}

TEST(OpsGrad, Softmax)
{
    Rng rng(14);
    Var x = param({3, 5}, rng, -3, 3);
    auto r0 = grad_check([&] { return probe(softmax(x, 0)); }, {{"x", x}});
    auto r1 = grad_check([&] { return probe(softmax(x, 1)); }, {{"x", x}});
    EXPECT_LT(r0.worst, kGradTol);
    EXPECT_LT(r1.worst, kGradTol);
}

TEST(OpsGrad, MatmulBatchedAndBroadcast)
{
    Rng rng(15);
    Var a = param({3, 4}, rng), b = param({2, 4, 5}, rng), c = param({2, 5, 2}, rng);
    auto r = grad_check([&] { return probe(matmul(matmul(a, b), c)); }, {{"a", a}, {"b", b}, {"c", c}});
    EXPECT_LT(r.worst, kGradTol) << r.worst_name;
}

TEST(OpsGrad, Conv1d)
{
    Rng rng(16);
    Var x = param({2, 3, 5}, rng), w = param({2, 3, 3}, rng);
    auto r = grad_check([&] { return probe(conv1d(x, w)); }, {{"x", x}, {"w", w}});
    EXPECT_LT(r.worst, kGradTol) << r.worst_name;
}

TEST(OpsGrad, Embedding)
{
    Rng rng(17);
    Var table = param({4, 3}, rng);
    auto r = grad_check([&] { return probe(embedding(table, {1, 3, 1, 0}, {2, 2})); }, {{"table", table}});
    EXPECT_LT(r.worst, kGradTol);
}

// ---- hand-worked cases --------------------------------------------------------------

TEST(OpsExamples, MatmulIdentityAndHandProduct)
{
    Var eye = Var::constant(Tensor({2, 2}, {1, 0, 0, 1}));
    Var col = Var::constant(Tensor({2, 1}, {3, 4}));
    EXPECT_EQ(matmul(eye, col).value(), col.value());
    EXPECT_EQ(matmul(Var::constant(Tensor({1, 2}, {1, 2})), col).value(), Tensor({1, 1}, {11.0}));
}

TEST(OpsExamples, SoftmaxClosedForms)
{
    Tensor u = softmax(Var::constant(Tensor({3}, 0.0)), 0).value();
    for (auto v : u.data())
        EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
    Tensor p = softmax(Var::constant(Tensor({2}, {1.0, 0.0})), 0).value();
    EXPECT_NEAR(p[0], std::exp(1.0) / (std::exp(1.0) + 1.0), 1e-15);
    EXPECT_NEAR(p[1], 1.0 / (std::exp(1.0) + 1.0), 1e-15);
}

TEST(OpsExamples, SoftmaxShiftInvariance)
{
    Rng rng(20);
    Tensor x = random_tensor({4, 6}, rng);
    Tensor shifted = x;
    for (auto& v : shifted.data())
        v += 7.25;
    EXPECT_LT(max_abs_diff(softmax(Var::constant(x), 1).value(), softmax(Var::constant(shifted), 1).value()), 1e-12);
}

TEST(OpsExamples, Conv1dHandKernels)
{
    Var x = Var::constant(Tensor({1, 1, 3}, {1, 2, 3}));
    EXPECT_EQ(conv1d(x, Var::constant(Tensor({1, 1, 3}, {0, 1, 0}))).value(), x.value());
    EXPECT_EQ(conv1d(x, Var::constant(Tensor({1, 1, 3}, {1, 1, 1}))).value(), Tensor({1, 1, 3}, {3, 6, 5}));
    EXPECT_THROW(conv1d(x, Var::constant(Tensor({1, 2, 3}))), DimensionError);
}

TEST(OpsExamples, BackwardHandCases)
{
    Var x = Var::parameter(Tensor::scalar(3.0));
    backward(square(x));
    EXPECT_DOUBLE_EQ(x.grad().item(), 6.0);

    Rng rng(21);
    Var v = Var::parameter(random_tensor({5}, rng));
    backward(sum(softmax(v, 0)));
    const Tensor g_v = v.grad();
    for (auto g : g_v.data())
        EXPECT_NEAR(g, 0.0, 1e-15);
}

TEST(OpsExamples, ReshapeTransposeRoundTripBitExact)
{
    Rng rng(22);
    Var x = Var::constant(random_tensor({3, 5, 2}, rng));
    EXPECT_EQ(reshape(reshape(x, {6, 5}), {3, 5, 2}).value(), x.value());
    EXPECT_EQ(transpose(transpose(x, 0, 1), 0, 1).value(), x.value());
}
