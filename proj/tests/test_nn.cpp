#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_util.hpp"

using namespace clbench;
using namespace clbench::testing;

namespace {

// Straight loop implementation used as the forward oracle.
Matrix loop_forward(const Network& net, const Matrix& x, const GateVector* gates) {
    Matrix a = x;
    const auto& dims = net.layer_dims();
    for (int l = 0; l < net.layer_count(); ++l) {
        Matrix z(a.rows(), dims[l + 1]);
        for (Eigen::Index r = 0; r < a.rows(); ++r)
            for (int i = 0; i < dims[l + 1]; ++i) {
                double s = net.params()[static_cast<Eigen::Index>(net.bias_offset(l)) + i];
                for (int j = 0; j < dims[l]; ++j)
                    s += net.params()[static_cast<Eigen::Index>(net.weight_offset(l)) + i * dims[l] + j] * a(r, j);
                if (l + 1 < net.layer_count()) {
                    s = std::max(0.0, s);
                    if (gates)
                        s *= (*gates)[net.gate_offset(l) + i];
                }
                z(r, i) = s;
            }
        a = z;
    }
    return a;
}

} // namespace

TEST(Network, LayoutIsLayerMajorRowMajor) {
    Network net({3, 4, 2});
    EXPECT_EQ(net.parameter_count(), 3 * 4 + 4 + 4 * 2 + 2);
    EXPECT_EQ(net.weight_offset(0), 0u);
    EXPECT_EQ(net.bias_offset(0), 12u);
    EXPECT_EQ(net.weight_offset(1), 16u);
    EXPECT_EQ(net.bias_offset(1), 24u);
    net.params()[1] = 5.0; // W0(0,1)
    EXPECT_EQ(net.weights(0)(0, 1), 5.0);
    EXPECT_EQ(net.hidden_units(), 4);
    EXPECT_THROW(Network({3}), ConfigError);
    EXPECT_THROW(Network({3, 0, 2}), ConfigError);
}

TEST(Network, InitializationIsSeededAndFinite) {
    const Network a = Network::initialized({8, 5, 3}, 42);
    const Network b = Network::initialized({8, 5, 3}, 42);
    const Network c = Network::initialized({8, 5, 3}, 43);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == c);
    EXPECT_TRUE(a.params().allFinite());
    EXPECT_EQ(a.bias(0).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, IdentitySingleLayer) {
    Network net({2, 2});
    net.weights(0) = Matrix::Identity(2, 2);
    Matrix x(1, 2);
    x << 1, 2;
    const Matrix y = forward(net, x);
    EXPECT_EQ(y(0, 0), 1.0);
    EXPECT_EQ(y(0, 1), 2.0);
}

TEST(Forward, HandSetTwoTwoTwo) {
    Network net({2, 2, 2});
    net.weights(0) << 1, 2, -3, 4;
    net.params().segment(static_cast<Eigen::Index>(net.bias_offset(0)), 2) << 0.5, 1.0;
    net.weights(1) << 1, -1, 2, 0.5;
    net.params().segment(static_cast<Eigen::Index>(net.bias_offset(1)), 2) << 0.1, -0.2;
    Matrix x(1, 2);
    x << 1, 0;
    // hidden: relu(1+0.5, -3+1) = (1.5, 0); out: (1.5 + 0.1, 3 - 0.2)
    const Matrix y = forward(net, x);
    EXPECT_DOUBLE_EQ(y(0, 0), 1.6);
    EXPECT_DOUBLE_EQ(y(0, 1), 2.8);
}

TEST(Forward, ZeroGatesLeaveOutputBias) {
    std::mt19937_64 rng(1);
    Network net({4, 5, 3, 2});
    net.params() = random_vector(rng, net.parameter_count());
    const GateVector zero = GateVector::Zero(net.hidden_units());
    const Matrix y = forward(net, random_matrix(rng, 6, 4), &zero);
    for (Eigen::Index r = 0; r < y.rows(); ++r)
        for (int c = 0; c < 2; ++c)
            EXPECT_EQ(y(r, c), net.bias(2)[c]);
}

TEST(Forward, MatchesLoopOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        Network net({5, 7, 4, 3});
        net.params() = random_vector(rng, net.parameter_count());
        const Matrix x = random_matrix(rng, 4, 5);
        GateVector g(net.hidden_units());
        for (Eigen::Index i = 0; i < g.size(); ++i)
            g[i] = std::uniform_real_distribution<double>(0, 1)(rng);
        EXPECT_LT((forward(net, x) - loop_forward(net, x, nullptr)).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((forward(net, x, &g) - loop_forward(net, x, &g)).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Forward, DimensionMismatchIsConfigError) {
    Network net({3, 2});
    EXPECT_THROW(forward(net, Matrix::Zero(1, 4)), ConfigError);
    Network deep({3, 4, 2});
    GateVector g = GateVector::Ones(3);
    EXPECT_THROW(forward(deep, Matrix::Zero(1, 3), &g), ConfigError);
}

TEST(CrossEntropy, HandValues) {
    EXPECT_NEAR(softmax_cross_entropy(RowVector::Zero(4), 2), std::log(4.0), 1e-12);
    RowVector sat(2);
    sat << 100, 0;
    EXPECT_LT(softmax_cross_entropy(sat, 0), 1e-6);
    RowVector z(2);
    z << 1, 0;
    EXPECT_NEAR(softmax_cross_entropy(z, 1), std::log(1 + std::exp(1.0)), 1e-12);
    RowVector bad(2);
    bad << std::nan(""), 0;
    EXPECT_THROW(softmax_cross_entropy(bad, 0), NumericError);
}

TEST(CrossEntropy, SoftmaxRowsSumToOneAndLossNonnegative) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 500; ++t) {
        const RowVector z = random_matrix(rng, 1, 7, 20.0).row(0);
        EXPECT_NEAR(softmax(z).sum(), 1.0, 1e-12);
        EXPECT_GE(softmax_cross_entropy(z, t % 7), 0.0);
    }
}

TEST(Distillation, KlAgainstDirectFormula) {
    RowVector logits(2), target(2);
    logits << 0, 0;
    target << 1, 0;
    const double q0 = std::exp(1.0) / (std::exp(1.0) + 1.0), q1 = 1.0 - q0;
    const double oracle = q0 * std::log(q0 / 0.5) + q1 * std::log(q1 / 0.5);
    EXPECT_NEAR(distillation_loss(logits, target, 1.0), oracle, 1e-12);
    EXPECT_NEAR(distillation_loss(logits, target, 1.0), 0.11094407167172735, 1e-12);
}

TEST(Distillation, IdentityAndFlattening) {
    std::mt19937_64 rng(4);
    const RowVector a = random_matrix(rng, 1, 5).row(0);
    const RowVector b = random_matrix(rng, 1, 5).row(0);
    EXPECT_EQ(distillation_loss(a, a, 2.0), 0.0);
    EXPECT_LT(std::abs(distillation_loss(a, b, 1e6)), 1e-6);
    EXPECT_THROW(distillation_loss(a, RowVector::Zero(4), 2.0), ConfigError);
    EXPECT_THROW(distillation_loss(a, b, 0.0), ConfigError);
}

TEST(Backward, FiniteDifferenceThreeFourThree) {
    std::mt19937_64 rng(5);
    int checked = 0;
    while (checked < 10) {
        GradCase c{Network({3, 4, 3}), {}, {}, {}};
        c.net.params() = random_vector(rng, c.net.parameter_count());
        c.batch.inputs = random_matrix(rng, 8, 3);
        for (int i = 0; i < 8; ++i)
            c.batch.labels.push_back(i % 3);
        c.spec.cross_entropy = CrossEntropyTerm{};
        if (near_kink(c.net, c.batch.inputs, nullptr, 1e-3))
            continue;
        EXPECT_LT(max_fd_error(c), 1e-4);
        ++checked;
    }
}

TEST(Backward, FiniteDifferenceRandomCompositions) {
    std::mt19937_64 rng(6);
    double worst = 0;
    for (int t = 0; t < 150; ++t) {
        GradCase c = random_grad_case(rng);
        worst = std::max(worst, max_fd_error(c));
    }
    EXPECT_LT(worst, 1e-4);
}

TEST(Backward, OptimumHasNearZeroGradient) {
    Network net({2, 2});
    net.weights(0) << 60, 0, 0, 60;
    Batch b;
    b.inputs = Matrix::Identity(2, 2);
    b.labels = {0, 1};
    LossSpec spec;
    spec.cross_entropy = CrossEntropyTerm{};
    EXPECT_LT(backward(net, b, spec).grads.cwiseAbs().maxCoeff(), 1e-20);
}

TEST(Backward, DoublingWeightsDoublesGradient) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 20; ++t) {
        GradCase c = random_grad_case(rng);
        const GateVector* gp = c.gates ? &*c.gates : nullptr;
        const Vector g1 = backward(c.net, c.batch, c.spec, gp).grads;
        const Vector g2 = backward(c.net, c.batch, c.spec.scaled(2.0), gp).grads;
        EXPECT_LT((g2 - 2.0 * g1).cwiseAbs().maxCoeff(), 1e-12 * (1.0 + g1.cwiseAbs().maxCoeff()));
    }
}

TEST(Backward, BitwiseDeterministic) {
    std::mt19937_64 rng(8);
    GradCase c = random_grad_case(rng);
    const GateVector* gp = c.gates ? &*c.gates : nullptr;
    const BackwardResult a = backward(c.net, c.batch, c.spec, gp);
    const BackwardResult b = backward(c.net, c.batch, c.spec, gp);
    EXPECT_EQ(a.loss, b.loss);
    EXPECT_TRUE(a.grads == b.grads);
}

TEST(Backward, ClosedGateCutsIncomingWeights) {
    std::mt19937_64 rng(9);
    Network net({3, 4, 2});
    net.params() = random_vector(rng, net.parameter_count());
    Batch b;
    b.inputs = random_matrix(rng, 5, 3);
    b.labels = {0, 1, 0, 1, 1};
    LossSpec spec;
    spec.cross_entropy = CrossEntropyTerm{};
    GateVector g = GateVector::Ones(4);
    g[2] = 0.0;
    const BackwardResult r = backward(net, b, spec, &g);
    const double base = loss_value(net, b, spec, &g);
    for (int j = 0; j < 3; ++j) {
        const auto k = static_cast<Eigen::Index>(net.weight_offset(0)) + 2 * 3 + j;
        EXPECT_EQ(r.grads[k], 0.0);
        Network moved = net;
        moved.params()[k] += 0.37;
        EXPECT_EQ(loss_value(moved, b, spec, &g), base);
    }
}

TEST(Backward, LabelOutsideRowSetIsConfigError) {
    Network net({2, 3});
    Batch b;
    b.inputs = Matrix::Zero(1, 2);
    b.labels = {2};
    LossSpec spec;
    spec.cross_entropy = CrossEntropyTerm{1.0, {{0, 1}}, {}};
    EXPECT_THROW(backward(net, b, spec), ConfigError);
}

TEST(SgdStep, HandArithmetic) {
    Network net({1, 1});
    net.params() << 1.0, 0.0;
    Vector g(2);
    g << 2.0, 0.0;
    Vector gate = Vector::Ones(2);
    sgd_step(net, g, 0.1, &gate);
    EXPECT_DOUBLE_EQ(net.params()[0], 0.8);
}

TEST(SgdStep, RejectsNonPositiveRate) {
    Network net({1, 1});
    const Vector g = Vector::Ones(2);
    EXPECT_THROW(sgd_step(net, g, 0.0), ConfigError);
    EXPECT_THROW(sgd_step(net, g, -1.0), ConfigError);
}

TEST(SgdStep, ZeroGateLeavesParametersBitIdentical) {
    std::mt19937_64 rng(10);
    Network net({4, 6, 3});
    net.params() = random_vector(rng, net.parameter_count());
    const Network before = net;
    const Vector g = random_vector(rng, net.parameter_count(), 1e3);
    const Vector zero = Vector::Zero(net.parameter_count());
    sgd_step(net, g, 0.5, &zero);
    EXPECT_TRUE(net == before);

    Vector half = Vector::Ones(net.parameter_count());
    for (Eigen::Index k = 0; k < half.size(); k += 2)
        half[k] = 0.0;
    sgd_step(net, g, 0.5, &half);
    for (Eigen::Index k = 0; k < half.size(); k += 2)
        EXPECT_EQ(std::bit_cast<std::uint64_t>(net.params()[k]), std::bit_cast<std::uint64_t>(before.params()[k]));
}

TEST(Argmax, TiesGoToLowestClass) {
    RowVector z(4);
    z << 1, 3, 3, 2;
    EXPECT_EQ(argmax_over(z), 1);
    const std::vector<int> cols = {3, 2, 1};
    EXPECT_EQ(argmax_over(z, cols), 1);
    const std::vector<int> sub = {0, 3};
    EXPECT_EQ(argmax_over(z, sub), 3);
}
