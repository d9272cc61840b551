#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "shortcut/kernels.hpp"
#include "test_util.hpp"

using namespace shortcut;

namespace {

constexpr double kPi = std::numbers::pi;

struct McMoments {
    double mean;
    double se;
};

// E[f(u, v)] for (u, v) ~ N(0, [[a, c], [c, b]]) by plain sampling.
template <typename F>
McMoments bivariate_mc(double a, double b, double c, F f, int n, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> z;
    const double l11 = std::sqrt(a), l21 = c / l11, l22 = std::sqrt(b - l21 * l21);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double z1 = z(gen), z2 = z(gen);
        const double v = f(l11 * z1, l21 * z1 + l22 * z2);
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n;
    return {mean, std::sqrt((sum2 / n - mean * mean) / (n - 1))};
}

ArchitectureSpec arch(int depth, double sw2, double sb2, Activation act = Activation::relu) {
    ArchitectureSpec a;
    a.depth = depth;
    a.weight_variance = sw2;
    a.bias_variance = sb2;
    a.activation = act;
    return a;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }
double step(double x) { return x > 0.0 ? 1.0 : 0.0; }

} // namespace

TEST(BaseGram, ZeroInputGivesZero) {
    const Matrix x = Matrix::Zero(1, 5);
    EXPECT_EQ(base_gram(x, x, arch(1, 1.0, 0.0))(0, 0), 0.0);
}

TEST(BaseGram, NormEqualToDimension) {
    const Matrix x = Matrix::Ones(1, 9);
    EXPECT_NEAR(base_gram(x, x, arch(1, 2.0, 0.1))(0, 0), 2.1, 1e-15);
}

TEST(BaseGram, MatchesDirectDotProducts) {
    const Matrix a = testutil::random_matrix(3, 4, 1);
    const Matrix b = testutil::random_matrix(5, 4, 2);
    const auto spec = arch(1, 1.7, 0.3);
    const Matrix g = base_gram(a, b, spec);
    ASSERT_EQ(g.rows(), 5);
    ASSERT_EQ(g.cols(), 3);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 3; ++j) {
            double dot = 0.0;
            for (int k = 0; k < 4; ++k) dot += b(i, k) * a(j, k);
            EXPECT_NEAR(g(i, j), 1.7 * dot / 4.0 + 0.3, 1e-14);
        }
}

TEST(BaseGram, DimensionMismatchNamesShapes) {
    const Matrix a(2, 3), b(2, 4);
    try {
        base_gram(a, b, arch(1, 1, 0));
        FAIL();
    } catch (const DataError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("2x4"), std::string::npos) << msg;
    }
}

TEST(ActivationTransform, ReluTrivialAngles) {
    EXPECT_NEAR(activation_transform({1, 1, 1}, Activation::relu), 0.5, 1e-15);
    EXPECT_NEAR(activation_transform({1, 0, 1}, Activation::relu), 1.0 / (2.0 * kPi), 1e-15);
    EXPECT_NEAR(derivative_transform({1, 1, 1}, Activation::relu), 0.5, 1e-15);
    EXPECT_NEAR(derivative_transform({1, 0, 1}, Activation::relu), 0.25, 1e-15);
}

TEST(ActivationTransform, ReluMatchesMonteCarlo) {
    const auto mc = bivariate_mc(4, 1, 1, [](double u, double v) { return relu(u) * relu(v); }, 1'000'000, 7);
    EXPECT_NEAR(activation_transform({4, 1, 1}, Activation::relu), mc.mean, 3 * mc.se);
}

TEST(DerivativeTransform, ReluMatchesMonteCarlo) {
    const double a = 2.3, b = 0.7, c = -0.6;
    const auto mc = bivariate_mc(a, b, c, [](double u, double v) { return step(u) * step(v); }, 1'000'000, 8);
    EXPECT_NEAR(derivative_transform({a, c, b}, Activation::relu), mc.mean, 3 * mc.se);
}

TEST(ActivationTransform, ErfMatchesMonteCarlo) {
    const double a = 1.5, b = 0.8, c = 0.5;
    const auto mc = bivariate_mc(a, b, c, [](double u, double v) { return std::erf(u) * std::erf(v); }, 1'000'000, 9);
    EXPECT_NEAR(activation_transform({a, c, b}, Activation::erf), mc.mean, 3 * mc.se);
    const auto dmc = bivariate_mc(
        a, b, c, [](double u, double v) { return 4.0 / kPi * std::exp(-u * u - v * v); }, 1'000'000, 10);
    EXPECT_NEAR(derivative_transform({a, c, b}, Activation::erf), dmc.mean, 3 * dmc.se);
}

TEST(ActivationTransform, ReluRangeAndClamp) {
    // k_ab slightly above sqrt(k_aa k_bb) from round-off must not produce NaN.
    const double v = activation_transform({2, 2 + 1e-13, 2}, Activation::relu);
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_NEAR(v, 1.0, 1e-12);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.1, 3.0), r(-1.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const double a = u(gen), b = u(gen), c = r(gen) * std::sqrt(a * b);
        const double t = activation_transform({a, c, b}, Activation::relu);
        const double d = derivative_transform({a, c, b}, Activation::relu);
        EXPECT_GE(t, 0.0);
        EXPECT_LE(t, std::sqrt(a * b) + 1e-15);
        EXPECT_GE(d, 0.0);
        EXPECT_LE(d, 1.0);
    }
}

TEST(ActivationTransform, DegenerateKernelRejected) {
    EXPECT_THROW(activation_transform({0, 0, 1}, Activation::relu), NumericError);
    EXPECT_THROW(derivative_transform({1, 0, -1}, Activation::relu), NumericError);
}

TEST(PropagateKernels, OrthogonalInputsDepthOne) {
    // Rows sqrt(d) e_i have squared norm d, so the layer-0 kernel is the identity.
    const int d = 4;
    const Matrix x = std::sqrt(double(d)) * Matrix::Identity(d, d);
    const auto b = propagate_kernels(arch(1, 1.0, 0.0), x, Matrix());
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
            EXPECT_NEAR(b.nngp_train(i, j), i == j ? 0.5 : 1.0 / (2.0 * kPi), 1e-15);
}

TEST(PropagateKernels, StructuralInvariants) {
    const Matrix x = testutil::random_matrix(12, 6, 11, 0.0, 1.0);
    const Matrix e = testutil::random_matrix(5, 6, 12, 0.0, 1.0);
    for (int depth = 1; depth <= 4; ++depth) {
        const auto spec = arch(depth, 2.0, 0.01);
        const auto b = propagate_kernels(spec, x, e, true);
        EXPECT_EQ((b.nngp_train - b.nngp_train.transpose()).cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ((b.ntk_train - b.ntk_train.transpose()).cwiseAbs().maxCoeff(), 0.0);
        for (const Matrix* m : {&b.nngp_train, &b.ntk_train}) {
            Eigen::SelfAdjointEigenSolver<Matrix> es(*m);
            EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * es.eigenvalues().maxCoeff());
        }
        for (int i = 0; i < x.rows(); ++i) {
            EXPECT_GE(b.ntk_train(i, i), b.nngp_train(i, i));
            EXPECT_GE(b.nngp_train(i, i), spec.bias_variance);
            for (int j = 0; j < x.rows(); ++j)
                EXPECT_LE(std::abs(b.nngp_train(i, j)),
                          std::sqrt(b.nngp_train(i, i) * b.nngp_train(j, j)) + 1e-10);
        }
        // Eval-side blocks agree with a joint computation over train + eval.
        Matrix joint(x.rows() + e.rows(), x.cols());
        joint << x, e;
        const auto jb = propagate_kernels(spec, joint, Matrix());
        for (int i = 0; i < e.rows(); ++i) {
            EXPECT_NEAR(b.nngp_eval_diag(i), jb.nngp_train(12 + i, 12 + i), 1e-13);
            EXPECT_NEAR(b.ntk_eval_diag(i), jb.ntk_train(12 + i, 12 + i), 1e-13);
            EXPECT_NEAR((*b.nngp_eval)(i, i), b.nngp_eval_diag(i), 1e-13);
            for (int j = 0; j < x.rows(); ++j) {
                EXPECT_NEAR(b.nngp_cross(i, j), jb.nngp_train(12 + i, j), 1e-13);
                EXPECT_NEAR(b.ntk_cross(i, j), jb.ntk_train(12 + i, j), 1e-13);
            }
        }
    }
}

TEST(PropagateKernels, PermutationEquivariance) {
    const Matrix x = testutil::random_matrix(7, 5, 21);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(7);
    perm.indices() << 3, 0, 6, 1, 5, 2, 4;
    const Matrix px = perm * x;
    const auto a = propagate_kernels(arch(3, 2.0, 0.05), x, Matrix());
    const auto b = propagate_kernels(arch(3, 2.0, 0.05), px, Matrix());
    EXPECT_EQ((perm * a.nngp_train * perm.transpose() - b.nngp_train).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ((perm * a.ntk_train * perm.transpose() - b.ntk_train).cwiseAbs().maxCoeff(), 0.0);
}

TEST(PropagateKernels, ThreadCountDoesNotChangeBits) {
    const Matrix x = testutil::random_matrix(20, 8, 31);
    const Matrix e = testutil::random_matrix(9, 8, 32);
    set_thread_count(1);
    const auto a = propagate_kernels(arch(2, 2.0, 0.01), x, e);
    set_thread_count(4);
    const auto b = propagate_kernels(arch(2, 2.0, 0.01), x, e);
    set_thread_count(1);
    EXPECT_TRUE(a.ntk_train == b.ntk_train);
    EXPECT_TRUE(a.nngp_cross == b.nngp_cross);
    EXPECT_TRUE(a.ntk_cross == b.ntk_cross);
}

TEST(PropagateKernels, OverflowNamesLayer) {
    const Matrix x = testutil::random_matrix(3, 4, 41, 1.0, 2.0);
    try {
        propagate_kernels(arch(3, 1e200, 0.0), x, Matrix());
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 1"), std::string::npos) << e.what();
    }
}

TEST(PropagateKernels, RejectsSingleTrainingPoint) {
    EXPECT_THROW(propagate_kernels(ArchitectureSpec{}, Matrix::Ones(1, 3), Matrix()), DataError);
}

TEST(McKernelOracle, DepthOneAgreesWithAnalytic) {
    const Matrix x = testutil::random_matrix(4, 16, 51);
    const auto spec = arch(1, 2.0, 0.01);
    const auto analytic = propagate_kernels(spec, x, Matrix());
    const auto mc = mc_kernel_oracle(spec, x, 2048, 200, 5);
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) {
            EXPECT_NEAR(mc.nngp(i, j), analytic.nngp_train(i, j), 0.05 * std::abs(analytic.nngp_train(i, j)) + 1e-3);
            EXPECT_NEAR(mc.ntk(i, j), analytic.ntk_train(i, j), 0.05 * std::abs(analytic.ntk_train(i, j)) + 1e-3);
        }
}

TEST(McKernelOracle, ZeroInputAndDuplicates) {
    Matrix x = Matrix::Zero(3, 6);
    const auto spec = arch(2, 2.0, 0.0);
    const auto z = mc_kernel_oracle(spec, x, 512, 100, 1);
    EXPECT_LT(z.nngp.cwiseAbs().maxCoeff(), 1e-12);

    x = testutil::random_matrix(3, 6, 61);
    x.row(2) = x.row(0);
    const auto d = mc_kernel_oracle(arch(2, 2.0, 0.1), x, 512, 100, 2);
    for (int j = 0; j < 3; ++j) {
        EXPECT_DOUBLE_EQ(d.nngp(0, j), d.nngp(2, j));
        EXPECT_DOUBLE_EQ(d.ntk(j, 0), d.ntk(j, 2));
    }
}

TEST(McKernelOracle, DeterministicGivenSeed) {
    const Matrix x = testutil::random_matrix(3, 5, 71);
    const auto a = mc_kernel_oracle(arch(1, 2.0, 0.1), x, 256, 10, 99);
    set_thread_count(3);
    const auto b = mc_kernel_oracle(arch(1, 2.0, 0.1), x, 256, 10, 99);
    set_thread_count(1);
    EXPECT_TRUE(a.nngp == b.nngp);
    EXPECT_TRUE(a.ntk == b.ntk);
}

TEST(ArchitectureSpec, ValidationRejectsBadRanges) {
    EXPECT_THROW(arch(0, 1, 0).validate(), ConfigError);
    EXPECT_THROW(arch(1, 0, 0).validate(), ConfigError);
    EXPECT_THROW(arch(1, 1, -0.1).validate(), ConfigError);
}
