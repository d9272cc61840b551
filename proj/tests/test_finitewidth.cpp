#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "shortcut/datasets.hpp"
#include "shortcut/finitewidth.hpp"
#include "test_util.hpp"

using namespace shortcut;

namespace {

// Plain-loop forward pass used as an oracle.
std::vector<double> scalar_forward(const MLPParams& p, std::vector<double> x) {
    for (std::size_t l = 0; l < p.layers(); ++l) {
        std::vector<double> h(static_cast<std::size_t>(p.widths[l + 1]));
        for (int i = 0; i < p.widths[l + 1]; ++i) {
            double s = p.biases[l](i);
            for (int j = 0; j < p.widths[l]; ++j) s += p.weights[l](i, j) * x[static_cast<std::size_t>(j)];
            h[static_cast<std::size_t>(i)] = l + 1 == p.layers() ? s : std::max(s, 0.0);
        }
        x = std::move(h);
    }
    return x;
}

MLPParams random_params(std::vector<int> widths, std::uint64_t seed) {
    auto p = init_params(widths, seed);
    for (std::size_t l = 0; l < p.layers(); ++l)
        p.biases[l] = testutil::random_matrix(p.biases[l].size(), 1, seed + l, -0.3, 0.3);
    return p;
}

Vector labels(Eigen::Index n, std::uint64_t seed) {
    Vector y = testutil::random_matrix(n, 1, seed);
    for (auto& v : y) v = v > 0 ? 1.0 : -1.0;
    return y;
}

} // namespace

TEST(InitParams, DeterministicZeroBiasHeVariance) {
    const std::vector<int> widths{400, 300, 200};
    const auto a = init_params(widths, 7), b = init_params(widths, 7);
    EXPECT_TRUE(a == b);
    EXPECT_FALSE(a == init_params(widths, 8));
    for (const auto& bias : a.biases) EXPECT_TRUE(bias.isZero(0.0));
    for (const auto& w : a.weights) {
        const double var = w.squaredNorm() / static_cast<double>(w.size());
        const double expected = 2.0 / static_cast<double>(w.cols());
        EXPECT_NEAR(var, expected, 0.1 * expected);
    }
    EXPECT_THROW(init_params(std::vector<int>{3, 2}, 0), ConfigError);
    EXPECT_THROW(init_params(std::vector<int>{3, 0, 2}, 0), ConfigError);
}

TEST(Forward, ZeroWeightsGiveUniform) {
    const auto p = zero_params(std::vector<int>{5, 4, 3});
    const auto r = forward(p, testutil::random_matrix(6, 5, 1));
    EXPECT_TRUE(r.logits.isZero(0.0));
    EXPECT_TRUE(r.probabilities.isApproxToConstant(1.0 / 3.0, 1e-15));
}

TEST(Forward, IdentityLikeNetReproducesSlice) {
    auto p = zero_params(std::vector<int>{4, 4, 2});
    p.weights[0] = Matrix::Identity(4, 4);
    p.weights[1] << 1, 0, 0, 0, 0, 1, 0, 0;
    const Matrix x = testutil::random_matrix(5, 4, 2, 0.0, 1.0);
    const auto r = forward(p, x);
    EXPECT_TRUE(r.logits == x.leftCols(2));
}

TEST(Forward, MatchesScalarOracle) {
    const auto p = random_params({6, 5, 4, 3}, 3);
    const Matrix x = testutil::random_matrix(8, 6, 4);
    const auto r = forward(p, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vector xi = x.row(i).transpose();
        const auto ref = scalar_forward(p, std::vector<double>(xi.data(), xi.data() + xi.size()));
        for (Eigen::Index k = 0; k < 3; ++k) EXPECT_NEAR(r.logits(i, k), ref[static_cast<std::size_t>(k)], 1e-12);
        EXPECT_NEAR(r.probabilities.row(i).sum(), 1.0, 1e-15);
    }
    EXPECT_THROW(forward(p, Matrix::Zero(2, 5)), DataError);
}

TEST(Flatten, BijectionAndLength) {
    const std::vector<int> widths{7, 5, 3, 2};
    EXPECT_EQ(parameter_count(widths), 7u * 5 + 5 + 5 * 3 + 3 + 3 * 2 + 2);
    const auto p = random_params(widths, 9);
    const Vector v = flatten(p);
    EXPECT_EQ(static_cast<std::size_t>(v.size()), parameter_count(widths));
    EXPECT_TRUE(unflatten(v, widths) == p);
    EXPECT_TRUE(flatten(zero_params(widths)).isZero(0.0));
    EXPECT_EQ(v(0), p.weights[0](0, 0));
    EXPECT_EQ(v(1), p.weights[0](0, 1));  // row-major
    EXPECT_EQ(v(35), p.biases[0](0));
    EXPECT_THROW(unflatten(v.head(v.size() - 1), widths), DataError);
}

TEST(LossGradient, MatchesFiniteDifferences) {
    for (LossKind kind : {LossKind::mse, LossKind::softmax_cross_entropy}) {
        const std::vector<int> widths{6, 8, 5, kind == LossKind::mse ? 1 : 2};
        const auto p = random_params(widths, 11);
        const Matrix x = testutil::random_matrix(10, 6, 12);
        const Vector y = labels(10, 13);
        const Vector g = flatten(loss_gradient(p, x, y, kind));
        const Vector theta = flatten(p);
        std::mt19937_64 gen(14);
        for (int trial = 0; trial < 20; ++trial) {
            const auto k = static_cast<Eigen::Index>(gen() % static_cast<std::uint64_t>(theta.size()));
            const double h = 1e-4;
            Vector up = theta, down = theta;
            up(k) += h;
            down(k) -= h;
            const double fd = (loss_value(unflatten(up, widths), x, y, kind) -
                               loss_value(unflatten(down, widths), x, y, kind)) / (2 * h);
            EXPECT_NEAR(fd, g(k), 1e-5 * std::max(1.0, std::abs(g(k)))) << to_string(kind) << " coord " << k;
        }
    }
}

TEST(TrainSgd, ZeroLearningRateKeepsInit) {
    TrainConfig cfg;
    cfg.widths = {4, 6, 2};
    cfg.learning_rate = 0.0;
    cfg.steps = 10;
    cfg.batch_size = 3;
    cfg.checkpoints = checkpoint_schedule(10, 5);
    const auto traj = train_sgd(testutil::random_matrix(7, 4, 1), labels(7, 2), cfg);
    ASSERT_EQ(traj.checkpoints.size(), 3u);
    for (const auto& c : traj.checkpoints) {
        EXPECT_TRUE(c.params == traj.checkpoints[0].params);
        EXPECT_EQ(c.train_loss, traj.checkpoints[0].train_loss);
    }
    EXPECT_TRUE(traj.params_at(0) == init_params(cfg.widths, cfg.seed));
}

TEST(TrainSgd, SeparableToyConverges) {
    Matrix x(2, 2);
    x << 1, 0, 0, 1;
    Vector y(2);
    y << 1, -1;
    for (LossKind kind : {LossKind::mse, LossKind::softmax_cross_entropy}) {
        TrainConfig cfg;
        cfg.widths = {2, 8, kind == LossKind::mse ? 1 : 2};
        cfg.loss = kind;
        cfg.learning_rate = kind == LossKind::mse ? 0.2 : 0.5;
        cfg.steps = 500;
        cfg.batch_size = 2;
        cfg.checkpoints = checkpoint_schedule(cfg.steps, 100);
        const auto traj = train_sgd(x, y, cfg);
        EXPECT_LT(traj.checkpoints.back().train_loss, 1e-3) << to_string(kind);
        EXPECT_EQ(accuracy(traj.final_params(), x, y), 1.0);
    }
}

TEST(TrainSgd, DeterministicAndValidated) {
    TrainConfig cfg;
    cfg.widths = {5, 6, 2};
    cfg.steps = 25;
    cfg.batch_size = 4;
    cfg.checkpoints = checkpoint_schedule(25, 10);
    EXPECT_EQ(cfg.checkpoints, (std::vector<int>{0, 10, 20, 25}));
    const Matrix x = testutil::random_matrix(9, 5, 3);
    const Vector y = labels(9, 4);
    const auto a = train_sgd(x, y, cfg), b = train_sgd(x, y, cfg);
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i) EXPECT_TRUE(a.checkpoints[i].params == b.checkpoints[i].params);
    auto bad = cfg;
    bad.checkpoints = {0, 10};
    EXPECT_THROW(train_sgd(x, y, bad), ConfigError);
    bad = cfg;
    bad.loss = LossKind::mse;
    EXPECT_THROW(train_sgd(x, y, bad), ConfigError);
}

TEST(TrainSgd, DivergenceNamesStep) {
    TrainConfig cfg;
    cfg.widths = {3, 4, 1};
    cfg.loss = LossKind::mse;
    cfg.learning_rate = 1e6;
    cfg.steps = 200;
    cfg.batch_size = 2;
    cfg.checkpoints = checkpoint_schedule(200, 1);
    try {
        train_sgd(testutil::random_matrix(4, 3, 5, 0.0, 1.0), labels(4, 6), cfg);
        FAIL() << "expected divergence";
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("at step "), std::string::npos) << e.what();
    }
}

TEST(Saliency, ZeroNetGivesZeroMap) {
    const auto p = zero_params(std::vector<int>{16, 4, 2});
    const Vector img = testutil::random_matrix(16, 1, 1, 0.0, 1.0);
    const auto m = saliency_fd(p, img, 4, 4, 1);
    for (double v : m.abs_values) EXPECT_EQ(v, 0.0);
    EXPECT_EQ(m.mass_fraction(patch_pixels(4, 4, 2, Corner::top_left)), 0.0);
}

TEST(Saliency, FiniteDifferenceMatchesBackprop) {
    for (int out : {1, 2}) {
        const auto p = random_params({36, 12, 8, out}, 21);
        const Vector img = testutil::random_matrix(36, 1, 22, 0.0, 1.0);
        const auto fd = saliency_fd(p, img, 6, 6, out - 1, 1e-3);
        const auto bp = saliency_backprop(p, img, 6, 6, out - 1);
        for (std::size_t i = 0; i < fd.signed_values.size(); ++i)
            EXPECT_NEAR(fd.signed_values[i], bp.signed_values[i], 1e-4) << i;
    }
}

TEST(Saliency, CentralDifferenceIsSecondOrder) {
    // Pure softmax regression is smooth, so the truncation error is exactly O(eps^2).
    auto p = random_params({9, 4, 3}, 31);
    for (auto& b : p.biases) b.setConstant(5.0);  // keep every hidden unit active
    const Vector img = testutil::random_matrix(9, 1, 32, 0.2, 0.8);
    const auto exact = saliency_backprop(p, img, 3, 3, 2);
    const auto error = [&](double eps) {
        const auto fd = saliency_fd(p, img, 3, 3, 2, eps);
        double s = 0.0;
        for (std::size_t i = 0; i < fd.signed_values.size(); ++i)
            s += std::pow(fd.signed_values[i] - exact.signed_values[i], 2);
        return std::sqrt(s);
    };
    const double order = std::log2(error(0.04) / error(0.02));
    EXPECT_GE(order, 1.9);
    EXPECT_THROW(saliency_fd(p, img, 3, 3, 2, 0.0), ConfigError);
    EXPECT_THROW(saliency_fd(p, img, 3, 3, 3), ConfigError);
    EXPECT_THROW(saliency_fd(p, img, 2, 4, 0), DataError);
}

TEST(Interpolation, EndpointsAndParabola) {
    const std::vector<int> widths{5, 6, 1};
    const auto a = random_params(widths, 41);
    auto b = a;
    b.weights[1] = testutil::random_matrix(1, 6, 42);
    b.biases[1](0) = 0.7;
    const Matrix x = testutil::random_matrix(12, 5, 43);
    const Vector y = labels(12, 44);
    const auto grid = alpha_grid(-0.5, 1.5, 21);
    const auto curve = line_interpolation(flatten(a), flatten(b), widths, x, y, LossKind::mse, grid);
    ASSERT_EQ(curve.size(), 21u);
    EXPECT_EQ(curve[5].alpha, 0.0);
    EXPECT_EQ(curve[15].alpha, 1.0);
    EXPECT_NEAR(curve[5].loss, loss_value(a, x, y, LossKind::mse), 1e-14);
    EXPECT_NEAR(curve[15].loss, loss_value(b, x, y, LossKind::mse), 1e-14);
    // Only the readout moves, so MSE is quadratic in alpha: constant second differences.
    const double d2 = curve[0].loss - 2 * curve[1].loss + curve[2].loss;
    EXPECT_GT(d2, 0.0);
    for (std::size_t i = 1; i + 1 < curve.size(); ++i)
        EXPECT_NEAR(curve[i - 1].loss - 2 * curve[i].loss + curve[i + 1].loss, d2, 1e-10);
    EXPECT_NEAR(flatness(curve, 0.9, 1.1), d2, 1e-10);
    EXPECT_THROW(line_interpolation(flatten(a), flatten(b).head(3), widths, x, y, LossKind::mse, grid), DataError);
    EXPECT_THROW(alpha_grid(1.0, 1.0, 5), ConfigError);
}

TEST(Polar, FirstPointAndFixtures) {
    const Vector f = Vector::Constant(2, 3.0);
    Vector d0(2), d30(2), dhalf(2);
    d0 << 1, 0;
    d30 << 0.5 * std::cos(std::numbers::pi / 6), 0.5 * std::sin(std::numbers::pi / 6);
    dhalf << 0.5, 0;
    const auto pts = polar_trajectory({{0, f + d0}, {1, f + d30}, {2, f + dhalf}, {3, f}});
    ASSERT_EQ(pts.size(), 4u);
    EXPECT_EQ(pts[0].r, 1.0);
    EXPECT_EQ(pts[0].phi.value(), 0.0);
    EXPECT_NEAR(pts[1].r, 0.5, 1e-15);
    EXPECT_NEAR(pts[1].phi.value(), std::numbers::pi / 6, 1e-12);
    EXPECT_NEAR(pts[2].r, 0.5, 1e-15);
    EXPECT_NEAR(pts[2].phi.value(), 0.0, 1e-12);
    EXPECT_EQ(pts[3].r, 0.0);
    EXPECT_FALSE(pts[3].phi.has_value());
}

TEST(Polar, LinearPathHasZeroAngle) {
    const Vector a = testutil::random_matrix(50, 1, 51), b = testutil::random_matrix(50, 1, 52);
    std::vector<std::pair<int, Vector>> cps;
    for (int k = 0; k <= 10; ++k) cps.emplace_back(k, a + (k / 10.0) * (b - a));
    const auto pts = polar_trajectory(cps);
    for (int k = 0; k < 10; ++k) {
        EXPECT_NEAR(pts[k].phi.value(), 0.0, 1e-7);
        EXPECT_NEAR(pts[k].r, 1.0 - k / 10.0, 1e-12);
    }
    EXPECT_THROW(polar_trajectory(std::vector<std::pair<int, Vector>>{{0, a}}), DataError);
    EXPECT_THROW(polar_trajectory(std::vector<std::pair<int, Vector>>{{0, a}, {1, a}}), DataError);
}
