#pragma once

// Finite-width relu MLP: SGD training with checkpoints, finite-difference
// saliency, linear-path loss interpolation and polar trajectory coordinates.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "shortcut/error.hpp"
#include "shortcut/parallel.hpp"
#include "shortcut/rng.hpp"

namespace shortcut {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LossKind { mse, softmax_cross_entropy };

inline std::string_view to_string(LossKind k) { return k == LossKind::mse ? "mse" : "softmax_cross_entropy"; }

/// Layer widths include the input and output dimensions, e.g. {784, 256, 64, 2}.
/// Weights are (fan_out x fan_in); flattening is layer-major, weights before
/// biases, weights row-major.
struct MLPParams {
    std::vector<int> widths;
    std::vector<Matrix> weights;
    std::vector<Vector> biases;

    std::size_t layers() const { return weights.size(); }
    bool operator==(const MLPParams& o) const {
        if (widths != o.widths) return false;
        for (std::size_t l = 0; l < layers(); ++l)
            if (weights[l] != o.weights[l] || biases[l] != o.biases[l]) return false;
        return true;
    }
};

inline void validate_widths(std::span<const int> widths) {
    if (widths.size() < 3) throw ConfigError("MLP needs an input, at least one hidden layer and an output");
    for (int w : widths)
        if (w < 1) throw ConfigError("MLP layer widths must be positive");
}

inline std::size_t parameter_count(std::span<const int> widths) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
        n += static_cast<std::size_t>(widths[l]) * widths[l + 1] + static_cast<std::size_t>(widths[l + 1]);
    return n;
}

inline MLPParams zero_params(std::span<const int> widths) {
    validate_widths(widths);
    MLPParams p;
    p.widths.assign(widths.begin(), widths.end());
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        p.weights.push_back(Matrix::Zero(widths[l + 1], widths[l]));
        p.biases.push_back(Vector::Zero(widths[l + 1]));
    }
    return p;
}

/// He-style init: weights ~ N(0, 2 / fan_in), zero biases.
inline MLPParams init_params(std::span<const int> widths, std::uint64_t seed) {
    MLPParams p = zero_params(widths);
    Rng rng(mix_seed(seed, 0x1417));
    for (auto& w : p.weights) {
        const double std_dev = std::sqrt(2.0 / static_cast<double>(w.cols()));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = std_dev * rng.normal();
    }
    return p;
}

inline Vector flatten(const MLPParams& p) {
    Vector v(static_cast<Eigen::Index>(parameter_count(p.widths)));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < p.layers(); ++l) {
        const Matrix& w = p.weights[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) v(k++) = w(i, j);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) v(k++) = p.biases[l](i);
    }
    return v;
}

inline MLPParams unflatten(const Vector& v, std::span<const int> widths) {
    MLPParams p = zero_params(widths);
    if (static_cast<std::size_t>(v.size()) != parameter_count(widths))
        throw DataError("unflatten: vector has " + std::to_string(v.size()) + " entries, widths need " +
                        std::to_string(parameter_count(widths)));
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < p.layers(); ++l) {
        Matrix& w = p.weights[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = v(k++);
        for (Eigen::Index i = 0; i < p.biases[l].size(); ++i) p.biases[l](i) = v(k++);
    }
    return p;
}

struct ForwardResult {
    Matrix logits;         ///< B x out
    Matrix probabilities;  ///< softmax of logits (B x out)
};

namespace detail {

inline void check_input(const MLPParams& p, const Matrix& x) {
    if (x.cols() != p.widths.front())
        throw DataError("forward: input dimension " + std::to_string(x.cols()) + " does not match network input " +
                        std::to_string(p.widths.front()));
}

inline Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double peak = logits.row(i).maxCoeff();
        double total = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) total += (out(i, j) = std::exp(logits(i, j) - peak));
        out.row(i) /= total;
    }
    return out;
}

// Hidden activations per layer (index 0 is the input), rows = batch.
struct Tape {
    std::vector<Matrix> acts;
    std::vector<Matrix> pre;
    Matrix logits;
};

inline Tape run(const MLPParams& p, const Matrix& x) {
    Tape tape;
    tape.acts.push_back(x);
    for (std::size_t l = 0; l < p.layers(); ++l) {
        Matrix h = tape.acts.back() * p.weights[l].transpose();
        h.rowwise() += p.biases[l].transpose();
        if (l + 1 == p.layers()) {
            tape.logits = std::move(h);
        } else {
            tape.acts.push_back(h.cwiseMax(0.0));
            tape.pre.push_back(std::move(h));
        }
    }
    return tape;
}

inline int class_of(double target) { return target > 0.0 ? 1 : 0; }

} // namespace detail

inline ForwardResult forward(const MLPParams& p, const Matrix& x) {
    detail::check_input(p, x);
    ForwardResult r;
    r.logits = detail::run(p, x).logits;
    r.probabilities = detail::softmax_rows(r.logits);
    return r;
}

inline void check_loss_shape(const MLPParams& p, LossKind loss) {
    if (loss == LossKind::mse && p.widths.back() != 1)
        throw ConfigError("mse loss needs a single network output (+/-1 regression)");
    if (loss == LossKind::softmax_cross_entropy && p.widths.back() < 2)
        throw ConfigError("softmax cross-entropy needs at least two network outputs");
}

/// Mean loss over the rows of x. Cross-entropy uses class 1 for target +1 and class 0 for -1.
inline double loss_value(const MLPParams& p, const Matrix& x, const Vector& y, LossKind loss) {
    detail::check_input(p, x);
    check_loss_shape(p, loss);
    const Matrix logits = detail::run(p, x).logits;
    double total = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (loss == LossKind::mse) {
            const double d = logits(i, 0) - y(i);
            total += d * d;
        } else {
            const double peak = logits.row(i).maxCoeff();
            const double lse = peak + std::log((logits.row(i).array() - peak).exp().sum());
            total += lse - logits(i, detail::class_of(y(i)));
        }
    }
    return total / static_cast<double>(x.rows());
}

/// Reverse-mode gradient of loss_value with respect to all parameters.
inline MLPParams loss_gradient(const MLPParams& p, const Matrix& x, const Vector& y, LossKind loss) {
    detail::check_input(p, x);
    check_loss_shape(p, loss);
    const detail::Tape tape = detail::run(p, x);
    const double inv_b = 1.0 / static_cast<double>(x.rows());
    Matrix delta;
    if (loss == LossKind::mse) {
        delta = 2.0 * inv_b * (tape.logits.col(0) - y);
    } else {
        delta = detail::softmax_rows(tape.logits);
        for (Eigen::Index i = 0; i < x.rows(); ++i) delta(i, detail::class_of(y(i))) -= 1.0;
        delta *= inv_b;
    }
    MLPParams g = zero_params(p.widths);
    for (std::size_t l = p.layers(); l-- > 0;) {
        g.weights[l] = delta.transpose() * tape.acts[l];
        g.biases[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            Matrix back = delta * p.weights[l];
            delta = back.cwiseProduct((tape.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
    return g;
}

struct TrainConfig {
    std::vector<int> widths{784, 256, 64, 2};
    double learning_rate = 0.05;
    int steps = 500;
    int batch_size = 32;
    LossKind loss = LossKind::softmax_cross_entropy;
    std::vector<int> checkpoints;  ///< sorted; must contain 0 and steps
    std::uint64_t seed = 0;

    void validate() const {
        validate_widths(widths);
        if (steps < 1) throw ConfigError("training steps must be >= 1");
        if (batch_size < 1) throw ConfigError("batch size must be >= 1");
        if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
        if (checkpoints.empty() || checkpoints.front() != 0 || checkpoints.back() != steps)
            throw ConfigError("checkpoint schedule must start at 0 and end at the final step");
        for (std::size_t i = 1; i < checkpoints.size(); ++i)
            if (checkpoints[i] <= checkpoints[i - 1]) throw ConfigError("checkpoint schedule must be strictly increasing");
    }
};

/// 0, every, 2*every, ..., steps.
inline std::vector<int> checkpoint_schedule(int steps, int every) {
    if (every < 1) throw ConfigError("checkpoint interval must be >= 1");
    std::vector<int> out;
    for (int s = 0; s < steps; s += every) out.push_back(s);
    out.push_back(steps);
    return out;
}

struct Checkpoint {
    int step = 0;
    Vector params;
    double train_loss = 0.0;
};

struct Trajectory {
    std::vector<int> widths;
    LossKind loss = LossKind::softmax_cross_entropy;
    std::vector<Checkpoint> checkpoints;

    MLPParams params_at(std::size_t i) const { return unflatten(checkpoints.at(i).params, widths); }
    MLPParams final_params() const { return params_at(checkpoints.size() - 1); }
};

/// Mini-batch SGD; each epoch visits a fresh seeded permutation of the rows.
inline Trajectory train_sgd(const Matrix& inputs, const Vector& targets, const TrainConfig& config) {
    config.validate();
    if (inputs.rows() != targets.size() || inputs.rows() == 0) throw DataError("train_sgd: empty or mismatched dataset");
    if (inputs.cols() != config.widths.front())
        throw DataError("train_sgd: dataset input dimension " + std::to_string(inputs.cols()) +
                        " does not match network input " + std::to_string(config.widths.front()));
    MLPParams params = init_params(config.widths, config.seed);
    check_loss_shape(params, config.loss);
    Rng order_rng(mix_seed(config.seed, 0x5eed));
    std::vector<Eigen::Index> order;
    std::size_t cursor = 0;

    Trajectory traj;
    traj.widths = config.widths;
    traj.loss = config.loss;
    std::size_t next_checkpoint = 0;
    const auto record = [&](int step) {
        const double loss = loss_value(params, inputs, targets, config.loss);
        if (!std::isfinite(loss)) throw NumericError("training diverged (non-finite loss) at step " + std::to_string(step));
        traj.checkpoints.push_back({step, flatten(params), loss});
        ++next_checkpoint;
    };
    record(0);
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int step = 1; step <= config.steps; ++step) {
        if (cursor >= order.size()) {
            order.resize(static_cast<std::size_t>(inputs.rows()));
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            order_rng.shuffle(std::span(order));
            cursor = 0;
        }
        const std::size_t take = std::min(batch, order.size() - cursor);
        Matrix xb(static_cast<Eigen::Index>(take), inputs.cols());
        Vector yb(static_cast<Eigen::Index>(take));
        for (std::size_t k = 0; k < take; ++k) {
            xb.row(static_cast<Eigen::Index>(k)) = inputs.row(order[cursor + k]);
            yb(static_cast<Eigen::Index>(k)) = targets(order[cursor + k]);
        }
        cursor += take;
        const MLPParams grad = loss_gradient(params, xb, yb, config.loss);
        for (std::size_t l = 0; l < params.layers(); ++l) {
            params.weights[l] -= config.learning_rate * grad.weights[l];
            params.biases[l] -= config.learning_rate * grad.biases[l];
        }
        if (!params.weights.back().allFinite())
            throw NumericError("training diverged (non-finite parameters) at step " + std::to_string(step));
        if (next_checkpoint < config.checkpoints.size() && config.checkpoints[next_checkpoint] == step) record(step);
    }
    return traj;
}

inline double accuracy(const MLPParams& p, const Matrix& x, const Vector& y) {
    const Matrix logits = forward(p, x).logits;
    std::size_t hits = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const bool positive = logits.cols() == 1 ? logits(i, 0) > 0.0 : logits(i, 1) > logits(i, 0);
        hits += positive == (y(i) > 0.0);
    }
    return static_cast<double>(hits) / static_cast<double>(x.rows());
}

// ---------------------------------------------------------------------------
// Saliency

struct SaliencyMap {
    int height = 0;
    int width = 0;
    std::vector<double> signed_values;
    std::vector<double> abs_values;

    double total_mass() const { return std::accumulate(abs_values.begin(), abs_values.end(), 0.0); }

    double mass_fraction(std::span<const Eigen::Index> pixels) const {
        const double total = total_mass();
        if (total == 0.0) return 0.0;
        double inside = 0.0;
        for (auto p : pixels) inside += abs_values[static_cast<std::size_t>(p)];
        return inside / total;
    }
};

/// Scalar whose saliency is taken: the softmax probability of `label_index`,
/// or the raw output for single-output networks.
inline double class_score(const MLPParams& p, const Vector& x, int label_index) {
    const Matrix logits = detail::run(p, x.transpose()).logits;
    if (logits.cols() == 1) return logits(0, 0);
    return detail::softmax_rows(logits)(0, label_index);
}

namespace detail {

inline SaliencyMap make_map(int height, int width, std::vector<double> values) {
    SaliencyMap m{height, width, std::move(values), {}};
    m.abs_values.reserve(m.signed_values.size());
    for (double v : m.signed_values) m.abs_values.push_back(std::abs(v));
    return m;
}

inline void check_image(const MLPParams& p, const Vector& image, int height, int width, int label_index) {
    if (image.size() != p.widths.front() || static_cast<Eigen::Index>(height) * width != image.size())
        throw DataError("saliency: image shape does not match network input");
    if (label_index < 0 || (p.widths.back() > 1 && label_index >= p.widths.back()))
        throw ConfigError("saliency: label index out of range");
}

} // namespace detail

/// Central differences (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) per pixel.
inline SaliencyMap saliency_fd(const MLPParams& p, const Vector& image, int height, int width, int label_index,
                               double eps = 1e-3) {
    if (!(eps > 0.0)) throw ConfigError("saliency: epsilon must be positive");
    detail::check_image(p, image, height, width, label_index);
    std::vector<double> values(static_cast<std::size_t>(image.size()));
    parallel_for(values.size(), [&](std::size_t i) {
        Vector x = image;
        const auto k = static_cast<Eigen::Index>(i);
        x(k) = image(k) + eps;
        const double up = class_score(p, x, label_index);
        x(k) = image(k) - eps;
        const double down = class_score(p, x, label_index);
        values[i] = (up - down) / (2.0 * eps);
    });
    return detail::make_map(height, width, std::move(values));
}

/// Exact input gradient of the same score, by backpropagation.
inline SaliencyMap saliency_backprop(const MLPParams& p, const Vector& image, int height, int width, int label_index) {
    detail::check_image(p, image, height, width, label_index);
    const detail::Tape tape = detail::run(p, image.transpose());
    Matrix delta(1, tape.logits.cols());
    if (tape.logits.cols() == 1) {
        delta(0, 0) = 1.0;
    } else {
        const Matrix prob = detail::softmax_rows(tape.logits);
        const double pc = prob(0, label_index);
        delta = -pc * prob;
        delta(0, label_index) += pc;
    }
    for (std::size_t l = p.layers(); l-- > 0;) {
        Matrix back = delta * p.weights[l];
        delta = l > 0 ? Matrix(back.cwiseProduct((tape.pre[l - 1].array() > 0.0).cast<double>().matrix())) : back;
    }
    return detail::make_map(height, width, std::vector<double>(delta.data(), delta.data() + delta.size()));
}

// ---------------------------------------------------------------------------
// Loss landscape

struct InterpolationPoint {
    double alpha;
    double loss;
};

/// Loss at (1 - alpha) a + alpha b for every alpha in the grid.
inline std::vector<InterpolationPoint> line_interpolation(const Vector& theta_a, const Vector& theta_b,
                                                          std::span<const int> widths, const Matrix& inputs,
                                                          const Vector& targets, LossKind loss,
                                                          std::span<const double> alphas) {
    if (theta_a.size() != theta_b.size() || static_cast<std::size_t>(theta_a.size()) != parameter_count(widths))
        throw DataError("line_interpolation: parameter shape mismatch");
    for (std::size_t i = 1; i < alphas.size(); ++i)
        if (!(alphas[i] > alphas[i - 1])) throw ConfigError("line_interpolation: alpha grid must be increasing");
    std::vector<InterpolationPoint> out(alphas.size());
    parallel_for(alphas.size(), [&](std::size_t i) {
        const double a = alphas[i];
        const Vector theta = (1.0 - a) * theta_a + a * theta_b;
        out[i] = {a, loss_value(unflatten(theta, widths), inputs, targets, loss)};
    });
    return out;
}

inline std::vector<double> alpha_grid(double lo = -0.5, double hi = 1.5, int n = 101) {
    if (n < 2 || !(hi > lo)) throw ConfigError("alpha grid needs n >= 2 and hi > lo");
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
    // Snap values that should be exact grid landmarks.
    for (auto& a : out) {
        const double r = std::round(a * 1e9) / 1e9;
        if (std::abs(a - r) < 1e-12) a = r;
    }
    return out;
}

/// Mean |L(a-h) - 2 L(a) + L(a+h)| over interior grid points a in [lo, hi].
inline double flatness(std::span<const InterpolationPoint> curve, double lo = 0.9, double hi = 1.1) {
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
        if (curve[i].alpha < lo - 1e-9 || curve[i].alpha > hi + 1e-9) continue;
        total += std::abs(curve[i - 1].loss - 2.0 * curve[i].loss + curve[i + 1].loss);
        ++count;
    }
    if (count == 0) throw ConfigError("flatness: alpha grid has no interior points in [" + std::to_string(lo) + ", " +
                                      std::to_string(hi) + "]");
    return total / static_cast<double>(count);
}

struct PolarPoint {
    int step;
    double r;
    std::optional<double> phi;  ///< undefined where the displacement vanishes
};

/// r_t = |d_t| / |d_0| and phi_t = arccos(<d_t, d_0> / (|d_t| |d_0|)) with
/// d_t = theta_t - theta_final.
inline std::vector<PolarPoint> polar_trajectory(const std::vector<std::pair<int, Vector>>& checkpoints) {
    if (checkpoints.size() < 2) throw DataError("polar_trajectory: need at least 2 checkpoints");
    const Vector& final_theta = checkpoints.back().second;
    const Vector d0 = checkpoints.front().second - final_theta;
    const double n0 = d0.dot(d0);
    if (!(n0 > 0.0)) throw DataError("polar_trajectory: initial and final parameters coincide");
    std::vector<PolarPoint> out;
    for (const auto& [step, theta] : checkpoints) {
        const Vector dt = theta - final_theta;
        const double nt = dt.dot(dt);
        PolarPoint pt{step, std::sqrt(nt / n0), std::nullopt};
        if (nt > 0.0) {
            // sqrt(n0 * n0) == n0 exactly, so the first checkpoint gives cos = 1.
            const double c = dt.dot(d0) / std::sqrt(nt * n0);
            pt.phi = std::acos(std::clamp(c, -1.0, 1.0));
        }
        out.push_back(pt);
    }
    return out;
}

inline std::vector<PolarPoint> polar_trajectory(const Trajectory& traj) {
    std::vector<std::pair<int, Vector>> cps;
    for (const auto& c : traj.checkpoints) cps.emplace_back(c.step, c.params);
    return polar_trajectory(cps);
}

} // namespace shortcut
