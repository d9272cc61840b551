#pragma once

// Analytic NNGP / NTK kernels of infinitely wide fully-connected networks,
// plus a finite-width Monte-Carlo estimate used to validate them.

#include <Eigen/Dense>
#include <boost/random/normal_distribution.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shortcut/error.hpp"
#include "shortcut/parallel.hpp"
#include "shortcut/rng.hpp"

namespace shortcut {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, erf };

inline std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "erf"; }

/// Infinite-width fully-connected network: `depth` hidden layers, each
/// h' = sigma_w * W phi(h) / sqrt(fan_in) + sigma_b * b with N(0,1) entries.
struct ArchitectureSpec {
    int depth = 2;
    Activation activation = Activation::relu;
    double weight_variance = 2.0;
    double bias_variance = 0.01;

    void validate() const {
        if (depth < 1) throw ConfigError("architecture depth must be >= 1, got " + std::to_string(depth));
        if (!(weight_variance > 0.0) || !std::isfinite(weight_variance))
            throw ConfigError("weight_variance must be > 0");
        if (!(bias_variance >= 0.0) || !std::isfinite(bias_variance))
            throw ConfigError("bias_variance must be >= 0");
    }
};

/// 2x2 pre-activation covariance at a pair of inputs.
struct KernelPair {
    double k_aa;
    double k_ab;
    double k_bb;
};

struct KernelBundle {
    Matrix nngp_train;  ///< N x N
    Matrix ntk_train;   ///< N x N
    Matrix nngp_cross;  ///< M x N (eval rows, train columns)
    Matrix ntk_cross;   ///< M x N
    Vector nngp_eval_diag;
    Vector ntk_eval_diag;
    std::optional<Matrix> nngp_eval;  ///< M x M, only when requested
    std::optional<Matrix> ntk_eval;

    Eigen::Index train_size() const { return nngp_train.rows(); }
    Eigen::Index eval_size() const { return nngp_cross.rows(); }
};

namespace detail {

inline std::string shape(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

inline void check_pair(const KernelPair& p) {
    if (!(p.k_aa > 0.0) || !(p.k_bb > 0.0) || !std::isfinite(p.k_aa) || !std::isfinite(p.k_bb))
        throw NumericError("degenerate kernel: self-covariances must be positive and finite (k_aa=" +
                           std::to_string(p.k_aa) + ", k_bb=" + std::to_string(p.k_bb) + ")");
}

inline double relu_angle(const KernelPair& p, double norm) {
    const double c = std::clamp(p.k_ab / norm, -1.0, 1.0);
    return std::acos(c);
}

} // namespace detail

/// Layer-0 kernel block: entry (i, j) = sigma_w^2 <b_i, a_j> / d + sigma_b^2.
/// Returns an M x N matrix for N rows in `a` and M rows in `b`.
inline Matrix base_gram(const Matrix& inputs_a, const Matrix& inputs_b, const ArchitectureSpec& arch) {
    if (inputs_a.cols() != inputs_b.cols() || inputs_a.cols() < 1)
        throw DataError("base_gram: input dimension mismatch between " + detail::shape(inputs_a) + " and " +
                        detail::shape(inputs_b));
    if (!inputs_a.allFinite() || !inputs_b.allFinite()) throw DataError("base_gram: non-finite input entries");
    const double scale = arch.weight_variance / static_cast<double>(inputs_a.cols());
    const bool same = &inputs_a == &inputs_b;
    Matrix out(inputs_b.rows(), inputs_a.rows());
    parallel_for(static_cast<std::size_t>(inputs_b.rows()), [&](std::size_t ui) {
        const auto i = static_cast<Eigen::Index>(ui);
        for (Eigen::Index j = same ? i : 0; j < inputs_a.rows(); ++j)
            out(i, j) = scale * inputs_b.row(i).dot(inputs_a.row(j)) + arch.bias_variance;
    });
    if (same)
        for (Eigen::Index i = 0; i < out.rows(); ++i)
            for (Eigen::Index j = 0; j < i; ++j) out(i, j) = out(j, i);
    return out;
}

/// E[phi(u) phi(v)] for (u, v) ~ N(0, pair).
inline double activation_transform(const KernelPair& pair, Activation activation) {
    detail::check_pair(pair);
    if (activation == Activation::relu) {
        const double norm = std::sqrt(pair.k_aa * pair.k_bb);
        const double theta = detail::relu_angle(pair, norm);
        return norm * (std::sin(theta) + (std::numbers::pi - theta) * std::cos(theta)) / (2.0 * std::numbers::pi);
    }
    const double denom = std::sqrt((1.0 + 2.0 * pair.k_aa) * (1.0 + 2.0 * pair.k_bb));
    return 2.0 / std::numbers::pi * std::asin(std::clamp(2.0 * pair.k_ab / denom, -1.0, 1.0));
}

/// E[phi'(u) phi'(v)] for (u, v) ~ N(0, pair).
inline double derivative_transform(const KernelPair& pair, Activation activation) {
    detail::check_pair(pair);
    if (activation == Activation::relu) {
        const double norm = std::sqrt(pair.k_aa * pair.k_bb);
        return (std::numbers::pi - detail::relu_angle(pair, norm)) / (2.0 * std::numbers::pi);
    }
    const double det = (1.0 + 2.0 * pair.k_aa) * (1.0 + 2.0 * pair.k_bb) - 4.0 * pair.k_ab * pair.k_ab;
    return 4.0 / std::numbers::pi / std::sqrt(std::max(det, 1e-300));
}

namespace detail {

struct LayerState {
    Matrix k;  // pairwise NNGP block
    Matrix t;  // pairwise NTK block
};

// One recursion step on a block whose rows/columns have self-kernels row_diag / col_diag.
inline void step_block(LayerState& s, const Vector& row_diag, const Vector& col_diag, const ArchitectureSpec& arch,
                       bool symmetric) {
    const Eigen::Index rows = s.k.rows();
    const Eigen::Index cols = s.k.cols();
    parallel_for(static_cast<std::size_t>(rows), [&](std::size_t ui) {
        const auto i = static_cast<Eigen::Index>(ui);
        for (Eigen::Index j = symmetric ? i : 0; j < cols; ++j) {
            const KernelPair pair{row_diag(i), s.k(i, j), col_diag(j)};
            const double k_next = arch.weight_variance * activation_transform(pair, arch.activation) + arch.bias_variance;
            const double dot = arch.weight_variance * derivative_transform(pair, arch.activation);
            s.t(i, j) = k_next + s.t(i, j) * dot;
            s.k(i, j) = k_next;
        }
    });
    if (symmetric)
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < i; ++j) {
                s.k(i, j) = s.k(j, i);
                s.t(i, j) = s.t(j, i);
            }
}

inline void step_diag(Vector& k, Vector& t, const ArchitectureSpec& arch) {
    for (Eigen::Index i = 0; i < k.size(); ++i) {
        const KernelPair pair{k(i), k(i), k(i)};
        const double k_next = arch.weight_variance * activation_transform(pair, arch.activation) + arch.bias_variance;
        t(i) = k_next + t(i) * arch.weight_variance * derivative_transform(pair, arch.activation);
        k(i) = k_next;
    }
}

inline void require_finite(const Matrix& m, int layer, std::string_view what) {
    if (!m.allFinite())
        throw NumericError("kernel recursion overflow: non-finite " + std::string(what) + " at layer " +
                           std::to_string(layer));
}

} // namespace detail

/// Runs the NNGP/NTK layer recursion
///   K' = sigma_w^2 E[phi phi] + sigma_b^2,   Theta' = K' + sigma_w^2 E[phi' phi'] Theta
/// starting from K = Theta = base_gram, for train x train and eval x train blocks.
inline KernelBundle propagate_kernels(const ArchitectureSpec& arch, const Matrix& train_inputs,
                                      const Matrix& eval_inputs, bool full_eval = false) {
    arch.validate();
    if (train_inputs.rows() < 2) throw DataError("propagate_kernels: need at least 2 training inputs");
    const bool has_eval = eval_inputs.rows() > 0;
    if (has_eval && eval_inputs.cols() != train_inputs.cols())
        throw DataError("propagate_kernels: input dimension mismatch between train " + detail::shape(train_inputs) +
                        " and eval " + detail::shape(eval_inputs));

    detail::LayerState train;
    train.k = base_gram(train_inputs, train_inputs, arch);
    train.t = train.k;
    Vector train_diag = train.k.diagonal();

    detail::LayerState cross, eval;
    Vector eval_k, eval_t;
    if (has_eval) {
        cross.k = base_gram(train_inputs, eval_inputs, arch);
        cross.t = cross.k;
        const double scale = arch.weight_variance / static_cast<double>(eval_inputs.cols());
        eval_k = (eval_inputs.rowwise().squaredNorm() * scale).array() + arch.bias_variance;
        if (full_eval) {
            eval.k = base_gram(eval_inputs, eval_inputs, arch);
            eval.t = eval.k;
            eval_k = eval.k.diagonal();
        }
        eval_t = eval_k;
    }

    for (int layer = 1; layer <= arch.depth; ++layer) {
        const Vector prev_train_diag = train_diag;
        detail::step_block(train, prev_train_diag, prev_train_diag, arch, true);
        train_diag = train.k.diagonal();
        detail::require_finite(train.k, layer, "NNGP");
        detail::require_finite(train.t, layer, "NTK");
        if (has_eval) {
            detail::step_block(cross, eval_k, prev_train_diag, arch, false);
            if (full_eval) detail::step_block(eval, eval_k, eval_k, arch, true);
            detail::step_diag(eval_k, eval_t, arch);
            detail::require_finite(cross.k, layer, "cross NNGP");
            detail::require_finite(cross.t, layer, "cross NTK");
        }
    }

    KernelBundle bundle;
    bundle.nngp_train = std::move(train.k);
    bundle.ntk_train = std::move(train.t);
    if (has_eval) {
        bundle.nngp_cross = std::move(cross.k);
        bundle.ntk_cross = std::move(cross.t);
        bundle.nngp_eval_diag = std::move(eval_k);
        bundle.ntk_eval_diag = std::move(eval_t);
        if (full_eval) {
            bundle.nngp_eval = std::move(eval.k);
            bundle.ntk_eval = std::move(eval.t);
        }
    } else {
        bundle.nngp_cross.resize(0, train_inputs.rows());
        bundle.ntk_cross.resize(0, train_inputs.rows());
    }
    return bundle;
}

struct EmpiricalKernels {
    Matrix nngp;
    Matrix ntk;
};

/// Monte-Carlo kernels of finite random networks of the given width.
///
/// NNGP: per draw, the output covariance conditional on the last hidden layer,
/// sigma_w^2 <phi(h), phi(h')> / width + sigma_b^2, averaged over draws.
/// NTK: per draw, the Gram matrix of parameter gradients of the scalar output.
inline EmpiricalKernels mc_kernel_oracle(const ArchitectureSpec& arch, const Matrix& inputs, int width, int draws,
                                         std::uint64_t seed) {
    arch.validate();
    if (width < 1 || draws < 1) throw ConfigError("mc_kernel_oracle: width and draws must be positive");
    const Eigen::Index n = inputs.rows();
    const double sw = std::sqrt(arch.weight_variance);
    const double sb = std::sqrt(arch.bias_variance);
    const auto phi = [&](double x) { return arch.activation == Activation::relu ? std::max(x, 0.0) : std::erf(x); };
    const auto dphi = [&](double x) {
        return arch.activation == Activation::relu ? (x > 0.0 ? 1.0 : 0.0)
                                                   : 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
    };

    std::vector<EmpiricalKernels> per_draw(static_cast<std::size_t>(draws));
    parallel_for(per_draw.size(), [&](std::size_t draw) {
        // Ziggurat sampling: the width x width layers need millions of draws each.
        std::mt19937_64 engine(mix_seed(seed, draw));
        boost::random::normal_distribution<double> normal;
        const auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
            Matrix m(rows, cols);
            for (Eigen::Index j = 0; j < cols; ++j)
                for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(engine);
            return m;
        };
        // Column-major activations: one column per input.
        std::vector<Matrix> acts;      // layer inputs a_0 = x, a_l = phi(h_l)
        std::vector<Matrix> pre;       // h_1 .. h_L
        std::vector<Matrix> weights;   // W_0 .. W_{L-1} (hidden), W_L is the readout row
        acts.push_back(inputs.transpose());
        for (int l = 0; l < arch.depth; ++l) {
            const Matrix& a = acts.back();
            Matrix w = gaussian(width, a.rows());
            Vector b = gaussian(width, 1);
            Matrix h = (sw / std::sqrt(static_cast<double>(a.rows()))) * (w * a);
            h.colwise() += sb * b;
            acts.push_back(h.unaryExpr(phi));
            pre.push_back(std::move(h));
            weights.push_back(std::move(w));
        }
        const Vector readout = gaussian(width, 1);
        const double inv_width = 1.0 / static_cast<double>(width);

        EmpiricalKernels out;
        const Matrix& last = acts.back();
        out.nngp = (arch.weight_variance * inv_width) * (last.transpose() * last);
        out.nngp.array() += arch.bias_variance;
        out.ntk = out.nngp;  // readout-layer gradient contribution

        // delta_l = d f / d h_l, columns per input.
        Matrix delta = (sw * std::sqrt(inv_width)) * readout.replicate(1, n);
        for (int l = arch.depth - 1; l >= 0; --l) {
            delta.array() *= pre[static_cast<std::size_t>(l)].unaryExpr(dphi).array();
            const Matrix& a = acts[static_cast<std::size_t>(l)];
            Matrix feat = (arch.weight_variance / static_cast<double>(a.rows())) * (a.transpose() * a);
            feat.array() += arch.bias_variance;
            out.ntk.array() += (delta.transpose() * delta).array() * feat.array();
            if (l > 0)
                delta = (sw / std::sqrt(static_cast<double>(a.rows()))) *
                        (weights[static_cast<std::size_t>(l)].transpose() * delta);
        }
        per_draw[draw] = std::move(out);
    });

    EmpiricalKernels sum{Matrix::Zero(n, n), Matrix::Zero(n, n)};
    for (const auto& d : per_draw) {
        sum.nngp += d.nngp;
        sum.ntk += d.ntk;
    }
    sum.nngp /= static_cast<double>(draws);
    sum.ntk /= static_cast<double>(draws);
    return sum;
}

} // namespace shortcut
