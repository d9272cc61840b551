#pragma once

// Closed-form gradient-flow dynamics of the infinite-width ensemble under MSE.
//
// With NTK Theta and NNGP K on the training set, the ensemble output at time t
// is Gaussian. For any evaluation set with cross kernels (Theta_x, K_x):
//   B(t)   = Theta_x Theta^+ (I - exp(-eta Theta t))
//   mean   = B(t) Y
//   cov    = K_eval + B K Bᵀ - B K_xᵀ - (B K_xᵀ)ᵀ
// On the training set itself B(t) = I - exp(-eta Theta t) and the covariance
// reduces to exp(-eta Theta t) K exp(-eta Theta t).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "shortcut/error.hpp"
#include "shortcut/kernels.hpp"

namespace shortcut {

struct DynamicsConfig {
    double learning_rate = 1.0;
    std::vector<double> time_grid;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
        for (std::size_t i = 0; i < time_grid.size(); ++i) {
            if (!(time_grid[i] >= 0.0)) throw ConfigError("time grid entries must be non-negative");
            if (i > 0 && !(time_grid[i] > time_grid[i - 1])) throw ConfigError("time grid must be strictly increasing");
        }
    }
};

/// Eigendecomposition of the (possibly jittered) training NTK.
struct SpectralNTK {
    Vector eigenvalues;   ///< ascending, clamped at >= 0
    Matrix eigenvectors;  ///< orthonormal columns
    double jitter_used = 0.0;

    /// Eigenvalues below this are treated as exactly zero.
    double null_threshold() const {
        return eigenvalues.size() ? 1e-12 * eigenvalues.maxCoeff() : 0.0;
    }
};

enum class Spacing { log, linear };

inline constexpr double kJitterStart = 1e-10;
inline constexpr double kJitterMax = 1e-4;

/// Symmetric eigendecomposition; if eigenvalues come out meaningfully negative,
/// adds diagonal jitter, doubling from 1e-10 up to 1e-4.
inline SpectralNTK spectral_decompose(const Matrix& ntk, double jitter = 0.0) {
    if (ntk.rows() != ntk.cols() || ntk.rows() == 0) throw DataError("spectral_decompose: matrix must be square");
    if (!ntk.allFinite()) throw NumericError("spectral_decompose: non-finite kernel entries");
    if (jitter < 0.0) throw ConfigError("spectral_decompose: jitter must be >= 0");
    const double scale = ntk.cwiseAbs().maxCoeff();
    for (;;) {
        Matrix m = ntk;
        m.diagonal().array() += jitter;
        Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
        if (solver.info() == Eigen::Success) {
            const Vector& ev = solver.eigenvalues();
            const double top = std::max(ev.maxCoeff(), 0.0);
            // Round-off on a PSD matrix leaves negatives of order eps * scale.
            const double tolerance = 1e-12 * std::max(top, scale);
            if (ev.minCoeff() >= -tolerance) {
                SpectralNTK out;
                out.eigenvalues = ev.cwiseMax(0.0);
                out.eigenvectors = solver.eigenvectors();
                out.jitter_used = jitter;
                return out;
            }
        }
        jitter = jitter == 0.0 ? kJitterStart : 2.0 * jitter;
        if (jitter > kJitterMax)
            throw NumericError("ill-conditioned kernel: eigendecomposition needs jitter above " +
                               std::to_string(kJitterMax));
    }
}

namespace detail {

inline void check_time(double t) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw ConfigError("time must be finite and >= 0, got " + std::to_string(t));
}

inline void check_nonsingular(const SpectralNTK& spec) {
    if (spec.eigenvalues.size() == 0 || !(spec.eigenvalues.maxCoeff() > 0.0))
        throw NumericError("ill-conditioned kernel: NTK has no positive eigenvalues");
}

// exp(-eta lambda t) per eigenvalue; null eigenvalues do not decay.
inline Vector decay(const SpectralNTK& spec, double eta, double t) {
    const double zero = spec.null_threshold();
    Vector d(spec.eigenvalues.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double lambda = spec.eigenvalues(i) > zero ? spec.eigenvalues(i) : 0.0;
        d(i) = std::exp(-eta * lambda * t);
    }
    return d;
}

// (1 - exp(-eta lambda t)) / lambda on the positive eigenspace, 0 on the null space.
inline Vector filtered_inverse(const SpectralNTK& spec, double eta, double t) {
    const double zero = spec.null_threshold();
    Vector d(spec.eigenvalues.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        const double lambda = spec.eigenvalues(i);
        d(i) = lambda > zero ? -std::expm1(-eta * lambda * t) / lambda : 0.0;
    }
    return d;
}

} // namespace detail

/// exp(-eta Theta t) v through the spectral form.
inline Vector evolution_apply(const SpectralNTK& spec, double eta, double t, const Vector& v) {
    detail::check_time(t);
    if (t == 0.0) return v;
    const Matrix& u = spec.eigenvectors;
    return u * (detail::decay(spec, eta, t).asDiagonal() * (u.transpose() * v));
}

/// exp(-eta Theta t) as a dense matrix.
inline Matrix evolution_matrix(const SpectralNTK& spec, double eta, double t) {
    detail::check_time(t);
    const Matrix& u = spec.eigenvectors;
    if (t == 0.0) return Matrix::Identity(u.rows(), u.cols());
    return u * detail::decay(spec, eta, t).asDiagonal() * u.transpose();
}

/// Kernel cross blocks for an evaluation set (rows = eval points).
struct EvalKernels {
    Matrix ntk_cross;
    Matrix nngp_cross;
    Vector nngp_diag;
    std::optional<Matrix> nngp_full;
};

inline EvalKernels eval_kernels_of(const KernelBundle& bundle) {
    return {bundle.ntk_cross, bundle.nngp_cross, bundle.nngp_eval_diag, bundle.nngp_eval};
}

/// B(t) = Theta_x Theta^+ (I - exp(-eta Theta t)).
inline Matrix readout_operator(const SpectralNTK& spec, const Matrix& ntk_cross, double eta, double t) {
    detail::check_time(t);
    detail::check_nonsingular(spec);
    const Matrix& u = spec.eigenvectors;
    return ((ntk_cross * u) * detail::filtered_inverse(spec, eta, t).asDiagonal()) * u.transpose();
}

/// Mean on the training inputs: (I - exp(-eta Theta t)) Y.
inline Vector predictive_mean_train(const SpectralNTK& spec, const Vector& targets, double eta, double t) {
    detail::check_time(t);
    detail::check_nonsingular(spec);
    if (t == 0.0) return Vector::Zero(targets.size());
    return targets - evolution_apply(spec, eta, t, targets);
}

/// Mean on evaluation inputs: B(t) Y.
inline Vector predictive_mean(const SpectralNTK& spec, const Matrix& ntk_cross, const Vector& targets, double eta,
                              double t) {
    if (ntk_cross.cols() != targets.size()) throw DataError("predictive_mean: cross kernel / target size mismatch");
    return readout_operator(spec, ntk_cross, eta, t) * targets;
}

/// Covariance on the training inputs: exp(-eta Theta t) K exp(-eta Theta t).
inline Matrix predictive_covariance_train(const SpectralNTK& spec, const Matrix& nngp_train, double eta, double t) {
    detail::check_time(t);
    detail::check_nonsingular(spec);
    const Matrix e = evolution_matrix(spec, eta, t);
    Matrix cov = e * nngp_train * e;
    return 0.5 * (cov + cov.transpose());
}

/// General covariance formula; needs the full eval x eval NNGP block.
inline Matrix predictive_covariance(const SpectralNTK& spec, const Matrix& nngp_train, const EvalKernels& eval,
                                    double eta, double t) {
    if (!eval.nngp_full) throw DataError("predictive_covariance: full eval NNGP block required");
    const Matrix b = readout_operator(spec, eval.ntk_cross, eta, t);
    const Matrix bkx = b * eval.nngp_cross.transpose();
    Matrix cov = *eval.nngp_full + b * nngp_train * b.transpose() - bkx - bkx.transpose();
    if (t == 0.0) return *eval.nngp_full;
    return 0.5 * (cov + cov.transpose());
}

/// Time-t marginal law of the ensemble output on a point set.
struct PredictiveGaussian {
    double t = 0.0;
    Vector mean;
    Vector variance;  ///< per-point marginal variance
};

/// Marginals on evaluation points without forming the M x M covariance.
inline PredictiveGaussian predict_eval(const SpectralNTK& spec, const Matrix& nngp_train, const EvalKernels& eval,
                                       const Vector& targets, double eta, double t) {
    const Matrix b = readout_operator(spec, eval.ntk_cross, eta, t);
    PredictiveGaussian g;
    g.t = t;
    g.mean = b * targets;
    const Matrix bk = b * nngp_train;
    g.variance = eval.nngp_diag + (bk.cwiseProduct(b)).rowwise().sum() -
                 2.0 * (b.cwiseProduct(eval.nngp_cross)).rowwise().sum();
    return g;
}

inline PredictiveGaussian predict_train(const SpectralNTK& spec, const Matrix& nngp_train, const Vector& targets,
                                        double eta, double t) {
    PredictiveGaussian g;
    g.t = t;
    g.mean = predictive_mean_train(spec, targets, eta, t);
    const Matrix e = evolution_matrix(spec, eta, t);
    const Matrix ek = e * nngp_train;
    g.variance = (ek.cwiseProduct(e)).rowwise().sum();
    return g;
}

/// Geometric or arithmetic grid from t_min to t_max, optionally with t = 0 first.
inline std::vector<double> make_time_grid(double t_min, double t_max, int n, Spacing spacing,
                                          bool prepend_zero = false) {
    if (n < 2) throw ConfigError("time grid needs at least 2 points");
    if (!(t_min < t_max)) throw ConfigError("time grid requires t_min < t_max");
    if (spacing == Spacing::log && !(t_min > 0.0)) throw ConfigError("log-spaced time grid requires t_min > 0");
    if (spacing == Spacing::linear && t_min < 0.0) throw ConfigError("time grid requires t_min >= 0");
    std::vector<double> grid;
    grid.reserve(static_cast<std::size_t>(n) + 1);
    if (prepend_zero && t_min > 0.0) grid.push_back(0.0);
    const double last = n - 1;
    if (spacing == Spacing::log) {
        const double lo = std::log(t_min);
        const double hi = std::log(t_max);
        for (int i = 0; i < n; ++i) grid.push_back(std::exp(lo + (hi - lo) * (i / last)));
    } else {
        for (int i = 0; i < n; ++i) grid.push_back(t_min + (t_max - t_min) * (i / last));
    }
    grid[grid.size() - 1] = t_max;
    grid[prepend_zero && t_min > 0.0 ? 1 : 0] = t_min;
    return grid;
}

/// Classical RK4 integration of du/dt = -eta Theta u from u(0) = v.
inline Vector ode_oracle(const Matrix& ntk, double eta, double t, const Vector& v, int steps) {
    if (steps < 1) throw ConfigError("ode_oracle: steps must be >= 1");
    Vector u = v;
    if (t == 0.0) return u;
    const double h = t / steps;
    const auto rhs = [&](const Vector& x) -> Vector { return -eta * (ntk * x); };
    for (int s = 0; s < steps; ++s) {
        const Vector k1 = rhs(u);
        const Vector k2 = rhs(u + 0.5 * h * k1);
        const Vector k3 = rhs(u + 0.5 * h * k2);
        const Vector k4 = rhs(u + h * k3);
        u += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return u;
}

/// An evaluation set for loss tracking. The "train" set uses the training
/// simplification; every other set goes through its cross kernels.
struct LossSet {
    std::string name;
    bool is_train = false;
    EvalKernels kernels;  // unused when is_train
    Vector targets;
};

struct LossRecord {
    double t = 0.0;
    std::string set;
    double mean_mse = 0.0;      ///< ||mu_t - y||^2 / M
    double expected_mse = 0.0;  ///< mean_mse + trace(Sigma_t) / M
};

inline LossRecord loss_of(const PredictiveGaussian& g, const Vector& targets, const std::string& name) {
    const double m = static_cast<double>(targets.size());
    LossRecord r;
    r.t = g.t;
    r.set = name;
    r.mean_mse = (g.mean - targets).squaredNorm() / m;
    r.expected_mse = r.mean_mse + g.variance.sum() / m;
    return r;
}

inline std::vector<LossRecord> loss_series(const DynamicsConfig& config, const KernelBundle& bundle,
                                           const SpectralNTK& spec, const Vector& train_targets,
                                           const std::vector<LossSet>& sets) {
    config.validate();
    bool has_train = false, has_clean = false;
    for (const auto& s : sets) {
        if (s.targets.size() == 0) throw DataError("loss_series: evaluation set '" + s.name + "' is empty");
        has_train |= s.name == "train";
        has_clean |= s.name == "clean_test";
    }
    if (!has_train || !has_clean) throw DataError("loss_series: evaluation sets must include 'train' and 'clean_test'");
    std::vector<LossRecord> out;
    for (double t : config.time_grid) {
        for (const auto& s : sets) {
            const PredictiveGaussian g =
                s.is_train ? predict_train(spec, bundle.nngp_train, train_targets, config.learning_rate, t)
                           : predict_eval(spec, bundle.nngp_train, s.kernels, train_targets, config.learning_rate, t);
            out.push_back(loss_of(g, s.targets, s.name));
        }
    }
    return out;
}

} // namespace shortcut
