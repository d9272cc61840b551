#pragma once

// Entropy and mutual-information estimates for mixtures of one-dimensional
// Gaussians, via pairwise-divergence mixture-entropy estimators:
//   H_D = sum_i w_i H(p_i) - sum_i w_i ln sum_j w_j exp(-D(p_i || p_j)).
// D = KL gives an upper bound on the mixture entropy, D = Bhattacharyya a lower bound.
// Everything is in nats.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shortcut/error.hpp"
#include "shortcut/parallel.hpp"
#include "shortcut/rng.hpp"

namespace shortcut {

inline constexpr double kMinVariance = 1e-12;

struct GaussianComponent {
    double mean = 0.0;
    double variance = 1.0;
};

struct GaussianMixture {
    std::vector<double> weights;
    std::vector<GaussianComponent> components;

    static GaussianMixture uniform(std::vector<GaussianComponent> comps) {
        GaussianMixture m;
        m.weights.assign(comps.size(), 1.0 / static_cast<double>(comps.size()));
        m.components = std::move(comps);
        return m;
    }

    void validate() const {
        if (components.empty()) throw DataError("mixture needs at least one component");
        if (weights.size() != components.size()) throw DataError("mixture weight/component count mismatch");
        double total = 0.0;
        for (double w : weights) {
            if (!(w >= 0.0)) throw DataError("mixture weights must be non-negative");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-12) throw DataError("mixture weights must sum to 1");
        for (const auto& c : components)
            if (!(c.variance > 0.0) || !std::isfinite(c.mean)) throw DataError("mixture component must have positive variance");
    }
};

struct MonteCarloValue {
    double nats = 0.0;
    double standard_error = 0.0;
};

/// Mutual-information estimate. `lower`/`upper` bracket the quantity when the
/// mixture-entropy bounds hold; `estimate` is the reported point value.
struct MIEstimate {
    double upper_nats = 0.0;
    double lower_nats = 0.0;
    double estimate_nats = 0.0;
    double bhattacharyya_estimate_nats = 0.0;
    std::optional<MonteCarloValue> mc;
};

inline double gaussian_entropy(double variance) {
    if (!(variance > 0.0)) throw DataError("gaussian_entropy: variance must be positive");
    return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * variance);
}

inline double kl_gaussian(const GaussianComponent& p, const GaussianComponent& q) {
    const double d = p.mean - q.mean;
    return 0.5 * (std::log(q.variance / p.variance) + (p.variance + d * d) / q.variance - 1.0);
}

inline double bhattacharyya_gaussian(const GaussianComponent& p, const GaussianComponent& q) {
    const double d = p.mean - q.mean;
    const double sum = p.variance + q.variance;
    return d * d / (4.0 * sum) + 0.5 * std::log(sum / (2.0 * std::sqrt(p.variance * q.variance)));
}

inline double mixture_conditional_entropy(const GaussianMixture& m) {
    m.validate();
    double h = 0.0;
    for (std::size_t i = 0; i < m.components.size(); ++i)
        if (m.weights[i] > 0.0) h += m.weights[i] * gaussian_entropy(m.components[i].variance);
    return h;
}

enum class Divergence { kl, bhattacharyya };

namespace detail {

inline double divergence(Divergence d, const GaussianComponent& p, const GaussianComponent& q) {
    return d == Divergence::kl ? kl_gaussian(p, q) : bhattacharyya_gaussian(p, q);
}

// For each i in rows: ln sum_{j in cols} w_j exp(-D(p_i || p_j)), log-sum-exp stabilized.
// Rows run in parallel; each row is reduced sequentially in column order.
inline std::vector<double> pairwise_log_mass(std::span<const GaussianComponent> comps, std::span<const double> weights,
                                             std::span<const std::size_t> rows, std::span<const std::size_t> cols,
                                             Divergence d) {
    std::vector<double> out(rows.size());
    parallel_for(rows.size(), [&](std::size_t r) {
        const auto& p = comps[rows[r]];
        double peak = -std::numeric_limits<double>::infinity();
        std::vector<double> terms(cols.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t c = 0; c < cols.size(); ++c) {
            const double w = weights[cols[c]];
            if (w <= 0.0) continue;
            terms[c] = std::log(w) - divergence(d, p, comps[cols[c]]);
            peak = std::max(peak, terms[c]);
        }
        double sum = 0.0;
        for (double term : terms) sum += std::exp(term - peak);
        out[r] = peak + std::log(sum);
    });
    return out;
}

inline std::vector<std::size_t> iota(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

// -sum_i w_i ln sum_j w_j exp(-D_ij): the mixture entropy minus its conditional entropy.
inline double pairwise_excess(const GaussianMixture& m, Divergence d) {
    const auto all = iota(m.components.size());
    const auto mass = pairwise_log_mass(m.components, m.weights, all, all, d);
    double excess = 0.0;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (m.weights[i] > 0.0) excess -= m.weights[i] * mass[i];
    return excess;
}

// Equal-weight version: -(1/N) sum_i [ln sum_j exp(-D_ij) - ln N].
// Exactly zero when every divergence is zero.
inline double uniform_excess(std::span<const GaussianComponent> comps, std::span<const std::size_t> members,
                             Divergence d) {
    const std::vector<double> ones(comps.size(), 1.0);
    const auto mass = pairwise_log_mass(comps, ones, members, members, d);
    const double log_n = std::log(static_cast<double>(members.size()));
    double total = 0.0;
    for (double v : mass) total += v - log_n;
    return -total / static_cast<double>(members.size());
}

inline void check_components(std::span<const GaussianComponent> comps) {
    if (comps.empty()) throw DataError("mutual information needs at least one component");
    for (const auto& c : comps)
        if (!(c.variance > 0.0) || !std::isfinite(c.mean))
            throw DataError("component variance must be positive and mean finite");
}

} // namespace detail

struct EntropyBounds {
    double upper_nats;
    double lower_nats;
};

/// Pairwise-KL upper and pairwise-Bhattacharyya lower bound on the mixture entropy.
inline EntropyBounds mixture_entropy_bounds(const GaussianMixture& m) {
    const double conditional = mixture_conditional_entropy(m);
    return {conditional + detail::pairwise_excess(m, Divergence::kl),
            conditional + detail::pairwise_excess(m, Divergence::bhattacharyya)};
}

/// I(X;Z) for an equal-weight empirical input distribution with per-input laws p(z|x_i).
/// The conditional entropy cancels exactly, so only pairwise divergences enter.
inline MIEstimate mi_xz(std::span<const GaussianComponent> per_input) {
    detail::check_components(per_input);
    const auto all = detail::iota(per_input.size());
    MIEstimate e;
    e.upper_nats = std::max(0.0, detail::uniform_excess(per_input, all, Divergence::kl));
    e.lower_nats = std::max(0.0, detail::uniform_excess(per_input, all, Divergence::bhattacharyya));
    e.estimate_nats = e.upper_nats;
    e.bhattacharyya_estimate_nats = e.lower_nats;
    return e;
}

/// I(Z;Y) = H(Z) - sum_c p_c H(Z | Y = c) with empirical class priors.
/// estimate: both entropies from the KL estimator; the bracket pairs KL and
/// Bhattacharyya terms so that it holds whenever the entropy bounds do.
inline MIEstimate mi_zy(std::span<const GaussianComponent> per_input, std::span<const double> labels) {
    detail::check_components(per_input);
    if (labels.size() != per_input.size()) throw DataError("mi_zy: label count does not match component count");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1.0) pos.push_back(i);
        else if (labels[i] == -1.0) neg.push_back(i);
        else throw DataError("mi_zy: labels must be +1 or -1");
    }
    if (pos.empty() || neg.empty()) throw DataError("mi_zy: labels contain a single class; I(Z;Y) is undefined");

    const auto all = detail::iota(per_input.size());
    const double n = static_cast<double>(per_input.size());
    // Excess terms; conditional entropies cancel between H(Z) and H(Z|Y).
    const auto conditional_excess = [&](Divergence d) {
        return (static_cast<double>(pos.size()) / n) * detail::uniform_excess(per_input, pos, d) +
               (static_cast<double>(neg.size()) / n) * detail::uniform_excess(per_input, neg, d);
    };
    const double marginal_kl = detail::uniform_excess(per_input, all, Divergence::kl);
    const double marginal_bd = detail::uniform_excess(per_input, all, Divergence::bhattacharyya);
    const double class_kl = conditional_excess(Divergence::kl);
    const double class_bd = conditional_excess(Divergence::bhattacharyya);

    MIEstimate e;
    e.estimate_nats = std::max(0.0, marginal_kl - class_kl);
    e.bhattacharyya_estimate_nats = std::max(0.0, marginal_bd - class_bd);
    e.upper_nats = std::max(0.0, marginal_kl - class_bd);
    e.lower_nats = std::max(0.0, marginal_bd - class_kl);
    return e;
}

/// Monte-Carlo entropy: -(1/n) sum ln m(z_k) over z_k ~ m.
inline MonteCarloValue mc_entropy(const GaussianMixture& m, std::int64_t n_samples, std::uint64_t seed) {
    m.validate();
    if (n_samples < 2) throw ConfigError("mc_entropy: need at least 2 samples");
    Rng rng(seed);
    const std::size_t k = m.components.size();
    std::vector<double> cumulative(k);
    std::vector<double> log_norm(k), log_w(k);
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        acc += m.weights[i];
        cumulative[i] = acc;
        log_w[i] = m.weights[i] > 0.0 ? std::log(m.weights[i]) : -std::numeric_limits<double>::infinity();
        log_norm[i] = -0.5 * std::log(2.0 * std::numbers::pi * m.components[i].variance);
    }
    // Welford accumulation of -ln m(z).
    double mean = 0.0, m2 = 0.0;
    std::vector<double> terms(k);
    for (std::int64_t s = 0; s < n_samples; ++s) {
        const double u = rng.uniform() * acc;
        const std::size_t idx = std::min<std::size_t>(
            static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin()),
            k - 1);
        const auto& c = m.components[idx];
        const double z = c.mean + std::sqrt(c.variance) * rng.normal();
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) {
            const double d = z - m.components[i].mean;
            terms[i] = log_w[i] + log_norm[i] - 0.5 * d * d / m.components[i].variance;
            peak = std::max(peak, terms[i]);
        }
        double total = 0.0;
        for (double t : terms) total += std::exp(t - peak);
        const double x = -(peak + std::log(total));
        const double delta = x - mean;
        mean += delta / static_cast<double>(s + 1);
        m2 += delta * (x - mean);
    }
    const double nd = static_cast<double>(n_samples);
    return {mean, std::sqrt(m2 / (nd - 1.0) / nd)};
}

/// Per-point marginal laws with variances clamped from below.
inline std::vector<GaussianComponent> marginal_components(std::span<const double> means,
                                                          std::span<const double> variances,
                                                          double clamp = kMinVariance) {
    if (means.size() != variances.size()) throw DataError("marginal_components: size mismatch");
    std::vector<GaussianComponent> out(means.size());
    for (std::size_t i = 0; i < means.size(); ++i) {
        if (!(variances[i] >= -1e-10) || !std::isfinite(means[i]))
            throw NumericError("predictive variance is negative or mean non-finite at point " + std::to_string(i));
        out[i] = {means[i], std::max(variances[i], clamp)};
    }
    return out;
}

} // namespace shortcut
