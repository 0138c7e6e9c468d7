// Gaussian kernel density estimation of total-lifetime distributions on the
// integer timestep grid, with Silverman bandwidth selection and discrete
// KL divergence between two such densities.
//
// Densities live on the truncated support [1, horizon] and are renormalized
// there, so a unit bin's probability mass equals the density at its step.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rulkit/common.hpp"

namespace rulkit {

// ---------------------------------------------------------------------------
// Lifetime density
// ---------------------------------------------------------------------------

/// Probability density of total lifetime over integer timesteps 1..horizon.
struct LifetimePdf {
    std::vector<double> densities;  // densities[t-1] is the density at step t
    double bandwidth = 0.0;
    std::size_t sample_count = 0;

    std::size_t horizon() const { return densities.size(); }

    /// Density at an integer step; zero outside the support.
    double density_at(std::size_t step) const {
        if (step < 1 || step > densities.size()) return 0.0;
        return densities[step - 1];
    }

    /// Probability mass of the unit bin [step - 1/2, step + 1/2]. With a
    /// one-step grid spacing this equals the density, which is the quantity
    /// comparable across bandwidths.
    double mass_at(std::size_t step) const { return density_at(step); }

    /// Densities non-negative, total mass 1 within 1e-6.
    void validate() const {
        if (densities.empty()) throw Error("lifetime pdf: empty support");
        double total = 0.0;
        for (double d : densities) {
            if (!(d >= 0.0)) throw Error("lifetime pdf: negative or non-finite density");
            total += d;
        }
        if (std::abs(total - 1.0) > 1e-6)
            throw Error("lifetime pdf: mass " + std::to_string(total) + " not normalized");
    }
};

// ---------------------------------------------------------------------------
// Bandwidth selection
// ---------------------------------------------------------------------------

namespace detail {

/// Linear-interpolation quantile (the convention spreadsheet and NumPy
/// default to) on an already sorted sample.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    double pos = p * static_cast<double>(n - 1);
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) return sorted[n - 1];
    double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

/// Silverman's rule: 0.9 * min(sample sd, IQR / 1.349) * n^(-1/5).
/// Degenerate samples (n < 2, or zero spread in either estimate) return 0;
/// the KDE applies its own floor.
inline double silverman_bandwidth(std::span<const double> values) {
    std::size_t n = values.size();
    if (n == 0) throw UsageError("silverman_bandwidth: empty sample");
    if (n == 1) return 0.0;

    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    double sd = std::sqrt(ss / static_cast<double>(n - 1));

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    double iqr = detail::quantile_sorted(sorted, 0.75) - detail::quantile_sorted(sorted, 0.25);

    double spread = std::min(sd, iqr / 1.349);
    return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

// ---------------------------------------------------------------------------
// Density estimation
// ---------------------------------------------------------------------------

constexpr double kDegenerateBandwidth = 0.5;  // timesteps; keeps zero-spread KDEs defined

/// Gaussian KDE of integer lifetimes on the grid 1..horizon, renormalized so
/// the densities sum to one over the truncated support.
inline LifetimePdf lifetime_pdf(std::span<const std::size_t> lifetimes, std::size_t horizon) {
    if (lifetimes.empty()) throw UsageError("lifetime_pdf: empty input");
    if (horizon == 0) throw UsageError("lifetime_pdf: zero horizon");
    for (std::size_t t : lifetimes) {
        if (t < 1 || t > horizon)
            throw Error("lifetime_pdf: lifetime " + std::to_string(t) +
                        " outside support [1, " + std::to_string(horizon) + "]");
    }

    std::vector<double> as_double(lifetimes.begin(), lifetimes.end());
    double h = silverman_bandwidth(as_double);
    if (!(h > 0.0)) h = kDegenerateBandwidth;

    LifetimePdf pdf;
    pdf.bandwidth = h;
    pdf.sample_count = lifetimes.size();
    pdf.densities.assign(horizon, 0.0);
    double inv_h = 1.0 / h;
    double norm = inv_h / std::sqrt(2.0 * kPi) / static_cast<double>(lifetimes.size());
    for (std::size_t step = 1; step <= horizon; ++step) {
        double acc = 0.0;
        for (double t : as_double) {
            double u = (static_cast<double>(step) - t) * inv_h;
            acc += std::exp(-0.5 * u * u);
        }
        pdf.densities[step - 1] = norm * acc;
    }

    double total = 0.0;
    for (double d : pdf.densities) total += d;
    if (!(total > 0.0)) throw Error("lifetime_pdf: no density mass on the support");
    for (double& d : pdf.densities) d /= total;
    return pdf;
}

// ---------------------------------------------------------------------------
// Divergence
// ---------------------------------------------------------------------------

constexpr double kKlFloor = 1e-12;  // on q, so mass where q vanishes stays finite

/// Discrete KL divergence sum p*log(p/q) over the integer grid covering both
/// supports. Steps where p has no mass contribute nothing.
inline double kl_divergence(const LifetimePdf& p, const LifetimePdf& q) {
    p.validate();
    q.validate();
    std::size_t grid = std::max(p.horizon(), q.horizon());
    double kl = 0.0;
    for (std::size_t step = 1; step <= grid; ++step) {
        double pd = p.density_at(step);
        if (pd <= 0.0) continue;
        double qd = std::max(q.density_at(step), kKlFloor);
        kl += pd * std::log(pd / qd);
    }
    return kl;
}

}  // namespace rulkit
