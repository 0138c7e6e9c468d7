// Chain-of-oscillators population simulator: fixed-free mass-spring-damper
// chains, their acceleration FRFs, stochastic stiffness degradation, and
// lifetime labeling against a third-natural-frequency limit.
//
// Geometry: mass i couples to mass i-1 through spring k_i (spring 1 grounds
// the chain), every mass has its own grounded damper c_i. Force enters at
// mass 1, the response is the acceleration of mass 2.
//
// All randomness flows from one master seed. Per-structure streams are
// derived as hash(master_seed, structure_id), then split once more into a
// "spec" stream (initial stiffness draws) and a "degrade" stream (step
// noise), so building specs and simulating paths never share draws.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "rulkit/common.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

/// Degradation drove a stiffness to or below zero: the part is gone, the
/// trajectory has no meaningful continuation.
struct ExhaustionError : Error {
    using Error::Error;
};

struct SystemSpec {
    std::vector<double> masses;       // kg
    std::vector<double> stiffnesses;  // N/m
    std::vector<double> dampings;     // N·s/m

    std::size_t dof() const { return masses.size(); }

    void validate() const {
        if (masses.empty() || masses.size() != stiffnesses.size() ||
            masses.size() != dampings.size())
            throw Error("system: need equal-length, non-empty mass/stiffness/damping arrays");
        for (double v : masses)
            if (!(v > 0.0)) throw Error("system: masses must be strictly positive");
        for (double v : stiffnesses)
            if (!(v > 0.0)) throw Error("system: stiffnesses must be strictly positive");
        for (double v : dampings)
            if (!(v > 0.0)) throw Error("system: dampings must be strictly positive");
    }
};

/// Which springs degrade and by how much per timestep. Parallel arrays:
/// spring_numbers[i] (1-based spring index) loses nominal_steps[i] plus
/// Gaussian noise with standard deviation noise_ratio * nominal_steps[i]
/// each step.
struct DamageRule {
    std::vector<int> spring_numbers;
    std::vector<double> nominal_steps;  // N/m per timestep
    double noise_ratio = 0.1;

    void validate(std::size_t dof) const {
        if (spring_numbers.empty()) throw Error("damage rule: no degraded springs");
        if (spring_numbers.size() != nominal_steps.size())
            throw Error("damage rule: spring/step array length mismatch");
        for (int s : spring_numbers)
            if (s < 1 || static_cast<std::size_t>(s) > dof)
                throw Error("damage rule: spring " + std::to_string(s) + " outside 1.." +
                            std::to_string(dof));
        for (double k : nominal_steps)
            if (!(k > 0.0)) throw Error("damage rule: nominal step must be positive");
        if (noise_ratio < 0.0) throw Error("damage rule: negative noise ratio");
    }
};

/// Acceleration-per-force transfer function sampled on a frequency grid.
struct FrfSeries {
    std::vector<double> frequencies;            // Hz, strictly increasing
    std::vector<std::complex<double>> values;   // (m/s^2)/N
};

struct Snapshot {
    SystemSpec spec;
    FrfSeries frf;
    double f3 = 0.0;  // third natural frequency, Hz
};

/// One structure's recorded history. Snapshot t (0-based index t-1) is the
/// state after t degradation steps; the pristine state is not recorded.
/// lifetime is the 1-based index of the first snapshot at or below the limit,
/// and equals snapshots.size().
struct DamageTrajectory {
    std::uint64_t structure_id = 0;
    std::vector<Snapshot> snapshots;
    int lifetime = 0;
};

struct PopulationConfig {
    std::size_t n_structures = 1000;
    // Initial stiffness draws for springs 2 and 3.
    double k_mean = 6000.0, k_std = 120.0;
    // Per-timestep nominal decrement, uniform per structure.
    double kn_min = 42.0, kn_max = 90.0;
    double noise_ratio = 0.1;
    std::vector<int> degraded_springs = {2};
    // Fixed chain parameters.
    double mass = 0.02, damping = 1.0, k_edge = 6000.0;  // k1 and k4
    std::size_t dof = 4;
    // FRF grid.
    double f_min = 0.0, f_max = 250.0;
    std::size_t n_grid = 512;
    // Limit state and safeguard.
    double limit_hz = 119.0;
    std::size_t max_steps = 10000;

    void validate() const {
        if (n_structures < 1) throw UsageError("population: size must be >= 1");
        if (!(k_mean > 0.0) || k_std < 0.0) throw UsageError("population: bad stiffness draw");
        if (!(kn_min > 0.0) || kn_max < kn_min) throw UsageError("population: bad step bounds");
        if (noise_ratio < 0.0) throw UsageError("population: negative noise ratio");
        if (dof < 2) throw UsageError("population: need at least 2 masses");
        if (!(mass > 0.0) || !(damping > 0.0) || !(k_edge > 0.0))
            throw UsageError("population: chain parameters must be positive");
        if (n_grid < 8 || !(f_max > f_min) || f_min < 0.0)
            throw UsageError("population: bad frequency grid");
        if (!(limit_hz > 0.0)) throw UsageError("population: bad frequency limit");
        if (max_steps < 1) throw UsageError("population: max_steps must be >= 1");
        for (int s : degraded_springs)
            if (s < 2 || static_cast<std::size_t>(s) > dof)
                throw UsageError("population: degraded springs must lie in 2.." +
                                 std::to_string(dof));
    }
};

struct PopulationDataset {
    std::vector<DamageTrajectory> trajectories;
    std::uint64_t config_hash = 0;
    std::uint64_t master_seed = 0;
    std::uint64_t resample_count = 0;  // rejected non-positive stiffness draws
};

inline std::vector<double> frequency_grid(double f_min, double f_max, std::size_t n) {
    if (n < 2 || !(f_max > f_min)) throw Error("grid: need n >= 2 and f_max > f_min");
    std::vector<double> g(n);
    const double step = (f_max - f_min) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) g[i] = f_min + step * static_cast<double>(i);
    return g;
}

// -- chain matrices -----------------------------------------------------------

inline Eigen::MatrixXd chain_stiffness(const SystemSpec& s) {
    const auto n = static_cast<Eigen::Index>(s.dof());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        K(i, i) += s.stiffnesses[static_cast<std::size_t>(i)];
        if (i + 1 < n) {
            const double kn = s.stiffnesses[static_cast<std::size_t>(i) + 1];
            K(i, i) += kn;
            K(i, i + 1) -= kn;
            K(i + 1, i) -= kn;
        }
    }
    return K;
}

inline Eigen::MatrixXd chain_mass(const SystemSpec& s) {
    Eigen::VectorXd m = Eigen::Map<const Eigen::VectorXd>(
        s.masses.data(), static_cast<Eigen::Index>(s.dof()));
    return m.asDiagonal();
}

inline Eigen::MatrixXd chain_damping(const SystemSpec& s) {
    Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(
        s.dampings.data(), static_cast<Eigen::Index>(s.dof()));
    return c.asDiagonal();
}

struct ModalDecomposition {
    std::vector<double> omega_sq;   // rad^2/s^2, ascending
    Eigen::MatrixXd mode_shapes;    // columns, in physical coordinates
};

/// Undamped generalized eigenproblem K phi = omega^2 M phi, solved through
/// the symmetric transform M^{-1/2} K M^{-1/2} (M is diagonal positive).
inline ModalDecomposition modal_decomposition(const SystemSpec& spec) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.dof());
    Eigen::VectorXd inv_sqrt_m(n);
    for (Eigen::Index i = 0; i < n; ++i)
        inv_sqrt_m(i) = 1.0 / std::sqrt(spec.masses[static_cast<std::size_t>(i)]);
    Eigen::MatrixXd A = inv_sqrt_m.asDiagonal() * chain_stiffness(spec) * inv_sqrt_m.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(A);
    if (solver.info() != Eigen::Success) {
        std::string dump = "eigen solve failed for spec k=[";
        for (double k : spec.stiffnesses) dump += std::to_string(k) + " ";
        throw Error(dump + "]");
    }
    ModalDecomposition md;
    md.omega_sq.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
    md.mode_shapes = inv_sqrt_m.asDiagonal() * solver.eigenvectors();
    return md;
}

/// Natural frequencies in Hz, ascending.
inline std::vector<double> natural_frequencies(const SystemSpec& spec) {
    ModalDecomposition md = modal_decomposition(spec);
    std::vector<double> f(md.omega_sq.size());
    for (std::size_t j = 0; j < f.size(); ++j)
        f[j] = std::sqrt(std::max(md.omega_sq[j], 0.0)) / (2.0 * kPi);
    return f;
}

/// Acceleration FRF at mass 2 for unit force at mass 1:
/// H_a(w) = -w^2 [ (K - w^2 M + i w C)^{-1} ]_{2,1} with w = 2 pi f.
inline FrfSeries frf_acceleration(const SystemSpec& spec, const std::vector<double>& grid_hz) {
    spec.validate();
    if (spec.dof() < 2) throw Error("frf: response mass 2 requires at least 2 masses");
    for (std::size_t i = 1; i < grid_hz.size(); ++i)
        if (!(grid_hz[i] > grid_hz[i - 1])) throw Error("frf: grid must be strictly increasing");
    const auto n = static_cast<Eigen::Index>(spec.dof());
    const Eigen::MatrixXd K = chain_stiffness(spec);
    const Eigen::MatrixXd M = chain_mass(spec);
    const Eigen::MatrixXd C = chain_damping(spec);
    FrfSeries out;
    out.frequencies = grid_hz;
    out.values.resize(grid_hz.size());
    Eigen::MatrixXcd D(n, n);
    Eigen::VectorXcd e1 = Eigen::VectorXcd::Zero(n);
    e1(0) = 1.0;
    for (std::size_t i = 0; i < grid_hz.size(); ++i) {
        const double w = 2.0 * kPi * grid_hz[i];
        D = K - w * w * M;
        D += std::complex<double>(0.0, w) * C;
        Eigen::PartialPivLU<Eigen::MatrixXcd> lu(D);
        Eigen::VectorXcd x = lu.solve(e1);
        const double resid = (D * x - e1).norm();
        if (!(resid < 1e-6))
            throw Error("frf: dynamic stiffness singular at " + std::to_string(grid_hz[i]) +
                        " Hz");
        out.values[i] = -w * w * x(1);
    }
    return out;
}

// -- degradation --------------------------------------------------------------

/// One degradation step: each listed spring loses nominal_step plus zero-mean
/// Gaussian noise with sd = noise_ratio * nominal_step. Springs are processed
/// in array order, one Gaussian draw each.
inline SystemSpec degrade_step(const SystemSpec& spec, const DamageRule& rule, Rng& rng) {
    rule.validate(spec.dof());
    SystemSpec next = spec;
    for (std::size_t i = 0; i < rule.spring_numbers.size(); ++i) {
        const std::size_t idx = static_cast<std::size_t>(rule.spring_numbers[i]) - 1;
        const double kn = rule.nominal_steps[i];
        const double decrement = kn + rng.gaussian(0.0, rule.noise_ratio * kn);
        next.stiffnesses[idx] -= decrement;
        if (!(next.stiffnesses[idx] > 0.0))
            throw ExhaustionError("spring " + std::to_string(rule.spring_numbers[i]) +
                                  " exhausted: stiffness " +
                                  std::to_string(next.stiffnesses[idx]) + " N/m");
    }
    return next;
}

inline double third_frequency(const SystemSpec& spec) {
    const auto f = natural_frequencies(spec);
    if (f.size() < 3) throw Error("third frequency undefined for " + std::to_string(f.size()) +
                                  "-mass chain");
    return f[2];
}

/// Degrade until the third natural frequency first reaches the limit; record
/// one snapshot per step. The pristine state must sit above the limit and is
/// not recorded.
inline DamageTrajectory simulate_trajectory(std::uint64_t structure_id, const SystemSpec& spec0,
                                            const DamageRule& rule,
                                            const std::vector<double>& grid_hz, double limit_hz,
                                            std::size_t max_steps, Rng& rng) {
    spec0.validate();
    if (!(third_frequency(spec0) > limit_hz))
        throw Error("structure " + std::to_string(structure_id) +
                    ": initial third natural frequency already at or below " +
                    std::to_string(limit_hz) + " Hz");
    DamageTrajectory traj;
    traj.structure_id = structure_id;
    SystemSpec spec = spec0;
    for (std::size_t t = 1; t <= max_steps; ++t) {
        spec = degrade_step(spec, rule, rng);
        Snapshot snap;
        snap.spec = spec;
        snap.f3 = third_frequency(spec);
        snap.frf = frf_acceleration(spec, grid_hz);
        const bool crossed = snap.f3 <= limit_hz;
        traj.snapshots.push_back(std::move(snap));
        if (crossed) {
            traj.lifetime = static_cast<int>(t);
            return traj;
        }
    }
    throw Error("structure " + std::to_string(structure_id) + ": no limit crossing within " +
                std::to_string(max_steps) + " steps (last f3 = " +
                std::to_string(traj.snapshots.back().f3) + " Hz, limit " +
                std::to_string(limit_hz) + " Hz)");
}

// -- population ---------------------------------------------------------------

struct PopulationSpecs {
    std::vector<std::pair<SystemSpec, DamageRule>> structures;
    std::uint64_t resample_count = 0;
};

/// Draw per-structure initial specs and damage rules. Springs 2 and 3 get
/// independent Gaussian initial stiffnesses; each degraded spring gets an
/// independent uniform nominal step. Non-positive draws are rejected and
/// redrawn (counted).
inline PopulationSpecs build_population_specs(const PopulationConfig& cfg,
                                              std::uint64_t master_seed) {
    cfg.validate();
    PopulationSpecs out;
    out.structures.reserve(cfg.n_structures);
    for (std::size_t id = 0; id < cfg.n_structures; ++id) {
        Rng rng(derive_stream(derive_stream(master_seed, id), "spec"));
        SystemSpec spec;
        spec.masses.assign(cfg.dof, cfg.mass);
        spec.dampings.assign(cfg.dof, cfg.damping);
        spec.stiffnesses.assign(cfg.dof, cfg.k_edge);
        for (std::size_t s : {std::size_t{1}, std::size_t{2}}) {  // springs 2 and 3
            if (s >= cfg.dof) continue;
            double k = rng.gaussian(cfg.k_mean, cfg.k_std);
            while (!(k > 0.0)) {
                ++out.resample_count;
                k = rng.gaussian(cfg.k_mean, cfg.k_std);
            }
            spec.stiffnesses[s] = k;
        }
        DamageRule rule;
        rule.noise_ratio = cfg.noise_ratio;
        for (int s : cfg.degraded_springs) {
            rule.spring_numbers.push_back(s);
            rule.nominal_steps.push_back(rng.uniform(cfg.kn_min, cfg.kn_max));
        }
        spec.validate();
        rule.validate(cfg.dof);
        out.structures.emplace_back(std::move(spec), std::move(rule));
    }
    return out;
}

/// Simulate the whole population. Pure per structure given its derived
/// stream; config_hash is filled by callers that know the full run config.
inline PopulationDataset simulate_population(const PopulationConfig& cfg,
                                             std::uint64_t master_seed) {
    PopulationSpecs specs = build_population_specs(cfg, master_seed);
    const std::vector<double> grid = frequency_grid(cfg.f_min, cfg.f_max, cfg.n_grid);
    PopulationDataset ds;
    ds.master_seed = master_seed;
    ds.resample_count = specs.resample_count;
    ds.trajectories.resize(cfg.n_structures);
    for (std::size_t id = 0; id < cfg.n_structures; ++id) {
        Rng rng(derive_stream(derive_stream(master_seed, id), "degrade"));
        ds.trajectories[id] = simulate_trajectory(id, specs.structures[id].first,
                                                  specs.structures[id].second, grid,
                                                  cfg.limit_hz, cfg.max_steps, rng);
    }
    return ds;
}

// -- peak picking -------------------------------------------------------------

struct MagnitudePeak {
    std::size_t index = 0;   // grid index of the local maximum
    double frequency = 0.0;  // Hz, refined by quadratic interpolation
    double magnitude = 0.0;
    double prominence = 0.0;
};

/// Local maxima of a magnitude curve with prominence at least
/// prominence_ratio times the global maximum, ascending in frequency.
/// Prominence walks outward from each peak to the higher terrain on either
/// side and measures the drop to the deepest intervening valley.
inline std::vector<MagnitudePeak> find_magnitude_peaks(const std::vector<double>& freqs,
                                                       const std::vector<double>& mags,
                                                       double prominence_ratio) {
    if (freqs.size() != mags.size()) throw Error("peaks: grid/magnitude length mismatch");
    std::vector<MagnitudePeak> peaks;
    if (mags.size() < 3) return peaks;
    const double global_max = *std::max_element(mags.begin(), mags.end());
    const double threshold = prominence_ratio * global_max;
    for (std::size_t i = 1; i + 1 < mags.size(); ++i) {
        if (!(mags[i] > mags[i - 1] && mags[i] >= mags[i + 1])) continue;
        double left_min = mags[i];
        for (std::size_t j = i; j-- > 0;) {
            if (mags[j] > mags[i]) break;
            left_min = std::min(left_min, mags[j]);
        }
        double right_min = mags[i];
        for (std::size_t j = i + 1; j < mags.size(); ++j) {
            if (mags[j] > mags[i]) break;
            right_min = std::min(right_min, mags[j]);
        }
        const double prominence = mags[i] - std::max(left_min, right_min);
        if (prominence < threshold) continue;
        MagnitudePeak p;
        p.index = i;
        p.magnitude = mags[i];
        p.prominence = prominence;
        // Quadratic fit through the peak and its neighbors refines the
        // frequency below grid resolution.
        const double denom = mags[i - 1] - 2.0 * mags[i] + mags[i + 1];
        double delta = 0.0;
        if (denom < 0.0) delta = 0.5 * (mags[i - 1] - mags[i + 1]) / denom;
        delta = std::clamp(delta, -0.5, 0.5);
        p.frequency = freqs[i] + delta * (freqs[std::min(i + 1, freqs.size() - 1)] - freqs[i]);
        peaks.push_back(p);
    }
    return peaks;
}

}  // namespace rulkit
