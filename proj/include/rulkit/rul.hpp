// Remaining-useful-life estimation: embed an observed feature prefix into
// noise codes, roll a population of generated outcomes forward to the
// horizon, label each outcome's failure step on its reconstructed FRF, and
// summarize the surviving lifetimes as a density with censoring bookkeeping.
//
// Outcomes generated from a shared code prefix agree bit-for-bit on the
// observed steps: the prefix is stored once, batch rows evolve independently
// through the deterministic forward kernels, and identical row inputs give
// identical row outputs.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rulkit/kde.hpp"
#include "rulkit/timegan.hpp"

namespace rulkit {

// ---------------------------------------------------------------------------
// Prefix embedding
// ---------------------------------------------------------------------------

/// Noise codes recovered from an observed prefix, with the replay quality of
/// the codes measured by regenerating the observations from them.
struct EmbeddedPrefix {
    std::vector<std::vector<double>> codes;  // t_c rows of latent coordinates, in [-1,1]
    double replay_error = 0.0;               // |x - r(g(codes))| / |x|, unscaled features
    bool above_gate = false;
};

/// codes = k(x_{1:t_c}) for an unscaled feature prefix. The replay error is
/// the relative Frobenius distance between the observations and their
/// regeneration r(g(codes)); crossing the gate only raises the flag.
inline EmbeddedPrefix embed_observations(const TimeGanModel& m,
                                         std::span<const std::vector<double>> observations,
                                         double replay_gate = 0.15) {
    if (observations.empty()) throw UsageError("embed_observations: empty prefix");
    const std::size_t t_c = observations.size();
    std::vector<Tensor> xs;
    xs.reserve(t_c);
    for (const auto& row : observations) {
        if (row.size() != m.config.feature_dim)
            throw Error("embed_observations: observation width " + std::to_string(row.size()) +
                        " does not match the " + std::to_string(m.config.feature_dim) +
                        " model features");
        Tensor x(1, row.size());
        x.data = m.scaler.scale(row);
        xs.push_back(std::move(x));
    }

    const std::vector<Tensor> zs = inverse_embed(m, xs);
    const std::vector<Tensor> replay = recover(m, generate_embedding(m, zs));

    double diff_sq = 0.0;
    double ref_sq = 0.0;
    for (std::size_t t = 0; t < t_c; ++t) {
        const std::vector<double> xhat = m.scaler.unscale(replay[t].data);
        for (std::size_t i = 0; i < xhat.size(); ++i) {
            const double d = observations[t][i] - xhat[i];
            diff_sq += d * d;
            ref_sq += observations[t][i] * observations[t][i];
        }
    }

    EmbeddedPrefix out;
    out.codes.reserve(t_c);
    for (const Tensor& z : zs) out.codes.push_back(z.data);
    out.replay_error = ref_sq > 0.0 ? std::sqrt(diff_sq / ref_sq) : std::sqrt(diff_sq);
    out.above_gate = out.replay_error > replay_gate;
    return out;
}

// ---------------------------------------------------------------------------
// Noise code sets
// ---------------------------------------------------------------------------

/// A shared observed code prefix plus independently drawn future tails, one
/// per sample. Storing the prefix once makes the shared-prefix invariant hold
/// by construction.
struct NoiseCodeSet {
    std::vector<std::vector<double>> prefix;              // t_c x latent
    std::vector<std::vector<std::vector<double>>> tails;  // count x (horizon - t_c) x latent
    std::size_t horizon = 0;

    std::size_t prefix_steps() const { return prefix.size(); }
    std::size_t count() const { return tails.size(); }

    void validate(std::size_t latent_dim) const {
        if (prefix.empty()) throw Error("noise set: empty prefix");
        if (horizon <= prefix.size()) throw Error("noise set: horizon inside the prefix");
        const std::size_t tail_steps = horizon - prefix.size();
        auto check_row = [latent_dim](const std::vector<double>& row) {
            if (row.size() != latent_dim) throw Error("noise set: code width mismatch");
            for (double v : row)
                if (!(v >= -1.0 && v <= 1.0)) throw Error("noise set: code outside [-1,1]");
        };
        for (const auto& row : prefix) check_row(row);
        for (const auto& tail : tails) {
            if (tail.size() != tail_steps) throw Error("noise set: tail length mismatch");
            for (const auto& row : tail) check_row(row);
        }
    }
};

/// Attach `count` independent uniform tails to an embedded prefix. Each
/// sample's tail comes from its own stream derived from (seed, sample), so a
/// sample's codes do not depend on how many neighbors were drawn.
inline NoiseCodeSet build_noise_set(const std::vector<std::vector<double>>& prefix_codes,
                                    std::size_t horizon, std::size_t count, std::uint64_t seed) {
    if (prefix_codes.empty()) throw UsageError("build_noise_set: empty prefix");
    if (horizon <= prefix_codes.size())
        throw UsageError("build_noise_set: horizon " + std::to_string(horizon) +
                         " does not extend past the " + std::to_string(prefix_codes.size()) +
                         " observed steps");
    if (count == 0) throw UsageError("build_noise_set: zero samples");

    NoiseCodeSet set;
    set.prefix = prefix_codes;
    set.horizon = horizon;
    const std::size_t tail_steps = horizon - prefix_codes.size();
    const std::size_t latent = prefix_codes.front().size();
    set.tails.resize(count);
    for (std::size_t k = 0; k < count; ++k) {
        Rng rng(derive_stream(seed, static_cast<std::uint64_t>(k)));
        auto& tail = set.tails[k];
        tail.assign(tail_steps, std::vector<double>(latent));
        for (auto& row : tail)
            for (double& v : row) v = rng.uniform_sym();
    }
    return set;
}

// ---------------------------------------------------------------------------
// Outcome generation
// ---------------------------------------------------------------------------

/// Generated continuations of one observed prefix, decoded to unscaled
/// features over the full horizon.
struct OutcomeSet {
    std::vector<FeatureSeries> outcomes;  // lifetime fields start at the horizon
    std::size_t prefix_steps = 0;

    std::size_t count() const { return outcomes.size(); }
};

/// x-hat = unscale(r(g(z))) for every sample of a noise set, batched as rows
/// of one forward pass.
inline OutcomeSet generate_outcomes(const TimeGanModel& m, const NoiseCodeSet& noise,
                                    std::size_t max_horizon) {
    if (!m.generation_ready()) throw Error("generate_outcomes: model is not trained");
    noise.validate(m.config.latent_dim);
    if (noise.horizon > max_horizon)
        throw UsageError("generate_outcomes: horizon " + std::to_string(noise.horizon) +
                         " exceeds the configured maximum " + std::to_string(max_horizon));

    const std::size_t rows = noise.count();
    const std::size_t t_c = noise.prefix_steps();
    std::vector<Tensor> zs;
    zs.reserve(noise.horizon);
    for (std::size_t t = 0; t < noise.horizon; ++t) {
        Tensor z(rows, m.config.latent_dim);
        for (std::size_t k = 0; k < rows; ++k) {
            const std::vector<double>& row = t < t_c ? noise.prefix[t] : noise.tails[k][t - t_c];
            for (std::size_t c = 0; c < row.size(); ++c) z.at(k, c) = row[c];
        }
        zs.push_back(std::move(z));
    }

    const std::vector<Tensor> xs = recover(m, generate_embedding(m, zs));

    OutcomeSet set;
    set.prefix_steps = t_c;
    set.outcomes.resize(rows);
    std::vector<double> feature(m.config.feature_dim);
    for (std::size_t k = 0; k < rows; ++k) {
        FeatureSeries& series = set.outcomes[k];
        series.structure_id = k;
        series.lifetime = static_cast<int>(noise.horizon);
        series.values.reserve(noise.horizon);
        for (std::size_t t = 0; t < noise.horizon; ++t) {
            for (std::size_t c = 0; c < feature.size(); ++c) feature[c] = xs[t].at(k, c);
            series.values.push_back(m.scaler.unscale(feature));
        }
    }
    return set;
}

// ---------------------------------------------------------------------------
// Failure detection
// ---------------------------------------------------------------------------

/// One outcome's failure label.
struct FailureDetection {
    std::size_t lifetime = 0;       // 1-based first crossing step; horizon when censored
    bool censored = false;          // the third resonance never reached the limit
    std::size_t skipped_steps = 0;  // degenerate reconstructions that reused a prior detection
};

namespace detail {

/// Indices of local maxima whose prominence reaches `min_prominence`,
/// ascending. Prominence is measured down to the lowest point separating the
/// peak from higher terrain on either side.
inline std::vector<std::size_t> prominent_peaks(std::span<const double> curve,
                                                double min_prominence) {
    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
        if (!(curve[i] > curve[i - 1] && curve[i] >= curve[i + 1])) continue;
        double left_min = curve[i];
        for (std::size_t j = i; j-- > 0;) {
            if (curve[j] > curve[i]) break;
            left_min = std::min(left_min, curve[j]);
        }
        double right_min = curve[i];
        for (std::size_t j = i + 1; j < curve.size(); ++j) {
            if (curve[j] > curve[i]) break;
            right_min = std::min(right_min, curve[j]);
        }
        if (curve[i] - std::max(left_min, right_min) >= min_prominence) peaks.push_back(i);
    }
    return peaks;
}

}  // namespace detail

constexpr double kPeakProminenceShare = 0.05;  // of the curve's global maximum

/// Walk an outcome's timesteps, reconstruct the FRF magnitude from the
/// feature coordinates, locate the third prominent resonance, and return the
/// first step whose peak frequency is at or below the limit. Steps with fewer
/// than three prominent peaks inherit the nearest prior step's detection; an
/// outcome with no detectable step at all is an error.
inline FailureDetection detect_failure_time(const FeatureSeries& outcome, const PcaModel& pca,
                                            std::span<const double> grid_hz, double limit_hz) {
    if (outcome.values.empty()) throw UsageError("detect_failure_time: empty outcome");
    if (grid_hz.size() != pca.dim)
        throw Error("detect_failure_time: grid length " + std::to_string(grid_hz.size()) +
                    " does not match the reconstruction length " + std::to_string(pca.dim));

    FailureDetection result;
    std::vector<double> magnitude(pca.dim);
    double prior_f3 = -1.0;
    bool any_detected = false;
    for (std::size_t t = 0; t < outcome.values.size(); ++t) {
        const std::vector<double> recon = pca_inverse_transform(pca, outcome.values[t]);
        for (std::size_t i = 0; i < recon.size(); ++i)
            magnitude[i] = pca.log_magnitude ? std::exp(recon[i]) : recon[i];

        double peak_height = magnitude[0];
        for (double v : magnitude) peak_height = std::max(peak_height, v);
        const std::vector<std::size_t> peaks =
            detail::prominent_peaks(magnitude, kPeakProminenceShare * peak_height);

        double f3 = prior_f3;
        if (peaks.size() >= 3) {
            f3 = grid_hz[peaks[2]];
            prior_f3 = f3;
            any_detected = true;
        } else {
            ++result.skipped_steps;
        }
        if (f3 >= 0.0 && f3 <= limit_hz) {
            result.lifetime = t + 1;
            return result;
        }
    }
    if (!any_detected)
        throw Error("detect_failure_time: no timestep produced three prominent resonances");
    result.lifetime = outcome.values.size();
    result.censored = true;
    return result;
}

// ---------------------------------------------------------------------------
// Lifetime prediction
// ---------------------------------------------------------------------------

struct RulConfig {
    std::size_t horizon = 80;   // steps each outcome is rolled to
    std::size_t samples = 1000; // outcomes per prediction
    double replay_gate = 0.15;
    double limit_hz = 119.0;
    std::uint64_t seed = 1;

    void validate() const {
        if (horizon == 0) throw UsageError("rul config: zero horizon");
        if (samples == 0) throw UsageError("rul config: zero samples");
        if (!(replay_gate > 0.0)) throw UsageError("rul config: replay gate must be positive");
        if (!(limit_hz > 0.0)) throw UsageError("rul config: limit must be positive");
    }
};

/// Outcome lifetimes behind one prediction, before density estimation.
struct OutcomeLifetimes {
    std::vector<std::size_t> lifetimes;  // uncensored detections only
    std::size_t censored = 0;
    std::size_t degenerate_steps = 0;
    double replay_error = 0.0;
    bool replay_above_gate = false;

    std::size_t total() const { return lifetimes.size() + censored; }
    double censored_fraction() const {
        return total() == 0 ? 0.0 : static_cast<double>(censored) / static_cast<double>(total());
    }
};

/// Embed, extend, generate, and label in one pass; the shared building block
/// under rul_predict and the population metric.
inline OutcomeLifetimes predict_outcome_lifetimes(const TimeGanModel& m, const PcaModel& pca,
                                                  std::span<const std::vector<double>> observations,
                                                  std::span<const double> grid_hz,
                                                  const RulConfig& cfg) {
    cfg.validate();
    if (observations.size() >= cfg.horizon)
        throw UsageError("rul: observed " + std::to_string(observations.size()) +
                         " steps but the horizon is " + std::to_string(cfg.horizon));

    const EmbeddedPrefix prefix = embed_observations(m, observations, cfg.replay_gate);
    const NoiseCodeSet noise = build_noise_set(prefix.codes, cfg.horizon, cfg.samples, cfg.seed);
    const OutcomeSet outcomes = generate_outcomes(m, noise, cfg.horizon);

    OutcomeLifetimes out;
    out.replay_error = prefix.replay_error;
    out.replay_above_gate = prefix.above_gate;
    out.lifetimes.reserve(outcomes.count());
    for (const FeatureSeries& outcome : outcomes.outcomes) {
        const FailureDetection det = detect_failure_time(outcome, pca, grid_hz, cfg.limit_hz);
        out.degenerate_steps += det.skipped_steps;
        if (det.censored)
            ++out.censored;
        else
            out.lifetimes.push_back(det.lifetime);
    }
    return out;
}

/// A total-lifetime density conditioned on one observed prefix.
struct RulPrediction {
    LifetimePdf pdf;  // over uncensored outcomes only
    double replay_error = 0.0;
    bool replay_above_gate = false;
    std::size_t detected = 0;
    std::size_t censored = 0;
    double censored_fraction = 0.0;
    bool high_censoring = false;  // more than half of the outcomes never failed
    std::size_t degenerate_steps = 0;
};

inline RulPrediction rul_predict(const TimeGanModel& m, const PcaModel& pca,
                                 std::span<const std::vector<double>> observations,
                                 std::span<const double> grid_hz, const RulConfig& cfg) {
    const OutcomeLifetimes raw = predict_outcome_lifetimes(m, pca, observations, grid_hz, cfg);
    if (raw.lifetimes.empty())
        throw Error("rul_predict: every generated outcome is censored at the horizon");

    RulPrediction pred;
    pred.pdf = lifetime_pdf(raw.lifetimes, cfg.horizon);
    pred.replay_error = raw.replay_error;
    pred.replay_above_gate = raw.replay_above_gate;
    pred.detected = raw.lifetimes.size();
    pred.censored = raw.censored;
    pred.censored_fraction = raw.censored_fraction();
    pred.high_censoring = pred.censored_fraction > 0.5;
    pred.degenerate_steps = raw.degenerate_steps;
    return pred;
}

// ---------------------------------------------------------------------------
// Population metric
// ---------------------------------------------------------------------------

struct MetricConfig {
    RulConfig rul;
    std::size_t tc_stride = 1;     // evaluate every tc_stride-th observed step
    std::uint64_t master_seed = 1;

    void validate() const {
        rul.validate();
        if (tc_stride == 0) throw UsageError("metric config: zero stride");
    }
};

/// Mean unit-bin probability mass assigned to the true lifetime across every
/// evaluated (structure, observed-steps) pair.
struct MetricResult {
    double mean_probability = 0.0;
    std::size_t pairs = 0;
    std::size_t empty_pairs = 0;    // all outcomes censored; contributed zero mass
    std::size_t flagged_pairs = 0;  // censoring above one half
    double censored_fraction = 0.0; // pooled over all generated outcomes
    double mean_replay_error = 0.0;
};

/// For every test structure i and observed length t_c < T_i (stepping by the
/// stride), predict the lifetime density from the first t_c feature rows and
/// read off the mass at the true lifetime. Pair seeds derive from
/// (master_seed, structure_id, t_c), so pairs are order-independent.
inline MetricResult mean_probability_metric(const TimeGanModel& m, const PcaModel& pca,
                                            std::span<const FeatureSeries> test_population,
                                            std::span<const double> grid_hz,
                                            const MetricConfig& cfg) {
    cfg.validate();
    if (!m.generation_ready()) throw Error("mean_probability_metric: model is not trained");
    if (test_population.empty()) throw UsageError("mean_probability_metric: empty population");

    MetricResult result;
    double mass_sum = 0.0;
    double replay_sum = 0.0;
    std::size_t censored_total = 0;
    std::size_t outcome_total = 0;
    for (const FeatureSeries& series : test_population) {
        series.validate();
        const auto true_lifetime = static_cast<std::size_t>(series.lifetime);
        if (true_lifetime > cfg.rul.horizon)
            throw Error("mean_probability_metric: structure " +
                        std::to_string(series.structure_id) + " lifetime " +
                        std::to_string(true_lifetime) + " exceeds the horizon");
        for (std::size_t t_c = 1; t_c < true_lifetime; t_c += cfg.tc_stride) {
            RulConfig pair_cfg = cfg.rul;
            pair_cfg.seed = derive_stream(derive_stream(cfg.master_seed, series.structure_id),
                                          static_cast<std::uint64_t>(t_c));
            const OutcomeLifetimes raw = predict_outcome_lifetimes(
                m, pca, std::span<const std::vector<double>>(series.values.data(), t_c), grid_hz,
                pair_cfg);

            ++result.pairs;
            replay_sum += raw.replay_error;
            censored_total += raw.censored;
            outcome_total += raw.total();
            if (raw.censored_fraction() > 0.5) ++result.flagged_pairs;
            if (raw.lifetimes.empty()) {
                ++result.empty_pairs;  // zero mass at every step
                continue;
            }
            mass_sum += lifetime_pdf(raw.lifetimes, cfg.rul.horizon).mass_at(true_lifetime);
        }
    }
    if (result.pairs == 0)
        throw Error("mean_probability_metric: no structure offers an observed step before failure");
    result.mean_probability = mass_sum / static_cast<double>(result.pairs);
    result.mean_replay_error = replay_sum / static_cast<double>(result.pairs);
    result.censored_fraction =
        outcome_total == 0 ? 0.0
                           : static_cast<double>(censored_total) / static_cast<double>(outcome_total);
    return result;
}

// ---------------------------------------------------------------------------
// Naive baseline
// ---------------------------------------------------------------------------

/// The no-model baseline: one density over the training lifetimes, evaluated
/// at every test pair. The unconditional form ignores t_c entirely; the
/// conditional variant renormalizes over survival past t_c before reading the
/// mass.
struct BaselineResult {
    double unconditional = 0.0;
    double conditional = 0.0;
    std::size_t pairs = 0;
    LifetimePdf form;  // the training-lifetime density both variants share
};

inline BaselineResult naive_form_baseline(std::span<const std::size_t> training_lifetimes,
                                          std::span<const FeatureSeries> test_population,
                                          std::size_t horizon, std::size_t tc_stride = 1) {
    if (tc_stride == 0) throw UsageError("naive_form_baseline: zero stride");
    if (test_population.empty()) throw UsageError("naive_form_baseline: empty population");

    BaselineResult result;
    result.form = lifetime_pdf(training_lifetimes, horizon);
    double sum_uncond = 0.0;
    double sum_cond = 0.0;
    for (const FeatureSeries& series : test_population) {
        series.validate();
        const auto true_lifetime = static_cast<std::size_t>(series.lifetime);
        for (std::size_t t_c = 1; t_c < true_lifetime; t_c += tc_stride) {
            const double mass = result.form.mass_at(true_lifetime);
            sum_uncond += mass;
            double survival = 0.0;
            for (std::size_t step = t_c + 1; step <= horizon; ++step)
                survival += result.form.density_at(step);
            sum_cond += survival > kKlFloor ? mass / survival : 0.0;
            ++result.pairs;
        }
    }
    if (result.pairs == 0)
        throw Error("naive_form_baseline: no structure offers an observed step before failure");
    result.unconditional = sum_uncond / static_cast<double>(result.pairs);
    result.conditional = sum_cond / static_cast<double>(result.pairs);
    return result;
}

}  // namespace rulkit
