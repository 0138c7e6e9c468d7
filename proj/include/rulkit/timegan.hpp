// Five recurrent networks over a shared parameter graph, trained in four
// phases:
//
//   embedder  e : feature space  -> embedding space   (tanh head)
//   recovery  r : embedding      -> feature space     (tanh head)
//   generator g : noise space    -> embedding space   (tanh head, output
//                                                      feedback: its second
//                                                      layer recurs on the
//                                                      previous emitted
//                                                      embedding, so real
//                                                      history can be injected
//                                                      for teacher forcing)
//   discrim.  d : embedding      -> per-step score    (sigmoid head)
//   inverse   k : feature space  -> noise space       (tanh head)
//
// Phases: (1) autoencoder, {e,r} minimize the reconstruction loss; (2)
// supervised, {g} minimizes one-step-ahead prediction of real embeddings
// under teacher forcing; (3) joint, d ascends the adversarial objective
// against {g} (adversarial + lambda * supervised) and {e,r} (reconstruction +
// eta * supervised), one d step per g step; (4) inverse, {k} minimizes the
// replay error ||x - r(g(k(x)))||^2 with everything else frozen.
//
// Only the optimizer of the phase touches parameters, so every network
// outside the trained set stays bit-identical across a step. All losses are
// masked means over valid timesteps; padded steps contribute nothing.
//
// Per-step condition sequences are carried through every signature (appended
// column-wise to the step input) and default to empty.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "rulkit/adam.hpp"
#include "rulkit/lstm.hpp"
#include "rulkit/pca.hpp"
#include "rulkit/rng.hpp"

namespace rulkit {

inline constexpr double kLogEps = 1e-12;    // floor inside adversarial logs
inline constexpr double kRangeTol = 1e-9;   // slack on [-1,1] input checks

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct TimeGanConfig {
    std::size_t feature_dim = 3;   // width of the scaled feature space
    std::size_t latent_dim = 3;    // width of the noise space driving g
    std::size_t hidden_dim = kHiddenSize;
    std::size_t condition_dim = 0; // per-step condition width, 0 = none

    std::size_t batch_size = 16;
    std::size_t iters_autoencoder = 400;
    std::size_t iters_supervised = 400;
    std::size_t iters_joint = 300;
    std::size_t iters_inverse = 400;

    double supervised_weight = 1.0;           // on L_S in the generator's joint update
    double embedder_supervised_weight = 0.1;  // on L_S in the autoencoder's joint update
    bool non_saturating = true;   // g ascends log y_fake; false: g descends log(1 - y_fake)
    bool moment_matching = false; // extra per-coordinate moment penalty on generated embeddings
    double moment_weight = 1.0;

    AdamConfig adam{};
    std::uint64_t seed = 1;

    void validate() const {
        if (feature_dim == 0 || latent_dim == 0 || hidden_dim == 0)
            throw UsageError("training config: zero dimension");
        if (batch_size == 0) throw UsageError("training config: batch_size must be >= 1");
        if (supervised_weight < 0.0 || embedder_supervised_weight < 0.0 || moment_weight < 0.0)
            throw UsageError("training config: loss weights must be >= 0");
        if (!(adam.lr > 0.0)) throw UsageError("training config: learning rate must be > 0");
    }
};

// ---------------------------------------------------------------------------
// Batches
// ---------------------------------------------------------------------------

/// A padded minibatch: xs[t] is (B x feature_dim) of scaled features, masks[t]
/// is (B x 1) in {0,1}, conditions[t] (optional) is (B x condition_dim).
struct Batch {
    std::vector<Tensor> xs, masks, conditions;

    std::size_t steps() const { return xs.size(); }
    std::size_t rows() const { return xs.empty() ? 0 : xs[0].rows(); }

    void validate(std::size_t feature_dim, std::size_t condition_dim) const {
        if (xs.empty()) throw Error("batch: empty");
        if (masks.size() != xs.size())
            throw Error("batch: " + std::to_string(masks.size()) + " masks for " +
                        std::to_string(xs.size()) + " steps");
        if (!conditions.empty() && conditions.size() != xs.size())
            throw Error("batch: condition length mismatch");
        for (std::size_t t = 0; t < xs.size(); ++t) {
            if (xs[t].cols() != feature_dim || xs[t].rows() != rows())
                throw Error("batch: step " + std::to_string(t) + " has shape " +
                            shape_str(xs[t].shape));
            if (masks[t].rows() != rows() || masks[t].cols() != 1)
                throw Error("batch: mask " + std::to_string(t) + " has shape " +
                            shape_str(masks[t].shape));
            if (!conditions.empty() && (conditions[t].rows() != rows() ||
                                        conditions[t].cols() != condition_dim))
                throw Error("batch: condition " + std::to_string(t) + " has shape " +
                            shape_str(conditions[t].shape));
        }
    }
};

/// Assembles a padded batch from the selected series, scaling every value.
/// Rows keep the order of `indices`; steps past a series' end carry zeros and
/// mask 0.
inline Batch make_batch(const std::vector<FeatureSeries>& pool,
                        std::span<const std::size_t> indices, const FeatureScaler& scaler) {
    if (indices.empty()) throw Error("batch: no series selected");
    std::size_t T = 0;
    for (std::size_t i : indices) {
        if (i >= pool.size()) throw Error("batch: series index out of range");
        T = std::max(T, pool[i].values.size());
    }
    const std::size_t B = indices.size();
    const std::size_t d = pool[indices[0]].values[0].size();
    Batch batch;
    batch.xs.reserve(T);
    batch.masks.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        Tensor x(B, d), m(B, 1);
        for (std::size_t b = 0; b < B; ++b) {
            const auto& series = pool[indices[b]];
            if (t < series.values.size()) {
                const std::vector<double> scaled = scaler.scale(series.values[t]);
                for (std::size_t j = 0; j < d; ++j) x.at(b, j) = scaled[j];
                m.at(b, 0) = 1.0;
            }
        }
        batch.xs.push_back(std::move(x));
        batch.masks.push_back(std::move(m));
    }
    return batch;
}

/// Noise tensors z[t] (B x dim), entries i.i.d. uniform on [-1,1), drawn in
/// (step, row, column) order so a seeded rerun reproduces them bit-for-bit.
inline std::vector<Tensor> make_noise(std::size_t steps, std::size_t rows, std::size_t dim,
                                      Rng& rng) {
    std::vector<Tensor> zs;
    zs.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        Tensor z(rows, dim);
        for (double& v : z.data) v = rng.uniform_sym();
        zs.push_back(std::move(z));
    }
    return zs;
}

inline void check_unit_range(std::span<const Tensor> xs, const std::string& what) {
    for (const Tensor& x : xs)
        for (double v : x.data)
            if (!(std::abs(v) <= 1.0 + kRangeTol))
                throw Error(what + ": entry " + std::to_string(v) + " outside [-1,1]");
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct TimeGanModel {
    TimeGanConfig config;
    Graph graph;
    RecurrentNet embedder, recovery, generator, discriminator, inverse_embedder;
    FeatureScaler scaler;
    PcaModel pca;

    bool autoencoder_trained = false;
    bool supervised_trained = false;
    bool joint_trained = false;
    bool inverse_trained = false;

    /// History row; fields a phase does not compute stay NaN.
    struct LossRow {
        int phase = 0;
        std::size_t iteration = 0;
        double l_r = std::numeric_limits<double>::quiet_NaN();
        double l_s = std::numeric_limits<double>::quiet_NaN();
        double l_u_d = std::numeric_limits<double>::quiet_NaN();  // joint objective at the d step
        double l_u_g = std::numeric_limits<double>::quiet_NaN();  // g's adversarial objective
        double l_e = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<LossRow> loss_history;

    bool generation_ready() const {
        return autoencoder_trained && supervised_trained && joint_trained;
    }
    bool fully_trained() const { return generation_ready() && inverse_trained; }
};

inline TimeGanModel make_timegan(TimeGanConfig config, FeatureScaler scaler, PcaModel pca) {
    config.validate();
    TimeGanModel m;
    m.config = config;
    m.scaler = std::move(scaler);
    m.pca = std::move(pca);
    const std::size_t cd = config.condition_dim;
    const std::size_t H = config.hidden_dim;
    const std::uint64_t init = derive_stream(config.seed, "init");
    m.embedder = make_net(m.graph, "e", config.feature_dim + cd, H, Head::Tanh,
                          /*out_feedback=*/false, init, H);
    m.recovery = make_net(m.graph, "r", H + cd, config.feature_dim, Head::Tanh,
                          /*out_feedback=*/false, init, H);
    m.generator = make_net(m.graph, "g", config.latent_dim + cd, H, Head::Tanh,
                           /*out_feedback=*/true, init, H);
    m.discriminator = make_net(m.graph, "d", H + cd, 1, Head::Sigmoid,
                               /*out_feedback=*/false, init, H);
    m.inverse_embedder = make_net(m.graph, "k", config.feature_dim + cd, config.latent_dim,
                                  Head::Tanh, /*out_feedback=*/false, init, H);
    return m;
}

// ---------------------------------------------------------------------------
// Inference passes (plain tensors, no tape)
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Tensor> with_conditions(std::span<const Tensor> xs,
                                           std::span<const Tensor> conditions) {
    std::vector<Tensor> out;
    out.reserve(xs.size());
    if (conditions.empty()) {
        out.assign(xs.begin(), xs.end());
        return out;
    }
    if (conditions.size() != xs.size()) throw Error("conditions: length mismatch");
    for (std::size_t t = 0; t < xs.size(); ++t) out.push_back(tk::concat_cols(xs[t], conditions[t]));
    return out;
}

}  // namespace detail

/// h_{1:T} = e(x_{1:T}); inputs must already be scaled into [-1,1].
inline std::vector<Tensor> embed(const TimeGanModel& m, std::span<const Tensor> xs,
                                 std::span<const Tensor> masks = {},
                                 std::span<const Tensor> conditions = {}) {
    check_unit_range(xs, "embed input");
    return m.embedder.run_raw(m.graph, detail::with_conditions(xs, conditions), masks);
}

/// x-hat_{1:T} = r(h_{1:T}).
inline std::vector<Tensor> recover(const TimeGanModel& m, std::span<const Tensor> hs,
                                   std::span<const Tensor> masks = {},
                                   std::span<const Tensor> conditions = {}) {
    return m.recovery.run_raw(m.graph, detail::with_conditions(hs, conditions), masks);
}

/// h-hat_{1:T} = g(z_{1:T}) free-running on its own emitted embeddings.
inline std::vector<Tensor> generate_embedding(const TimeGanModel& m, std::span<const Tensor> zs,
                                              std::span<const Tensor> masks = {},
                                              std::span<const Tensor> conditions = {}) {
    check_unit_range(zs, "noise input");
    return m.generator.run_raw(m.graph, detail::with_conditions(zs, conditions), masks);
}

/// Per-step scores y_{1:T} in (0,1).
inline std::vector<Tensor> discriminate(const TimeGanModel& m, std::span<const Tensor> hs,
                                        std::span<const Tensor> masks = {},
                                        std::span<const Tensor> conditions = {}) {
    return m.discriminator.run_raw(m.graph, detail::with_conditions(hs, conditions), masks);
}

/// z_{1:T} = k(x_{1:T}); tanh head keeps every code inside (-1,1).
inline std::vector<Tensor> inverse_embed(const TimeGanModel& m, std::span<const Tensor> xs,
                                         std::span<const Tensor> masks = {},
                                         std::span<const Tensor> conditions = {}) {
    if (!m.inverse_trained) throw Error("inverse_embed: inverse embedder is untrained");
    check_unit_range(xs, "inverse_embed input");
    return m.inverse_embedder.run_raw(m.graph, detail::with_conditions(xs, conditions), masks);
}

// ---------------------------------------------------------------------------
// Loss builders (tape)
// ---------------------------------------------------------------------------

/// Total number of valid (row, step) slots in a mask stack; 10^-12-exact since
/// entries are 0 or 1.
inline double mask_total(const Graph& g, std::span<const NodeId> masks) {
    double total = 0.0;
    for (NodeId m : masks)
        for (double v : g.val(m).data) total += v;
    if (total <= 0.0) throw Error("loss: mask selects no timesteps");
    return total;
}

/// Masked mean over valid (row, step) slots of ||target_t - pred_t||^2, the
/// squared Euclidean norm across features. Reconstruction, supervised and
/// inverse-embedding losses are all this shape.
inline NodeId masked_mean_sq_norm(Graph& g, std::span<const NodeId> targets,
                                  std::span<const NodeId> preds, std::span<const NodeId> masks) {
    if (targets.size() != preds.size() || targets.size() != masks.size())
        throw Error("loss: sequence length mismatch");
    if (targets.empty()) throw Error("loss: empty sequence");
    NodeId acc{};
    bool first = true;
    for (std::size_t t = 0; t < targets.size(); ++t) {
        NodeId diff = g.add(targets[t], g.scale(preds[t], -1.0));
        NodeId term = g.sum_all(g.mul(g.mul(diff, diff), masks[t]));
        acc = first ? term : g.add(acc, term);
        first = false;
    }
    return g.scale(acc, 1.0 / mask_total(g, masks));
}

/// Masked mean of log(y) or log(1 - y) over valid slots, eps-floored.
inline NodeId masked_mean_log(Graph& g, std::span<const NodeId> ys, std::span<const NodeId> masks,
                              bool one_minus) {
    if (ys.size() != masks.size() || ys.empty()) throw Error("loss: sequence length mismatch");
    NodeId acc{};
    bool first = true;
    for (std::size_t t = 0; t < ys.size(); ++t) {
        NodeId v = one_minus ? g.add_const(g.scale(ys[t], -1.0), 1.0) : ys[t];
        NodeId term = g.sum_all(g.mul(g.log_clamped(v, kLogEps), masks[t]));
        acc = first ? term : g.add(acc, term);
        first = false;
    }
    return g.scale(acc, 1.0 / mask_total(g, masks));
}

/// L_U = mean log y_real + mean log(1 - y_fake). The discriminator ascends
/// this; chance-level scores give exactly 2 log(1/2).
inline NodeId loss_unsupervised(Graph& g, std::span<const NodeId> y_real,
                                std::span<const NodeId> y_fake, std::span<const NodeId> masks) {
    return g.add(masked_mean_log(g, y_real, masks, false),
                 masked_mean_log(g, y_fake, masks, true));
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

struct BatchNodes {
    std::vector<NodeId> xs;     // step inputs with conditions appended
    std::vector<NodeId> masks;
};

inline BatchNodes push_batch(Graph& g, const Batch& batch) {
    BatchNodes n;
    n.xs.reserve(batch.steps());
    n.masks.reserve(batch.steps());
    for (std::size_t t = 0; t < batch.steps(); ++t) {
        NodeId x = g.input(batch.xs[t]);
        if (!batch.conditions.empty()) x = g.concat_cols(x, g.input(batch.conditions[t]));
        n.xs.push_back(x);
        n.masks.push_back(g.input(batch.masks[t]));
    }
    return n;
}

inline std::vector<NodeId> push_noise(Graph& g, const Batch& batch, std::size_t dim, Rng& rng) {
    std::vector<Tensor> zs = make_noise(batch.steps(), batch.rows(), dim, rng);
    std::vector<NodeId> nodes;
    nodes.reserve(zs.size());
    for (std::size_t t = 0; t < zs.size(); ++t) {
        NodeId z = g.input(std::move(zs[t]));
        if (!batch.conditions.empty()) z = g.concat_cols(z, g.input(batch.conditions[t]));
        nodes.push_back(z);
    }
    return nodes;
}

/// Teacher-forcing history for the generator: step t recurs on the real
/// embedding h_{t-1}, with zeros standing in for h_0.
inline std::vector<NodeId> shifted_history(Graph& g, std::span<const NodeId> hs,
                                           std::size_t rows, std::size_t width) {
    std::vector<NodeId> inject;
    inject.reserve(hs.size());
    inject.push_back(g.input(Tensor(rows, width)));
    for (std::size_t t = 0; t + 1 < hs.size(); ++t) inject.push_back(hs[t]);
    return inject;
}

/// Per-timestep batch-moment penalty: at every step, the masked across-batch
/// mean and second moment of each embedding coordinate must match between
/// real and generated sequences. Squared differences are weighted by the
/// step's share of live rows. A generator collapsed onto the mean trajectory
/// keeps the right per-step means but loses across-batch spread, which this
/// term penalizes directly. Optional stabilizer; off by default.
inline NodeId moment_penalty(Graph& g, std::span<const NodeId> real, std::span<const NodeId> fake,
                             std::span<const NodeId> masks) {
    const std::size_t B = g.val(real[0]).rows();
    Tensor ones_t(1, B);
    for (double& v : ones_t.data) v = 1.0;
    NodeId ones = g.input(std::move(ones_t));
    const double total = mask_total(g, masks);
    NodeId acc{};
    bool first = true;
    for (std::size_t t = 0; t < real.size(); ++t) {
        double alive = 0.0;
        for (double v : g.val(masks[t]).data) alive += v;
        if (alive == 0.0) continue;
        auto col_moments = [&](NodeId h, bool squared) {
            NodeId v = squared ? g.mul(h, h) : h;
            return g.scale(g.matmul(ones, g.mul(v, masks[t])), 1.0 / alive);  // (1 x width)
        };
        NodeId d1 = g.add(col_moments(real[t], false), g.scale(col_moments(fake[t], false), -1.0));
        NodeId d2 = g.add(col_moments(real[t], true), g.scale(col_moments(fake[t], true), -1.0));
        NodeId term = g.scale(g.add(g.sum_squares(d1), g.sum_squares(d2)), alive / total);
        acc = first ? term : g.add(acc, term);
        first = false;
    }
    if (first) throw Error("loss: mask selects no timesteps");
    return acc;
}

inline std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t count, Rng& rng) {
    std::vector<std::size_t> idx(count);
    for (std::size_t& i : idx)
        i = std::min(pool - 1, static_cast<std::size_t>(rng.uniform() * static_cast<double>(pool)));
    return idx;
}

inline void check_pool(const std::vector<FeatureSeries>& pool, const TimeGanConfig& cfg) {
    if (pool.empty()) throw Error("train: empty series pool");
    for (const FeatureSeries& fs : pool) {
        fs.validate();
        if (fs.values[0].size() != cfg.feature_dim)
            throw Error("train: series width " + std::to_string(fs.values[0].size()) +
                        " != feature dim " + std::to_string(cfg.feature_dim));
    }
}

inline double finite_loss(const Graph& g, NodeId loss, const char* phase, std::size_t iter) {
    const double v = g.scalar_val(loss);
    if (!std::isfinite(v))
        throw Error(std::string(phase) + " phase, iteration " + std::to_string(iter) +
                    ": non-finite loss");
    return v;
}

template <typename Body>
void run_phase(const char* phase, std::size_t iters, Body&& body) {
    for (std::size_t it = 0; it < iters; ++it) {
        try {
            body(it);
        } catch (const UsageError&) {
            throw;
        } catch (const std::exception& e) {
            throw Error(std::string(phase) + " phase, iteration " + std::to_string(it) + ": " +
                        e.what());
        }
    }
}

}  // namespace detail

/// Phase 1: {e,r} minimize the masked reconstruction error L_R.
inline void train_autoencoder(TimeGanModel& m, const std::vector<FeatureSeries>& pool) {
    detail::check_pool(pool, m.config);
    Rng batch_rng(derive_stream(m.config.seed, "phase1.batch"));
    std::vector<std::string> names = m.embedder.param_names();
    for (const auto& n : m.recovery.param_names()) names.push_back(n);
    AdamOptimizer opt(m.config.adam, names);
    detail::run_phase("autoencoder", m.config.iters_autoencoder, [&](std::size_t it) {
        Batch batch =
            make_batch(pool, detail::sample_indices(pool.size(), m.config.batch_size, batch_rng),
                       m.scaler);
        Graph& g = m.graph;
        auto nodes = detail::push_batch(g, batch);
        auto hs = m.embedder.run(g, nodes.xs, nodes.masks);
        auto xhat = m.recovery.run(g, hs, nodes.masks);
        NodeId l_r = masked_mean_sq_norm(g, nodes.xs, xhat, nodes.masks);
        const double v = detail::finite_loss(g, l_r, "autoencoder", it);
        g.backward(l_r);
        opt.step(g);
        g.clear_tape();
        TimeGanModel::LossRow row;
        row.phase = 1;
        row.iteration = it;
        row.l_r = v;
        m.loss_history.push_back(row);
    });
    m.autoencoder_trained = true;
}

/// Phase 2: {g} minimizes the one-step-ahead supervised loss L_S against real
/// embeddings, teacher-forced on the real history. Requires phase 1.
inline void train_supervised(TimeGanModel& m, const std::vector<FeatureSeries>& pool) {
    if (!m.autoencoder_trained)
        throw Error("supervised phase requires a completed autoencoder phase");
    detail::check_pool(pool, m.config);
    Rng batch_rng(derive_stream(m.config.seed, "phase2.batch"));
    Rng z_rng(derive_stream(m.config.seed, "phase2.z"));
    AdamOptimizer opt(m.config.adam, m.generator.param_names());
    detail::run_phase("supervised", m.config.iters_supervised, [&](std::size_t it) {
        Batch batch =
            make_batch(pool, detail::sample_indices(pool.size(), m.config.batch_size, batch_rng),
                       m.scaler);
        Graph& g = m.graph;
        auto nodes = detail::push_batch(g, batch);
        auto hs = m.embedder.run(g, nodes.xs, nodes.masks);
        auto zs = detail::push_noise(g, batch, m.config.latent_dim, z_rng);
        auto inject = detail::shifted_history(g, hs, batch.rows(), m.config.hidden_dim);
        auto ghat = m.generator.run(g, zs, nodes.masks, inject);
        NodeId l_s = masked_mean_sq_norm(g, hs, ghat, nodes.masks);
        const double v = detail::finite_loss(g, l_s, "supervised", it);
        g.backward(l_s);
        opt.step(g);
        g.clear_tape();
        TimeGanModel::LossRow row;
        row.phase = 2;
        row.iteration = it;
        row.l_s = v;
        m.loss_history.push_back(row);
    });
    m.supervised_trained = true;
}

/// Phase 3: alternating joint training, one discriminator step per generator
/// step, then an {e,r} step on L_R + eta * L_S. Requires phases 1-2.
inline void train_joint(TimeGanModel& m, const std::vector<FeatureSeries>& pool) {
    if (!m.supervised_trained) throw Error("joint phase requires a completed supervised phase");
    detail::check_pool(pool, m.config);
    Rng batch_rng(derive_stream(m.config.seed, "phase3.batch"));
    Rng z_rng(derive_stream(m.config.seed, "phase3.z"));
    std::vector<std::string> er_names = m.embedder.param_names();
    for (const auto& n : m.recovery.param_names()) er_names.push_back(n);
    AdamOptimizer opt_d(m.config.adam, m.discriminator.param_names());
    AdamOptimizer opt_g(m.config.adam, m.generator.param_names());
    AdamOptimizer opt_er(m.config.adam, er_names);
    detail::run_phase("joint", m.config.iters_joint, [&](std::size_t it) {
        Batch batch =
            make_batch(pool, detail::sample_indices(pool.size(), m.config.batch_size, batch_rng),
                       m.scaler);
        Graph& g = m.graph;
        TimeGanModel::LossRow row;
        row.phase = 3;
        row.iteration = it;

        {  // discriminator ascends L_U
            auto nodes = detail::push_batch(g, batch);
            auto hs = m.embedder.run(g, nodes.xs, nodes.masks);
            auto zs = detail::push_noise(g, batch, m.config.latent_dim, z_rng);
            auto hfake = m.generator.run(g, zs, nodes.masks);
            auto y_real = m.discriminator.run(g, hs, nodes.masks);
            auto y_fake = m.discriminator.run(g, hfake, nodes.masks);
            NodeId l_u = loss_unsupervised(g, y_real, y_fake, nodes.masks);
            row.l_u_d = detail::finite_loss(g, l_u, "joint", it);
            g.backward(g.scale(l_u, -1.0));
            opt_d.step(g);
            g.clear_tape();
        }
        {  // generator descends adversarial + lambda * supervised
            auto nodes = detail::push_batch(g, batch);
            auto hs = m.embedder.run(g, nodes.xs, nodes.masks);
            auto zs = detail::push_noise(g, batch, m.config.latent_dim, z_rng);
            auto hfake = m.generator.run(g, zs, nodes.masks);
            auto y_fake = m.discriminator.run(g, hfake, nodes.masks);
            NodeId adv = m.config.non_saturating
                             ? g.scale(masked_mean_log(g, y_fake, nodes.masks, false), -1.0)
                             : masked_mean_log(g, y_fake, nodes.masks, true);
            auto zsup = detail::push_noise(g, batch, m.config.latent_dim, z_rng);
            auto inject = detail::shifted_history(g, hs, batch.rows(), m.config.hidden_dim);
            auto ghat = m.generator.run(g, zsup, nodes.masks, inject);
            NodeId l_s = masked_mean_sq_norm(g, hs, ghat, nodes.masks);
            NodeId loss = g.add(adv, g.scale(l_s, m.config.supervised_weight));
            if (m.config.moment_matching)
                loss = g.add(loss, g.scale(detail::moment_penalty(g, hs, hfake, nodes.masks),
                                           m.config.moment_weight));
            row.l_u_g = g.scalar_val(adv);
            row.l_s = g.scalar_val(l_s);
            detail::finite_loss(g, loss, "joint", it);
            g.backward(loss);
            opt_g.step(g);
            g.clear_tape();
        }
        {  // autoencoder refresh: {e,r} descend L_R + eta * L_S
            auto nodes = detail::push_batch(g, batch);
            auto hs = m.embedder.run(g, nodes.xs, nodes.masks);
            auto xhat = m.recovery.run(g, hs, nodes.masks);
            NodeId l_r = masked_mean_sq_norm(g, nodes.xs, xhat, nodes.masks);
            auto zs = detail::push_noise(g, batch, m.config.latent_dim, z_rng);
            auto inject = detail::shifted_history(g, hs, batch.rows(), m.config.hidden_dim);
            auto ghat = m.generator.run(g, zs, nodes.masks, inject);
            NodeId l_s = masked_mean_sq_norm(g, hs, ghat, nodes.masks);
            NodeId loss = g.add(l_r, g.scale(l_s, m.config.embedder_supervised_weight));
            row.l_r = g.scalar_val(l_r);
            detail::finite_loss(g, loss, "joint", it);
            g.backward(loss);
            opt_er.step(g);
            g.clear_tape();
        }
        m.loss_history.push_back(row);
    });
    m.joint_trained = true;
}

/// Phase 4: {k} minimizes the replay error L_e = mean ||x - r(g(k(x)))||^2;
/// e, r, g, d stay bit-identical. Requires phases 1-3.
inline void train_inverse(TimeGanModel& m, const std::vector<FeatureSeries>& pool) {
    if (!m.joint_trained) throw Error("inverse phase requires a completed joint phase");
    detail::check_pool(pool, m.config);
    Rng batch_rng(derive_stream(m.config.seed, "phase4.batch"));
    AdamOptimizer opt(m.config.adam, m.inverse_embedder.param_names());
    detail::run_phase("inverse", m.config.iters_inverse, [&](std::size_t it) {
        Batch batch =
            make_batch(pool, detail::sample_indices(pool.size(), m.config.batch_size, batch_rng),
                       m.scaler);
        Graph& g = m.graph;
        auto nodes = detail::push_batch(g, batch);
        auto zhat = m.inverse_embedder.run(g, nodes.xs, nodes.masks);
        auto hfake = m.generator.run(g, zhat, nodes.masks);
        auto xhat = m.recovery.run(g, hfake, nodes.masks);
        NodeId l_e = masked_mean_sq_norm(g, nodes.xs, xhat, nodes.masks);
        const double v = detail::finite_loss(g, l_e, "inverse", it);
        g.backward(l_e);
        opt.step(g);
        g.clear_tape();
        TimeGanModel::LossRow row;
        row.phase = 4;
        row.iteration = it;
        row.l_e = v;
        m.loss_history.push_back(row);
    });
    m.inverse_trained = true;
}

/// All four phases in order. The per-phase entry points above enforce the
/// ordering, so partial runs can be resumed but never reordered.
inline void train(TimeGanModel& m, const std::vector<FeatureSeries>& pool) {
    train_autoencoder(m, pool);
    train_supervised(m, pool);
    train_joint(m, pool);
    train_inverse(m, pool);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Draws n synthetic series of `horizon` steps: x-hat = unscale(r(g(z))) with
/// z i.i.d. uniform on [-1,1). Each series uses its own derived stream, so the
/// set is seed-reproducible and order-independent. The lifetime field is set
/// to the horizon; limit-state detection downstream assigns the real one.
inline std::vector<FeatureSeries> sample_synthetic(const TimeGanModel& m, std::size_t n,
                                                   std::size_t horizon, std::uint64_t seed) {
    if (!m.generation_ready()) throw Error("sample_synthetic: model is not trained");
    if (horizon == 0) throw UsageError("sample_synthetic: horizon must be >= 1");
    const std::uint64_t base = derive_stream(seed, "sample");
    std::vector<FeatureSeries> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_stream(base, static_cast<std::uint64_t>(i)));
        std::vector<Tensor> zs = make_noise(horizon, 1, m.config.latent_dim, rng);
        std::vector<Tensor> hs = generate_embedding(m, zs);
        std::vector<Tensor> xs = recover(m, hs);
        FeatureSeries fs;
        fs.structure_id = i;
        fs.lifetime = static_cast<int>(horizon);
        fs.values.reserve(horizon);
        for (const Tensor& x : xs) {
            std::vector<double> row(x.data.begin(), x.data.end());
            fs.values.push_back(m.scaler.unscale(row));
        }
        out.push_back(std::move(fs));
    }
    return out;
}

}  // namespace rulkit
