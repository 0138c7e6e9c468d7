// Principal-component reduction of FRF magnitude curves to low-dimensional
// feature vectors, plus the affine scaler that maps features into the (-1, 1)
// range tanh-activated networks train on.
//
// Transform and inverse run through plain loops, not library matrix kernels:
// they sit on the inference path, where results must not depend on batching
// or buffer placement.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rulkit/common.hpp"
#include "rulkit/dynamics.hpp"

namespace rulkit {

struct PcaModel {
    std::vector<double> mean;          // over the FRF grid
    std::vector<double> components;    // row-major, n_components x grid, orthonormal rows
    std::vector<double> explained_variance_ratio;  // non-increasing
    std::vector<double> eigenvalues;   // retained, matching components
    double total_variance = 0.0;       // trace of the sample covariance
    std::size_t n_components = 0;
    std::size_t dim = 0;               // grid length
    bool log_magnitude = false;        // fit/transform on log|H| instead of |H|
    bool low_variance_warning = false; // retained ratio sum < 0.90

    const double* component(std::size_t i) const { return components.data() + i * dim; }
};

/// Magnitude preprocessing shared by fit and transform.
inline double pca_preprocess(double magnitude, bool log_magnitude) {
    return log_magnitude ? std::log(std::max(magnitude, 1e-12)) : magnitude;
}

inline std::vector<double> frf_magnitudes(const FrfSeries& frf, bool log_magnitude) {
    std::vector<double> m(frf.values.size());
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = pca_preprocess(std::abs(frf.values[i]), log_magnitude);
    return m;
}

/// Fit on the pooled magnitude vectors of every snapshot of every trajectory,
/// in deterministic (trajectory, timestep) order. Component signs are fixed
/// by forcing each component's largest-|entry| coordinate positive.
inline PcaModel fit_pca(const PopulationDataset& ds, std::size_t n_components = 3,
                        bool log_magnitude = false) {
    std::size_t n_rows = 0, dim = 0;
    for (const auto& traj : ds.trajectories) n_rows += traj.snapshots.size();
    if (n_rows > 0) dim = ds.trajectories[0].snapshots[0].frf.values.size();
    if (n_components < 1) throw Error("pca: need at least one component");
    if (n_rows < n_components + 1)
        throw Error("pca: " + std::to_string(n_rows) + " snapshots cannot support " +
                    std::to_string(n_components) + " components");

    Eigen::MatrixXd x(static_cast<Eigen::Index>(n_rows), static_cast<Eigen::Index>(dim));
    Eigen::Index r = 0;
    for (const auto& traj : ds.trajectories)
        for (const auto& snap : traj.snapshots) {
            if (snap.frf.values.size() != dim)
                throw Error("pca: inconsistent FRF length in structure " +
                            std::to_string(traj.structure_id));
            for (std::size_t i = 0; i < dim; ++i)
                x(r, static_cast<Eigen::Index>(i)) =
                    pca_preprocess(std::abs(snap.frf.values[i]), log_magnitude);
            ++r;
        }

    PcaModel model;
    model.n_components = n_components;
    model.dim = dim;
    model.log_magnitude = log_magnitude;
    Eigen::VectorXd mu = x.colwise().mean();
    x.rowwise() -= mu.transpose();
    Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n_rows - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("pca: eigen decomposition failed");

    model.mean.assign(mu.data(), mu.data() + dim);
    model.total_variance = 0.0;
    for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i)
        model.total_variance += std::max(solver.eigenvalues()(i), 0.0);
    model.components.resize(n_components * dim);
    double retained_sum = 0.0;
    for (std::size_t c = 0; c < n_components; ++c) {
        // Eigenvalues come back ascending; take from the top.
        const Eigen::Index src = static_cast<Eigen::Index>(dim - 1 - c);
        Eigen::VectorXd v = solver.eigenvectors().col(src);
        Eigen::Index max_at = 0;
        v.cwiseAbs().maxCoeff(&max_at);
        if (v(max_at) < 0.0) v = -v;
        for (std::size_t i = 0; i < dim; ++i)
            model.components[c * dim + i] = v(static_cast<Eigen::Index>(i));
        const double lambda = std::max(solver.eigenvalues()(src), 0.0);
        model.eigenvalues.push_back(lambda);
        const double ratio = model.total_variance > 0.0 ? lambda / model.total_variance : 0.0;
        model.explained_variance_ratio.push_back(ratio);
        retained_sum += ratio;
    }
    model.low_variance_warning = retained_sum < 0.90;
    return model;
}

/// transform(x) = components (x - mean). Input is a raw |FRF| vector unless
/// already_preprocessed; the model applies its own log flag.
inline std::vector<double> pca_transform(const PcaModel& m, const std::vector<double>& magnitudes,
                                         bool already_preprocessed = false) {
    if (magnitudes.size() != m.dim)
        throw Error("pca transform: vector length " + std::to_string(magnitudes.size()) +
                    " != model dim " + std::to_string(m.dim));
    std::vector<double> y(m.n_components, 0.0);
    for (std::size_t c = 0; c < m.n_components; ++c) {
        const double* comp = m.component(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < m.dim; ++i) {
            const double v = already_preprocessed ? magnitudes[i]
                                                  : pca_preprocess(magnitudes[i], m.log_magnitude);
            acc += comp[i] * (v - m.mean[i]);
        }
        y[c] = acc;
    }
    return y;
}

/// inverse_transform(y) = components^T y + mean, in the model's preprocessed
/// scale (log scale when the log flag is set; peak locations are unaffected).
inline std::vector<double> pca_inverse_transform(const PcaModel& m, const std::vector<double>& y) {
    if (y.size() != m.n_components)
        throw Error("pca inverse: vector length " + std::to_string(y.size()) +
                    " != component count " + std::to_string(m.n_components));
    std::vector<double> x = m.mean;
    for (std::size_t c = 0; c < m.n_components; ++c) {
        const double* comp = m.component(c);
        const double yc = y[c];
        for (std::size_t i = 0; i < m.dim; ++i) x[i] += comp[i] * yc;
    }
    return x;
}

// -- feature series -----------------------------------------------------------

/// One structure's feature trajectory in unscaled PCA coordinates.
struct FeatureSeries {
    std::uint64_t structure_id = 0;
    std::vector<std::vector<double>> values;  // per timestep, n_components each
    int lifetime = 0;

    void validate() const {
        if (values.empty()) throw Error("feature series: empty");
        if (lifetime < 1 || static_cast<std::size_t>(lifetime) > values.size())
            throw Error("feature series: lifetime " + std::to_string(lifetime) +
                        " outside 1.." + std::to_string(values.size()));
    }
};

inline std::vector<FeatureSeries> build_feature_series(const PopulationDataset& ds,
                                                       const PcaModel& model) {
    std::vector<FeatureSeries> out;
    out.reserve(ds.trajectories.size());
    for (const auto& traj : ds.trajectories) {
        FeatureSeries fs;
        fs.structure_id = traj.structure_id;
        fs.lifetime = traj.lifetime;
        fs.values.reserve(traj.snapshots.size());
        for (const auto& snap : traj.snapshots)
            fs.values.push_back(pca_transform(model, frf_magnitudes(snap.frf, model.log_magnitude),
                                              /*already_preprocessed=*/true));
        fs.validate();
        out.push_back(std::move(fs));
    }
    return out;
}

// -- scaler ---------------------------------------------------------------------

/// Per-coordinate standardization followed by a fixed affine squeeze: a value
/// s standard deviations from the mean maps to s/4, clamped to [-1, 1].
/// Everything within +-4 sigma is affine and exactly invertible.
struct FeatureScaler {
    std::vector<double> mean, std_dev;
    double clamp_sigmas = 4.0;

    void fit(const std::vector<FeatureSeries>& pool) {
        if (pool.empty() || pool[0].values.empty()) throw Error("scaler: empty pool");
        const std::size_t d = pool[0].values[0].size();
        mean.assign(d, 0.0);
        std_dev.assign(d, 0.0);
        std::size_t n = 0;
        for (const auto& fs : pool)
            for (const auto& v : fs.values) {
                for (std::size_t i = 0; i < d; ++i) mean[i] += v[i];
                ++n;
            }
        for (double& m : mean) m /= static_cast<double>(n);
        for (const auto& fs : pool)
            for (const auto& v : fs.values)
                for (std::size_t i = 0; i < d; ++i)
                    std_dev[i] += (v[i] - mean[i]) * (v[i] - mean[i]);
        for (double& s : std_dev) {
            s = n > 1 ? std::sqrt(s / static_cast<double>(n - 1)) : 0.0;
            if (!(s > 0.0)) s = 1.0;  // constant coordinate: pass through
        }
    }

    double scale_one(double v, std::size_t i) const {
        return std::clamp((v - mean[i]) / (clamp_sigmas * std_dev[i]), -1.0, 1.0);
    }
    double unscale_one(double u, std::size_t i) const {
        return mean[i] + clamp_sigmas * std_dev[i] * u;
    }

    std::vector<double> scale(const std::vector<double>& v) const {
        check(v.size());
        std::vector<double> u(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) u[i] = scale_one(v[i], i);
        return u;
    }
    std::vector<double> unscale(const std::vector<double>& u) const {
        check(u.size());
        std::vector<double> v(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) v[i] = unscale_one(u[i], i);
        return v;
    }

private:
    void check(std::size_t n) const {
        if (mean.empty()) throw Error("scaler: not fitted");
        if (n != mean.size())
            throw Error("scaler: vector length " + std::to_string(n) + " != fitted dim " +
                        std::to_string(mean.size()));
    }
};

}  // namespace rulkit
