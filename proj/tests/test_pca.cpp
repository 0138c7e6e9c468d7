#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rulkit/pca.hpp"
#include "rulkit/rng.hpp"

using namespace rulkit;

namespace {

// Wraps raw magnitude rows as a single-trajectory dataset so fit_pca can
// consume synthetic pools directly. Magnitudes go in as the real part, so
// rows must be non-negative: the fit reads |value|.
PopulationDataset dataset_from_rows(const std::vector<std::vector<double>>& rows) {
    PopulationDataset ds;
    DamageTrajectory traj;
    traj.structure_id = 0;
    traj.lifetime = static_cast<int>(rows.size());
    for (const auto& row : rows) {
        Snapshot s;
        s.spec.masses.assign(4, 0.02);
        s.spec.stiffnesses.assign(4, 6000.0);
        s.spec.dampings.assign(4, 1.0);
        s.f3 = 130.0;
        s.frf.frequencies.resize(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) {
            s.frf.frequencies[i] = static_cast<double>(i);
            s.frf.values.emplace_back(row[i], 0.0);
        }
        traj.snapshots.push_back(std::move(s));
    }
    ds.trajectories.push_back(std::move(traj));
    return ds;
}

// Rows spanning an exact 3-dim affine subspace of a 16-dim space.
std::vector<std::vector<double>> subspace_rows(std::size_t n, Rng& rng) {
    const std::size_t dim = 16;
    std::vector<std::vector<double>> basis(3, std::vector<double>(dim));
    for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 0; i < dim; ++i) basis[b][i] = rng.uniform(-1.0, 1.0);
    std::vector<std::vector<double>> rows;
    for (std::size_t r = 0; r < n; ++r) {
        // Offset dominates the span (|sum of weights x basis| <= 6), keeping
        // every entry positive so the magnitude fold is the identity.
        std::vector<double> row(dim, 10.0);
        for (std::size_t b = 0; b < 3; ++b) {
            const double w = rng.uniform(-2.0, 2.0);
            for (std::size_t i = 0; i < dim; ++i) row[i] += w * basis[b][i];
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

TEST_CASE("exact low-rank data reconstructs to machine precision") {
    Rng rng(31);
    auto ds = dataset_from_rows(subspace_rows(40, rng));
    PcaModel m = fit_pca(ds, 3);
    for (const auto& snap : ds.trajectories[0].snapshots) {
        auto mags = frf_magnitudes(snap.frf, false);
        auto rec = pca_inverse_transform(m, pca_transform(m, mags));
        double err = 0.0;
        for (std::size_t i = 0; i < mags.size(); ++i)
            err += (rec[i] - mags[i]) * (rec[i] - mags[i]);
        REQUIRE(std::sqrt(err) < 1e-8);
    }
    // Three directions carry all the variance.
    double sum = 0.0;
    for (double r : m.explained_variance_ratio) sum += r;
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-10));
    REQUIRE_FALSE(m.low_variance_warning);
}

TEST_CASE("components are orthonormal and variance ratios ordered") {
    Rng rng(77);
    std::vector<std::vector<double>> rows;
    for (int r = 0; r < 60; ++r) {
        std::vector<double> row(24);
        for (std::size_t i = 0; i < row.size(); ++i)
            row[i] = rng.gaussian(0.0, 1.0 + static_cast<double>(i % 5));
        rows.push_back(std::move(row));
    }
    PcaModel m = fit_pca(dataset_from_rows(rows), 3);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = 0; b < 3; ++b) {
            double dot = 0.0;
            for (std::size_t i = 0; i < m.dim; ++i) dot += m.component(a)[i] * m.component(b)[i];
            REQUIRE(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
        }
    for (std::size_t c = 1; c < 3; ++c)
        REQUIRE(m.explained_variance_ratio[c] <= m.explained_variance_ratio[c - 1]);
    for (double r : m.explained_variance_ratio) {
        REQUIRE(r > 0.0);
        REQUIRE(r <= 1.0);
    }
    // Sign convention: the largest-|entry| coordinate of each component is
    // positive.
    for (std::size_t c = 0; c < 3; ++c) {
        double best = 0.0;
        for (std::size_t i = 0; i < m.dim; ++i)
            if (std::abs(m.component(c)[i]) > std::abs(best)) best = m.component(c)[i];
        REQUIRE(best > 0.0);
    }
}

TEST_CASE("transform centers and inverts cleanly") {
    Rng rng(5);
    auto ds = dataset_from_rows(subspace_rows(30, rng));
    PcaModel m = fit_pca(ds, 3);
    auto zero = pca_transform(m, m.mean, /*already_preprocessed=*/true);
    for (double v : zero) REQUIRE(std::abs(v) < 1e-9);
    // transform(inverse(y)) = y.
    std::vector<double> y = {0.7, -1.3, 2.1};
    auto y2 = pca_transform(m, pca_inverse_transform(m, y), true);
    for (std::size_t i = 0; i < 3; ++i) REQUIRE(std::abs(y2[i] - y[i]) < 1e-10);
    // Projection is idempotent.
    std::vector<double> x(m.dim);
    for (auto& v : x) v = rng.uniform(-3.0, 3.0);
    auto p1 = pca_inverse_transform(m, pca_transform(m, x, true));
    auto p2 = pca_inverse_transform(m, pca_transform(m, p1, true));
    for (std::size_t i = 0; i < m.dim; ++i) REQUIRE(std::abs(p2[i] - p1[i]) < 1e-10);
}

TEST_CASE("full-dimensional fit explains everything") {
    Rng rng(13);
    std::vector<std::vector<double>> rows;
    for (int r = 0; r < 50; ++r) {
        std::vector<double> row(8);
        for (auto& v : row) v = rng.gaussian();
        rows.push_back(std::move(row));
    }
    PcaModel m = fit_pca(dataset_from_rows(rows), 8);
    double sum = 0.0;
    for (double r : m.explained_variance_ratio) sum += r;
    REQUIRE(std::abs(sum - 1.0) < 1e-8);
}

TEST_CASE("residual power equals the discarded eigenvalue mass") {
    // For a fit on n samples, the pooled mean squared projection residual is
    // (n-1)/n times the sum of discarded eigenvalues: the bookkeeping that
    // explained-variance ratios rest on.
    Rng rng(99);
    std::vector<std::vector<double>> rows;
    const std::size_t n = 50;
    for (std::size_t r = 0; r < n; ++r) {
        std::vector<double> row(12);
        for (std::size_t i = 0; i < row.size(); ++i)
            row[i] = std::abs(rng.gaussian(0.0, 0.3 + static_cast<double>(i)));
        rows.push_back(std::move(row));
    }
    auto ds = dataset_from_rows(rows);
    PcaModel m = fit_pca(ds, 3);
    double mean_residual = 0.0;
    for (const auto& row : rows) {
        auto rec = pca_inverse_transform(m, pca_transform(m, row, true));
        double err = 0.0;
        for (std::size_t i = 0; i < row.size(); ++i) err += (row[i] - rec[i]) * (row[i] - rec[i]);
        mean_residual += err;
    }
    mean_residual /= static_cast<double>(n);
    double retained = 0.0;
    for (double l : m.eigenvalues) retained += l;
    const double expected = (m.total_variance - retained) * static_cast<double>(n - 1) /
                            static_cast<double>(n);
    REQUIRE(mean_residual == Catch::Approx(expected).epsilon(1e-8));
}

TEST_CASE("isotropic data trips the low-variance warning") {
    Rng rng(3);
    std::vector<std::vector<double>> rows;
    for (int r = 0; r < 80; ++r) {
        std::vector<double> row(20);
        for (auto& v : row) v = rng.gaussian();
        rows.push_back(std::move(row));
    }
    PcaModel m = fit_pca(dataset_from_rows(rows), 3);
    REQUIRE(m.low_variance_warning);
}

TEST_CASE("fit rejects undersized pools and mismatched vectors") {
    Rng rng(1);
    auto tiny = dataset_from_rows(subspace_rows(3, rng));
    REQUIRE_THROWS_AS(fit_pca(tiny, 3), Error);
    auto ds = dataset_from_rows(subspace_rows(10, rng));
    PcaModel m = fit_pca(ds, 3);
    REQUIRE_THROWS_AS(pca_transform(m, std::vector<double>(7, 0.0)), Error);
    REQUIRE_THROWS_AS(pca_inverse_transform(m, std::vector<double>(2, 0.0)), Error);
}

TEST_CASE("fits are reproducible bit for bit") {
    Rng rng(21);
    auto rows = subspace_rows(25, rng);
    PcaModel a = fit_pca(dataset_from_rows(rows), 3);
    PcaModel b = fit_pca(dataset_from_rows(rows), 3);
    REQUIRE(a.mean == b.mean);
    REQUIRE(a.components == b.components);
    REQUIRE(a.explained_variance_ratio == b.explained_variance_ratio);
}

TEST_CASE("simulated population features concentrate in three components") {
    PopulationConfig cfg;
    cfg.n_structures = 12;
    cfg.n_grid = 128;
    PopulationDataset ds = simulate_population(cfg, 404);
    PcaModel m = fit_pca(ds, 3);
    double sum = 0.0;
    for (double r : m.explained_variance_ratio) sum += r;
    INFO("retained variance " << sum);
    REQUIRE(sum >= 0.90);
    REQUIRE_FALSE(m.low_variance_warning);
    // Feature series carry one vector per snapshot and preserve lifetimes.
    auto series = build_feature_series(ds, m);
    REQUIRE(series.size() == 12);
    for (std::size_t i = 0; i < series.size(); ++i) {
        REQUIRE(series[i].values.size() ==
                static_cast<std::size_t>(ds.trajectories[i].lifetime));
        REQUIRE(series[i].lifetime == ds.trajectories[i].lifetime);
        REQUIRE(series[i].values[0].size() == 3);
    }
}

TEST_CASE("scaler standardizes, clamps, and inverts") {
    Rng rng(606);
    std::vector<FeatureSeries> pool(4);
    for (std::size_t s = 0; s < pool.size(); ++s) {
        pool[s].structure_id = s;
        pool[s].lifetime = 10;
        for (int t = 0; t < 10; ++t)
            pool[s].values.push_back({rng.gaussian(2.0, 0.5), rng.gaussian(-1.0, 3.0), 7.0});
    }
    FeatureScaler sc;
    sc.fit(pool);
    CHECK(sc.mean[0] == Catch::Approx(2.0).margin(0.5));
    CHECK(sc.mean[1] == Catch::Approx(-1.0).margin(2.0));
    CHECK(sc.std_dev[2] == 1.0);  // constant coordinate passes through

    // In range: exact affine round trip, magnitudes below 1.
    std::vector<double> v = {2.3, 0.5, 7.0};
    auto u = sc.scale(v);
    for (double x : u) {
        CHECK(x > -1.0);
        CHECK(x < 1.0);
    }
    auto back = sc.unscale(u);
    for (std::size_t i = 0; i < 3; ++i) CHECK(back[i] == Catch::Approx(v[i]).epsilon(1e-12));

    // A point one standard deviation out maps to 0.25.
    CHECK(sc.scale({sc.mean[0] + sc.std_dev[0], sc.mean[1], 7.0})[0] ==
          Catch::Approx(0.25).epsilon(1e-12));
    // Beyond four standard deviations the map clamps.
    CHECK(sc.scale({sc.mean[0] + 9.0 * sc.std_dev[0], sc.mean[1], 7.0})[0] == 1.0);
    CHECK(sc.scale({sc.mean[0] - 9.0 * sc.std_dev[0], sc.mean[1], 7.0})[0] == -1.0);

    REQUIRE_THROWS_AS(sc.scale(std::vector<double>(5, 0.0)), Error);
    FeatureScaler unfitted;
    REQUIRE_THROWS_AS(unfitted.scale(v), Error);
}
