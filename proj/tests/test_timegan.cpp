#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "rulkit/checkpoint.hpp"
#include "rulkit/timegan.hpp"

using namespace rulkit;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Series with per-series slopes, offsets and curvatures drawn from wide
/// ranges plus small jitter: smooth enough to reconstruct, diverse enough
/// that fitting one mean trajectory is visibly not enough.
std::vector<FeatureSeries> toy_pool(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<FeatureSeries> pool;
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        FeatureSeries fs;
        fs.structure_id = i;
        const std::size_t len = 8 + i % 9;
        const double slope = rng.uniform(-2.2, -0.6);
        const double offset = rng.uniform(-0.5, 0.5);
        const double curve = rng.uniform(0.3, 1.5);
        for (std::size_t t = 0; t < len; ++t) {
            const double u = static_cast<double>(t) / static_cast<double>(len);
            fs.values.push_back(
                {1.0 + slope * u + offset + 0.03 * rng.gaussian(),
                 -0.5 + curve * u * u + 0.03 * rng.gaussian(),
                 0.4 * std::sin(3.0 * u + offset) + 0.2 * slope * u + 0.03 * rng.gaussian()});
        }
        fs.lifetime = static_cast<int>(len);
        pool.push_back(std::move(fs));
    }
    return pool;
}

FeatureScaler fitted_scaler(const std::vector<FeatureSeries>& pool) {
    FeatureScaler s;
    s.fit(pool);
    return s;
}

TimeGanConfig toy_config(std::uint64_t seed) {
    TimeGanConfig cfg;
    cfg.hidden_dim = 12;
    cfg.batch_size = 4;
    cfg.iters_autoencoder = 2;
    cfg.iters_supervised = 2;
    cfg.iters_joint = 2;
    cfg.iters_inverse = 2;
    cfg.seed = seed;
    return cfg;
}

std::vector<Tensor> random_unit_steps(std::size_t T, std::size_t B, std::size_t d, Rng& rng) {
    std::vector<Tensor> xs;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor x(B, d);
        for (double& v : x.data) v = rng.uniform_sym();
        xs.push_back(std::move(x));
    }
    return xs;
}

std::map<std::string, std::vector<double>> snapshot(const Graph& g) {
    std::map<std::string, std::vector<double>> s;
    for (const auto& name : g.param_names()) s[name] = g.val(g.param_id(name)).data;
    return s;
}

bool params_equal(const std::map<std::string, std::vector<double>>& snap, const Graph& g,
                  const std::vector<std::string>& names) {
    for (const auto& name : names)
        if (snap.at(name) != g.val(g.param_id(name)).data) return false;
    return true;
}

bool params_changed(const std::map<std::string, std::vector<double>>& snap, const Graph& g,
                    const std::vector<std::string>& names) {
    for (const auto& name : names)
        if (snap.at(name) != g.val(g.param_id(name)).data) return true;
    return false;
}

}  // namespace

// ---------------------------------------------------------------------------
// Loss identities
// ---------------------------------------------------------------------------

TEST_CASE("reconstruction loss is zero on itself and one under a unit offset") {
    Graph g;
    Rng rng(11);
    std::vector<NodeId> xs, masks;
    const std::size_t T = 3, B = 2, d = 3;
    for (std::size_t t = 0; t < T; ++t) {
        Tensor x(B, d), m(B, 1);
        for (double& v : x.data) v = rng.uniform_sym();
        for (double& v : m.data) v = 1.0;
        xs.push_back(g.input(std::move(x)));
        masks.push_back(g.input(std::move(m)));
    }
    CHECK(g.scalar_val(masked_mean_sq_norm(g, xs, xs, masks)) == 0.0);

    Tensor offset(1, d);
    offset.data = {1.0, 0.0, 0.0};
    NodeId off = g.input(offset);
    std::vector<NodeId> shifted;
    for (NodeId x : xs) shifted.push_back(g.add(x, off));
    CHECK(g.scalar_val(masked_mean_sq_norm(g, xs, shifted, masks)) ==
          Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("masked steps contribute nothing to the reconstruction loss") {
    Graph g;
    Rng rng(12);
    std::vector<NodeId> xs, preds, masks;
    for (std::size_t t = 0; t < 4; ++t) {
        Tensor x(2, 3), p(2, 3), m(2, 1);
        for (double& v : x.data) v = rng.uniform_sym();
        for (double& v : p.data) v = rng.uniform_sym();
        m.data = {1.0, t < 2 ? 1.0 : 0.0};  // row 1 dies after step 1
        xs.push_back(g.input(std::move(x)));
        preds.push_back(g.input(std::move(p)));
        masks.push_back(g.input(std::move(m)));
    }
    const double base = g.scalar_val(masked_mean_sq_norm(g, xs, preds, masks));

    // Rebuild with garbage in the dead slots; the loss must not move at all.
    Graph g2;
    std::vector<NodeId> xs2, preds2, masks2;
    for (std::size_t t = 0; t < 4; ++t) {
        Tensor x = g.val(xs[t]);
        Tensor p = g.val(preds[t]);
        Tensor m = g.val(masks[t]);
        if (m.data[1] == 0.0) {
            for (std::size_t j = 0; j < 3; ++j) {
                x.at(1, j) = 1e6;
                p.at(1, j) = -1e6;
            }
        }
        xs2.push_back(g2.input(std::move(x)));
        preds2.push_back(g2.input(std::move(p)));
        masks2.push_back(g2.input(std::move(m)));
    }
    CHECK(g2.scalar_val(masked_mean_sq_norm(g2, xs2, preds2, masks2)) == base);
}

TEST_CASE("adversarial loss hits its chance-level and perfect values exactly") {
    Graph g;
    std::vector<NodeId> half, ones, zeros, masks;
    for (std::size_t t = 0; t < 3; ++t) {
        Tensor h(2, 1), o(2, 1), z(2, 1), m(2, 1);
        for (double& v : h.data) v = 0.5;
        for (double& v : o.data) v = 1.0;
        for (double& v : m.data) v = 1.0;
        half.push_back(g.input(std::move(h)));
        ones.push_back(g.input(std::move(o)));
        zeros.push_back(g.input(std::move(z)));
        masks.push_back(g.input(std::move(m)));
    }
    CHECK(g.scalar_val(loss_unsupervised(g, half, half, masks)) ==
          Catch::Approx(2.0 * std::log(0.5)).margin(1e-12));
    CHECK(g.scalar_val(loss_unsupervised(g, ones, zeros, masks)) ==
          Catch::Approx(0.0).margin(1e-12));
    // The clamp keeps a saturated discriminator finite.
    CHECK(g.scalar_val(masked_mean_log(g, zeros, masks, false)) ==
          Catch::Approx(std::log(kLogEps)).margin(1e-9));
}

TEST_CASE("supervised loss vanishes for a perfect one-step predictor") {
    Graph g;
    Rng rng(13);
    std::vector<NodeId> hs, masks;
    for (std::size_t t = 0; t < 5; ++t) {
        Tensor h(3, 4), m(3, 1);
        for (double& v : h.data) v = rng.uniform_sym();
        for (double& v : m.data) v = 1.0;
        hs.push_back(g.input(std::move(h)));
        masks.push_back(g.input(std::move(m)));
    }
    CHECK(g.scalar_val(masked_mean_sq_norm(g, hs, hs, masks)) == 0.0);
}

// ---------------------------------------------------------------------------
// Model wiring
// ---------------------------------------------------------------------------

TEST_CASE("network outputs respect their head ranges and widths") {
    auto pool = toy_pool(4, 21);
    TimeGanModel m = make_timegan(toy_config(3), fitted_scaler(pool), PcaModel{});
    Rng rng(5);
    auto xs = random_unit_steps(5, 2, 3, rng);
    auto hs = embed(m, xs);
    REQUIRE(hs.size() == 5);
    CHECK(hs[0].cols() == m.config.hidden_dim);
    for (const Tensor& h : hs)
        for (double v : h.data) CHECK(std::abs(v) < 1.0);

    auto xhat = recover(m, hs);
    CHECK(xhat[0].cols() == 3);
    for (const Tensor& x : xhat)
        for (double v : x.data) CHECK(std::abs(v) < 1.0);

    auto zs = random_unit_steps(5, 2, 3, rng);
    auto hfake = generate_embedding(m, zs);
    CHECK(hfake[0].cols() == m.config.hidden_dim);

    auto ys = discriminate(m, hs);
    CHECK(ys[0].cols() == 1);
    for (const Tensor& y : ys)
        for (double v : y.data) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
        }

    CHECK_THROWS_AS(inverse_embed(m, xs), Error);  // untrained k
    m.inverse_trained = true;
    auto zhat = inverse_embed(m, xs);
    CHECK(zhat[0].cols() == 3);
    for (const Tensor& z : zhat)
        for (double v : z.data) CHECK(std::abs(v) < 1.0);
}

TEST_CASE("out-of-range inputs are rejected") {
    auto pool = toy_pool(4, 22);
    TimeGanModel m = make_timegan(toy_config(4), fitted_scaler(pool), PcaModel{});
    Tensor bad(1, 3);
    bad.data = {0.1, 1.5, 0.0};
    std::vector<Tensor> xs{bad};
    CHECK_THROWS_WITH(embed(m, xs), Catch::Matchers::ContainsSubstring("outside [-1,1]"));
    bad.data = {0.1, -1.2, 0.0};
    std::vector<Tensor> zs{bad};
    CHECK_THROWS_WITH(generate_embedding(m, zs),
                      Catch::Matchers::ContainsSubstring("outside [-1,1]"));
}

TEST_CASE("raw passes are causal") {
    auto pool = toy_pool(4, 23);
    TimeGanModel m = make_timegan(toy_config(5), fitted_scaler(pool), PcaModel{});
    m.inverse_trained = true;
    Rng rng(9);
    auto a = random_unit_steps(6, 1, 3, rng);
    auto b = a;
    for (std::size_t t = 3; t < 6; ++t)
        for (double& v : b[t].data) v = rng.uniform_sym();

    auto check_prefix = [](const std::vector<Tensor>& ya, const std::vector<Tensor>& yb) {
        for (std::size_t t = 0; t < 3; ++t) REQUIRE(ya[t].data == yb[t].data);
        bool diverged = false;
        for (std::size_t t = 3; t < 6; ++t) diverged |= (ya[t].data != yb[t].data);
        CHECK(diverged);
    };
    check_prefix(embed(m, a), embed(m, b));
    check_prefix(generate_embedding(m, a), generate_embedding(m, b));
    check_prefix(inverse_embed(m, a), inverse_embed(m, b));
    auto ha = embed(m, a);
    auto hb = ha;
    for (std::size_t t = 3; t < 6; ++t)
        for (double& v : hb[t].data) v = rng.uniform_sym() * 0.9;
    check_prefix(recover(m, ha), recover(m, hb));
    check_prefix(discriminate(m, ha), discriminate(m, hb));
}

TEST_CASE("condition sequences append to the step inputs") {
    auto pool = toy_pool(4, 24);
    TimeGanConfig cfg = toy_config(6);
    cfg.condition_dim = 2;
    TimeGanModel m = make_timegan(cfg, fitted_scaler(pool), PcaModel{});
    Rng rng(10);
    auto xs = random_unit_steps(4, 2, 3, rng);
    auto conds = random_unit_steps(4, 2, 2, rng);
    auto hs = embed(m, xs, {}, conds);
    CHECK(hs.size() == 4);
    CHECK(hs[0].cols() == cfg.hidden_dim);
    auto short_conds = std::vector<Tensor>(conds.begin(), conds.begin() + 3);
    CHECK_THROWS_WITH(embed(m, xs, {}, short_conds),
                      Catch::Matchers::ContainsSubstring("length mismatch"));
    // Without conditions the input is too narrow for the widened cell.
    CHECK_THROWS_AS(embed(m, xs), Error);
}

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

TEST_CASE("batches pad to the longest series and mask dead steps") {
    auto pool = toy_pool(3, 31);  // lengths 8, 9, 10
    FeatureScaler scaler = fitted_scaler(pool);
    std::vector<std::size_t> idx{2, 0, 1};
    Batch b = make_batch(pool, idx, scaler);
    REQUIRE(b.steps() == 10);
    REQUIRE(b.rows() == 3);
    b.validate(3, 0);
    // Row 1 is series 0 (length 8): alive at t=7, dead at t=8.
    CHECK(b.masks[7].at(1, 0) == 1.0);
    CHECK(b.masks[8].at(1, 0) == 0.0);
    CHECK(b.masks[9].at(2, 0) == 0.0);  // series 1, length 9
    CHECK(b.masks[9].at(0, 0) == 1.0);  // series 2, length 10
    for (std::size_t j = 0; j < 3; ++j) {
        CHECK(b.xs[8].at(1, j) == 0.0);
        CHECK(b.xs[3].at(1, j) == scaler.scale(pool[0].values[3])[j]);
    }
    CHECK_THROWS_AS(make_batch(pool, std::vector<std::size_t>{}, scaler), Error);
    CHECK_THROWS_AS(make_batch(pool, std::vector<std::size_t>{7}, scaler), Error);
}

// ---------------------------------------------------------------------------
// Training phases
// ---------------------------------------------------------------------------

TEST_CASE("phases refuse to run out of order") {
    auto pool = toy_pool(6, 41);
    TimeGanModel m = make_timegan(toy_config(7), fitted_scaler(pool), PcaModel{});
    CHECK_THROWS_WITH(train_supervised(m, pool),
                      Catch::Matchers::ContainsSubstring("autoencoder"));
    CHECK_THROWS_WITH(train_joint(m, pool), Catch::Matchers::ContainsSubstring("supervised"));
    CHECK_THROWS_WITH(train_inverse(m, pool), Catch::Matchers::ContainsSubstring("joint"));
    train_autoencoder(m, pool);
    CHECK_THROWS_WITH(train_joint(m, pool), Catch::Matchers::ContainsSubstring("supervised"));
    train_supervised(m, pool);
    train_joint(m, pool);
    train_inverse(m, pool);
    CHECK(m.fully_trained());
}

TEST_CASE("each phase updates exactly its own parameter group") {
    auto pool = toy_pool(6, 42);
    TimeGanModel m = make_timegan(toy_config(8), fitted_scaler(pool), PcaModel{});
    auto names = [&](const RecurrentNet& n) { return n.param_names(); };

    auto s0 = snapshot(m.graph);
    train_autoencoder(m, pool);
    CHECK(params_changed(s0, m.graph, names(m.embedder)));
    CHECK(params_changed(s0, m.graph, names(m.recovery)));
    CHECK(params_equal(s0, m.graph, names(m.generator)));
    CHECK(params_equal(s0, m.graph, names(m.discriminator)));
    CHECK(params_equal(s0, m.graph, names(m.inverse_embedder)));

    auto s1 = snapshot(m.graph);
    train_supervised(m, pool);
    CHECK(params_changed(s1, m.graph, names(m.generator)));
    CHECK(params_equal(s1, m.graph, names(m.embedder)));  // e frozen in phase 2
    CHECK(params_equal(s1, m.graph, names(m.recovery)));
    CHECK(params_equal(s1, m.graph, names(m.discriminator)));
    CHECK(params_equal(s1, m.graph, names(m.inverse_embedder)));

    auto s2 = snapshot(m.graph);
    train_joint(m, pool);
    CHECK(params_changed(s2, m.graph, names(m.embedder)));
    CHECK(params_changed(s2, m.graph, names(m.recovery)));
    CHECK(params_changed(s2, m.graph, names(m.generator)));
    CHECK(params_changed(s2, m.graph, names(m.discriminator)));
    CHECK(params_equal(s2, m.graph, names(m.inverse_embedder)));

    auto s3 = snapshot(m.graph);
    train_inverse(m, pool);
    CHECK(params_equal(s3, m.graph, names(m.embedder)));
    CHECK(params_equal(s3, m.graph, names(m.recovery)));
    CHECK(params_equal(s3, m.graph, names(m.generator)));
    CHECK(params_equal(s3, m.graph, names(m.discriminator)));
    CHECK(params_changed(s3, m.graph, names(m.inverse_embedder)));
}

TEST_CASE("seeded training is bit-reproducible") {
    auto pool = toy_pool(6, 43);
    TimeGanConfig cfg = toy_config(9);
    cfg.iters_autoencoder = cfg.iters_supervised = cfg.iters_joint = cfg.iters_inverse = 3;
    TimeGanModel a = make_timegan(cfg, fitted_scaler(pool), PcaModel{});
    TimeGanModel b = make_timegan(cfg, fitted_scaler(pool), PcaModel{});
    train(a, pool);
    train(b, pool);
    REQUIRE(a.loss_history.size() == b.loss_history.size());
    for (std::size_t i = 0; i < a.loss_history.size(); ++i) {
        const auto& ra = a.loss_history[i];
        const auto& rb = b.loss_history[i];
        CHECK(ra.phase == rb.phase);
        auto same = [](double x, double y) {
            return (std::isnan(x) && std::isnan(y)) || x == y;
        };
        CHECK(same(ra.l_r, rb.l_r));
        CHECK(same(ra.l_s, rb.l_s));
        CHECK(same(ra.l_u_d, rb.l_u_d));
        CHECK(same(ra.l_u_g, rb.l_u_g));
        CHECK(same(ra.l_e, rb.l_e));
    }
    CHECK(snapshot(a.graph) == snapshot(b.graph));
}

TEST_CASE("loss history rows carry the columns their phase computes") {
    auto pool = toy_pool(6, 44);
    TimeGanConfig cfg = toy_config(10);
    TimeGanModel m = make_timegan(cfg, fitted_scaler(pool), PcaModel{});
    train(m, pool);
    REQUIRE(m.loss_history.size() == 8);  // 2 iterations per phase
    for (const auto& row : m.loss_history) {
        switch (row.phase) {
            case 1:
                CHECK(std::isfinite(row.l_r));
                CHECK(std::isnan(row.l_s));
                CHECK(std::isnan(row.l_e));
                break;
            case 2:
                CHECK(std::isfinite(row.l_s));
                CHECK(std::isnan(row.l_r));
                break;
            case 3:
                CHECK(std::isfinite(row.l_r));
                CHECK(std::isfinite(row.l_s));
                CHECK(std::isfinite(row.l_u_d));
                CHECK(std::isfinite(row.l_u_g));
                CHECK(std::isnan(row.l_e));
                break;
            case 4:
                CHECK(std::isfinite(row.l_e));
                CHECK(std::isnan(row.l_r));
                break;
            default:
                FAIL("unexpected phase");
        }
    }
}

TEST_CASE("a poisoned parameter aborts with phase and iteration context") {
    auto pool = toy_pool(6, 45);
    TimeGanModel m = make_timegan(toy_config(11), fitted_scaler(pool), PcaModel{});
    m.graph.param_value("e.l1.wx").data[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH(train_autoencoder(m, pool),
                      Catch::Matchers::ContainsSubstring("autoencoder phase, iteration 0"));
}

TEST_CASE("training on a learnable pool drives every phase loss down") {
    auto pool = toy_pool(16, 46);
    TimeGanConfig cfg;
    cfg.hidden_dim = 16;
    cfg.batch_size = 4;
    cfg.iters_autoencoder = 300;
    cfg.iters_supervised = 300;
    cfg.iters_joint = 120;
    cfg.iters_inverse = 400;
    cfg.seed = 12;
    FeatureScaler scaler = fitted_scaler(pool);
    TimeGanModel m = make_timegan(cfg, scaler, PcaModel{});
    train(m, pool);

    // Per-iteration values bounce with batch composition; average the first
    // and last 20 rows of each phase.
    auto phase_edges = [&](int phase, auto pick) {
        std::vector<double> v;
        for (const auto& row : m.loss_history)
            if (row.phase == phase) v.push_back(pick(row));
        REQUIRE(v.size() >= 40);
        double first = 0.0, last = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            first += v[i];
            last += v[v.size() - 1 - i];
        }
        return std::pair<double, double>{first / 20.0, last / 20.0};
    };
    auto [r0, r1] = phase_edges(1, [](const auto& r) { return r.l_r; });
    CHECK(r1 < 0.5 * r0);
    auto [s0, s1] = phase_edges(2, [](const auto& r) { return r.l_s; });
    CHECK(s1 < 0.5 * s0);
    auto [j0, j1] = phase_edges(3, [](const auto& r) { return r.l_s; });
    CHECK(j1 < j0);  // the joint phase must not undo supervised progress
    auto [e0, e1] = phase_edges(4, [](const auto& r) { return r.l_e; });
    CHECK(e1 < e0);
}

TEST_CASE("the discriminator step separates separable sequence distributions") {
    // Two step distributions with disjoint clusters, trained with exactly the
    // joint-phase discriminator update.
    Graph g;
    RecurrentNet d = make_net(g, "d", 4, 1, Head::Sigmoid, false, 7, 16);
    AdamOptimizer opt(AdamConfig{}, d.param_names());
    Rng rng(3);
    const std::size_t T = 8, B = 8;
    double l_u = 0.0, real_mean = 0.0, fake_mean = 0.0;
    for (int it = 0; it < 200; ++it) {
        std::vector<NodeId> real, fake, masks;
        for (std::size_t t = 0; t < T; ++t) {
            Tensor r(B, 4), f(B, 4), m(B, 1);
            for (double& v : r.data) v = 0.4 + 0.1 * rng.gaussian();
            for (double& v : f.data) v = -0.4 + 0.1 * rng.gaussian();
            for (double& v : m.data) v = 1.0;
            real.push_back(g.input(std::move(r)));
            fake.push_back(g.input(std::move(f)));
            masks.push_back(g.input(std::move(m)));
        }
        auto yr = d.run(g, real, masks);
        auto yf = d.run(g, fake, masks);
        NodeId lu = loss_unsupervised(g, yr, yf, masks);
        l_u = g.scalar_val(lu);
        real_mean = fake_mean = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            for (double v : g.val(yr[t]).data) real_mean += v;
            for (double v : g.val(yf[t]).data) fake_mean += v;
        }
        real_mean /= static_cast<double>(T * B);
        fake_mean /= static_cast<double>(T * B);
        g.backward(g.scale(lu, -1.0));
        opt.step(g);
        g.clear_tape();
    }
    CHECK(l_u > -0.8);  // well above the chance level 2 log(1/2)
    CHECK(real_mean - fake_mean > 0.3);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

TEST_CASE("sampling requires a trained model and reproduces per series") {
    auto pool = toy_pool(4, 51);
    TimeGanModel m = make_timegan(toy_config(13), fitted_scaler(pool), PcaModel{});
    CHECK_THROWS_WITH(sample_synthetic(m, 2, 10, 1),
                      Catch::Matchers::ContainsSubstring("not trained"));
    m.autoencoder_trained = m.supervised_trained = m.joint_trained = true;

    CHECK(sample_synthetic(m, 0, 10, 1).empty());
    auto two = sample_synthetic(m, 2, 10, 77);
    REQUIRE(two.size() == 2);
    for (const auto& fs : two) {
        REQUIRE(fs.values.size() == 10);
        CHECK(fs.lifetime == 10);
        for (const auto& v : fs.values)
            for (std::size_t j = 0; j < v.size(); ++j) {
                const double lo = m.scaler.mean[j] - 4.0 * m.scaler.std_dev[j];
                const double hi = m.scaler.mean[j] + 4.0 * m.scaler.std_dev[j];
                CHECK(v[j] >= lo - 1e-9);
                CHECK(v[j] <= hi + 1e-9);
            }
    }
    // Per-series streams: the first series does not depend on how many are drawn.
    auto one = sample_synthetic(m, 1, 10, 77);
    CHECK(one[0].values == two[0].values);
    auto again = sample_synthetic(m, 2, 10, 77);
    CHECK(again[0].values == two[0].values);
    CHECK(again[1].values == two[1].values);
    auto other = sample_synthetic(m, 2, 10, 78);
    CHECK(other[0].values != two[0].values);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

TimeGanModel checkpoint_fixture() {
    auto pool = toy_pool(5, 61);
    TimeGanConfig cfg = toy_config(14);
    cfg.iters_autoencoder = cfg.iters_supervised = cfg.iters_joint = cfg.iters_inverse = 2;
    PcaModel pca;
    pca.n_components = 2;
    pca.dim = 4;
    pca.mean = {1.0, 2.0, 3.0, 4.0};
    pca.components = {0.5, 0.5, 0.5, 0.5, 0.5, -0.5, 0.5, -0.5};
    pca.explained_variance_ratio = {0.7, 0.25};
    pca.eigenvalues = {7.0, 2.5};
    pca.total_variance = 10.0;
    pca.log_magnitude = true;
    pca.low_variance_warning = true;
    TimeGanModel m = make_timegan(cfg, fitted_scaler(pool), pca);
    train_autoencoder(m, pool);
    train_supervised(m, pool);
    return m;
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
    TimeGanModel m = checkpoint_fixture();
    const std::string p1 = temp_path("ckpt_a.bin");
    const std::string p2 = temp_path("ckpt_b.bin");
    save_checkpoint(p1, m);
    TimeGanModel loaded = load_checkpoint(p1);

    CHECK(loaded.config.hidden_dim == m.config.hidden_dim);
    CHECK(loaded.config.seed == m.config.seed);
    CHECK(loaded.config.iters_joint == m.config.iters_joint);
    CHECK(loaded.autoencoder_trained);
    CHECK(loaded.supervised_trained);
    CHECK_FALSE(loaded.joint_trained);
    CHECK_FALSE(loaded.inverse_trained);
    CHECK(loaded.scaler.mean == m.scaler.mean);
    CHECK(loaded.scaler.std_dev == m.scaler.std_dev);
    CHECK(loaded.pca.mean == m.pca.mean);
    CHECK(loaded.pca.components == m.pca.components);
    CHECK(loaded.pca.explained_variance_ratio == m.pca.explained_variance_ratio);
    CHECK(loaded.pca.eigenvalues == m.pca.eigenvalues);
    CHECK(loaded.pca.total_variance == m.pca.total_variance);
    CHECK(loaded.pca.log_magnitude == m.pca.log_magnitude);
    CHECK(loaded.pca.low_variance_warning == m.pca.low_variance_warning);
    CHECK(snapshot(loaded.graph) == snapshot(m.graph));

    // The loaded model computes bit-identically.
    Rng rng(15);
    auto xs = random_unit_steps(4, 2, 3, rng);
    auto ha = embed(m, xs);
    auto hb = embed(loaded, xs);
    for (std::size_t t = 0; t < ha.size(); ++t) CHECK(ha[t].data == hb[t].data);

    // Saving the loaded model reproduces the file byte for byte.
    save_checkpoint(p2, loaded);
    CHECK(read_file(p1) == read_file(p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("checkpoints reject corruption explicitly") {
    TimeGanModel m = checkpoint_fixture();
    const std::string path = temp_path("ckpt_corrupt.bin");

    save_checkpoint(path, m);
    {
        auto bytes = read_file(path);
        bytes[0] = 'X';
        std::ofstream(path, std::ios::binary).write(bytes.data(),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("magic"));
    }
    save_checkpoint(path, m);
    {
        auto bytes = read_file(path);
        bytes[4] = static_cast<char>(bytes[4] + 1);
        std::ofstream(path, std::ios::binary).write(bytes.data(),
                                                    static_cast<std::streamsize>(bytes.size()));
        CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("version"));
    }
    save_checkpoint(path, m);
    {
        std::filesystem::resize_file(path, std::filesystem::file_size(path) - 9);
        CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("truncated"));
    }
    save_checkpoint(path, m);
    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out.put('\0');
        out.close();
        CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("trailing"));
    }
    std::filesystem::remove(path);
}
