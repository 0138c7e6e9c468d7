// Versioned model container: magic, version, a canonical-JSON block with the
// training configuration and phase flags, then a named-tensor table holding
// every network parameter plus the PCA basis and the feature scaler. Writes
// are atomic (tmp + rename); loads reject bad magic, unknown versions,
// truncation, trailing bytes, and any mismatch between the tensor table and
// the parameter set the configuration implies. Round-trips are bit-exact.
#pragma once

#include <cstring>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rulkit/dataset_io.hpp"
#include "rulkit/timegan.hpp"

namespace rulkit {

inline constexpr char kCheckpointMagic[4] = {'R', 'K', 'C', 'P'};

inline nlohmann::json training_config_to_json(const TimeGanConfig& c) {
    return nlohmann::json{
        {"feature_dim", c.feature_dim},
        {"latent_dim", c.latent_dim},
        {"hidden_dim", c.hidden_dim},
        {"condition_dim", c.condition_dim},
        {"batch_size", c.batch_size},
        {"iters_autoencoder", c.iters_autoencoder},
        {"iters_supervised", c.iters_supervised},
        {"iters_joint", c.iters_joint},
        {"iters_inverse", c.iters_inverse},
        {"supervised_weight", c.supervised_weight},
        {"embedder_supervised_weight", c.embedder_supervised_weight},
        {"non_saturating", c.non_saturating},
        {"moment_matching", c.moment_matching},
        {"moment_weight", c.moment_weight},
        {"adam", {{"lr", c.adam.lr},
                  {"beta1", c.adam.beta1},
                  {"beta2", c.adam.beta2},
                  {"eps", c.adam.eps}}},
        {"seed", c.seed},
    };
}

inline TimeGanConfig training_config_from_json(const nlohmann::json& j) {
    TimeGanConfig c;
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
    c.condition_dim = j.value("condition_dim", c.condition_dim);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.iters_autoencoder = j.value("iters_autoencoder", c.iters_autoencoder);
    c.iters_supervised = j.value("iters_supervised", c.iters_supervised);
    c.iters_joint = j.value("iters_joint", c.iters_joint);
    c.iters_inverse = j.value("iters_inverse", c.iters_inverse);
    c.supervised_weight = j.value("supervised_weight", c.supervised_weight);
    c.embedder_supervised_weight =
        j.value("embedder_supervised_weight", c.embedder_supervised_weight);
    c.non_saturating = j.value("non_saturating", c.non_saturating);
    c.moment_matching = j.value("moment_matching", c.moment_matching);
    c.moment_weight = j.value("moment_weight", c.moment_weight);
    if (j.contains("adam")) {
        const auto& a = j.at("adam");
        c.adam.lr = a.value("lr", c.adam.lr);
        c.adam.beta1 = a.value("beta1", c.adam.beta1);
        c.adam.beta2 = a.value("beta2", c.adam.beta2);
        c.adam.eps = a.value("eps", c.adam.eps);
    }
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

namespace detail {

inline Tensor row_tensor(const std::vector<double>& v) {
    Tensor t(1, v.size());
    t.data = v;
    return t;
}

/// Tensors beyond the graph parameters that ride in the table.
inline std::vector<std::pair<std::string, Tensor>> side_tensors(const TimeGanModel& m) {
    std::vector<std::pair<std::string, Tensor>> out;
    out.emplace_back("scaler.mean", row_tensor(m.scaler.mean));
    out.emplace_back("scaler.std_dev", row_tensor(m.scaler.std_dev));
    out.emplace_back("pca.mean", row_tensor(m.pca.mean));
    Tensor comps(m.pca.n_components, m.pca.dim);
    comps.data = m.pca.components;
    out.emplace_back("pca.components", std::move(comps));
    out.emplace_back("pca.explained_variance_ratio", row_tensor(m.pca.explained_variance_ratio));
    out.emplace_back("pca.eigenvalues", row_tensor(m.pca.eigenvalues));
    return out;
}

inline void write_tensor(io::AtomicFileWriter& w, const std::string& name, const Tensor& t) {
    w.write_pod(static_cast<std::uint64_t>(name.size()));
    w.write(name.data(), name.size());
    w.write_pod(static_cast<std::uint64_t>(t.rows()));
    w.write_pod(static_cast<std::uint64_t>(t.cols()));
    w.write(t.data.data(), t.data.size() * sizeof(double));
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TimeGanModel& m) {
    nlohmann::json header{
        {"format_version", kCheckpointFormatVersion},
        {"config", training_config_to_json(m.config)},
        {"phases", {{"autoencoder", m.autoencoder_trained},
                    {"supervised", m.supervised_trained},
                    {"joint", m.joint_trained},
                    {"inverse", m.inverse_trained}}},
        {"scaler", {{"clamp_sigmas", m.scaler.clamp_sigmas}}},
        {"pca", {{"n_components", m.pca.n_components},
                 {"dim", m.pca.dim},
                 {"log_magnitude", m.pca.log_magnitude},
                 {"low_variance_warning", m.pca.low_variance_warning},
                 {"total_variance", m.pca.total_variance}}},
    };
    const std::string hbytes = canonical_json(header);

    io::AtomicFileWriter w(path);
    w.write(kCheckpointMagic, sizeof kCheckpointMagic);
    w.write_pod(static_cast<std::uint32_t>(kCheckpointFormatVersion));
    w.write_pod(static_cast<std::uint64_t>(hbytes.size()));
    w.write(hbytes.data(), hbytes.size());

    const auto side = detail::side_tensors(m);
    const auto& names = m.graph.param_names();
    w.write_pod(static_cast<std::uint64_t>(names.size() + side.size()));
    for (const auto& name : names)
        detail::write_tensor(w, name, m.graph.val(m.graph.param_id(name)));
    for (const auto& [name, tensor] : side) detail::write_tensor(w, name, tensor);
    w.commit();
}

inline TimeGanModel load_checkpoint(const std::string& path) {
    io::FileReader r(path);
    char magic[4];
    r.read(magic, sizeof magic, "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw Error(path + ": not a model checkpoint (bad magic bytes)");
    const auto version = r.read_pod<std::uint32_t>("version");
    if (version != kCheckpointFormatVersion)
        throw Error(path + ": checkpoint format version " + std::to_string(version) +
                    " unsupported (expected " + std::to_string(kCheckpointFormatVersion) + ")");
    const auto hlen = r.read_pod<std::uint64_t>("header length");
    if (hlen > (1ull << 30)) throw Error(path + ": implausible header size");
    std::string hbytes(hlen, '\0');
    r.read(hbytes.data(), hlen, "header");
    nlohmann::json header = nlohmann::json::parse(hbytes);

    TimeGanModel m = make_timegan(training_config_from_json(header.at("config")), FeatureScaler{},
                                  PcaModel{});
    const auto& phases = header.at("phases");
    m.autoencoder_trained = phases.value("autoencoder", false);
    m.supervised_trained = phases.value("supervised", false);
    m.joint_trained = phases.value("joint", false);
    m.inverse_trained = phases.value("inverse", false);
    m.scaler.clamp_sigmas = header.at("scaler").value("clamp_sigmas", 4.0);
    const auto& pj = header.at("pca");
    m.pca.n_components = pj.value("n_components", std::size_t{0});
    m.pca.dim = pj.value("dim", std::size_t{0});
    m.pca.log_magnitude = pj.value("log_magnitude", false);
    m.pca.low_variance_warning = pj.value("low_variance_warning", false);
    m.pca.total_variance = pj.value("total_variance", 0.0);

    const auto n_tensors = r.read_pod<std::uint64_t>("tensor count");
    if (n_tensors > (1ull << 20)) throw Error(path + ": implausible tensor count");
    std::map<std::string, Tensor> table;
    for (std::uint64_t i = 0; i < n_tensors; ++i) {
        const auto nlen = r.read_pod<std::uint64_t>("tensor name length");
        if (nlen > (1ull << 16)) throw Error(path + ": implausible tensor name length");
        std::string name(nlen, '\0');
        r.read(name.data(), nlen, "tensor name");
        const auto rows = r.read_pod<std::uint64_t>(name.c_str());
        const auto cols = r.read_pod<std::uint64_t>(name.c_str());
        if (rows * cols > (1ull << 28)) throw Error(path + ": implausible tensor size for " + name);
        Tensor t(rows, cols);
        r.read(t.data.data(), t.data.size() * sizeof(double), name.c_str());
        if (!table.emplace(std::move(name), std::move(t)).second)
            throw Error(path + ": duplicate tensor entry");
    }
    if (!r.at_eof()) throw Error(path + ": trailing bytes after tensor table");

    auto take = [&](const std::string& name) {
        auto it = table.find(name);
        if (it == table.end()) throw Error(path + ": checkpoint is missing tensor '" + name + "'");
        Tensor t = std::move(it->second);
        table.erase(it);
        return t;
    };
    for (const auto& name : m.graph.param_names()) {
        Tensor t = take(name);
        Tensor& dst = m.graph.param_value(name);
        if (!t.same_shape(dst))
            throw Error(path + ": tensor '" + name + "' has shape " + shape_str(t.shape) +
                        ", expected " + shape_str(dst.shape));
        dst = std::move(t);
    }
    m.scaler.mean = take("scaler.mean").data;
    m.scaler.std_dev = take("scaler.std_dev").data;
    m.pca.mean = take("pca.mean").data;
    Tensor comps = take("pca.components");
    if (comps.rows() != m.pca.n_components || comps.cols() != m.pca.dim)
        throw Error(path + ": pca.components shape " + shape_str(comps.shape) +
                    " disagrees with header");
    m.pca.components = std::move(comps.data);
    m.pca.explained_variance_ratio = take("pca.explained_variance_ratio").data;
    m.pca.eigenvalues = take("pca.eigenvalues").data;
    if (!table.empty())
        throw Error(path + ": unexpected tensor entry '" + table.begin()->first + "'");
    return m;
}

}  // namespace rulkit
