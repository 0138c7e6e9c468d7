// Population dataset container. One file holds a JSON metadata header, the
// shared frequency grid, and per-trajectory records with interleaved (re, im)
// FRF samples, all 64-bit little-endian. Round-trips are bit-exact.
//
// Layout:
//   magic "RKPD" | u32 version | u64 header_len | header JSON bytes
//   | u64 n_grid | grid f64[n_grid]
//   | u64 n_trajectories | trajectory records
// Trajectory record:
//   u64 structure_id | u32 lifetime | u32 n_snapshots | snapshots
// Snapshot record (for an n-mass chain, n from the header):
//   f64 masses[n] | f64 stiffnesses[n] | f64 dampings[n] | f64 f3
//   | f64 frf_re_im[2*n_grid]
#pragma once

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rulkit/common.hpp"
#include "rulkit/dynamics.hpp"

namespace rulkit {

inline constexpr char kDatasetMagic[4] = {'R', 'K', 'P', 'D'};

namespace io {

/// Replace-by-rename so readers never observe a half-written file.
class AtomicFileWriter {
public:
    explicit AtomicFileWriter(const std::string& path)
        : path_(path), tmp_(path + ".tmp"), out_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!out_) throw Error("cannot open " + tmp_ + " for writing");
    }
    ~AtomicFileWriter() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }
    std::ofstream& stream() { return out_; }
    void write(const void* data, std::size_t len) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(len));
    }
    template <typename T>
    void write_pod(const T& v) {
        write(&v, sizeof v);
    }
    void commit() {
        out_.flush();
        if (!out_) throw Error("write failed for " + tmp_);
        out_.close();
        std::filesystem::rename(tmp_, path_);
        committed_ = true;
    }

private:
    std::string path_, tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

class FileReader {
public:
    explicit FileReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw Error("cannot open " + path + " for reading");
    }
    void read(void* data, std::size_t len, const char* what) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(len));
        if (static_cast<std::size_t>(in_.gcount()) != len)
            throw Error(path_ + ": truncated while reading " + std::string(what) + " at byte " +
                        std::to_string(offset_));
        offset_ += len;
    }
    template <typename T>
    T read_pod(const char* what) {
        T v;
        read(&v, sizeof v, what);
        return v;
    }
    bool at_eof() {
        return in_.peek() == std::char_traits<char>::eof();
    }

private:
    std::string path_;
    std::ifstream in_;
    std::uint64_t offset_ = 0;
};

}  // namespace io

/// Serialize JSON with sorted keys and exact numeric round-trip, so equal
/// content means equal bytes (hashes and headers depend on this).
inline std::string canonical_json(const nlohmann::json& j) {
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::strict);
}

inline void write_dataset(const std::string& path, const PopulationDataset& ds,
                          const nlohmann::json& config_echo = nlohmann::json::object()) {
    std::size_t n_grid = 0, dof = 0;
    if (!ds.trajectories.empty() && !ds.trajectories[0].snapshots.empty()) {
        const Snapshot& first = ds.trajectories[0].snapshots[0];
        n_grid = first.frf.frequencies.size();
        dof = first.spec.dof();
    }
    nlohmann::json header{{"format_version", kDatasetFormatVersion},
                          {"master_seed", ds.master_seed},
                          {"config_hash", hex64(ds.config_hash)},
                          {"resample_count", ds.resample_count},
                          {"dof", dof},
                          {"config", config_echo}};
    const std::string hbytes = canonical_json(header);

    io::AtomicFileWriter w(path);
    w.write(kDatasetMagic, 4);
    w.write_pod(kDatasetFormatVersion);
    w.write_pod(static_cast<std::uint64_t>(hbytes.size()));
    w.write(hbytes.data(), hbytes.size());
    w.write_pod(static_cast<std::uint64_t>(n_grid));
    if (n_grid > 0)
        w.write(ds.trajectories[0].snapshots[0].frf.frequencies.data(), n_grid * sizeof(double));
    w.write_pod(static_cast<std::uint64_t>(ds.trajectories.size()));
    for (const DamageTrajectory& traj : ds.trajectories) {
        w.write_pod(traj.structure_id);
        w.write_pod(static_cast<std::uint32_t>(traj.lifetime));
        w.write_pod(static_cast<std::uint32_t>(traj.snapshots.size()));
        for (const Snapshot& s : traj.snapshots) {
            if (s.spec.dof() != dof || s.frf.frequencies.size() != n_grid)
                throw Error("dataset write: inconsistent snapshot shape in structure " +
                            std::to_string(traj.structure_id));
            w.write(s.spec.masses.data(), dof * sizeof(double));
            w.write(s.spec.stiffnesses.data(), dof * sizeof(double));
            w.write(s.spec.dampings.data(), dof * sizeof(double));
            w.write_pod(s.f3);
            w.write(s.frf.values.data(), n_grid * 2 * sizeof(double));
        }
    }
    w.commit();
}

struct LoadedDataset {
    PopulationDataset dataset;
    nlohmann::json config_echo;
};

inline LoadedDataset read_dataset(const std::string& path) {
    io::FileReader r(path);
    char magic[4];
    r.read(magic, 4, "magic");
    if (std::memcmp(magic, kDatasetMagic, 4) != 0)
        throw Error(path + ": not a population dataset (bad magic)");
    const auto version = r.read_pod<std::uint32_t>("version");
    if (version != kDatasetFormatVersion)
        throw Error(path + ": dataset format version " + std::to_string(version) +
                    " unsupported (expected " + std::to_string(kDatasetFormatVersion) + ")");
    const auto hlen = r.read_pod<std::uint64_t>("header length");
    if (hlen > (1ull << 30)) throw Error(path + ": implausible header length");
    std::string hbytes(hlen, '\0');
    r.read(hbytes.data(), hlen, "header");
    nlohmann::json header = nlohmann::json::parse(hbytes, nullptr, false);
    if (header.is_discarded()) throw Error(path + ": header is not valid JSON");

    LoadedDataset out;
    out.config_echo = header.value("config", nlohmann::json::object());
    out.dataset.master_seed = header.value("master_seed", std::uint64_t{0});
    out.dataset.resample_count = header.value("resample_count", std::uint64_t{0});
    out.dataset.config_hash =
        std::stoull(header.value("config_hash", std::string("0")), nullptr, 16);
    const auto dof = header.value("dof", std::uint64_t{0});

    const auto n_grid = r.read_pod<std::uint64_t>("grid size");
    if (n_grid > (1ull << 24)) throw Error(path + ": implausible grid size");
    std::vector<double> grid(n_grid);
    if (n_grid > 0) r.read(grid.data(), n_grid * sizeof(double), "grid");
    const auto n_traj = r.read_pod<std::uint64_t>("trajectory count");
    if (n_traj > (1ull << 32)) throw Error(path + ": implausible trajectory count");
    out.dataset.trajectories.resize(n_traj);
    for (std::uint64_t i = 0; i < n_traj; ++i) {
        DamageTrajectory& traj = out.dataset.trajectories[i];
        const std::string where = "trajectory " + std::to_string(i);
        traj.structure_id = r.read_pod<std::uint64_t>(where.c_str());
        traj.lifetime = static_cast<int>(r.read_pod<std::uint32_t>(where.c_str()));
        const auto n_snap = r.read_pod<std::uint32_t>(where.c_str());
        traj.snapshots.resize(n_snap);
        for (std::uint32_t t = 0; t < n_snap; ++t) {
            Snapshot& s = traj.snapshots[t];
            const std::string snap_where = where + " snapshot " + std::to_string(t);
            s.spec.masses.resize(dof);
            s.spec.stiffnesses.resize(dof);
            s.spec.dampings.resize(dof);
            r.read(s.spec.masses.data(), dof * sizeof(double), snap_where.c_str());
            r.read(s.spec.stiffnesses.data(), dof * sizeof(double), snap_where.c_str());
            r.read(s.spec.dampings.data(), dof * sizeof(double), snap_where.c_str());
            s.f3 = r.read_pod<double>(snap_where.c_str());
            s.frf.frequencies = grid;
            s.frf.values.resize(n_grid);
            r.read(s.frf.values.data(), n_grid * 2 * sizeof(double), snap_where.c_str());
        }
    }
    if (!r.at_eof()) throw Error(path + ": trailing bytes after last trajectory record");
    return out;
}

/// Per-timestep CSV for plotting: structure_id, t, k2, k3, f3.
inline void export_dataset_csv(const std::string& path, const PopulationDataset& ds) {
    io::AtomicFileWriter w(path);
    std::string line = "structure_id,t,k2,k3,f3\n";
    w.write(line.data(), line.size());
    char buf[160];
    for (const DamageTrajectory& traj : ds.trajectories) {
        for (std::size_t t = 0; t < traj.snapshots.size(); ++t) {
            const Snapshot& s = traj.snapshots[t];
            const int n = std::snprintf(buf, sizeof buf, "%llu,%zu,%.17g,%.17g,%.17g\n",
                                        static_cast<unsigned long long>(traj.structure_id), t + 1,
                                        s.spec.stiffnesses.size() > 1 ? s.spec.stiffnesses[1] : 0.0,
                                        s.spec.stiffnesses.size() > 2 ? s.spec.stiffnesses[2] : 0.0,
                                        s.f3);
            w.write(buf, static_cast<std::size_t>(n));
        }
    }
    w.commit();
}

}  // namespace rulkit
