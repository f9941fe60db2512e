#pragma once

// Versioned binary checkpoints. A parameter checkpoint is:
//   magic "CSM1" | u32 version | topology descriptor |
//   row-major f64 matrices W^(1..P), L^(1..P), b^(1..P)
// A training checkpoint appends a persistent-particle section ("CSMS"), a
// metrics section ("CSMM"), and the next epoch index, so a resumed run
// continues exactly where it stopped. Multi-byte values are little-endian.

#include "csm/dynamics.hpp"
#include "csm/metrics.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace csm {

constexpr char kCheckpointMagic[4] = {'C', 'S', 'M', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_bytes(std::ostream& os, const void* data, std::size_t n) {
    os.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* data, std::size_t n, const char* what) {
    is.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n)
        throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_bytes(os, &v, 4); }
inline void write_i64(std::ostream& os, std::int64_t v) { write_bytes(os, &v, 8); }
inline void write_f64(std::ostream& os, double v) { write_bytes(os, &v, 8); }

inline std::uint32_t read_u32(std::istream& is, const char* what) {
    std::uint32_t v;
    read_bytes(is, &v, 4, what);
    return v;
}
inline std::int64_t read_i64(std::istream& is, const char* what) {
    std::int64_t v;
    read_bytes(is, &v, 8, what);
    return v;
}
inline double read_f64(std::istream& is, const char* what) {
    double v;
    read_bytes(is, &v, 8, what);
    return v;
}

inline void write_matrix(std::ostream& os, const Mat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) write_f64(os, m(i, j));
}

inline void read_matrix(std::istream& is, Mat& m, const char* what) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = read_f64(is, what);
}

inline void write_vector(std::ostream& os, const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) write_f64(os, v(i));
}

inline void read_vector(std::istream& is, Vec& v, const char* what) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = read_f64(is, what);
}

inline void write_topology(std::ostream& os, const NetworkTopology& topo) {
    write_u32(os, static_cast<std::uint32_t>(topo.depth()));
    for (int n : topo.layer_sizes) write_u32(os, static_cast<std::uint32_t>(n));
    write_f64(os, topo.gamma);
    write_f64(os, topo.lateral_prefactor);
    write_f64(os, topo.act.lo);
    write_f64(os, topo.act.hi);
    for (double c : topo.lateral_c) write_f64(os, c);
    write_u32(os, topo.masks ? 1u : 0u);
    if (topo.masks) {
        for (int p = 1; p <= topo.depth(); ++p) write_matrix(os, topo.masks->W(p));
        for (int p = 1; p <= topo.depth(); ++p) write_matrix(os, topo.masks->L(p));
    }
}

inline NetworkTopology read_topology(std::istream& is) {
    NetworkTopology topo;
    const std::uint32_t depth = read_u32(is, "depth");
    if (depth == 0 || depth > 1u << 16) throw CheckpointError("checkpoint depth implausible");
    topo.layer_sizes.resize(depth + 1);
    for (auto& n : topo.layer_sizes) n = static_cast<int>(read_u32(is, "layer size"));
    topo.gamma = read_f64(is, "gamma");
    topo.lateral_prefactor = read_f64(is, "lateral prefactor");
    topo.act.lo = read_f64(is, "activation lo");
    topo.act.hi = read_f64(is, "activation hi");
    topo.lateral_c.resize(depth);
    for (auto& c : topo.lateral_c) c = read_f64(is, "lateral c");
    if (read_u32(is, "mask flag") != 0) {
        StructureMasks masks;
        for (std::uint32_t p = 1; p <= depth; ++p) {
            Mat m(topo.layer_sizes[p], topo.layer_sizes[p - 1]);
            read_matrix(is, m, "w mask");
            masks.w.push_back(std::move(m));
        }
        for (std::uint32_t p = 1; p <= depth; ++p) {
            Mat m(topo.layer_sizes[p], topo.layer_sizes[p]);
            read_matrix(is, m, "l mask");
            masks.l.push_back(std::move(m));
        }
        topo.masks = std::make_shared<const StructureMasks>(std::move(masks));
    }
    topo.validate();
    return topo;
}

inline void write_params(std::ostream& os, const Parameters& par) {
    for (const Mat& w : par.w) write_matrix(os, w);
    for (const Mat& l : par.l) write_matrix(os, l);
    for (const Vec& b : par.b) write_vector(os, b);
}

inline Parameters read_params(std::istream& is, const NetworkTopology& topo) {
    Parameters par;
    for (int p = 1; p <= topo.depth(); ++p) par.w.emplace_back(topo.size(p), topo.size(p - 1));
    for (int p = 1; p <= topo.depth(); ++p) par.l.emplace_back(topo.size(p), topo.size(p));
    for (int p = 1; p <= topo.depth(); ++p) par.b.emplace_back(topo.size(p));
    for (Mat& w : par.w) read_matrix(is, w, "W");
    for (Mat& l : par.l) read_matrix(is, l, "L");
    for (Vec& b : par.b) read_vector(is, b, "b");
    return par;
}

inline void write_header(std::ostream& os) {
    write_bytes(os, kCheckpointMagic, 4);
    write_u32(os, kCheckpointVersion);
}

inline void read_header(std::istream& is, const std::string& path) {
    char magic[4];
    read_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw CheckpointError(path + ": not a parameter checkpoint (bad magic)");
    const std::uint32_t version = read_u32(is, "version");
    if (version != kCheckpointVersion)
        throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version));
}

}  // namespace detail

/// Throws when two topologies describe different networks.
inline void require_topology_match(const NetworkTopology& expected, const NetworkTopology& got) {
    if (expected.layer_sizes != got.layer_sizes)
        throw CheckpointError("checkpoint topology mismatch: layer sizes differ");
    if (expected.gamma != got.gamma || expected.lateral_prefactor != got.lateral_prefactor ||
        expected.act.lo != got.act.lo || expected.act.hi != got.act.hi ||
        expected.lateral_c != got.lateral_c)
        throw CheckpointError("checkpoint topology mismatch: coefficients differ");
    const bool em = expected.masks != nullptr, gm = got.masks != nullptr;
    if (em != gm) throw CheckpointError("checkpoint topology mismatch: mask presence differs");
    if (em) {
        for (int p = 1; p <= expected.depth(); ++p)
            if (expected.masks->W(p) != got.masks->W(p) || expected.masks->L(p) != got.masks->L(p))
                throw CheckpointError("checkpoint topology mismatch: masks differ");
    }
}

inline void save_params(const std::string& path, const NetworkTopology& topo,
                        const Parameters& par) {
    par.check_shapes(topo);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    detail::write_header(os);
    detail::write_topology(os, topo);
    detail::write_params(os, par);
    if (!os) throw IoError("write failed for " + path);
}

inline std::pair<NetworkTopology, Parameters> load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    detail::read_header(is, path);
    NetworkTopology topo = detail::read_topology(is);
    Parameters par = detail::read_params(is, topo);
    return {std::move(topo), std::move(par)};
}

/// Everything needed to continue a run: parameters, warm-start particles,
/// metrics so far, and the next epoch to execute.
struct TrainState {
    Parameters params;
    PersistentParticleStore store;
    std::vector<EpochMetrics> metrics;
    int next_epoch = 0;
};

inline void save_train_state(const std::string& path, const NetworkTopology& topo,
                             const TrainState& state) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write " + path);
    detail::write_header(os);
    detail::write_topology(os, topo);
    detail::write_params(os, state.params);

    detail::write_bytes(os, "CSMS", 4);
    detail::write_i64(os, static_cast<std::int64_t>(state.store.entries().size()));
    for (const auto& [index, rates] : state.store.entries()) {
        detail::write_i64(os, index);
        for (const Vec& r : rates) detail::write_vector(os, r);
    }

    detail::write_bytes(os, "CSMM", 4);
    detail::write_u32(os, static_cast<std::uint32_t>(state.metrics.size()));
    for (const EpochMetrics& m : state.metrics) {
        detail::write_u32(os, static_cast<std::uint32_t>(m.epoch));
        detail::write_f64(os, m.train_err);
        detail::write_f64(os, m.val_err);
        detail::write_f64(os, m.free_iters_mean);
        detail::write_i64(os, m.nonconv);
        detail::write_u32(os, static_cast<std::uint32_t>(m.sparsity.size()));
        for (double s : m.sparsity) detail::write_f64(os, s);
        detail::write_f64(os, m.seconds);
    }
    detail::write_u32(os, static_cast<std::uint32_t>(state.next_epoch));
    if (!os) throw IoError("write failed for " + path);
}

inline std::pair<NetworkTopology, TrainState> load_train_state(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    detail::read_header(is, path);
    NetworkTopology topo = detail::read_topology(is);
    TrainState state;
    state.params = detail::read_params(is, topo);

    char tag[4];
    detail::read_bytes(is, tag, 4, "store tag");
    if (std::memcmp(tag, "CSMS", 4) != 0)
        throw CheckpointError(path + ": parameter-only checkpoint, no training state");
    const std::int64_t entries = detail::read_i64(is, "store size");
    for (std::int64_t k = 0; k < entries; ++k) {
        const std::int64_t index = detail::read_i64(is, "store index");
        std::vector<Vec> rates;
        for (int p = 1; p <= topo.depth(); ++p) {
            Vec r(topo.size(p));
            detail::read_vector(is, r, "stored rates");
            rates.push_back(std::move(r));
        }
        state.store.entries()[index] = std::move(rates);
    }

    detail::read_bytes(is, tag, 4, "metrics tag");
    if (std::memcmp(tag, "CSMM", 4) != 0) throw CheckpointError(path + ": missing metrics section");
    const std::uint32_t rows = detail::read_u32(is, "metrics size");
    for (std::uint32_t k = 0; k < rows; ++k) {
        EpochMetrics m;
        m.epoch = static_cast<int>(detail::read_u32(is, "epoch"));
        m.train_err = detail::read_f64(is, "train err");
        m.val_err = detail::read_f64(is, "val err");
        m.free_iters_mean = detail::read_f64(is, "iters");
        m.nonconv = detail::read_i64(is, "nonconv");
        const std::uint32_t n = detail::read_u32(is, "sparsity len");
        m.sparsity.resize(n);
        for (auto& s : m.sparsity) s = detail::read_f64(is, "sparsity");
        m.seconds = detail::read_f64(is, "seconds");
        state.metrics.push_back(std::move(m));
    }
    state.next_epoch = static_cast<int>(detail::read_u32(is, "next epoch"));
    return {std::move(topo), std::move(state)};
}

}  // namespace csm
