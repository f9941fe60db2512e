#pragma once

// Relaxation dynamics to free/nudged fixed points, the per-sample energy they
// descend, and the persistent-particle warm-start store.

#include "csm/network.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <utility>
#include <vector>

namespace csm {

/// One relaxation phase: nudge strength, Euler step, iteration budget, and
/// the fixed-point tolerance on the drive max-norm.
struct PhaseConfig {
    double beta = 0.0;  // 0 = free phase
    double step = 0.5;
    int max_iterations = 100;
    double tolerance = 1e-5;

    void validate() const {
        if (beta < 0.0) throw DomainError("phase beta must be nonnegative");
        if (step <= 0.0) throw DomainError("phase step must be positive");
        if (max_iterations <= 0) throw DomainError("phase max_iterations must be positive");
        if (tolerance <= 0.0) throw DomainError("phase tolerance must be positive");
    }
};

namespace detail {

// Drive for layer p at the current state:
//   -u + W^(p) r^(p-1) - c^(p)[1+g(1-d_pP)] L^(p) r^(p) + b^(p)
//   + g(1-d_pP) W^(p+1)^T r^(p+1) - 2 beta d_pP (r^(P) - z)
// i.e. the negative energy gradient w.r.t. r^(p), scaled by gamma^(P-p)/2.
inline void layer_drive_into(Vec& out, const NetworkState& s, const Parameters& par,
                             const NetworkTopology& topo, int p, double beta,
                             const Vec* z_label) {
    const int P = topo.depth();
    const double fb = (p < P) ? topo.gamma : 0.0;
    const auto up = static_cast<std::size_t>(p);
    out = -s.u[up] + par.B(p);
    out.noalias() += par.W(p) * s.r[up - 1];
    const double lat = topo.c(p) * (1.0 + fb) * topo.lateral_prefactor;
    if (lat != 0.0) out.noalias() -= lat * (par.L(p) * s.r[up]);
    if (p < P) out.noalias() += fb * (par.W(p + 1).transpose() * s.r[up + 1]);
    if (p == P && beta != 0.0) {
        if (z_label == nullptr) throw ShapeError("nudged drive requires a label");
        if (z_label->size() != s.r[up].size()) throw ShapeError("label size != output size");
        out.noalias() -= (2.0 * beta) * (s.r[up] - *z_label);
    }
}

}  // namespace detail

/// Right-hand side of the layer-p relaxation ODE. `z_label` is required iff
/// beta != 0.
inline Vec layer_drive(const NetworkState& state, const Parameters& par,
                       const NetworkTopology& topo, int p, double beta,
                       const Vec* z_label = nullptr) {
    if (p < 1 || p > topo.depth()) throw ShapeError("layer index out of range");
    par.check_shapes(topo);
    if (state.depth() != topo.depth()) throw ShapeError("state depth mismatch");
    Vec out;
    detail::layer_drive_into(out, state, par, topo, p, beta, z_label);
    return out;
}

/// Per-sample energy at the given state (rates only enter; the state is
/// assumed consistent, r = f(u)):
///   sum_p gamma^(p-P) [ Tr W^T W - 2 r^(p)T W r^(p-1)
///                       + (1+g(1-d_pP))/2 c^(p) (2k r^(p)T L r^(p) - Tr L^T L)
///                       + 2 F(r^(p))^T 1 ]
///   + 2 beta ||r^(P) - z||^2
/// with k the lateral prefactor and F the activation regularizer.
inline double energy_lt(const NetworkState& state, const Parameters& par,
                        const NetworkTopology& topo, double beta,
                        const Vec* z_label = nullptr) {
    par.check_shapes(topo);
    if (state.depth() != topo.depth()) throw ShapeError("state depth mismatch");
    const int P = topo.depth();
    double e = 0.0;
    for (int p = 1; p <= P; ++p) {
        const auto up = static_cast<std::size_t>(p);
        const double fb = (p < P) ? topo.gamma : 0.0;
        const double scale = std::pow(topo.gamma, p - P);
        const Vec& r = state.r[up];
        double layer = par.W(p).squaredNorm() - 2.0 * r.dot(par.W(p) * state.r[up - 1]);
        const double cp = topo.c(p);
        if (cp != 0.0) {
            layer += 0.5 * (1.0 + fb) * cp *
                     (2.0 * topo.lateral_prefactor * r.dot(par.L(p) * r) -
                      par.L(p).squaredNorm());
        }
        layer += 2.0 * regularizer_value(r, par.B(p), topo.act);
        e += scale * layer;
    }
    if (beta != 0.0) {
        if (z_label == nullptr) throw ShapeError("nudged energy requires a label");
        e += 2.0 * beta * (state.r[static_cast<std::size_t>(P)] - *z_label).squaredNorm();
    }
    return e;
}

struct RelaxResult {
    NetworkState state;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Euler relaxation toward a fixed point with an explicit (signed) nudge
/// strength. All layer drives are evaluated from the old state, then applied
/// simultaneously. Stops when the drive max-norm falls below tolerance or the
/// iteration budget runs out; throws DivergenceError on non-finite values.
/// When `trace` is given, writes one "iteration,residual,energy" row per
/// evaluation.
inline RelaxResult relax(NetworkState state, const Parameters& par,
                         const NetworkTopology& topo, const PhaseConfig& phase,
                         double beta, const Vec* z_label,
                         std::ostream* trace = nullptr) {
    phase.validate();
    par.check_shapes(topo);
    if (state.depth() != topo.depth()) throw ShapeError("state depth mismatch");
    const int P = topo.depth();
    std::vector<Vec> drive(static_cast<std::size_t>(P) + 1);

    RelaxResult res;
    if (trace) *trace << "iteration,residual,energy\n";
    for (int it = 0;; ++it) {
        double resid = 0.0;
        for (int p = 1; p <= P; ++p) {
            detail::layer_drive_into(drive[static_cast<std::size_t>(p)], state, par, topo, p,
                                     beta, z_label);
            const double norm = drive[static_cast<std::size_t>(p)].lpNorm<Eigen::Infinity>();
            if (norm > resid) resid = norm;
        }
        if (!std::isfinite(resid)) {
            for (int p = 1; p <= P; ++p)
                if (!drive[static_cast<std::size_t>(p)].allFinite()) throw DivergenceError(p, it);
            throw DivergenceError(P, it);
        }
        if (trace)
            *trace << it << ',' << resid << ',' << energy_lt(state, par, topo, beta, z_label)
                   << '\n';
        if (resid < phase.tolerance || it >= phase.max_iterations) {
            res.state = std::move(state);
            res.iterations = it;
            res.residual = resid;
            res.converged = resid < phase.tolerance;
            return res;
        }
        for (int p = 1; p <= P; ++p) {
            const auto up = static_cast<std::size_t>(p);
            state.u[up] += phase.step * drive[up];
            if (!state.u[up].allFinite()) throw DivergenceError(p, it + 1);
            state.r[up] = topo.act.apply(state.u[up]);
        }
    }
}

/// Relaxation with the phase's own (nonnegative) nudge strength.
inline RelaxResult relax(NetworkState state, const Parameters& par,
                         const NetworkTopology& topo, const PhaseConfig& phase,
                         const Vec* z_label = nullptr, std::ostream* trace = nullptr) {
    return relax(std::move(state), par, topo, phase, phase.beta, z_label, trace);
}

/// Free-phase fixed points of layers 1..P, keyed by sample index, used to
/// warm-start the next epoch's relaxation.
class PersistentParticleStore {
public:
    bool contains(std::int64_t index) const { return entries_.count(index) != 0; }

    std::size_t size() const { return entries_.size(); }

    void clear() { entries_.clear(); }

    void save(std::int64_t index, const NetworkState& state, const ActivationSpec& act) {
        std::vector<Vec> rates(state.r.begin() + 1, state.r.end());
        for (const Vec& r : rates)
            if (!act.contains(r)) throw DomainError("persistent store: rate outside bounds");
        entries_[index] = std::move(rates);
    }

    const std::vector<Vec>* find(std::int64_t index) const {
        auto it = entries_.find(index);
        return it == entries_.end() ? nullptr : &it->second;
    }

    // Ordered view, so serialization is deterministic.
    const std::map<std::int64_t, std::vector<Vec>>& entries() const { return entries_; }
    std::map<std::int64_t, std::vector<Vec>>& entries() { return entries_; }

private:
    std::map<std::int64_t, std::vector<Vec>> entries_;
};

/// State for one sample: rates restored from the store when present, else the
/// activation midpoint; u is set to the clamp preimage (u = r).
inline NetworkState persistent_init(const PersistentParticleStore& store, std::int64_t index,
                                    const NetworkTopology& topo, const Vec& input) {
    NetworkState s = midpoint_state(topo, input);
    if (const std::vector<Vec>* rates = store.find(index)) {
        if (rates->size() != static_cast<std::size_t>(topo.depth()))
            throw ShapeError("stored particle depth mismatch");
        for (int p = 1; p <= topo.depth(); ++p) {
            const Vec& r = (*rates)[static_cast<std::size_t>(p) - 1];
            if (r.size() != topo.size(p)) throw ShapeError("stored particle size mismatch");
            s.r[static_cast<std::size_t>(p)] = r;
            s.u[static_cast<std::size_t>(p)] = r;
        }
    }
    return s;
}

}  // namespace csm
