#pragma once

// Domain types of the layered Hebbian/anti-Hebbian network: activation,
// topology, parameters, per-sample state, and seeded initialization.

#include "csm/common.hpp"

#include <memory>
#include <utility>
#include <vector>

namespace csm {

/// Bounded monotone clamp f(u) = min(hi, max(u, lo)).
struct ActivationSpec {
    double lo = 0.0;
    double hi = 1.0;

    double apply(double u) const { return u < lo ? lo : (u > hi ? hi : u); }

    Vec apply(const Vec& u) const { return u.cwiseMax(lo).cwiseMin(hi); }

    double midpoint() const { return 0.5 * (lo + hi); }

    bool contains(const Vec& r, double slack = 0.0) const {
        return (r.array() >= lo - slack).all() && (r.array() <= hi + slack).all();
    }

    void validate() const {
        if (!(lo < hi)) throw DomainError("activation bounds require lo < hi");
    }
};

inline Vec apply_activation(const Vec& u, const ActivationSpec& act) { return act.apply(u); }

/// Per-synapse structure constants; a zero entry removes the connection.
/// `w[p-1]` shapes N^p x N^(p-1), `l[p-1]` shapes N^p x N^p (symmetric).
struct StructureMasks {
    std::vector<Mat> w;
    std::vector<Mat> l;

    int depth() const { return static_cast<int>(w.size()); }

    const Mat& W(int p) const { return w[static_cast<std::size_t>(p) - 1]; }
    const Mat& L(int p) const { return l[static_cast<std::size_t>(p) - 1]; }

    void validate() const {
        if (w.size() != l.size()) throw ShapeError("structure masks: w/l layer counts differ");
        for (std::size_t k = 0; k < w.size(); ++k) {
            if ((w[k].array() < 0.0).any() || (l[k].array() < 0.0).any())
                throw DomainError("structure constants must be nonnegative");
            if (l[k].rows() != l[k].cols() || l[k] != l[k].transpose())
                throw ShapeError("lateral structure mask must be symmetric");
            if (l[k].rows() != w[k].rows())
                throw ShapeError("structure mask shapes inconsistent at layer " + std::to_string(k + 1));
        }
    }
};

/// Layer sizes N^(0..P) plus the scalar knobs of the energy function.
///
/// `lateral_c[p-1]` is the per-layer lateral coefficient; the default is 1/2
/// for every layer except the top one, where it is 0 (the top layer's lateral
/// term then drops out of the dynamics). `gamma` sets the strength of
/// top-down feedback. `lateral_prefactor` rescales L everywhere it appears,
/// as a numerical-stability knob (1.0 = exact objective).
struct NetworkTopology {
    std::vector<int> layer_sizes;
    double gamma = 1.0;
    std::vector<double> lateral_c;
    double lateral_prefactor = 1.0;
    ActivationSpec act;
    std::shared_ptr<const StructureMasks> masks;

    int depth() const { return static_cast<int>(layer_sizes.size()) - 1; }
    int size(int p) const { return layer_sizes[static_cast<std::size_t>(p)]; }
    double c(int p) const { return lateral_c[static_cast<std::size_t>(p) - 1]; }

    static std::vector<double> default_lateral_c(int depth, bool output_lateral_on = false) {
        std::vector<double> c(static_cast<std::size_t>(depth), 0.5);
        if (!output_lateral_on && depth > 0) c.back() = 0.0;
        return c;
    }

    static NetworkTopology make(std::vector<int> sizes, double gamma = 1.0,
                                bool output_lateral_on = false) {
        NetworkTopology t;
        t.layer_sizes = std::move(sizes);
        t.gamma = gamma;
        t.lateral_c = default_lateral_c(t.depth(), output_lateral_on);
        t.validate();
        return t;
    }

    void validate() const {
        if (layer_sizes.size() < 2) throw TopologyError("need at least input and output layers");
        for (int n : layer_sizes)
            if (n <= 0) throw TopologyError("zero-sized layer");
        if (gamma < 0.0) throw TopologyError("gamma must be nonnegative");
        if (lateral_c.size() != static_cast<std::size_t>(depth()))
            throw TopologyError("lateral_c must have one entry per layer 1..P");
        if (lateral_prefactor <= 0.0) throw TopologyError("lateral_prefactor must be positive");
        act.validate();
        if (masks) {
            masks->validate();
            if (masks->depth() != depth()) throw TopologyError("mask depth != network depth");
            for (int p = 1; p <= depth(); ++p) {
                if (masks->W(p).rows() != size(p) || masks->W(p).cols() != size(p - 1) ||
                    masks->L(p).rows() != size(p))
                    throw TopologyError("mask shape mismatch at layer " + std::to_string(p));
            }
        }
    }
};

/// Feedforward matrices W^(p), symmetric laterals L^(p), thresholds b^(p).
struct Parameters {
    std::vector<Mat> w;
    std::vector<Mat> l;
    std::vector<Vec> b;

    const Mat& W(int p) const { return w[static_cast<std::size_t>(p) - 1]; }
    Mat& W(int p) { return w[static_cast<std::size_t>(p) - 1]; }
    const Mat& L(int p) const { return l[static_cast<std::size_t>(p) - 1]; }
    Mat& L(int p) { return l[static_cast<std::size_t>(p) - 1]; }
    const Vec& B(int p) const { return b[static_cast<std::size_t>(p) - 1]; }
    Vec& B(int p) { return b[static_cast<std::size_t>(p) - 1]; }

    int depth() const { return static_cast<int>(w.size()); }

    void check_shapes(const NetworkTopology& topo) const {
        const int P = topo.depth();
        if (depth() != P || l.size() != w.size() || b.size() != w.size())
            throw ShapeError("parameter layer count mismatch");
        for (int p = 1; p <= P; ++p) {
            if (W(p).rows() != topo.size(p) || W(p).cols() != topo.size(p - 1) ||
                L(p).rows() != topo.size(p) || L(p).cols() != topo.size(p) ||
                B(p).size() != topo.size(p))
                throw ShapeError("parameter shape mismatch at layer " + std::to_string(p));
        }
    }
};

/// One sample's relaxation state: total inputs u^(p) and rates r^(p).
/// r[0] is pinned to the input; u[0] is unused.
struct NetworkState {
    std::vector<Vec> u;
    std::vector<Vec> r;

    int depth() const { return static_cast<int>(r.size()) - 1; }
};

/// State with all u^(p) = 0 (rates at f(0)).
inline NetworkState make_state(const NetworkTopology& topo, const Vec& input) {
    if (input.size() != topo.size(0)) throw ShapeError("input size != layer 0 size");
    const int P = topo.depth();
    NetworkState s;
    s.u.resize(static_cast<std::size_t>(P) + 1);
    s.r.resize(static_cast<std::size_t>(P) + 1);
    s.r[0] = input;
    for (int p = 1; p <= P; ++p) {
        s.u[static_cast<std::size_t>(p)] = Vec::Zero(topo.size(p));
        s.r[static_cast<std::size_t>(p)] =
            Vec::Constant(topo.size(p), topo.act.apply(0.0));
    }
    return s;
}

/// State with all rates at the activation midpoint, u at its preimage.
inline NetworkState midpoint_state(const NetworkTopology& topo, const Vec& input) {
    NetworkState s = make_state(topo, input);
    const double mid = topo.act.midpoint();
    for (int p = 1; p <= topo.depth(); ++p) {
        s.u[static_cast<std::size_t>(p)].setConstant(mid);
        s.r[static_cast<std::size_t>(p)].setConstant(mid);
    }
    return s;
}

enum class WeightInit {
    fan_uniform,        // U[-s, s], s = sqrt(6 / (fan_in + fan_out))
    fan_uniform_small,  // the same scaled by 0.1; keeps early fixed points interior
};

/// Seeded parameter initialization: fan-based uniform W, identity L, zero b.
/// Masks from the topology are applied entrywise. Deterministic given seed.
inline Parameters init_params(const NetworkTopology& topo, std::uint64_t seed,
                              WeightInit rule = WeightInit::fan_uniform) {
    topo.validate();
    const int P = topo.depth();
    std::mt19937_64 gen(seed);
    Parameters par;
    par.w.reserve(static_cast<std::size_t>(P));
    par.l.reserve(static_cast<std::size_t>(P));
    par.b.reserve(static_cast<std::size_t>(P));
    for (int p = 1; p <= P; ++p) {
        const int rows = topo.size(p), cols = topo.size(p - 1);
        double s = std::sqrt(6.0 / (static_cast<double>(rows) + static_cast<double>(cols)));
        if (rule == WeightInit::fan_uniform_small) s *= 0.1;
        Mat w(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) w(i, j) = uniform_in(gen, -s, s);
        par.w.push_back(std::move(w));
        par.l.push_back(Mat::Identity(rows, rows));
        par.b.push_back(Vec::Zero(rows));
    }
    if (topo.masks) {
        for (int p = 1; p <= P; ++p) {
            par.W(p) = par.W(p).cwiseProduct((topo.masks->W(p).array() > 0.0).cast<double>().matrix());
            par.L(p) = par.L(p).cwiseProduct((topo.masks->L(p).array() > 0.0).cast<double>().matrix());
        }
    }
    return par;
}

/// Sum of the per-unit regularizer F(r) = r^2/2 - b*r (the closed interior
/// antiderivative of u - b under the clamp; boundary saturation enters the
/// dynamics through the clamp itself, not through F).
inline double regularizer_value(const Vec& r, const Vec& b, const ActivationSpec& act) {
    if (r.size() != b.size()) throw ShapeError("regularizer: r/b size mismatch");
    if (!act.contains(r)) throw DomainError("regularizer: rate outside activation bounds");
    return 0.5 * r.squaredNorm() - b.dot(r);
}

}  // namespace csm
