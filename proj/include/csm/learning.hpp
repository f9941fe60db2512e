#pragma once

// Contrastive update rules: the similarity-matching rule (Hebbian feedforward,
// anti-Hebbian laterals updated in the nudged phase only) and the equilibrium-
// propagation baselines, plus the contrastive objective and the adaptive
// lateral-rate schedule.

#include "csm/dynamics.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace csm {

/// Per-layer step sizes. `alpha_l_base` keeps the undivided lateral rates so
/// the adaptive schedule stays idempotent at a given error level.
struct LearningRates {
    std::vector<double> alpha_w;
    std::vector<double> alpha_l;
    std::vector<double> alpha_b;
    std::vector<double> alpha_l_base;

    static LearningRates make(std::vector<double> w, std::vector<double> l,
                              std::vector<double> b) {
        LearningRates r;
        r.alpha_w = std::move(w);
        r.alpha_l = std::move(l);
        r.alpha_b = std::move(b);
        r.alpha_l_base = r.alpha_l;
        return r;
    }

    static LearningRates uniform(int depth, double w, double l, double b) {
        const auto n = static_cast<std::size_t>(depth);
        return make(std::vector<double>(n, w), std::vector<double>(n, l),
                    std::vector<double>(n, b));
    }

    void validate(int depth) const {
        const auto n = static_cast<std::size_t>(depth);
        if (alpha_w.size() != n || alpha_l.size() != n || alpha_b.size() != n ||
            alpha_l_base.size() != n)
            throw ShapeError("learning rates must have one entry per layer");
        for (std::size_t k = 0; k < n; ++k)
            if (alpha_w[k] < 0 || alpha_l[k] < 0 || alpha_b[k] < 0 || alpha_l_base[k] < 0)
                throw DomainError("learning rates must be nonnegative");
    }
};

/// Lateral-rate decay triggered by falling training error: alpha_L is divided
/// by the divisor of the lowest crossed threshold.
struct AdaptiveLRSchedule {
    std::vector<double> thresholds{5.0, 1.0, 0.5, 0.1};  // training-error %
    std::vector<double> divisors{5.0, 10.0, 50.0, 100.0};

    void validate() const {
        if (thresholds.size() != divisors.size())
            throw ShapeError("adaptive schedule: thresholds/divisors length mismatch");
        for (std::size_t k = 1; k < thresholds.size(); ++k)
            if (!(thresholds[k] < thresholds[k - 1]))
                throw DomainError("adaptive schedule thresholds must be strictly descending");
        for (double d : divisors)
            if (d < 1.0) throw DomainError("adaptive schedule divisors must be >= 1");
    }
};

/// Idempotent per error level: lateral rates are recomputed from their base
/// values, never from previously divided ones.
inline LearningRates apply_adaptive_lr(const AdaptiveLRSchedule& schedule,
                                       double train_error_pct, const LearningRates& rates) {
    schedule.validate();
    double divisor = 1.0;
    for (std::size_t k = 0; k < schedule.thresholds.size(); ++k)
        if (train_error_pct < schedule.thresholds[k]) divisor = schedule.divisors[k];
    LearningRates out = rates;
    for (std::size_t k = 0; k < out.alpha_l.size(); ++k)
        out.alpha_l[k] = out.alpha_l_base[k] / divisor;
    return out;
}

enum class AlgorithmKind {
    csm,
    ep_beta_regularized,  // no laterals; nudge sign randomized per sample
    ep_beta_positive,     // no laterals; constant positive nudge
    ep_lateral,           // laterals trained by the EP contrastive rule
};

inline bool uses_lateral(AlgorithmKind kind) {
    return kind == AlgorithmKind::csm || kind == AlgorithmKind::ep_lateral;
}

inline const char* to_string(AlgorithmKind kind) {
    switch (kind) {
        case AlgorithmKind::csm: return "csm";
        case AlgorithmKind::ep_beta_regularized: return "ep-reg";
        case AlgorithmKind::ep_beta_positive: return "ep-pos";
        case AlgorithmKind::ep_lateral: return "ep-lateral";
    }
    return "?";
}

inline AlgorithmKind algorithm_from_string(const std::string& s) {
    if (s == "csm") return AlgorithmKind::csm;
    if (s == "ep-reg" || s == "ep_beta_regularized") return AlgorithmKind::ep_beta_regularized;
    if (s == "ep-pos" || s == "ep_beta_positive") return AlgorithmKind::ep_beta_positive;
    if (s == "ep-lateral" || s == "ep_lateral") return AlgorithmKind::ep_lateral;
    throw ConfigError("unknown algorithm: " + s);
}

/// Nudge sign for the beta-regularized EP variant; a stateless function of
/// (seed, epoch, position) so resumed runs reproduce the same sequence.
inline double ep_beta_sign(std::uint64_t seed, std::int64_t epoch, std::int64_t position) {
    const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(epoch) +
                                                         0x9e3779b97f4a7c15ULL *
                                                             static_cast<std::uint64_t>(position)));
    return (h & 1ULL) ? 1.0 : -1.0;
}

namespace detail {

// The update kernels are written as plain entry loops (not Eigen expressions)
// so the masked path with all-ones masks is bitwise identical to the
// unmasked path.

inline void check_update_shapes(const Parameters& par, const NetworkTopology& topo,
                                const NetworkState& free_state,
                                const NetworkState& nudged_state,
                                const StructureMasks* masks) {
    par.check_shapes(topo);
    if (free_state.depth() != topo.depth() || nudged_state.depth() != topo.depth())
        throw ShapeError("state depth mismatch in update");
    for (int p = 0; p <= topo.depth(); ++p) {
        if (free_state.r[static_cast<std::size_t>(p)].size() != topo.size(p) ||
            nudged_state.r[static_cast<std::size_t>(p)].size() != topo.size(p))
            throw ShapeError("state size mismatch in update at layer " + std::to_string(p));
    }
    if (masks) {
        if (masks->depth() != topo.depth()) throw ShapeError("mask depth mismatch in update");
        for (int p = 1; p <= topo.depth(); ++p)
            if (masks->W(p).rows() != topo.size(p) || masks->W(p).cols() != topo.size(p - 1) ||
                masks->L(p).rows() != topo.size(p))
                throw ShapeError("mask shape mismatch in update at layer " + std::to_string(p));
    }
}

// dW_ij = a * (scale_b * rb_i rbprev_j - scale_0 * r0_i r0prev_j) on present synapses.
inline void update_w(Mat& w, const Vec& rb, const Vec& rb_prev, const Vec& r0,
                     const Vec& r0_prev, double alpha, double scale_b, double scale_0,
                     const Mat* mask) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            if (mask && (*mask)(i, j) == 0.0) continue;
            w(i, j) += alpha * (scale_b * rb(i) * rb_prev(j) - scale_0 * r0(i) * r0_prev(j));
        }
    }
}

}  // namespace detail

/// In-place similarity-matching update from a (free, nudged) fixed-point pair:
///   dL = a_L (r_b r_b^T - L)      ascent on the nudged objective; with
///                                 structure constants the decay is L_ij/s_ij
///   dW = a_W (r_b r_b'^T - r_0 r_0'^T)
///   db = a_b (r_b - r_0)
/// Masked entries stay exactly zero; L stays exactly symmetric.
inline void apply_csm_update(Parameters& par, const NetworkTopology& topo,
                             const NetworkState& free_state, const NetworkState& nudged_state,
                             const LearningRates& rates, const StructureMasks* masks = nullptr) {
    detail::check_update_shapes(par, topo, free_state, nudged_state, masks);
    rates.validate(topo.depth());
    for (int p = 1; p <= topo.depth(); ++p) {
        const auto up = static_cast<std::size_t>(p);
        const Vec& rb = nudged_state.r[up];
        const Vec& r0 = free_state.r[up];
        const double aw = rates.alpha_w[up - 1];
        const double al = rates.alpha_l[up - 1];
        const double ab = rates.alpha_b[up - 1];

        detail::update_w(par.W(p), rb, nudged_state.r[up - 1], r0, free_state.r[up - 1], aw,
                         1.0, 1.0, masks ? &masks->W(p) : nullptr);

        Mat& l = par.L(p);
        const Mat* lm = masks ? &masks->L(p) : nullptr;
        for (Eigen::Index i = 0; i < l.rows(); ++i) {
            for (Eigen::Index j = 0; j < l.cols(); ++j) {
                if (lm && (*lm)(i, j) == 0.0) continue;
                const double decay = lm ? l(i, j) / (*lm)(i, j) : l(i, j);
                l(i, j) += al * (rb(i) * rb(j) - decay);
            }
        }

        Vec& b = par.B(p);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) += ab * (rb(i) - r0(i));
    }
}

/// Pure-value variant of apply_csm_update.
inline Parameters csm_update(const Parameters& par, const NetworkTopology& topo,
                             const NetworkState& free_state, const NetworkState& nudged_state,
                             const LearningRates& rates, const StructureMasks* masks = nullptr) {
    Parameters out = par;
    apply_csm_update(out, topo, free_state, nudged_state, rates, masks);
    return out;
}

/// In-place equilibrium-propagation update, scaled by 1/beta_used:
///   dW = (a_W/beta)(r_b r_b'^T - r_0 r_0'^T)
///   db = (a_b/beta)(r_b - r_0)
///   dL = (a_L/beta)(r_0 r_0^T - r_b r_b^T)   lateral variant only
/// The lateral rule is the gradient descent of the contrastive function in
/// this parameterization (laterals enter the energy with positive quadratic
/// terms), so its correlation term carries the opposite sign from the
/// similarity-matching rule.
inline void apply_ep_update(Parameters& par, const NetworkTopology& topo, AlgorithmKind kind,
                            const NetworkState& free_state, const NetworkState& nudged_state,
                            double beta_used, const LearningRates& rates,
                            const StructureMasks* masks = nullptr) {
    if (kind == AlgorithmKind::csm)
        throw DomainError("ep_update dispatched with the similarity-matching rule");
    if (beta_used == 0.0) throw DomainError("ep_update requires a nonzero nudge");
    detail::check_update_shapes(par, topo, free_state, nudged_state, masks);
    rates.validate(topo.depth());
    const double inv_beta = 1.0 / beta_used;
    for (int p = 1; p <= topo.depth(); ++p) {
        const auto up = static_cast<std::size_t>(p);
        const Vec& rb = nudged_state.r[up];
        const Vec& r0 = free_state.r[up];
        const double aw = rates.alpha_w[up - 1] * inv_beta;
        const double ab = rates.alpha_b[up - 1] * inv_beta;

        detail::update_w(par.W(p), rb, nudged_state.r[up - 1], r0, free_state.r[up - 1], aw,
                         1.0, 1.0, masks ? &masks->W(p) : nullptr);

        if (kind == AlgorithmKind::ep_lateral) {
            const double al = rates.alpha_l[up - 1] * inv_beta;
            Mat& l = par.L(p);
            const Mat* lm = masks ? &masks->L(p) : nullptr;
            for (Eigen::Index i = 0; i < l.rows(); ++i) {
                for (Eigen::Index j = 0; j < l.cols(); ++j) {
                    if (lm && (*lm)(i, j) == 0.0) continue;
                    l(i, j) += al * (r0(i) * r0(j) - rb(i) * rb(j));
                }
            }
        }

        Vec& b = par.B(p);
        for (Eigen::Index i = 0; i < b.size(); ++i) b(i) += ab * (rb(i) - r0(i));
    }
}

/// Pure-value variant of apply_ep_update.
inline Parameters ep_update(AlgorithmKind kind, const Parameters& par,
                            const NetworkTopology& topo, const NetworkState& free_state,
                            const NetworkState& nudged_state, double beta_used,
                            const LearningRates& rates, const StructureMasks* masks = nullptr) {
    Parameters out = par;
    apply_ep_update(out, topo, kind, free_state, nudged_state, beta_used, rates, masks);
    return out;
}

/// Sums of per-sample fixed-point statistics for the optional mini-batch
/// mode: deltas are averaged over the batch and applied once. `weight` lets
/// the EP variants fold their per-sample 1/beta factor into the sum.
class UpdateAccumulator {
public:
    explicit UpdateAccumulator(const NetworkTopology& topo) {
        for (int p = 1; p <= topo.depth(); ++p) {
            w_hebb_.emplace_back(Mat::Zero(topo.size(p), topo.size(p - 1)));
            w_anti_.emplace_back(Mat::Zero(topo.size(p), topo.size(p - 1)));
            l_hebb_.emplace_back(Mat::Zero(topo.size(p), topo.size(p)));
            l_free_.emplace_back(Mat::Zero(topo.size(p), topo.size(p)));
            db_.emplace_back(Vec::Zero(topo.size(p)));
        }
    }

    void reset() {
        for (auto& m : w_hebb_) m.setZero();
        for (auto& m : w_anti_) m.setZero();
        for (auto& m : l_hebb_) m.setZero();
        for (auto& m : l_free_) m.setZero();
        for (auto& v : db_) v.setZero();
        count_ = 0;
    }

    long count() const { return count_; }

    void add(const NetworkState& free_state, const NetworkState& nudged_state,
             double weight = 1.0) {
        for (std::size_t k = 0; k < w_hebb_.size(); ++k) {
            const Vec& rb = nudged_state.r[k + 1];
            const Vec& r0 = free_state.r[k + 1];
            w_hebb_[k].noalias() += weight * (rb * nudged_state.r[k].transpose());
            w_anti_[k].noalias() += weight * (r0 * free_state.r[k].transpose());
            l_hebb_[k].noalias() += weight * (rb * rb.transpose());
            l_free_[k].noalias() += weight * (r0 * r0.transpose());
            db_[k] += weight * (rb - r0);
        }
        ++count_;
    }

    /// Applies the averaged similarity-matching rule; the lateral decay uses
    /// the parameters as they stand now, matching "deltas computed, then
    /// applied once".
    void apply_csm(Parameters& par, const NetworkTopology& topo, const LearningRates& rates,
                   const StructureMasks* masks = nullptr) const {
        if (count_ == 0) return;
        rates.validate(topo.depth());
        const double inv = 1.0 / static_cast<double>(count_);
        for (int p = 1; p <= topo.depth(); ++p) {
            const auto k = static_cast<std::size_t>(p) - 1;
            apply_w(par.W(p), rates.alpha_w[k] , masks ? &masks->W(p) : nullptr, inv, k);
            Mat& l = par.L(p);
            const Mat* lm = masks ? &masks->L(p) : nullptr;
            const double al = rates.alpha_l[k];
            for (Eigen::Index i = 0; i < l.rows(); ++i)
                for (Eigen::Index j = 0; j < l.cols(); ++j) {
                    if (lm && (*lm)(i, j) == 0.0) continue;
                    const double decay = lm ? l(i, j) / (*lm)(i, j) : l(i, j);
                    l(i, j) += al * (l_hebb_[k](i, j) * inv - decay);
                }
            for (Eigen::Index i = 0; i < par.B(p).size(); ++i)
                par.B(p)(i) += rates.alpha_b[k] * db_[k](i) * inv;
        }
    }

    /// Applies the averaged EP rule (weights must have carried 1/beta).
    void apply_ep(Parameters& par, const NetworkTopology& topo, AlgorithmKind kind,
                  const LearningRates& rates, const StructureMasks* masks = nullptr) const {
        if (kind == AlgorithmKind::csm)
            throw DomainError("ep accumulator dispatched with the similarity-matching rule");
        if (count_ == 0) return;
        rates.validate(topo.depth());
        const double inv = 1.0 / static_cast<double>(count_);
        for (int p = 1; p <= topo.depth(); ++p) {
            const auto k = static_cast<std::size_t>(p) - 1;
            apply_w(par.W(p), rates.alpha_w[k], masks ? &masks->W(p) : nullptr, inv, k);
            if (kind == AlgorithmKind::ep_lateral) {
                Mat& l = par.L(p);
                const Mat* lm = masks ? &masks->L(p) : nullptr;
                const double al = rates.alpha_l[k];
                for (Eigen::Index i = 0; i < l.rows(); ++i)
                    for (Eigen::Index j = 0; j < l.cols(); ++j) {
                        if (lm && (*lm)(i, j) == 0.0) continue;
                        l(i, j) += al * (l_free_[k](i, j) - l_hebb_[k](i, j)) * inv;
                    }
            }
            for (Eigen::Index i = 0; i < par.B(p).size(); ++i)
                par.B(p)(i) += rates.alpha_b[k] * db_[k](i) * inv;
        }
    }

private:
    void apply_w(Mat& w, double alpha, const Mat* mask, double inv, std::size_t k) const {
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                if (mask && (*mask)(i, j) == 0.0) continue;
                w(i, j) += alpha * (w_hebb_[k](i, j) - w_anti_[k](i, j)) * inv;
            }
    }

    std::vector<Mat> w_hebb_, w_anti_, l_hebb_, l_free_;
    std::vector<Vec> db_;
    long count_ = 0;
};

struct ContrastiveResult {
    double value = 0.0;  // mean nudged-minus-free energy gap over included samples
    int excluded = 0;    // samples dropped because a phase did not converge
};

/// Contrastive objective J = E(beta) - E(0) averaged over the batch, with the
/// current laterals reused in both phases. Both phases relax from the
/// midpoint state; non-converged samples are excluded and counted.
inline ContrastiveResult contrastive_J(const Parameters& par, const NetworkTopology& topo,
                                       const std::vector<Vec>& inputs,
                                       const std::vector<Vec>& labels, double beta,
                                       const PhaseConfig& nudged_phase,
                                       const PhaseConfig& free_phase) {
    if (inputs.size() != labels.size()) throw ShapeError("contrastive_J: batch size mismatch");
    ContrastiveResult out;
    double sum = 0.0;
    long included = 0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        NetworkState start = midpoint_state(topo, inputs[t]);
        RelaxResult nudged = relax(start, par, topo, nudged_phase, beta, &labels[t]);
        RelaxResult free_fp = relax(std::move(start), par, topo, free_phase, 0.0, nullptr);
        if (!nudged.converged || !free_fp.converged) {
            ++out.excluded;
            continue;
        }
        sum += energy_lt(nudged.state, par, topo, beta, &labels[t]) -
               energy_lt(free_fp.state, par, topo, 0.0, nullptr);
        ++included;
    }
    out.value = included > 0 ? sum / static_cast<double>(included) : 0.0;
    return out;
}

}  // namespace csm
