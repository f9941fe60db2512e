#pragma once

// Independent oracles for the math underneath the training code: the
// closed-form optimum of supervised similarity matching, the dual-variable
// identities, the small-nudge gradient equivalence, and energy descent along
// relaxation trajectories. Wherever a fixed point is needed, these solve the
// interior linear system directly instead of reusing the relaxation loop.

#include "csm/dynamics.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace csm::verify {

struct OracleReport {
    std::string name;
    std::string instance;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;          // measured <= tolerance
    bool inconclusive = false;  // instance violated a precondition; not a failure

    static OracleReport make(std::string name, std::string instance, double measured,
                             double tolerance, bool inconclusive = false) {
        OracleReport r;
        r.name = std::move(name);
        r.instance = std::move(instance);
        r.measured = inconclusive ? 0.0 : measured;
        r.tolerance = tolerance;
        r.pass = r.measured <= tolerance;
        r.inconclusive = inconclusive;
        return r;
    }
};

inline void write_reports_csv(std::ostream& os, const std::vector<OracleReport>& reports) {
    os << "name,instance,measured,tolerance,pass,inconclusive\n";
    for (const auto& r : reports)
        os << r.name << ",\"" << r.instance << "\"," << r.measured << ',' << r.tolerance << ','
           << (r.pass ? 1 : 0) << ',' << (r.inconclusive ? 1 : 0) << '\n';
}

/// Closed-form optimum of the hidden similarity matrix: eigendecompose
/// (R^x + R^z)/2 and keep the top m modes. For m >= rank this reproduces
/// (R^x + R^z)/2 itself. X is n x T, Z is k x T; the result is T x T.
inline Mat oracle_optimal_ry(const Mat& X, const Mat& Z, int m) {
    if (X.cols() != Z.cols()) throw ShapeError("oracle_optimal_ry: X/Z sample counts differ");
    if (X.cols() < 1) throw ShapeError("oracle_optimal_ry: need at least one sample");
    const Mat target = 0.5 * (X.transpose() * X + Z.transpose() * Z);
    Eigen::SelfAdjointEigenSolver<Mat> eig(target);
    const Vec& vals = eig.eigenvalues();  // ascending
    const Mat& vecs = eig.eigenvectors();
    const Eigen::Index T = target.rows();
    Mat ry = Mat::Zero(T, T);
    const Eigen::Index keep = std::min<Eigen::Index>(m, T);
    for (Eigen::Index k = 0; k < keep; ++k) {
        const Eigen::Index idx = T - 1 - k;
        ry.noalias() += vals(idx) * (vecs.col(idx) * vecs.col(idx).transpose());
    }
    return ry;
}

/// Checks the dual-variable identities that turn quartic similarity terms
/// into synaptic weights:
///   min_W [ -(2/T) sum y^T W x + Tr W^T W ] = -(1/T^2) sum sum (y^T y')(x^T x')
///   max_L [  (2/T) sum y^T L y - Tr L^T L ] = +(1/T^2) sum sum (y^T y')^2
/// with minimizer W* = (1/T) Y X^T and maximizer L* = (1/T) Y Y^T.
inline OracleReport check_duality_identity(const Mat& Y, const Mat& X, double tolerance = 1e-10) {
    if (Y.cols() != X.cols()) throw ShapeError("check_duality_identity: sample counts differ");
    const double T = static_cast<double>(Y.cols());

    const Mat w_star = (Y * X.transpose()) / T;
    const double lhs_w = -(2.0 / T) * (w_star * X).cwiseProduct(Y).sum() + w_star.squaredNorm();
    const double rhs_w = -((Y.transpose() * Y).cwiseProduct(X.transpose() * X)).sum() / (T * T);

    const Mat l_star = (Y * Y.transpose()) / T;
    const double lhs_l = (2.0 / T) * (l_star * Y).cwiseProduct(Y).sum() - l_star.squaredNorm();
    const double rhs_l = (Y.transpose() * Y).squaredNorm() / (T * T);

    const double measured = std::max(std::abs(lhs_w - rhs_w), std::abs(lhs_l - rhs_l));
    std::ostringstream inst;
    inst << "m=" << Y.rows() << " n=" << X.rows() << " T=" << Y.cols();
    return OracleReport::make("duality-identity", inst.str(), measured, tolerance);
}

// Interior fixed point of the relaxation dynamics, found by solving the block
// linear system that holds while every unit stays strictly inside the clamp:
//   [(1 + 2*beta*d_pP) I + c_p (1+fb) L_p] u_p - W_p u_{p-1} - fb W_{p+1}^T u_{p+1}
//     = b_p + d_p1 W_1 x + d_pP 2*beta*z
// Returns nothing if any unit ends up within `margin` of a bound.
inline std::optional<std::vector<Vec>> interior_fixed_point(const NetworkTopology& topo,
                                                            const Parameters& par, const Vec& x,
                                                            double beta, const Vec* z,
                                                            double margin = 1e-6) {
    const int P = topo.depth();
    std::vector<Eigen::Index> offset(static_cast<std::size_t>(P) + 1, 0);
    Eigen::Index total = 0;
    for (int p = 1; p <= P; ++p) {
        offset[static_cast<std::size_t>(p)] = total;
        total += topo.size(p);
    }
    Mat a = Mat::Zero(total, total);
    Vec rhs = Vec::Zero(total);
    for (int p = 1; p <= P; ++p) {
        const Eigen::Index o = offset[static_cast<std::size_t>(p)];
        const Eigen::Index n = topo.size(p);
        const double fb = (p < P) ? topo.gamma : 0.0;
        const double extra = (p == P && beta != 0.0) ? 2.0 * beta : 0.0;
        a.block(o, o, n, n) = (1.0 + extra) * Mat::Identity(n, n) +
                              topo.c(p) * (1.0 + fb) * topo.lateral_prefactor * par.L(p);
        if (p >= 2)
            a.block(o, offset[static_cast<std::size_t>(p) - 1], n, topo.size(p - 1)) = -par.W(p);
        if (p < P)
            a.block(o, offset[static_cast<std::size_t>(p) + 1], n, topo.size(p + 1)) =
                -topo.gamma * par.W(p + 1).transpose();
        rhs.segment(o, n) = par.B(p);
        if (p == 1) rhs.segment(o, n) += par.W(1) * x;
        if (p == P && beta != 0.0) rhs.segment(o, n) += (2.0 * beta) * (*z);
    }
    const Vec u = a.partialPivLu().solve(rhs);
    if (!u.allFinite()) return std::nullopt;
    std::vector<Vec> layers;
    for (int p = 1; p <= P; ++p) {
        Vec up = u.segment(offset[static_cast<std::size_t>(p)], topo.size(p));
        if ((up.array() <= topo.act.lo + margin).any() ||
            (up.array() >= topo.act.hi - margin).any())
            return std::nullopt;
        layers.push_back(std::move(up));
    }
    return layers;
}

/// Wraps interior layer values as a consistent state (r = u inside the clamp).
inline NetworkState state_from_layers(const NetworkTopology& topo, const Vec& x,
                                      const std::vector<Vec>& layers) {
    NetworkState s = make_state(topo, x);
    for (int p = 1; p <= topo.depth(); ++p) {
        s.u[static_cast<std::size_t>(p)] = layers[static_cast<std::size_t>(p) - 1];
        s.r[static_cast<std::size_t>(p)] = layers[static_cast<std::size_t>(p) - 1];
    }
    return s;
}

struct BetaLimitResult {
    OracleReport report;
    std::vector<double> betas;       // as given
    std::vector<double> rel_errors;  // gradient mismatch per beta
    double lateral_residual = 0.0;   // max-norm of dE/dL after optimizing L
};

/// Small-nudge gradient equivalence: after optimizing the laterals on the
/// frozen batch (then holding them fixed), the finite-difference gradient of
/// J/beta over all W and b entries is compared against the finite-difference
/// gradient of the free-phase output error sum 2/T sum ||r^(P) - z||^2.
/// Passes when the mismatch at the smallest beta is within tolerance and
/// shrinks relative to the largest beta. Boundary-saturated fixed points make
/// the instance inconclusive rather than failed.
inline BetaLimitResult check_beta_limit(const NetworkTopology& topo, Parameters par,
                                        const std::vector<Vec>& inputs,
                                        const std::vector<Vec>& labels,
                                        std::vector<double> beta_list, double tolerance = 0.05,
                                        double fd_step = 1e-5) {
    if (inputs.empty() || inputs.size() != labels.size())
        throw ShapeError("check_beta_limit: bad batch");
    if (topo.lateral_prefactor != 1.0)
        throw DomainError("check_beta_limit assumes unit lateral prefactor");
    const int P = topo.depth();
    const double T = static_cast<double>(inputs.size());

    BetaLimitResult out;
    out.betas = beta_list;
    auto inconclusive = [&](const std::string& why) {
        out.report = OracleReport::make("beta-limit", why, 0.0, tolerance, true);
        return out;
    };

    // Optimize laterals at beta = 0: L^(p) <- mean_t r_t r_t^T, damped.
    for (int it = 0; it < 2000; ++it) {
        std::vector<Mat> mean_outer;
        for (int p = 1; p <= P; ++p) mean_outer.push_back(Mat::Zero(topo.size(p), topo.size(p)));
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            auto fp = interior_fixed_point(topo, par, inputs[t], 0.0, nullptr);
            if (!fp) return inconclusive("boundary-saturated fixed point while optimizing L");
            for (int p = 1; p <= P; ++p) {
                const Vec& r = (*fp)[static_cast<std::size_t>(p) - 1];
                mean_outer[static_cast<std::size_t>(p) - 1] += (r * r.transpose()) / T;
            }
        }
        double gap = 0.0;
        for (int p = 1; p <= P; ++p) {
            const Mat diff = mean_outer[static_cast<std::size_t>(p) - 1] - par.L(p);
            gap = std::max(gap, diff.lpNorm<Eigen::Infinity>());
            par.L(p) += 0.7 * diff;
        }
        if (gap < 1e-11) break;
    }
    {
        double resid = 0.0;
        std::vector<Mat> mean_outer;
        for (int p = 1; p <= P; ++p) mean_outer.push_back(Mat::Zero(topo.size(p), topo.size(p)));
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            auto fp = interior_fixed_point(topo, par, inputs[t], 0.0, nullptr);
            if (!fp) return inconclusive("boundary-saturated fixed point after optimizing L");
            for (int p = 1; p <= P; ++p) {
                const Vec& r = (*fp)[static_cast<std::size_t>(p) - 1];
                mean_outer[static_cast<std::size_t>(p) - 1] += (r * r.transpose()) / T;
            }
        }
        for (int p = 1; p <= P; ++p) {
            const double fb = (p < P) ? topo.gamma : 0.0;
            const double coef = std::pow(topo.gamma, p - P) * (1.0 + fb) * topo.c(p);
            resid = std::max(resid, coef * (mean_outer[static_cast<std::size_t>(p) - 1] - par.L(p))
                                         .lpNorm<Eigen::Infinity>());
        }
        out.lateral_residual = resid;
    }

    bool saturated = false;
    // Energy difference and output error as functions of the W/b parameters.
    auto j_value = [&](const Parameters& theta, double beta) {
        double sum = 0.0;
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            auto nudged = interior_fixed_point(topo, theta, inputs[t], beta, &labels[t]);
            auto free_fp = interior_fixed_point(topo, theta, inputs[t], 0.0, nullptr);
            if (!nudged || !free_fp) {
                saturated = true;
                return 0.0;
            }
            const NetworkState sn = state_from_layers(topo, inputs[t], *nudged);
            const NetworkState sf = state_from_layers(topo, inputs[t], *free_fp);
            sum += energy_lt(sn, theta, topo, beta, &labels[t]) -
                   energy_lt(sf, theta, topo, 0.0, nullptr);
        }
        return sum / T;
    };
    auto mse_value = [&](const Parameters& theta) {
        double sum = 0.0;
        for (std::size_t t = 0; t < inputs.size(); ++t) {
            auto free_fp = interior_fixed_point(topo, theta, inputs[t], 0.0, nullptr);
            if (!free_fp) {
                saturated = true;
                return 0.0;
            }
            sum += 2.0 * ((*free_fp)[static_cast<std::size_t>(P) - 1] - labels[t]).squaredNorm();
        }
        return sum / T;
    };

    // Central differences over every W and b entry, laterals held fixed.
    auto gradient = [&](auto&& f) {
        std::vector<double> g;
        Parameters theta = par;
        for (int p = 1; p <= P; ++p) {
            Mat& w = theta.W(p);
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = 0; j < w.cols(); ++j) {
                    const double keep = w(i, j);
                    w(i, j) = keep + fd_step;
                    const double up = f(theta);
                    w(i, j) = keep - fd_step;
                    const double dn = f(theta);
                    w(i, j) = keep;
                    g.push_back((up - dn) / (2.0 * fd_step));
                }
            Vec& b = theta.B(p);
            for (Eigen::Index i = 0; i < b.size(); ++i) {
                const double keep = b(i);
                b(i) = keep + fd_step;
                const double up = f(theta);
                b(i) = keep - fd_step;
                const double dn = f(theta);
                b(i) = keep;
                g.push_back((up - dn) / (2.0 * fd_step));
            }
        }
        return g;
    };

    const std::vector<double> g_mse = gradient([&](const Parameters& t) { return mse_value(t); });
    if (saturated) return inconclusive("boundary-saturated fixed point in the error gradient");
    double mse_norm = 0.0;
    for (double v : g_mse) mse_norm += v * v;
    mse_norm = std::sqrt(mse_norm);
    if (mse_norm == 0.0) return inconclusive("zero error gradient");

    for (double beta : beta_list) {
        const std::vector<double> g_j =
            gradient([&](const Parameters& t) { return j_value(t, beta) / beta; });
        if (saturated) return inconclusive("boundary-saturated fixed point in the nudged phase");
        double diff = 0.0;
        for (std::size_t k = 0; k < g_j.size(); ++k) {
            const double d = g_j[k] - g_mse[k];
            diff += d * d;
        }
        out.rel_errors.push_back(std::sqrt(diff) / mse_norm);
    }

    double largest_beta = beta_list.front(), smallest_beta = beta_list.front();
    double err_at_largest = out.rel_errors.front(), err_at_smallest = out.rel_errors.front();
    for (std::size_t k = 0; k < beta_list.size(); ++k) {
        if (beta_list[k] > largest_beta) {
            largest_beta = beta_list[k];
            err_at_largest = out.rel_errors[k];
        }
        if (beta_list[k] < smallest_beta) {
            smallest_beta = beta_list[k];
            err_at_smallest = out.rel_errors[k];
        }
    }
    std::ostringstream inst;
    inst << "layers";
    for (int n : topo.layer_sizes) inst << ' ' << n;
    inst << " T=" << inputs.size() << " Lresid=" << out.lateral_residual << " errs";
    for (std::size_t k = 0; k < beta_list.size(); ++k)
        inst << ' ' << beta_list[k] << ':' << out.rel_errors[k];
    const bool shrinks = beta_list.size() < 2 || err_at_smallest < err_at_largest;
    // Encode the shrink requirement by inflating the measurement when violated.
    const double measured = shrinks ? err_at_smallest : std::max(err_at_smallest, tolerance * 2);
    out.report = OracleReport::make("beta-limit", inst.str(), measured, tolerance);
    return out;
}

struct EnergyDescentResult {
    OracleReport report;
    std::vector<std::pair<double, long>> violations_by_step;  // (step size, count)
    double largest_monotone_step = 0.0;
};

/// Scans relaxation trajectories for energy increases beyond `slack`. The
/// first step size in the list is the one the report judges; larger entries
/// just probe where monotonicity breaks.
inline EnergyDescentResult check_energy_descent(const NetworkTopology& topo,
                                                const Parameters& par, const Vec& input,
                                                const std::vector<double>& step_list,
                                                int steps = 500, double beta = 0.0,
                                                const Vec* z = nullptr, double slack = 1e-10) {
    EnergyDescentResult out;
    for (double eps : step_list) {
        NetworkState s = midpoint_state(topo, input);
        double prev = energy_lt(s, par, topo, beta, z);
        long violations = 0;
        for (int k = 0; k < steps; ++k) {
            for (int p = 1; p <= topo.depth(); ++p) {
                const auto up = static_cast<std::size_t>(p);
                s.u[up] += eps * layer_drive(s, par, topo, p, beta, z);
            }
            for (int p = 1; p <= topo.depth(); ++p) {
                const auto up = static_cast<std::size_t>(p);
                s.r[up] = topo.act.apply(s.u[up]);
            }
            const double e = energy_lt(s, par, topo, beta, z);
            if (e > prev + slack) ++violations;
            prev = e;
        }
        out.violations_by_step.emplace_back(eps, violations);
        if (violations == 0 && eps > out.largest_monotone_step) out.largest_monotone_step = eps;
    }
    std::ostringstream inst;
    inst << "steps=" << steps << " largest monotone eps=" << out.largest_monotone_step;
    out.report = OracleReport::make("energy-descent", inst.str(),
                                    static_cast<double>(out.violations_by_step.front().second),
                                    0.0);
    return out;
}

/// The standing battery behind the `verify` CLI subcommand.
inline std::vector<OracleReport> run_oracle_battery(std::uint64_t seed) {
    std::vector<OracleReport> reports;
    std::mt19937_64 gen(seed);
    auto random_mat = [&](int rows, int cols) {
        Mat m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = uniform_in(gen, -1.0, 1.0);
        return m;
    };

    {
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            const int m = 1 + static_cast<int>(uniform_index(gen, 6));
            const int n = 1 + static_cast<int>(uniform_index(gen, 6));
            const int T = 1 + static_cast<int>(uniform_index(gen, 10));
            worst = std::max(worst, check_duality_identity(random_mat(m, T), random_mat(n, T)).measured);
        }
        reports.push_back(OracleReport::make("duality-identity", "100 random instances", worst, 1e-10));
    }
    {
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const int n = 2 + static_cast<int>(uniform_index(gen, 4));
            const int kk = 1 + static_cast<int>(uniform_index(gen, 3));
            const int T = 1 + static_cast<int>(uniform_index(gen, 6));
            const Mat x = random_mat(n, T), z = random_mat(kk, T);
            const Mat target = 0.5 * (x.transpose() * x + z.transpose() * z);
            worst = std::max(worst,
                             (oracle_optimal_ry(x, z, T) - target).lpNorm<Eigen::Infinity>());
        }
        reports.push_back(OracleReport::make("optimal-ry-full-rank", "20 random instances", worst, 1e-12));
    }
    {
        for (int k = 0; k < 3; ++k) {
            std::vector<int> sizes{5 + static_cast<int>(uniform_index(gen, 3)),
                                   4 + static_cast<int>(uniform_index(gen, 3)),
                                   3 + static_cast<int>(uniform_index(gen, 2))};
            NetworkTopology topo = NetworkTopology::make(sizes, 1.0);
            Parameters par = init_params(topo, gen(), WeightInit::fan_uniform_small);
            std::vector<Vec> xs, zs;
            for (int t = 0; t < 3; ++t) {
                Vec x(sizes[0]);
                for (int i = 0; i < sizes[0]; ++i) x(i) = uniform_in(gen, 0.0, 0.12);
                xs.push_back(x);
                Vec z(sizes[2]);
                for (int i = 0; i < sizes[2]; ++i) z(i) = uniform_in(gen, 0.35, 0.65);
                zs.push_back(z);
            }
            reports.push_back(check_beta_limit(topo, par, xs, zs, {1e-1, 1e-3}).report);
        }
    }
    {
        long worst = 0;
        double largest = 0.0;
        for (int k = 0; k < 10; ++k) {
            NetworkTopology topo = NetworkTopology::make({10, 8, 4}, 1.0);
            Parameters par = init_params(topo, gen());
            Vec x(10);
            for (int i = 0; i < 10; ++i) x(i) = uniform_unit(gen);
            auto res = check_energy_descent(topo, par, x, {0.01}, 500);
            worst = std::max(worst, res.violations_by_step.front().second);
            largest = std::max(largest, res.largest_monotone_step);
        }
        reports.push_back(OracleReport::make(
            "energy-descent", "10 random 10-8-4 nets, eps=0.01, 500 steps",
            static_cast<double>(worst), 0.0));
    }
    return reports;
}

}  // namespace csm::verify
