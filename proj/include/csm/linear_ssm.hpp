#pragma once

// The linear supervised similarity-matching network: clamped-output training
// with Hebbian/anti-Hebbian rules, a delta rule for the output laterals, and
// free-running joint dynamics for prediction.

#include "csm/common.hpp"

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace csm {

/// Dual-variable weights of the linear network: n inputs, m hidden, k outputs.
struct LinearSsmParams {
    Mat w1;  // m x n
    Mat w2;  // k x m
    Mat l1;  // m x m, symmetric
    Mat l2;  // k x k

    void validate() const {
        if (l1.rows() != l1.cols() || l1 != l1.transpose())
            throw ShapeError("L1 must be symmetric");
        if (w1.rows() != l1.rows() || w2.cols() != l1.rows() || l2.rows() != l2.cols() ||
            l2.rows() != w2.rows())
            throw ShapeError("linear network dimensions inconsistent");
    }

    /// L1 = L2 = I (invertible from the start), W uniform in [-scale, scale].
    static LinearSsmParams init(int n_in, int m_hidden, int k_out, std::uint64_t seed,
                                double scale = 0.1) {
        LinearSsmParams p;
        std::mt19937_64 gen(seed);
        p.w1.resize(m_hidden, n_in);
        for (int i = 0; i < m_hidden; ++i)
            for (int j = 0; j < n_in; ++j) p.w1(i, j) = uniform_in(gen, -scale, scale);
        p.w2.resize(k_out, m_hidden);
        for (int i = 0; i < k_out; ++i)
            for (int j = 0; j < m_hidden; ++j) p.w2(i, j) = uniform_in(gen, -scale, scale);
        p.l1 = Mat::Identity(m_hidden, m_hidden);
        p.l2 = Mat::Identity(k_out, k_out);
        return p;
    }
};

enum class HiddenSolve { direct, flow };

/// Hidden fixed point with the output clamped to z: solves 2 L1 y = W1 x + W2^T z,
/// either directly or by integrating the flow; both routes agree to 1e-8 on
/// well-conditioned instances.
inline Vec lin_relax_hidden(const Vec& x, const Vec& z_label, const LinearSsmParams& par,
                            HiddenSolve method = HiddenSolve::direct, double flow_step = 0.1,
                            double tolerance = 1e-12, int max_iterations = 200000) {
    par.validate();
    if (x.size() != par.w1.cols() || z_label.size() != par.w2.rows())
        throw ShapeError("lin_relax_hidden: input/label size mismatch");
    const Vec rhs = par.w1 * x + par.w2.transpose() * z_label;
    if (method == HiddenSolve::direct) {
        Eigen::LDLT<Mat> ldlt(2.0 * par.l1);
        const Vec y = ldlt.solve(rhs);
        if ((2.0 * par.l1 * y - rhs).lpNorm<Eigen::Infinity>() >
            1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
            throw ConvergenceError("lin_relax_hidden: lateral matrix is singular or ill-conditioned");
        return y;
    }
    Vec y = Vec::Zero(par.l1.rows());
    for (int it = 0; it < max_iterations; ++it) {
        const Vec dy = rhs - 2.0 * par.l1 * y;
        if (dy.lpNorm<Eigen::Infinity>() < tolerance) return y;
        y += flow_step * dy;
        if (!y.allFinite()) throw ConvergenceError("lin_relax_hidden: flow diverged");
    }
    throw ConvergenceError("lin_relax_hidden: flow did not converge");
}

/// One clamped-output training step, all deltas evaluated at the old weights:
///   dW1 = eta (y x^T - W1)        dL1 = eta (y y^T - L1)
///   dW2 = eta (z y^T - W2)        dL2 = eta (W2 y - L2 z) z^T
inline LinearSsmParams lin_train_step(const Vec& x, const Vec& z_label,
                                      const LinearSsmParams& par, double eta) {
    const Vec y = lin_relax_hidden(x, z_label, par);
    LinearSsmParams out = par;
    out.w1 += eta * (y * x.transpose() - par.w1);
    out.l1 += eta * (y * y.transpose() - par.l1);
    out.w2 += eta * (z_label * y.transpose() - par.w2);
    out.l2 += eta * ((par.w2 * y - par.l2 * z_label) * z_label.transpose());
    return out;
}

/// Free-running prediction: integrates the joint flow
///   dy = W1 x - 2 L1 y + W2^T z,   dz = W2 y - L2 z
/// and returns z at the fixed point.
inline Vec lin_predict(const Vec& x, const LinearSsmParams& par, double flow_step = 0.1,
                       double tolerance = 1e-9, int max_iterations = 200000) {
    par.validate();
    if (x.size() != par.w1.cols()) throw ShapeError("lin_predict: input size mismatch");
    const Vec drive_in = par.w1 * x;
    Vec y = Vec::Zero(par.l1.rows());
    Vec z = Vec::Zero(par.l2.rows());
    for (int it = 0; it < max_iterations; ++it) {
        const Vec dy = drive_in - 2.0 * par.l1 * y + par.w2.transpose() * z;
        const Vec dz = par.w2 * y - par.l2 * z;
        const double resid = std::max(dy.lpNorm<Eigen::Infinity>(), dz.lpNorm<Eigen::Infinity>());
        if (resid < tolerance) return z;
        y += flow_step * dy;
        z += flow_step * dz;
        if (!y.allFinite() || !z.allFinite())
            throw ConvergenceError("lin_predict: joint flow diverged");
    }
    throw ConvergenceError("lin_predict: joint flow did not converge");
}

struct LinearDemoResult {
    std::vector<std::pair<long, double>> mse_curve;        // (step, test MSE)
    std::vector<std::pair<double, double>> scatter;        // (predicted, desired)
    double mse_initial = 0.0;
    double mse_final = 0.0;
    double correlation = 0.0;  // elementwise predicted-vs-desired correlation
};

/// Trains the linear network online on z = A x (A and x uniform in [-1,1],
/// optional Gaussian input noise) and records the test error curve plus a
/// predicted-vs-desired scatter.
inline LinearDemoResult run_linear_demo(std::uint64_t seed, long steps = 20000,
                                        double eta = 0.01, double noise_sigma = 0.0,
                                        int n_in = 5, int m_hidden = 2, int k_out = 2,
                                        int n_test = 200, long record_every = 500) {
    std::mt19937_64 gen(seed);
    Mat a(k_out, n_in);
    for (int i = 0; i < k_out; ++i)
        for (int j = 0; j < n_in; ++j) a(i, j) = uniform_in(gen, -1.0, 1.0);

    auto draw_x = [&]() {
        Vec x(n_in);
        for (int j = 0; j < n_in; ++j) x(j) = uniform_in(gen, -1.0, 1.0);
        return x;
    };
    std::vector<Vec> test_x, test_z;
    for (int t = 0; t < n_test; ++t) {
        test_x.push_back(draw_x());
        test_z.push_back(a * test_x.back());
    }

    LinearSsmParams par = LinearSsmParams::init(n_in, m_hidden, k_out, seed + 1);

    auto test_mse = [&]() {
        double sum = 0.0;
        for (int t = 0; t < n_test; ++t)
            sum += (lin_predict(test_x[static_cast<std::size_t>(t)], par) -
                    test_z[static_cast<std::size_t>(t)])
                       .squaredNorm();
        return sum / static_cast<double>(n_test);
    };

    LinearDemoResult out;
    out.mse_initial = test_mse();
    out.mse_curve.emplace_back(0, out.mse_initial);
    for (long step = 1; step <= steps; ++step) {
        Vec x = draw_x();
        if (noise_sigma > 0.0)
            for (int j = 0; j < n_in; ++j) x(j) += noise_sigma * normal_unit(gen);
        const Vec z = a * x;
        par = lin_train_step(x, z, par, eta);
        if (step % record_every == 0 || step == steps)
            out.mse_curve.emplace_back(step, test_mse());
    }
    out.mse_final = out.mse_curve.back().second;

    // Elementwise scatter and correlation on the test set.
    double sp = 0, sd = 0, spp = 0, sdd = 0, spd = 0;
    long count = 0;
    for (int t = 0; t < n_test; ++t) {
        const Vec zp = lin_predict(test_x[static_cast<std::size_t>(t)], par);
        const Vec& zd = test_z[static_cast<std::size_t>(t)];
        for (int i = 0; i < k_out; ++i) {
            out.scatter.emplace_back(zp(i), zd(i));
            sp += zp(i);
            sd += zd(i);
            spp += zp(i) * zp(i);
            sdd += zd(i) * zd(i);
            spd += zp(i) * zd(i);
            ++count;
        }
    }
    const double nc = static_cast<double>(count);
    const double cov = spd / nc - (sp / nc) * (sd / nc);
    const double vp = spp / nc - (sp / nc) * (sp / nc);
    const double vd = sdd / nc - (sd / nc) * (sd / nc);
    out.correlation = cov / std::sqrt(vp * vd);
    return out;
}

}  // namespace csm
