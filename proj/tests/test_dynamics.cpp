#include "csm/dynamics.hpp"

#include <catch2/catch_amalgamated.hpp>

#include "csm/verify.hpp"
#include "testutil.hpp"

#include <cmath>
#include <sstream>

using namespace csm;

namespace {

// Interior state (r = u, all strictly inside the clamp) for gradient checks.
NetworkState interior_state(const NetworkTopology& topo, const Vec& x, std::mt19937_64& gen) {
    NetworkState s = make_state(topo, x);
    for (int p = 1; p <= topo.depth(); ++p) {
        s.u[static_cast<std::size_t>(p)] = testutil::random_vec(topo.size(p), gen, 0.2, 0.8);
        s.r[static_cast<std::size_t>(p)] = s.u[static_cast<std::size_t>(p)];
    }
    return s;
}

}  // namespace

TEST_CASE("drive vanishes at the zero state with zero parameters", "[dynamics]") {
    NetworkTopology topo = NetworkTopology::make({3, 4, 2});
    Parameters par = init_params(topo, 1);
    for (Mat& w : par.w) w.setZero();
    for (Mat& l : par.l) l.setZero();
    NetworkState s = make_state(topo, Vec::Zero(3));
    CHECK(layer_drive(s, par, topo, 1, 0.0).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(layer_drive(s, par, topo, 2, 0.0).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("single-layer net: u = W r0 + b is a free fixed point", "[dynamics]") {
    // With one layer the default lateral coefficient is 0, so the drive is
    // -u + W r0 + b exactly.
    NetworkTopology topo = NetworkTopology::make({4, 3});
    std::mt19937_64 gen(5);
    Parameters par = init_params(topo, 5);
    par.B(1) = testutil::random_vec(3, gen, -0.1, 0.1);
    Vec x = testutil::random_vec(4, gen, 0.0, 1.0);

    NetworkState s = make_state(topo, x);
    s.u[1] = par.W(1) * x + par.B(1);
    s.r[1] = topo.act.apply(s.u[1]);
    CHECK(layer_drive(s, par, topo, 1, 0.0).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("drive equals the scaled negative energy gradient at interior points",
          "[dynamics]") {
    std::mt19937_64 gen(17);
    for (double gamma : {1.0, 0.7}) {
        NetworkTopology topo = NetworkTopology::make({5, 4, 3}, gamma);
        Parameters par = init_params(topo, 23, WeightInit::fan_uniform_small);
        par.B(1) = testutil::random_vec(4, gen, -0.05, 0.05);
        par.B(2) = testutil::random_vec(3, gen, -0.05, 0.05);
        Vec x = testutil::random_vec(5, gen, 0.0, 0.3);
        Vec z = testutil::random_vec(3, gen, 0.3, 0.7);
        NetworkState s = interior_state(topo, x, gen);

        const double beta = 0.4;
        const double h = 1e-6;
        for (int p = 1; p <= 2; ++p) {
            const Vec drive = layer_drive(s, par, topo, p, beta, &z);
            const double scale = 0.5 * std::pow(gamma, topo.depth() - p);
            for (int i = 0; i < topo.size(p); ++i) {
                NetworkState sp = s, sm = s;
                sp.r[static_cast<std::size_t>(p)](i) += h;
                sp.u[static_cast<std::size_t>(p)](i) += h;
                sm.r[static_cast<std::size_t>(p)](i) -= h;
                sm.u[static_cast<std::size_t>(p)](i) -= h;
                const double fd = (energy_lt(sp, par, topo, beta, &z) -
                                   energy_lt(sm, par, topo, beta, &z)) /
                                  (2.0 * h);
                CHECK(std::abs(drive(i) + scale * fd) <
                      1e-5 * std::max(1.0, std::abs(drive(i))));
            }
        }
    }
}

TEST_CASE("relax finds the all-zero fixed point immediately", "[dynamics]") {
    NetworkTopology topo = NetworkTopology::make({3, 4, 2});
    Parameters par = init_params(topo, 2);  // identity L, zero b
    NetworkState s = make_state(topo, Vec::Zero(3));
    PhaseConfig phase{0.0, 0.5, 100, 1e-9};
    RelaxResult res = relax(s, par, topo, phase);
    CHECK(res.converged);
    CHECK(res.iterations <= 2);
    CHECK(res.residual == 0.0);
    CHECK(res.state.r[1] == Vec::Zero(4));
}

TEST_CASE("relax agrees with the interior closed-form solve", "[dynamics]") {
    std::mt19937_64 gen(31);
    NetworkTopology topo = NetworkTopology::make({6, 5, 4});
    Parameters par = init_params(topo, 77, WeightInit::fan_uniform_small);
    par.B(1) = Vec::Constant(5, 0.3);
    par.B(2) = Vec::Constant(4, 0.3);
    Vec x = testutil::random_vec(6, gen, 0.0, 0.2);
    Vec z = testutil::random_vec(4, gen, 0.3, 0.7);

    for (double beta : {0.0, 0.5}) {
        auto solved = verify::interior_fixed_point(topo, par, x, beta, &z);
        REQUIRE(solved.has_value());
        PhaseConfig phase{0.0, 0.5, 20000, 1e-12};
        RelaxResult res = relax(midpoint_state(topo, x), par, topo, phase, beta, &z);
        REQUIRE(res.converged);
        for (int p = 1; p <= 2; ++p)
            CHECK((res.state.u[static_cast<std::size_t>(p)] -
                   (*solved)[static_cast<std::size_t>(p) - 1])
                      .lpNorm<Eigen::Infinity>() < 1e-8);
    }
}

TEST_CASE("energy closed forms", "[dynamics]") {
    NetworkTopology topo = NetworkTopology::make({3, 4, 2});
    Parameters par = init_params(topo, 4);
    for (Mat& w : par.w) w.setZero();
    for (Mat& l : par.l) l.setZero();
    NetworkState zero = make_state(topo, Vec::Zero(3));
    CHECK(energy_lt(zero, par, topo, 0.0) == 0.0);

    // The nudge term is exactly the beta difference.
    std::mt19937_64 gen(9);
    Parameters par2 = init_params(topo, 4);
    NetworkState s = interior_state(topo, testutil::random_vec(3, gen), gen);
    Vec z = testutil::random_vec(2, gen);
    const double e0 = energy_lt(s, par2, topo, 0.0);
    const double e1 = energy_lt(s, par2, topo, 0.75, &z);
    const double nudge = 2.0 * 0.75 * (s.r[2] - z).squaredNorm();
    CHECK(std::abs((e1 - e0) - nudge) < 1e-12 * std::max(1.0, std::abs(e1)));

    CHECK_THROWS_AS(energy_lt(s, par2, topo, 0.5, nullptr), ShapeError);
}

TEST_CASE("energy is non-increasing along a small-step trajectory", "[dynamics]") {
    std::mt19937_64 gen(12);
    NetworkTopology topo = NetworkTopology::make({6, 5, 3});
    Parameters par = init_params(topo, 6);
    Vec x = testutil::random_vec(6, gen);
    Vec z = testutil::random_vec(3, gen, 0.0, 1.0);
    NetworkState s = midpoint_state(topo, x);
    PhaseConfig phase{0.0, 0.05, 1, 1e-14};
    double prev = energy_lt(s, par, topo, 0.3, &z);
    for (int k = 0; k < 300; ++k) {
        RelaxResult res = relax(std::move(s), par, topo, phase, 0.3, &z);
        s = std::move(res.state);
        const double e = energy_lt(s, par, topo, 0.3, &z);
        CHECK(e <= prev + 1e-10);
        prev = e;
    }
}

TEST_CASE("nudging toward the free fixed point changes nothing", "[dynamics]") {
    std::mt19937_64 gen(3);
    NetworkTopology topo = NetworkTopology::make({5, 6, 4});
    Parameters par = init_params(topo, 15);
    Vec x = testutil::random_vec(5, gen);
    PhaseConfig tight{0.0, 0.5, 50000, 1e-11};
    RelaxResult free_fp = relax(midpoint_state(topo, x), par, topo, tight);
    REQUIRE(free_fp.converged);
    const Vec z = free_fp.state.r[2];
    RelaxResult nudged = relax(midpoint_state(topo, x), par, topo, tight, 1.0, &z);
    REQUIRE(nudged.converged);
    for (int p = 1; p <= 2; ++p)
        CHECK((nudged.state.r[static_cast<std::size_t>(p)] -
               free_fp.state.r[static_cast<std::size_t>(p)])
                  .lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("rates stay inside the activation bounds through relaxation", "[dynamics]") {
    std::mt19937_64 gen(8);
    NetworkTopology topo = NetworkTopology::make({6, 8, 3});
    Parameters par = init_params(topo, 99);
    par.W(1) *= 3.0;  // push units against the clamp
    Vec x = testutil::random_vec(6, gen);
    Vec z = testutil::random_vec(3, gen, 0.0, 1.0);
    PhaseConfig phase{0.0, 0.5, 40, 1e-9};
    RelaxResult res = relax(midpoint_state(topo, x), par, topo, phase, 1.0, &z);
    for (int p = 1; p <= 2; ++p) CHECK(topo.act.contains(res.state.r[static_cast<std::size_t>(p)]));
}

TEST_CASE("divergence reports layer and iteration", "[dynamics]") {
    NetworkTopology topo = NetworkTopology::make({2, 3, 2});
    Parameters par = init_params(topo, 1);
    par.B(1).setConstant(1e308);
    PhaseConfig phase{0.0, 2.0, 100, 1e-9};
    try {
        relax(make_state(topo, Vec::Zero(2)), par, topo, phase);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.layer >= 1);
        CHECK(e.iteration >= 0);
    }
}

TEST_CASE("nudged drive requires a label", "[dynamics]") {
    NetworkTopology topo = NetworkTopology::make({2, 3, 2});
    Parameters par = init_params(topo, 1);
    NetworkState s = make_state(topo, Vec::Zero(2));
    CHECK_THROWS_AS(layer_drive(s, par, topo, 2, 1.0, nullptr), ShapeError);
    CHECK_NOTHROW(layer_drive(s, par, topo, 2, 0.0, nullptr));
}

TEST_CASE("residual decreases after an initial transient at image scale", "[dynamics]") {
    std::mt19937_64 gen(21);
    NetworkTopology topo = NetworkTopology::make({784, 500, 10});
    Parameters par = init_params(topo, 2024);
    Vec x = testutil::random_vec(784, gen);

    std::ostringstream trace;
    PhaseConfig phase{0.0, 0.5, 100, 1e-12};
    relax(midpoint_state(topo, x), par, topo, phase, nullptr, &trace);

    std::istringstream in(trace.str());
    std::string line;
    std::getline(in, line);  // header
    std::vector<double> residuals;
    while (std::getline(in, line)) {
        const auto c1 = line.find(','), c2 = line.rfind(',');
        residuals.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
    }
    REQUIRE(residuals.size() > 30);
    for (std::size_t k = 10; k + 1 < residuals.size(); ++k)
        CHECK(residuals[k + 1] <= residuals[k] * (1.0 + 1e-9));
    CHECK(residuals.back() < residuals[10] * 1e-2);
}

TEST_CASE("persistent store round-trips and falls back to the midpoint", "[dynamics]") {
    std::mt19937_64 gen(13);
    NetworkTopology topo = NetworkTopology::make({4, 5, 3});
    Parameters par = init_params(topo, 44);
    Vec x = testutil::random_vec(4, gen);

    PersistentParticleStore store;
    NetworkState fresh = persistent_init(store, 7, topo, x);
    CHECK(fresh.r[1] == Vec::Constant(5, 0.5));
    CHECK(fresh.r[2] == Vec::Constant(3, 0.5));

    PhaseConfig phase{0.0, 0.5, 500, 1e-9};
    RelaxResult res = relax(std::move(fresh), par, topo, phase);
    store.save(7, res.state, topo.act);
    CHECK(store.contains(7));
    NetworkState back = persistent_init(store, 7, topo, x);
    CHECK(back.r[1] == res.state.r[1]);
    CHECK(back.r[2] == res.state.r[2]);
    CHECK(back.u[1] == res.state.r[1]);

    NetworkState bad = res.state;
    bad.r[1](0) = 1.5;
    CHECK_THROWS_AS(store.save(8, bad, topo.act), DomainError);
}

TEST_CASE("trace emits iteration, residual, energy rows", "[dynamics]") {
    NetworkTopology topo = NetworkTopology::make({3, 4, 2});
    Parameters par = init_params(topo, 5);
    std::ostringstream trace;
    PhaseConfig phase{0.0, 0.5, 10, 1e-9};
    std::mt19937_64 gen(1);
    RelaxResult res = relax(midpoint_state(topo, testutil::random_vec(3, gen)), par, topo, phase,
                            nullptr, &trace);
    std::istringstream in(trace.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "iteration,residual,energy");
    int rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == res.iterations + 1);
}
