#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"
#include "dgmflow/error.hpp"
#include "dgmflow/solver.hpp"

using namespace dgmflow;

namespace {

constexpr double pi = std::numbers::pi;

// dφ/dt = −φ on Y = [0, 1], no coupling.
ModelSpec decay_model() {
    ModelSpec m;
    m.name = "decay";
    m.r = 0;
    m.r2 = 1;
    m.h = [](double, std::span<const double>, std::span<const double> phi, std::span<double> out) { out[0] -= phi[0]; };
    m.Y.dim = 1;
    m.Y.halfspaces = {{{1.0}, 1.0, "phi <= 1"}, {{-1.0}, 0.0, "phi >= 0"}};
    m.Y.lo = {0.0};
    m.Y.hi = {1.0};
    return m;
}

ModelSpec still_model() {
    ModelSpec m = decay_model();
    m.h = [](double, std::span<const double>, std::span<const double>, std::span<double>) {};
    return m;
}

Ensemble manual(PartitionPtr p, std::vector<double> a, std::size_t n, std::vector<double> states) {
    Ensemble e;
    e.partition = std::move(p);
    e.a = std::move(a);
    e.n = n;
    e.r2 = 1;
    e.states = std::move(states);
    return e;
}

struct Kuramoto {
    ModelSpec model;
    std::vector<DiscretizedDGM> dgms;
    Ensemble init;
};

Kuramoto kuramoto_ring(std::size_t m, std::size_t n) {
    Kuramoto k;
    k.model = builtin_model("kuramoto", {{"omega_amp", 0.5}});
    const auto p = make_partition(VertexSpace::circle(), m);
    k.dgms = {discretize_dgm(catalog("ring"), p, n)};
    k.init = discretize_initial(initial_arc(0.0, pi, 2.0 * pi, 2.0 * pi), p, n);
    return k;
}

}  // namespace

TEST_CASE("initial discretization: uniform, density and point data") {
    const auto p = make_partition(VertexSpace::interval(), 4);
    const auto Y = decay_model().Y;
    const auto e = discretize_initial(initial_uniform(Y), p, 3);
    REQUIRE(e.states.size() == 12);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(e.a[i] == doctest::Approx(1.0));
        for (std::size_t j = 0; j < 3; ++j) CHECK(e.states[i * 3 + j] == doctest::Approx((j + 1) / 4.0));
    }
    const auto lin = discretize_initial(
        with_density(initial_point({0.3}), [](std::span<const double> x) { return 2.0 * x[0]; }), p, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(lin.a[i] == doctest::Approx(2.0 * (i + 0.5) / 4.0).epsilon(1e-12));
        CHECK(lin.states[2 * i] == 0.3);
        CHECK(lin.states[2 * i + 1] == 0.3);
    }
    CHECK_THROWS_AS(discretize_initial(with_density(initial_point({0.3}), [](auto) { return 2.0; }), p, 2), ConfigError);
}

TEST_CASE("RK4 reproduces exponential decay") {
    const auto p = make_partition(VertexSpace::interval(), 1);
    const auto init = manual(p, {1.0}, 1, {1.0});
    const auto traj = simulate(decay_model(), {}, init, {1.0, 1e-3, 100});
    CHECK(std::abs(traj.states.back()[0] - std::exp(-1.0)) <= 1e-8);
    CHECK(traj.times.size() == 11);
    const auto fib = ensemble_measure(traj, 1.0);
    REQUIRE(fib.fibers[0].size() == 1);
    CHECK(fib.fibers[0].weight(0) == 1.0);
    CHECK(fib.fibers[0].atom(0)[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-8));
    CHECK_THROWS_AS(ensemble_measure(traj, 0.55), Error);

    const auto still = simulate(still_model(), {}, init, {1.0, 0.01});
    CHECK(still.states.back()[0] == 1.0);
}

TEST_CASE("time grid validation") {
    CHECK(TimeGrid{1.0, 0.0}.steps() == 1000);
    CHECK(TimeGrid{5.0, 1e-3}.steps() == 5000);
    CHECK_THROWS_AS(TimeGrid({1.0, 0.3}).steps(), ConfigError);
    CHECK_THROWS_AS(TimeGrid({-1.0, 0.1}).steps(), ConfigError);
}

TEST_CASE("two-oscillator system matches the hand-expanded sum") {
    // cells [0,½) and [½,1); each fiber puts weight 1 in both cells, so C = 1 everywhere
    const auto p = make_partition(VertexSpace::circle(), 2);
    DiscreteMeasure both(1);
    both.add({0.25}, 1.0);
    both.add({0.75}, 1.0);
    const auto dgm = discretize_dgm(constant_dgm("pair", VertexSpace::circle(), Atomic{both}), p, 2);
    const auto model = builtin_model("kuramoto", {{"omega", 0.2}});
    const auto init = manual(p, {1.0, 1.0}, 1, {0.1, 1.3});
    auto rhs = build_rhs(model, {dgm}, init);
    std::vector<double> d(2);
    rhs(0.0, init.states, d);
    CHECK(d[0] == doctest::Approx(0.2 + std::sin(1.3 - 0.1)));
    CHECK(d[1] == doctest::Approx(0.2 + std::sin(0.1 - 1.3)));
}

TEST_CASE("two oscillators in one cell synchronize") {
    const auto p = make_partition(VertexSpace::circle(), 1);
    const auto model = builtin_model("kuramoto");
    const auto dgm = discretize_dgm(catalog("complete_circle"), p, 4);
    const auto traj = simulate(model, {dgm}, manual(p, {1.0}, 2, {0.0, 2.0}), {3.0, 1e-2});
    double prev = INFINITY;
    for (const auto& s : traj.states) {
        const double gap = s[1] - s[0];
        CHECK(gap < prev);
        prev = gap;
    }
}

TEST_CASE("SIS keeps S + I per particle") {
    const auto model = builtin_model("sis", {{"beta", 2.0}, {"gamma_amp", 0.4}});
    const auto p = make_partition(VertexSpace::interval(), 4);
    const auto dgms = std::vector{discretize_dgm(catalog("complete"), p, 16)};
    const auto init = discretize_initial(initial_segment({0.95, 0.05}, {0.5, 0.5}), p, 16);
    const auto traj = simulate(model, dgms, init, {5.0, 1e-3, 1000});
    double drift = 0.0;
    for (const auto& s : traj.states)
        for (std::size_t k = 0; k < s.size(); k += 2)
            drift = std::max(drift, std::abs(s[k] + s[k + 1] - init.states[k] - init.states[k + 1]));
    CHECK(drift <= 1e-12);
    for (double t : traj.times) {
        const auto f = ensemble_measure(traj, t);
        for (std::size_t i = 0; i < 4; ++i) CHECK(f.fibers[i].total_mass() == doctest::Approx(init.a[i]).epsilon(1e-14));
    }
}

TEST_CASE("leaving Y is an error: LV below the prey threshold") {
    const auto model = builtin_model("lv", {{"Lambda1", 0.5}}, false);
    const auto p = make_partition(VertexSpace::interval(), 2);
    const std::vector dgms = {discretize_dgm(catalog("tent"), p, 4), discretize_dgm(catalog("binary_tree"), p, 4)};
    const auto init = discretize_initial(initial_point({0.45, 0.1}), p, 4);
    CHECK_THROWS_WITH_AS(simulate(model, dgms, init, {5.0, 1e-3}), doctest::Contains("left Y"), Error);
}

TEST_CASE("flow map: identity, inverse and analytic decay") {
    auto k = kuramoto_ring(8, 8);
    CoupledSystem sys(k.model, k.dgms, k.init);
    const auto traj = integrate(std::ref(sys), k.init, {1.0, 1e-3});
    const std::vector<double> phi = {1.0};
    CHECK(flow_map(sys.op(), traj, 3, 0.4, 0.4, phi)[0] == 1.0);
    const auto fwd = flow_map(sys.op(), traj, 3, 0.0, 1.0, phi);
    const auto back = flow_map(sys.op(), traj, 3, 1.0, 0.0, fwd);
    CHECK(std::abs(back[0] - 1.0) <= 1e-6);
    CHECK(std::abs(fwd[0] - 1.0) > 1e-3);

    const auto p = make_partition(VertexSpace::interval(), 1);
    const auto init = manual(p, {1.0}, 1, {0.5});
    CoupledSystem decay(decay_model(), {}, init);
    const auto dt = integrate(std::ref(decay), init, {1.0, 1e-3});
    const std::vector<double> one = {1.0};
    CHECK(std::abs(flow_map(decay.op(), dt, 0, 0.0, 1.0, one)[0] - std::exp(-1.0)) <= 1e-10);
}

TEST_CASE("particles follow the flow of their own ensemble") {
    auto k = kuramoto_ring(4, 4);
    CoupledSystem sys(k.model, k.dgms, k.init);
    const auto traj = integrate(std::ref(sys), k.init, {1.0, 1e-3});
    const auto phi = traj.particle(0, 2, 1);
    const auto end = flow_map(sys.op(), traj, 2, 0.0, 1.0, phi);
    CHECK(std::abs(end[0] - traj.particle(traj.times.size() - 1, 2, 1)[0]) <= 1e-6);
}

TEST_CASE("Picard iteration agrees with direct integration") {
    auto k = kuramoto_ring(8, 8);
    const TimeGrid grid{1.0, 1e-3, 100};
    const auto direct = simulate(k.model, k.dgms, k.init, grid);
    const auto pic = picard_solve(k.model, k.dgms, k.init, grid);
    CHECK(pic.converged);
    CHECK(d_infinity(ensemble_measure(direct, 1.0), ensemble_measure(pic.trajectory, 1.0)) <= 1e-5);
    for (std::size_t r = 2; r < pic.residuals.size(); ++r) CHECK(pic.residuals[r] <= pic.residuals[r - 1] * (1 + 1e-9) + 1e-13);

    const auto p = make_partition(VertexSpace::interval(), 2);
    const auto init = manual(p, {1.0, 1.0}, 2, {0.9, 0.6, 0.3, 0.2});
    const auto free = picard_solve(decay_model(), {}, init, {1.0, 1e-2});
    CHECK(free.iterations == 1);
    CHECK(free.residuals.back() == 0.0);
}

TEST_CASE("CSV exports") {
    const auto p = make_partition(VertexSpace::interval(), 1);
    const auto traj = simulate(decay_model(), {}, manual(p, {1.0}, 1, {1.0}), {1.0, 0.5});
    std::ostringstream os;
    write_trajectory_csv(os, traj);
    CHECK(os.str() == "t,cell,particle,state_1\n0,0,0,1\n0.5,0,0,0.60677083333333337\n1,0,0,0.36817084418402785\n");
    std::ostringstream ds;
    write_distance_csv(ds, {{0.5, 16, 8, 0.125}});
    CHECK(ds.str() == "t,m,n,d_infinity\n0.5,16,8,0.125\n");
}
