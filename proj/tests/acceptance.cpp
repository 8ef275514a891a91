// One PASS/FAIL line per acceptance criterion; exit status 1 when any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include "dgmflow/error.hpp"
#include "dgmflow/experiments.hpp"

using namespace dgmflow;

namespace {

constexpr double pi = std::numbers::pi;

struct Outcome {
    bool pass;
    std::string detail;
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

int failures = 0;

void criterion(int id, const char* title, double budget_s, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o{false, ""};
    try {
        o = body();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < budget_s;
    const bool ok = o.pass && in_time;
    if (!ok) ++failures;
    std::printf("%s criterion %d: %s | %s | %.1f s (budget %.0f s%s)\n", ok ? "PASS" : "FAIL", id, title,
                o.detail.c_str(), secs, budget_s, in_time ? "" : ", exceeded");
    std::fflush(stdout);
}

// Model, DGMs and initial data used by the invariance and step-halving checks.
struct Case {
    ModelSpec model;
    std::vector<DiscretizedDGM> dgms;
    Ensemble init;
};

Case make_case(const std::string& name, std::size_t m, std::size_t n, const std::map<std::string, double>& params = {}) {
    Case c;
    c.model = builtin_model(name, params);
    const auto p = make_partition(catalog(c.model.default_dgms.front()).space, m);
    for (const auto& d : c.model.default_dgms) c.dgms.push_back(discretize_dgm(catalog(d), p, n));
    InitialCondition ic;
    if (name == "kuramoto") ic = initial_arc(0.0, pi, 2.0 * pi, 2.0 * pi);
    else if (name == "sis") ic = initial_segment({0.95, 0.05}, {0.5, 0.5});
    else if (name == "seirs") ic = initial_segment({0.7, 0.1, 0.1, 0.1}, {0.1, 0.1, 0.1, 0.1});
    else if (name == "lv") ic = initial_segment({0.2, 0.3}, {1.5, 2.0});
    else {
        ic = {"hk", [](std::span<const double> x) -> MeasureDescriptor {
                  return UniformSegment{{-0.9 + 0.5 * x[0]}, {0.4 + 0.5 * x[0]}, 1.0};
              }};
    }
    c.init = discretize_initial(ic, p, n);
    return c;
}

double max_violation(const EnsembleTrajectory& tr, const InvariantPolytope& Y) {
    double v = 0.0;
    for (const auto& s : tr.states)
        for (std::size_t k = 0; k < s.size(); k += tr.r2)
            v = std::max(v, Y.violation(std::span<const double>(s).subspan(k, tr.r2)));
    return v;
}

Outcome metric_oracles() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> U(-3.0, 3.0), W(0.05, 1.0);
    double bl_err = 0.0;
    for (int t = 0; t < 100; ++t) {
        std::vector<double> a = {U(rng), U(rng)}, b = {U(rng), U(rng)};
        const double d = std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
        bl_err = std::max(bl_err, std::abs(bl_distance(DiscreteMeasure::dirac(a), DiscreteMeasure::dirac(b)) - 2 * d / (2 + d)));
    }
    const double kr = kr_distance(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0}));
    double tv_err = 0.0;
    for (int t = 0; t < 50; ++t) {
        const int k = 2 + t % 7;
        std::vector<double> w(k), v(k);
        double sw = 0.0, sv = 0.0;
        for (int j = 0; j < k; ++j) {
            sw += (w[j] = W(rng));
            sv += (v[j] = W(rng));
        }
        DiscreteMeasure p(1), q(1);
        double half = 0.0;
        for (int j = 0; j < k; ++j) {
            const double x = U(rng);
            p.add({x}, w[j] / sw);
            q.add({x}, v[j] / sv);
            half += 0.5 * std::abs(w[j] / sw - v[j] / sv);
        }
        tv_err = std::max(tv_err, std::abs(tv_distance(p, q) - half));
    }
    return {bl_err <= 1e-8 && std::abs(kr - 1.0) <= 1e-12 && tv_err <= 1e-14,
            "max |d_BL - 2d/(2+d)| = " + num(bl_err) + ", d_KR(d0,d1) = " + num(kr) + ", max |d_TV - L1/2| = " + num(tv_err)};
}

Outcome product_lift_inequality() {
    std::mt19937_64 rng(7);
    std::uniform_int_distribution<int> M(1, 8), A(1, 10);
    std::uniform_real_distribution<double> Y(0.0, 1.0), Wt(0.05, 1.0);
    double slack = INFINITY;
    for (int t = 0; t < 25; ++t) {
        const auto p = make_partition(VertexSpace::interval(), static_cast<std::size_t>(M(rng)));
        auto random_fibers = [&] {
            std::vector<DiscreteMeasure> f;
            for (std::size_t i = 0; i < p->size(); ++i) {
                DiscreteMeasure mu(1);
                const int k = A(rng);
                for (int j = 0; j < k; ++j) mu.add({Y(rng)}, Wt(rng));
                f.push_back(std::move(mu));
            }
            return FiberFunction(p, f);
        };
        const auto e1 = random_fibers(), e2 = random_fibers();
        const double dinf = d_infinity(e1, e2);
        const double lift = bl_distance(product_lift(e1, p->masses()), product_lift(e2, p->masses()), product_metric(e1));
        slack = std::min(slack, dinf - lift);
    }
    return {slack >= -1e-9, "min(d_inf - d_BL(lift)) = " + num(slack) + " over 25 pairs"};
}

Outcome quantile_rate() {
    DistanceOptions opt;
    opt.max_atoms = 1100;
    const UniformSegment u{{0.0}, {1.0}, 1.0};
    const DiscreteMeasure ref = empirical_approximation(u, 1024, QuantileRule::midpoint);
    std::vector<double> d;
    for (std::size_t n : {8u, 16u, 32u, 64u}) d.push_back(bl_distance(ref, empirical_approximation(u, n), {}, opt));
    bool ok = true;
    std::string detail = "d_BL =";
    for (double v : d) detail += " " + num(v);
    detail += "; ratios";
    for (std::size_t k = 1; k < d.size(); ++k) {
        const double r = d[k - 1] / d[k];
        detail += " " + num(r);
        ok = ok && r >= 1.6 && r <= 2.4;
    }
    return {ok, detail + " (reference: 1024 midpoint atoms)"};
}

Outcome invariance_suite() {
    const TimeGrid grid{5.0, 1e-3, 50};
    std::string detail;
    bool ok = true;

    auto sis = make_case("sis", 4, 16, {{"beta", 2.0}, {"gamma_amp", 0.4}});
    const auto tr = simulate(sis.model, sis.dgms, sis.init, grid);
    double drift = 0.0;
    for (const auto& s : tr.states)
        for (std::size_t k = 0; k < s.size(); k += 2)
            drift = std::max(drift, std::abs(s[k] + s[k + 1] - sis.init.states[k] - sis.init.states[k + 1]));
    ok = ok && drift <= 1e-12;
    detail += "SIS S+I drift " + num(drift);

    for (const char* name : {"seirs", "lv", "hk"}) {
        auto c = make_case(name, 4, 16);
        const auto t = simulate(c.model, c.dgms, c.init, grid);
        const double v = std::max(t.max_violation, max_violation(t, c.model.Y));
        ok = ok && v <= 1e-6;
        detail += std::string(", ") + name + " max violation " + num(v);
    }

    auto neg = make_case("lv", 4, 16);
    const auto bad = builtin_model("lv", {{"Lambda1", 0.5}}, false);
    const auto rep = bony_check(bad, neg.dgms, neg.dgms.front().eta.partition, 16, 20);
    ok = ok && !rep.pass();
    detail += ", LV Lambda1 = alpha/(2 beta) flux " + num(rep.max_flux) + (rep.pass() ? " (not flagged)" : " (flagged)");
    return {ok, detail};
}

Outcome flow_properties() {
    auto c = make_case("kuramoto", 8, 8, {{"omega_amp", 0.5}});
    CoupledSystem sys(c.model, c.dgms, c.init);
    const auto frozen = integrate(std::ref(sys), c.init, {1.0, 1e-3});
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> U(0.0, 2.0 * pi);
    std::uniform_int_distribution<std::size_t> cell(0, 7);

    double round_trip = 0.0;
    for (int t = 0; t < 20; ++t) {
        const std::size_t i = cell(rng);
        const std::vector<double> phi = {U(rng)};
        const auto fwd = flow_map(sys.op(), frozen, i, 0.0, 1.0, phi);
        const auto back = flow_map(sys.op(), frozen, i, 1.0, 0.0, fwd);
        round_trip = std::max(round_trip, std::abs(back[0] - phi[0]));
    }

    const auto est = lipschitz_estimate(sys.op());
    double worst = 0.0;  // max of |Δflow| / (e^{L1 t}|Δφ|)
    for (int t = 0; t < 50; ++t) {
        const std::size_t i = cell(rng);
        const std::vector<double> a = {U(rng)}, b = {U(rng)};
        const auto fa = flow_map(sys.op(), frozen, i, 0.0, 1.0, a);
        const auto fb = flow_map(sys.op(), frozen, i, 0.0, 1.0, b);
        worst = std::max(worst, std::abs(fa[0] - fb[0]) / (std::exp(est.L1) * std::abs(a[0] - b[0])));
    }
    return {round_trip <= 1e-6 && worst <= 1.05,
            "round-trip error " + num(round_trip) + ", max |dflow| / (e^{L1 t}|dphi|) = " + num(worst) + " with L1 = " +
                num(est.L1)};
}

Outcome picard_matches_direct() {
    std::string detail;
    bool ok = true;
    const TimeGrid grid{1.0, 1e-3, 100};
    for (auto [name, m] : {std::pair<const char*, std::size_t>{"kuramoto", 8}, {"sis", 4}}) {
        auto c = make_case(name, m, 8, std::string(name) == "kuramoto" ? std::map<std::string, double>{{"omega_amp", 0.5}}
                                                                        : std::map<std::string, double>{{"beta", 2.0}});
        const auto direct = simulate(c.model, c.dgms, c.init, grid);
        const auto pic = picard_solve(c.model, c.dgms, c.init, grid);
        const double d = d_infinity(ensemble_measure(direct, 1.0), ensemble_measure(pic.trajectory, 1.0));
        ok = ok && d <= 1e-5;
        detail += (detail.empty() ? "" : ", ") + std::string(name) + " d_inf(T=1) = " + num(d) + " after " +
                  std::to_string(pic.iterations) + " iterations";
    }
    return {ok, detail};
}

Outcome self_convergence() {
    std::string detail;
    bool ok = true;
    auto study = [&](ExperimentConfig cfg) {
        cfg.m = 16;
        cfg.sweep_n = {8, 16, 32, 64};
        cfg.reference_n = 256;
        cfg.sweep_times = {0.5, 1.0};
        cfg.T = 1.0;
        const auto r = run_converge(cfg);
        for (std::size_t k = 0; k < 2; ++k) {
            const double first = r.rows[4 * k].d_infinity, last = r.rows[4 * k + 3].d_infinity;
            const bool pass = r.monotone && last < first / 3.0;
            ok = ok && pass;
            detail += (detail.empty() ? "" : ", ") + cfg.model + " t=" + num(r.rows[4 * k].t) + ": " + num(first);
            for (std::size_t j = 1; j < 4; ++j) detail += " > " + num(r.rows[4 * k + j].d_infinity);
        }
        if (!r.monotone) detail += " [" + r.detail + "]";
    };
    ExperimentConfig k;
    k.model = "kuramoto";
    k.params = {{"omega_amp", 0.5}};
    k.dgms = {"ring"};
    k.initial_kind = "arc";
    k.arc_length = pi;
    k.shift = 2.0 * pi;
    study(k);
    ExperimentConfig h;
    h.model = "hk";
    h.dgms = {"circle_graphop"};
    h.initial_kind = "segment";
    h.initial_from = {-0.9};
    h.initial_to = {0.4};
    h.shift = 0.5;
    study(h);
    return {ok, detail + " (reference n = 256, dt = T/1000)"};
}

Outcome integrator_validation() {
    ModelSpec decay;
    decay.name = "decay";
    decay.r = 0;
    decay.h = [](double, std::span<const double>, std::span<const double> phi, std::span<double> out) { out[0] -= phi[0]; };
    decay.Y.dim = 1;
    decay.Y.halfspaces = {{{1.0}, 1.0, "phi <= 1"}, {{-1.0}, 0.0, "phi >= 0"}};
    decay.Y.lo = {0.0};
    decay.Y.hi = {1.0};
    const auto p = make_partition(VertexSpace::interval(), 1);
    Ensemble one{p, {1.0}, 1, 1, {1.0}};
    const auto tr = simulate(decay, {}, one, {1.0, 1e-3, 1000});
    const double err = std::abs(tr.states.back()[0] - std::exp(-1.0));
    bool ok = err <= 1e-8;
    std::string detail = "decay endpoint error " + num(err) + "; step-halving change";
    for (const auto& name : builtin_model_names()) {
        auto c = make_case(name, 4, 8);
        const auto a = simulate(c.model, c.dgms, c.init, {1.0, 1e-3, 1000});
        const auto b = simulate(c.model, c.dgms, c.init, {1.0, 5e-4, 2000});
        double diff = 0.0;
        for (std::size_t k = 0; k < a.states.back().size(); ++k)
            diff = std::max(diff, std::abs(a.states.back()[k] - b.states.back()[k]));
        ok = ok && diff <= 1e-6;
        detail += " " + name + " " + num(diff);
    }
    return {ok, detail};
}

}  // namespace

int main() {
    criterion(1, "metric oracles (d_BL of Diracs, d_KR, TV half-L1 identity)", 5, metric_oracles);
    criterion(2, "d_inf dominates d_BL of the product lift", 30, product_lift_inequality);
    criterion(3, "quantile approximation error halves per doubling of n", 10, quantile_rate);
    criterion(4, "invariance suite (SIS conservation, Y invariance, LV negative control)", 60, invariance_suite);
    criterion(5, "flow group property and Lipschitz bound (Kuramoto, T=1)", 30, flow_properties);
    criterion(6, "Picard fixed point equals direct integration", 60, picard_matches_direct);
    criterion(7, "self-convergence in n (Kuramoto ring, HK circle graphop, m=16)", 300, self_convergence);
    criterion(8, "integrator validation (analytic decay, step halving)", 30, integrator_validation);
    std::printf("%s: %d of 8 criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
