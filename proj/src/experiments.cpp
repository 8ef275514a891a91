#include "dgmflow/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dgmflow/error.hpp"

namespace dgmflow {
namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    const std::string s = trim(v);
    char* end = nullptr;
    const double x = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(x)) {
        throw ConfigError(key, "expected a finite number, got '" + s + "'");
    }
    return x;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
    const double x = parse_double(key, v);
    if (x < 0 || x != std::floor(x) || x > 1e12) throw ConfigError(key, "expected a non-negative integer, got '" + trim(v) + "'");
    return static_cast<std::size_t>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::vector<double> parse_reals(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& s : split_list(v)) out.push_back(parse_double(key, s));
    if (out.empty()) throw ConfigError(key, "expected a comma-separated list of numbers");
    return out;
}

std::vector<std::size_t> parse_counts(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    for (const auto& s : split_list(v)) out.push_back(parse_count(key, s));
    if (out.empty()) throw ConfigError(key, "expected a comma-separated list of integers");
    return out;
}

// Segment endpoints shifted by shift·x₀ in every coordinate.
InitialCondition shifted_segment(std::vector<double> from, std::vector<double> to, double shift) {
    if (from.size() != to.size()) throw ConfigError("initial.to", "segment endpoints differ in dimension");
    return {"segment", [from, to, shift](std::span<const double> x) -> MeasureDescriptor {
                auto a = from, b = to;
                for (auto& v : a) v += shift * x[0];
                for (auto& v : b) v += shift * x[0];
                return UniformSegment{a, b, 1.0};
            }};
}

InitialCondition make_initial(const ExperimentConfig& cfg, const ModelSpec& model) {
    const InvariantPolytope& Y = model.Y;
    std::string kind = cfg.initial_kind;
    if (kind.empty()) kind = model.r2 == 1 ? "uniform" : "point";
    if (kind == "uniform") return initial_uniform(Y);
    if (kind == "arc") {
        if (!Y.is_torus() || Y.dim != 1) throw ConfigError("initial.kind", "arc initial data needs the circle state space");
        const double period = Y.periods[0];
        return initial_arc(cfg.arc_start, cfg.arc_length > 0 ? cfg.arc_length : period, period, cfg.shift);
    }
    if (kind == "segment") {
        if (cfg.initial_from.size() != model.r2 || cfg.initial_to.size() != model.r2) {
            throw ConfigError("initial.from", "segment endpoints need " + std::to_string(model.r2) + " coordinates");
        }
        return shifted_segment(cfg.initial_from, cfg.initial_to, cfg.shift);
    }
    if (kind == "point") {
        std::vector<double> p = cfg.initial_point;
        if (p.empty()) {
            // centre of the bounding box, pulled onto Y
            for (std::size_t k = 0; k < Y.dim; ++k) p.push_back(0.5 * (Y.lo[k] + Y.hi[k]));
            p = Y.project(p);
        }
        if (p.size() != model.r2) throw ConfigError("initial.point", "needs " + std::to_string(model.r2) + " coordinates");
        return initial_point(p);
    }
    throw ConfigError("initial.kind", "unknown initial kind '" + kind + "' (known: point, segment, arc, uniform)");
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig c;
    std::string line;
    std::size_t lineno = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno), "expected 'key = value', got '" + line + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string v = trim(line.substr(eq + 1));
        if (!seen.insert(key).second) throw ConfigError(key, "key given twice");

        if (key == "model.name") c.model = v;
        else if (key == "model.enforce") c.enforce_constraints = parse_bool(key, v);
        else if (key.rfind("model.", 0) == 0) c.params[key.substr(6)] = parse_double(key, v);
        else if (key == "dgm.names") c.dgms = split_list(v);
        else if (key == "space") c.space = v;
        else if (key == "m") c.m = parse_count(key, v);
        else if (key == "n") c.n = parse_count(key, v);
        else if (key == "sweep.n") c.sweep_n = parse_counts(key, v);
        else if (key == "sweep.reference") c.reference_n = parse_count(key, v);
        else if (key == "sweep.times") c.sweep_times = parse_reals(key, v);
        else if (key == "T") c.T = parse_double(key, v);
        else if (key == "dt") c.dt = parse_double(key, v);
        else if (key == "stride") c.stride = parse_count(key, v);
        else if (key == "project") c.project = parse_bool(key, v);
        else if (key == "initial.kind") c.initial_kind = v;
        else if (key == "initial.point") c.initial_point = parse_reals(key, v);
        else if (key == "initial.from") c.initial_from = parse_reals(key, v);
        else if (key == "initial.to") c.initial_to = parse_reals(key, v);
        else if (key == "initial.start") c.arc_start = parse_double(key, v);
        else if (key == "initial.length") c.arc_length = parse_double(key, v);
        else if (key == "initial.shift") c.shift = parse_double(key, v);
        else if (key == "audit.samples") c.audit_samples = parse_count(key, v);
        else if (key == "audit.grid") c.audit_grid = parse_count(key, v);
        else if (key == "seed") c.seed = parse_count(key, v);
        else if (key == "output.dir") c.output_dir = v;
        else throw ConfigError(key, "unknown configuration key");
    }
    return c;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config", "cannot open '" + path + "'");
    return parse_config(in);
}

void validate(const ExperimentConfig& cfg) {
    const auto model = builtin_model(cfg.model, cfg.params, cfg.enforce_constraints);
    const auto names = cfg.dgms.empty() ? model.default_dgms : cfg.dgms;
    if (names.size() != model.r) {
        throw ConfigError("dgm.names", cfg.model + " needs " + std::to_string(model.r) + " DGM(s), got " +
                                           std::to_string(names.size()));
    }
    std::string space;
    for (const auto& name : names) {
        DigraphMeasure g;
        try {
            g = catalog(name);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& err) {
            throw ConfigError("dgm.names", err.what());
        }
        if (!space.empty() && g.space.name() != space) {
            throw ConfigError("dgm.names", "all DGMs must share one vertex space (" + space + " vs " + g.space.name() + ")");
        }
        space = g.space.name();
    }
    if (!cfg.space.empty()) {
        try {
            VertexSpace::from_name(cfg.space);
        } catch (const Error& err) {
            throw ConfigError("space", err.what());
        }
    }
    if (!cfg.space.empty() && cfg.space != space) {
        throw ConfigError("space", "space '" + cfg.space + "' does not match the DGM space '" + space + "'");
    }
    if (cfg.m == 0) throw ConfigError("m", "number of cells must be at least 1");
    if (cfg.n == 0) throw ConfigError("n", "particles per cell must be at least 1");
    for (std::size_t k = 0; k < cfg.sweep_n.size(); ++k) {
        if (cfg.sweep_n[k] == 0) throw ConfigError("sweep.n", "entries must be at least 1");
        if (k > 0 && cfg.sweep_n[k] <= cfg.sweep_n[k - 1]) throw ConfigError("sweep.n", "must be strictly increasing");
    }
    if (!cfg.sweep_n.empty() && cfg.sweep_n.back() >= cfg.reference_n) {
        throw ConfigError("sweep.reference", "reference n must exceed every sweep entry");
    }
    TimeGrid{cfg.T, cfg.dt, cfg.stride}.steps();
    for (std::size_t k = 0; k < cfg.sweep_times.size(); ++k) {
        const double t = cfg.sweep_times[k];
        if (!(t >= 0.0 && t <= cfg.T)) throw ConfigError("sweep.times", "times must lie in [0, T]");
        if (k > 0 && t <= cfg.sweep_times[k - 1]) throw ConfigError("sweep.times", "must be strictly increasing");
    }
}

Experiment build_experiment(const ExperimentConfig& cfg, std::size_t m, std::size_t n) {
    validate(cfg);
    Experiment e;
    e.model = builtin_model(cfg.model, cfg.params, cfg.enforce_constraints);
    const auto names = cfg.dgms.empty() ? e.model.default_dgms : cfg.dgms;
    for (const auto& name : names) e.graphs.push_back(catalog(name));
    e.partition = make_partition(e.graphs.front().space, m);
    for (const auto& g : e.graphs) e.dgms.push_back(discretize_dgm(g, e.partition, n));
    e.initial = make_initial(cfg, e.model);
    e.init = discretize_initial(e.initial, e.partition, n);
    if (e.init.r2 != e.model.r2) {
        throw ConfigError("initial", "initial states have dimension " + std::to_string(e.init.r2) + ", expected " +
                                         std::to_string(e.model.r2));
    }
    for (std::size_t k = 0; k < e.init.particles(); ++k) {
        if (!e.model.Y.contains(std::span<const double>(e.init.states).subspan(k * e.init.r2, e.init.r2))) {
            throw ConfigError("initial", "initial particle " + std::to_string(k) + " lies outside Y");
        }
    }
    return e;
}

SimulationSummary run_simulate(const ExperimentConfig& cfg, unsigned threads, std::ostream* trajectory_csv) {
    const Experiment e = build_experiment(cfg, cfg.m, cfg.n);
    const TimeGrid grid{cfg.T, cfg.dt, cfg.stride};
    const auto traj = simulate(e.model, e.dgms, e.init, grid, cfg.project, threads);
    SimulationSummary s;
    s.particles = e.init.particles();
    s.steps = grid.steps();
    s.max_violation = traj.max_violation;
    s.projections = traj.projections;
    for (double t : traj.times) {
        const auto f = ensemble_measure(traj, t);
        for (std::size_t i = 0; i < f.fibers.size(); ++i)
            s.mass_drift = std::max(s.mass_drift, std::abs(f.fibers[i].total_mass() - e.init.a[i]));
    }
    const auto& c = e.model.conserved;
    if (!c.empty()) {
        s.conserved_drift = 0.0;
        const std::size_t r2 = e.model.r2;
        for (const auto& snap : traj.states) {
            for (std::size_t k = 0; k < snap.size(); k += r2) {
                double now = 0.0, start = 0.0;
                for (std::size_t d = 0; d < r2; ++d) {
                    now += c[d] * snap[k + d];
                    start += c[d] * e.init.states[k + d];
                }
                s.conserved_drift = std::max(s.conserved_drift, std::abs(now - start));
            }
        }
    }
    if (trajectory_csv) write_trajectory_csv(*trajectory_csv, traj);
    return s;
}

void write_summary(std::ostream& out, const ExperimentConfig& cfg, const SimulationSummary& s) {
    out << "model = " << cfg.model << '\n'
        << "m = " << cfg.m << '\n'
        << "n = " << cfg.n << '\n'
        << "T = " << format_real(cfg.T) << '\n'
        << "steps = " << s.steps << '\n'
        << "particles = " << s.particles << '\n'
        << "max_violation = " << format_real(s.max_violation) << '\n'
        << "projections = " << s.projections << '\n'
        << "mass_drift = " << format_real(s.mass_drift) << '\n';
    if (s.conserved_drift >= 0.0) out << "conserved_drift = " << format_real(s.conserved_drift) << '\n';
}

ConvergenceResult run_converge(const ExperimentConfig& cfg, unsigned threads) {
    if (cfg.sweep_n.empty()) throw ConfigError("sweep.n", "a convergence study needs an n-sweep");
    validate(cfg);
    const std::vector<double> times = cfg.sweep_times.empty() ? std::vector<double>{cfg.T} : cfg.sweep_times;
    const TimeGrid grid{cfg.T, cfg.dt, 1};
    auto measures_at = [&](std::size_t n) {
        const Experiment e = build_experiment(cfg, cfg.m, n);
        const auto traj = simulate(e.model, e.dgms, e.init, grid, cfg.project, threads);
        std::vector<FiberFunction> out;
        for (double t : times) {
            // snap to the stored grid
            const double h = grid.step();
            out.push_back(ensemble_measure(traj, h * std::round(t / h)));
        }
        return out;
    };
    const auto ref = measures_at(cfg.reference_n);
    std::vector<std::vector<double>> d(times.size());
    UniformDistanceOptions opt;
    opt.threads = threads;
    opt.lp.max_atoms = std::max<std::size_t>(opt.lp.max_atoms, cfg.reference_n + cfg.sweep_n.back() + 8);
    for (std::size_t n : cfg.sweep_n) {
        const auto mine = measures_at(n);
        for (std::size_t k = 0; k < times.size(); ++k) d[k].push_back(d_infinity(mine[k], ref[k], opt));
    }
    ConvergenceResult r;
    for (std::size_t k = 0; k < times.size(); ++k) {
        for (std::size_t j = 0; j < cfg.sweep_n.size(); ++j) {
            r.rows.push_back({times[k], cfg.m, cfg.sweep_n[j], d[k][j]});
            if (j > 0 && d[k][j] > d[k][j - 1] * (1.0 + 1e-12) + 1e-15) {
                r.monotone = false;
                r.detail += "t = " + format_real(times[k]) + ": d_infinity rises from n = " +
                            std::to_string(cfg.sweep_n[j - 1]) + " to n = " + std::to_string(cfg.sweep_n[j]) + "; ";
            }
        }
    }
    return r;
}

bool AuditReport::pass() const {
    return std::all_of(lines.begin(), lines.end(), [](const AuditLine& l) { return l.pass; });
}

AuditReport run_audit(const ExperimentConfig& cfg_in, unsigned threads) {
    // constraints are reported as an audit line rather than rejected up front
    ExperimentConfig cfg = cfg_in;
    cfg.enforce_constraints = false;
    const Experiment e = build_experiment(cfg, cfg.m, cfg.n);
    AuditReport rep;
    const std::size_t samples = std::max<std::size_t>(1, cfg.audit_samples);

    const auto bad = check_constraints(cfg.model, cfg.params);
    std::string joined;
    for (const auto& b : bad) joined += (joined.empty() ? "" : "; ") + b;
    rep.lines.push_back({"constraints", bad.empty(), bad.empty() ? "all parameter inequalities hold" : joined});

    const auto bony = bony_check(e.model, e.dgms, e.partition, cfg.n, samples, cfg.seed);
    std::string detail;
    if (bony.skipped) {
        detail = "skipped: Y is a torus without boundary";
    } else {
        detail = "max outward flux " + format_real(bony.max_flux) + " on face '" + bony.worst_face + "' at cell " +
                 std::to_string(bony.worst_cell) + ", point (";
        for (std::size_t k = 0; k < bony.worst_point.size(); ++k)
            detail += (k ? ", " : "") + format_real(bony.worst_point[k]);
        detail += "), " + std::to_string(bony.evaluations) + " evaluations";
    }
    rep.lines.push_back({"bony", bony.pass(), detail});

    // metric axioms on random measures in Y
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> U(0.1, 1.0);
    const Metric metric = e.model.state_metric();
    auto random_measure = [&] {
        DiscreteMeasure mu(e.model.r2);
        for (int k = 0; k < 4; ++k) mu.add(sample_in_Y(e.model.Y, rng), U(rng));
        return mu;
    };
    double worst = 0.0;
    for (std::size_t s = 0; s < std::min<std::size_t>(samples, 20); ++s) {
        const auto a = random_measure(), b = random_measure(), c = random_measure();
        const double ab = bl_distance(a, b, metric), ba = bl_distance(b, a, metric);
        const double ac = bl_distance(a, c, metric), cb = bl_distance(c, b, metric);
        worst = std::max({worst, std::abs(ab - ba), ab - ac - cb, bl_distance(a, a, metric)});
        if (!(ab > 0.0)) worst = std::max(worst, 1.0);
    }
    rep.lines.push_back({"metric_axioms", worst <= 1e-9, "largest defect " + format_real(worst)});

    for (const auto& g : e.graphs) {
        const std::size_t grid = std::max<std::size_t>(2, cfg.audit_grid);
        const double w1 = continuity_modulus(g, grid), w2 = continuity_modulus(g, 2 * grid);
        rep.lines.push_back({"continuity:" + g.name, w2 <= w1 + 1e-9,
                             "modulus " + format_real(w1) + " at grid " + std::to_string(grid) + ", " +
                                 format_real(w2) + " at grid " + std::to_string(2 * grid)});
    }

    VlasovOperator op(e.model, e.dgms, e.partition, e.init.a, cfg.n);
    const auto est = lipschitz_estimate(op, 40 * samples, cfg.seed);
    std::vector<double> states;
    for (std::size_t k = 0; k < e.init.particles(); ++k) {
        const auto x = sample_in_Y(e.model.Y, rng);
        states.insert(states.end(), x.begin(), x.end());
    }
    const double L = vlasov_lipschitz_sample(op, states, 40 * samples, cfg.seed);
    rep.lines.push_back({"lipschitz", L <= 1.05 * est.L1,
                         "sampled " + format_real(L) + " vs L1 = " + format_real(est.L1)});
    (void)threads;
    return rep;
}

void write_audit(std::ostream& out, const AuditReport& r) {
    for (const auto& l : r.lines) out << (l.pass ? "PASS " : "FAIL ") << l.check << ": " << l.detail << '\n';
    out << (r.pass() ? "PASS" : "FAIL") << " overall\n";
}

DistanceReport run_distance(const DiscreteMeasure& a, const DiscreteMeasure& b, const Metric& metric,
                            std::size_t max_atoms) {
    if (a.dim() != b.dim()) throw ConfigError("measures", "measures live in different dimensions");
    DistanceOptions opt;
    opt.max_atoms = max_atoms;
    DistanceReport r;
    r.bl = bl_distance(a, b, metric, opt);
    r.tv = tv_distance(a, b, metric);
    const double ma = a.total_mass(), mb = b.total_mass();
    if (std::abs(ma - mb) <= 1e-12 * std::max({1.0, ma, mb})) r.kr = kr_distance(a, b, metric, opt);
    return r;
}

}  // namespace dgmflow
