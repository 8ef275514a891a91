#include "dgmflow/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "dgmflow/error.hpp"
#include "dgmflow/parallel.hpp"

namespace dgmflow {

InitialCondition initial_point(std::vector<double> y0) {
    return {"point", [y0](std::span<const double>) -> MeasureDescriptor { return Dirac{y0, 1.0}; }};
}

InitialCondition initial_segment(std::vector<double> from, std::vector<double> to) {
    if (from.size() != to.size()) throw ConfigError("initial", "segment endpoints differ in dimension");
    return {"segment",
            [from, to](std::span<const double>) -> MeasureDescriptor { return UniformSegment{from, to, 1.0}; }};
}

InitialCondition initial_arc(double start, double length, double period, double shift) {
    if (!(period > 0.0) || !(length > 0.0) || length > period) {
        throw ConfigError("initial", "arc needs 0 < length <= period");
    }
    return {"arc", [=](std::span<const double> x) -> MeasureDescriptor {
                return UniformArc{start + shift * x[0], length, period, 1.0};
            }};
}

InitialCondition initial_uniform(const InvariantPolytope& Y) {
    if (Y.dim != 1) throw ConfigError("initial.kind", "uniform initial data needs a one-dimensional state space");
    if (Y.is_torus()) return initial_arc(0.0, Y.periods[0], Y.periods[0]);
    auto ic = initial_segment({Y.lo[0]}, {Y.hi[0]});
    ic.name = "uniform";
    return ic;
}

InitialCondition with_density(InitialCondition ic, std::function<double(std::span<const double>)> density) {
    auto base = ic.fiber;
    ic.fiber = [base, density](std::span<const double> x) {
        const MeasureDescriptor d = base(x);
        return with_mass(d, descriptor_mass(d) * density(x));
    };
    return ic;
}

Ensemble discretize_initial(const InitialCondition& nu0, PartitionPtr partition, std::size_t n, QuantileRule rule) {
    if (!partition) throw Error("discretize_initial: missing partition");
    if (n == 0) throw ConfigError("n", "particles per cell must be at least 1");
    Ensemble e;
    e.partition = partition;
    e.n = n;
    const Partition& p = *partition;
    auto mass_at = [&](std::span<const double> x) { return descriptor_mass(nu0.fiber(x)); };
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double mu = p.mass(i);
        const double a = mu > 0.0 ? p.integrate(i, mass_at) / mu : mass_at(p.representative(i));
        if (!(a >= 0.0) || !std::isfinite(a)) throw Error("discretize_initial: negative or non-finite fiber mass");
        e.a.push_back(a);
        total += a * mu;

        const MeasureDescriptor f = nu0.fiber(p.representative(i));
        if (e.r2 == 0) e.r2 = descriptor_dim(f);
        if (descriptor_dim(f) != e.r2) throw Error("discretize_initial: fiber dimension changes across cells");
        // the positions of a zero fiber carry no weight but must still exist
        if (!(descriptor_mass(f) > 0.0) && std::holds_alternative<Atomic>(f)) {
            throw Error("discretize_initial: zero atomic fiber at the representative of cell " + std::to_string(i));
        }
        const DiscreteMeasure atoms = empirical_approximation(with_mass(f, 1.0), n, rule);
        if (atoms.size() != n) throw Error("discretize_initial: approximation returned the wrong atom count");
        e.states.insert(e.states.end(), atoms.coords().begin(), atoms.coords().end());
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw ConfigError("initial", "initial measure is not normalized: total mass " + format_real(total) + " != 1");
    }
    return e;
}

std::size_t TimeGrid::steps() const {
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T", "final time must be positive");
    const double h = dt > 0.0 ? dt : T / 1000.0;
    if (!std::isfinite(h)) throw ConfigError("dt", "step must be finite");
    const double q = T / h;
    const auto s = static_cast<std::size_t>(std::llround(q));
    if (s == 0 || std::abs(static_cast<double>(s) - q) > 1e-9 * std::max(1.0, q)) {
        throw ConfigError("dt", "T/dt must be a positive integer (T = " + format_real(T) + ", dt = " + format_real(h) + ")");
    }
    if (stride == 0) throw ConfigError("stride", "storage stride must be at least 1");
    return s;
}

double TimeGrid::step() const { return T / static_cast<double>(steps()); }

CoupledSystem::CoupledSystem(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
                             unsigned threads)
    : op_(model, dgms, init.partition, init.a, init.n), threads_(threads) {
    if (init.r2 != model.r2) {
        throw ConfigError("initial", "initial states have dimension " + std::to_string(init.r2) + ", model " +
                                         model.name + " needs " + std::to_string(model.r2));
    }
}

void CoupledSystem::operator()(double t, std::span<const double> states, std::span<double> deriv) {
    op_.field(t, states, deriv, threads_);
}

Rhs build_rhs(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
              unsigned threads) {
    auto sys = std::make_shared<CoupledSystem>(model, dgms, init, threads);
    return [sys](double t, std::span<const double> s, std::span<double> d) { (*sys)(t, s, d); };
}

std::size_t EnsembleTrajectory::index_of(double t) const {
    const double tol = 1e-9 * std::max(1.0, times.empty() ? 1.0 : std::abs(times.back()));
    const auto it = std::lower_bound(times.begin(), times.end(), t - tol);
    if (it == times.end() || std::abs(*it - t) > tol) {
        throw Error("trajectory: t = " + format_real(t) + " is not a stored time");
    }
    return static_cast<std::size_t>(it - times.begin());
}

std::vector<double> EnsembleTrajectory::interpolate(double t) const {
    const double tol = 1e-9 * std::max(1.0, std::abs(times.back()));
    if (t < times.front() - tol || t > times.back() + tol) {
        throw Error("trajectory: t = " + format_real(t) + " outside the frozen time span");
    }
    if (t <= times.front()) return states.front();
    if (t >= times.back()) return states.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(times.begin(), times.end(), t) - times.begin());
    const double t0 = times[k - 1], t1 = times[k];
    const double s = (t - t0) / (t1 - t0);
    if (s <= 0.0) return states[k - 1];
    std::vector<double> out(states[k].size());
    for (std::size_t c = 0; c < out.size(); ++c) out[c] = (1.0 - s) * states[k - 1][c] + s * states[k][c];
    return out;
}

namespace {

void check_and_clip(std::vector<double>& s, std::size_t r2, const IntegrateOptions& opt, EnsembleTrajectory& tr,
                    double t) {
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (!std::isfinite(s[k])) throw Error("integrate: non-finite state at t = " + format_real(t));
    }
    if (!opt.Y) return;
    for (std::size_t k = 0; k < s.size(); k += r2) {
        std::span<double> phi(s.data() + k, r2);
        const double v = opt.Y->violation(phi);
        if (v <= 0.0) continue;
        tr.max_violation = std::max(tr.max_violation, v);
        if (v > opt.tolerance) {
            throw Error("integrate: particle " + std::to_string(k / r2) + " left Y by " + format_real(v) + " at t = " +
                        format_real(t) + " (Bony condition fails or dt too large)");
        }
        if (opt.project) {
            const auto q = opt.Y->project(phi);
            std::copy(q.begin(), q.end(), phi.begin());
            ++tr.projections;
        }
    }
}

EnsembleTrajectory empty_like(const Ensemble& init, const Metric& metric) {
    EnsembleTrajectory tr;
    tr.partition = init.partition;
    tr.a = init.a;
    tr.n = init.n;
    tr.r2 = init.r2;
    tr.state_metric = metric;
    return tr;
}

// One RK4 step where stage derivatives come from `stage(t, states, deriv)`.
template <class Stage>
void rk4_step(Stage&& stage, double t, double h, std::vector<double>& y, std::vector<double>& k1,
              std::vector<double>& k2, std::vector<double>& k3, std::vector<double>& k4, std::vector<double>& tmp) {
    const std::size_t N = y.size();
    stage(0, t, y, k1);
    for (std::size_t c = 0; c < N; ++c) tmp[c] = y[c] + 0.5 * h * k1[c];
    stage(1, t + 0.5 * h, tmp, k2);
    for (std::size_t c = 0; c < N; ++c) tmp[c] = y[c] + 0.5 * h * k2[c];
    stage(2, t + 0.5 * h, tmp, k3);
    for (std::size_t c = 0; c < N; ++c) tmp[c] = y[c] + h * k3[c];
    stage(3, t + h, tmp, k4);
    for (std::size_t c = 0; c < N; ++c) y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
}

}  // namespace

EnsembleTrajectory integrate(const Rhs& rhs, const Ensemble& init, const TimeGrid& grid, const IntegrateOptions& opt,
                             const Metric& state_metric) {
    const std::size_t steps = grid.steps();
    const double h = grid.step();
    EnsembleTrajectory tr = empty_like(init, state_metric);
    std::vector<double> y = init.states;
    if (opt.Y) {
        for (std::size_t k = 0; k < y.size(); k += init.r2) {
            if (!opt.Y->contains(std::span<const double>(y.data() + k, init.r2), opt.tolerance)) {
                throw ConfigError("initial", "initial particle " + std::to_string(k / init.r2) + " lies outside Y");
            }
        }
    }
    tr.times.push_back(0.0);
    tr.states.push_back(y);
    const std::size_t N = y.size();
    std::vector<double> k1(N), k2(N), k3(N), k4(N), tmp(N);
    auto stage = [&](int, double t, std::span<const double> s, std::span<double> d) { rhs(t, s, d); };
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = h * static_cast<double>(k);
        rk4_step(stage, t, h, y, k1, k2, k3, k4, tmp);
        check_and_clip(y, init.r2, opt, tr, t + h);
        if ((k + 1) % grid.stride == 0 || k + 1 == steps) {
            tr.times.push_back(k + 1 == steps ? grid.T : h * static_cast<double>(k + 1));
            tr.states.push_back(y);
        }
    }
    return tr;
}

EnsembleTrajectory simulate(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
                            const TimeGrid& grid, bool project, unsigned threads) {
    IntegrateOptions opt;
    opt.Y = &model.Y;
    opt.project = project;
    return integrate(build_rhs(model, dgms, init, threads), init, grid, opt, model.state_metric());
}

FiberFunction ensemble_measure(const EnsembleTrajectory& traj, double t) {
    const std::size_t k = traj.index_of(t);
    const std::size_t m = traj.partition->size();
    std::vector<DiscreteMeasure> fibers;
    fibers.reserve(m);
    for (std::size_t i = 0; i < m; ++i) {
        DiscreteMeasure f(traj.r2);
        const double w = traj.a[i] / static_cast<double>(traj.n);
        if (w > 0.0)
            for (std::size_t j = 0; j < traj.n; ++j) f.add(traj.particle(k, i, j), w);
        fibers.push_back(std::move(f));
    }
    return FiberFunction(traj.partition, std::move(fibers), traj.state_metric);
}

std::vector<double> flow_map(VlasovOperator& op, const EnsembleTrajectory& frozen, std::size_t cell, double t_from,
                             double t_to, std::span<const double> phi0, double dt) {
    const std::size_t r2 = op.model().r2;
    if (phi0.size() != r2) throw Error("flow_map: state dimension mismatch");
    if (cell >= op.cells()) throw Error("flow_map: cell index out of range");
    std::vector<double> y(phi0.begin(), phi0.end());
    const double span = t_to - t_from;
    if (span == 0.0) return y;
    if (dt <= 0.0) dt = frozen.times.size() > 1 ? frozen.times[1] - frozen.times[0] : std::abs(span);
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(std::abs(span) / dt)));
    const double h = span / static_cast<double>(steps);
    std::vector<double> snapshot, k1(r2), k2(r2), k3(r2), k4(r2), tmp(r2);
    double bound_t = std::numeric_limits<double>::quiet_NaN();
    auto stage = [&](int, double t, std::span<const double> s, std::span<double> d) {
        if (t != bound_t) {
            snapshot = frozen.interpolate(t);
            op.prepare(snapshot);
            bound_t = t;
        }
        op.evaluate(t, cell, s, d);
    };
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t_from + h * static_cast<double>(k);
        rk4_step(stage, t, h, y, k1, k2, k3, k4, tmp);
        for (double v : y)
            if (!std::isfinite(v)) throw Error("flow_map: non-finite state");
    }
    return y;
}

namespace {

// Every particle pushed along the field frozen at `frozen` (stored at every step).
EnsembleTrajectory push_forward(VlasovOperator& op, const EnsembleTrajectory& frozen, const Ensemble& init,
                                std::size_t steps, double h, const IntegrateOptions& opt, unsigned threads) {
    EnsembleTrajectory tr = empty_like(init, frozen.state_metric);
    std::vector<double> y = init.states;
    tr.times = frozen.times;
    tr.states.reserve(steps + 1);
    tr.states.push_back(y);
    const std::size_t N = y.size(), r2 = init.r2, n = init.n;
    std::vector<double> k1(N), k2(N), k3(N), k4(N), tmp(N), mid(N);
    std::size_t cur = 0;
    auto stage = [&](int which, double t, std::span<const double> s, std::span<double> d) {
        if (which == 0) op.prepare(frozen.states[cur]);
        else if (which == 1) {
            for (std::size_t c = 0; c < N; ++c) mid[c] = 0.5 * (frozen.states[cur][c] + frozen.states[cur + 1][c]);
            op.prepare(mid);
        } else if (which == 3) {
            op.prepare(frozen.states[cur + 1]);
        }
        parallel_for(op.cells(), threads, [&](std::size_t i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t off = (i * n + j) * r2;
                op.evaluate(t, i, s.subspan(off, r2), d.subspan(off, r2));
            }
        });
    };
    for (std::size_t k = 0; k < steps; ++k) {
        cur = k;
        rk4_step(stage, h * static_cast<double>(k), h, y, k1, k2, k3, k4, tmp);
        check_and_clip(y, r2, opt, tr, h * static_cast<double>(k + 1));
        tr.states.push_back(y);
    }
    return tr;
}

}  // namespace

PicardResult picard_solve(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
                          const TimeGrid& grid, std::size_t max_iter, double tol, unsigned threads) {
    if (max_iter == 0) throw ConfigError("picard.max_iter", "must be at least 1");
    const std::size_t steps = grid.steps();
    const double h = grid.step();
    CoupledSystem sys(model, dgms, init, threads);
    VlasovOperator& op = sys.op();
    IntegrateOptions opt;
    opt.Y = &model.Y;

    EnsembleTrajectory frozen = empty_like(init, model.state_metric());
    for (std::size_t k = 0; k <= steps; ++k) {
        frozen.times.push_back(k == steps ? grid.T : h * static_cast<double>(k));
        frozen.states.push_back(init.states);
    }
    // residual checkpoints: about 20 evenly spaced stored times plus T
    const std::size_t every = std::max<std::size_t>(grid.stride, std::max<std::size_t>(1, steps / 20));
    std::vector<std::size_t> checks;
    for (std::size_t k = every; k < steps; k += every) checks.push_back(k);
    checks.push_back(steps);

    PicardResult res;
    UniformDistanceOptions dopt;
    dopt.threads = threads;
    for (std::size_t it = 1; it <= max_iter; ++it) {
        EnsembleTrajectory next = push_forward(op, frozen, init, steps, h, opt, threads);
        double r = 0.0;
        for (std::size_t k : checks)
            r = std::max(r, d_infinity(ensemble_measure(next, next.times[k]), ensemble_measure(frozen, frozen.times[k]), dopt));
        res.residuals.push_back(r);
        frozen = std::move(next);
        if (r < tol) {
            res.converged = true;
            res.iterations = it - 1;
            break;
        }
    }
    if (!res.converged) {
        throw Error("picard_solve: no convergence after " + std::to_string(max_iter) + " iterations (last residual " +
                    format_real(res.residuals.back()) + ")");
    }
    // keep every stride-th sample
    EnsembleTrajectory out = empty_like(init, frozen.state_metric);
    out.max_violation = frozen.max_violation;
    out.projections = frozen.projections;
    for (std::size_t k = 0; k <= steps; ++k) {
        if (k % grid.stride == 0 || k == steps) {
            out.times.push_back(frozen.times[k]);
            out.states.push_back(std::move(frozen.states[k]));
        }
    }
    res.trajectory = std::move(out);
    return res;
}

void write_trajectory_csv(std::ostream& out, const EnsembleTrajectory& traj) {
    out << "t,cell,particle";
    for (std::size_t c = 0; c < traj.r2; ++c) out << ",state_" << c + 1;
    out << '\n';
    const std::size_t m = traj.partition->size();
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        const std::string t = format_real(traj.times[k]);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < traj.n; ++j) {
                out << t << ',' << i << ',' << j;
                for (double v : traj.particle(k, i, j)) out << ',' << format_real(v);
                out << '\n';
            }
        }
    }
}

void write_distance_csv(std::ostream& out, const std::vector<DistanceRow>& rows) {
    out << "t,m,n,d_infinity\n";
    for (const auto& r : rows) out << format_real(r.t) << ',' << r.m << ',' << r.n << ',' << format_real(r.d_infinity) << '\n';
}

}  // namespace dgmflow
