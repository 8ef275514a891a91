#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dgmflow/models.hpp"

namespace dgmflow {

// x ↦ (ν₀)_x, a finite measure on Y.
struct InitialCondition {
    std::string name;
    std::function<MeasureDescriptor(std::span<const double> x)> fiber;
};

InitialCondition initial_point(std::vector<double> y0);
InitialCondition initial_segment(std::vector<double> from, std::vector<double> to);
// Arc [start + shift·x₀, … + length] on a circle of circumference `period`.
InitialCondition initial_arc(double start, double length, double period, double shift = 0.0);
// Uniform on Y: full circle on a 1-D torus, the segment [lo, hi] on a 1-D box.
InitialCondition initial_uniform(const InvariantPolytope& Y);
// Multiplies every fiber mass by density(x).
InitialCondition with_density(InitialCondition ic, std::function<double(std::span<const double>)> density);

// Particles φ_{(i−1)n+j} cell-major, r2 values each, with cell weights a_i.
struct Ensemble {
    PartitionPtr partition;
    std::vector<double> a;
    std::size_t n = 0;
    std::size_t r2 = 0;
    std::vector<double> states;

    std::size_t particles() const { return states.size() / r2; }
};

// a_i = cell average of ‖(ν₀)_x‖ (fiber mass at x_i on null cells); particles are the
// empirical approximation of the normalized fiber at x_i. Requires Σ a_i μ_X(A_i) = 1 ± 1e−9.
Ensemble discretize_initial(const InitialCondition& nu0, PartitionPtr partition, std::size_t n,
                            QuantileRule rule = QuantileRule::plus_one);

struct TimeGrid {
    double T = 1.0;
    double dt = 0.0;         // 0 means T/1000
    std::size_t stride = 1;  // store every stride-th step

    std::size_t steps() const;
    double step() const;
};

using Rhs = std::function<void(double t, std::span<const double> states, std::span<double> deriv)>;

// F^{m,n} for the whole particle system, coupling resolved into cell tables once.
class CoupledSystem {
public:
    CoupledSystem(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
                  unsigned threads = 1);
    void operator()(double t, std::span<const double> states, std::span<double> deriv);
    const VlasovOperator& op() const { return op_; }
    VlasovOperator& op() { return op_; }

private:
    VlasovOperator op_;
    unsigned threads_;
};

Rhs build_rhs(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
              unsigned threads = 1);

struct EnsembleTrajectory {
    PartitionPtr partition;
    std::vector<double> a;
    std::size_t n = 0;
    std::size_t r2 = 0;
    Metric state_metric;
    std::vector<double> times;
    std::vector<std::vector<double>> states;  // one snapshot per stored time
    double max_violation = 0.0;                // largest Y violation seen before projection
    std::size_t projections = 0;

    // Index of the stored time equal to t (relative tolerance 1e−9); throws when off-grid.
    std::size_t index_of(double t) const;
    // Snapshot at any t in [times.front, times.back], piecewise linear between stored samples.
    std::vector<double> interpolate(double t) const;
    std::span<const double> particle(std::size_t k, std::size_t cell, std::size_t j) const {
        return std::span<const double>(states[k]).subspan((cell * n + j) * r2, r2);
    }
};

struct IntegrateOptions {
    const InvariantPolytope* Y = nullptr;  // checked after every step when set
    bool project = true;                   // clip violations ≤ tolerance back onto Y
    double tolerance = 1e-6;
};

// Classical fixed-step RK4.
EnsembleTrajectory integrate(const Rhs& rhs, const Ensemble& init, const TimeGrid& grid, const IntegrateOptions& opt = {},
                             const Metric& state_metric = {});

// Model-level convenience: builds the coupled system and integrates with Y checks on.
EnsembleTrajectory simulate(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
                            const TimeGrid& grid, bool project = true, unsigned threads = 1);

// (a_i/n) Σ_j δ_{φ_{(i−1)n+j}(t)} per cell; t must be a stored time.
FiberFunction ensemble_measure(const EnsembleTrajectory& traj, double t);

// Characteristic of V[η, ν_·, h] at cell x with ν_· read from `frozen` (linear in time between
// stored samples). Runs backward when t_to < t_from. dt = 0 uses the frozen grid spacing.
std::vector<double> flow_map(VlasovOperator& op, const EnsembleTrajectory& frozen, std::size_t cell, double t_from,
                             double t_to, std::span<const double> phi0, double dt = 0.0);

struct PicardResult {
    EnsembleTrajectory trajectory;
    std::vector<double> residuals;  // sup over stored times of d_∞(ν^{k+1}_t, ν^k_t)
    std::size_t iterations = 0;     // pushforwards until the fixed point was reached
    bool converged = false;
};

// ν^{k+1}_t = ν₀ pushed along the flow frozen at ν^k, starting from ν^0_t ≡ ν₀.
// Throws after max_iter sweeps without reaching tol, quoting the last residual.
PicardResult picard_solve(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, const Ensemble& init,
                          const TimeGrid& grid, std::size_t max_iter = 60, double tol = 1e-9, unsigned threads = 1);

// CSV: t,cell,particle,state_1..state_r2 (17 significant digits).
void write_trajectory_csv(std::ostream& out, const EnsembleTrajectory& traj);

struct DistanceRow {
    double t;
    std::size_t m, n;
    double d_infinity;
};
void write_distance_csv(std::ostream& out, const std::vector<DistanceRow>& rows);

}  // namespace dgmflow
