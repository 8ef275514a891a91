#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dgmflow/solver.hpp"

namespace dgmflow {

// Flat "dotted.key = value" text; '#' starts a comment.
struct ExperimentConfig {
    std::string model = "kuramoto";
    std::map<std::string, double> params;
    bool enforce_constraints = true;
    std::vector<std::string> dgms;  // empty: the model's defaults
    std::string space;              // empty: the first DGM's space
    std::size_t m = 8, n = 8;
    std::vector<std::size_t> sweep_n;
    std::size_t reference_n = 256;
    std::vector<double> sweep_times;
    double T = 1.0, dt = 0.0;
    std::size_t stride = 1;
    bool project = true;

    std::string initial_kind;  // point, segment, arc, uniform; empty: uniform in 1-D, else a point
    std::vector<double> initial_point, initial_from, initial_to;
    double arc_start = 0.0, arc_length = 0.0, shift = 0.0;

    std::size_t audit_samples = 50;
    std::size_t audit_grid = 16;
    std::uint64_t seed = 1;
    std::string output_dir = ".";
};

ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
// Cross-field checks (r matches the model, sweep increasing, sizes positive); throws ConfigError.
void validate(const ExperimentConfig& cfg);

// Everything needed to run one (m, n) level of a configuration.
struct Experiment {
    ModelSpec model;
    PartitionPtr partition;
    std::vector<DigraphMeasure> graphs;
    std::vector<DiscretizedDGM> dgms;
    InitialCondition initial;
    Ensemble init;
};
Experiment build_experiment(const ExperimentConfig& cfg, std::size_t m, std::size_t n);

struct SimulationSummary {
    std::size_t particles = 0;
    std::size_t steps = 0;
    double max_violation = 0.0;
    std::size_t projections = 0;
    double mass_drift = 0.0;       // max over t, i of |‖fiber_i(t)‖ − a_i|
    double conserved_drift = -1.0; // max per-particle drift of c·φ, −1 when the model has none
};

SimulationSummary run_simulate(const ExperimentConfig& cfg, unsigned threads = 1, std::ostream* trajectory_csv = nullptr);
void write_summary(std::ostream& out, const ExperimentConfig& cfg, const SimulationSummary& s);

struct ConvergenceResult {
    std::vector<DistanceRow> rows;  // grouped by time, n increasing
    bool monotone = true;           // nonincreasing in n at every time
    std::string detail;
};
ConvergenceResult run_converge(const ExperimentConfig& cfg, unsigned threads = 1);

struct AuditLine {
    std::string check;
    bool pass;
    std::string detail;
};
struct AuditReport {
    std::vector<AuditLine> lines;
    bool pass() const;
};
AuditReport run_audit(const ExperimentConfig& cfg, unsigned threads = 1);
void write_audit(std::ostream& out, const AuditReport& r);

struct DistanceReport {
    double bl = 0.0, tv = 0.0;
    double kr = -1.0;  // −1 when the masses differ
};
DistanceReport run_distance(const DiscreteMeasure& a, const DiscreteMeasure& b, const Metric& metric,
                            std::size_t max_atoms = 400);

}  // namespace dgmflow
