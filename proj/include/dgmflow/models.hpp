#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dgmflow/dgm.hpp"
#include "dgmflow/metric.hpp"

namespace dgmflow {

struct Halfspace {
    std::vector<double> normal;  // outer normal υ
    double offset = 0.0;         // υ·φ ≤ offset
    std::string label;
};

// Compact convex Y = ∩ {υ_k·φ ≤ c_k}. An empty halfspace list with periods set means a torus.
struct InvariantPolytope {
    std::size_t dim = 0;
    std::vector<Halfspace> halfspaces;
    std::vector<double> lo, hi;  // bounding box
    std::vector<double> periods; // per-coordinate period, 0 = none

    bool is_torus() const { return halfspaces.empty(); }
    // max_k (υ_k·φ − c_k)/|υ_k|, ≤ 0 inside
    double violation(std::span<const double> phi) const;
    bool contains(std::span<const double> phi, double tol = 1e-9) const { return violation(phi) <= tol; }
    // Euclidean projection by Dykstra's alternating projections.
    std::vector<double> project(std::span<const double> phi) const;
    // All vertices, by solving every dim-subset of active constraints.
    std::vector<std::vector<double>> vertices() const;
};

using KernelFn = std::function<void(double t, std::span<const double> psi, std::span<const double> phi, std::span<double> out)>;
using FieldFn = std::function<void(double t, std::span<const double> x, std::span<const double> phi, std::span<double> out)>;

// Coupling kernel g(t, ψ, φ): ψ is the neighbour's state, φ the particle's own state.
// When `features` is set, g(t, ψ, φ) = combine(t, φ, features(ψ)) with combine linear in the
// feature vector, so sums over ψ collapse to sums of features.
struct Kernel {
    KernelFn eval;  // out += g
    std::size_t n_features = 0;
    std::function<void(std::span<const double> psi, std::span<double> feat)> features;
    std::function<void(double t, std::span<const double> phi, std::span<const double> feat, std::span<double> out)> combine;  // out += …
};

struct ModelSpec {
    std::string name;
    std::size_t r = 1;   // number of DGMs
    std::size_t r2 = 1;  // state dimension
    std::vector<Kernel> g;
    FieldFn h;           // out += h
    InvariantPolytope Y;
    std::map<std::string, double> params;
    std::vector<double> conserved;  // c with c·V ≡ 0 when nonempty
    std::vector<std::string> default_dgms;
    std::string default_space;

    Metric state_metric() const { return Metric::periodic(Y.periods); }
};

// kuramoto, sis, seirs, lv, hk. Unknown parameters are rejected; missing ones take defaults.
// Constraint violations throw unless `enforce` is false (used to build negative controls).
ModelSpec builtin_model(const std::string& name, const std::map<std::string, double>& params = {}, bool enforce = true);
std::vector<std::string> builtin_model_names();
// Default parameter set of a builtin model.
std::map<std::string, double> default_params(const std::string& name);
// Violated parameter inequalities, human readable; empty when all hold.
std::vector<std::string> check_constraints(const std::string& name, const std::map<std::string, double>& params);

// Cell-to-cell coupling weights of one discretized DGM onto an ensemble partition:
// C[i][p] = (b_i / n_dgm) · #{j : y_{ij} ∈ A_p}.
struct CouplingTable {
    std::vector<std::vector<std::pair<std::size_t, double>>> rows;
};
CouplingTable build_coupling(const DiscretizedDGM& d, const Partition& ensemble_partition);

// V[η^{m,n}, ν^{m,n}, h^m](t, x_i, φ) for a snapshot of particle states (m·n·r2 values, cell-major).
class VlasovOperator {
public:
    VlasovOperator(ModelSpec model, std::vector<DiscretizedDGM> dgms, PartitionPtr partition, std::vector<double> a,
                   std::size_t n);

    // Bind a snapshot; precomputes per-cell feature sums. Must be called before evaluate.
    void prepare(std::span<const double> states);
    // out = V(t, cell, φ); requires prepare. Safe to call concurrently.
    void evaluate(double t, std::size_t cell, std::span<const double> phi, std::span<double> out) const;
    // deriv[k] = V at every particle of the bound snapshot.
    void field(double t, std::span<const double> states, std::span<double> deriv, unsigned threads = 1);

    const ModelSpec& model() const { return model_; }
    const Partition& partition() const { return *partition_; }
    PartitionPtr partition_ptr() const { return partition_; }
    const std::vector<double>& a() const { return a_; }
    std::size_t n() const { return n_; }
    std::size_t cells() const { return partition_->size(); }
    const std::vector<CouplingTable>& couplings() const { return tables_; }
    const std::vector<DiscretizedDGM>& dgms() const { return dgms_; }

private:
    ModelSpec model_;
    std::vector<DiscretizedDGM> dgms_;
    PartitionPtr partition_;
    std::vector<double> a_;
    std::size_t n_;
    std::vector<CouplingTable> tables_;
    std::span<const double> states_;
    // per kernel: per cell, Σ_p C[i][p]·(a_p/n)·Σ_q features(ψ_pq)
    std::vector<std::vector<double>> coupled_features_;
};

// One-shot evaluation of V at (t, cell, φ) for a snapshot.
std::vector<double> vlasov_operator(const VlasovOperator& op, std::span<const double> states, double t,
                                    std::size_t cell, std::span<const double> phi);

struct BonyReport {
    bool skipped = false;  // torus: no boundary
    double max_flux = 0.0;
    std::string worst_face;
    std::vector<double> worst_point;
    std::size_t worst_cell = 0;
    std::size_t evaluations = 0;
    bool pass() const { return skipped || max_flux <= 1e-9; }
};

// Samples boundary points of Y against vertex ensembles and random ensembles inside Y.
BonyReport bony_check(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, PartitionPtr partition,
                      std::size_t n, std::size_t samples, std::uint64_t seed = 1);

struct LipschitzEstimate {
    std::vector<double> kernel;  // ℒ(g_ℓ)
    double field = 0.0;          // ℒ(h)
    double nu_norm = 0.0;        // ‖ν‖
    std::vector<double> eta_norm;  // ‖η^ℓ‖
    double L1 = 0.0;
};

// Sampled finite-difference Lipschitz constants over Y² (Euclidean norm, minimal image on periodic axes).
LipschitzEstimate lipschitz_estimate(const VlasovOperator& op, std::size_t samples = 4000, std::uint64_t seed = 7);

// Empirical sup |V(φ) − V(φ')| / |φ − φ'| over sampled pairs in Y for a snapshot.
double vlasov_lipschitz_sample(VlasovOperator& op, std::span<const double> states, std::size_t samples,
                               std::uint64_t seed = 11);

// Random point of Y: rejection from the bounding box, falling back to random vertex mixtures.
std::vector<double> sample_in_Y(const InvariantPolytope& Y, std::mt19937_64& rng);

}  // namespace dgmflow
