#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dgmflow/descriptor.hpp"
#include "dgmflow/fiber.hpp"
#include "dgmflow/vertex_space.hpp"

namespace dgmflow {

// x ↦ η_x, a measure on the vertex space itself. A fiber of zero mass is the zero measure.
struct DigraphMeasure {
    std::string name;
    VertexSpace space;
    std::function<MeasureDescriptor(std::span<const double>)> fiber;

    double norm(std::span<const double> x) const { return descriptor_mass(fiber(x)); }
    Metric metric() const { return space.metric(); }
};

// ring, star, binary_tree, circle_graphop, spherical, tent, cantor, triangle, discrete,
// complete (interval), complete_circle.
DigraphMeasure catalog(const std::string& name);
std::vector<std::string> catalog_names();

// Fiber independent of x.
DigraphMeasure constant_dgm(std::string name, VertexSpace space, MeasureDescriptor fiber);

// n equal-weight atoms approximating η_x; empty when ‖η_x‖ = 0.
DiscreteMeasure fiber_approximation(const DigraphMeasure& eta, std::span<const double> x, std::size_t n,
                                    QuantileRule rule = QuantileRule::plus_one);

struct DiscretizedDGM {
    std::string name;
    std::size_t n = 0;
    std::vector<double> b;
    FiberFunction eta;  // fiber i = (b_i/n) Σ_j δ_{y_j}

    const Partition& partition() const { return *eta.partition; }
};

// Cell-averaged weights b_i and n-point approximation of the normalized fiber at the representative.
DiscretizedDGM discretize_dgm(const DigraphMeasure& eta, PartitionPtr partition, std::size_t n,
                              QuantileRule rule = QuantileRule::plus_one);

// η evaluated at the representatives with n atoms per fiber (the reference for the n-axis).
FiberFunction sample_dgm(const DigraphMeasure& eta, PartitionPtr partition, std::size_t n);

// max over cells i and over a grid of k points x per cell of d_BL(η^{m,n}_i, η_x), with η_x
// approximated by n_ref atoms. Estimates sup_x d_BL(η^{m,n}_x, η_x).
double dgm_uniform_error(const DiscretizedDGM& d, const DigraphMeasure& eta, std::size_t points_per_axis = 3,
                         std::size_t n_ref = 128, unsigned threads = 1);

// Sample points of cell i: a grid of k points per axis (triangles: barycentric grid).
std::vector<std::vector<double>> cell_sample_points(const Partition& p, std::size_t i, std::size_t k);

// Max d_BL(η_x, η_y) over adjacent pairs of a grid with the given number of points per axis.
double continuity_modulus(const DigraphMeasure& eta, std::size_t grid_size, std::size_t atoms = 64);

// ‖η‖ = sup_x ‖η_x‖ over a sample grid.
double sup_norm(const DigraphMeasure& eta, std::size_t grid_size = 65);

// First line "m,n,ell" values, then one row per cell: i,b,y_1...,y_n (coordinates flattened).
void write_dgm(std::ostream& out, const DiscretizedDGM& d, std::size_t ell = 1);
DiscretizedDGM read_dgm(std::istream& in, PartitionPtr partition, std::size_t* ell = nullptr);

}  // namespace dgmflow
