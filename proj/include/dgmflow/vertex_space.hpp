#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dgmflow/metric.hpp"

namespace dgmflow {

enum class SpaceKind { interval, circle, sphere, square, triangle, discrete };

// Compact vertex set X with its reference probability measure μ_X:
//   interval, square   Lebesgue
//   circle, sphere     normalized Haar (circle identified with [0,1))
//   triangle           {z ∈ ℝ²₊ : |z|₁ ≤ 1} with μ_X uniform on the segment (0,0)–(½,½)
//   discrete           {1/k} ∪ {0} with μ_X = Σ_{i≥2} 2^{−i+1} δ_{1/i}
struct VertexSpace {
    SpaceKind kind = SpaceKind::interval;

    static VertexSpace interval() { return {SpaceKind::interval}; }
    static VertexSpace circle() { return {SpaceKind::circle}; }
    static VertexSpace sphere() { return {SpaceKind::sphere}; }
    static VertexSpace square() { return {SpaceKind::square}; }
    static VertexSpace triangle() { return {SpaceKind::triangle}; }
    static VertexSpace discrete() { return {SpaceKind::discrete}; }
    static VertexSpace from_name(const std::string& name);

    std::size_t ambient_dim() const;
    Metric metric() const;
    std::string name() const;
    bool operator==(const VertexSpace&) const = default;
};

struct Cell {
    enum class Shape { interval, arc, box, triangle, band_sector, singleton, tail };
    Shape shape = Shape::interval;
    // interval/arc/box: lower and upper corners; band_sector: (z, longitude) corners
    std::vector<double> lo, hi;
    std::array<std::array<double, 2>, 3> tri{};
    // singleton {1/index}, or tail {1/k : k ≥ index} ∪ {0}
    std::size_t index = 0;
};

class Partition {
public:
    Partition(VertexSpace space, std::vector<Cell> cells);

    const VertexSpace& space() const { return space_; }
    std::size_t size() const { return cells_.size(); }
    const Cell& cell(std::size_t i) const { return cells_[i]; }
    std::span<const double> representative(std::size_t i) const {
        return {reps_.data() + i * dim_, dim_};
    }
    double mass(std::size_t i) const { return masses_[i]; }
    const std::vector<double>& masses() const { return masses_; }
    double diameter(std::size_t i) const;
    double max_diameter() const;
    // Axis-aligned bounding box of cell i as lo[0..d), hi[0..d).
    std::pair<std::vector<double>, std::vector<double>> bbox(std::size_t i) const;

    bool contains(std::size_t i, std::span<const double> x, double tol = 1e-12) const;
    // Unique cell containing x (first by index on shared boundaries); throws if none.
    std::size_t locate(std::span<const double> x) const;

    // ∫_{A_i} f dμ_X: 64-node Gauss-Legendre per cell (8×8 tensor in 2-D), exact sums on atoms.
    double integrate(std::size_t i, const std::function<double(std::span<const double>)>& f) const;

    std::size_t positive_mass_cells() const;
    bool same_cells(const Partition& other) const;

private:
    // Pieces of the diagonal segment (parameter t in [0,½], point (t,t)) owned by cell i.
    std::vector<std::pair<double, double>> diagonal_pieces(std::size_t i) const;

    VertexSpace space_;
    std::size_t dim_;
    std::vector<Cell> cells_;
    std::vector<double> reps_;
    std::vector<double> masses_;
    std::vector<std::vector<std::pair<double, double>>> diag_;
};

using PartitionPtr = std::shared_ptr<const Partition>;

PartitionPtr make_partition(const VertexSpace& space, std::size_t m);

double cell_mass(const Partition& p, std::size_t i);
std::span<const double> representative(const Partition& p, std::size_t i);

// One row per cell: id, mass, representative coordinates, bounding box (lo..., hi...).
void write_partition(std::ostream& out, const Partition& p);

}  // namespace dgmflow
