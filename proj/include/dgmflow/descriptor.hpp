#pragma once

#include <array>
#include <cstddef>
#include <variant>
#include <vector>

#include "dgmflow/measure.hpp"

namespace dgmflow {

struct Dirac {
    std::vector<double> point;
    double mass = 1.0;
};

// Uniform on the straight segment [from, to] (an interval when the dimension is 1).
struct UniformSegment {
    std::vector<double> from, to;
    double mass = 1.0;
};

// Uniform on the arc [start, start + length] of a circle of circumference `period`.
// A full circle (length == period) gets equally spaced atoms.
struct UniformArc {
    double start = 0.0;
    double length = 1.0;
    double period = 1.0;
    double mass = 1.0;
};

// Uniform on the circle {center + radius (cos θ u + sin θ v)} in ℝ³; atoms start at θ = 0.
struct PlanarCircle {
    std::array<double, 3> center{}, u{}, v{};
    double radius = 1.0;
    double mass = 1.0;
};

// Image of the middle-thirds Cantor measure under z ↦ offset + scale·z (reduced mod period if > 0).
struct CantorMeasure {
    double offset = 0.0;
    double scale = 1.0;
    double period = 0.0;
    double mass = 1.0;
};

// Finite atomic target; quantiles follow the atom order given.
struct Atomic {
    DiscreteMeasure atoms;
};

using MeasureDescriptor = std::variant<Dirac, UniformSegment, UniformArc, PlanarCircle, CantorMeasure, Atomic>;

enum class QuantileRule {
    plus_one,  // j/(n+1)
    midpoint,  // (2j−1)/(2n)
};

double descriptor_mass(const MeasureDescriptor& d);
std::size_t descriptor_dim(const MeasureDescriptor& d);
MeasureDescriptor with_mass(MeasureDescriptor d, double mass);

// (mass/n) Σ δ_{z_j} with quantile or equal-spacing placement.
DiscreteMeasure empirical_approximation(const MeasureDescriptor& target, std::size_t n,
                                        QuantileRule rule = QuantileRule::plus_one);

// Quantile of the Cantor measure on [0,1]: inf{x : F(x) ≥ u}.
double cantor_quantile(double u);
// Cantor distribution function.
double cantor_cdf(double x);

}  // namespace dgmflow
