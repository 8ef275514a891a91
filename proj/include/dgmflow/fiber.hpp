#pragma once

#include <vector>

#include "dgmflow/measure.hpp"
#include "dgmflow/vertex_space.hpp"

namespace dgmflow {

// Piecewise-constant map x ↦ fibers[i] for x in cell i; `metric` acts on the fiber space.
struct FiberFunction {
    PartitionPtr partition;
    std::vector<DiscreteMeasure> fibers;
    Metric metric;

    FiberFunction() = default;
    FiberFunction(PartitionPtr p, std::vector<DiscreteMeasure> f, Metric m = {});
};

struct UniformDistanceOptions {
    DistanceOptions lp;
    unsigned threads = 1;
};

// sup_x d_BL(η¹_x, η²_x). Partitions that differ are aligned on their common refinement
// when both consist of intervals, arcs or boxes.
double d_infinity(const FiberFunction& eta1, const FiberFunction& eta2, const UniformDistanceOptions& opt = {});

// Per-cell d_BL on a shared partition.
std::vector<double> fiber_distances(const FiberFunction& eta1, const FiberFunction& eta2,
                                    const UniformDistanceOptions& opt = {});

// Atoms (x_i, y) with weight μ_X(A_i)·w on X × Y.
DiscreteMeasure product_lift(const FiberFunction& eta, const std::vector<double>& cell_masses);

// ℓ1 sum of the vertex metric and the fiber metric.
Metric product_metric(const FiberFunction& eta);

}  // namespace dgmflow
