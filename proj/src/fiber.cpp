#include "dgmflow/fiber.hpp"

#include <algorithm>

#include "dgmflow/error.hpp"
#include "dgmflow/parallel.hpp"

namespace dgmflow {

FiberFunction::FiberFunction(PartitionPtr p, std::vector<DiscreteMeasure> f, Metric m)
    : partition(std::move(p)), fibers(std::move(f)), metric(std::move(m)) {
    if (!partition) throw Error("fiber function needs a partition");
    if (fibers.size() != partition->size()) throw Error("fiber function needs exactly one fiber per cell");
}

namespace {

bool boxy(const Partition& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto s = p.cell(i).shape;
        if (s != Cell::Shape::interval && s != Cell::Shape::arc && s != Cell::Shape::box) return false;
    }
    return true;
}

bool overlap(const Cell& a, const Cell& b) {
    for (std::size_t k = 0; k < a.lo.size(); ++k) {
        if (std::min(a.hi[k], b.hi[k]) - std::max(a.lo[k], b.lo[k]) <= 1e-15) return false;
    }
    return true;
}

std::vector<double> run_pairs(const std::vector<std::pair<const DiscreteMeasure*, const DiscreteMeasure*>>& jobs,
                              const Metric& metric, const UniformDistanceOptions& opt) {
    std::vector<double> out(jobs.size(), 0.0);
    parallel_for(jobs.size(), opt.threads,
                 [&](std::size_t k) { out[k] = bl_distance(*jobs[k].first, *jobs[k].second, metric, opt.lp); });
    return out;
}

}  // namespace

std::vector<double> fiber_distances(const FiberFunction& eta1, const FiberFunction& eta2,
                                    const UniformDistanceOptions& opt) {
    if (!eta1.partition || !eta2.partition || !eta1.partition->same_cells(*eta2.partition)) {
        throw Error("fiber_distances: fiber functions live on different partitions");
    }
    std::vector<std::pair<const DiscreteMeasure*, const DiscreteMeasure*>> jobs;
    for (std::size_t i = 0; i < eta1.fibers.size(); ++i) jobs.push_back({&eta1.fibers[i], &eta2.fibers[i]});
    return run_pairs(jobs, eta1.metric, opt);
}

double d_infinity(const FiberFunction& eta1, const FiberFunction& eta2, const UniformDistanceOptions& opt) {
    if (!eta1.partition || !eta2.partition) throw Error("d_infinity: missing partition");
    if (!(eta1.metric == eta2.metric)) throw Error("d_infinity: fiber metrics differ");
    const Partition& p1 = *eta1.partition;
    const Partition& p2 = *eta2.partition;
    if (p1.same_cells(p2)) {
        const auto d = fiber_distances(eta1, eta2, opt);
        return d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
    }
    if (!(p1.space() == p2.space()) || !boxy(p1) || !boxy(p2)) {
        throw Error("d_infinity: partition mismatch that cannot be aligned (" + p1.space().name() + ", " +
                    std::to_string(p1.size()) + " vs " + p2.space().name() + ", " + std::to_string(p2.size()) + " cells)");
    }
    // common refinement: every pair of overlapping cells is a cell of the refinement
    std::vector<std::pair<const DiscreteMeasure*, const DiscreteMeasure*>> jobs;
    for (std::size_t i = 0; i < p1.size(); ++i)
        for (std::size_t j = 0; j < p2.size(); ++j)
            if (overlap(p1.cell(i), p2.cell(j))) jobs.push_back({&eta1.fibers[i], &eta2.fibers[j]});
    const auto d = run_pairs(jobs, eta1.metric, opt);
    return d.empty() ? 0.0 : *std::max_element(d.begin(), d.end());
}

DiscreteMeasure product_lift(const FiberFunction& eta, const std::vector<double>& cell_masses) {
    if (!eta.partition) throw Error("product_lift: missing partition");
    const Partition& p = *eta.partition;
    if (cell_masses.size() != p.size()) throw Error("product_lift: one cell mass per cell required");
    std::size_t ydim = 0;
    for (const auto& f : eta.fibers)
        if (!f.empty()) ydim = f.dim();
    const std::size_t xdim = p.space().ambient_dim();
    DiscreteMeasure out(xdim + ydim);
    std::vector<double> pt(xdim + ydim);
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto x = p.representative(i);
        std::copy(x.begin(), x.end(), pt.begin());
        const DiscreteMeasure& f = eta.fibers[i];
        for (std::size_t k = 0; k < f.size(); ++k) {
            auto y = f.atom(k);
            std::copy(y.begin(), y.end(), pt.begin() + static_cast<std::ptrdiff_t>(xdim));
            out.add(pt, cell_masses[i] * f.weight(k));
        }
    }
    return out;
}

Metric product_metric(const FiberFunction& eta) {
    if (!eta.partition) throw Error("product_metric: missing partition");
    const VertexSpace& s = eta.partition->space();
    return s.metric().product(s.ambient_dim(), eta.metric);
}

}  // namespace dgmflow
