#include "dgmflow/dgm.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <string>

#include "dgmflow/error.hpp"
#include "dgmflow/parallel.hpp"

namespace dgmflow {
namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;

MeasureDescriptor zero_measure(std::size_t dim) { return Atomic{DiscreteMeasure(dim)}; }

double wrap1(double v) {
    v -= std::floor(v);
    return v >= 1.0 ? 0.0 : v;
}

MeasureDescriptor two_atoms(double a, double wa, double b, double wb) {
    DiscreteMeasure m(1);
    m.add({a}, wa);
    m.add({b}, wb);
    return Atomic{std::move(m)};
}

MeasureDescriptor ring(std::span<const double> x) { return Dirac{{wrap1(x[0])}, 2.0}; }

// Completed at x = 0 by the zero measure.
MeasureDescriptor star(std::span<const double> x) {
    if (x[0] <= 0.0) return zero_measure(1);
    return Dirac{{0.0}, 1.0};
}

MeasureDescriptor binary_tree(std::span<const double> x) {
    const double v = x[0];
    if (v <= 0.0) return Dirac{{0.0}, 2.0};
    if (v <= 0.5) return two_atoms(2.0 * v, 2.0, 0.5 * v, 1.0);
    return Dirac{{0.5 * v}, 1.0};
}

MeasureDescriptor circle_graphop(std::span<const double> x) {
    return two_atoms(wrap1(x[0] + 0.25), 1.0, wrap1(x[0] - 0.25), 1.0);
}

// Great circle perpendicular to x; θ = 0 points along the projection of e_z (e_x near the poles).
MeasureDescriptor spherical(std::span<const double> x) {
    std::array<double, 3> p{x[0], x[1], x[2]};
    const double r = std::sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
    if (r == 0.0) throw Error("spherical graphop: fiber requested at the origin");
    for (double& c : p) c /= r;
    std::array<double, 3> e = std::abs(p[2]) > 0.9 ? std::array<double, 3>{1, 0, 0} : std::array<double, 3>{0, 0, 1};
    const double dot = e[0] * p[0] + e[1] * p[1] + e[2] * p[2];
    std::array<double, 3> u{e[0] - dot * p[0], e[1] - dot * p[1], e[2] - dot * p[2]};
    const double nu = std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    for (double& c : u) c /= nu;
    const std::array<double, 3> v{p[1] * u[2] - p[2] * u[1], p[2] * u[0] - p[0] * u[2], p[0] * u[1] - p[1] * u[0]};
    PlanarCircle c;
    c.u = u;
    c.v = v;
    return c;
}

// Uniform probability on A_x; the middle third collapses to δ_{1/2}.
MeasureDescriptor tent(std::span<const double> x) {
    const double v = x[0];
    if (v < 1.0 / 3.0) return UniformSegment{{1.5 * v}, {1.0 - 1.5 * v}, 1.0};
    if (v <= 2.0 / 3.0) return Dirac{{0.5}, 1.0};
    return UniformSegment{{1.5 * (1.0 - v)}, {1.0 - 1.5 * (1.0 - v)}, 1.0};
}

MeasureDescriptor cantor(std::span<const double> x) { return CantorMeasure{wrap1(x[0]), 0.75, 1.0, 1.0}; }

// |x|·(uniform on the segment 0 → x/|x|), zero at the origin.
MeasureDescriptor triangle(std::span<const double> x) {
    const double n = std::abs(x[0]) + std::abs(x[1]);
    if (n <= 0.0) return zero_measure(2);
    return UniformSegment{{0.0, 0.0}, {x[0] / n, x[1] / n}, n};
}

// η_{1/i} = (1/i)·uniform on {1, 1/2, …, 1/i}; total mass x.
MeasureDescriptor discrete(std::span<const double> x) {
    const double v = x[0];
    if (v <= 0.0) return zero_measure(1);
    const double k = std::round(1.0 / v);
    if (k < 1 || std::abs(1.0 / k - v) > 1e-9 * v) throw Error("discrete DGM: " + format_real(v) + " is not of the form 1/i");
    const auto i = static_cast<std::size_t>(k);
    DiscreteMeasure m(1);
    for (std::size_t j = 1; j <= i; ++j) m.add({1.0 / static_cast<double>(j)}, v / k);
    return Atomic{std::move(m)};
}

// Grid of sample points plus the adjacent pairs used by continuity_modulus and sup_norm.
struct Grid {
    std::vector<std::vector<double>> pts;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
};

Grid space_grid(const VertexSpace& s, std::size_t g) {
    Grid grid;
    const double gd = static_cast<double>(g);
    switch (s.kind) {
        case SpaceKind::interval:
            for (std::size_t j = 0; j < g; ++j) grid.pts.push_back({static_cast<double>(j) / (gd - 1)});
            for (std::size_t j = 0; j + 1 < g; ++j) grid.pairs.push_back({j, j + 1});
            break;
        case SpaceKind::circle:
            for (std::size_t j = 0; j < g; ++j) grid.pts.push_back({static_cast<double>(j) / gd});
            for (std::size_t j = 0; j < g; ++j) grid.pairs.push_back({j, (j + 1) % g});
            break;
        case SpaceKind::square:
            for (std::size_t a = 0; a < g; ++a)
                for (std::size_t b = 0; b < g; ++b)
                    grid.pts.push_back({static_cast<double>(a) / (gd - 1), static_cast<double>(b) / (gd - 1)});
            for (std::size_t a = 0; a < g; ++a)
                for (std::size_t b = 0; b < g; ++b) {
                    if (a + 1 < g) grid.pairs.push_back({a * g + b, (a + 1) * g + b});
                    if (b + 1 < g) grid.pairs.push_back({a * g + b, a * g + b + 1});
                }
            break;
        case SpaceKind::triangle: {
            std::vector<std::vector<std::size_t>> id(g, std::vector<std::size_t>(g, 0));
            for (std::size_t a = 0; a < g; ++a)
                for (std::size_t b = 0; a + b < g; ++b) {
                    id[a][b] = grid.pts.size();
                    grid.pts.push_back({static_cast<double>(a) / (gd - 1), static_cast<double>(b) / (gd - 1)});
                }
            for (std::size_t a = 0; a < g; ++a)
                for (std::size_t b = 0; a + b < g; ++b) {
                    if (a + b + 1 < g) {
                        grid.pairs.push_back({id[a][b], id[a + 1][b]});
                        grid.pairs.push_back({id[a][b], id[a][b + 1]});
                    }
                }
            break;
        }
        case SpaceKind::sphere:
            for (std::size_t a = 0; a < g; ++a) {
                const double z = std::cos(std::numbers::pi * (static_cast<double>(a) + 0.5) / gd);
                const double r = std::sqrt(1.0 - z * z);
                for (std::size_t b = 0; b < g; ++b) {
                    const double th = two_pi * static_cast<double>(b) / gd;
                    grid.pts.push_back({r * std::cos(th), r * std::sin(th), z});
                }
            }
            for (std::size_t a = 0; a < g; ++a)
                for (std::size_t b = 0; b < g; ++b) {
                    grid.pairs.push_back({a * g + b, a * g + (b + 1) % g});
                    if (a + 1 < g) grid.pairs.push_back({a * g + b, (a + 1) * g + b});
                }
            break;
        case SpaceKind::discrete:
            for (std::size_t j = 1; j <= g; ++j) grid.pts.push_back({1.0 / static_cast<double>(j)});
            grid.pts.push_back({0.0});
            for (std::size_t j = 0; j < g; ++j) grid.pairs.push_back({j, j + 1});
            break;
    }
    return grid;
}

}  // namespace

std::vector<std::string> catalog_names() {
    return {"ring",     "star",     "binary_tree", "circle_graphop", "spherical",      "tent",
            "cantor",   "triangle", "discrete",    "complete",       "complete_circle"};
}

DigraphMeasure catalog(const std::string& name) {
    if (name == "ring") return {name, VertexSpace::circle(), ring};
    if (name == "star") return {name, VertexSpace::interval(), star};
    if (name == "binary_tree") return {name, VertexSpace::interval(), binary_tree};
    if (name == "circle_graphop") return {name, VertexSpace::circle(), circle_graphop};
    if (name == "spherical") return {name, VertexSpace::sphere(), spherical};
    if (name == "tent") return {name, VertexSpace::interval(), tent};
    if (name == "cantor") return {name, VertexSpace::circle(), cantor};
    if (name == "triangle") return {name, VertexSpace::triangle(), triangle};
    if (name == "discrete") return {name, VertexSpace::discrete(), discrete};
    if (name == "complete") return constant_dgm(name, VertexSpace::interval(), UniformSegment{{0.0}, {1.0}, 1.0});
    if (name == "complete_circle") return constant_dgm(name, VertexSpace::circle(), UniformArc{0.0, 1.0, 1.0, 1.0});
    std::string known;
    for (const auto& n : catalog_names()) known += (known.empty() ? "" : ", ") + n;
    throw Error("unknown DGM '" + name + "' (known: " + known + ")");
}

DigraphMeasure constant_dgm(std::string name, VertexSpace space, MeasureDescriptor fiber) {
    if (descriptor_dim(fiber) != space.ambient_dim()) throw Error("constant DGM: fiber dimension differs from the vertex space");
    return {std::move(name), space, [f = std::move(fiber)](std::span<const double>) { return f; }};
}

DiscreteMeasure fiber_approximation(const DigraphMeasure& eta, std::span<const double> x, std::size_t n,
                                    QuantileRule rule) {
    const MeasureDescriptor f = eta.fiber(x);
    if (descriptor_mass(f) <= 0.0) return DiscreteMeasure(eta.space.ambient_dim());
    return empirical_approximation(f, n, rule);
}

DiscretizedDGM discretize_dgm(const DigraphMeasure& eta, PartitionPtr partition, std::size_t n, QuantileRule rule) {
    if (!partition) throw Error("discretize_dgm: missing partition");
    if (n == 0) throw Error("n: number of atoms per cell must be at least 1");
    if (!(partition->space() == eta.space)) {
        throw Error("discretize_dgm: DGM '" + eta.name + "' lives on " + eta.space.name() + ", partition on " +
                    partition->space().name());
    }
    const Partition& p = *partition;
    DiscretizedDGM out;
    out.name = eta.name;
    out.n = n;
    out.b.resize(p.size());
    std::vector<DiscreteMeasure> fibers;
    fibers.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto rep = p.representative(i);
        double b;
        if (p.mass(i) > 0.0) {
            b = p.integrate(i, [&](std::span<const double> x) { return eta.norm(x); }) / p.mass(i);
        } else {
            b = eta.norm(rep);
        }
        out.b[i] = b;
        if (b <= 0.0) {
            fibers.emplace_back(p.space().ambient_dim());
            continue;
        }
        const MeasureDescriptor f = eta.fiber(rep);
        if (descriptor_mass(f) <= 0.0) {
            throw Error("discretize_dgm: cell " + std::to_string(i) + " has weight " + format_real(b) +
                        " but the fiber at its representative is zero");
        }
        fibers.push_back(empirical_approximation(with_mass(f, b), n, rule));
    }
    out.eta = FiberFunction(partition, std::move(fibers), eta.metric());
    return out;
}

FiberFunction sample_dgm(const DigraphMeasure& eta, PartitionPtr partition, std::size_t n) {
    if (!partition) throw Error("sample_dgm: missing partition");
    std::vector<DiscreteMeasure> fibers;
    for (std::size_t i = 0; i < partition->size(); ++i)
        fibers.push_back(fiber_approximation(eta, partition->representative(i), n));
    return FiberFunction(partition, std::move(fibers), eta.metric());
}

std::vector<std::vector<double>> cell_sample_points(const Partition& p, std::size_t i, std::size_t k) {
    if (k == 0) throw Error("cell_sample_points: need at least one point per axis");
    const Cell& c = p.cell(i);
    // grid parameters in [0,1), shrunk slightly so that upper faces stay inside half-open cells
    std::vector<double> t;
    if (k == 1) t = {0.5};
    else
        for (std::size_t j = 0; j < k; ++j) t.push_back(static_cast<double>(j) / static_cast<double>(k - 1) * (1.0 - 1e-9));
    std::vector<std::vector<double>> pts;
    switch (c.shape) {
        case Cell::Shape::interval:
        case Cell::Shape::arc:
            for (double a : t) pts.push_back({c.lo[0] + a * (c.hi[0] - c.lo[0])});
            break;
        case Cell::Shape::box:
            for (double a : t)
                for (double b : t) pts.push_back({c.lo[0] + a * (c.hi[0] - c.lo[0]), c.lo[1] + b * (c.hi[1] - c.lo[1])});
            break;
        case Cell::Shape::band_sector:
            for (double a : t)
                for (double b : t) {
                    const double z = c.lo[0] + a * (c.hi[0] - c.lo[0]);
                    const double th = c.lo[1] + b * (c.hi[1] - c.lo[1]);
                    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
                    pts.push_back({r * std::cos(th), r * std::sin(th), z});
                }
            break;
        case Cell::Shape::triangle: {
            const auto& v = c.tri;
            const double cx = (v[0][0] + v[1][0] + v[2][0]) / 3.0, cy = (v[0][1] + v[1][1] + v[2][1]) / 3.0;
            if (k == 1) {
                pts.push_back({cx, cy});
                break;
            }
            const double s = 1.0 - 1e-9;
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; a + b < k; ++b) {
                    const double la = static_cast<double>(a) / static_cast<double>(k - 1);
                    const double lb = static_cast<double>(b) / static_cast<double>(k - 1);
                    const double lc = 1.0 - la - lb;
                    const double x = la * v[0][0] + lb * v[1][0] + lc * v[2][0];
                    const double y = la * v[0][1] + lb * v[1][1] + lc * v[2][1];
                    pts.push_back({cx + s * (x - cx), cy + s * (y - cy)});
                }
            break;
        }
        case Cell::Shape::singleton: pts.push_back({1.0 / static_cast<double>(c.index)}); break;
        case Cell::Shape::tail:
            for (std::size_t j = 0; j < k; ++j) pts.push_back({1.0 / static_cast<double>(c.index + j)});
            pts.push_back({0.0});
            break;
    }
    return pts;
}

double dgm_uniform_error(const DiscretizedDGM& d, const DigraphMeasure& eta, std::size_t points_per_axis,
                         std::size_t n_ref, unsigned threads) {
    const Partition& p = d.partition();
    struct Job {
        std::size_t cell;
        std::vector<double> x;
    };
    std::vector<Job> jobs;
    for (std::size_t i = 0; i < p.size(); ++i)
        for (auto& x : cell_sample_points(p, i, points_per_axis)) jobs.push_back({i, std::move(x)});
    std::vector<double> out(jobs.size(), 0.0);
    const Metric metric = eta.metric();
    parallel_for(jobs.size(), threads, [&](std::size_t k) {
        const DiscreteMeasure ref = fiber_approximation(eta, jobs[k].x, n_ref);
        out[k] = bl_distance(d.eta.fibers[jobs[k].cell], ref, metric);
    });
    return out.empty() ? 0.0 : *std::max_element(out.begin(), out.end());
}

double continuity_modulus(const DigraphMeasure& eta, std::size_t grid_size, std::size_t atoms) {
    if (grid_size < 2) throw Error("continuity_modulus: grid_size must be at least 2");
    const Grid g = space_grid(eta.space, grid_size);
    std::vector<DiscreteMeasure> fibers;
    fibers.reserve(g.pts.size());
    for (const auto& x : g.pts) fibers.push_back(fiber_approximation(eta, x, atoms));
    const Metric metric = eta.metric();
    double worst = 0.0;
    for (auto [a, b] : g.pairs) worst = std::max(worst, bl_distance(fibers[a], fibers[b], metric));
    return worst;
}

double sup_norm(const DigraphMeasure& eta, std::size_t grid_size) {
    const Grid g = space_grid(eta.space, std::max<std::size_t>(grid_size, 2));
    double s = 0.0;
    for (const auto& x : g.pts) s = std::max(s, eta.norm(x));
    return s;
}

void write_dgm(std::ostream& out, const DiscretizedDGM& d, std::size_t ell) {
    const Partition& p = d.partition();
    out << p.size() << ',' << d.n << ',' << ell << '\n';
    for (std::size_t i = 0; i < p.size(); ++i) {
        out << i << ',' << format_real(d.b[i]);
        const DiscreteMeasure& f = d.eta.fibers[i];
        for (std::size_t k = 0; k < f.size(); ++k)
            for (double v : f.atom(k)) out << ',' << format_real(v);
        out << '\n';
    }
}

DiscretizedDGM read_dgm(std::istream& in, PartitionPtr partition, std::size_t* ell) {
    if (!partition) throw Error("read_dgm: missing partition");
    const Partition& p = *partition;
    const std::size_t dim = p.space().ambient_dim();
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
        }
        return false;
    };
    if (!next()) throw Error("DGM file is empty");
    if (line.rfind("m", 0) == 0 && !next()) throw Error("DGM file has no header values");
    const auto head = parse_real_row(line, lineno, "DGM file");
    if (head.size() != 3 || head[0] != static_cast<double>(p.size()) || head[1] < 1) {
        throw Error("DGM file header must be m,n,ell with m equal to the partition size " + std::to_string(p.size()));
    }
    DiscretizedDGM d;
    d.n = static_cast<std::size_t>(head[1]);
    if (ell) *ell = static_cast<std::size_t>(head[2]);
    d.b.resize(p.size());
    std::vector<DiscreteMeasure> fibers;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!next()) throw Error("DGM file ends after " + std::to_string(i) + " cells");
        const auto row = parse_real_row(line, lineno, "DGM file");
        if (row.size() < 2 || row[0] != static_cast<double>(i)) throw Error("DGM file line " + std::to_string(lineno) + ": expected cell " + std::to_string(i));
        const double b = row[1];
        d.b[i] = b;
        DiscreteMeasure f(dim);
        if (row.size() == 2) {
            if (b != 0.0) throw Error("DGM file line " + std::to_string(lineno) + ": positive weight without atoms");
        } else {
            if (row.size() != 2 + d.n * dim) throw Error("DGM file line " + std::to_string(lineno) + ": expected " + std::to_string(d.n * dim) + " coordinates");
            for (std::size_t j = 0; j < d.n; ++j)
                f.add(std::span<const double>(row.data() + 2 + j * dim, dim), b / static_cast<double>(d.n));
        }
        fibers.push_back(std::move(f));
    }
    d.eta = FiberFunction(partition, std::move(fibers), p.space().metric());
    return d;
}

}  // namespace dgmflow
