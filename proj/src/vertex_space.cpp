#include "dgmflow/vertex_space.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss.hpp>
#include <cmath>
#include <numbers>
#include <ostream>

#include "dgmflow/error.hpp"
#include "dgmflow/measure.hpp"

namespace dgmflow {

using boost::math::quadrature::gauss;
constexpr double two_pi = 2.0 * std::numbers::pi;

VertexSpace VertexSpace::from_name(const std::string& name) {
    if (name == "interval") return interval();
    if (name == "circle") return circle();
    if (name == "sphere") return sphere();
    if (name == "square") return square();
    if (name == "triangle") return triangle();
    if (name == "discrete") return discrete();
    throw Error("unknown vertex space '" + name + "'");
}

std::size_t VertexSpace::ambient_dim() const {
    switch (kind) {
        case SpaceKind::sphere: return 3;
        case SpaceKind::square:
        case SpaceKind::triangle: return 2;
        default: return 1;
    }
}

Metric VertexSpace::metric() const { return kind == SpaceKind::circle ? Metric::circle(1.0) : Metric::l1(); }

std::string VertexSpace::name() const {
    switch (kind) {
        case SpaceKind::interval: return "interval";
        case SpaceKind::circle: return "circle";
        case SpaceKind::sphere: return "sphere";
        case SpaceKind::square: return "square";
        case SpaceKind::triangle: return "triangle";
        case SpaceKind::discrete: return "discrete";
    }
    return "?";
}

namespace {

using Tri = std::array<std::array<double, 2>, 3>;

double l1(const std::array<double, 2>& a, const std::array<double, 2>& b) {
    return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
}

double tri_diameter(const Tri& t) { return std::max({l1(t[0], t[1]), l1(t[1], t[2]), l1(t[0], t[2])}); }

// Barycentric coordinates of p in t.
std::array<double, 3> barycentric(const Tri& t, double x, double y) {
    const double det = (t[1][0] - t[0][0]) * (t[2][1] - t[0][1]) - (t[2][0] - t[0][0]) * (t[1][1] - t[0][1]);
    const double l1v = ((t[1][0] - x) * (t[2][1] - y) - (t[2][0] - x) * (t[1][1] - y)) / det;
    const double l2v = ((t[2][0] - x) * (t[0][1] - y) - (t[0][0] - x) * (t[2][1] - y)) / det;
    return {l1v, l2v, 1.0 - l1v - l2v};
}

double discrete_atom_mass(std::size_t i) { return i < 2 ? 0.0 : std::ldexp(1.0, 1 - static_cast<int>(i)); }

double discrete_tail_mass(std::size_t first) {
    return std::ldexp(1.0, 2 - static_cast<int>(std::max<std::size_t>(first, 2)));
}

std::size_t isqrt(std::size_t m) {
    auto k = static_cast<std::size_t>(std::sqrt(static_cast<double>(m)));
    while (k * k > m) --k;
    while ((k + 1) * (k + 1) <= m) ++k;
    return k;
}

std::array<double, 3> sphere_point(double z, double th) {
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(th), r * std::sin(th), z};
}

double wrap_angle(double th) {
    th = std::fmod(th, two_pi);
    if (th < 0) th += two_pi;
    return th;
}

// Split the cell with the largest diameter (lowest index on ties) until there are m cells.
template <class Diam, class Split>
void refine_to(std::vector<Cell>& cells, std::size_t m, Diam diam, Split split) {
    while (cells.size() < m) {
        std::size_t best = 0;
        double bd = -1.0;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const double d = diam(cells[i]);
            if (d > bd * (1 + 1e-12)) {
                bd = d;
                best = i;
            }
        }
        auto [a, b] = split(cells[best]);
        cells[best] = a;
        cells.insert(cells.begin() + static_cast<std::ptrdiff_t>(best) + 1, b);
    }
}

std::vector<Cell> interval_cells(std::size_t m, Cell::Shape shape) {
    std::vector<Cell> cells(m);
    for (std::size_t i = 0; i < m; ++i) {
        cells[i].shape = shape;
        cells[i].lo = {static_cast<double>(i) / static_cast<double>(m)};
        cells[i].hi = {static_cast<double>(i + 1) / static_cast<double>(m)};
    }
    return cells;
}

std::vector<Cell> square_cells(std::size_t m) {
    const std::size_t k = isqrt(m);
    std::vector<Cell> cells;
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q < k; ++q) {
            Cell c;
            c.shape = Cell::Shape::box;
            c.lo = {static_cast<double>(p) / k, static_cast<double>(q) / k};
            c.hi = {static_cast<double>(p + 1) / k, static_cast<double>(q + 1) / k};
            cells.push_back(c);
        }
    refine_to(
        cells, m, [](const Cell& c) { return (c.hi[0] - c.lo[0]) + (c.hi[1] - c.lo[1]); },
        [](const Cell& c) {
            const std::size_t ax = (c.hi[1] - c.lo[1]) > (c.hi[0] - c.lo[0]) * (1 + 1e-12) ? 1 : 0;
            Cell a = c, b = c;
            const double mid = 0.5 * (c.lo[ax] + c.hi[ax]);
            a.hi[ax] = mid;
            b.lo[ax] = mid;
            return std::pair{a, b};
        });
    return cells;
}

std::vector<Cell> triangle_cells(std::size_t m) {
    const std::size_t k = isqrt(m);
    const double h = 1.0 / static_cast<double>(k);
    std::vector<Cell> cells;
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; p + q < k; ++q) {
            const double x = p * h, y = q * h;
            Cell up;
            up.shape = Cell::Shape::triangle;
            up.tri = {{{x, y}, {x + h, y}, {x, y + h}}};
            cells.push_back(up);
            if (p + q + 1 < k) {
                Cell down;
                down.shape = Cell::Shape::triangle;
                down.tri = {{{x + h, y + h}, {x, y + h}, {x + h, y}}};
                cells.push_back(down);
            }
        }
    refine_to(
        cells, m, [](const Cell& c) { return tri_diameter(c.tri); },
        [](const Cell& c) {
            // bisect the longest edge through the opposite vertex
            const Tri& t = c.tri;
            std::size_t opp = 0;
            double best = -1;
            for (std::size_t v = 0; v < 3; ++v) {
                const double len = l1(t[(v + 1) % 3], t[(v + 2) % 3]);
                if (len > best * (1 + 1e-12)) {
                    best = len;
                    opp = v;
                }
            }
            const auto& p1 = t[(opp + 1) % 3];
            const auto& p2 = t[(opp + 2) % 3];
            const std::array<double, 2> mid{0.5 * (p1[0] + p2[0]), 0.5 * (p1[1] + p2[1])};
            Cell a = c, b = c;
            a.tri = {{t[opp], p1, mid}};
            b.tri = {{t[opp], mid, p2}};
            return std::pair{a, b};
        });
    return cells;
}

Cell band_sector(double z0, double z1, double t0, double t1) {
    Cell c;
    c.shape = Cell::Shape::band_sector;
    c.lo = {z0, t0};
    c.hi = {z1, t1};
    return c;
}

// Zonal equal-area layout: one cap per pole, collars whose height tracks the cell side,
// equal longitude sectors inside each collar. Every cell has area 4π/m.
std::vector<Cell> sphere_cells(std::size_t m) {
    std::vector<Cell> cells;
    if (m <= 2) {
        if (m == 1) cells.push_back(band_sector(-1.0, 1.0, 0.0, two_pi));
        else {
            cells.push_back(band_sector(-1.0, 0.0, 0.0, two_pi));
            cells.push_back(band_sector(0.0, 1.0, 0.0, two_pi));
        }
        return cells;
    }
    const double md = static_cast<double>(m);
    const double cap_colat = std::acos(1.0 - 2.0 / md);
    const double side = std::sqrt(4.0 * std::numbers::pi / md);
    const auto collars = static_cast<std::size_t>(
        std::max(1.0, std::round((std::numbers::pi - 2.0 * cap_colat) / side)));
    const double step = (std::numbers::pi - 2.0 * cap_colat) / static_cast<double>(collars);

    // cells per collar from the ideal collar areas, rounding with carry so the total is m − 2
    std::vector<std::size_t> counts(collars);
    double carry = 0.0;
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < collars; ++c) {
        const double a0 = cap_colat + step * static_cast<double>(c);
        const double ideal = (std::cos(a0) - std::cos(a0 + step)) * md / 2.0 + carry;
        auto k = static_cast<std::size_t>(std::max(1.0, std::round(ideal)));
        if (c + 1 == collars) k = m - 2 - assigned;
        carry = ideal - static_cast<double>(k);
        counts[c] = k;
        assigned += k;
    }

    // walk from the south pole so z increases with the cell index
    std::size_t below = 1;
    cells.push_back(band_sector(-1.0, -1.0 + 2.0 / md, 0.0, two_pi));
    for (std::size_t c = collars; c-- > 0;) {
        const double z0 = -1.0 + 2.0 * static_cast<double>(below) / md;
        below += counts[c];
        const double z1 = -1.0 + 2.0 * static_cast<double>(below) / md;
        for (std::size_t s = 0; s < counts[c]; ++s) {
            const double t0 = two_pi * static_cast<double>(s) / static_cast<double>(counts[c]);
            const double t1 = s + 1 == counts[c] ? two_pi : two_pi * static_cast<double>(s + 1) / static_cast<double>(counts[c]);
            cells.push_back(band_sector(z0, z1, t0, t1));
        }
    }
    cells.push_back(band_sector(1.0 - 2.0 / md, 1.0, 0.0, two_pi));
    return cells;
}

std::vector<Cell> discrete_cells(std::size_t m) {
    std::vector<Cell> cells(m);
    for (std::size_t i = 0; i < m; ++i) {
        cells[i].shape = i + 1 < m ? Cell::Shape::singleton : Cell::Shape::tail;
        cells[i].index = i + 1;
    }
    return cells;
}

template <class F>
double gl64(F f, double a, double b) {
    if (b <= a) return 0.0;
    return gauss<double, 64>::integrate(f, a, b);
}

template <class F>
double gl8x8(F f, double a0, double b0, double a1, double b1) {
    return gauss<double, 8>::integrate(
        [&](double u) { return gauss<double, 8>::integrate([&](double v) { return f(u, v); }, a1, b1); }, a0, b0);
}

}  // namespace

Partition::Partition(VertexSpace space, std::vector<Cell> cells)
    : space_(space), dim_(space.ambient_dim()), cells_(std::move(cells)) {
    const std::size_t m = cells_.size();
    if (m == 0) throw Error("partition needs at least one cell");
    masses_.assign(m, 0.0);
    reps_.assign(m * dim_, 0.0);
    diag_.resize(m);

    if (space_.kind == SpaceKind::triangle) {
        // breakpoints where the diagonal t ↦ (t,t) crosses any cell edge
        std::vector<double> bp = {0.0, 0.5};
        for (const Cell& c : cells_) {
            for (std::size_t v = 0; v < 3; ++v) {
                const auto& a = c.tri[v];
                const auto& b = c.tri[(v + 1) % 3];
                const double dx = b[0] - a[0], dy = b[1] - a[1];
                const double den = dx - dy;
                if (std::abs(den) < 1e-15) continue;  // edge parallel to the diagonal
                const double s = (a[1] - a[0]) / den;
                if (s < -1e-12 || s > 1 + 1e-12) continue;
                const double t = a[0] + s * dx;
                if (t > 0 && t < 0.5) bp.push_back(t);
            }
        }
        std::sort(bp.begin(), bp.end());
        bp.erase(std::unique(bp.begin(), bp.end(), [](double x, double y) { return y - x < 1e-14; }), bp.end());
        for (std::size_t k = 0; k + 1 < bp.size(); ++k) {
            const double mid = 0.5 * (bp[k] + bp[k + 1]);
            const std::array<double, 2> pt{mid, mid};
            std::size_t owner = m;
            for (std::size_t i = 0; i < m && owner == m; ++i)
                if (contains(i, pt, 1e-12)) owner = i;
            if (owner == m) throw Error("triangle partition does not cover the diagonal");
            auto& pieces = diag_[owner];
            if (!pieces.empty() && std::abs(pieces.back().second - bp[k]) < 1e-14) pieces.back().second = bp[k + 1];
            else pieces.push_back({bp[k], bp[k + 1]});
        }
    }

    for (std::size_t i = 0; i < m; ++i) {
        const Cell& c = cells_[i];
        double* r = &reps_[i * dim_];
        switch (c.shape) {
            case Cell::Shape::interval:
            case Cell::Shape::arc:
                masses_[i] = c.hi[0] - c.lo[0];
                r[0] = 0.5 * (c.lo[0] + c.hi[0]);
                break;
            case Cell::Shape::box:
                masses_[i] = (c.hi[0] - c.lo[0]) * (c.hi[1] - c.lo[1]);
                r[0] = 0.5 * (c.lo[0] + c.hi[0]);
                r[1] = 0.5 * (c.lo[1] + c.hi[1]);
                break;
            case Cell::Shape::triangle: {
                double len = 0.0, moment = 0.0;
                for (auto [a, b] : diag_[i]) {
                    len += b - a;
                    moment += 0.5 * (b * b - a * a);
                }
                masses_[i] = 2.0 * len;
                if (len > 0) {
                    r[0] = r[1] = moment / len;
                } else {
                    r[0] = (c.tri[0][0] + c.tri[1][0] + c.tri[2][0]) / 3.0;
                    r[1] = (c.tri[0][1] + c.tri[1][1] + c.tri[2][1]) / 3.0;
                }
                break;
            }
            case Cell::Shape::band_sector: {
                const double z0 = c.lo[0], z1 = c.hi[0], t0 = c.lo[1], t1 = c.hi[1];
                masses_[i] = (z1 - z0) / 2.0 * (t1 - t0) / two_pi;
                // area barycenter, then back onto the sphere with z kept inside the band
                const double ring = gl64([](double z) { return std::sqrt(std::max(0.0, 1 - z * z)); }, z0, z1) / (z1 - z0);
                const double bx = ring * (std::sin(t1) - std::sin(t0)) / (t1 - t0);
                const double by = ring * (std::cos(t0) - std::cos(t1)) / (t1 - t0);
                const double bz = 0.5 * (z0 + z1);
                const double norm = std::sqrt(bx * bx + by * by + bz * bz);
                const double z = norm > 1e-12 ? std::clamp(bz / norm, z0, z1) : 0.5 * (z0 + z1);
                auto p = sphere_point(z, 0.5 * (t0 + t1));
                std::copy(p.begin(), p.end(), r);
                break;
            }
            case Cell::Shape::singleton:
                masses_[i] = discrete_atom_mass(c.index);
                r[0] = 1.0 / static_cast<double>(c.index);
                break;
            case Cell::Shape::tail:
                masses_[i] = discrete_tail_mass(c.index);
                r[0] = 1.0 / static_cast<double>(c.index);
                break;
        }
    }
}

double Partition::diameter(std::size_t i) const {
    const Cell& c = cells_[i];
    switch (c.shape) {
        case Cell::Shape::interval:
        case Cell::Shape::arc: return c.hi[0] - c.lo[0];
        case Cell::Shape::box: return (c.hi[0] - c.lo[0]) + (c.hi[1] - c.lo[1]);
        case Cell::Shape::triangle: return tri_diameter(c.tri);
        case Cell::Shape::band_sector: {
            constexpr int g = 9;
            std::vector<std::array<double, 3>> pts;
            for (int a = 0; a < g; ++a)
                for (int b = 0; b < g; ++b)
                    pts.push_back(sphere_point(c.lo[0] + (c.hi[0] - c.lo[0]) * a / (g - 1),
                                               c.lo[1] + (c.hi[1] - c.lo[1]) * b / (g - 1)));
            double d = 0.0;
            for (const auto& p : pts)
                for (const auto& q : pts)
                    d = std::max(d, std::abs(p[0] - q[0]) + std::abs(p[1] - q[1]) + std::abs(p[2] - q[2]));
            return d;
        }
        case Cell::Shape::singleton: return 0.0;
        case Cell::Shape::tail: return 1.0 / static_cast<double>(c.index);
    }
    return 0.0;
}

double Partition::max_diameter() const {
    double d = 0.0;
    for (std::size_t i = 0; i < size(); ++i) d = std::max(d, diameter(i));
    return d;
}

std::pair<std::vector<double>, std::vector<double>> Partition::bbox(std::size_t i) const {
    const Cell& c = cells_[i];
    switch (c.shape) {
        case Cell::Shape::interval:
        case Cell::Shape::arc:
        case Cell::Shape::box: return {c.lo, c.hi};
        case Cell::Shape::triangle: {
            std::vector<double> lo = {c.tri[0][0], c.tri[0][1]}, hi = lo;
            for (const auto& v : c.tri)
                for (int k = 0; k < 2; ++k) {
                    lo[k] = std::min(lo[k], v[k]);
                    hi[k] = std::max(hi[k], v[k]);
                }
            return {lo, hi};
        }
        case Cell::Shape::band_sector: {
            std::vector<double> lo(3, 1.0), hi(3, -1.0);
            constexpr int g = 33;
            for (int a = 0; a < g; ++a)
                for (int b = 0; b < g; ++b) {
                    auto p = sphere_point(c.lo[0] + (c.hi[0] - c.lo[0]) * a / (g - 1),
                                          c.lo[1] + (c.hi[1] - c.lo[1]) * b / (g - 1));
                    for (int k = 0; k < 3; ++k) {
                        lo[k] = std::min(lo[k], p[k]);
                        hi[k] = std::max(hi[k], p[k]);
                    }
                }
            return {lo, hi};
        }
        case Cell::Shape::singleton: {
            const double x = 1.0 / static_cast<double>(c.index);
            return {{x}, {x}};
        }
        case Cell::Shape::tail: return {{0.0}, {1.0 / static_cast<double>(c.index)}};
    }
    return {};
}

bool Partition::contains(std::size_t i, std::span<const double> x, double tol) const {
    const Cell& c = cells_[i];
    // half-open on the upper side except along the outer boundary of X
    auto in_range = [tol](double v, double lo, double hi, double top) {
        if (tol == 0.0) return v >= lo && (v < hi || (hi >= top && v <= top));
        return v >= lo - tol && v <= hi + tol;
    };
    switch (c.shape) {
        case Cell::Shape::interval: return in_range(x[0], c.lo[0], c.hi[0], 1.0);
        case Cell::Shape::arc: {
            double v = std::fmod(x[0], 1.0);
            if (v < 0) v += 1.0;
            if (tol > 0 && c.hi[0] >= 1.0 && v < tol) v += 1.0;
            return in_range(v, c.lo[0], c.hi[0], 2.0);
        }
        case Cell::Shape::box: return in_range(x[0], c.lo[0], c.hi[0], 1.0) && in_range(x[1], c.lo[1], c.hi[1], 1.0);
        case Cell::Shape::triangle: {
            auto l = barycentric(c.tri, x[0], x[1]);
            return l[0] >= -tol && l[1] >= -tol && l[2] >= -tol;
        }
        case Cell::Shape::band_sector: {
            const double norm = std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]);
            if (norm == 0.0) return false;
            const double z = x[2] / norm;
            const double th = wrap_angle(std::atan2(x[1], x[0]));
            bool ok_th = in_range(th, c.lo[1], c.hi[1], two_pi);
            if (!ok_th && tol > 0 && c.hi[1] >= two_pi) ok_th = th < tol;
            return in_range(z, c.lo[0], c.hi[0], 1.0) && ok_th;
        }
        case Cell::Shape::singleton: return std::abs(x[0] - 1.0 / static_cast<double>(c.index)) <= std::max(tol, 1e-15);
        case Cell::Shape::tail: return x[0] >= -std::max(tol, 1e-15) && x[0] <= 1.0 / static_cast<double>(c.index) + std::max(tol, 1e-15);
    }
    return false;
}

std::size_t Partition::locate(std::span<const double> x) const {
    if (x.size() != dim_) throw Error("locate: point dimension does not match the vertex space");
    for (double tol : {0.0, 1e-12, 1e-9}) {
        for (std::size_t i = 0; i < size(); ++i)
            if (contains(i, x, tol)) return i;
    }
    std::string s;
    for (double v : x) s += (s.empty() ? "" : ",") + format_real(v);
    throw Error("point (" + s + ") lies outside every cell of the " + space_.name() + " partition");
}

double Partition::integrate(std::size_t i, const std::function<double(std::span<const double>)>& f) const {
    const Cell& c = cells_[i];
    switch (c.shape) {
        case Cell::Shape::interval:
        case Cell::Shape::arc:
            return gl64([&](double u) { return f(std::span<const double>(&u, 1)); }, c.lo[0], c.hi[0]);
        case Cell::Shape::box:
            return gl8x8(
                [&](double u, double v) {
                    const double p[2] = {u, v};
                    return f(p);
                },
                c.lo[0], c.hi[0], c.lo[1], c.hi[1]);
        case Cell::Shape::triangle: {
            double s = 0.0;
            for (auto [a, b] : diag_[i]) {
                s += 2.0 * gl64(
                               [&](double t) {
                                   const double p[2] = {t, t};
                                   return f(p);
                               },
                               a, b);
            }
            return s;
        }
        case Cell::Shape::band_sector:
            return gl8x8(
                       [&](double z, double th) {
                           auto p = sphere_point(z, th);
                           return f(p);
                       },
                       c.lo[0], c.hi[0], c.lo[1], c.hi[1]) /
                   (2.0 * two_pi);
        case Cell::Shape::singleton: {
            const double x = 1.0 / static_cast<double>(c.index);
            return masses_[i] * f(std::span<const double>(&x, 1));
        }
        case Cell::Shape::tail: {
            double s = 0.0;
            for (std::size_t k = std::max<std::size_t>(c.index, 2); k < 2000; ++k) {
                const double w = discrete_atom_mass(k);
                if (w < 1e-300) break;
                const double x = 1.0 / static_cast<double>(k);
                s += w * f(std::span<const double>(&x, 1));
            }
            return s;
        }
    }
    return 0.0;
}

std::vector<std::pair<double, double>> Partition::diagonal_pieces(std::size_t i) const { return diag_[i]; }

std::size_t Partition::positive_mass_cells() const {
    return static_cast<std::size_t>(std::count_if(masses_.begin(), masses_.end(), [](double w) { return w > 0; }));
}

bool Partition::same_cells(const Partition& other) const {
    if (this == &other) return true;
    return space_ == other.space_ && size() == other.size() && reps_ == other.reps_ && masses_ == other.masses_;
}

PartitionPtr make_partition(const VertexSpace& space, std::size_t m) {
    if (m == 0) throw Error("m: partition size must be at least 1");
    std::vector<Cell> cells;
    switch (space.kind) {
        case SpaceKind::interval: cells = interval_cells(m, Cell::Shape::interval); break;
        case SpaceKind::circle: cells = interval_cells(m, Cell::Shape::arc); break;
        case SpaceKind::square: cells = square_cells(m); break;
        case SpaceKind::triangle: cells = triangle_cells(m); break;
        case SpaceKind::sphere: cells = sphere_cells(m); break;
        case SpaceKind::discrete: cells = discrete_cells(m); break;
    }
    return std::make_shared<const Partition>(space, std::move(cells));
}

double cell_mass(const Partition& p, std::size_t i) { return p.mass(i); }

std::span<const double> representative(const Partition& p, std::size_t i) { return p.representative(i); }

void write_partition(std::ostream& out, const Partition& p) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        out << i << ',' << format_real(p.mass(i));
        for (double v : p.representative(i)) out << ',' << format_real(v);
        auto [lo, hi] = p.bbox(i);
        for (double v : lo) out << ',' << format_real(v);
        for (double v : hi) out << ',' << format_real(v);
        out << '\n';
    }
}

}  // namespace dgmflow
