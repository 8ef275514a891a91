#include "dgmflow/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "dgmflow/error.hpp"
#include "dgmflow/lp.hpp"

namespace dgmflow {

double Metric::wrap(std::size_t k, double v) const {
    const double p = period(k);
    if (p <= 0.0) return v;
    double r = std::fmod(v, p);
    if (r < 0.0) r += p;
    if (p - r <= 1e-12 * std::max(1.0, p)) r = 0.0;
    return r;
}

Metric Metric::product(std::size_t first_dim, const Metric& second) const {
    std::vector<double> p(first_dim, 0.0);
    for (std::size_t k = 0; k < first_dim; ++k) p[k] = period(k);
    p.insert(p.end(), second.periods_.begin(), second.periods_.end());
    return Metric(std::move(p));
}

namespace {

void check_weight(double w) {
    if (!std::isfinite(w) || w < 0.0) throw Error("measure weights must be finite and nonnegative");
}

void check_coord(double c) {
    if (!std::isfinite(c)) throw Error("measure atoms must have finite coordinates");
}

}  // namespace

DiscreteMeasure::DiscreteMeasure(std::size_t dim, std::vector<double> coords, std::vector<double> weights)
    : dim_(dim), coords_(std::move(coords)), weights_(std::move(weights)) {
    if (coords_.size() != dim_ * weights_.size()) throw Error("measure: coordinate count does not match atoms");
    for (double w : weights_) check_weight(w);
    for (double c : coords_) check_coord(c);
}

DiscreteMeasure DiscreteMeasure::dirac(std::vector<double> point, double mass) {
    DiscreteMeasure m(point.size());
    m.add(point, mass);
    return m;
}

void DiscreteMeasure::add(std::span<const double> point, double weight) {
    if (dim_ == 0 && weights_.empty()) dim_ = point.size();
    if (point.size() != dim_) throw Error("measure: atom dimension mismatch");
    check_weight(weight);
    for (double c : point) check_coord(c);
    coords_.insert(coords_.end(), point.begin(), point.end());
    weights_.push_back(weight);
}

double DiscreteMeasure::total_mass() const {
    return std::accumulate(weights_.begin(), weights_.end(), 0.0);
}

DiscreteMeasure DiscreteMeasure::scaled(double c) const {
    if (!(c >= 0.0)) throw Error("measure: scale factor must be nonnegative");
    DiscreteMeasure out = *this;
    for (double& w : out.weights_) w *= c;
    return out;
}

namespace {

// Signed difference μ − ν on merged distinct atoms.
struct SignedAtoms {
    std::size_t dim = 0;
    std::vector<double> coords;
    std::vector<double> charge;
    std::size_t size() const { return charge.size(); }
    std::span<const double> atom(std::size_t k) const { return {coords.data() + k * dim, dim}; }
};

SignedAtoms merge(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric, double tol) {
    std::size_t dim = mu.empty() ? nu.dim() : mu.dim();
    if (!mu.empty() && !nu.empty() && mu.dim() != nu.dim()) throw Error("distance: measures live in different dimensions");

    const std::size_t total = mu.size() + nu.size();
    std::vector<double> pts(total * dim);
    std::vector<double> chg(total);
    for (std::size_t k = 0; k < mu.size(); ++k) {
        auto a = mu.atom(k);
        for (std::size_t c = 0; c < dim; ++c) pts[k * dim + c] = metric.wrap(c, a[c]);
        chg[k] = mu.weight(k);
    }
    for (std::size_t k = 0; k < nu.size(); ++k) {
        auto a = nu.atom(k);
        const std::size_t o = mu.size() + k;
        for (std::size_t c = 0; c < dim; ++c) pts[o * dim + c] = metric.wrap(c, a[c]);
        chg[o] = -nu.weight(k);
    }

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(pts.begin() + a * dim, pts.begin() + (a + 1) * dim,
                                            pts.begin() + b * dim, pts.begin() + (b + 1) * dim);
    });

    SignedAtoms out;
    out.dim = dim;
    for (std::size_t idx : order) {
        std::span<const double> p(pts.data() + idx * dim, dim);
        bool merged = false;
        for (std::size_t back = out.size(); back-- > 0;) {
            auto q = out.atom(back);
            if (dim > 0 && p[0] - q[0] > tol) break;
            if (metric(p, q) <= tol) {
                out.charge[back] += chg[idx];
                merged = true;
                break;
            }
        }
        if (!merged) {
            out.coords.insert(out.coords.end(), p.begin(), p.end());
            out.charge.push_back(chg[idx]);
        }
    }
    // Atoms whose charges cancel do not affect the optimum (extension of the test function).
    SignedAtoms kept;
    kept.dim = dim;
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (std::abs(out.charge[k]) < 1e-18) continue;
        auto a = out.atom(k);
        kept.coords.insert(kept.coords.end(), a.begin(), a.end());
        kept.charge.push_back(out.charge[k]);
    }
    return kept;
}

struct Edge {
    std::size_t from, to;
    double length;
};

// Pairs whose Lipschitz constraint is not implied by a path through a third atom.
std::vector<Edge> essential_edges(const SignedAtoms& s, const Metric& metric) {
    const std::size_t k = s.size();
    std::vector<double> d(k * k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = i + 1; j < k; ++j) d[i * k + j] = d[j * k + i] = metric(s.atom(i), s.atom(j));

    std::vector<Edge> edges;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
            const double dij = d[i * k + j] * (1.0 + 1e-12);
            bool implied = false;
            for (std::size_t m = 0; m < k && !implied; ++m) {
                if (m == i || m == j) continue;
                implied = d[i * k + m] + d[m * k + j] <= dij;
            }
            if (!implied) edges.push_back({i, j, d[i * k + j]});
        }
    }
    return edges;
}

void check_size(const SignedAtoms& s, const DistanceOptions& opt) {
    if (s.size() > opt.max_atoms) {
        throw Error("too large for exact LP: " + std::to_string(s.size()) + " distinct atoms exceed the cap of " +
                    std::to_string(opt.max_atoms));
    }
}

double solve_or_throw(const lp::Problem& p, const char* what) {
    lp::Result r = lp::solve(p);
    if (r.status != lp::Status::optimal) throw Error(std::string(what) + ": linear program did not reach optimality");
    return std::max(r.value, 0.0);
}

}  // namespace

double bl_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric,
                   const DistanceOptions& opt) {
    SignedAtoms s = merge(mu, nu, metric, opt.merge_tol);
    check_size(s, opt);
    const std::size_t k = s.size();
    if (k == 0) return 0.0;
    if (k == 1) return std::abs(s.charge[0]);

    // Dual of max Σc·f s.t. |f| ≤ b, |f_k − f_l| ≤ L·d, b + L ≤ 1:
    //   min λ  s.t.  p_k − q_k + out_k(π) − in_k(π) = c_k,
    //                λ − Σ(p+q) − s_b = 0,  λ − Σ d·π − s_L = 0.
    // Starting basis: p_k or q_k carries c_k, λ = Σ|c|, s_L = λ.
    const std::vector<Edge> edges = essential_edges(s, metric);
    const std::size_t e = edges.size();
    const std::size_t lam = 2 * k + 2 * e, sb = lam + 1, sl = lam + 2;
    lp::Problem p;
    p.num_vars = lam + 3;
    p.objective.assign(p.num_vars, 0.0);
    p.objective[lam] = 1.0;
    p.rows.resize(k + 2);
    std::vector<std::size_t> basis(k + 2);
    for (std::size_t i = 0; i < k; ++i) {
        p.rows[i].sense = lp::Sense::eq;
        p.rows[i].rhs = s.charge[i];
        p.rows[i].terms = {{i, 1.0}, {k + i, -1.0}};
        basis[i] = s.charge[i] >= 0 ? i : k + i;
    }
    lp::Row& budget = p.rows[k];
    lp::Row& lipschitz = p.rows[k + 1];
    budget.sense = lipschitz.sense = lp::Sense::eq;
    for (std::size_t i = 0; i < 2 * k; ++i) budget.terms.push_back({i, -1.0});
    budget.terms.push_back({lam, 1.0});
    budget.terms.push_back({sb, -1.0});
    for (std::size_t j = 0; j < e; ++j) {
        const std::size_t fwd = 2 * k + 2 * j, bwd = fwd + 1;
        p.rows[edges[j].from].terms.push_back({fwd, 1.0});
        p.rows[edges[j].to].terms.push_back({fwd, -1.0});
        p.rows[edges[j].to].terms.push_back({bwd, 1.0});
        p.rows[edges[j].from].terms.push_back({bwd, -1.0});
        lipschitz.terms.push_back({fwd, -edges[j].length});
        lipschitz.terms.push_back({bwd, -edges[j].length});
    }
    lipschitz.terms.push_back({lam, 1.0});
    lipschitz.terms.push_back({sl, -1.0});
    basis[k] = lam;
    basis[k + 1] = sl;
    lp::Result r = lp::solve(p, basis);
    if (r.status != lp::Status::optimal) throw Error("bl_distance: linear program did not reach optimality");
    return std::max(r.value, 0.0);
}

double kr_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric,
                   const DistanceOptions& opt) {
    const double mm = mu.total_mass(), nm = nu.total_mass();
    if (std::abs(mm - nm) > 1e-12 * std::max(1.0, std::max(mm, nm))) {
        throw Error("kr_distance: mass mismatch (" + format_real(mm) + " vs " + format_real(nm) + ")");
    }
    SignedAtoms s = merge(mu, nu, metric, opt.merge_tol);
    check_size(s, opt);
    const std::size_t k = s.size();
    if (k <= 1) return 0.0;

    // Transport form: min Σ d·π  s.t. out_k(π) − in_k(π) = c_k (last row implied).
    const std::vector<Edge> edges = essential_edges(s, metric);
    lp::Problem p;
    p.num_vars = 2 * edges.size();
    p.objective.resize(p.num_vars);
    p.rows.resize(k - 1);
    for (std::size_t i = 0; i + 1 < k; ++i) {
        p.rows[i].sense = lp::Sense::eq;
        p.rows[i].rhs = s.charge[i];
    }
    auto put = [&](std::size_t node, std::size_t var, double v) {
        if (node + 1 < k) p.rows[node].terms.push_back({var, v});
    };
    for (std::size_t j = 0; j < edges.size(); ++j) {
        const std::size_t fwd = 2 * j, bwd = fwd + 1;
        p.objective[fwd] = p.objective[bwd] = edges[j].length;
        put(edges[j].from, fwd, 1.0);
        put(edges[j].to, fwd, -1.0);
        put(edges[j].to, bwd, 1.0);
        put(edges[j].from, bwd, -1.0);
    }
    return solve_or_throw(p, "kr_distance");
}

double tv_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric, double merge_tol) {
    SignedAtoms s = merge(mu, nu, metric, merge_tol);
    double pos = 0.0, neg = 0.0;
    for (double c : s.charge) (c > 0 ? pos : neg) += std::abs(c);
    return std::max(pos, neg);
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_measure(std::ostream& out, const DiscreteMeasure& mu) {
    out << mu.dim() << ',' << mu.size() << ',' << format_real(mu.total_mass()) << '\n';
    for (std::size_t k = 0; k < mu.size(); ++k) {
        out << format_real(mu.weight(k));
        for (double c : mu.atom(k)) out << ',' << format_real(c);
        out << '\n';
    }
}

std::vector<double> parse_real_row(const std::string& line, std::size_t lineno, const std::string& what) {
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(cell, &used));
            if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
            throw Error(what + " line " + std::to_string(lineno) + ": bad number '" + cell + "'");
        }
    }
    return v;
}

DiscreteMeasure read_measure(std::istream& in) {
    std::string line;
    std::size_t lineno = 0;
    auto next = [&]() {
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
        }
        return false;
    };
    if (!next()) throw Error("measure file is empty");
    if (line.rfind("dim", 0) == 0 && !next()) throw Error("measure file has no header values");
    const std::vector<double> head = parse_real_row(line, lineno, "measure file");
    if (head.size() != 3 || head[0] < 0 || head[1] < 0) throw Error("measure header must be dim,count,mass");
    const auto dim = static_cast<std::size_t>(head[0]);
    const auto count = static_cast<std::size_t>(head[1]);
    DiscreteMeasure mu(dim);
    for (std::size_t k = 0; k < count; ++k) {
        if (!next()) throw Error("measure file ends after " + std::to_string(k) + " of " + std::to_string(count) + " atoms");
        std::vector<double> row = parse_real_row(line, lineno, "measure file");
        if (row.size() != dim + 1) throw Error("measure file line " + std::to_string(lineno) + ": expected w plus " + std::to_string(dim) + " coordinates");
        mu.add(std::span<const double>(row.data() + 1, dim), row[0]);
    }
    if (std::abs(mu.total_mass() - head[2]) > 1e-9 * std::max(1.0, head[2])) throw Error("measure file: atom weights do not sum to the header mass");
    return mu;
}

void save_measure(const std::string& path, const DiscreteMeasure& mu) {
    std::ofstream f(path);
    if (!f) throw Error("cannot write " + path);
    write_measure(f, mu);
}

DiscreteMeasure load_measure(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot read " + path);
    return read_measure(f);
}

}  // namespace dgmflow
