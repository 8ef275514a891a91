#include "dgmflow/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "dgmflow/error.hpp"
#include "dgmflow/parallel.hpp"

namespace dgmflow {
namespace {

constexpr double two_pi = 2.0 * std::numbers::pi;
constexpr std::size_t max_state_dim = 8;

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// Solves A x = b in place (partial pivoting); false when singular.
bool solve_dense(std::vector<double> a, std::vector<double> b, std::size_t n, std::vector<double>& x) {
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
        if (std::abs(a[piv * n + c]) < 1e-12) return false;
        if (piv != c) {
            for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
            std::swap(b[c], b[piv]);
        }
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r * n + c] / a[c * n + c];
            for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
            b[r] -= f * b[c];
        }
    }
    x.assign(n, 0.0);
    for (std::size_t c = n; c-- > 0;) {
        double s = b[c];
        for (std::size_t k = c + 1; k < n; ++k) s -= a[c * n + k] * x[k];
        x[c] = s / a[c * n + c];
    }
    return true;
}

Halfspace hs(std::vector<double> normal, double offset, std::string label) {
    return {std::move(normal), offset, std::move(label)};
}

std::vector<double> unit(std::size_t dim, std::size_t k, double s) {
    std::vector<double> v(dim, 0.0);
    v[k] = s;
    return v;
}

InvariantPolytope box(std::vector<double> lo, std::vector<double> hi, const std::vector<std::string>& names) {
    InvariantPolytope Y;
    Y.dim = lo.size();
    for (std::size_t k = 0; k < Y.dim; ++k) {
        Y.halfspaces.push_back(hs(unit(Y.dim, k, -1.0), -lo[k], names[k] + " >= " + fmt(lo[k])));
        Y.halfspaces.push_back(hs(unit(Y.dim, k, 1.0), hi[k], names[k] + " <= " + fmt(hi[k])));
    }
    Y.lo = std::move(lo);
    Y.hi = std::move(hi);
    return Y;
}

using Params = std::map<std::string, double>;

double cos_profile(std::span<const double> x, double amp) { return 1.0 + amp * std::cos(two_pi * x[0]); }

Params merged(const std::string& model, const Params& given) {
    Params p = default_params(model);
    for (const auto& [k, v] : given) {
        if (!p.count(k)) {
            std::string known;
            for (const auto& [kk, vv] : p) known += (known.empty() ? "" : ", ") + kk;
            throw ConfigError("model." + k, "unknown parameter '" + k + "' for model " + model + " (known: " + known + ")");
        }
        if (!std::isfinite(v)) throw ConfigError("model." + k, "parameter '" + k + "' must be finite");
        p[k] = v;
    }
    return p;
}

double seirs_sup_ratio(const Params& p) {
    const double d = std::min({p.at("d1"), p.at("d2"), p.at("d3"), p.at("d4")});
    return p.at("Lambda") * (1.0 + std::abs(p.at("Lambda_amp"))) / d;
}

ModelSpec kuramoto(const Params& p) {
    ModelSpec m;
    m.r = 1;
    m.r2 = 1;
    const double K = p.at("coupling"), omega = p.at("omega"), amp = p.at("omega_amp");
    Kernel g;
    g.eval = [K](double, std::span<const double> psi, std::span<const double> phi, std::span<double> out) {
        out[0] += K * std::sin(psi[0] - phi[0]);
    };
    g.n_features = 2;
    g.features = [](std::span<const double> psi, std::span<double> f) {
        f[0] = std::sin(psi[0]);
        f[1] = std::cos(psi[0]);
    };
    // sin(ψ−φ) = sin ψ cos φ − cos ψ sin φ
    g.combine = [K](double, std::span<const double> phi, std::span<const double> f, std::span<double> out) {
        out[0] += K * (f[0] * std::cos(phi[0]) - f[1] * std::sin(phi[0]));
    };
    m.g = {g};
    m.h = [omega, amp](double, std::span<const double> x, std::span<const double>, std::span<double> out) {
        out[0] += omega + amp * std::sin(two_pi * x[0]);
    };
    m.Y.dim = 1;
    m.Y.lo = {0.0};
    m.Y.hi = {two_pi};
    m.Y.periods = {two_pi};
    m.default_dgms = {"ring"};
    m.default_space = "circle";
    return m;
}

ModelSpec sis(const Params& p) {
    ModelSpec m;
    m.r = 1;
    m.r2 = 2;
    const double beta = p.at("beta"), gamma = p.at("gamma"), amp = p.at("gamma_amp"), N = p.at("N");
    Kernel g;
    // β(t, ψ₂, φ₁) = β₀ ψ₂ φ₁ (mass action), direction (−1, 1)
    g.eval = [beta](double, std::span<const double> psi, std::span<const double> phi, std::span<double> out) {
        const double b = beta * psi[1] * phi[0];
        out[0] -= b;
        out[1] += b;
    };
    g.n_features = 1;
    g.features = [](std::span<const double> psi, std::span<double> f) { f[0] = psi[1]; };
    g.combine = [beta](double, std::span<const double> phi, std::span<const double> f, std::span<double> out) {
        const double b = beta * f[0] * phi[0];
        out[0] -= b;
        out[1] += b;
    };
    m.g = {g};
    // recovery acts on the infected coordinate
    m.h = [gamma, amp](double, std::span<const double> x, std::span<const double> phi, std::span<double> out) {
        const double r = gamma * cos_profile(x, amp) * phi[1];
        out[0] += r;
        out[1] -= r;
    };
    m.Y.dim = 2;
    m.Y.halfspaces = {hs({1.0, 1.0}, N, "S + I <= N"), hs({-1.0, -1.0}, -N, "S + I >= N"),
                      hs({-1.0, 0.0}, 0.0, "S >= 0"), hs({0.0, -1.0}, 0.0, "I >= 0")};
    m.Y.lo = {0.0, 0.0};
    m.Y.hi = {N, N};
    m.conserved = {1.0, 1.0};
    m.default_dgms = {"complete"};
    m.default_space = "interval";
    return m;
}

ModelSpec seirs(const Params& p) {
    ModelSpec m;
    m.r = 1;
    m.r2 = 4;
    const double beta = p.at("beta"), iota = p.at("iota"), gamma = p.at("gamma"), sigma = p.at("sigma");
    const double d1 = p.at("d1"), d2 = p.at("d2"), d3 = p.at("d3"), d4 = p.at("d4");
    const double Lam = p.at("Lambda"), amp = p.at("Lambda_amp");
    const double M = p.at("M") > 0 ? p.at("M") : seirs_sup_ratio(p);
    Kernel g;
    // β(t, ψ₃, φ₁) = β₀ ψ₃ φ₁ moves S to E
    g.eval = [beta](double, std::span<const double> psi, std::span<const double> phi, std::span<double> out) {
        const double b = beta * psi[2] * phi[0];
        out[0] -= b;
        out[1] += b;
    };
    g.n_features = 1;
    g.features = [](std::span<const double> psi, std::span<double> f) { f[0] = psi[2]; };
    g.combine = [beta](double, std::span<const double> phi, std::span<const double> f, std::span<double> out) {
        const double b = beta * f[0] * phi[0];
        out[0] -= b;
        out[1] += b;
    };
    m.g = {g};
    // loss of immunity σ(φ₄) feeds S (the R → S arrow of the compartment chart)
    m.h = [=](double, std::span<const double> x, std::span<const double> phi, std::span<double> out) {
        const double lam = Lam * cos_profile(x, amp);
        out[0] += lam + sigma * phi[3] - d1 * phi[0];
        out[1] += -iota * phi[1] - d2 * phi[1];
        out[2] += iota * phi[1] - gamma * phi[2] - d3 * phi[2];
        out[3] += gamma * phi[2] - sigma * phi[3] - d4 * phi[3];
    };
    m.Y.dim = 4;
    m.Y.halfspaces = {hs({1, 1, 1, 1}, M, "S + E + I + R <= M")};
    const char* names[] = {"S", "E", "I", "R"};
    for (std::size_t k = 0; k < 4; ++k) m.Y.halfspaces.push_back(hs(unit(4, k, -1.0), 0.0, std::string(names[k]) + " >= 0"));
    m.Y.lo.assign(4, 0.0);
    m.Y.hi.assign(4, M);
    m.params["M"] = M;
    m.default_dgms = {"discrete"};
    m.default_space = "discrete";
    return m;
}

ModelSpec lotka_volterra(const Params& p) {
    ModelSpec m;
    m.r = 2;
    m.r2 = 2;
    const double alpha = p.at("alpha"), beta = p.at("beta"), gamma = p.at("gamma");
    const double iota = p.at("iota"), sigma = p.at("sigma"), theta = p.at("theta");
    const double w1 = p.at("w1"), w2 = p.at("w2");
    auto coupling = [](std::size_t k, double w) {
        Kernel g;
        // W(u) = w·u, odd with 0 ≤ W(u) ≤ u on ℝ₊
        g.eval = [k, w](double, std::span<const double> psi, std::span<const double> phi, std::span<double> out) {
            out[k] += w * (psi[k] - phi[k]);
        };
        g.n_features = 2;
        g.features = [k](std::span<const double> psi, std::span<double> f) {
            f[0] = psi[k];
            f[1] = 1.0;
        };
        g.combine = [k, w](double, std::span<const double> phi, std::span<const double> f, std::span<double> out) {
            out[k] += w * (f[0] - phi[k] * f[1]);
        };
        return g;
    };
    m.g = {coupling(0, w1), coupling(1, w2)};
    m.h = [=](double, std::span<const double>, std::span<const double> phi, std::span<double> out) {
        out[0] += phi[0] * (alpha - beta * phi[0] - gamma * phi[1]);
        out[1] += phi[1] * (-iota + sigma * phi[0] - theta * phi[1]);
    };
    m.Y = box({0.0, 0.0}, {p.at("Lambda1"), p.at("Lambda2")}, {"prey", "predator"});
    m.default_dgms = {"tent", "binary_tree"};
    m.default_space = "interval";
    return m;
}

ModelSpec hegselmann_krause(const Params& p) {
    ModelSpec m;
    m.r = 1;
    const double dd = p.at("dim");
    if (dd != std::floor(dd) || dd < 1 || dd > static_cast<double>(max_state_dim)) {
        throw ConfigError("model.dim", "hk: dim must be an integer in [1, " + std::to_string(max_state_dim) + "]");
    }
    m.r2 = static_cast<std::size_t>(dd);
    const double kappa = p.at("kappa"), R = p.at("radius"), L = p.at("Lambda");
    Kernel g;
    // G(r) = κ (1 − (r/R)²)²₊ : smooth bounded-confidence weight
    g.eval = [kappa, R](double, std::span<const double> psi, std::span<const double> phi, std::span<double> out) {
        double r2 = 0.0;
        for (std::size_t k = 0; k < phi.size(); ++k) r2 += (psi[k] - phi[k]) * (psi[k] - phi[k]);
        const double u = 1.0 - r2 / (R * R);
        if (u <= 0.0) return;
        const double G = kappa * u * u;
        for (std::size_t k = 0; k < phi.size(); ++k) out[k] += G * (psi[k] - phi[k]);
    };
    m.g = {g};
    m.h = [](double, std::span<const double>, std::span<const double>, std::span<double>) {};
    std::vector<std::string> names;
    for (std::size_t k = 0; k < m.r2; ++k) names.push_back("opinion_" + std::to_string(k + 1));
    m.Y = box(std::vector<double>(m.r2, -L), std::vector<double>(m.r2, L), names);
    m.default_dgms = {"circle_graphop"};
    m.default_space = "circle";
    return m;
}

}  // namespace

std::vector<std::string> builtin_model_names() { return {"kuramoto", "sis", "seirs", "lv", "hk"}; }

std::map<std::string, double> default_params(const std::string& name) {
    if (name == "kuramoto") return {{"coupling", 1.0}, {"omega", 0.0}, {"omega_amp", 0.0}};
    if (name == "sis") return {{"beta", 1.0}, {"gamma", 0.5}, {"gamma_amp", 0.0}, {"N", 1.0}};
    if (name == "seirs") {
        return {{"beta", 1.0}, {"iota", 0.5},  {"gamma", 0.3},  {"sigma", 0.2},  {"d1", 0.1}, {"d2", 0.15},
                {"d3", 0.2},   {"d4", 0.1},    {"Lambda", 0.1}, {"Lambda_amp", 0.0}, {"M", 0.0}};
    }
    if (name == "lv") {
        return {{"alpha", 1.0}, {"beta", 1.0}, {"gamma", 0.5}, {"iota", 0.5}, {"sigma", 1.0},
                {"theta", 1.0}, {"w1", 0.5},   {"w2", 0.5},    {"Lambda1", 1.5}, {"Lambda2", 2.0}};
    }
    if (name == "hk") return {{"kappa", 1.0}, {"radius", 1.0}, {"Lambda", 1.0}, {"dim", 1.0}};
    std::string known;
    for (const auto& n : builtin_model_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("model.name", "unknown model '" + name + "' (known: " + known + ")");
}

std::vector<std::string> check_constraints(const std::string& name, const std::map<std::string, double>& given) {
    const Params p = merged(name, given);
    std::vector<std::string> bad;
    auto nonneg = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys)
            if (p.at(k) < 0) bad.push_back(std::string(k) + " >= 0 violated (" + k + " = " + fmt(p.at(k)) + ")");
    };
    auto positive = [&](std::initializer_list<const char*> keys) {
        for (const char* k : keys)
            if (!(p.at(k) > 0)) bad.push_back(std::string(k) + " > 0 violated (" + k + " = " + fmt(p.at(k)) + ")");
    };
    auto amplitude = [&](const char* k) {
        if (std::abs(p.at(k)) > 1) bad.push_back(std::string("|") + k + "| <= 1 violated (" + k + " = " + fmt(p.at(k)) + ")");
    };
    if (name == "sis") {
        nonneg({"beta", "gamma"});
        positive({"N"});
        amplitude("gamma_amp");
    } else if (name == "seirs") {
        nonneg({"beta", "iota", "gamma", "sigma", "Lambda"});
        positive({"d1", "d2", "d3", "d4"});
        amplitude("Lambda_amp");
        if (bad.empty() && p.at("M") > 0) {
            const double need = seirs_sup_ratio(p);
            if (p.at("M") < need * (1 - 1e-12))
                bad.push_back("M >= sup Lambda/d violated (M = " + fmt(p.at("M")) + ", sup Lambda/d = " + fmt(need) + ")");
        }
    } else if (name == "lv") {
        nonneg({"alpha", "gamma", "iota", "sigma", "w1", "w2"});
        positive({"beta", "theta", "Lambda1", "Lambda2"});
        for (const char* w : {"w1", "w2"})
            if (p.at(w) > 1) bad.push_back(std::string(w) + " <= 1 violated: W(u) = " + w + "·u must satisfy W(u) <= u");
        if (p.at("beta") > 0 && p.at("Lambda1") < p.at("alpha") / p.at("beta")) {
            bad.push_back("Lambda1 >= alpha/beta violated (Lambda1 = " + fmt(p.at("Lambda1")) +
                          ", alpha/beta = " + fmt(p.at("alpha") / p.at("beta")) + ")");
        }
        if (p.at("theta") > 0) {
            const double need = -p.at("iota") / p.at("theta") + p.at("sigma") / p.at("theta") * p.at("Lambda1");
            if (p.at("Lambda2") < need)
                bad.push_back("Lambda2 >= -iota/theta + sigma*Lambda1/theta violated (Lambda2 = " + fmt(p.at("Lambda2")) +
                              ", bound = " + fmt(need) + ")");
        }
    } else if (name == "hk") {
        nonneg({"kappa"});
        positive({"radius", "Lambda"});
    }
    return bad;
}

ModelSpec builtin_model(const std::string& name, const std::map<std::string, double>& params, bool enforce) {
    const Params p = merged(name, params);
    if (enforce) {
        const auto bad = check_constraints(name, params);
        if (!bad.empty()) {
            std::string what = name + ": parameter constraint violated: " + bad.front();
            for (std::size_t k = 1; k < bad.size(); ++k) what += "; " + bad[k];
            throw ConfigError("model", what);
        }
    }
    ModelSpec m;
    if (name == "kuramoto") m = kuramoto(p);
    else if (name == "sis") m = sis(p);
    else if (name == "seirs") m = seirs(p);
    else if (name == "lv") m = lotka_volterra(p);
    else m = hegselmann_krause(p);
    m.name = name;
    for (const auto& [k, v] : p)
        if (!m.params.count(k)) m.params[k] = v;
    return m;
}

double InvariantPolytope::violation(std::span<const double> phi) const {
    double worst = -std::numeric_limits<double>::infinity();
    if (halfspaces.empty()) return 0.0;
    for (const auto& h : halfspaces) worst = std::max(worst, (dot(h.normal, phi) - h.offset) / norm2(h.normal));
    return worst;
}

std::vector<double> InvariantPolytope::project(std::span<const double> phi) const {
    std::vector<double> x(phi.begin(), phi.end());
    if (halfspaces.empty() || violation(x) <= 0.0) return x;
    const std::size_t K = halfspaces.size();
    std::vector<std::vector<double>> inc(K, std::vector<double>(dim, 0.0));
    std::vector<double> y(dim);
    for (int cycle = 0; cycle < 10000; ++cycle) {
        double change = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const auto& h = halfspaces[k];
            for (std::size_t d = 0; d < dim; ++d) y[d] = x[d] + inc[k][d];
            const double over = dot(h.normal, y) - h.offset;
            std::vector<double> z = y;
            if (over > 0) {
                const double s = over / dot(h.normal, h.normal);
                for (std::size_t d = 0; d < dim; ++d) z[d] -= s * h.normal[d];
            }
            for (std::size_t d = 0; d < dim; ++d) {
                inc[k][d] = y[d] - z[d];
                change = std::max(change, std::abs(z[d] - x[d]));
                x[d] = z[d];
            }
        }
        if (change < 1e-16) break;
    }
    // Dykstra converges to the projection; polish residual rounding onto the feasible side
    for (int pass = 0; pass < 4 && violation(x) > 0.0; ++pass) {
        for (const auto& h : halfspaces) {
            const double over = dot(h.normal, x) - h.offset;
            if (over > 0) {
                const double s = over / dot(h.normal, h.normal);
                for (std::size_t d = 0; d < dim; ++d) x[d] -= s * h.normal[d];
            }
        }
    }
    return x;
}

std::vector<std::vector<double>> InvariantPolytope::vertices() const {
    std::vector<std::vector<double>> out;
    const std::size_t K = halfspaces.size();
    if (K < dim || dim == 0) return out;
    std::vector<std::size_t> pick(dim);
    for (std::size_t k = 0; k < dim; ++k) pick[k] = k;
    while (true) {
        std::vector<double> A(dim * dim), b(dim), x;
        for (std::size_t r = 0; r < dim; ++r) {
            for (std::size_t c = 0; c < dim; ++c) A[r * dim + c] = halfspaces[pick[r]].normal[c];
            b[r] = halfspaces[pick[r]].offset;
        }
        if (solve_dense(A, b, dim, x) && violation(x) <= 1e-9) {
            bool dup = false;
            for (const auto& v : out) {
                double d = 0.0;
                for (std::size_t c = 0; c < dim; ++c) d = std::max(d, std::abs(v[c] - x[c]));
                if (d < 1e-9) dup = true;
            }
            if (!dup) out.push_back(x);
        }
        // next combination
        std::size_t k = dim;
        while (k > 0 && pick[k - 1] == K - dim + k - 1) --k;
        if (k == 0) break;
        ++pick[k - 1];
        for (std::size_t j = k; j < dim; ++j) pick[j] = pick[j - 1] + 1;
    }
    return out;
}

std::vector<double> sample_in_Y(const InvariantPolytope& Y, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> x(Y.dim);
    for (int attempt = 0; attempt < 200; ++attempt) {
        for (std::size_t k = 0; k < Y.dim; ++k) x[k] = Y.lo[k] + U(rng) * (Y.hi[k] - Y.lo[k]);
        if (Y.contains(x, 0.0)) return x;
    }
    // lower-dimensional Y: random convex combination of vertices
    const auto V = Y.vertices();
    if (V.empty()) throw Error("sample_in_Y: invariant region has no vertices");
    std::vector<double> w(V.size());
    double s = 0.0;
    for (double& v : w) s += (v = -std::log(1.0 - U(rng)));
    std::fill(x.begin(), x.end(), 0.0);
    for (std::size_t j = 0; j < V.size(); ++j)
        for (std::size_t k = 0; k < Y.dim; ++k) x[k] += w[j] / s * V[j][k];
    return Y.project(x);
}

CouplingTable build_coupling(const DiscretizedDGM& d, const Partition& ens) {
    const Partition& dp = d.partition();
    if (!(dp.space() == ens.space())) throw Error("build_coupling: DGM and ensemble live on different vertex spaces");
    if (!dp.same_cells(ens)) throw Error("build_coupling: DGM and ensemble partitions differ");
    CouplingTable t;
    t.rows.resize(ens.size());
    for (std::size_t i = 0; i < dp.size(); ++i) {
        const DiscreteMeasure& f = d.eta.fibers[i];
        std::vector<double> w(ens.size(), 0.0);
        for (std::size_t j = 0; j < f.size(); ++j) w[ens.locate(f.atom(j))] += f.weight(j);
        for (std::size_t p = 0; p < ens.size(); ++p)
            if (w[p] != 0.0) t.rows[i].push_back({p, w[p]});
    }
    return t;
}

VlasovOperator::VlasovOperator(ModelSpec model, std::vector<DiscretizedDGM> dgms, PartitionPtr partition,
                               std::vector<double> a, std::size_t n)
    : model_(std::move(model)), dgms_(std::move(dgms)), partition_(std::move(partition)), a_(std::move(a)), n_(n) {
    if (!partition_) throw Error("Vlasov operator: missing partition");
    if (dgms_.size() != model_.r) {
        throw ConfigError("dgm.names", model_.name + " needs " + std::to_string(model_.r) + " DGM(s), got " +
                                           std::to_string(dgms_.size()));
    }
    if (model_.r2 > max_state_dim) throw Error("Vlasov operator: state dimension above " + std::to_string(max_state_dim));
    if (a_.size() != partition_->size()) throw Error("Vlasov operator: one a-weight per cell required");
    if (n_ == 0) throw ConfigError("n", "n: particles per cell must be at least 1");
    for (const auto& d : dgms_) tables_.push_back(build_coupling(d, *partition_));
    coupled_features_.resize(model_.g.size());
}

void VlasovOperator::prepare(std::span<const double> states) {
    const std::size_t m = partition_->size(), r2 = model_.r2;
    if (states.size() != m * n_ * r2) throw Error("Vlasov operator: snapshot has the wrong number of values");
    states_ = states;
    std::array<double, 16> feat{};
    for (std::size_t l = 0; l < model_.g.size(); ++l) {
        const Kernel& g = model_.g[l];
        if (!g.features) continue;
        const std::size_t nf = g.n_features;
        if (nf > feat.size()) throw Error("Vlasov operator: too many kernel features");
        std::vector<double> cell_sum(m * nf, 0.0);
        for (std::size_t p = 0; p < m; ++p) {
            for (std::size_t q = 0; q < n_; ++q) {
                g.features(states.subspan((p * n_ + q) * r2, r2), std::span<double>(feat.data(), nf));
                for (std::size_t f = 0; f < nf; ++f) cell_sum[p * nf + f] += feat[f];
            }
            const double scale = a_[p] / static_cast<double>(n_);
            for (std::size_t f = 0; f < nf; ++f) cell_sum[p * nf + f] *= scale;
        }
        auto& cf = coupled_features_[l];
        cf.assign(m * nf, 0.0);
        for (std::size_t i = 0; i < m; ++i)
            for (auto [p, w] : tables_[l].rows[i])
                for (std::size_t f = 0; f < nf; ++f) cf[i * nf + f] += w * cell_sum[p * nf + f];
    }
}

void VlasovOperator::evaluate(double t, std::size_t cell, std::span<const double> phi, std::span<double> out) const {
    const std::size_t r2 = model_.r2;
    if (cell >= partition_->size()) throw Error("Vlasov operator: cell index " + std::to_string(cell) + " out of range");
    if (phi.size() != r2 || out.size() != r2) throw Error("Vlasov operator: state dimension mismatch");
    std::fill(out.begin(), out.end(), 0.0);
    std::array<double, max_state_dim> tmp{};
    for (std::size_t l = 0; l < model_.g.size(); ++l) {
        const Kernel& g = model_.g[l];
        if (g.features) {
            const std::size_t nf = g.n_features;
            g.combine(t, phi, std::span<const double>(coupled_features_[l].data() + cell * nf, nf), out);
            continue;
        }
        for (auto [p, w] : tables_[l].rows[cell]) {
            std::fill(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(r2), 0.0);
            std::span<double> acc(tmp.data(), r2);
            for (std::size_t q = 0; q < n_; ++q) g.eval(t, states_.subspan((p * n_ + q) * r2, r2), phi, acc);
            const double s = w * a_[p] / static_cast<double>(n_);
            for (std::size_t k = 0; k < r2; ++k) out[k] += s * tmp[k];
        }
    }
    model_.h(t, partition_->representative(cell), phi, out);
}

void VlasovOperator::field(double t, std::span<const double> states, std::span<double> deriv, unsigned threads) {
    prepare(states);
    const std::size_t r2 = model_.r2;
    if (deriv.size() != states.size()) throw Error("Vlasov operator: derivative buffer has the wrong size");
    parallel_for(partition_->size(), threads, [&](std::size_t i) {
        for (std::size_t j = 0; j < n_; ++j) {
            const std::size_t off = (i * n_ + j) * r2;
            evaluate(t, i, states.subspan(off, r2), deriv.subspan(off, r2));
        }
    });
}

std::vector<double> vlasov_operator(const VlasovOperator& op, std::span<const double> states, double t,
                                    std::size_t cell, std::span<const double> phi) {
    VlasovOperator local = op;
    local.prepare(states);
    std::vector<double> out(op.model().r2);
    local.evaluate(t, cell, phi, out);
    return out;
}

BonyReport bony_check(const ModelSpec& model, const std::vector<DiscretizedDGM>& dgms, PartitionPtr partition,
                      std::size_t n, std::size_t samples, std::uint64_t seed) {
    BonyReport rep;
    const InvariantPolytope& Y = model.Y;
    if (Y.is_torus()) {
        rep.skipped = true;
        return rep;
    }
    rep.max_flux = -std::numeric_limits<double>::infinity();
    const std::size_t m = partition->size(), r2 = model.r2;
    VlasovOperator op(model, dgms, partition, std::vector<double>(m, 1.0), n);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const auto V = Y.vertices();

    // boundary points per face: its vertices plus random mixtures of them
    std::vector<std::vector<std::vector<double>>> face_points(Y.halfspaces.size());
    for (std::size_t k = 0; k < Y.halfspaces.size(); ++k) {
        const auto& h = Y.halfspaces[k];
        std::vector<std::vector<double>> fv;
        for (const auto& v : V)
            if (std::abs(dot(h.normal, v) - h.offset) <= 1e-9 * (1 + std::abs(h.offset))) fv.push_back(v);
        face_points[k] = fv;
        if (fv.size() < 2) continue;
        for (std::size_t s = 0; s < samples; ++s) {
            std::vector<double> w(fv.size());
            double tot = 0.0;
            for (double& x : w) tot += (x = -std::log(1.0 - U(rng)));
            std::vector<double> x(r2, 0.0);
            for (std::size_t j = 0; j < fv.size(); ++j)
                for (std::size_t c = 0; c < r2; ++c) x[c] += w[j] / tot * fv[j][c];
            face_points[k].push_back(std::move(x));
        }
    }

    std::vector<std::vector<double>> ensembles;
    for (const auto& v : V) {
        std::vector<double> e(m * n * r2);
        for (std::size_t k = 0; k < m * n; ++k) std::copy(v.begin(), v.end(), e.begin() + static_cast<std::ptrdiff_t>(k * r2));
        ensembles.push_back(std::move(e));
    }
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<double> e(m * n * r2);
        for (std::size_t k = 0; k < m * n; ++k) {
            const auto x = sample_in_Y(Y, rng);
            std::copy(x.begin(), x.end(), e.begin() + static_cast<std::ptrdiff_t>(k * r2));
        }
        ensembles.push_back(std::move(e));
    }

    std::vector<double> out(r2);
    for (const auto& e : ensembles) {
        op.prepare(e);
        for (std::size_t k = 0; k < Y.halfspaces.size(); ++k) {
            const auto& h = Y.halfspaces[k];
            const double nn = norm2(h.normal);
            for (const auto& x : face_points[k]) {
                for (std::size_t i = 0; i < m; ++i) {
                    op.evaluate(0.0, i, x, out);
                    const double flux = dot(out, h.normal) / nn;
                    ++rep.evaluations;
                    if (flux > rep.max_flux) {
                        rep.max_flux = flux;
                        rep.worst_face = h.label;
                        rep.worst_point = x;
                        rep.worst_cell = i;
                    }
                }
            }
        }
    }
    return rep;
}

namespace {

// Euclidean difference with minimal image on periodic axes.
double state_distance(const InvariantPolytope& Y, std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        double d = std::abs(a[k] - b[k]);
        const double p = k < Y.periods.size() ? Y.periods[k] : 0.0;
        if (p > 0) {
            d = std::fmod(d, p);
            d = std::min(d, p - d);
        }
        s += d * d;
    }
    return std::sqrt(s);
}

double vec_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(s);
}

// φ' near φ (local pairs capture derivatives) or an independent point of Y.
std::vector<double> partner(const InvariantPolytope& Y, std::span<const double> x, std::mt19937_64& rng, bool local) {
    if (!local) return sample_in_Y(Y, rng);
    std::normal_distribution<double> Z(0.0, 1.0);
    std::vector<double> y(x.begin(), x.end());
    double diam = 0.0;
    for (std::size_t k = 0; k < Y.dim; ++k) diam = std::max(diam, Y.hi[k] - Y.lo[k]);
    for (double& v : y) v += 1e-4 * diam * Z(rng);
    return Y.is_torus() ? y : Y.project(y);
}

}  // namespace

LipschitzEstimate lipschitz_estimate(const VlasovOperator& op, std::size_t samples, std::uint64_t seed) {
    const ModelSpec& model = op.model();
    const InvariantPolytope& Y = model.Y;
    const std::size_t r2 = model.r2;
    std::mt19937_64 rng(seed);
    LipschitzEstimate est;
    std::vector<double> g1(r2), g2(r2);
    for (const Kernel& g : model.g) {
        double L = 0.0;
        for (std::size_t s = 0; s < samples; ++s) {
            const bool local = s % 2 == 0;
            const auto psi = sample_in_Y(Y, rng);
            const auto phi = sample_in_Y(Y, rng);
            // vary φ, then ψ
            for (int which = 0; which < 2; ++which) {
                const auto& base = which == 0 ? phi : psi;
                const auto moved = partner(Y, base, rng, local);
                const double dx = state_distance(Y, base, moved);
                if (dx < 1e-14) continue;
                std::fill(g1.begin(), g1.end(), 0.0);
                std::fill(g2.begin(), g2.end(), 0.0);
                if (which == 0) {
                    g.eval(0.0, psi, phi, g1);
                    g.eval(0.0, psi, moved, g2);
                } else {
                    g.eval(0.0, psi, phi, g1);
                    g.eval(0.0, moved, phi, g2);
                }
                L = std::max(L, vec_distance(g1, g2) / dx);
            }
        }
        est.kernel.push_back(L);
    }
    const Partition& P = op.partition();
    for (std::size_t s = 0; s < samples; ++s) {
        const auto x = P.representative(s % P.size());
        const auto phi = sample_in_Y(Y, rng);
        const auto moved = partner(Y, phi, rng, s % 2 == 0);
        const double dx = state_distance(Y, phi, moved);
        if (dx < 1e-14) continue;
        std::fill(g1.begin(), g1.end(), 0.0);
        std::fill(g2.begin(), g2.end(), 0.0);
        model.h(0.0, x, phi, g1);
        model.h(0.0, x, moved, g2);
        est.field = std::max(est.field, vec_distance(g1, g2) / dx);
    }
    est.nu_norm = *std::max_element(op.a().begin(), op.a().end());
    est.L1 = est.field;
    for (std::size_t l = 0; l < op.dgms().size(); ++l) {
        const auto& b = op.dgms()[l].b;
        est.eta_norm.push_back(*std::max_element(b.begin(), b.end()));
        est.L1 += est.nu_norm * est.kernel[l] * est.eta_norm.back();
    }
    return est;
}

double vlasov_lipschitz_sample(VlasovOperator& op, std::span<const double> states, std::size_t samples,
                               std::uint64_t seed) {
    op.prepare(states);
    const InvariantPolytope& Y = op.model().Y;
    std::mt19937_64 rng(seed);
    std::vector<double> v1(op.model().r2), v2(op.model().r2);
    double L = 0.0;
    for (std::size_t s = 0; s < samples; ++s) {
        const std::size_t cell = s % op.cells();
        const auto phi = sample_in_Y(Y, rng);
        const auto moved = partner(Y, phi, rng, s % 2 == 0);
        const double dx = state_distance(Y, phi, moved);
        if (dx < 1e-14) continue;
        op.evaluate(0.0, cell, phi, v1);
        op.evaluate(0.0, cell, moved, v2);
        L = std::max(L, vec_distance(v1, v2) / dx);
    }
    return L;
}

}  // namespace dgmflow
