#include "dgmflow/descriptor.hpp"

#include <cmath>
#include <numbers>

#include "dgmflow/error.hpp"

namespace dgmflow {
namespace {

template <class... F>
struct overloaded : F... {
    using F::operator()...;
};
template <class... F>
overloaded(F...) -> overloaded<F...>;

double quantile_level(std::size_t j, std::size_t n, QuantileRule rule) {
    // j is 1-based
    if (rule == QuantileRule::plus_one) return static_cast<double>(j) / static_cast<double>(n + 1);
    return (2.0 * static_cast<double>(j) - 1.0) / (2.0 * static_cast<double>(n));
}

}  // namespace

double descriptor_mass(const MeasureDescriptor& d) {
    return std::visit(overloaded{[](const Atomic& a) { return a.atoms.total_mass(); },
                                 [](const auto& x) { return x.mass; }},
                      d);
}

std::size_t descriptor_dim(const MeasureDescriptor& d) {
    return std::visit(overloaded{[](const Dirac& x) { return x.point.size(); },
                                 [](const UniformSegment& x) { return x.from.size(); },
                                 [](const UniformArc&) { return std::size_t{1}; },
                                 [](const PlanarCircle&) { return std::size_t{3}; },
                                 [](const CantorMeasure&) { return std::size_t{1}; },
                                 [](const Atomic& x) { return x.atoms.dim(); }},
                      d);
}

MeasureDescriptor with_mass(MeasureDescriptor d, double mass) {
    std::visit(overloaded{[&](Atomic& a) {
                              const double m = a.atoms.total_mass();
                              a.atoms = m > 0 ? a.atoms.scaled(mass / m) : a.atoms;
                          },
                          [&](auto& x) { x.mass = mass; }},
               d);
    return d;
}

double cantor_quantile(double u) {
    if (!(u >= 0.0 && u <= 1.0)) throw Error("cantor_quantile: level outside [0,1]");
    // binary digits of u become ternary digits 0/2; ties resolve to the left (smallest x)
    double x = 0.0, scale = 1.0;
    for (int k = 0; k < 64 && u > 0.0; ++k) {
        scale /= 3.0;
        u *= 2.0;
        if (u > 1.0) {
            x += 2.0 * scale;
            u -= 1.0;
        }
    }
    return x;
}

double cantor_cdf(double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double f = 0.0, half = 0.5;
    for (int k = 0; k < 64; ++k) {
        x *= 3.0;
        if (x >= 1.0 && x <= 2.0) return f + half;
        if (x > 2.0) {
            f += half;
            x -= 2.0;
        }
        half *= 0.5;
    }
    return f;
}

DiscreteMeasure empirical_approximation(const MeasureDescriptor& target, std::size_t n, QuantileRule rule) {
    if (n == 0) throw Error("empirical_approximation: n must be positive");
    const double mass = descriptor_mass(target);
    const double w = mass / static_cast<double>(n);
    DiscreteMeasure out(descriptor_dim(target));

    std::visit(
        overloaded{
            [&](const Dirac& d) {
                for (std::size_t j = 0; j < n; ++j) out.add(d.point, w);
            },
            [&](const UniformSegment& s) {
                if (s.to.size() != s.from.size()) throw Error("segment endpoints differ in dimension");
                std::vector<double> p(s.from.size());
                for (std::size_t j = 1; j <= n; ++j) {
                    const double q = quantile_level(j, n, rule);
                    for (std::size_t c = 0; c < p.size(); ++c) p[c] = s.from[c] + q * (s.to[c] - s.from[c]);
                    out.add(p, w);
                }
            },
            [&](const UniformArc& a) {
                const bool full = a.length >= a.period;
                for (std::size_t j = 1; j <= n; ++j) {
                    const double q = full ? static_cast<double>(j - 1) / static_cast<double>(n)
                                          : quantile_level(j, n, rule);
                    double z = std::fmod(a.start + q * std::min(a.length, a.period), a.period);
                    if (z < 0) z += a.period;
                    out.add({z}, w);
                }
            },
            [&](const PlanarCircle& c) {
                for (std::size_t j = 0; j < n; ++j) {
                    const double th = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
                    const double cs = std::cos(th), sn = std::sin(th);
                    std::vector<double> p(3);
                    for (int k = 0; k < 3; ++k) p[k] = c.center[k] + c.radius * (cs * c.u[k] + sn * c.v[k]);
                    out.add(p, w);
                }
            },
            [&](const CantorMeasure& c) {
                for (std::size_t j = 1; j <= n; ++j) {
                    double z = c.offset + c.scale * cantor_quantile(quantile_level(j, n, rule));
                    if (c.period > 0) {
                        z = std::fmod(z, c.period);
                        if (z < 0) z += c.period;
                    }
                    out.add({z}, w);
                }
            },
            [&](const Atomic& a) {
                if (a.atoms.empty() || mass <= 0) {
                    throw Error("empirical_approximation: atomic target has no mass");
                }
                std::size_t k = 0;
                double cum = a.atoms.weight(0);
                for (std::size_t j = 1; j <= n; ++j) {
                    const double level = quantile_level(j, n, rule) * mass;
                    while (cum < level * (1 - 1e-14) && k + 1 < a.atoms.size()) cum += a.atoms.weight(++k);
                    out.add(a.atoms.atom(k), w);
                }
            }},
        target);
    return out;
}

}  // namespace dgmflow
