#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "dgmflow/error.hpp"
#include "dgmflow/lp.hpp"
#include "dgmflow/measure.hpp"

using namespace dgmflow;

namespace {

DiscreteMeasure random_measure(std::mt19937_64& rng, std::size_t atoms, std::size_t dim, double mass) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DiscreteMeasure m(dim);
    std::vector<double> w(atoms);
    double s = 0.0;
    for (double& x : w) s += (x = u(rng) + 0.05);
    std::vector<double> p(dim);
    for (std::size_t k = 0; k < atoms; ++k) {
        for (double& c : p) c = u(rng);
        m.add(p, w[k] * mass / s);
    }
    return m;
}

// Primal BL program over all atom pairs, no merging or pruning; f = u − b with u ≥ 0.
double bl_primal_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& metric) {
    std::vector<std::vector<double>> pts;
    std::vector<double> c;
    for (std::size_t k = 0; k < mu.size(); ++k) {
        pts.emplace_back(mu.atom(k).begin(), mu.atom(k).end());
        c.push_back(mu.weight(k));
    }
    for (std::size_t k = 0; k < nu.size(); ++k) {
        pts.emplace_back(nu.atom(k).begin(), nu.atom(k).end());
        c.push_back(-nu.weight(k));
    }
    const std::size_t k = pts.size(), b = k, l = k + 1;
    lp::Problem p;
    p.num_vars = k + 2;
    p.objective.assign(p.num_vars, 0.0);
    double csum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        p.objective[i] = -c[i];
        csum += c[i];
    }
    p.objective[b] = csum;  // Σc·(u − b)
    for (std::size_t i = 0; i < k; ++i) p.rows.push_back({{{i, 1.0}, {b, -2.0}}, lp::Sense::le, 0.0});
    for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
            if (i != j) p.rows.push_back({{{i, 1.0}, {j, -1.0}, {l, -metric(pts[i], pts[j])}}, lp::Sense::le, 0.0});
    p.rows.push_back({{{b, 1.0}, {l, 1.0}}, lp::Sense::le, 1.0});
    lp::Result r = lp::solve(p);
    REQUIRE(r.status == lp::Status::optimal);
    return -r.value;
}

// 1-D Wasserstein-1 as ∫|F_μ − F_ν|.
double w1_line_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    std::vector<std::pair<double, double>> ev;
    for (std::size_t k = 0; k < mu.size(); ++k) ev.push_back({mu.atom(k)[0], mu.weight(k)});
    for (std::size_t k = 0; k < nu.size(); ++k) ev.push_back({nu.atom(k)[0], -nu.weight(k)});
    std::sort(ev.begin(), ev.end());
    double cdf = 0.0, total = 0.0;
    for (std::size_t k = 0; k + 1 < ev.size(); ++k) {
        cdf += ev[k].second;
        total += std::abs(cdf) * (ev[k + 1].first - ev[k].first);
    }
    return total;
}

}  // namespace

TEST_CASE("two Dirac measures follow 2d/(2+d)") {
    CHECK(bl_distance(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0})) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(bl_distance(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({10.0})) == doctest::Approx(5.0 / 3.0).epsilon(1e-12));
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a = {u(rng), u(rng)}, b = {u(rng), u(rng)};
        const double d = std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]);
        CHECK(std::abs(bl_distance(DiscreteMeasure::dirac(a), DiscreteMeasure::dirac(b)) - 2 * d / (2 + d)) <= 1e-12);
    }
}

TEST_CASE("identical and zero measures") {
    std::mt19937_64 rng(3);
    DiscreteMeasure mu = random_measure(rng, 6, 2, 1.0);
    CHECK(bl_distance(mu, mu) == 0.0);
    CHECK(kr_distance(mu, mu) == 0.0);
    CHECK(tv_distance(mu, mu) == 0.0);
    CHECK(bl_distance(mu, DiscreteMeasure()) == doctest::Approx(1.0));
    CHECK(bl_distance(DiscreteMeasure(), DiscreteMeasure()) == 0.0);
}

TEST_CASE("bl_distance agrees with the unpruned primal program") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 30; ++t) {
        const std::size_t dim = 1 + t % 2;
        DiscreteMeasure mu = random_measure(rng, 2 + t % 5, dim, 1.0 + 0.1 * (t % 3));
        DiscreteMeasure nu = random_measure(rng, 1 + t % 4, dim, 1.0);
        const Metric metric = (t % 3 == 0 && dim == 1) ? Metric::circle() : Metric::l1();
        CHECK(bl_distance(mu, nu, metric) == doctest::Approx(bl_primal_oracle(mu, nu, metric)).epsilon(1e-9));
    }
}

TEST_CASE("kr_distance examples and the 1-D transport oracle") {
    CHECK(kr_distance(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0})) == doctest::Approx(1.0));
    DiscreteMeasure split(1);
    split.add({0.0}, 0.5);
    split.add({2.0}, 0.5);
    CHECK(kr_distance(split, DiscreteMeasure::dirac({1.0})) == doctest::Approx(1.0));

    std::mt19937_64 rng(9);
    for (int t = 0; t < 25; ++t) {
        DiscreteMeasure mu = random_measure(rng, 3 + t % 6, 1, 1.0);
        DiscreteMeasure nu = random_measure(rng, 2 + t % 5, 1, 1.0);
        CHECK(kr_distance(mu, nu) == doctest::Approx(w1_line_oracle(mu, nu)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(kr_distance(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({0.0}, 2.0)), Error);
}

TEST_CASE("tv_distance examples and the half-L1 identity") {
    DiscreteMeasure a(1), b(1);
    a.add({0.0}, 0.7);
    a.add({1.0}, 0.3);
    b.add({0.0}, 0.4);
    b.add({1.0}, 0.6);
    CHECK(tv_distance(a, b) == doctest::Approx(0.3));
    CHECK(tv_distance(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0})) == 1.0);

    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < 20; ++t) {
        DiscreteMeasure p(1), q(1);
        std::vector<double> w(5), v(5);
        double sw = 0, sv = 0;
        for (int k = 0; k < 5; ++k) {
            sw += (w[k] = u(rng));
            sv += (v[k] = u(rng));
        }
        double half = 0.0;
        for (int k = 0; k < 5; ++k) {
            p.add({double(k)}, w[k] / sw);
            q.add({double(k)}, v[k] / sv);
            half += 0.5 * std::abs(w[k] / sw - v[k] / sv);
        }
        CHECK(tv_distance(p, q) == doctest::Approx(half).epsilon(1e-14));
    }
}

TEST_CASE("metric axioms, scaling and the comparison chain on the unit square") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 15; ++t) {
        DiscreteMeasure a = random_measure(rng, 4, 2, 1.0);
        DiscreteMeasure b = random_measure(rng, 5, 2, 1.0);
        DiscreteMeasure c = random_measure(rng, 3, 2, 1.0);
        const double ab = bl_distance(a, b), ba = bl_distance(b, a);
        CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
        CHECK(ab <= bl_distance(a, c) + bl_distance(c, b) + 1e-9);
        CHECK(kr_distance(a, b) <= kr_distance(a, c) + kr_distance(c, b) + 1e-9);
        CHECK(tv_distance(a, b) <= tv_distance(a, c) + tv_distance(c, b) + 1e-12);
        CHECK(bl_distance(a.scaled(2.5), b.scaled(2.5)) == doctest::Approx(2.5 * ab).epsilon(1e-9));

        const double kr = kr_distance(a, b), tv = tv_distance(a, b);
        CHECK(ab <= kr + 1e-9);
        CHECK(kr <= 2.0 * std::min(ab, tv) + 1e-9);
    }
}

TEST_CASE("circle metric wraps around") {
    const Metric circ = Metric::circle();
    CHECK(circ(std::vector<double>{0.05}, std::vector<double>{0.95}) == doctest::Approx(0.1));
    const double d = 0.1;
    CHECK(bl_distance(DiscreteMeasure::dirac({0.05}), DiscreteMeasure::dirac({0.95}), circ) ==
          doctest::Approx(2 * d / (2 + d)));
    // 0 and 1 are the same point on the circle
    CHECK(bl_distance(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0}), circ) == 0.0);
}

TEST_CASE("input validation") {
    DiscreteMeasure m(1);
    CHECK_THROWS_AS(m.add({0.0}, -0.1), Error);
    CHECK_THROWS_AS(m.add({NAN}, 0.1), Error);
    DiscreteMeasure big(1), other(1);
    for (int k = 0; k < 300; ++k) {
        big.add({k * 1.0}, 1.0);
        other.add({k + 0.5}, 1.0);
    }
    CHECK_THROWS_WITH_AS(bl_distance(big, other), doctest::Contains("too large for exact LP"), Error);
    DistanceOptions wide;
    wide.max_atoms = 1000;
    CHECK(bl_distance(big, other, Metric::l1(), wide) > 0.0);
}

TEST_CASE("measure text round trip") {
    std::mt19937_64 rng(19);
    DiscreteMeasure mu = random_measure(rng, 7, 3, 1.7);
    std::stringstream ss;
    write_measure(ss, mu);
    DiscreteMeasure back = read_measure(ss);
    REQUIRE(back.size() == mu.size());
    CHECK(back.coords() == mu.coords());
    CHECK(back.weights() == mu.weights());

    std::stringstream bad("1,2,1\n0.5,0\n");
    CHECK_THROWS_AS(read_measure(bad), Error);
}
