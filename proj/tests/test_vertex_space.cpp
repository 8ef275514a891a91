#include <cmath>
#include <numeric>
#include <sstream>

#include "doctest.h"
#include "dgmflow/error.hpp"
#include "dgmflow/vertex_space.hpp"

using namespace dgmflow;

namespace {

const VertexSpace all_spaces[] = {VertexSpace::interval(), VertexSpace::circle(), VertexSpace::sphere(),
                                  VertexSpace::square(), VertexSpace::triangle(), VertexSpace::discrete()};

}  // namespace

TEST_CASE("unit interval equipartition") {
    auto p = make_partition(VertexSpace::interval(), 4);
    REQUIRE(p->size() == 4);
    CHECK(p->cell(1).lo[0] == 0.25);
    CHECK(p->cell(1).hi[0] == 0.5);
    CHECK(p->mass(1) == 0.25);
    CHECK(p->representative(1)[0] == 0.375);
    for (std::size_t i = 0; i < 4; ++i) CHECK(p->diameter(i) == 0.25);
    // half-open cells, right end closed
    CHECK(p->locate(std::vector<double>{0.25}) == 1);
    CHECK(p->locate(std::vector<double>{1.0}) == 3);
    CHECK_THROWS_AS(p->locate(std::vector<double>{1.5}), Error);
}

TEST_CASE("square grid diameter matches the cube bound") {
    auto p = make_partition(VertexSpace::square(), 9);
    REQUIRE(p->size() == 9);
    CHECK(p->max_diameter() == doctest::Approx(2.0 / 3.0));
    for (std::size_t m : {4u, 16u, 64u, 256u, 10u, 50u}) {
        auto q = make_partition(VertexSpace::square(), m);
        REQUIRE(q->size() == m);
        const double bound = 2.0 * 2.0 * 0.5 / std::floor(std::sqrt(double(m)) + 1e-12);
        CHECK(q->max_diameter() <= bound + 1e-15);
    }
    for (std::size_t m : {4u, 16u, 64u, 256u, 7u}) {
        auto q = make_partition(VertexSpace::interval(), m);
        CHECK(q->max_diameter() <= 2.0 * 0.5 / double(m) + 1e-15);
    }
}

TEST_CASE("finite discrete space") {
    auto p = make_partition(VertexSpace::discrete(), 3);
    REQUIRE(p->size() == 3);
    CHECK(p->representative(0)[0] == 1.0);
    CHECK(p->representative(1)[0] == 0.5);
    CHECK(p->representative(2)[0] == doctest::Approx(1.0 / 3.0));
    CHECK(p->mass(0) == 0.0);  // μ_X puts no mass on 1
    CHECK(p->mass(1) == 0.5);
    CHECK(p->mass(2) == 0.5);  // Σ_{i≥3} 2^{−i+1} = 2^{−1}
    auto q = make_partition(VertexSpace::discrete(), 6);
    CHECK(q->mass(5) == std::ldexp(1.0, -4));
    CHECK(q->locate(std::vector<double>{0.0}) == 5);
    CHECK(q->locate(std::vector<double>{1.0 / 9.0}) == 5);
    CHECK(q->locate(std::vector<double>{0.25}) == 3);
    // exact sum over the tail
    CHECK(q->integrate(5, [](std::span<const double>) { return 1.0; }) == doctest::Approx(q->mass(5)).epsilon(1e-15));
}

TEST_CASE("cell masses sum to one and representatives lie in their cells") {
    for (const auto& space : all_spaces) {
        for (std::size_t m : {1u, 2u, 3u, 4u, 9u, 10u, 16u, 37u, 64u}) {
            CAPTURE(space.name());
            CAPTURE(m);
            auto p = make_partition(space, m);
            REQUIRE(p->size() == m);
            const double total = std::accumulate(p->masses().begin(), p->masses().end(), 0.0);
            CHECK(std::abs(total - 1.0) <= 1e-12);
            for (std::size_t i = 0; i < m; ++i) {
                CHECK(p->contains(i, p->representative(i), 1e-12));
                CHECK(p->locate(p->representative(i)) == i);
                if (space.kind != SpaceKind::triangle && space.kind != SpaceKind::discrete) {
                    const double one = p->integrate(i, [](std::span<const double>) { return 1.0; });
                    CHECK(one == doctest::Approx(p->mass(i)).epsilon(1e-12));
                }
            }
        }
    }
}

TEST_CASE("maximum diameter shrinks with m") {
    for (const auto& space : all_spaces) {
        CAPTURE(space.name());
        double prev = INFINITY;
        std::vector<double> d;
        for (std::size_t m : {4u, 16u, 64u, 256u}) {
            d.push_back(make_partition(space, m)->max_diameter());
            CHECK(d.back() < prev);
            prev = d.back();
        }
        // at least the 1/sqrt(m) rate of a two-dimensional cell
        if (space.kind != SpaceKind::discrete) CHECK(d[3] <= 0.55 * d[2]);
    }
}

TEST_CASE("triangle cells and the diagonal segment measure") {
    auto p = make_partition(VertexSpace::triangle(), 16);
    REQUIRE(p->size() == 16);
    // congruent sub-triangles with legs 1/4
    for (std::size_t i = 0; i < 16; ++i) CHECK(p->diameter(i) == doctest::Approx(0.5));
    // the diagonal (0,0)-(½,½) crosses the up and down triangles at (0,0) and (¼,¼)
    CHECK(p->positive_mass_cells() == 4);
    for (std::size_t i = 0; i < 16; ++i) {
        if (p->mass(i) == 0.0) continue;
        auto r = p->representative(i);
        CHECK(r[0] == doctest::Approx(r[1]));
    }
    // integrals along the diagonal: ∫|x|₁ dμ_X = ∫_0^{1/2} 2t · 2 dt = 1/2
    double total = 0.0;
    for (std::size_t i = 0; i < 16; ++i)
        total += p->integrate(i, [](std::span<const double> x) { return x[0] + x[1]; });
    CHECK(total == doctest::Approx(0.5).epsilon(1e-14));

    // with splitting the count stays consistent with direct evaluation
    for (std::size_t m : {5u, 10u, 20u, 30u}) {
        auto q = make_partition(VertexSpace::triangle(), m);
        double mass = 0.0;
        for (std::size_t i = 0; i < m; ++i) mass += q->mass(i);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-13));
        CHECK(q->positive_mass_cells() >= 1);
    }
}

TEST_CASE("sphere bands have equal-area sectors") {
    auto p = make_partition(VertexSpace::sphere(), 8);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(p->mass(i) == doctest::Approx(1.0 / 8.0));
        auto r = p->representative(i);
        CHECK(r[0] * r[0] + r[1] * r[1] + r[2] * r[2] == doctest::Approx(1.0));
    }
}

TEST_CASE("partitions are reproducible and serialize one row per cell") {
    auto a = make_partition(VertexSpace::triangle(), 12);
    auto b = make_partition(VertexSpace::triangle(), 12);
    CHECK(a->same_cells(*b));
    std::stringstream sa, sb;
    write_partition(sa, *a);
    write_partition(sb, *b);
    CHECK(sa.str() == sb.str());
    std::string line;
    int rows = 0;
    while (std::getline(sa, line)) ++rows;
    CHECK(rows == 12);
    CHECK_THROWS_AS(make_partition(VertexSpace::interval(), 0), Error);
}
