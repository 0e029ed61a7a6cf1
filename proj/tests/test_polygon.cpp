#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "kub/polygon.hpp"
#include "kub/rng.hpp"

using namespace kub;

namespace {

Ring sq(double x0, double y0, double s = 1) { return {{x0, y0}, {x0 + s, y0}, {x0 + s, y0 + s}, {x0, y0 + s}}; }
PolygonWithHoles P(Ring r) { return repair(std::vector<Ring>{std::move(r)}); }

double total_area(const std::vector<PolygonWithHoles>& ps) {
    double a = 0;
    for (const auto& p : ps) a += area(p);
    return a;
}

// Canonical form for set comparison: each ring rotated to start at its
// lexicographically smallest vertex; polygons sorted.
std::vector<PolygonWithHoles> canonical(std::vector<PolygonWithHoles> ps) {
    auto rot = [](Ring r) {
        auto it = std::min_element(r.begin(), r.end(),
                                   [](Vec2 a, Vec2 b) { return std::tie(a.x, a.y) < std::tie(b.x, b.y); });
        std::rotate(r.begin(), it, r.end());
        return r;
    };
    auto key = [](const Ring& r) { return std::make_pair(r[0].x, r[0].y); };
    for (auto& p : ps) {
        p.outer = rot(p.outer);
        for (auto& h : p.holes) h = rot(h);
        std::sort(p.holes.begin(), p.holes.end(), [&](const Ring& a, const Ring& b) { return key(a) < key(b); });
    }
    std::sort(ps.begin(), ps.end(), [&](const auto& a, const auto& b) { return key(a.outer) < key(b.outer); });
    return ps;
}

} // namespace

TEST(Polygon, ClockwiseSquareBecomesCcw) {
    Ring cw = sq(0, 0);
    std::reverse(cw.begin(), cw.end());
    const auto p = P(cw);
    EXPECT_DOUBLE_EQ(signed_area(p.outer), 1.0);
    EXPECT_EQ(p.outer.size(), 4u);
}

TEST(Polygon, RepeatedVertexRemoved) {
    const auto p = P({{0, 0}, {1, 0}, {1, 0}, {1, 1}, {0, 1}});
    EXPECT_EQ(p.outer.size(), 4u);
    EXPECT_DOUBLE_EQ(area(p), 1.0);
}

TEST(Polygon, CollinearVertexRemoved) {
    const auto p = P({{0, 0}, {0.5, 0.0004}, {1, 0}, {1, 1}, {0, 1}});
    EXPECT_EQ(p.outer.size(), 4u);
}

TEST(Polygon, VerticesSnappedToMillimetre) {
    const auto p = P({{0.00012, 0}, {1.0004, 0}, {1, 1}, {0, 1.0006}});
    for (auto v : p.outer) {
        EXPECT_NEAR(v.x * 1000, std::round(v.x * 1000), 1e-6);
        EXPECT_NEAR(v.y * 1000, std::round(v.y * 1000), 1e-6);
    }
}

TEST(Polygon, BowTieUnrepairable) {
    EXPECT_THROW(P({{0, 0}, {1, 1}, {1, 0}, {0, 1}}), geometry_error);
}

TEST(Polygon, DegenerateRing) {
    EXPECT_THROW(P({{0, 0}, {1, 0}, {2, 0}}), geometry_error);
    EXPECT_THROW(P({{0, 0}, {0.0001, 0}, {0, 0.0001}}), geometry_error);
}

TEST(Polygon, HolesOrientedClockwise) {
    const auto p = repair(std::vector<Ring>{sq(0, 0, 10), sq(2, 2, 2), sq(6, 6, 2)});
    ASSERT_EQ(p.holes.size(), 2u);
    EXPECT_GT(signed_area(p.outer), 0);
    for (const auto& h : p.holes) EXPECT_LT(signed_area(h), 0);
    EXPECT_DOUBLE_EQ(area(p), 100 - 8);
}

TEST(Polygon, HoleOutsideOrOverlapping) {
    EXPECT_THROW(repair(std::vector<Ring>{sq(0, 0, 10), sq(9, 9, 2)}), geometry_error);
    EXPECT_THROW(repair(std::vector<Ring>{sq(0, 0, 10), sq(2, 2, 3), sq(4, 4, 3)}), geometry_error);
}

TEST(Polygon, SignedAreaExamples) {
    EXPECT_DOUBLE_EQ(signed_area(sq(0, 0)), 1.0);
    Ring cw = sq(0, 0);
    std::reverse(cw.begin(), cw.end());
    EXPECT_DOUBLE_EQ(signed_area(cw), -1.0);
    EXPECT_DOUBLE_EQ(signed_area({{0, 0}, {3, 0}, {0, 4}}), 0.5 * 3 * 4);
}

TEST(Polygon, CentroidOfSquareWithHole) {
    const auto p = repair(std::vector<Ring>{sq(0, 0, 4), sq(0.5, 0.5, 1)});
    // Moments: 16*(2,2) - 1*(1,1) over 15.
    const Vec2 c = centroid(p);
    EXPECT_NEAR(c.x, (16 * 2.0 - 1.0) / 15, 1e-12);
    EXPECT_NEAR(c.y, (16 * 2.0 - 1.0) / 15, 1e-12);
}

TEST(Polygon, UnionSharedEdge) {
    const auto u = union_touching({P(sq(0, 0)), P(sq(1, 0))});
    ASSERT_EQ(u.size(), 1u);
    EXPECT_NEAR(area(u[0]), 2.0, 1e-12);
    EXPECT_EQ(u[0].outer.size(), 4u);
}

TEST(Polygon, UnionDisjointPassthrough) {
    const std::vector<PolygonWithHoles> in{P(sq(0, 0)), P(sq(6, 0))};
    EXPECT_EQ(union_touching(in), in);
}

TEST(Polygon, UnionOverlapping) {
    const auto u = union_touching({P(sq(0, 0)), P(sq(0.5, 0.5))});
    ASSERT_EQ(u.size(), 1u);
    EXPECT_NEAR(area(u[0]), 1 + 1 - 0.25, 1e-12);
}

TEST(Polygon, UnionEmpty) { EXPECT_TRUE(union_touching({}).empty()); }

TEST(Polygon, UnionRingOfHousesEnclosesCourtyard) {
    // Four bars around a courtyard merge into one polygon with one hole.
    const auto u = union_touching({P({{0, 0}, {10, 0}, {10, 2}, {0, 2}}), P({{0, 8}, {10, 8}, {10, 10}, {0, 10}}),
                                   P({{0, 2}, {2, 2}, {2, 8}, {0, 8}}), P({{8, 2}, {10, 2}, {10, 8}, {8, 8}})});
    ASSERT_EQ(u.size(), 1u);
    EXPECT_EQ(u[0].holes.size(), 1u);
    EXPECT_NEAR(area(u[0]), 100 - 36, 1e-9);
}

TEST(Polygon, IntersectsPredicate) {
    EXPECT_TRUE(intersects(P(sq(0, 0)), P(sq(1, 0))));
    EXPECT_FALSE(intersects(P(sq(0, 0)), P(sq(3, 0))));
    EXPECT_TRUE(intersects(P(sq(0, 0, 10)), P(sq(4, 4))));
    EXPECT_TRUE(intersects(P(sq(4, 4)), P(sq(0, 0, 10))));
    // Inside a hole without touching it: no shared point.
    const auto donut = repair(std::vector<Ring>{sq(0, 0, 10), sq(2, 2, 6)});
    EXPECT_FALSE(intersects(donut, P(sq(4, 4))));
    EXPECT_TRUE(intersects(donut, P(sq(2, 2))));
}

namespace {

std::vector<PolygonWithHoles> random_squares(std::uint64_t seed, int n, double site) {
    Rng rng(seed);
    std::vector<PolygonWithHoles> out;
    for (int i = 0; i < n; ++i) {
        const double x = std::round(rng.uniform() * site), y = std::round(rng.uniform() * site);
        const double w = 1 + std::round(rng.uniform() * 4), h = 1 + std::round(rng.uniform() * 4);
        out.push_back(P({{x, y}, {x + w, y}, {x + w, y + h}, {x, y + h}}));
    }
    return out;
}

} // namespace

TEST(PolygonProperty, UnionIdempotentDisjointAndBounded) {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        const auto in = random_squares(seed, 8, 20);
        const auto once = union_touching(in);
        const auto twice = union_touching(once);
        EXPECT_EQ(canonical(once), canonical(twice)) << "seed " << seed;
        for (std::size_t i = 0; i < once.size(); ++i)
            for (std::size_t j = i + 1; j < once.size(); ++j)
                EXPECT_FALSE(intersects(once[i], once[j])) << "seed " << seed;
        double max_in = 0, sum_in = 0;
        for (const auto& p : in) max_in = std::max(max_in, area(p)), sum_in += area(p);
        const double a = total_area(once);
        EXPECT_GE(a, max_in - 1e-9);
        // Each corner-only contact is joined by a 4 mm square (at most 8 mm2 added).
        EXPECT_LE(a, sum_in + 1e-4);
    }
}

TEST(PolygonProperty, DisjointInputsConserveArea) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        std::vector<PolygonWithHoles> in;
        Rng rng(seed);
        for (int i = 0; i < 6; ++i) {
            const double x = i * 10 + rng.uniform() * 3, y = rng.uniform() * 5;
            in.push_back(P({{x, y}, {x + 4, y + 0.5}, {x + 3.5, y + 5}, {x - 0.5, y + 3}}));
        }
        const auto out = union_touching(in);
        EXPECT_EQ(out.size(), in.size());
        EXPECT_NEAR(total_area(out), total_area(in), 1e-6 * total_area(in));
    }
}

TEST(PolygonProperty, RepairIdempotent) {
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        // Star-shaped ring around the origin: never self-intersecting.
        const int n = 3 + static_cast<int>(rng.bits() % 12);
        Ring r;
        for (int k = 0; k < n; ++k) {
            const double a = 2 * pi * (k + 0.3 * rng.uniform()) / n, rad = 1 + 9 * rng.uniform();
            r.push_back({rad * std::cos(a), rad * std::sin(a)});
        }
        if (rng.uniform() < 0.5) std::reverse(r.begin(), r.end());
        PolygonWithHoles once;
        try {
            once = P(r);
        } catch (const geometry_error&) {
            continue;
        }
        EXPECT_EQ(repair(once), once);
    }
}
