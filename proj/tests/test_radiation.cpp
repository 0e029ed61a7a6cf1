#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "kub/radiation.hpp"
#include "kub/synthetic.hpp"

using namespace kub;

namespace {

// Quad (a, b, c, d) as two triangles forming one facet; normal follows a->b->c.
std::uint32_t add_quad(TriMesh& m, Vec3 a, Vec3 b, Vec3 c, Vec3 d, FaceTag tag = FaceTag::wall, std::int32_t owner = -1) {
    const auto f = m.new_face();
    const auto ia = m.add_vertex(a), ib = m.add_vertex(b), ic = m.add_vertex(c), id = m.add_vertex(d);
    m.add_triangle(ia, ib, ic, tag, owner, f);
    m.add_triangle(ia, ic, id, tag, owner, f);
    return f;
}

// Plane-then-barycentric intersection, independent of the Moller-Trumbore path.
std::optional<double> plane_hit(Vec3 o, Vec3 d, Vec3 a, Vec3 b, Vec3 c) {
    const Vec3 n = cross(b - a, c - a);
    const double den = dot(n, d);
    if (std::abs(den) < 1e-14 * norm(n) * norm(d)) return std::nullopt;
    const double t = dot(n, a - o) / den;
    const Vec3 p = o + t * d;
    const double nn = dot(n, n);
    const double u = dot(n, cross(c - b, p - b)) / nn, v = dot(n, cross(a - c, p - c)) / nn, w = 1 - u - v;
    if (u < 0 || v < 0 || w < 0) return std::nullopt;
    return t;
}

TriMesh random_triangles(std::uint64_t seed, int n) {
    Rng rng(seed);
    TriMesh m;
    for (int k = 0; k < n; ++k) {
        const Vec3 c{rng.uniform() * 20, rng.uniform() * 20, rng.uniform() * 20};
        auto j = [&] { return Vec3{rng.uniform() * 2 - 1, rng.uniform() * 2 - 1, rng.uniform() * 2 - 1}; };
        const auto a = m.add_vertex(c + j()), b = m.add_vertex(c + j()), cc = m.add_vertex(c + j());
        m.add_triangle(a, b, cc, FaceTag::wall, -1, m.new_face());
    }
    return m;
}

// Parallel, directly opposed a x b rectangles at distance c.
double parallel_rectangles(double a, double b, double c) {
    const double X = a / c, Y = b / c;
    const double x1 = std::sqrt(1 + X * X), y1 = std::sqrt(1 + Y * Y);
    return 2 / (3.14159265358979323846 * X * Y) *
           (std::log(x1 * y1 / std::sqrt(1 + X * X + Y * Y)) + X * y1 * std::atan(X / y1) + Y * x1 * std::atan(Y / x1) -
            X * std::atan(X) - Y * std::atan(Y));
}

TriMesh box_mesh(const std::vector<BuildingModel>& bs) {
    TriMesh m;
    for (const auto& b : bs) m.append(lod1_mesh(b));
    return m;
}

} // namespace

TEST(Bvh, SingleTriangleIsOneLeaf) {
    TriMesh m;
    m.add_triangle(m.add_vertex({0, 0, 0}), m.add_vertex({1, 0, 0}), m.add_vertex({0, 1, 0}), FaceTag::roof, -1, 0);
    const auto bvh = build_bvh(m);
    ASSERT_EQ(bvh.nodes().size(), 1u);
    EXPECT_EQ(bvh.nodes()[0].count, 1u);
}

TEST(Bvh, EmptySceneRejected) { EXPECT_THROW(build_bvh(TriMesh{}), geometry_error); }

TEST(Bvh, StructureInvariants) {
    const auto m = random_triangles(11, 1000);
    const auto bvh = build_bvh(m);
    std::vector<int> seen(m.size(), 0);
    const auto& nodes = bvh.nodes();
    for (const auto& n : nodes) {
        if (n.count) {
            EXPECT_LE(n.count, Bvh::max_leaf);
            for (auto t : bvh.leaf_triangles(n)) {
                ++seen[t];
                Box3 tb;
                for (int k = 0; k < 3; ++k) tb.expand(m.corner(t, k));
                EXPECT_TRUE(n.box.contains(tb));
            }
        } else {
            EXPECT_TRUE(n.box.contains(nodes[n.first].box));
            EXPECT_TRUE(n.box.contains(nodes[n.first + 1].box));
        }
    }
    for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Bvh, MatchesBruteForceOnRandomRays) {
    const auto m = random_triangles(7, 1000);
    const auto bvh = build_bvh(m);
    Rng rng(99);
    int hits = 0;
    for (int k = 0; k < 200; ++k) {
        const Vec3 o{rng.uniform() * 30 - 5, rng.uniform() * 30 - 5, rng.uniform() * 30 - 5};
        const Vec3 d = normalized({rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5});
        const auto a = ray_hit(bvh, o, d), b = ray_hit_brute_force(m, o, d);
        ASSERT_EQ(a.has_value(), b.has_value());
        if (!a) continue;
        ++hits;
        EXPECT_EQ(a->triangle, b->triangle);
        EXPECT_EQ(a->t, b->t);
        const auto t = plane_hit(o, d, m.corner(a->triangle, 0), m.corner(a->triangle, 1), m.corner(a->triangle, 2));
        ASSERT_TRUE(t);
        EXPECT_NEAR(*t, a->t, 1e-9 * std::max(1.0, a->t));
    }
    EXPECT_GT(hits, 20);
}

TEST(Bvh, MissingBoundingBoxTestsNoTriangle) {
    const auto m = random_triangles(3, 100);
    const auto bvh = build_bvh(m);
    TraceStats stats;
    EXPECT_FALSE(ray_hit(bvh, {-10, -10, -10}, {-1, 0, 0}, default_t_min, &stats));
    EXPECT_EQ(stats.triangle_tests, 0u);
}

TEST(RayHit, UnitTriangle) {
    TriMesh m;
    m.add_triangle(m.add_vertex({-1, -1, 0}), m.add_vertex({1, -1, 0}), m.add_vertex({0, 1, 0}), FaceTag::roof, -1, 0);
    const auto bvh = build_bvh(m);
    const auto h = ray_hit(bvh, {0, 0, -1}, {0, 0, 1});
    ASSERT_TRUE(h);
    EXPECT_DOUBLE_EQ(h->t, 1.0);
    EXPECT_FALSE(ray_hit(bvh, {0, 0, -1}, {0, 0, -1}));
    EXPECT_THROW(ray_hit(bvh, {0, 0, -1}, {0, 0, 0}), geometry_error);
    // Origin on the surface: t_min suppresses the self hit.
    EXPECT_FALSE(ray_hit(bvh, {0, 0, 0}, {0, 0, 1}));
}

TEST(RayHit, GrazingRaysAgreeWithBruteForce) {
    const auto m = box_mesh({{"a", {synthetic::rectangle(0, 0, 4, 4), {}}, 0, 3, 1}});
    const auto bvh = build_bvh(m);
    for (double z : {0.0, 1.5, 3.0})
        for (double y : {0.0, 2.0, 4.0}) {
            const Vec3 o{-2, y, z}, d{1, 0, 0};
            const auto a = ray_hit(bvh, o, d), b = ray_hit_brute_force(m, o, d);
            ASSERT_EQ(a.has_value(), b.has_value());
            if (a) {
                EXPECT_EQ(a->t, b->t);
            }
        }
}

TEST(Mask, IsolatedRoofUnblocked) {
    const auto m = box_mesh({{"a", {synthetic::rectangle(0, 0, 4, 4), {}}, 0, 3, 1}});
    const RayScene scene(m);
    std::uint32_t roof = 0;
    for (const auto& f : scene.faces)
        if (f.tag == FaceTag::roof) roof = f.id;
    const auto mask = shading_mask(scene, roof, SkyGrid(24, 6), 16, 1);
    for (double b : mask.blocked) EXPECT_EQ(b, 0.0);
}

TEST(Mask, UnknownFace) {
    const auto m = box_mesh({{"a", {synthetic::rectangle(0, 0, 4, 4), {}}, 0, 3, 1}});
    const RayScene scene(m);
    EXPECT_THROW(shading_mask(scene, 999, SkyGrid(8, 4), 4, 1), geometry_error);
}

TEST(Mask, PlateAboveBlocksEverything) {
    TriMesh m;
    const auto face = add_quad(m, {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, FaceTag::roof);
    const double w = 1e7;
    add_quad(m, {-w, -w, 1}, {-w, w, 1}, {w, w, 1}, {w, -w, 1});
    const RayScene scene(m);
    const auto mask = shading_mask(scene, face, SkyGrid(36, 9), 32, 5);
    for (double b : mask.blocked) EXPECT_EQ(b, 1.0);
}

TEST(Mask, WallFacingSlabMatchesVisibilityOracle) {
    // Emitter: 1 x 1 wall in the plane y = 0 facing north (+y).
    // Slab: plane y = d, x in [-W, W], z in [0, H].
    const double d = 4, W = 40, H = 12;
    TriMesh m;
    const auto face = add_quad(m, {1, 0, 0}, {0, 0, 0}, {0, 0, 1}, {1, 0, 1});
    add_quad(m, {-W, d, 0}, {W, d, 0}, {W, d, H}, {-W, d, H});
    const RayScene scene(m);
    ASSERT_GT(scene.faces[face].normal.y, 0.99);

    const SkyGrid g(36, 9);
    const std::size_t samples = 64;
    const auto mask = shading_mask(scene, face, g, samples, 17);
    auto blocked_from = [&](Vec3 p, SunDirection s) {
        const Vec3 v = to_vector(s);
        if (v.y <= 0) return true;
        const double t = (d - p.y) / v.y;
        const Vec3 q = p + t * v;
        return q.x >= -W && q.x <= W && q.z >= 0 && q.z <= H;
    };
    int compared = 0;
    for (int i = 0; i < g.n_az; ++i)
        for (int j = 0; j < g.n_alt; ++j) {
            // Oracle value at the bin centre seen from the face centre; only
            // bins classified uniformly over the bin and the face are compared.
            const bool centre = blocked_from({0.5, 0, 0.5}, g.center(i, j));
            bool uniform = true;
            for (double fa : {0.0, 0.5, 1.0})
                for (double fb : {0.0, 0.5, 1.0})
                    for (double px : {0.0, 1.0})
                        for (double pz : {0.0, 1.0}) {
                            const SunDirection s{(i + fa) * g.az_step(), (j + fb) * g.alt_step()};
                            if (blocked_from({px, 0, pz}, s) != centre) uniform = false;
                        }
            if (!uniform) continue;
            ++compared;
            EXPECT_NEAR(mask.at(i, j), centre ? 1.0 : 0.0, 3 / std::sqrt(static_cast<double>(samples)))
                << "bin " << i << "," << j;
        }
    EXPECT_GT(compared, 200);
}

TEST(MaskProperty, AddingGeometryNeverDecreasesBlocked) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto boxes = synthetic::random_boxes(seed, 6);
        const auto base = box_mesh({boxes[0], boxes[1]});
        const auto more = box_mesh(boxes);
        const RayScene s1(base), s2(more);
        const SkyGrid g(24, 6);
        for (std::uint32_t f = 0; f < base.face_count; ++f) {
            if (s1.faces[f].tag == FaceTag::ground) continue;
            const auto a = shading_mask(s1, f, g, 8, seed), b = shading_mask(s2, f, g, 8, seed);
            for (std::size_t k = 0; k < g.size(); ++k) EXPECT_GE(b.blocked[k], a.blocked[k]);
        }
    }
}

TEST(MaskProperty, DeterministicAcrossThreads) {
    const auto m = box_mesh(synthetic::random_boxes(4, 8));
    const RayScene scene(m);
    std::vector<std::uint32_t> faces;
    for (const auto& f : scene.faces)
        if (f.tag != FaceTag::ground) faces.push_back(f.id);
    const auto a = shading_masks(scene, faces, SkyGrid(24, 6), 8, 42, 1);
    const auto b = shading_masks(scene, faces, SkyGrid(24, 6), 8, 42, 4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].blocked, b[k].blocked);
        for (double v : a[k].blocked) {
            EXPECT_GE(v, 0);
            EXPECT_LE(v, 1);
        }
    }
    EXPECT_EQ(mask_to_csv(a[0]), mask_to_csv(shading_mask(scene, faces[0], SkyGrid(24, 6), 8, 42)));
}

TEST(Mask, CsvLayout) {
    ShadingMask m{3, SkyGrid(4, 2), {0, 0.5, 1, 0.25, 0, 0, 1, 1}, 4, 1};
    EXPECT_EQ(mask_to_csv(m), "azimuth,22.5,67.5\n45,0,0.5\n135,1,0.25\n225,0,0\n315,1,1\n");
}

TEST(ViewFactors, CoplanarSquaresSeeNothing) {
    TriMesh m;
    const auto a = add_quad(m, {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0});
    const auto b = add_quad(m, {1, 0, 0}, {2, 0, 0}, {2, 1, 0}, {1, 1, 0});
    const RayScene scene(m);
    const auto vf = view_factors(scene, {{a}, {b}}, 20000, 1);
    EXPECT_EQ(vf.F[0][1], 0.0);
    EXPECT_EQ(vf.F[1][0], 0.0);
    EXPECT_EQ(vf.F[0][0], 0.0);
}

TEST(ViewFactors, ParallelPlatesMatchAnalytic) {
    TriMesh m;
    const auto lo = add_quad(m, {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0});
    const auto hi = add_quad(m, {0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 0, 1});
    const RayScene scene(m);
    const auto vf = view_factors(scene, {{lo}, {hi}}, 100000, 3);
    const double f = parallel_rectangles(1, 1, 1);
    EXPECT_NEAR(f, 0.19983, 5e-5);
    EXPECT_NEAR(vf.F[0][1], f, 3 * vf.sigma[0][1]);
    EXPECT_NEAR(vf.F[1][0], f, 3 * vf.sigma[1][0]);
}

TEST(ViewFactors, ClosedBoxRowsSumToOne) {
    auto m = lod1_mesh({"cube", {synthetic::rectangle(0, 0, 1, 1), {}}, 0, 1, 1});
    for (auto& t : m.triangles) std::swap(t[1], t[2]); // inward normals
    const RayScene scene(m);
    std::vector<std::vector<std::uint32_t>> surfaces;
    for (std::uint32_t f = 0; f < m.face_count; ++f) surfaces.push_back({f});
    const auto vf = view_factors(scene, surfaces, 20000, 9);
    for (std::size_t i = 0; i < vf.size(); ++i) {
        double sum = 0, var = 0;
        for (std::size_t j = 0; j < vf.size(); ++j) sum += vf.F[i][j], var += vf.sigma[i][j] * vf.sigma[i][j];
        EXPECT_NEAR(sum, 1.0, std::max(3 * std::sqrt(var), 1e-3));
        EXPECT_EQ(vf.F[i][i], 0.0);
    }
}

TEST(ViewFactors, Errors) {
    TriMesh m;
    const auto a = add_quad(m, {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0});
    const auto z = m.new_face();
    const auto v = m.add_vertex({5, 5, 5});
    m.add_triangle(v, v, v, FaceTag::wall, -1, z);
    const RayScene scene(m);
    EXPECT_THROW(view_factors(scene, {{a}, {a}}, 10, 1), geometry_error);
    EXPECT_THROW(view_factors(scene, {{a}, {z}}, 10, 1), geometry_error);
    EXPECT_THROW(view_factors(scene, {{a}, {77}}, 10, 1), geometry_error);
}

TEST(ViewFactorsProperty, ReciprocityRowSumsAndDeterminism) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto boxes = synthetic::random_boxes(seed, 5, 25);
        const auto m = box_mesh(boxes);
        const RayScene scene(m);
        std::vector<std::vector<std::uint32_t>> surfaces(boxes.size());
        for (const auto& f : scene.faces)
            if (f.tag != FaceTag::ground) surfaces[static_cast<std::size_t>(f.owner)].push_back(f.id);
        const auto vf = view_factors(scene, surfaces, 30000, seed, 1);
        const auto vf3 = view_factors(scene, surfaces, 30000, seed, 3);
        EXPECT_EQ(vf.F, vf3.F);
        for (std::size_t i = 0; i < vf.size(); ++i) {
            double row = 0, var = 0;
            for (std::size_t j = 0; j < vf.size(); ++j) {
                row += vf.F[i][j];
                var += vf.sigma[i][j] * vf.sigma[i][j];
                const double lhs = std::abs(vf.areas[i] * vf.F[i][j] - vf.areas[j] * vf.F[j][i]);
                EXPECT_LE(lhs, 3 * (vf.areas[i] * vf.sigma[i][j] + vf.areas[j] * vf.sigma[j][i]) + 1e-12)
                    << seed << " " << i << " " << j;
                EXPECT_GE(vf.F[i][j], 0);
                EXPECT_LE(vf.F[i][j], 1);
            }
            EXPECT_LE(row, 1 + 3 * std::sqrt(var));
        }
    }
}

TEST(CrossedStrings, Examples) {
    EXPECT_NEAR(crossed_strings_2d({{0, 0}, {1, 0}}, {{0, 1}, {1, 1}}), (2 * std::sqrt(2.0) - 2) / 2, 1e-12);
    EXPECT_NEAR(crossed_strings_2d({{0, 0}, {1, 0}}, {{0, 0}, {0, 1}}), (2 - std::sqrt(2.0)) / 2, 1e-12);
    const Segment2 wall{{-5, 0.5}, {6, 0.5}};
    EXPECT_NEAR(crossed_strings_2d({{0, 0}, {1, 0}}, {{0, 1}, {1, 1}}, std::span(&wall, 1)), 0.0, 1e-12);
}

TEST(CrossedStrings, Errors) {
    EXPECT_THROW(crossed_strings_2d({{0, 0}, {0, 0}}, {{0, 1}, {1, 1}}), geometry_error);
    EXPECT_THROW(crossed_strings_2d({{0, 0}, {2, 2}}, {{0, 2}, {2, 0}}), geometry_error);
    EXPECT_THROW(crossed_strings_2d({{0, 0}, {1, 0}}, {{0.5, 0}, {2, 0}}), geometry_error);
}

TEST(CrossedStrings, BlockedMatchesTautStrings) {
    // Blocker [(-1, .5), (.4, .5)]: only the uncrossed string from (0,0) to
    // (0,1) wraps, around (.4, .5), with length 2 * sqrt(.4^2 + .5^2).
    const Segment2 blk{{-1, 0.5}, {0.4, 0.5}};
    const double wrapped = 2 * std::sqrt(0.16 + 0.25);
    const double expected = (2 * std::sqrt(2.0) - wrapped - 1) / 2;
    EXPECT_NEAR(crossed_strings_2d({{0, 0}, {1, 0}}, {{0, 1}, {1, 1}}, std::span(&blk, 1)), expected, 1e-9);
}

TEST(CrossedStringsProperty, BlockersNeverIncrease) {
    Rng rng(21);
    for (int k = 0; k < 60; ++k) {
        const Segment2 e{{0, 0}, {1 + rng.uniform(), 0}};
        const Segment2 r{{rng.uniform() * 2 - 0.5, 1 + rng.uniform()}, {rng.uniform() * 2 - 0.5, 1.5 + rng.uniform()}};
        const Segment2 b{{rng.uniform() * 3 - 1, 0.2 + 0.6 * rng.uniform()}, {rng.uniform() * 3 - 1, 0.2 + 0.6 * rng.uniform()}};
        const double f0 = crossed_strings_2d(e, r);
        const double f1 = crossed_strings_2d(e, r, std::span(&b, 1));
        EXPECT_GE(f1, -1e-12);
        EXPECT_LE(f1, f0 + 1e-9);
    }
}

TEST(CrossedStringsProperty, ExtrudedStripsReproduce2d) {
    // 2D segments in the (x, y) plane extruded along z over 1000 m.
    const double L = 500;
    auto strip = [&](TriMesh& m, Segment2 s, bool flip) {
        const Vec3 a{s.a.x, s.a.y, -L}, b{s.b.x, s.b.y, -L}, c{s.b.x, s.b.y, L}, d{s.a.x, s.a.y, L};
        return flip ? add_quad(m, a, d, c, b) : add_quad(m, a, b, c, d);
    };
    const Segment2 e{{0, 0}, {1, 0}}, r{{0, 1}, {1, 1}}, blk{{-1, 0.5}, {0.4, 0.5}};
    for (bool blocked : {false, true}) {
        TriMesh m;
        const auto fe = strip(m, e, true);   // normal +y
        const auto fr = strip(m, r, false);  // normal -y
        if (blocked) strip(m, blk, false);
        const RayScene scene(m);
        ASSERT_GT(scene.faces[fe].normal.y, 0.99);
        const auto vf = view_factors(scene, {{fe}, {fr}}, 400000, 77);
        const double f2d = blocked ? crossed_strings_2d(e, r, std::span(&blk, 1)) : crossed_strings_2d(e, r);
        EXPECT_NEAR(vf.F[0][1], f2d, 3 * vf.sigma[0][1]) << (blocked ? "blocked" : "open");
    }
}
