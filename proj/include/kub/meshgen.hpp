#pragma once

// Building (LOD-0/LOD-1), terrain and vegetation meshes plus scene assembly.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "geo_ingest.hpp"
#include "geometry.hpp"
#include "parallel.hpp"
#include "polygon.hpp"

namespace kub {

enum class FaceTag : std::uint8_t { wall, roof, ground, terrain, tree };

inline std::string_view to_string(FaceTag t) {
    switch (t) {
    case FaceTag::wall: return "wall";
    case FaceTag::roof: return "roof";
    case FaceTag::ground: return "ground";
    case FaceTag::terrain: return "terrain";
    case FaceTag::tree: return "tree";
    }
    return "?";
}

inline constexpr double min_triangle_area = 1e-10;

/// Tagged triangle soup. Triangles are grouped into planar facets (`face`),
/// which are the units shading masks and view factors are computed on.
struct TriMesh {
    using Tri = std::array<std::uint32_t, 3>;

    std::vector<Vec3> vertices;
    std::vector<Tri> triangles;
    std::vector<FaceTag> tags;
    std::vector<std::int32_t> owner; ///< index into owner_ids, -1 for none
    std::vector<std::uint32_t> face;
    std::vector<std::string> owner_ids;
    std::uint32_t face_count = 0;

    std::size_t size() const { return triangles.size(); }

    std::uint32_t add_vertex(Vec3 v) {
        vertices.push_back(v);
        return static_cast<std::uint32_t>(vertices.size() - 1);
    }

    std::uint32_t new_face() { return face_count++; }

    void add_triangle(std::uint32_t a, std::uint32_t b, std::uint32_t c, FaceTag tag, std::int32_t own,
                      std::uint32_t f) {
        triangles.push_back({a, b, c});
        tags.push_back(tag);
        owner.push_back(own);
        face.push_back(f);
        face_count = std::max(face_count, f + 1);
    }

    /// Appends `other`, remapping vertex, owner and face indices.
    void append(const TriMesh& other) {
        const auto voff = static_cast<std::uint32_t>(vertices.size());
        const auto foff = face_count;
        std::vector<std::int32_t> owner_map(other.owner_ids.size());
        for (std::size_t i = 0; i < other.owner_ids.size(); ++i) {
            auto it = std::find(owner_ids.begin(), owner_ids.end(), other.owner_ids[i]);
            if (it == owner_ids.end()) {
                owner_ids.push_back(other.owner_ids[i]);
                it = owner_ids.end() - 1;
            }
            owner_map[i] = static_cast<std::int32_t>(it - owner_ids.begin());
        }
        vertices.insert(vertices.end(), other.vertices.begin(), other.vertices.end());
        for (std::size_t t = 0; t < other.size(); ++t) {
            const auto& tri = other.triangles[t];
            triangles.push_back({tri[0] + voff, tri[1] + voff, tri[2] + voff});
            tags.push_back(other.tags[t]);
            owner.push_back(other.owner[t] < 0 ? -1 : owner_map[static_cast<std::size_t>(other.owner[t])]);
            face.push_back(other.face[t] + foff);
        }
        face_count = foff + other.face_count;
    }

    Vec3 corner(std::size_t t, int k) const { return vertices[triangles[t][static_cast<std::size_t>(k)]]; }

    /// Unnormalized normal, length = 2 * area.
    Vec3 area_normal(std::size_t t) const {
        return cross(corner(t, 1) - corner(t, 0), corner(t, 2) - corner(t, 0));
    }
    double triangle_area(std::size_t t) const { return 0.5 * norm(area_normal(t)); }

    Box3 bbox() const {
        Box3 b;
        for (auto v : vertices) b.expand(v);
        return b;
    }
};

/// Divergence-theorem volume; positive for closed outward-oriented meshes.
inline double signed_volume(const TriMesh& m) {
    double v = 0;
    for (std::size_t t = 0; t < m.size(); ++t) v += dot(m.corner(t, 0), cross(m.corner(t, 1), m.corner(t, 2)));
    return v / 6.0;
}

inline double surface_area(const TriMesh& m) {
    double a = 0;
    for (std::size_t t = 0; t < m.size(); ++t) a += m.triangle_area(t);
    return a;
}

/// Every undirected edge is used by exactly two triangles, once in each direction.
inline bool is_watertight(const TriMesh& m) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
    for (const auto& tri : m.triangles)
        for (int k = 0; k < 3; ++k) ++directed[{tri[static_cast<std::size_t>(k)], tri[static_cast<std::size_t>((k + 1) % 3)]}];
    for (const auto& [edge, count] : directed) {
        if (count != 1) return false;
        auto rev = directed.find({edge.second, edge.first});
        if (rev == directed.end() || rev->second != 1) return false;
    }
    return true;
}

/// Per-facet summary derived from a mesh.
struct FaceInfo {
    std::uint32_t id = 0;
    FaceTag tag = FaceTag::wall;
    std::int32_t owner = -1;
    std::vector<std::uint32_t> triangles;
    Vec3 normal;   ///< area-weighted unit normal
    double area = 0;
    Vec3 centroid;
};

inline std::vector<FaceInfo> faces_of(const TriMesh& m) {
    std::vector<FaceInfo> faces(m.face_count);
    std::vector<Vec3> nsum(m.face_count);
    for (std::size_t f = 0; f < faces.size(); ++f) faces[f].id = static_cast<std::uint32_t>(f);
    for (std::size_t t = 0; t < m.size(); ++t) {
        auto& f = faces[m.face[t]];
        f.tag = m.tags[t];
        f.owner = m.owner[t];
        f.triangles.push_back(static_cast<std::uint32_t>(t));
        const double a = m.triangle_area(t);
        f.area += a;
        f.centroid = f.centroid + (a / 3.0) * (m.corner(t, 0) + m.corner(t, 1) + m.corner(t, 2));
        nsum[m.face[t]] = nsum[m.face[t]] + m.area_normal(t);
    }
    for (std::size_t f = 0; f < faces.size(); ++f) {
        if (faces[f].area > 0) faces[f].centroid = (1.0 / faces[f].area) * faces[f].centroid;
        const double len = norm(nsum[f]);
        faces[f].normal = len > 0 ? (1.0 / len) * nsum[f] : Vec3{};
    }
    return faces;
}

// ---------------------------------------------------------------------------
// Triangulation

namespace detail {

// Angle of `d` measured counter-clockwise from `from`, in [0, 2pi).
inline double ccw_angle(Vec2 from, Vec2 d) {
    double a = std::atan2(cross(from, d), dot(from, d));
    return a < 0 ? a + 2 * pi : a;
}

// `m` lies strictly inside the interior wedge at p (polygon is CCW).
inline bool in_wedge(Vec2 prev, Vec2 p, Vec2 next, Vec2 m) {
    const double wedge = ccw_angle(next - p, prev - p);
    const double a = ccw_angle(next - p, m - p);
    return a > 0 && a < wedge;
}

inline bool point_in_triangle(Vec2 a, Vec2 b, Vec2 c, Vec2 p) {
    return cross(b - a, p - a) >= 0 && cross(c - b, p - b) >= 0 && cross(a - c, p - c) >= 0;
}

inline bool segment_crosses_chain(const std::vector<Vec2>& pts, const std::vector<std::size_t>& chain, Vec2 a,
                                  Vec2 b) {
    const std::size_t n = chain.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p = pts[chain[i]], q = pts[chain[(i + 1) % n]];
        if (p == a || p == b || q == a || q == b) continue;
        if (segments_intersect(a, b, p, q)) return true;
    }
    return false;
}

// Splices `hole` into `chain` through a mutually visible bridge.
inline void bridge_hole(const std::vector<Vec2>& pts, std::vector<std::size_t>& chain,
                        const std::vector<std::size_t>& hole,
                        const std::vector<std::vector<std::size_t>>& pending) {
    std::size_t hm = 0;
    for (std::size_t k = 1; k < hole.size(); ++k)
        if (pts[hole[k]].x > pts[hole[hm]].x) hm = k;
    const Vec2 m = pts[hole[hm]];

    // Candidate chain positions: visible, wedge-compatible, nearest first.
    std::optional<std::size_t> best;
    double best_d = std::numeric_limits<double>::infinity();
    const std::size_t n = chain.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 p = pts[chain[i]];
        if (p == m) continue;
        const double d = distance(p, m);
        if (d >= best_d) continue;
        if (!in_wedge(pts[chain[(i + n - 1) % n]], p, pts[chain[(i + 1) % n]], m)) continue;
        if (segment_crosses_chain(pts, chain, p, m) || segment_crosses_chain(pts, hole, p, m)) continue;
        if (std::any_of(pending.begin(), pending.end(),
                        [&](const auto& other) { return segment_crosses_chain(pts, other, p, m); }))
            continue;
        best = i;
        best_d = d;
    }
    if (!best) throw geometry_error("triangulation failure: no visible bridge for hole");

    std::vector<std::size_t> spliced;
    spliced.reserve(n + hole.size() + 2);
    spliced.insert(spliced.end(), chain.begin(), chain.begin() + static_cast<std::ptrdiff_t>(*best) + 1);
    for (std::size_t k = 0; k <= hole.size(); ++k) spliced.push_back(hole[(hm + k) % hole.size()]);
    spliced.push_back(chain[*best]);
    spliced.insert(spliced.end(), chain.begin() + static_cast<std::ptrdiff_t>(*best) + 1, chain.end());
    chain = std::move(spliced);
}

inline std::string describe_ring(const Ring& r) {
    std::string s;
    for (auto v : r) s += "(" + fmt::general(v.x, 10) + " " + fmt::general(v.y, 10) + ")";
    return s;
}

} // namespace detail

/// Ear-clipping triangulation of a repaired polygon. Indices refer to the
/// vertex list outer ++ holes[0] ++ holes[1] ...; triangles are CCW.
inline std::vector<std::array<std::uint32_t, 3>> triangulate(const PolygonWithHoles& poly) {
    std::vector<Vec2> pts(poly.outer.begin(), poly.outer.end());
    std::vector<std::size_t> chain(pts.size());
    std::iota(chain.begin(), chain.end(), 0);

    std::vector<std::vector<std::size_t>> holes;
    for (const auto& h : poly.holes) {
        holes.emplace_back();
        for (auto v : h) {
            holes.back().push_back(pts.size());
            pts.push_back(v);
        }
    }
    std::sort(holes.begin(), holes.end(), [&](const auto& a, const auto& b) {
        auto maxx = [&](const auto& h) {
            double x = -std::numeric_limits<double>::infinity();
            for (auto i : h) x = std::max(x, pts[i].x);
            return x;
        };
        return maxx(a) > maxx(b);
    });
    try {
        for (std::size_t k = 0; k < holes.size(); ++k)
            detail::bridge_hole(pts, chain, holes[k], {holes.begin() + static_cast<std::ptrdiff_t>(k) + 1, holes.end()});
    } catch (const geometry_error& e) {
        throw geometry_error(std::string(e.what()) + " in ring " + detail::describe_ring(poly.outer));
    }

    std::vector<std::array<std::uint32_t, 3>> tris;
    tris.reserve(chain.size());
    std::vector<std::size_t> ring = chain;
    std::size_t guard = 0;
    std::size_t i = 0;
    while (ring.size() > 3) {
        const std::size_t n = ring.size();
        const std::size_t ip = (i + n - 1) % n, in = (i + 1) % n;
        const Vec2 a = pts[ring[ip]], b = pts[ring[i]], c = pts[ring[in]];
        bool ear = cross(b - a, c - b) > 1e-12;
        if (ear) {
            for (std::size_t k = 0; k < n && ear; ++k) {
                if (k == ip || k == i || k == in) continue;
                const Vec2 p = pts[ring[k]];
                if (p == a || p == b || p == c) continue;
                if (detail::point_in_triangle(a, b, c, p)) ear = false;
            }
        }
        if (ear) {
            tris.push_back({static_cast<std::uint32_t>(ring[ip]), static_cast<std::uint32_t>(ring[i]),
                            static_cast<std::uint32_t>(ring[in])});
            ring.erase(ring.begin() + static_cast<std::ptrdiff_t>(i));
            guard = 0;
            if (i >= ring.size()) i = 0;
            continue;
        }
        i = (i + 1) % n;
        if (++guard > n)
            throw geometry_error("triangulation failure: no ear found in ring " + detail::describe_ring(poly.outer));
    }
    const Vec2 a = pts[ring[0]], b = pts[ring[1]], c = pts[ring[2]];
    if (cross(b - a, c - b) > 1e-12)
        tris.push_back({static_cast<std::uint32_t>(ring[0]), static_cast<std::uint32_t>(ring[1]),
                        static_cast<std::uint32_t>(ring[2])});
    return tris;
}

// ---------------------------------------------------------------------------
// Buildings

struct BuildingModel {
    std::string id;
    PolygonWithHoles footprint;
    double base_z = 0;
    double height_m = default_building_height_m;
    int lod = 1;
};

inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
    std::sort(pts.begin(), pts.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Vec2> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

/// Minimum-area enclosing rectangle, corners CCW. One of its sides is
/// collinear with a hull edge, so only hull-edge orientations are tried.
inline std::array<Vec2, 4> oriented_bounding_rect(const Ring& ring) {
    const auto hull = convex_hull(ring);
    if (hull.size() < 3 || std::abs(signed_area(hull)) < min_triangle_area)
        throw geometry_error("degenerate footprint: no oriented bounding box");
    double best = std::numeric_limits<double>::infinity();
    std::array<Vec2, 4> rect{};
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
        const Vec2 u = (1.0 / norm(e)) * e, v{-u.y, u.x};
        double umin = std::numeric_limits<double>::infinity(), umax = -umin, vmin = umin, vmax = -umin;
        for (auto p : hull) {
            umin = std::min(umin, dot(p, u));
            umax = std::max(umax, dot(p, u));
            vmin = std::min(vmin, dot(p, v));
            vmax = std::max(vmax, dot(p, v));
        }
        const double a = (umax - umin) * (vmax - vmin);
        if (a < best) {
            best = a;
            rect = {umin * u + vmin * v, umax * u + vmin * v, umax * u + vmax * v, umin * u + vmax * v};
        }
    }
    return rect;
}

namespace detail {

// Extrudes rings (outer CCW, holes CW) with a given cap triangulation.
inline TriMesh extrude(const std::string& id, const std::vector<const Ring*>& rings,
                       const std::vector<std::array<std::uint32_t, 3>>& cap, double z0, double z1) {
    TriMesh m;
    m.owner_ids = {id};
    std::size_t total = 0;
    for (const Ring* r : rings) total += r->size();
    for (const Ring* r : rings)
        for (auto v : *r) m.add_vertex({v.x, v.y, z0});
    for (const Ring* r : rings)
        for (auto v : *r) m.add_vertex({v.x, v.y, z1});
    const auto top = static_cast<std::uint32_t>(total);

    std::uint32_t base = 0;
    for (const Ring* r : rings) {
        const auto n = static_cast<std::uint32_t>(r->size());
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint32_t a = base + i, b = base + (i + 1) % n;
            const auto f = m.new_face();
            m.add_triangle(a, b, top + b, FaceTag::wall, 0, f);
            m.add_triangle(a, top + b, top + a, FaceTag::wall, 0, f);
        }
        base += n;
    }
    const auto roof = m.new_face();
    for (const auto& t : cap) m.add_triangle(top + t[0], top + t[1], top + t[2], FaceTag::roof, 0, roof);
    const auto ground = m.new_face();
    for (const auto& t : cap) m.add_triangle(t[0], t[2], t[1], FaceTag::ground, 0, ground);
    return m;
}

} // namespace detail

/// LOD-0: minimum-area oriented bounding box of the outer ring, extruded.
inline TriMesh lod0_mesh(const BuildingModel& b) {
    if (!(b.height_m > 0)) throw geometry_error("building " + b.id + ": height must be positive");
    const auto rect = oriented_bounding_rect(b.footprint.outer);
    const Ring ring(rect.begin(), rect.end());
    return detail::extrude(b.id, {&ring}, {{{0, 1, 2}}, {{0, 2, 3}}}, b.base_z, b.base_z + b.height_m);
}

/// LOD-1: footprint (with holes) extruded from base_z to base_z + height.
inline TriMesh lod1_mesh(const BuildingModel& b) {
    if (!(b.height_m > 0)) throw geometry_error("building " + b.id + ": height must be positive");
    const auto cap = triangulate(b.footprint);
    std::vector<const Ring*> rings{&b.footprint.outer};
    for (const auto& h : b.footprint.holes) rings.push_back(&h);
    return detail::extrude(b.id, rings, cap, b.base_z, b.base_z + b.height_m);
}

inline TriMesh building_mesh(const BuildingModel& b) { return b.lod == 0 ? lod0_mesh(b) : lod1_mesh(b); }

// ---------------------------------------------------------------------------
// Terrain

/// Uniform lattice over the grid nodes inside `region`, two triangles per
/// cell, one facet per cell. Nodata nodes take the mean of valid neighbours.
inline TriMesh terrain_mesh(const ElevationGrid& grid, const Box2& region) {
    int c0 = grid.ncols, c1 = -1, r0 = grid.nrows, r1 = -1;
    for (int c = 0; c < grid.ncols; ++c)
        if (grid.node_x(c) >= region.min_x - 1e-9 && grid.node_x(c) <= region.max_x + 1e-9)
            c0 = std::min(c0, c), c1 = std::max(c1, c);
    for (int r = 0; r < grid.nrows; ++r)
        if (grid.node_y(r) >= region.min_y - 1e-9 && grid.node_y(r) <= region.max_y + 1e-9)
            r0 = std::min(r0, r), r1 = std::max(r1, r);
    if (c1 - c0 < 1 || r1 - r0 < 1) throw geometry_error("terrain region covers fewer than 2x2 grid nodes");

    const int nc = c1 - c0 + 1, nr = r1 - r0 + 1;
    std::vector<std::optional<double>> z(static_cast<std::size_t>(nc * nr));
    auto at = [&](int rr, int cc) -> std::optional<double>& { return z[static_cast<std::size_t>(rr * nc + cc)]; };
    std::size_t valid = 0;
    for (int rr = 0; rr < nr; ++rr)
        for (int cc = 0; cc < nc; ++cc) {
            const int r = r0 + rr, c = c0 + cc;
            if (!grid.is_nodata(r, c)) {
                at(rr, cc) = sample_elevation(grid, grid.node_x(c), grid.node_y(r));
                ++valid;
            }
        }
    if (valid == 0) throw geometry_error("terrain region contains only nodata cells");
    while (valid < z.size()) {
        auto next = z;
        for (int rr = 0; rr < nr; ++rr)
            for (int cc = 0; cc < nc; ++cc) {
                if (at(rr, cc)) continue;
                double s = 0;
                int k = 0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int a = rr + dr, b = cc + dc;
                        if (a < 0 || b < 0 || a >= nr || b >= nc || !at(a, b)) continue;
                        s += *at(a, b);
                        ++k;
                    }
                if (k) {
                    next[static_cast<std::size_t>(rr * nc + cc)] = s / k;
                    ++valid;
                }
            }
        z = std::move(next);
    }

    TriMesh m;
    // Vertex (i, j): i eastwards, j northwards.
    for (int j = 0; j < nr; ++j)
        for (int i = 0; i < nc; ++i) {
            const int r = r1 - j, c = c0 + i;
            m.add_vertex({grid.node_x(c), grid.node_y(r), *at(r - r0, i)});
        }
    auto vid = [nc](int i, int j) { return static_cast<std::uint32_t>(j * nc + i); };
    for (int j = 0; j + 1 < nr; ++j)
        for (int i = 0; i + 1 < nc; ++i) {
            const auto f = m.new_face();
            m.add_triangle(vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), FaceTag::terrain, -1, f);
            m.add_triangle(vid(i, j), vid(i + 1, j + 1), vid(i, j + 1), FaceTag::terrain, -1, f);
        }
    return m;
}

/// Plan-view point location on the terrain triangles of a mesh.
class TerrainSampler {
public:
    explicit TerrainSampler(const TriMesh& mesh) : mesh_(mesh) {
        for (std::size_t t = 0; t < mesh.size(); ++t) {
            if (mesh.tags[t] != FaceTag::terrain) continue;
            tris_.push_back(static_cast<std::uint32_t>(t));
            for (int k = 0; k < 3; ++k) box_.expand({mesh.corner(t, k).x, mesh.corner(t, k).y});
        }
        if (tris_.empty()) throw geometry_error("terrain mesh has no terrain triangles");
        const double w = box_.max_x - box_.min_x, h = box_.max_y - box_.min_y;
        const double cells = std::max<double>(1, std::sqrt(static_cast<double>(tris_.size())));
        nx_ = std::max(1, static_cast<int>(cells * w / std::max(w, h)));
        ny_ = std::max(1, static_cast<int>(cells * h / std::max(w, h)));
        buckets_.resize(static_cast<std::size_t>(nx_ * ny_));
        for (auto t : tris_) {
            Box2 b;
            for (int k = 0; k < 3; ++k) b.expand({mesh.corner(t, k).x, mesh.corner(t, k).y});
            for (int iy = cell_y(b.min_y); iy <= cell_y(b.max_y); ++iy)
                for (int ix = cell_x(b.min_x); ix <= cell_x(b.max_x); ++ix)
                    buckets_[static_cast<std::size_t>(iy * nx_ + ix)].push_back(t);
        }
    }

    std::optional<double> elevation(Vec2 p) const {
        constexpr double tol = 1e-9;
        if (!box_.contains(p, tol)) return std::nullopt;
        for (auto t : buckets_[static_cast<std::size_t>(cell_y(p.y) * nx_ + cell_x(p.x))]) {
            const Vec3 a = mesh_.corner(t, 0), b = mesh_.corner(t, 1), c = mesh_.corner(t, 2);
            const double d = (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y);
            if (std::abs(d) < 1e-14) continue;
            const double l1 = ((p.x - a.x) * (c.y - a.y) - (c.x - a.x) * (p.y - a.y)) / d;
            const double l2 = ((b.x - a.x) * (p.y - a.y) - (p.x - a.x) * (b.y - a.y)) / d;
            const double l0 = 1 - l1 - l2;
            if (l0 >= -tol && l1 >= -tol && l2 >= -tol) return l0 * a.z + l1 * b.z + l2 * c.z;
        }
        return std::nullopt;
    }

private:
    int cell_x(double x) const {
        const double w = box_.max_x - box_.min_x;
        return std::clamp(static_cast<int>(w > 0 ? (x - box_.min_x) / w * nx_ : 0), 0, nx_ - 1);
    }
    int cell_y(double y) const {
        const double h = box_.max_y - box_.min_y;
        return std::clamp(static_cast<int>(h > 0 ? (y - box_.min_y) / h * ny_ : 0), 0, ny_ - 1);
    }

    const TriMesh& mesh_;
    std::vector<std::uint32_t> tris_;
    Box2 box_;
    int nx_ = 1, ny_ = 1;
    std::vector<std::vector<std::uint32_t>> buckets_;
};

/// Ground samples used for slope embedding: all ring vertices plus a 1 m
/// lattice over the footprint interior.
inline std::vector<Vec2> embedding_samples(const PolygonWithHoles& fp, double spacing = 1.0) {
    std::vector<Vec2> pts(fp.outer.begin(), fp.outer.end());
    for (const auto& h : fp.holes) pts.insert(pts.end(), h.begin(), h.end());
    const Box2 b = bounds(fp.outer);
    for (double y = std::ceil(b.min_y / spacing) * spacing; y <= b.max_y; y += spacing)
        for (double x = std::ceil(b.min_x / spacing) * spacing; x <= b.max_x; x += spacing)
            if (contains_point(fp, {x, y})) pts.push_back({x, y});
    return pts;
}

/// Sets base_z to the lowest sampled ground point and raises the height by
/// the ground relief so the roof keeps its height above the highest point.
inline std::vector<BuildingModel> embed_buildings(const TriMesh& terrain, std::vector<BuildingModel> buildings) {
    const TerrainSampler sampler(terrain);
    std::vector<std::string> outside;
    for (auto& b : buildings) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        bool ok = true;
        for (auto p : embedding_samples(b.footprint)) {
            const auto z = sampler.elevation(p);
            if (!z) {
                ok = false;
                break;
            }
            lo = std::min(lo, *z);
            hi = std::max(hi, *z);
        }
        if (!ok) {
            outside.push_back(b.id);
            continue;
        }
        b.base_z = lo;
        b.height_m += hi - lo;
    }
    if (!outside.empty()) {
        std::string ids;
        for (const auto& id : outside) ids += (ids.empty() ? "" : ", ") + id;
        throw geometry_error("footprint outside terrain for building(s): " + ids);
    }
    return buildings;
}

// ---------------------------------------------------------------------------
// Vegetation

enum class TreeSpecies { conifer, broadleaf };

/// Unit-height reference tree standing on the origin.
struct TreeTemplate {
    TreeSpecies species = TreeSpecies::conifer;
    TriMesh mesh;
};

namespace detail {

inline void add_cylinder(TriMesh& m, double r, double z0, double z1, int seg, std::uint32_t face) {
    const auto base = static_cast<std::uint32_t>(m.vertices.size());
    for (int s = 0; s < seg; ++s) {
        const double a = 2 * pi * s / seg;
        m.add_vertex({r * std::cos(a), r * std::sin(a), z0});
        m.add_vertex({r * std::cos(a), r * std::sin(a), z1});
    }
    const auto useg = static_cast<std::uint32_t>(seg);
    for (std::uint32_t s = 0; s < useg; ++s) {
        const auto b0 = base + 2 * s, t0 = b0 + 1, b1 = base + 2 * ((s + 1) % useg), t1 = b1 + 1;
        m.add_triangle(b0, b1, t1, FaceTag::tree, -1, face);
        m.add_triangle(b0, t1, t0, FaceTag::tree, -1, face);
    }
    for (std::uint32_t s = 1; s + 1 < useg; ++s) {
        m.add_triangle(base, base + 2 * (s + 1), base + 2 * s, FaceTag::tree, -1, face);
        m.add_triangle(base + 1, base + 2 * s + 1, base + 2 * (s + 1) + 1, FaceTag::tree, -1, face);
    }
}

inline void add_cone(TriMesh& m, double r, double z0, double z1, int seg, std::uint32_t face) {
    const auto base = static_cast<std::uint32_t>(m.vertices.size());
    for (int s = 0; s < seg; ++s) {
        const double a = 2 * pi * s / seg;
        m.add_vertex({r * std::cos(a), r * std::sin(a), z0});
    }
    const auto apex = m.add_vertex({0, 0, z1});
    const auto useg = static_cast<std::uint32_t>(seg);
    for (std::uint32_t s = 0; s < useg; ++s) m.add_triangle(base + s, base + (s + 1) % useg, apex, FaceTag::tree, -1, face);
    for (std::uint32_t s = 1; s + 1 < useg; ++s) m.add_triangle(base, base + s + 1, base + s, FaceTag::tree, -1, face);
}

inline void add_ellipsoid(TriMesh& m, Vec3 c, Vec3 radii, int seg, int stacks, std::uint32_t face) {
    const auto bottom = m.add_vertex({c.x, c.y, c.z - radii.z});
    const auto first = static_cast<std::uint32_t>(m.vertices.size());
    for (int k = 1; k < stacks; ++k) {
        const double phi = -pi / 2 + pi * k / stacks;
        for (int s = 0; s < seg; ++s) {
            const double a = 2 * pi * s / seg;
            m.add_vertex({c.x + radii.x * std::cos(phi) * std::cos(a), c.y + radii.y * std::cos(phi) * std::sin(a),
                          c.z + radii.z * std::sin(phi)});
        }
    }
    const auto top = m.add_vertex({c.x, c.y, c.z + radii.z});
    const auto useg = static_cast<std::uint32_t>(seg);
    auto v = [&](int ring, std::uint32_t s) { return first + static_cast<std::uint32_t>(ring) * useg + s % useg; };
    for (std::uint32_t s = 0; s < useg; ++s) m.add_triangle(bottom, v(0, s + 1), v(0, s), FaceTag::tree, -1, face);
    for (int k = 0; k + 2 < stacks; ++k)
        for (std::uint32_t s = 0; s < useg; ++s) {
            m.add_triangle(v(k, s), v(k, s + 1), v(k + 1, s + 1), FaceTag::tree, -1, face);
            m.add_triangle(v(k, s), v(k + 1, s + 1), v(k + 1, s), FaceTag::tree, -1, face);
        }
    for (std::uint32_t s = 0; s < useg; ++s) m.add_triangle(v(stacks - 2, s), v(stacks - 2, s + 1), top, FaceTag::tree, -1, face);
}

} // namespace detail

/// Conifer: hexagonal trunk under a cone crown reaching z = 1.
inline TreeTemplate conifer_template() {
    TreeTemplate t{TreeSpecies::conifer, {}};
    detail::add_cylinder(t.mesh, 0.04, 0.0, 0.25, 6, t.mesh.new_face());
    detail::add_cone(t.mesh, 0.3, 0.25, 1.0, 6, t.mesh.new_face());
    return t;
}

/// Broadleaf: trunk under an ellipsoid crown reaching z = 1.
inline TreeTemplate broadleaf_template() {
    TreeTemplate t{TreeSpecies::broadleaf, {}};
    detail::add_cylinder(t.mesh, 0.05, 0.0, 0.35, 6, t.mesh.new_face());
    detail::add_ellipsoid(t.mesh, {0, 0, 0.675}, {0.3, 0.3, 0.325}, 6, 4, t.mesh.new_face());
    return t;
}

/// Reference tree scaled uniformly by `height_m` and moved to `position`.
inline TriMesh tree_mesh(Vec3 position, double height_m, const TreeTemplate& tmpl) {
    if (!(height_m > 0)) throw geometry_error("tree height must be positive");
    TriMesh m = tmpl.mesh;
    for (auto& v : m.vertices) v = position + height_m * v;
    return m;
}

// ---------------------------------------------------------------------------
// Scene

struct TreeInstance {
    Vec3 position;
    double height_m = 10;
    TreeSpecies species = TreeSpecies::broadleaf;
};

struct TileContent {
    TileIndex tile;
    std::vector<BuildingModel> buildings;
    std::optional<TriMesh> terrain;
    std::vector<TreeInstance> trees;
};

struct SceneOptions {
    bool union_touching = true;
    int lod = 1;
    unsigned threads = 1;
};

struct BuildingRange {
    std::string id;
    std::size_t first = 0, count = 0; ///< contiguous triangle range in Scene::mesh
};

struct Scene {
    TriMesh mesh;
    std::vector<BuildingModel> buildings;
    std::vector<BuildingRange> index; ///< same order as `buildings`
    Box3 bbox;

    const BuildingRange* find(std::string_view id) const {
        for (const auto& r : index)
            if (r.id == id) return &r;
        return nullptr;
    }
};

namespace detail {

inline bool same_building(const BuildingModel& a, const BuildingModel& b) {
    return a.footprint == b.footprint && std::abs(a.height_m - b.height_m) < 1e-9 &&
           std::abs(a.base_z - b.base_z) < 1e-9;
}

} // namespace detail

/// Deduplicates buildings repeated across tiles, unions touching footprints
/// (merged id = member ids joined by '+', tallest height, lowest base) and
/// merges everything into one mesh. Buildings come first, sorted by id.
inline Scene build_scene(const std::vector<TileContent>& tiles, const SceneOptions& opt = {}) {
    std::map<std::string, BuildingModel> by_id;
    for (const auto& tile : tiles)
        for (const auto& b : tile.buildings) {
            auto [it, inserted] = by_id.emplace(b.id, b);
            if (!inserted && !detail::same_building(it->second, b))
                throw geometry_error("conflicting geometry for duplicate building id " + b.id);
        }
    std::vector<BuildingModel> unique;
    for (auto& [id, b] : by_id) unique.push_back(b);

    std::vector<BuildingModel> models;
    if (opt.union_touching) {
        std::vector<PolygonWithHoles> fps;
        for (const auto& b : unique) fps.push_back(b.footprint);
        for (const auto& g : touching_groups(fps)) {
            if (g.size() == 1) {
                models.push_back(unique[g[0]]);
                continue;
            }
            std::vector<PolygonWithHoles> members;
            for (auto k : g) members.push_back(unique[k].footprint);
            auto merged = union_touching(members);
            if (merged.size() != 1) {
                for (auto k : g) models.push_back(unique[k]);
                continue;
            }
            BuildingModel m = unique[g[0]];
            m.footprint = std::move(merged[0]);
            for (std::size_t k = 1; k < g.size(); ++k) {
                const auto& o = unique[g[k]];
                m.id += "+" + o.id;
                m.height_m = std::max(m.height_m + m.base_z, o.height_m + o.base_z);
                m.base_z = std::min(m.base_z, o.base_z);
                m.height_m -= m.base_z;
            }
            models.push_back(std::move(m));
        }
    } else {
        models = std::move(unique);
    }
    std::sort(models.begin(), models.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    for (auto& m : models) m.lod = opt.lod;

    std::vector<TriMesh> meshes(models.size());
    parallel_for(models.size(), opt.threads, [&](std::size_t i) { meshes[i] = building_mesh(models[i]); });

    Scene scene;
    for (std::size_t i = 0; i < models.size(); ++i) {
        scene.index.push_back({models[i].id, scene.mesh.size(), meshes[i].size()});
        scene.mesh.append(meshes[i]);
    }
    scene.buildings = std::move(models);
    const auto conifer = conifer_template();
    const auto broadleaf = broadleaf_template();
    for (const auto& tile : tiles) {
        if (tile.terrain) scene.mesh.append(*tile.terrain);
        for (const auto& t : tile.trees)
            scene.mesh.append(tree_mesh(t.position, t.height_m, t.species == TreeSpecies::conifer ? conifer : broadleaf));
    }
    scene.bbox = scene.mesh.bbox();
    return scene;
}

/// ASCII OBJ: `o building-<id>` per building (`o environment` for unowned
/// triangles), `usemtl <tag>` whenever the tag changes, 9 significant digits.
inline std::string write_obj(const Scene& scene) {
    const auto& m = scene.mesh;
    std::string out;
    out.reserve(m.vertices.size() * 40 + m.size() * 24);
    for (auto v : m.vertices)
        out += "v " + fmt::general(v.x, 9) + " " + fmt::general(v.y, 9) + " " + fmt::general(v.z, 9) + "\n";
    auto emit = [&](std::size_t first, std::size_t count) {
        std::optional<FaceTag> current;
        for (std::size_t t = first; t < first + count; ++t) {
            if (!current || *current != m.tags[t]) {
                current = m.tags[t];
                out += "usemtl ";
                out += to_string(*current);
                out += "\n";
            }
            const auto& tri = m.triangles[t];
            out += "f " + std::to_string(tri[0] + 1) + " " + std::to_string(tri[1] + 1) + " " +
                   std::to_string(tri[2] + 1) + "\n";
        }
    };
    std::size_t owned = 0;
    for (const auto& r : scene.index) {
        out += "o building-" + r.id + "\n";
        emit(r.first, r.count);
        owned += r.count;
    }
    if (owned < m.size()) {
        out += "o environment\n";
        emit(owned, m.size() - owned);
    }
    return out;
}

} // namespace kub
