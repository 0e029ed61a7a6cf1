#pragma once

// Footprint hygiene and boolean union in local meters.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>

#include "error.hpp"
#include "format.hpp"
#include "geometry.hpp"

namespace kub {

/// Vertices are snapped to this grid (meters); it is also the collinearity
/// tolerance and, through snapping, the "touch" tolerance.
inline constexpr double snap_tolerance_m = 1e-3;

using Ring = std::vector<Vec2>; // implicitly closed

struct PolygonWithHoles {
    Ring outer;              ///< counter-clockwise
    std::vector<Ring> holes; ///< clockwise

    friend bool operator==(const PolygonWithHoles&, const PolygonWithHoles&) = default;
};

/// Shoelace formula; positive iff counter-clockwise.
inline double signed_area(const Ring& ring) {
    const std::size_t n = ring.size();
    double twice = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a = ring[i], b = ring[(i + 1) % n];
        twice += a.x * b.y - b.x * a.y;
    }
    return 0.5 * twice;
}

/// Enclosed area: outer minus holes.
inline double area(const PolygonWithHoles& p) {
    double a = std::abs(signed_area(p.outer));
    for (const auto& h : p.holes) a -= std::abs(signed_area(h));
    return a;
}

/// Area centroid; holes are subtracted through their opposite orientation.
inline Vec2 centroid(const PolygonWithHoles& p) {
    double a2 = 0, cx = 0, cy = 0;
    auto accumulate = [&](const Ring& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            const Vec2 u = r[i], v = r[(i + 1) % r.size()];
            const double c = u.x * v.y - v.x * u.y;
            a2 += c;
            cx += (u.x + v.x) * c;
            cy += (u.y + v.y) * c;
        }
    };
    accumulate(p.outer);
    for (const auto& h : p.holes) accumulate(h);
    if (a2 == 0) throw geometry_error("centroid of a zero-area polygon");
    return {cx / (3 * a2), cy / (3 * a2)};
}

inline Box2 bounds(const Ring& ring) {
    Box2 b;
    for (auto v : ring) b.expand(v);
    return b;
}

namespace detail {

inline double snap(double v) { return std::round(v / snap_tolerance_m) * snap_tolerance_m; }

inline int orientation(Vec2 a, Vec2 b, Vec2 c) {
    const double o = cross(b - a, c - a);
    return (o > 0) - (o < 0);
}

inline bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
    return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
           p.y <= std::max(a.y, b.y);
}

/// Closed segments share at least one point.
inline bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
    const int o1 = orientation(p1, p2, q1), o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1), o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && on_segment(p1, p2, q1)) return true;
    if (o2 == 0 && on_segment(p1, p2, q2)) return true;
    if (o3 == 0 && on_segment(q1, q2, p1)) return true;
    if (o4 == 0 && on_segment(q1, q2, p2)) return true;
    return false;
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const Vec2 ab = b - a;
    const double len2 = dot(ab, ab);
    if (len2 == 0) return distance(p, a);
    const double t = std::clamp(dot(p - a, ab) / len2, 0.0, 1.0);
    return distance(p, a + t * ab);
}

/// Even-odd test; points on the boundary count as inside.
inline bool point_in_ring(const Ring& ring, Vec2 p) {
    bool inside = false;
    const std::size_t n = ring.size();
    for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2 a = ring[i], b = ring[j];
        if (orientation(a, b, p) == 0 && on_segment(a, b, p)) return true;
        if ((a.y > p.y) != (b.y > p.y)) {
            const double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

inline bool rings_touch_or_cross(const Ring& a, const Ring& b) {
    if (!bounds(a).overlaps(bounds(b))) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            if (segments_intersect(a[i], a[(i + 1) % a.size()], b[j], b[(j + 1) % b.size()])) return true;
    return false;
}

inline bool self_intersects(const Ring& r) {
    const std::size_t n = r.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 a1 = r[i], a2 = r[(i + 1) % n];
        for (std::size_t j = i + 1; j < n; ++j) {
            const Vec2 b1 = r[j], b2 = r[(j + 1) % n];
            const bool adjacent = j == i + 1 || (i == 0 && j == n - 1);
            if (adjacent) {
                // Neighbouring edges may only share their common vertex.
                const Vec2 shared = j == i + 1 ? a2 : a1;
                const Vec2 other_a = j == i + 1 ? a1 : a2;
                const Vec2 other_b = j == i + 1 ? b2 : b1;
                if (orientation(other_a, shared, other_b) == 0 &&
                    dot(other_a - shared, other_b - shared) > 0)
                    return true;
                continue;
            }
            if (segments_intersect(a1, a2, b1, b2)) return true;
        }
    }
    return false;
}

inline Ring clean_ring(const Ring& raw, const char* which) {
    Ring r;
    r.reserve(raw.size());
    for (auto v : raw) {
        Vec2 s{snap(v.x), snap(v.y)};
        if (r.empty() || !(r.back() == s)) r.push_back(s);
    }
    while (r.size() > 1 && r.front() == r.back()) r.pop_back();

    bool changed = true;
    while (changed && r.size() >= 3) {
        changed = false;
        for (std::size_t i = 0; i < r.size() && r.size() >= 3; ++i) {
            const std::size_t n = r.size();
            const Vec2 prev = r[(i + n - 1) % n], cur = r[i], next = r[(i + 1) % n];
            const Vec2 chord = next - prev;
            const double len = norm(chord);
            const double off = len == 0 ? distance(cur, prev) : std::abs(cross(chord, cur - prev)) / len;
            // Straight-through vertices and spikes both collapse here.
            if (off < snap_tolerance_m || cur == prev || cur == next) {
                r.erase(r.begin() + static_cast<std::ptrdiff_t>(i));
                changed = true;
                --i;
            }
        }
    }
    if (r.size() < 3)
        throw geometry_error(std::string("degenerate ring: ") + which + " has fewer than 3 vertices after cleanup");
    return r;
}

} // namespace detail

/// Snaps to the 1 mm grid, removes duplicate and collinear vertices and
/// orients the outer ring CCW and holes CW. The first ring is the outer one.
inline PolygonWithHoles repair(const std::vector<Ring>& raw) {
    if (raw.empty()) throw geometry_error("degenerate ring: polygon has no rings");
    PolygonWithHoles out;
    out.outer = detail::clean_ring(raw[0], "outer ring");
    if (detail::self_intersects(out.outer)) throw geometry_error("unrepairable polygon: outer ring self-intersects");
    if (signed_area(out.outer) < 0) std::reverse(out.outer.begin(), out.outer.end());

    for (std::size_t h = 1; h < raw.size(); ++h) {
        Ring hole = detail::clean_ring(raw[h], "hole");
        if (detail::self_intersects(hole)) throw geometry_error("unrepairable polygon: hole self-intersects");
        if (signed_area(hole) > 0) std::reverse(hole.begin(), hole.end());
        if (detail::rings_touch_or_cross(out.outer, hole) || !detail::point_in_ring(out.outer, hole[0]))
            throw geometry_error("unrepairable polygon: hole not strictly inside outer ring");
        for (const auto& other : out.holes)
            if (detail::rings_touch_or_cross(other, hole) || detail::point_in_ring(other, hole[0]) ||
                detail::point_in_ring(hole, other[0]))
                throw geometry_error("unrepairable polygon: holes overlap");
        out.holes.push_back(std::move(hole));
    }
    return out;
}

inline PolygonWithHoles repair(const PolygonWithHoles& p) {
    std::vector<Ring> rings{p.outer};
    rings.insert(rings.end(), p.holes.begin(), p.holes.end());
    return repair(rings);
}

inline bool contains_point(const PolygonWithHoles& p, Vec2 q) {
    if (!detail::point_in_ring(p.outer, q)) return false;
    for (const auto& h : p.holes) {
        if (!detail::point_in_ring(h, q)) continue;
        // On the hole boundary still belongs to the closed region.
        for (std::size_t i = 0; i < h.size(); ++i)
            if (detail::orientation(h[i], h[(i + 1) % h.size()], q) == 0 &&
                detail::on_segment(h[i], h[(i + 1) % h.size()], q))
                return true;
        return false;
    }
    return true;
}

/// True iff the closed regions share a point; edge contact counts.
inline bool intersects(const PolygonWithHoles& a, const PolygonWithHoles& b) {
    if (!bounds(a.outer).overlaps(bounds(b.outer))) return false;
    auto rings = [](const PolygonWithHoles& p) {
        std::vector<const Ring*> r{&p.outer};
        for (const auto& h : p.holes) r.push_back(&h);
        return r;
    };
    for (const Ring* ra : rings(a))
        for (const Ring* rb : rings(b))
            if (detail::rings_touch_or_cross(*ra, *rb)) return true;
    // No boundary contact: either nested or disjoint.
    return contains_point(a, b.outer[0]) || contains_point(b, a.outer[0]);
}

namespace detail {

namespace bg = boost::geometry;
using bg_point = bg::model::d2::point_xy<double>;
using bg_polygon = bg::model::polygon<bg_point, /*clockwise=*/false, /*closed=*/true>;
using bg_multi = bg::model::multi_polygon<bg_polygon>;

inline bg_polygon to_bg(const PolygonWithHoles& p) {
    bg_polygon out;
    for (auto v : p.outer) out.outer().emplace_back(v.x, v.y);
    out.outer().emplace_back(p.outer[0].x, p.outer[0].y);
    for (const auto& h : p.holes) {
        out.inners().emplace_back();
        for (auto v : h) out.inners().back().emplace_back(v.x, v.y);
        out.inners().back().emplace_back(h[0].x, h[0].y);
    }
    return out;
}

inline Ring from_bg_ring(const auto& ring) {
    Ring r;
    for (const auto& pt : ring) r.push_back({pt.x(), pt.y()});
    if (r.size() > 1 && r.front() == r.back()) r.pop_back();
    return r;
}

/// Snapped points where the boundary of `m` touches itself: a vertex used
/// twice, or a vertex lying on another edge.
inline std::vector<Vec2> pinch_points(const bg_multi& m) {
    std::vector<Ring> rings;
    for (const auto& part : m) {
        rings.push_back(from_bg_ring(part.outer()));
        for (const auto& inner : part.inners()) rings.push_back(from_bg_ring(inner));
    }
    std::map<std::pair<long long, long long>, int> uses;
    auto key = [](Vec2 v) {
        return std::pair{std::llround(v.x / snap_tolerance_m), std::llround(v.y / snap_tolerance_m)};
    };
    for (const auto& r : rings)
        for (auto v : r) ++uses[key(v)];
    std::set<std::pair<long long, long long>> pins;
    for (const auto& [k, n] : uses)
        if (n > 1) pins.insert(k);
    for (std::size_t a = 0; a < rings.size(); ++a)
        for (auto v : rings[a])
            for (std::size_t b = 0; b < rings.size(); ++b)
                for (std::size_t i = 0; i < rings[b].size(); ++i) {
                    const Vec2 p = rings[b][i], q = rings[b][(i + 1) % rings[b].size()];
                    if (key(p) == key(v) || key(q) == key(v)) continue;
                    if (point_segment_distance(v, p, q) < 0.5 * snap_tolerance_m) pins.insert(key(v));
                }
    std::vector<Vec2> out;
    for (const auto& [x, y] : pins)
        out.push_back({static_cast<double>(x) * snap_tolerance_m, static_cast<double>(y) * snap_tolerance_m});
    return out;
}

} // namespace detail

/// Connected components of the "closed regions intersect" relation, each
/// sorted ascending, ordered by their smallest member.
inline std::vector<std::vector<std::size_t>> touching_groups(const std::vector<PolygonWithHoles>& polys) {
    const std::size_t n = polys.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };

    // Sweep in x so only bbox-overlapping pairs are tested.
    std::vector<Box2> boxes(n);
    for (std::size_t i = 0; i < n; ++i) boxes[i] = bounds(polys[i].outer);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return boxes[a].min_x < boxes[b].min_x; });
    for (std::size_t oi = 0; oi < n; ++oi) {
        const auto i = order[oi];
        for (std::size_t oj = oi + 1; oj < n && boxes[order[oj]].min_x <= boxes[i].max_x; ++oj) {
            const auto j = order[oj];
            if (find(i) == find(j) || !boxes[i].overlaps(boxes[j])) continue;
            if (intersects(polys[i], polys[j])) parent[find(i)] = find(j);
        }
    }

    std::vector<std::vector<std::size_t>> groups;
    std::vector<std::ptrdiff_t> group_of(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        auto root = find(i);
        if (group_of[root] < 0) {
            group_of[root] = static_cast<std::ptrdiff_t>(groups.size());
            groups.emplace_back();
        }
        groups[static_cast<std::size_t>(group_of[root])].push_back(i);
    }
    return groups;
}

/// Merges polygons whose closed regions intersect (transitively). Disjoint
/// inputs pass through unchanged; merged outputs are re-repaired. Output is
/// ordered by the smallest input index of each group.
inline std::vector<PolygonWithHoles> union_touching(const std::vector<PolygonWithHoles>& polys) {
    const auto groups = touching_groups(polys);
    std::vector<PolygonWithHoles> out;
    for (const auto& g : groups) {
        if (g.size() == 1) {
            out.push_back(polys[g[0]]);
            continue;
        }
        detail::bg_multi acc;
        acc.push_back(detail::to_bg(polys[g[0]]));
        for (std::size_t k = 1; k < g.size(); ++k) {
            detail::bg_multi next;
            boost::geometry::union_(acc, detail::to_bg(polys[g[k]]), next);
            acc = std::move(next);
        }
        // Vertex-only contact leaves the union pinched; a snap-sized square
        // at each pinch point joins the parts into one simple polygon.
        for (int attempt = 0; attempt < 4; ++attempt) {
            const auto pins = detail::pinch_points(acc);
            if (pins.empty()) break;
            for (auto p : pins) {
                const double h = 2 * snap_tolerance_m; // survives the collinear cleanup in repair
                detail::bg_multi next;
                boost::geometry::union_(
                    acc, detail::to_bg({{{p.x - h, p.y - h}, {p.x + h, p.y - h}, {p.x + h, p.y + h}, {p.x - h, p.y + h}}, {}}),
                    next);
                acc = std::move(next);
            }
        }
        std::vector<PolygonWithHoles> merged;
        for (const auto& part : acc) {
            std::vector<Ring> rings{detail::from_bg_ring(part.outer())};
            for (const auto& inner : part.inners()) rings.push_back(detail::from_bg_ring(inner));
            merged.push_back(repair(rings));
        }
        out.insert(out.end(), merged.begin(), merged.end());
    }
    return out;
}

} // namespace kub
