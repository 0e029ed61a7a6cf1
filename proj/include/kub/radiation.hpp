#pragma once

// BVH ray tracing, Monte Carlo shading masks and view factors, and the exact
// 2D view factor between segments.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "geometry.hpp"
#include "meshgen.hpp"
#include "parallel.hpp"
#include "polygon.hpp"
#include "rng.hpp"
#include "solar.hpp"

namespace kub {

inline constexpr double default_t_min = 1e-4;

struct RayHit {
    double t = 0;
    std::uint32_t triangle = 0;
};

struct TraceStats {
    std::size_t triangle_tests = 0;
    std::size_t node_visits = 0;
};

/// Möller-Trumbore in double precision. Hits with t <= t_min are rejected.
inline std::optional<double> intersect_triangle(Vec3 origin, Vec3 dir, Vec3 v0, Vec3 e1, Vec3 e2, double t_min) {
    const Vec3 p = cross(dir, e2);
    const double det = dot(e1, p);
    if (det == 0) return std::nullopt;
    const double inv = 1.0 / det;
    const Vec3 s = origin - v0;
    const double u = dot(s, p) * inv;
    if (u < 0 || u > 1) return std::nullopt;
    const Vec3 q = cross(s, e1);
    const double v = dot(dir, q) * inv;
    if (v < 0 || u + v > 1) return std::nullopt;
    const double t = dot(e2, q) * inv;
    if (!(t > t_min)) return std::nullopt;
    return t;
}

/// Median-split bounding volume hierarchy, immutable after construction.
class Bvh {
public:
    static constexpr std::size_t max_leaf = 4;

    struct Node {
        Box3 box;
        std::uint32_t first = 0; ///< child index (inner) or first slot in order (leaf)
        std::uint32_t count = 0; ///< 0 for inner nodes
    };

    Bvh() = default;

    explicit Bvh(const TriMesh& mesh) {
        const std::size_t n = mesh.size();
        v0_.resize(n);
        e1_.resize(n);
        e2_.resize(n);
        std::vector<Box3> boxes(n);
        std::vector<Vec3> centroids(n);
        for (std::size_t t = 0; t < n; ++t) {
            v0_[t] = mesh.corner(t, 0);
            e1_[t] = mesh.corner(t, 1) - v0_[t];
            e2_[t] = mesh.corner(t, 2) - v0_[t];
            for (int k = 0; k < 3; ++k) boxes[t].expand(mesh.corner(t, k));
            centroids[t] = boxes[t].center();
        }
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0u);
        if (n == 0) return;
        nodes_.reserve(2 * n / max_leaf + 1);
        nodes_.push_back({});
        build(0, 0, n, boxes, centroids);
    }

    std::size_t triangle_count() const { return v0_.size(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    std::span<const std::uint32_t> leaf_triangles(const Node& leaf) const {
        return {order_.data() + leaf.first, leaf.count};
    }

    /// Nearest hit with t > t_min; ties resolved towards the lower triangle id.
    std::optional<RayHit> closest(Vec3 origin, Vec3 dir, double t_min = default_t_min,
                                  TraceStats* stats = nullptr) const {
        std::optional<RayHit> best;
        traverse(origin, dir, [&](std::uint32_t tri) {
            if (stats) ++stats->triangle_tests;
            auto t = intersect_triangle(origin, dir, v0_[tri], e1_[tri], e2_[tri], t_min);
            if (t && (!best || *t < best->t || (*t == best->t && tri < best->triangle))) best = RayHit{*t, tri};
            return false;
        }, [&] { return best ? best->t : std::numeric_limits<double>::infinity(); }, stats);
        return best;
    }

    /// True if any triangle accepted by `filter` is hit with t > t_min.
    template <class Filter>
    bool occluded(Vec3 origin, Vec3 dir, double t_min, Filter&& filter) const {
        bool hit = false;
        traverse(origin, dir, [&](std::uint32_t tri) {
            if (!filter(tri)) return false;
            hit = intersect_triangle(origin, dir, v0_[tri], e1_[tri], e2_[tri], t_min).has_value();
            return hit;
        }, [] { return std::numeric_limits<double>::infinity(); }, nullptr);
        return hit;
    }

private:
    void build(std::size_t node, std::size_t begin, std::size_t end, const std::vector<Box3>& boxes,
               const std::vector<Vec3>& centroids) {
        Box3 box, cbox;
        for (std::size_t i = begin; i < end; ++i) {
            box.expand(boxes[order_[i]]);
            cbox.expand(centroids[order_[i]]);
        }
        nodes_[node].box = box;
        const std::size_t count = end - begin;
        const Vec3 ext = cbox.hi - cbox.lo;
        const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
        if (count <= max_leaf || ext[axis] <= 0) {
            if (count > max_leaf) {
                // All centroids coincide: split by position in the list.
            } else {
                nodes_[node].first = static_cast<std::uint32_t>(begin);
                nodes_[node].count = static_cast<std::uint32_t>(count);
                return;
            }
        }
        const std::size_t mid = begin + count / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t a, std::uint32_t b) {
                             const double ca = centroids[a][axis], cb = centroids[b][axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        const auto left = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back({});
        nodes_.push_back({});
        nodes_[node].first = left;
        nodes_[node].count = 0;
        build(left, begin, mid, boxes, centroids);
        build(left + 1, mid, end, boxes, centroids);
    }

    static bool slab(const Box3& b, Vec3 o, Vec3 inv, double t_max) {
        double t0 = 0, t1 = t_max;
        for (int a = 0; a < 3; ++a) {
            double lo = (b.lo[a] - o[a]) * inv[a], hi = (b.hi[a] - o[a]) * inv[a];
            if (std::isnan(lo) || std::isnan(hi)) {
                // Ray parallel to the slab with origin on its plane.
                if (o[a] < b.lo[a] || o[a] > b.hi[a]) return false;
                continue;
            }
            if (lo > hi) std::swap(lo, hi);
            t0 = std::max(t0, lo);
            t1 = std::min(t1, hi);
            if (t0 > t1) return false;
        }
        return true;
    }

    template <class Visit, class Limit>
    void traverse(Vec3 origin, Vec3 dir, Visit&& visit, Limit&& limit, TraceStats* stats) const {
        if (nodes_.empty()) return;
        const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
        std::uint32_t stack[64];
        int top = 0;
        stack[top++] = 0;
        while (top) {
            const Node& node = nodes_[stack[--top]];
            if (stats) ++stats->node_visits;
            if (!slab(node.box, origin, inv, limit())) continue;
            if (node.count) {
                for (std::uint32_t k = 0; k < node.count; ++k)
                    if (visit(order_[node.first + k])) return;
            } else {
                stack[top++] = node.first;
                stack[top++] = node.first + 1;
            }
        }
    }

    std::vector<Vec3> v0_, e1_, e2_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

inline Bvh build_bvh(const TriMesh& mesh) {
    if (mesh.size() == 0) throw geometry_error("cannot build a BVH over an empty scene");
    return Bvh(mesh);
}

inline std::optional<RayHit> ray_hit(const Bvh& bvh, Vec3 origin, Vec3 dir, double t_min = default_t_min,
                                     TraceStats* stats = nullptr) {
    if (dot(dir, dir) == 0) throw geometry_error("ray direction must be non-zero");
    return bvh.closest(origin, dir, t_min, stats);
}

/// Reference nearest-hit query over every triangle of the mesh.
inline std::optional<RayHit> ray_hit_brute_force(const TriMesh& mesh, Vec3 origin, Vec3 dir,
                                                 double t_min = default_t_min) {
    std::optional<RayHit> best;
    for (std::size_t t = 0; t < mesh.size(); ++t) {
        const Vec3 v0 = mesh.corner(t, 0);
        auto hit = intersect_triangle(origin, dir, v0, mesh.corner(t, 1) - v0, mesh.corner(t, 2) - v0, t_min);
        if (hit && (!best || *hit < best->t)) best = RayHit{*hit, static_cast<std::uint32_t>(t)};
    }
    return best;
}

/// Mesh plus its acceleration structure and facet table.
struct RayScene {
    const TriMesh* mesh = nullptr;
    Bvh bvh;
    std::vector<FaceInfo> faces;

    explicit RayScene(const TriMesh& m) : mesh(&m), bvh(build_bvh(m)), faces(faces_of(m)) {}
};

namespace detail {

/// Area-weighted point sampler over a set of triangles.
class SurfaceSampler {
public:
    SurfaceSampler(const TriMesh& mesh, std::span<const std::uint32_t> tris) : mesh_(mesh) {
        double acc = 0;
        for (auto t : tris) {
            const double a = mesh.triangle_area(t);
            if (a <= 0) continue;
            acc += a;
            tris_.push_back(t);
            cdf_.push_back(acc);
        }
        total_ = acc;
    }
    double area() const { return total_; }

    struct Sample {
        Vec3 point;
        Vec3 normal;
    };
    Sample sample(Rng& rng) const {
        const double pick = rng.uniform() * total_;
        auto it = std::upper_bound(cdf_.begin(), cdf_.end(), pick);
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), tris_.size() - 1);
        const auto t = tris_[k];
        const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
        const Vec3 a = mesh_.corner(t, 0), b = mesh_.corner(t, 1), c = mesh_.corner(t, 2);
        return {(1 - r1) * a + (r1 * (1 - r2)) * b + (r1 * r2) * c, normalized(mesh_.area_normal(t))};
    }

private:
    const TriMesh& mesh_;
    std::vector<std::uint32_t> tris_;
    std::vector<double> cdf_;
    double total_ = 0;
};

/// Orthonormal basis (t, b, n) around a unit normal.
inline std::array<Vec3, 2> tangent_frame(Vec3 n) {
    const double sign = std::copysign(1.0, n.z);
    const double a = -1.0 / (sign + n.z);
    const double b = n.x * n.y * a;
    return {Vec3{1.0 + sign * n.x * n.x * a, sign * b, -sign * n.x}, Vec3{b, sign + n.y * n.y * a, -n.y}};
}

inline Vec3 cosine_direction(Vec3 n, Rng& rng) {
    const double u = rng.uniform(), v = rng.uniform();
    const double r = std::sqrt(u), phi = 2 * pi * v;
    const auto [t, b] = tangent_frame(n);
    return (r * std::cos(phi)) * t + (r * std::sin(phi)) * b + std::sqrt(std::max(0.0, 1 - u)) * n;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Shading masks

struct ShadingMask {
    std::uint32_t face = 0;
    SkyGrid grid;
    std::vector<double> blocked; ///< [az * n_alt + alt]
    std::size_t samples_per_bin = 0;
    std::uint64_t seed = 0;

    double at(int az, int alt) const { return blocked[static_cast<std::size_t>(az) * grid.n_alt + alt]; }
    double at(const SkyBin& b) const { return at(b.az, b.alt); }
};

/// Monte Carlo blocked fraction per sky bin for one facet. Rays whose
/// direction faces away from the surface count as blocked.
inline ShadingMask shading_mask(const RayScene& scene, std::uint32_t face_id, const SkyGrid& grid,
                                std::size_t samples_per_bin, std::uint64_t seed) {
    if (face_id >= scene.faces.size() || scene.faces[face_id].triangles.empty())
        throw geometry_error("shading mask requested for unknown face " + std::to_string(face_id));
    if (samples_per_bin == 0) throw config_error("samples per bin must be positive");
    const auto& face = scene.faces[face_id];
    const detail::SurfaceSampler sampler(*scene.mesh, face.triangles);
    if (sampler.area() <= 0) throw geometry_error("face " + std::to_string(face_id) + " has zero area");
    const auto& mesh_faces = scene.mesh->face;
    auto other_face = [&](std::uint32_t tri) { return mesh_faces[tri] != face_id; };

    ShadingMask mask{face_id, grid, std::vector<double>(grid.size(), 0.0), samples_per_bin, seed};
    for (int i = 0; i < grid.n_az; ++i)
        for (int j = 0; j < grid.n_alt; ++j) {
            const std::size_t bin = static_cast<std::size_t>(i) * grid.n_alt + j;
            Rng rng(stream_seed(seed, {face_id, bin}));
            const double s0 = std::sin(deg2rad(j * grid.alt_step())), s1 = std::sin(deg2rad((j + 1) * grid.alt_step()));
            std::size_t blocked = 0;
            for (std::size_t s = 0; s < samples_per_bin; ++s) {
                const auto p = sampler.sample(rng);
                const double az = (i + rng.uniform()) * grid.az_step();
                const double alt = rad2deg(std::asin(s0 + (s1 - s0) * rng.uniform()));
                const Vec3 d = to_vector({az, alt});
                if (dot(d, p.normal) <= 0 || scene.bvh.occluded(p.point, d, default_t_min, other_face)) ++blocked;
            }
            mask.blocked[bin] = static_cast<double>(blocked) / static_cast<double>(samples_per_bin);
        }
    return mask;
}

/// Masks for many faces, parallel over faces; results do not depend on `threads`.
inline std::vector<ShadingMask> shading_masks(const RayScene& scene, std::span<const std::uint32_t> faces,
                                              const SkyGrid& grid, std::size_t samples_per_bin,
                                              std::uint64_t seed, unsigned threads) {
    std::vector<ShadingMask> out(faces.size());
    parallel_for(faces.size(), threads,
                 [&](std::size_t k) { out[k] = shading_mask(scene, faces[k], grid, samples_per_bin, seed); });
    return out;
}

/// CSV layout: header `azimuth,<alt centers...>`, one row per azimuth bin.
inline std::string mask_to_csv(const ShadingMask& m) {
    std::string out = "azimuth";
    for (int j = 0; j < m.grid.n_alt; ++j) out += "," + fmt::exact(m.grid.center(0, j).altitude);
    out += "\n";
    for (int i = 0; i < m.grid.n_az; ++i) {
        out += fmt::exact(m.grid.center(i, 0).azimuth);
        for (int j = 0; j < m.grid.n_alt; ++j) out += "," + fmt::exact(m.at(i, j));
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// View factors

struct ViewFactorMatrix {
    std::vector<double> areas;
    std::vector<std::vector<double>> F, sigma;
    std::size_t rays_per_surface = 0;
    std::uint64_t seed = 0;

    std::size_t size() const { return areas.size(); }
};

inline constexpr std::size_t vf_ray_block = 4096;

/// First-hit Monte Carlo view factors between surfaces (each a set of facet
/// ids). Origins are area-uniform, directions cosine-weighted. Rays are drawn
/// in fixed blocks with one RNG stream per (surface, block).
inline ViewFactorMatrix view_factors(const RayScene& scene, const std::vector<std::vector<std::uint32_t>>& surfaces,
                                     std::size_t rays_per_surface, std::uint64_t seed, unsigned threads = 1) {
    const std::size_t n = surfaces.size();
    if (rays_per_surface == 0) throw config_error("rays per surface must be positive");
    std::vector<std::int32_t> surface_of_tri(scene.mesh->size(), -1);
    std::vector<std::vector<std::uint32_t>> tris(n);
    for (std::size_t i = 0; i < n; ++i)
        for (auto f : surfaces[i]) {
            if (f >= scene.faces.size()) throw geometry_error("view factor surface references unknown face " + std::to_string(f));
            for (auto t : scene.faces[f].triangles) {
                if (surface_of_tri[t] >= 0) throw geometry_error("view factor surfaces are not disjoint");
                surface_of_tri[t] = static_cast<std::int32_t>(i);
                tris[i].push_back(t);
            }
        }

    std::vector<detail::SurfaceSampler> samplers;
    ViewFactorMatrix vf;
    vf.rays_per_surface = rays_per_surface;
    vf.seed = seed;
    for (std::size_t i = 0; i < n; ++i) {
        samplers.emplace_back(*scene.mesh, tris[i]);
        if (samplers.back().area() <= 0) throw geometry_error("view factor surface " + std::to_string(i) + " has zero area");
        vf.areas.push_back(samplers.back().area());
    }

    const std::size_t blocks = (rays_per_surface + vf_ray_block - 1) / vf_ray_block;
    std::vector<std::vector<std::uint64_t>> counts(n * blocks, std::vector<std::uint64_t>(n, 0));
    parallel_for(n * blocks, threads, [&](std::size_t job) {
        const std::size_t i = job / blocks, blk = job % blocks;
        Rng rng(stream_seed(seed, {i, blk}));
        const std::size_t rays = std::min(vf_ray_block, rays_per_surface - blk * vf_ray_block);
        auto& c = counts[job];
        for (std::size_t r = 0; r < rays; ++r) {
            const auto s = samplers[i].sample(rng);
            const Vec3 d = detail::cosine_direction(s.normal, rng);
            if (auto hit = scene.bvh.closest(s.point, d)) {
                const auto j = surface_of_tri[hit->triangle];
                if (j >= 0) ++c[static_cast<std::size_t>(j)];
            }
        }
    });

    vf.F.assign(n, std::vector<double>(n, 0.0));
    vf.sigma.assign(n, std::vector<double>(n, 0.0));
    const double rays = static_cast<double>(rays_per_surface);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            std::uint64_t c = 0;
            for (std::size_t blk = 0; blk < blocks; ++blk) c += counts[i * blocks + blk][j];
            const double f = static_cast<double>(c) / rays;
            vf.F[i][j] = f;
            vf.sigma[i][j] = std::sqrt(f * (1 - f) / rays);
        }
    return vf;
}

// ---------------------------------------------------------------------------
// 2D view factors

struct Segment2 {
    Vec2 a, b;
    double length() const { return distance(a, b); }
};

namespace detail {

inline std::optional<Vec2> line_intersection(const Segment2& s, const Segment2& t) {
    const Vec2 r = s.b - s.a, q = t.b - t.a;
    const double den = cross(r, q);
    if (std::abs(den) < 1e-300) return std::nullopt;
    const double u = cross(t.a - s.a, q) / den;
    return s.a + u * r;
}

// Measure (in p) of lines with direction angle theta that cross both E and R
// with no blocker crossing strictly between the two crossings.
inline double unobstructed_line_measure(double theta, const Segment2& e, const Segment2& r,
                                        std::span<const Segment2> blockers) {
    const Vec2 u{std::cos(theta), std::sin(theta)}, nrm{-std::sin(theta), std::cos(theta)};
    struct Proj {
        double lo, hi, alpha, beta;
        bool valid;
    };
    auto project = [&](const Segment2& s) {
        const double p0 = dot(nrm, s.a), p1 = dot(nrm, s.b);
        if (p0 == p1) return Proj{0, 0, 0, 0, false};
        // Crossing position along u as an affine function of p.
        const double beta = dot(u, s.b - s.a) / (p1 - p0);
        return Proj{std::min(p0, p1), std::max(p0, p1), dot(u, s.a) - beta * p0, beta, true};
    };
    const Proj pe = project(e), pr = project(r);
    if (!pe.valid || !pr.valid) return 0;
    const double lo = std::max(pe.lo, pr.lo), hi = std::min(pe.hi, pr.hi);
    if (hi <= lo) return 0;

    std::vector<Proj> pb;
    std::vector<double> cuts{lo, hi};
    for (const auto& b : blockers) {
        const Proj p = project(b);
        if (!p.valid || p.hi <= lo || p.lo >= hi) continue;
        pb.push_back(p);
        cuts.push_back(p.lo);
        cuts.push_back(p.hi);
        for (const Proj* other : {&pe, &pr})
            if (p.beta != other->beta) cuts.push_back((other->alpha - p.alpha) / (p.beta - other->beta));
    }
    if (pb.empty()) return hi - lo;
    std::sort(cuts.begin(), cuts.end());
    double measure = 0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double a = std::max(cuts[k], lo), b = std::min(cuts[k + 1], hi);
        if (b <= a) continue;
        const double p = 0.5 * (a + b);
        const double te = pe.alpha + pe.beta * p, tr = pr.alpha + pr.beta * p;
        bool blocked = false;
        for (const auto& q : pb) {
            if (p <= q.lo || p >= q.hi) continue;
            const double tb = q.alpha + q.beta * p;
            if ((tb - te) * (tb - tr) < 0) {
                blocked = true;
                break;
            }
        }
        if (!blocked) measure += b - a;
    }
    return measure;
}

} // namespace detail

/// View factor from `emitter` to `receiver` in 2D (both treated as
/// two-sided). Without blockers this is Hottel's crossed-strings formula.
/// With blockers it integrates the measure of unobstructed lines joining the
/// two segments (the quantity the stretched strings measure), piecewise
/// exactly between the critical directions.
inline double crossed_strings_2d(const Segment2& emitter, const Segment2& receiver,
                                 std::span<const Segment2> blockers = {}) {
    const double len = emitter.length();
    if (len <= 0 || receiver.length() <= 0) throw geometry_error("crossed strings: degenerate segment");
    for (const auto& b : blockers)
        if (b.length() <= 0) throw geometry_error("crossed strings: degenerate blocker");
    {
        const bool shares_endpoint = emitter.a == receiver.a || emitter.a == receiver.b ||
                                     emitter.b == receiver.a || emitter.b == receiver.b;
        const bool touch = detail::segments_intersect(emitter.a, emitter.b, receiver.a, receiver.b);
        const bool collinear = detail::orientation(emitter.a, emitter.b, receiver.a) == 0 &&
                               detail::orientation(emitter.a, emitter.b, receiver.b) == 0;
        if (touch && (!shares_endpoint || collinear))
            throw geometry_error("crossed strings: emitter and receiver intersect");
    }
    // The closed form needs each segment wholly on one side of the other's
    // supporting line; other configurations take the integral below.
    auto one_side = [](const Segment2& s, const Segment2& t) {
        return detail::orientation(s.a, s.b, t.a) * detail::orientation(s.a, s.b, t.b) >= 0;
    };
    if (blockers.empty() && one_side(emitter, receiver) && one_side(receiver, emitter)) {
        const double crossed = distance(emitter.a, receiver.b) + distance(emitter.b, receiver.a);
        const double uncrossed = distance(emitter.a, receiver.a) + distance(emitter.b, receiver.b);
        return std::abs(crossed - uncrossed) / (2 * len);
    }

    // Critical directions: every pair among endpoints and supporting-line
    // intersections. Between them the measure is a sum of sinusoids.
    std::vector<Segment2> all{emitter, receiver};
    all.insert(all.end(), blockers.begin(), blockers.end());
    std::vector<Vec2> pts;
    for (const auto& s : all) {
        pts.push_back(s.a);
        pts.push_back(s.b);
    }
    for (std::size_t i = 0; i < all.size(); ++i)
        for (std::size_t j = i + 1; j < all.size(); ++j)
            if (auto x = detail::line_intersection(all[i], all[j]); x && std::isfinite(x->x) && std::isfinite(x->y))
                pts.push_back(*x);
    std::vector<double> angles{0.0, pi};
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) {
            const Vec2 d = pts[j] - pts[i];
            if (d.x == 0 && d.y == 0) continue;
            double a = std::atan2(d.y, d.x);
            if (a < 0) a += pi;
            if (a >= pi) a -= pi;
            angles.push_back(a);
        }
    std::sort(angles.begin(), angles.end());
    angles.erase(std::unique(angles.begin(), angles.end(), [](double x, double y) { return y - x < 1e-15; }),
                 angles.end());

    static constexpr std::array<double, 8> gx{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                              -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                              0.7966664774136267,  0.9602898564975363};
    static constexpr std::array<double, 8> gw{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                              0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                              0.2223810344533745, 0.1012285362903763};
    double integral = 0;
    for (std::size_t k = 0; k + 1 < angles.size(); ++k) {
        const double a = angles[k], b = angles[k + 1], h = 0.5 * (b - a), c = 0.5 * (a + b);
        if (h <= 0) continue;
        double s = 0;
        for (std::size_t q = 0; q < gx.size(); ++q)
            s += gw[q] * detail::unobstructed_line_measure(c + h * gx[q], emitter, receiver, blockers);
        integral += h * s;
    }
    return integral / (2 * len);
}

} // namespace kub
