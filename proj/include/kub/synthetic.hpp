#pragma once

// Deterministic synthetic inputs: building grids, weather, elevation grids
// and a Strasbourg-like micro-district.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "geo_ingest.hpp"
#include "meshgen.hpp"
#include "rng.hpp"
#include "solar.hpp"

namespace kub::synthetic {

inline constexpr double strasbourg_lon = 7.7521, strasbourg_lat = 48.5734;
inline constexpr std::int64_t jan_15_2023 = 1673740800; ///< 2023-01-15T00:00:00Z

inline Ring rectangle(double x0, double y0, double x1, double y1) { return {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}; }

/// nx * ny square buildings on a regular grid, ids "b0000", "b0001", ...
inline std::vector<BuildingModel> grid_buildings(int nx, int ny, double size = 10, double spacing = 20,
                                                 double height = 9) {
    std::vector<BuildingModel> out;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "b%04d", j * nx + i);
            out.push_back({id, {rectangle(i * spacing, j * spacing, i * spacing + size, j * spacing + size), {}}, 0.0,
                           height, 1});
        }
    return out;
}

inline GeoFootprint to_geo(const std::string& id, const PolygonWithHoles& p, const LocalFrame& f, double height,
                           std::optional<int> levels = std::nullopt) {
    GeoFootprint g;
    g.id = id;
    for (auto q : p.outer) g.outer.push_back(f.unproject(q));
    for (const auto& h : p.holes) {
        GeoRing r;
        for (auto q : h) r.push_back(f.unproject(q));
        g.holes.push_back(std::move(r));
    }
    g.height_m = height;
    g.levels = levels;
    return g;
}

inline LocalFrame strasbourg_frame() { return {strasbourg_lon, strasbourg_lat}; }

inline std::vector<GeoFootprint> grid_footprints(int nx, int ny, double size = 10, double spacing = 20,
                                                 double height = 9, LocalFrame frame = strasbourg_frame()) {
    std::vector<GeoFootprint> out;
    // Centre the grid on the frame origin.
    const double ox = -0.5 * ((nx - 1) * spacing + size), oy = -0.5 * ((ny - 1) * spacing + size);
    for (auto b : grid_buildings(nx, ny, size, spacing, height)) {
        for (auto& q : b.footprint.outer) q = q + Vec2{ox, oy};
        out.push_back(to_geo(b.id, b.footprint, frame, height));
    }
    return out;
}

/// Hourly series: sinusoidal temperature (minimum at 05:00 UTC) and clear-sky
/// shaped irradiance following the sun's altitude at (lat, lon).
inline WeatherSeries diurnal_weather(std::int64_t start, std::size_t hours, double t_mean, double t_amp,
                                     double dni_peak, double dhi_peak, double lat = strasbourg_lat,
                                     double lon = strasbourg_lon) {
    WeatherSeries w;
    w.step_s = 3600;
    for (std::size_t h = 0; h < hours; ++h) {
        const std::int64_t t = start + static_cast<std::int64_t>(h) * 3600;
        const double hour = static_cast<double>((t / 3600) % 24);
        const double alt = sun_position(lat, lon, t + 1800).altitude;
        const double s = std::max(0.0, std::sin(deg2rad(alt)));
        w.timestamps.push_back(t);
        w.t_out.push_back(t_mean - t_amp * std::cos(2 * pi * (hour - 5.0) / 24.0));
        w.dni.push_back(s > 0 ? dni_peak * std::sqrt(s) : 0.0);
        w.dhi.push_back(dhi_peak * s);
    }
    return w;
}

inline WeatherSeries constant_weather(std::int64_t start, std::size_t steps, double t_out, double dni = 0,
                                      double dhi = 0, std::int64_t step_s = 3600) {
    WeatherSeries w;
    w.step_s = step_s;
    for (std::size_t k = 0; k < steps; ++k) {
        w.timestamps.push_back(start + static_cast<std::int64_t>(k) * step_s);
        w.t_out.push_back(t_out);
        w.dni.push_back(dni);
        w.dhi.push_back(dhi);
    }
    return w;
}

/// Grid in local metres covering `box`, z = z0 + slope * (x - box.min_x).
inline ElevationGrid ramp_elevation(const Box2& box, double cell, double z0, double slope = 0) {
    ElevationGrid g;
    g.cell_size = cell;
    // Node centres start one cell outside the box so their hull covers it.
    g.origin = {box.min_x - 1.5 * cell, box.min_y - 1.5 * cell};
    g.ncols = static_cast<int>(std::ceil((box.max_x - box.min_x) / cell)) + 3;
    g.nrows = static_cast<int>(std::ceil((box.max_y - box.min_y) / cell)) + 3;
    g.values.resize(static_cast<std::size_t>(g.ncols) * static_cast<std::size_t>(g.nrows));
    for (int r = 0; r < g.nrows; ++r)
        for (int c = 0; c < g.ncols; ++c)
            g.values[static_cast<std::size_t>(r) * g.ncols + c] = z0 + slope * (g.node_x(c) - box.min_x);
    return g;
}

/// About 200 footprints in a 4 x 4 arrangement of urban blocks: perimeter
/// blocks of touching row houses around a courtyard, row-house terraces,
/// detached houses (some L-shaped, some rotated) and single buildings with
/// courtyards. Some footprints carry levels instead of a height.
inline std::vector<GeoFootprint> strasbourg_like_district(std::uint64_t seed = 7, LocalFrame frame = strasbourg_frame()) {
    Rng rng(stream_seed(seed, {0x5157}));
    auto uni = [&](double a, double b) { return a + (b - a) * rng.uniform(); };
    std::vector<GeoFootprint> out;
    int serial = 0;
    auto add = [&](const PolygonWithHoles& p, double h) {
        char id[16];
        std::snprintf(id, sizeof id, "sx%03d", serial++);
        std::optional<int> levels;
        if (rng.uniform() < 0.25) levels = static_cast<int>(std::lround(h / 3.0));
        auto g = to_geo(id, p, frame, levels ? default_building_height_m : h, levels);
        if (levels) g.height_m = *levels * default_storey_height_m;
        out.push_back(std::move(g));
    };
    auto cuts = [&](double a, double b, int n) {
        std::vector<double> x{a};
        for (int k = 1; k < n; ++k) x.push_back(std::round(a + (b - a) * (k + uni(-0.2, 0.2)) / n));
        x.push_back(b);
        return x;
    };
    const double block = 60, street = 16;
    for (int bj = 0; bj < 4; ++bj)
        for (int bi = 0; bi < 4; ++bi) {
            const double x0 = (bi - 2) * (block + street), y0 = (bj - 2) * (block + street);
            const int kind = (bi + 2 * bj + static_cast<int>(rng.bits() % 3)) % 4;
            if (kind == 0) {
                // Perimeter block: the union of the row houses encloses a courtyard.
                const double d = 12, s = 56;
                auto xs = cuts(0, s, 4);
                for (std::size_t k = 0; k + 1 < xs.size(); ++k) {
                    add({rectangle(x0 + xs[k], y0, x0 + xs[k + 1], y0 + d), {}}, std::round(uni(12, 20)));
                    add({rectangle(x0 + xs[k], y0 + s - d, x0 + xs[k + 1], y0 + s), {}}, std::round(uni(12, 20)));
                }
                auto ys = cuts(d, s - d, 3);
                for (std::size_t k = 0; k + 1 < ys.size(); ++k) {
                    add({rectangle(x0, y0 + ys[k], x0 + d, y0 + ys[k + 1]), {}}, std::round(uni(12, 20)));
                    add({rectangle(x0 + s - d, y0 + ys[k], x0 + s, y0 + ys[k + 1]), {}}, std::round(uni(12, 20)));
                }
            } else if (kind == 1) {
                // Two terraces of touching row houses.
                for (double yy : {0.0, 34.0}) {
                    auto xs = cuts(0, 56, 7);
                    for (std::size_t k = 0; k + 1 < xs.size(); ++k)
                        add({rectangle(x0 + xs[k], y0 + yy, x0 + xs[k + 1], y0 + yy + 10), {}}, std::round(uni(7, 13)));
                }
            } else if (kind == 2) {
                // Detached houses, some L-shaped and some rotated.
                for (int j = 0; j < 3; ++j)
                    for (int i = 0; i < 3; ++i) {
                        const double cx = x0 + 9 + i * 19, cy = y0 + 9 + j * 19;
                        const double w = uni(8, 12), h = uni(7, 11);
                        Ring r;
                        if (rng.uniform() < 0.4) {
                            const double cw = w * 0.5, ch = h * 0.5;
                            r = {{0, 0}, {w, 0}, {w, ch}, {cw, ch}, {cw, h}, {0, h}};
                        } else {
                            r = rectangle(0, 0, w, h);
                        }
                        const double ang = rng.uniform() < 0.5 ? deg2rad(uni(-35, 35)) : 0.0;
                        for (auto& q : r) {
                            const Vec2 v{q.x - w / 2, q.y - h / 2};
                            q = {cx + v.x * std::cos(ang) - v.y * std::sin(ang), cy + v.x * std::sin(ang) + v.y * std::cos(ang)};
                        }
                        add({r, {}}, std::round(uni(6, 10)));
                    }
            } else {
                // Courtyard building plus a few L-shaped annexes.
                add({rectangle(x0, y0, x0 + 34, y0 + 30), {{{x0 + 10, y0 + 10}, {x0 + 10, y0 + 20}, {x0 + 24, y0 + 20}, {x0 + 24, y0 + 10}}}},
                    std::round(uni(15, 21)));
                for (int k = 0; k < 3; ++k) {
                    const double ax = x0 + 40, ay = y0 + k * 19;
                    add({{{ax, ay}, {ax + 16, ay}, {ax + 16, ay + 6}, {ax + 6, ay + 6}, {ax + 6, ay + 14}, {ax, ay + 14}}, {}},
                        std::round(uni(9, 15)));
                }
                auto xs = cuts(0, 56, 6);
                for (std::size_t k = 0; k + 1 < xs.size(); ++k)
                    add({rectangle(x0 + xs[k], y0 + 40, x0 + xs[k + 1], y0 + 52), {}}, std::round(uni(9, 16)));
            }
        }
    return out;
}

/// Random non-overlapping boxes on a square site, for radiation tests.
inline std::vector<BuildingModel> random_boxes(std::uint64_t seed, int n, double site = 30) {
    Rng rng(stream_seed(seed, {0xb0c5}));
    auto uni = [&](double a, double b) { return a + (b - a) * rng.uniform(); };
    std::vector<BuildingModel> out;
    std::vector<Box2> placed;
    for (int guard = 0; static_cast<int>(out.size()) < n && guard < 10000; ++guard) {
        const double w = uni(2, 8), d = uni(2, 8);
        const double x = uni(0, site - w), y = uni(0, site - d);
        const Box2 b{x, y, x + w, y + d};
        bool clear = true;
        for (const auto& p : placed)
            if (b.overlaps(p, 1.0)) clear = false;
        if (!clear) continue;
        placed.push_back(b);
        out.push_back({"r" + std::to_string(out.size()), {rectangle(b.min_x, b.min_y, b.max_x, b.max_y), {}}, 0.0,
                       uni(3, 15), 1});
    }
    return out;
}

} // namespace kub::synthetic
