#pragma once

// Lumped RC building model (air node + mass node) driven by weather, shading
// masks and optional longwave exchange between buildings.

#include <array>
#include <barrier>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "format.hpp"
#include "geo_ingest.hpp"
#include "meshgen.hpp"
#include "parallel.hpp"
#include "radiation.hpp"
#include "solar.hpp"

namespace kub {

inline constexpr double window_to_wall_ratio = 0.15;
inline constexpr double longwave_h_r = 5.0;           ///< W/(m2 K)
inline constexpr double air_volumetric_heat = 1200.0; ///< J/(m3 K)
inline constexpr double mass_coupling_per_m2 = 9.1;   ///< W/(m2 K) of envelope
inline constexpr double air_capacity_share = 0.1;
inline constexpr double opaque_absorptance = 0.6;
inline constexpr double exterior_film_h = 25.0; ///< W/(m2 K)
inline const std::string model_variant = "rc-2node-backward-euler";

struct ZoneParams {
    double a_env = 0;   ///< walls + roof, m2
    double a_win = 0;   ///< m2
    double u_env = 0;   ///< W/(m2 K), opaque part
    double u_win = 0;   ///< W/(m2 K)
    double c_air = 0;   ///< J/K
    double c_mass = 0;  ///< J/K
    double g = 0;       ///< window solar heat gain coefficient
    double setpoint = 20;
    double max_heater_w = std::numeric_limits<double>::infinity();
    double h_inf = 0;   ///< W/K
    double h_em = std::numeric_limits<double>::infinity(); ///< air-mass coupling, W/K; infinite = single node
    double solar_to_mass = 0.5;

    double capacitance() const { return c_air + c_mass; }
    double h_env() const { return u_env * (a_env - a_win) + u_win * a_win; }
    double h_total() const { return h_env() + h_inf; }
    bool single_node() const { return std::isinf(h_em); }
};

struct ZoneState {
    double t_in = 20;
    double t_m = 20;
    double q_heat = 0;
};

// ---------------------------------------------------------------------------
// Archetypes

struct Archetype {
    std::string name;
    double u_env = 0, u_win = 0, g = 0;
    double c_per_m3 = 0;       ///< J/(m3 K) of gross volume
    double ach = 0;            ///< air changes per hour
    double setpoint = 20;
    double max_heat_w_per_m3 = 0;
};

inline const std::vector<Archetype>& default_archetypes() {
    static const std::vector<Archetype> table{
        {"old", 1.6, 2.8, 0.70, 60000, 0.8, 20, 60},
        {"renovated", 0.6, 1.4, 0.60, 60000, 0.5, 20, 40},
        {"new", 0.25, 0.9, 0.50, 45000, 0.3, 20, 25},
    };
    return table;
}

/// CSV with header `name,u_env,u_win,g,c_per_m3,ach,setpoint_c,max_heat_w_per_m3`.
inline std::vector<Archetype> parse_archetypes(std::string_view text) {
    static constexpr std::string_view header = "name,u_env,u_win,g,c_per_m3,ach,setpoint_c,max_heat_w_per_m3";
    std::vector<Archetype> out;
    std::size_t line_no = 0;
    bool seen_header = false;
    for (auto raw : fmt::split(text, '\n')) {
        ++line_no;
        const auto line = fmt::trim(raw);
        if (line.empty() || line.front() == '#') continue;
        if (!seen_header) {
            if (line != header) throw parse_error("archetype table: expected header '" + std::string(header) + "'", line_no);
            seen_header = true;
            continue;
        }
        const auto f = fmt::split(line, ',');
        if (f.size() != 8) throw parse_error("archetype table: expected 8 fields", line_no);
        Archetype a{std::string(fmt::trim(f[0])),  fmt::to_double(f[1], "u_env", line_no),
                    fmt::to_double(f[2], "u_win", line_no), fmt::to_double(f[3], "g", line_no),
                    fmt::to_double(f[4], "c_per_m3", line_no), fmt::to_double(f[5], "ach", line_no),
                    fmt::to_double(f[6], "setpoint_c", line_no), fmt::to_double(f[7], "max_heat_w_per_m3", line_no)};
        if (a.name.empty() || a.u_env <= 0 || a.u_win <= 0 || a.g < 0 || a.g > 1 || a.c_per_m3 <= 0 || a.ach < 0 ||
            a.max_heat_w_per_m3 <= 0)
            throw parse_error("archetype table: out-of-range value for '" + a.name + "'", line_no);
        out.push_back(std::move(a));
    }
    if (!seen_header) throw parse_error("archetype table: missing header", line_no);
    return out;
}

inline const Archetype& find_archetype(const std::vector<Archetype>& table, std::string_view name) {
    for (const auto& a : table)
        if (a.name == name) return a;
    throw config_error("unknown archetype '" + std::string(name) + "'");
}

struct EnvelopeAreas {
    double wall = 0, roof = 0, ground = 0, volume = 0;
};

inline EnvelopeAreas envelope_areas(const BuildingModel& b) {
    const TriMesh m = building_mesh(b);
    EnvelopeAreas e;
    for (std::size_t t = 0; t < m.size(); ++t) {
        const double a = m.triangle_area(t);
        if (m.tags[t] == FaceTag::wall) e.wall += a;
        else if (m.tags[t] == FaceTag::roof) e.roof += a;
        else if (m.tags[t] == FaceTag::ground) e.ground += a;
    }
    e.volume = signed_volume(m);
    return e;
}

inline ZoneParams derive_params(const BuildingModel& b, const Archetype& a) {
    const auto e = envelope_areas(b);
    ZoneParams p;
    p.a_env = e.wall + e.roof;
    p.a_win = window_to_wall_ratio * e.wall;
    p.u_env = a.u_env;
    p.u_win = a.u_win;
    p.g = a.g;
    const double c = a.c_per_m3 * e.volume;
    p.c_air = air_capacity_share * c;
    p.c_mass = c - p.c_air;
    p.setpoint = a.setpoint;
    p.max_heater_w = a.max_heat_w_per_m3 * e.volume;
    p.h_inf = a.ach * e.volume * air_volumetric_heat / 3600.0;
    p.h_em = mass_coupling_per_m2 * p.a_env;
    return p;
}

inline ZoneParams derive_params(const BuildingModel& b, std::string_view archetype,
                                const std::vector<Archetype>& table = default_archetypes()) {
    return derive_params(b, find_archetype(table, archetype));
}

// ---------------------------------------------------------------------------
// Zone integration

namespace detail {

struct ZoneSolution {
    double t_in, t_m;
};

// Backward Euler for the air/mass pair with heater power q.
inline ZoneSolution solve_zone(const ZoneState& s, const ZoneParams& p, double t_out, double gain_air,
                               double gain_mass, double q, double dt) {
    const double h = p.h_total();
    if (p.single_node()) {
        const double c = p.capacitance() / dt;
        const double t = (c * s.t_in + h * t_out + gain_air + gain_mass + q) / (c + h);
        return {t, t};
    }
    const double a11 = p.c_air / dt + h + p.h_em, a12 = -p.h_em;
    const double a21 = -p.h_em, a22 = p.c_mass / dt + p.h_em;
    const double b1 = p.c_air / dt * s.t_in + h * t_out + gain_air + q;
    const double b2 = p.c_mass / dt * s.t_m + gain_mass;
    const double det = a11 * a22 - a12 * a21;
    return {(b1 * a22 - a12 * b2) / det, (a11 * b2 - a21 * b1) / det};
}

// d t_in / d q of the implicit step.
inline double heater_sensitivity(const ZoneParams& p, double dt) {
    const double h = p.h_total();
    if (p.single_node()) return 1.0 / (p.capacitance() / dt + h);
    const double a11 = p.c_air / dt + h + p.h_em, a22 = p.c_mass / dt + p.h_em;
    return a22 / (a11 * a22 - p.h_em * p.h_em);
}

} // namespace detail

/// One implicit step. The heater delivers the power that holds the setpoint,
/// clamped to [0, max_heater_w]. `extra_air_gain` carries exchange terms.
inline ZoneState step_zone(const ZoneState& s, const ZoneParams& p, double t_out, double solar_gain, double dt,
                           double extra_air_gain = 0) {
    if (!(dt > 0)) throw config_error("time step must be positive");
    const double gain_mass = p.single_node() ? 0.0 : p.solar_to_mass * solar_gain;
    const double gain_air = solar_gain - gain_mass + extra_air_gain;
    auto free = detail::solve_zone(s, p, t_out, gain_air, gain_mass, 0.0, dt);
    double q = 0;
    // Deficits at round-off level (a zone resting at its setpoint) need no heat.
    const double deficit = p.setpoint - free.t_in;
    if (deficit > 1e-9 * (1 + std::abs(p.setpoint))) q = std::min((p.setpoint - free.t_in) / detail::heater_sensitivity(p, dt), p.max_heater_w);
    if (q <= 0) return {free.t_in, free.t_m, 0.0};
    const auto heated = detail::solve_zone(s, p, t_out, gain_air, gain_mass, q, dt);
    return {heated.t_in, heated.t_m, q};
}

// ---------------------------------------------------------------------------
// District simulation

struct ExteriorFace {
    std::uint32_t face = 0;
    FaceTag tag = FaceTag::wall;
    Vec3 normal;
    double area = 0;
};

struct ThermalBuilding {
    std::string id;
    ZoneParams params;
    std::vector<ExteriorFace> faces; ///< walls and roofs
};

/// Thermal inputs for every building of a scene (walls and roofs only).
inline std::vector<ThermalBuilding> thermal_buildings(const Scene& scene, const Archetype& archetype) {
    std::map<std::string, std::size_t> slot;
    std::vector<ThermalBuilding> out;
    for (const auto& b : scene.buildings) {
        slot[b.id] = out.size();
        out.push_back({b.id, derive_params(b, archetype), {}});
    }
    for (const auto& f : faces_of(scene.mesh)) {
        if (f.owner < 0 || (f.tag != FaceTag::wall && f.tag != FaceTag::roof)) continue;
        auto it = slot.find(scene.mesh.owner_ids[static_cast<std::size_t>(f.owner)]);
        if (it == slot.end()) continue;
        out[it->second].faces.push_back({f.id, f.tag, f.normal, f.area});
    }
    return out;
}

/// Longwave exchange between building surfaces. `building_of_surface[i]` is
/// the index of the building owning view-factor surface i.
struct RadiativeCoupling {
    ViewFactorMatrix vf;
    std::vector<std::size_t> building_of_surface;
};

/// Symmetric conductances G_ij = h_r (A_i F_ij + A_j F_ji) / 2, so the
/// exchange Q_ij = G_ij (T_j - T_i) is exactly antisymmetric.
inline std::vector<std::vector<double>> exchange_conductance(const ViewFactorMatrix& vf, double h_r = longwave_h_r) {
    const std::size_t n = vf.size();
    std::vector<std::vector<double>> g(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) g[i][j] = h_r * 0.5 * (vf.areas[i] * vf.F[i][j] + vf.areas[j] * vf.F[j][i]);
    return g;
}

/// Q[i][j]: heat gained by surface i from surface j.
inline std::vector<std::vector<double>> longwave_exchange(const std::vector<std::vector<double>>& g,
                                                          const std::vector<double>& t_surf) {
    const std::size_t n = g.size();
    std::vector<std::vector<double>> q(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) q[i][j] = g[i][j] * (t_surf[j] - t_surf[i]);
    return q;
}

struct SimConfig {
    double lat = 48.58, lon = 7.75;
    double dt_s = 0;            ///< 0: the weather step; must divide it otherwise
    std::size_t steps = 0;      ///< 0: the whole weather series
    std::optional<double> initial_t; ///< default: each zone's setpoint
    std::vector<std::vector<std::size_t>> parts; ///< building indices per worker; empty: one part
    std::uint64_t seed = 0;     ///< recorded for provenance
};

struct BuildingResult {
    std::string id;
    std::vector<double> t_in;   ///< end of each weather step
    std::vector<double> q_heat; ///< mean heater power over each weather step
    double heating_kwh = 0;
    // Energy terms over the run, J.
    double heating_j = 0, solar_j = 0, loss_j = 0, exchange_j = 0, stored_j = 0;
};

struct SimResult {
    std::vector<std::int64_t> times;
    std::vector<BuildingResult> buildings;
    double dt_s = 0;
    std::string model = model_variant;
    std::uint64_t seed = 0;

    double total_heating_kwh() const {
        double s = 0;
        for (const auto& b : buildings) s += b.heating_kwh;
        return s;
    }
};

/// Solar heat entering a zone: transmitted through windows plus the sol-air
/// share absorbed by the opaque envelope.
inline double solar_gain(const ZoneParams& p, FaceTag tag, double irradiance, double area) {
    const double win_share = tag == FaceTag::wall ? window_to_wall_ratio : 0.0;
    return irradiance * area *
           (win_share * p.g + (1 - win_share) * opaque_absorptance * p.u_env / exterior_film_h);
}

/// Time loop over the weather steps. Parts advance on their own threads; with
/// coupling, exchange uses the previous step's air temperatures and the parts
/// synchronize once per step.
inline SimResult simulate(const std::vector<ThermalBuilding>& buildings, const WeatherSeries& weather,
                          const std::vector<ShadingMask>& masks, const RadiativeCoupling* coupling,
                          const SimConfig& cfg) {
    const std::size_t nb = buildings.size();
    const std::size_t steps = cfg.steps ? std::min(cfg.steps, weather.size()) : weather.size();
    const double step_s = static_cast<double>(weather.step_s);
    const double dt = cfg.dt_s > 0 ? cfg.dt_s : step_s;
    const auto sub = static_cast<std::size_t>(std::llround(step_s / dt));
    if (sub == 0 || std::abs(static_cast<double>(sub) * dt - step_s) > 1e-9)
        throw config_error("time step must divide the weather step of " + std::to_string(weather.step_s) + " s");

    std::map<std::uint32_t, const ShadingMask*> mask_of;
    for (const auto& m : masks) mask_of[m.face] = &m;
    struct FaceCache {
        const ShadingMask* mask;
        double sky_view;
    };
    std::vector<std::vector<FaceCache>> cache(nb);
    for (std::size_t b = 0; b < nb; ++b)
        for (const auto& f : buildings[b].faces) {
            auto it = mask_of.find(f.face);
            if (it == mask_of.end())
                throw config_error("missing shading mask for face " + std::to_string(f.face) + " of building " +
                                   buildings[b].id);
            cache[b].push_back({it->second, sky_view_factor(f.normal, it->second->grid, it->second->blocked)});
        }

    std::vector<std::vector<double>> g;
    if (coupling) {
        if (coupling->building_of_surface.size() != coupling->vf.size())
            throw config_error("coupling surface map does not match the view-factor matrix");
        for (auto b : coupling->building_of_surface)
            if (b >= nb) throw config_error("coupling surface refers to an unknown building");
        g = exchange_conductance(coupling->vf);
    }

    std::vector<SunDirection> sun(steps);
    for (std::size_t k = 0; k < steps; ++k)
        sun[k] = sun_position(cfg.lat, cfg.lon, weather.timestamps[k] + weather.step_s / 2);

    SimResult res;
    res.times.assign(weather.timestamps.begin(), weather.timestamps.begin() + static_cast<std::ptrdiff_t>(steps));
    res.dt_s = dt;
    res.seed = cfg.seed;
    res.buildings.resize(nb);
    std::vector<ZoneState> state(nb);
    // t_hist[k][b]: air temperature at the start of weather step k.
    std::vector<std::vector<double>> t_hist(steps + 1, std::vector<double>(nb));
    for (std::size_t b = 0; b < nb; ++b) {
        const double t0 = cfg.initial_t.value_or(buildings[b].params.setpoint);
        state[b] = {t0, t0, 0};
        t_hist[0][b] = t0;
        res.buildings[b].id = buildings[b].id;
        res.buildings[b].t_in.resize(steps);
        res.buildings[b].q_heat.resize(steps);
    }

    auto exchange_gain = [&](std::size_t k, std::size_t b) {
        if (!coupling) return 0.0;
        const auto& owner = coupling->building_of_surface;
        const auto& t = t_hist[k];
        double q = 0;
        for (std::size_t i = 0; i < owner.size(); ++i) {
            if (owner[i] != b) continue;
            for (std::size_t j = 0; j < owner.size(); ++j)
                if (j != i) q += g[i][j] * (t[owner[j]] - t[owner[i]]);
        }
        return q;
    };

    auto advance = [&](std::size_t k, std::size_t b) {
        const auto& tb = buildings[b];
        const auto& p = tb.params;
        auto& r = res.buildings[b];
        double solar = 0;
        for (std::size_t f = 0; f < tb.faces.size(); ++f) {
            const auto& face = tb.faces[f];
            const auto& fc = cache[b][f];
            const auto fbin = grid_bin(fc.mask->grid, sun[k]);
            const double blocked = fbin ? fc.mask->at(*fbin) : 1.0;
            const double irr = face_irradiance(face.normal, sun[k], weather.dni[k], weather.dhi[k], blocked, fc.sky_view);
            solar += solar_gain(p, face.tag, irr, face.area);
        }
        const double lw = exchange_gain(k, b);
        const double t_out = weather.t_out[k];
        ZoneState& s = state[b];
        const double stored0 = p.single_node() ? p.capacitance() * s.t_in : p.c_air * s.t_in + p.c_mass * s.t_m;
        double q_sum = 0;
        for (std::size_t i = 0; i < sub; ++i) {
            s = step_zone(s, p, t_out, solar, dt, lw);
            q_sum += s.q_heat;
            r.loss_j += p.h_total() * (s.t_in - t_out) * dt;
        }
        const double stored1 = p.single_node() ? p.capacitance() * s.t_in : p.c_air * s.t_in + p.c_mass * s.t_m;
        r.heating_j += q_sum * dt;
        r.solar_j += solar * step_s;
        r.exchange_j += lw * step_s;
        r.stored_j += stored1 - stored0;
        r.t_in[k] = s.t_in;
        r.q_heat[k] = q_sum / static_cast<double>(sub);
        t_hist[k + 1][b] = s.t_in;
    };

    std::vector<std::vector<std::size_t>> parts = cfg.parts;
    if (parts.empty()) {
        parts.emplace_back(nb);
        std::iota(parts[0].begin(), parts[0].end(), std::size_t{0});
    }
    {
        std::vector<int> seen(nb, 0);
        for (const auto& part : parts)
            for (auto b : part) {
                if (b >= nb || seen[b]++) throw config_error("simulation parts must cover each building exactly once");
            }
        for (auto s : seen)
            if (!s) throw config_error("simulation parts must cover each building exactly once");
    }

    if (!coupling) {
        parallel_for(parts.size(), static_cast<unsigned>(parts.size()), [&](std::size_t w) {
            for (std::size_t k = 0; k < steps; ++k)
                for (auto b : parts[w]) advance(k, b);
        });
    } else {
        std::barrier sync(static_cast<std::ptrdiff_t>(parts.size()));
        parallel_for(parts.size(), static_cast<unsigned>(parts.size()), [&](std::size_t w) {
            for (std::size_t k = 0; k < steps; ++k) {
                for (auto b : parts[w]) advance(k, b);
                sync.arrive_and_wait();
            }
        });
    }
    for (auto& r : res.buildings) r.heating_kwh = r.heating_j / 3.6e6;
    return res;
}

/// `time,t_in,q_heat` with ISO 8601 UTC timestamps.
inline std::string building_csv(const SimResult& res, const BuildingResult& b) {
    std::string out = "time,t_in,q_heat\n";
    for (std::size_t k = 0; k < b.t_in.size(); ++k)
        out += format_iso8601(res.times[k]) + "," + fmt::fixed(b.t_in[k], 6) + "," + fmt::fixed(b.q_heat[k], 6) + "\n";
    return out;
}

/// Scene summary: per-building and total heating energy, without timings.
inline std::string summary_json(const SimResult& res) {
    nlohmann::ordered_json j;
    j["model"] = res.model;
    j["dt_s"] = res.dt_s;
    j["steps"] = res.times.size();
    j["seed"] = res.seed;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& b : res.buildings) {
        nlohmann::ordered_json e;
        e["id"] = b.id;
        e["heating_kwh"] = b.heating_kwh;
        arr.push_back(std::move(e));
    }
    j["buildings"] = std::move(arr);
    j["total_heating_kwh"] = res.total_heating_kwh();
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Steady 2D segment network

/// Steady balance on nodes i: sum_j G_ij (T_j - T_i) + g_i (t_b,i - T_i) = 0,
/// with G_ij = h_r (L_i F_ij + L_j F_ji) / 2. Nodes with `fixed` set keep
/// that temperature.
struct SegmentNetwork {
    std::vector<double> length;
    std::vector<std::vector<double>> F;
    std::vector<std::optional<double>> fixed;
    std::vector<double> g_boundary;
    std::vector<double> t_boundary;
    double h_r = longwave_h_r;
};

inline std::vector<double> solve_network(const SegmentNetwork& net) {
    const std::size_t n = net.length.size();
    if (net.F.size() != n || net.fixed.size() != n || net.g_boundary.size() != n || net.t_boundary.size() != n)
        throw config_error("segment network arrays have inconsistent sizes");
    std::vector<std::vector<double>> G(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) G[i][j] = net.h_r * 0.5 * (net.length[i] * net.F[i][j] + net.length[j] * net.F[j][i]);

    std::vector<std::size_t> free_idx, slot(n, n);
    for (std::size_t i = 0; i < n; ++i)
        if (!net.fixed[i]) {
            slot[i] = free_idx.size();
            free_idx.push_back(i);
        }
    const std::size_t m = free_idx.size();
    std::vector<std::vector<double>> A(m, std::vector<double>(m + 1, 0.0));
    for (std::size_t r = 0; r < m; ++r) {
        const std::size_t i = free_idx[r];
        double diag = net.g_boundary[i];
        double rhs = net.g_boundary[i] * net.t_boundary[i];
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            diag += G[i][j];
            if (net.fixed[j]) rhs += G[i][j] * *net.fixed[j];
            else A[r][slot[j]] -= G[i][j];
        }
        A[r][r] += diag;
        A[r][m] = rhs;
    }
    const auto original = A;

    double scale = 0;
    for (const auto& row : A)
        for (std::size_t c = 0; c < m; ++c) scale = std::max(scale, std::abs(row[c]));
    for (std::size_t c = 0; c < m; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < m; ++r)
            if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
        if (std::abs(A[piv][c]) <= 1e-12 * std::max(scale, 1e-300))
            throw geometry_error("segment network is singular (a node has no path to a fixed temperature)");
        std::swap(A[c], A[piv]);
        for (std::size_t r = c + 1; r < m; ++r) {
            const double f = A[r][c] / A[c][c];
            if (f == 0) continue;
            for (std::size_t k = c; k <= m; ++k) A[r][k] -= f * A[c][k];
        }
    }
    std::vector<double> x(m);
    for (std::size_t c = m; c-- > 0;) {
        double s = A[c][m];
        for (std::size_t k = c + 1; k < m; ++k) s -= A[c][k] * x[k];
        x[c] = s / A[c][c];
    }
    double residual = 0, rhs_norm = 0;
    for (std::size_t r = 0; r < m; ++r) {
        double s = -original[r][m];
        for (std::size_t c = 0; c < m; ++c) s += original[r][c] * x[c];
        residual = std::max(residual, std::abs(s));
        rhs_norm = std::max(rhs_norm, std::abs(original[r][m]));
    }
    if (residual > 1e-10 * std::max(1.0, rhs_norm))
        throw geometry_error("segment network solve did not converge (residual " + fmt::general(residual, 3) + ")");

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = net.fixed[i] ? *net.fixed[i] : x[slot[i]];
    return t;
}

struct Benchmark2dInput {
    std::array<Box2, 3> blocks;
    std::array<double, 3> t_interior{20, 20, 20};
    double t_air = 0;
    double t_sky = -10;
    double h_conv = 10;  ///< W/(m2 K), exterior film
    double k_wall = 1.0; ///< W/(m2 K), wall conductance to the block interior
    double h_r = longwave_h_r;
};

struct Benchmark2dResult {
    std::vector<Segment2> segments;
    std::vector<std::size_t> block_of;
    std::vector<std::vector<double>> F;
    std::vector<double> t_surface;
    std::vector<double> boundary_flux; ///< W/m into each segment from interior, air and sky
};

/// Steady surface temperatures of the outer sides of three rectangular
/// blocks. Side view factors come from crossed strings with all other sides
/// as blockers; each side also loses to the sky by its unseen remainder.
inline Benchmark2dResult solve_2d_benchmark(const Benchmark2dInput& in) {
    Benchmark2dResult out;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& b = in.blocks[k];
        if (!(b.max_x > b.min_x && b.max_y > b.min_y)) throw geometry_error("benchmark block " + std::to_string(k) + " is degenerate");
        for (std::size_t l = 0; l < k; ++l)
            if (b.overlaps(in.blocks[l])) throw geometry_error("benchmark blocks overlap or touch");
        // Counter-clockwise sides so each side's outward normal is on its right.
        const Vec2 c[4] = {{b.min_x, b.min_y}, {b.max_x, b.min_y}, {b.max_x, b.max_y}, {b.min_x, b.max_y}};
        for (int s = 0; s < 4; ++s) {
            out.segments.push_back({c[s], c[(s + 1) % 4]});
            out.block_of.push_back(k);
        }
    }
    const std::size_t n = out.segments.size();
    out.F.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (out.block_of[i] == out.block_of[j]) continue;
            std::vector<Segment2> blockers;
            for (std::size_t k = 0; k < n; ++k)
                if (k != i && k != j) blockers.push_back(out.segments[k]);
            out.F[i][j] = crossed_strings_2d(out.segments[i], out.segments[j], blockers);
        }

    SegmentNetwork net;
    net.h_r = in.h_r;
    net.F = out.F;
    for (std::size_t i = 0; i < n; ++i) {
        const double len = out.segments[i].length();
        double seen = 0;
        for (std::size_t j = 0; j < n; ++j) seen += out.F[i][j];
        const double g_sky = in.h_r * len * std::max(0.0, 1.0 - seen);
        const double g_cond = in.k_wall * len, g_conv = in.h_conv * len;
        const double g = g_sky + g_cond + g_conv;
        net.length.push_back(len);
        net.fixed.push_back(std::nullopt);
        net.g_boundary.push_back(g);
        net.t_boundary.push_back((g_sky * in.t_sky + g_cond * in.t_interior[out.block_of[i]] + g_conv * in.t_air) / g);
    }
    out.t_surface = solve_network(net);
    for (std::size_t i = 0; i < n; ++i) out.boundary_flux.push_back(net.g_boundary[i] * (net.t_boundary[i] - out.t_surface[i]));
    return out;
}

} // namespace kub
