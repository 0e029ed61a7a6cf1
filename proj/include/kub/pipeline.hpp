#pragma once

// End-to-end orchestration: configuration, staged run with timings, scaling
// sweeps and report files.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "format.hpp"
#include "geo_ingest.hpp"
#include "meshgen.hpp"
#include "partition.hpp"
#include "polygon.hpp"
#include "radiation.hpp"
#include "synthetic.hpp"
#include "thermal.hpp"

namespace kub {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw io_error("cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, std::string_view content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + p.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.close();
    if (!out) throw io_error("failed writing " + p.string());
}

// ---------------------------------------------------------------------------
// Configuration

struct RunConfig {
    fs::path footprints;
    std::optional<fs::path> elevation;
    fs::path weather;
    std::optional<fs::path> archetypes;
    std::optional<GeoBox> region; ///< default: footprint extent
    int zoom = 16;
    int lod = 1;
    bool union_touching = true;
    int sky_az = 72, sky_alt = 10;
    std::size_t samples = 64;      ///< per sky bin
    std::size_t vf_rays = 100000;  ///< per surface, Case 1 only
    unsigned workers = 1;
    int partition_case = 0;
    std::uint64_t seed = 1;
    fs::path out = "out";
    double dt_s = 0;               ///< 0: weather step
    std::size_t steps = 0;         ///< 0: whole weather series
    std::string archetype = "old";
    bool aggregate_output = false;

    void validate() const {
        if (workers < 1) throw config_error("workers must be at least 1");
        if (lod != 0 && lod != 1) throw config_error("lod must be 0 or 1");
        if (partition_case != 0 && partition_case != 1) throw config_error("partition_case must be 0 or 1");
        if (zoom < 0 || zoom > 19) throw config_error("zoom must be in [0, 19]");
        if (samples < 1) throw config_error("samples must be positive");
        if (vf_rays < 1) throw config_error("vf_rays must be positive");
        if (dt_s < 0) throw config_error("dt_s must be non-negative");
        SkyGrid(sky_az, sky_alt);
        if (footprints.empty()) throw config_error("footprints path is required");
        if (weather.empty()) throw config_error("weather path is required");
    }
};

namespace detail {

inline bool parse_bool(std::string_view v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw config_error("config key '" + key + "': expected a boolean, got '" + std::string(v) + "'");
}

inline double config_number(std::string_view v, const std::string& key) {
    try {
        return fmt::to_double(v, key);
    } catch (const parse_error&) {
        throw config_error("config key '" + key + "': expected a number, got '" + std::string(v) + "'");
    }
}

inline long long config_int(std::string_view v, const std::string& key, long long lo, long long hi) {
    long long x = 0;
    try {
        x = fmt::to_int(v, key);
    } catch (const parse_error&) {
        throw config_error("config key '" + key + "': expected an integer, got '" + std::string(v) + "'");
    }
    if (x < lo || x > hi) throw config_error("config key '" + key + "' out of range");
    return x;
}

} // namespace detail

/// Applies one `key = value` setting. Relative paths resolve against `base`.
inline void apply_setting(RunConfig& c, const std::string& key, std::string_view v, const fs::path& base = {}) {
    auto path = [&] { return base.empty() || fs::path(v).is_absolute() ? fs::path(v) : base / fs::path(v); };
    if (key == "footprints") c.footprints = path();
    else if (key == "elevation") c.elevation = path();
    else if (key == "weather") c.weather = path();
    else if (key == "archetypes") c.archetypes = path();
    else if (key == "out") c.out = path();
    else if (key == "region") {
        const auto f = fmt::split(v, ',');
        if (f.size() != 4) throw config_error("config key 'region': expected min_lon,min_lat,max_lon,max_lat");
        GeoBox b{detail::config_number(f[0], key), detail::config_number(f[1], key), detail::config_number(f[2], key),
                 detail::config_number(f[3], key)};
        if (b.min_lon >= b.max_lon || b.min_lat >= b.max_lat) throw config_error("config key 'region': empty box");
        c.region = b;
    } else if (key == "zoom") c.zoom = static_cast<int>(detail::config_int(v, key, 0, 19));
    else if (key == "lod") c.lod = static_cast<int>(detail::config_int(v, key, 0, 1));
    else if (key == "union_touching") c.union_touching = detail::parse_bool(v, key);
    else if (key == "sky_az") c.sky_az = static_cast<int>(detail::config_int(v, key, 4, 3600));
    else if (key == "sky_alt") c.sky_alt = static_cast<int>(detail::config_int(v, key, 2, 900));
    else if (key == "samples") c.samples = static_cast<std::size_t>(detail::config_int(v, key, 1, 1 << 24));
    else if (key == "vf_rays") c.vf_rays = static_cast<std::size_t>(detail::config_int(v, key, 1, 1LL << 40));
    else if (key == "workers") c.workers = static_cast<unsigned>(detail::config_int(v, key, 1, 4096));
    else if (key == "partition_case") c.partition_case = static_cast<int>(detail::config_int(v, key, 0, 1));
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::config_int(v, key, 0, std::numeric_limits<long long>::max()));
    else if (key == "dt_s") c.dt_s = detail::config_number(v, key);
    else if (key == "steps") c.steps = static_cast<std::size_t>(detail::config_int(v, key, 0, 1LL << 40));
    else if (key == "archetype") c.archetype = std::string(v);
    else if (key == "aggregate_output") c.aggregate_output = detail::parse_bool(v, key);
    else throw config_error("unknown config key '" + key + "'");
}

/// TOML-style document: `key = value` lines, `#` comments, optional double
/// quotes around values, `[section]` headers prefixing keys with `section.`.
inline RunConfig parse_config(std::string_view text, const fs::path& base = {}) {
    RunConfig c;
    std::string section;
    std::size_t line_no = 0;
    for (auto raw : fmt::split(text, '\n')) {
        ++line_no;
        std::string_view line = raw;
        bool in_quotes = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_quotes = !in_quotes;
            else if (line[i] == '#' && !in_quotes) {
                line = line.substr(0, i);
                break;
            }
        }
        line = fmt::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw config_error("config line " + std::to_string(line_no) + ": bad section header");
            section = std::string(fmt::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key(fmt::trim(line.substr(0, eq)));
        auto value = fmt::trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (!section.empty()) key = section + "." + key;
        try {
            apply_setting(c, key, value, base);
        } catch (const config_error& e) {
            throw config_error("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return c;
}

inline RunConfig load_config(const fs::path& p) {
    std::string text;
    try {
        text = read_file(p);
    } catch (const io_error&) {
        throw config_error("cannot read config file " + p.string());
    }
    return parse_config(text, p.parent_path());
}

// ---------------------------------------------------------------------------
// Timings and machine

struct StageTimings {
    double pre_s = 0, sim_s = 0, post_s = 0, wall_s = 0;
};

/// Seconds rounded to microseconds.
inline double round_us(double s) { return std::round(s * 1e6) / 1e6; }

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

struct MachineInfo {
    std::string hostname;
    std::string cpu_model;
    unsigned physical_cores = 1;
    unsigned logical_cpus = 1;
    std::string compiler;
};

/// Distinct (physical id, core id) pairs in /proc/cpuinfo, or the logical
/// CPU count when that file is unavailable.
inline unsigned physical_core_count() {
    std::ifstream in("/proc/cpuinfo");
    std::set<std::pair<std::string, std::string>> cores;
    std::string line, phys = "0", core;
    bool any = false;
    auto flush = [&] {
        if (!core.empty()) cores.insert({phys, core});
        phys = "0";
        core.clear();
    };
    while (std::getline(in, line)) {
        any = true;
        const auto colon = line.find(':');
        if (line.empty() || fmt::trim(line).empty()) {
            flush();
            continue;
        }
        if (colon == std::string::npos) continue;
        const auto key = fmt::trim(std::string_view(line).substr(0, colon));
        const auto val = std::string(fmt::trim(std::string_view(line).substr(colon + 1)));
        if (key == "physical id") phys = val;
        else if (key == "core id") core = val;
    }
    flush();
    if (any && !cores.empty()) return static_cast<unsigned>(cores.size());
    return std::max(1u, std::thread::hardware_concurrency());
}

inline MachineInfo machine_info() {
    MachineInfo m;
    char host[256] = {};
    if (gethostname(host, sizeof host - 1) == 0) m.hostname = host;
    std::ifstream in("/proc/cpuinfo");
    for (std::string line; std::getline(in, line);)
        if (line.rfind("model name", 0) == 0) {
            m.cpu_model = std::string(fmt::trim(std::string_view(line).substr(line.find(':') + 1)));
            break;
        }
    m.physical_cores = physical_core_count();
    m.logical_cpus = std::max(1u, std::thread::hardware_concurrency());
#if defined(__clang__)
    m.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
    m.compiler = "gcc " __VERSION__;
#endif
    return m;
}

// ---------------------------------------------------------------------------
// Synthetic input sets

struct SyntheticInputs {
    std::string kind = "district"; ///< "district" or "grid"
    int nx = 4, ny = 4;            ///< grid only
    std::uint64_t seed = 1;
    unsigned workers = 4;
    std::size_t hours = 24;
};

/// Writes footprints.geojson, weather.csv, config.toml and, for the
/// district, elevation.asc into `dir`. Returns the config path.
inline fs::path write_synthetic_inputs(const fs::path& dir, const SyntheticInputs& in) {
    if (in.kind != "district" && in.kind != "grid") throw config_error("synthetic kind must be 'district' or 'grid'");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory " + dir.string() + ": " + ec.message());
    const bool district = in.kind == "district";
    const auto fps = district ? synthetic::strasbourg_like_district(in.seed) : synthetic::grid_footprints(in.nx, in.ny);
    write_file(dir / "footprints.geojson", serialize_footprints(fps));
    write_file(dir / "weather.csv",
               serialize_weather(synthetic::diurnal_weather(synthetic::jan_15_2023, in.hours, -1.0, 3.0, 450.0, 90.0)));
    std::string config = "footprints = footprints.geojson\nweather = weather.csv\n";
    if (district) {
        GeoBox box{180, 90, -180, -90};
        for (const auto& f : fps)
            for (auto q : f.outer) {
                box.min_lon = std::min(box.min_lon, q.x);
                box.max_lon = std::max(box.max_lon, q.x);
                box.min_lat = std::min(box.min_lat, q.y);
                box.max_lat = std::max(box.max_lat, q.y);
            }
        // 20 m margin; the elevation grid lives in the region's local frame.
        const double dlon = 20.0 / (111320.0 * std::cos(deg2rad(box.min_lat))), dlat = 20.0 / 110540.0;
        box = {box.min_lon - dlon, box.min_lat - dlat, box.max_lon + dlon, box.max_lat + dlat};
        const auto frame = frame_for(box);
        const Vec2 lo = frame.project({box.min_lon, box.min_lat}), hi = frame.project({box.max_lon, box.max_lat});
        write_file(dir / "elevation.asc",
                   serialize_elevation(synthetic::ramp_elevation({lo.x, lo.y, hi.x, hi.y}, 5.0, 140.0, 0.02)));
        config += "elevation = elevation.asc\nregion = " + fmt::general(box.min_lon, 17) + "," +
                  fmt::general(box.min_lat, 17) + "," + fmt::general(box.max_lon, 17) + "," +
                  fmt::general(box.max_lat, 17) + "\n";
    }
    config += "zoom = 16\nlod = 1\nsky_az = 24\nsky_alt = 6\nsamples = 8\nworkers = " + std::to_string(in.workers) +
              "\nseed = " + std::to_string(in.seed) + "\narchetype = old\nout = out\n";
    write_file(dir / "config.toml", config);
    return dir / "config.toml";
}

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineResult {
    StageTimings timings;
    std::size_t building_count = 0;
    std::size_t output_bytes = 0;
    std::size_t file_count = 0;
    double total_heating_kwh = 0;
    std::vector<fs::path> files;
};

/// Every log line goes to this sink (standard error by default).
inline std::function<void(const std::string&)>& log_sink() {
    static std::function<void(const std::string&)> sink = [](const std::string& s) { std::cerr << s << "\n"; };
    return sink;
}
inline void log_line(const std::string& s) {
    if (log_sink()) log_sink()(s);
}

namespace detail {

/// Re-raises the active exception with a stage tag, keeping its category.
[[noreturn]] inline void rethrow_tagged(const std::string& stage) {
    const std::string tag = "[" + stage + "] ";
    try {
        throw;
    } catch (const parse_error& e) {
        throw parse_error(tag + e.what());
    } catch (const config_error& e) {
        throw config_error(tag + e.what());
    } catch (const geometry_error& e) {
        throw geometry_error(tag + e.what());
    } catch (const io_error& e) {
        throw io_error(tag + e.what());
    } catch (const error& e) {
        throw error(tag + e.what());
    } catch (const std::exception& e) {
        throw error(tag + e.what());
    }
}

inline std::string file_stem_for(const std::string& id) {
    std::string s = id;
    for (auto& ch : s)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.' || ch == '+'))
            ch = '_';
    return s;
}

struct Prepared {
    Scene scene;
    std::vector<ThermalBuilding> thermal;
    std::vector<ShadingMask> masks;
    std::optional<RadiativeCoupling> coupling;
    PartitionPlan plan;
    WeatherSeries weather;
    LocalFrame frame;
};

} // namespace detail

struct LoadedScene {
    Scene scene;
    LocalFrame frame;
};

/// Ingest, repair, tile assignment, terrain embedding and meshing.
inline LoadedScene load_scene(const RunConfig& cfg) {
    LoadedScene p;
    auto fp = parse_footprints(read_file(cfg.footprints));
    for (const auto& w : fp.warnings) log_line("warning: " + w);
    if (fp.footprints.empty()) throw geometry_error("no usable footprints in " + cfg.footprints.string());

    GeoBox region;
    if (cfg.region) region = *cfg.region;
    else {
        region = {180, 90, -180, -90};
        for (const auto& f : fp.footprints)
            for (auto q : f.outer) {
                region.min_lon = std::min(region.min_lon, q.x);
                region.max_lon = std::max(region.max_lon, q.x);
                region.min_lat = std::min(region.min_lat, q.y);
                region.max_lat = std::max(region.max_lat, q.y);
            }
    }
    p.frame = frame_for(region);

    // One tile per slippy index; each building belongs to the tile holding its centroid.
    const auto tiles = tiles_for_region(region, cfg.zoom);
    std::map<TileIndex, std::size_t> tile_slot;
    std::vector<TileContent> content;
    for (const auto& t : tiles) {
        tile_slot[t] = content.size();
        content.push_back({t, {}, std::nullopt, {}});
    }
    std::size_t skipped = 0;
    for (const auto& f : fp.footprints) {
        std::vector<Ring> rings;
        Ring outer;
        for (auto q : f.outer) outer.push_back(p.frame.project(q));
        rings.push_back(std::move(outer));
        for (const auto& h : f.holes) {
            Ring r;
            for (auto q : h) r.push_back(p.frame.project(q));
            rings.push_back(std::move(r));
        }
        PolygonWithHoles poly;
        try {
            poly = repair(rings);
        } catch (const geometry_error& e) {
            log_line("warning: skipping footprint " + f.id + ": " + e.what());
            ++skipped;
            continue;
        }
        const LonLat c = p.frame.unproject(centroid(poly));
        if (c.x < region.min_lon || c.x > region.max_lon || c.y < region.min_lat || c.y > region.max_lat) continue;
        const int n = 1 << cfg.zoom;
        TileIndex t{cfg.zoom, std::clamp(static_cast<int>(std::floor(tile_x_of(c.x, cfg.zoom))), 0, n - 1),
                    std::clamp(static_cast<int>(std::floor(tile_y_of(c.y, cfg.zoom))), 0, n - 1)};
        auto it = tile_slot.find(t);
        if (it == tile_slot.end()) continue;
        content[it->second].buildings.push_back({f.id, std::move(poly), 0.0, f.height_m, cfg.lod});
    }
    if (skipped) log_line("skipped " + std::to_string(skipped) + " unrepairable footprint(s)");

    if (cfg.elevation) {
        // The grid is in local metres of the region frame.
        const auto grid = parse_elevation(read_file(*cfg.elevation));
        const Vec2 lo = p.frame.project({region.min_lon, region.min_lat});
        const Vec2 hi = p.frame.project({region.max_lon, region.max_lat});
        const Box2 ext = grid.extent();
        const Box2 area{std::max(lo.x, ext.min_x), std::max(lo.y, ext.min_y), std::min(hi.x, ext.max_x),
                        std::min(hi.y, ext.max_y)};
        TriMesh terrain = terrain_mesh(grid, area);
        for (auto& tile : content) tile.buildings = embed_buildings(terrain, std::move(tile.buildings));
        if (!content.empty()) content.front().terrain = std::move(terrain);
    }

    p.scene = build_scene(content, {cfg.union_touching, cfg.lod, cfg.workers});
    if (p.scene.buildings.empty()) throw geometry_error("no buildings inside the region");
    log_line("scene: " + std::to_string(p.scene.buildings.size()) + " buildings, " + std::to_string(p.scene.mesh.size()) +
        " triangles");
    return p;
}

/// Exterior faces of every building, grouped per building in scene order.
inline std::vector<std::vector<std::uint32_t>> building_surfaces(const std::vector<ThermalBuilding>& thermal) {
    std::vector<std::vector<std::uint32_t>> out;
    for (const auto& b : thermal) {
        std::vector<std::uint32_t> s;
        for (const auto& f : b.faces) s.push_back(f.face);
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<Archetype> archetype_table(const RunConfig& cfg) {
    return cfg.archetypes ? parse_archetypes(read_file(*cfg.archetypes)) : default_archetypes();
}

namespace detail {

inline Prepared prepare(const RunConfig& cfg) {
    Prepared p;
    {
        auto loaded = load_scene(cfg);
        p.scene = std::move(loaded.scene);
        p.frame = loaded.frame;
    }

    p.thermal = thermal_buildings(p.scene, find_archetype(archetype_table(cfg), cfg.archetype));

    const RayScene rays(p.scene.mesh);
    std::vector<std::uint32_t> faces;
    for (const auto& b : p.thermal)
        for (const auto& f : b.faces) faces.push_back(f.face);
    p.masks = shading_masks(rays, faces, SkyGrid(cfg.sky_az, cfg.sky_alt), cfg.samples, cfg.seed, cfg.workers);

    p.plan = partition_case0(weights(p.scene), cfg.workers);
    if (cfg.partition_case == 1) {
        RadiativeCoupling coupling;
        for (std::size_t b = 0; b < p.thermal.size(); ++b) coupling.building_of_surface.push_back(b);
        coupling.vf = view_factors(rays, building_surfaces(p.thermal), cfg.vf_rays, cfg.seed, cfg.workers);
        p.coupling = std::move(coupling);
        p.plan = partition_case1(std::move(p.plan), p.scene);
    }

    p.weather = parse_weather(read_file(cfg.weather));
    if (cfg.steps > p.weather.size())
        throw config_error("steps = " + std::to_string(cfg.steps) + " exceeds the weather series length");
    return p;
}

} // namespace detail

/// Pre-processing (ingest, repair, mesh, masks, view factors, partition),
/// simulation (time loop over the plan's parts) and post-processing (result
/// files), each timed. Files written by a failed run are removed.
inline PipelineResult run_pipeline(const RunConfig& cfg) {
    cfg.validate();
    for (const auto* path : {&cfg.footprints, &cfg.weather})
        if (!fs::exists(*path)) throw config_error("input file not found: " + path->string());
    for (const auto* opt : {&cfg.elevation, &cfg.archetypes})
        if (*opt && !fs::exists(**opt)) throw config_error("input file not found: " + (*opt)->string());

    PipelineResult result;
    const Stopwatch wall;
    detail::Prepared prep;
    {
        const Stopwatch sw;
        try {
            prep = detail::prepare(cfg);
        } catch (...) {
            detail::rethrow_tagged("pre");
        }
        result.timings.pre_s = sw.seconds();
    }

    SimResult sim;
    {
        const Stopwatch sw;
        try {
            std::map<std::string, std::size_t> index;
            for (std::size_t b = 0; b < prep.thermal.size(); ++b) index[prep.thermal[b].id] = b;
            SimConfig sc;
            const LonLat c{prep.frame.lon0, prep.frame.lat0};
            sc.lat = c.y;
            sc.lon = c.x;
            sc.dt_s = cfg.dt_s;
            sc.steps = cfg.steps;
            sc.seed = cfg.seed;
            for (const auto& members : prep.plan.members) {
                std::vector<std::size_t> part;
                for (const auto& id : members) part.push_back(index.at(id));
                if (!part.empty()) sc.parts.push_back(std::move(part));
            }
            sim = simulate(prep.thermal, prep.weather, prep.masks, prep.coupling ? &*prep.coupling : nullptr, sc);
        } catch (...) {
            detail::rethrow_tagged("sim");
        }
        result.timings.sim_s = sw.seconds();
    }

    {
        const Stopwatch sw;
        std::vector<fs::path> created_dirs;
        try {
            for (const auto& d : {cfg.out, cfg.out / "buildings"}) {
                if (d == cfg.out / "buildings" && cfg.aggregate_output) continue;
                if (!fs::exists(d)) {
                    fs::create_directories(d);
                    created_dirs.push_back(d);
                }
            }
            auto emit = [&](const fs::path& p, const std::string& text) {
                write_file(p, text);
                result.files.push_back(p);
                result.output_bytes += text.size();
            };
            if (cfg.aggregate_output) {
                std::string all = "id,time,t_in,q_heat\n";
                for (const auto& b : sim.buildings) {
                    const auto csv = building_csv(sim, b);
                    for (auto line : fmt::split(csv, '\n')) {
                        if (line.empty() || line.rfind("time,", 0) == 0) continue;
                        all += b.id + "," + std::string(line) + "\n";
                    }
                }
                emit(cfg.out / "buildings.csv", all);
            } else {
                std::set<std::string> stems;
                for (const auto& b : sim.buildings) {
                    const auto stem = detail::file_stem_for(b.id);
                    if (!stems.insert(stem).second) throw io_error("building ids collide as file names: " + b.id);
                    emit(cfg.out / "buildings" / (stem + ".csv"), building_csv(sim, b));
                }
            }
            emit(cfg.out / "summary.json", summary_json(sim));
        } catch (...) {
            std::error_code ec;
            for (const auto& f : result.files) fs::remove(f, ec);
            for (auto it = created_dirs.rbegin(); it != created_dirs.rend(); ++it) fs::remove(*it, ec);
            detail::rethrow_tagged("post");
        }
        result.timings.post_s = sw.seconds();
    }
    result.timings.wall_s = wall.seconds();
    auto& t = result.timings;
    t.pre_s = round_us(t.pre_s);
    t.sim_s = round_us(t.sim_s);
    t.post_s = round_us(t.post_s);
    t.wall_s = round_us(t.wall_s);
    result.building_count = sim.buildings.size();
    result.file_count = result.files.size();
    result.total_heating_kwh = sim.total_heating_kwh();
    return result;
}

// ---------------------------------------------------------------------------
// Benchmark reports

inline constexpr int report_schema_version = 1;

struct BenchRun {
    unsigned workers = 1;
    bool ok = true;
    std::string error;
    StageTimings timings;
    std::size_t building_count = 0;
    std::size_t output_bytes = 0;
    std::size_t file_count = 0;
};

struct StageSpeedups {
    double pre = 1, sim = 1, post = 1, end_to_end = 1;
};

struct StageFractions {
    double pre = 0, sim = 0, post = 0;
};

struct BenchReport {
    int schema_version = report_schema_version;
    bool complete = true;
    MachineInfo machine;
    std::vector<BenchRun> runs;

    /// First successful single-worker run.
    const BenchRun* baseline() const {
        for (const auto& r : runs)
            if (r.ok && r.workers == 1) return &r;
        return nullptr;
    }

    StageSpeedups speedups(const BenchRun& r) const {
        const BenchRun* b = baseline();
        if (!b || !r.ok) return {0, 0, 0, 0};
        auto ratio = [](double base, double t) { return t > 0 ? base / t : (base > 0 ? 0.0 : 1.0); };
        if (&r == b) return {};
        return {ratio(b->timings.pre_s, r.timings.pre_s), ratio(b->timings.sim_s, r.timings.sim_s),
                ratio(b->timings.post_s, r.timings.post_s), ratio(b->timings.wall_s, r.timings.wall_s)};
    }

    static StageFractions fractions(const BenchRun& r) {
        const double total = r.timings.pre_s + r.timings.sim_s + r.timings.post_s;
        if (!(total > 0)) return {};
        return {r.timings.pre_s / total, r.timings.sim_s / total, r.timings.post_s / total};
    }
};

/// One pipeline run per worker count on identical inputs; outputs go to
/// `<out>/workers-<n>`. A failed run marks the report incomplete.
inline BenchReport bench_scaling(const RunConfig& cfg, const std::vector<unsigned>& worker_counts) {
    if (std::find(worker_counts.begin(), worker_counts.end(), 1u) == worker_counts.end())
        throw config_error("worker counts must include 1");
    BenchReport rep;
    rep.machine = machine_info();
    for (unsigned n : worker_counts) {
        RunConfig c = cfg;
        c.workers = n;
        c.out = cfg.out / ("workers-" + std::to_string(n));
        BenchRun run;
        run.workers = n;
        try {
            const auto r = run_pipeline(c);
            run.timings = r.timings;
            run.building_count = r.building_count;
            run.output_bytes = r.output_bytes;
            run.file_count = r.file_count;
        } catch (const std::exception& e) {
            run.ok = false;
            run.error = e.what();
            rep.complete = false;
            log_line("bench: run with " + std::to_string(n) + " worker(s) failed: " + e.what());
        }
        rep.runs.push_back(std::move(run));
    }
    return rep;
}

enum class ReportFormat { json, csv };

inline std::string report_to_json(const BenchReport& rep) {
    nlohmann::ordered_json j;
    j["schema_version"] = rep.schema_version;
    j["complete"] = rep.complete;
    j["machine"] = {{"hostname", rep.machine.hostname},
                    {"cpu_model", rep.machine.cpu_model},
                    {"physical_cores", rep.machine.physical_cores},
                    {"logical_cpus", rep.machine.logical_cpus},
                    {"compiler", rep.machine.compiler}};
    auto runs = nlohmann::ordered_json::array();
    for (const auto& r : rep.runs) {
        nlohmann::ordered_json e;
        e["workers"] = r.workers;
        e["ok"] = r.ok;
        e["error"] = r.error;
        e["buildings"] = r.building_count;
        e["output_bytes"] = r.output_bytes;
        e["files"] = r.file_count;
        e["timings"] = {{"pre_s", r.timings.pre_s},
                        {"sim_s", r.timings.sim_s},
                        {"post_s", r.timings.post_s},
                        {"wall_s", r.timings.wall_s}};
        const auto s = rep.speedups(r);
        e["speedup"] = {{"pre", s.pre}, {"sim", s.sim}, {"post", s.post}, {"end_to_end", s.end_to_end}};
        const auto f = BenchReport::fractions(r);
        e["fractions"] = {{"pre", f.pre}, {"sim", f.sim}, {"post", f.post}};
        runs.push_back(std::move(e));
    }
    j["runs"] = std::move(runs);
    return j.dump(2) + "\n";
}

namespace detail {

inline std::string csv_escape(const std::string& s) {
    std::string out;
    for (char c : s) out += (c == '\n' || c == '\r') ? ' ' : c;
    return out;
}

} // namespace detail

/// Machine and run metadata as `# key=value` lines, then one row per
/// (run, stage). `seconds` are raw timings; the speedup column is derived.
inline std::string report_to_csv(const BenchReport& rep) {
    std::string out;
    out += "# schema_version=" + std::to_string(rep.schema_version) + "\n";
    out += std::string("# complete=") + (rep.complete ? "true" : "false") + "\n";
    out += "# machine.hostname=" + detail::csv_escape(rep.machine.hostname) + "\n";
    out += "# machine.cpu_model=" + detail::csv_escape(rep.machine.cpu_model) + "\n";
    out += "# machine.physical_cores=" + std::to_string(rep.machine.physical_cores) + "\n";
    out += "# machine.logical_cpus=" + std::to_string(rep.machine.logical_cpus) + "\n";
    out += "# machine.compiler=" + detail::csv_escape(rep.machine.compiler) + "\n";
    for (std::size_t i = 0; i < rep.runs.size(); ++i)
        if (!rep.runs[i].ok) out += "# run." + std::to_string(i) + ".error=" + detail::csv_escape(rep.runs[i].error) + "\n";
    out += "run,workers,ok,buildings,output_bytes,files,stage,seconds,speedup\n";
    for (std::size_t i = 0; i < rep.runs.size(); ++i) {
        const auto& r = rep.runs[i];
        const auto s = rep.speedups(r);
        const std::pair<const char*, std::pair<double, double>> rows[] = {{"pre", {r.timings.pre_s, s.pre}},
                                                                          {"sim", {r.timings.sim_s, s.sim}},
                                                                          {"post", {r.timings.post_s, s.post}},
                                                                          {"wall", {r.timings.wall_s, s.end_to_end}}};
        for (const auto& [stage, v] : rows)
            out += std::to_string(i) + "," + std::to_string(r.workers) + "," + (r.ok ? "1" : "0") + "," +
                   std::to_string(r.building_count) + "," + std::to_string(r.output_bytes) + "," +
                   std::to_string(r.file_count) + "," + stage + "," + fmt::general(v.first, 17) + "," +
                   fmt::general(v.second, 17) + "\n";
    }
    return out;
}

inline BenchReport report_from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("report: ") + e.what());
    }
    try {
        BenchReport rep;
        rep.schema_version = j.at("schema_version").get<int>();
        if (rep.schema_version != report_schema_version)
            throw parse_error("report: unsupported schema_version " + std::to_string(rep.schema_version));
        rep.complete = j.at("complete").get<bool>();
        const auto& m = j.at("machine");
        rep.machine = {m.at("hostname").get<std::string>(), m.at("cpu_model").get<std::string>(),
                       m.at("physical_cores").get<unsigned>(), m.at("logical_cpus").get<unsigned>(),
                       m.at("compiler").get<std::string>()};
        for (const auto& e : j.at("runs")) {
            BenchRun r;
            r.workers = e.at("workers").get<unsigned>();
            r.ok = e.at("ok").get<bool>();
            r.error = e.at("error").get<std::string>();
            r.building_count = e.at("buildings").get<std::size_t>();
            r.output_bytes = e.at("output_bytes").get<std::size_t>();
            r.file_count = e.at("files").get<std::size_t>();
            const auto& t = e.at("timings");
            r.timings = {t.at("pre_s").get<double>(), t.at("sim_s").get<double>(), t.at("post_s").get<double>(),
                         t.at("wall_s").get<double>()};
            rep.runs.push_back(std::move(r));
        }
        return rep;
    } catch (const nlohmann::json::exception& e) {
        throw parse_error(std::string("report: ") + e.what());
    }
}

inline BenchReport report_from_csv(std::string_view text) {
    BenchReport rep;
    rep.schema_version = 0;
    std::map<std::size_t, std::string> errors;
    std::map<std::size_t, BenchRun> runs;
    bool header = false;
    std::size_t line_no = 0;
    for (auto raw : fmt::split(text, '\n')) {
        ++line_no;
        const auto line = fmt::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '#') {
            const auto body = fmt::trim(line.substr(1));
            const auto eq = body.find('=');
            if (eq == std::string_view::npos) continue;
            const std::string key(body.substr(0, eq));
            const std::string val(body.substr(eq + 1));
            if (key == "schema_version") rep.schema_version = static_cast<int>(fmt::to_int(val, key, line_no));
            else if (key == "complete") rep.complete = val == "true";
            else if (key == "machine.hostname") rep.machine.hostname = val;
            else if (key == "machine.cpu_model") rep.machine.cpu_model = val;
            else if (key == "machine.physical_cores") rep.machine.physical_cores = static_cast<unsigned>(fmt::to_int(val, key, line_no));
            else if (key == "machine.logical_cpus") rep.machine.logical_cpus = static_cast<unsigned>(fmt::to_int(val, key, line_no));
            else if (key == "machine.compiler") rep.machine.compiler = val;
            else if (key.rfind("run.", 0) == 0 && key.size() > 10 && key.substr(key.size() - 6) == ".error")
                errors[static_cast<std::size_t>(fmt::to_int(key.substr(4, key.size() - 10), "run index", line_no))] = val;
            continue;
        }
        if (!header) {
            if (line != "run,workers,ok,buildings,output_bytes,files,stage,seconds,speedup")
                throw parse_error("report csv: unexpected header", line_no);
            header = true;
            continue;
        }
        const auto f = fmt::split(line, ',');
        if (f.size() != 9) throw parse_error("report csv: expected 9 fields", line_no);
        const auto idx = static_cast<std::size_t>(fmt::to_int(f[0], "run", line_no));
        auto& r = runs[idx];
        r.workers = static_cast<unsigned>(fmt::to_int(f[1], "workers", line_no));
        r.ok = fmt::to_int(f[2], "ok", line_no) != 0;
        r.building_count = static_cast<std::size_t>(fmt::to_int(f[3], "buildings", line_no));
        r.output_bytes = static_cast<std::size_t>(fmt::to_int(f[4], "output_bytes", line_no));
        r.file_count = static_cast<std::size_t>(fmt::to_int(f[5], "files", line_no));
        const double secs = fmt::to_double(f[7], "seconds", line_no);
        if (f[6] == "pre") r.timings.pre_s = secs;
        else if (f[6] == "sim") r.timings.sim_s = secs;
        else if (f[6] == "post") r.timings.post_s = secs;
        else if (f[6] == "wall") r.timings.wall_s = secs;
        else throw parse_error("report csv: unknown stage '" + std::string(f[6]) + "'", line_no);
    }
    if (rep.schema_version != report_schema_version) throw parse_error("report csv: missing or unsupported schema_version");
    if (!header) throw parse_error("report csv: missing header");
    for (auto& [i, r] : runs) {
        if (auto it = errors.find(i); it != errors.end()) r.error = it->second;
        rep.runs.push_back(std::move(r));
    }
    return rep;
}

inline std::string emit_report(const BenchReport& rep, ReportFormat f) {
    return f == ReportFormat::json ? report_to_json(rep) : report_to_csv(rep);
}

inline void emit_report(const BenchReport& rep, ReportFormat f, const fs::path& path) {
    write_file(path, emit_report(rep, f));
}

inline BenchReport read_report(std::string_view text, ReportFormat f) {
    return f == ReportFormat::json ? report_from_json(text) : report_from_csv(text);
}

} // namespace kub
