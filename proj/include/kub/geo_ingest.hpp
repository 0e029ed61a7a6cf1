#pragma once

// GIS ingestion: GeoJSON footprints, ESRI ASCII elevation grids, weather CSV,
// slippy-map tile lookup and the local tangent-plane projection.

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "format.hpp"
#include "geometry.hpp"

namespace kub {

using LonLat = Vec2; // x = lon, y = lat (degrees)
using GeoRing = std::vector<LonLat>;

inline constexpr double default_storey_height_m = 3.0;
inline constexpr double default_building_height_m = 9.0;

struct GeoFootprint {
    std::string id;
    GeoRing outer;
    std::vector<GeoRing> holes;
    double height_m = default_building_height_m;
    std::optional<int> levels;

    friend bool operator==(const GeoFootprint&, const GeoFootprint&) = default;
};

struct FootprintParseResult {
    std::vector<GeoFootprint> footprints;
    std::vector<std::string> warnings;
};

struct GeoBox {
    double min_lon = 0, min_lat = 0, max_lon = 0, max_lat = 0;
};

struct TileIndex {
    int z = 0;
    std::int64_t x = 0, y = 0;

    friend bool operator==(const TileIndex&, const TileIndex&) = default;
    friend auto operator<=>(const TileIndex&, const TileIndex&) = default;
};

struct ElevationGrid {
    Vec2 origin;            ///< lower-left corner of the lower-left cell
    double cell_size = 1;
    int nrows = 0, ncols = 0;
    std::vector<double> values; ///< row-major, row 0 is the northern (top) row
    double nodata = -9999;

    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * ncols + col]; }
    bool is_nodata(int row, int col) const { return at(row, col) == nodata; }

    /// Cell centers are the sample nodes.
    double node_x(int col) const { return origin.x + (col + 0.5) * cell_size; }
    double node_y(int row) const { return origin.y + (nrows - 1 - row + 0.5) * cell_size; }

    /// Region where bilinear sampling is defined: hull of the cell centers.
    Box2 extent() const {
        return {node_x(0), node_y(nrows - 1), node_x(ncols - 1), node_y(0)};
    }
};

struct WeatherSeries {
    std::vector<std::int64_t> timestamps; ///< seconds since 1970-01-01T00:00:00Z
    std::vector<double> t_out, dni, dhi;
    std::int64_t step_s = 3600;

    std::size_t size() const { return timestamps.size(); }
    friend bool operator==(const WeatherSeries&, const WeatherSeries&) = default;
};

// ---------------------------------------------------------------------------
// Local tangent-plane projection

/// Meters east/north of a reference point. Adequate for extents up to ~20 km.
struct LocalFrame {
    double lon0 = 0, lat0 = 0;

    Vec2 project(LonLat p) const {
        return {(p.x - lon0) * std::cos(deg2rad(lat0)) * 111320.0, (p.y - lat0) * 110540.0};
    }
    LonLat unproject(Vec2 q) const {
        return {lon0 + q.x / (std::cos(deg2rad(lat0)) * 111320.0), lat0 + q.y / 110540.0};
    }
};

inline LocalFrame frame_for(const GeoBox& box) {
    return {0.5 * (box.min_lon + box.max_lon), 0.5 * (box.min_lat + box.max_lat)};
}

// ---------------------------------------------------------------------------
// Footprints

namespace detail {

inline double wrap_lon(double lon) {
    double w = std::fmod(lon + 180.0, 360.0);
    if (w < 0) w += 360.0;
    return w - 180.0;
}

inline std::size_t line_of_offset(std::string_view text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

// Reads a GeoJSON linear ring, dropping the closing vertex and consecutive duplicates.
inline GeoRing read_ring(const nlohmann::json& coords) {
    GeoRing ring;
    if (!coords.is_array()) throw std::invalid_argument("ring is not an array");
    for (const auto& pt : coords) {
        if (!pt.is_array() || pt.size() < 2 || !pt[0].is_number() || !pt[1].is_number())
            throw std::invalid_argument("position is not [lon, lat]");
        LonLat p{wrap_lon(pt[0].get<double>()), pt[1].get<double>()};
        if (std::abs(p.y) > 90.0) throw std::invalid_argument("latitude out of range");
        if (ring.empty() || !(ring.back() == p)) ring.push_back(p);
    }
    if (ring.size() > 1 && ring.front() == ring.back()) ring.pop_back();
    return ring;
}

inline std::optional<double> number_property(const nlohmann::json& props, const char* key) {
    auto it = props.find(key);
    if (it == props.end() || it->is_null()) return std::nullopt;
    if (it->is_number()) return it->get<double>();
    if (it->is_string()) {
        // OSM tags are frequently strings ("12", "12 m").
        const auto& s = it->get_ref<const std::string&>();
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            return v;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

} // namespace detail

/// Parses a GeoJSON FeatureCollection. One footprint per Polygon feature; a
/// MultiPolygon feature yields one footprint per part (ids suffixed `:k` when
/// it has more than one part). Unusable features are skipped with a warning.
inline FootprintParseResult parse_footprints(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw parse_error(std::string("malformed GeoJSON: ") + e.what(),
                          detail::line_of_offset(text, e.byte));
    }
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array())
        throw parse_error("GeoJSON document is not a FeatureCollection", 1);

    FootprintParseResult result;
    const auto& features = doc["features"];
    for (std::size_t fi = 0; fi < features.size(); ++fi) {
        const auto& feature = features[fi];
        const std::string where = "feature " + std::to_string(fi);
        if (!feature.is_object() || !feature.contains("geometry") || !feature["geometry"].is_object()) {
            throw parse_error("malformed GeoJSON: " + where + " has no geometry object");
        }
        const auto& geom = feature["geometry"];
        const std::string gtype = geom.value("type", "");
        if (gtype != "Polygon" && gtype != "MultiPolygon") {
            result.warnings.push_back(where + ": geometry type '" + gtype + "' ignored");
            continue;
        }
        static const nlohmann::json empty_object = nlohmann::json::object();
        const auto& props = feature.contains("properties") && feature["properties"].is_object()
                                ? feature["properties"]
                                : empty_object;

        std::string id;
        if (props.contains("id") && !props["id"].is_null())
            id = props["id"].is_string() ? props["id"].get<std::string>() : props["id"].dump();
        else if (feature.contains("id") && !feature["id"].is_null())
            id = feature["id"].is_string() ? feature["id"].get<std::string>() : feature["id"].dump();
        else
            id = "f" + std::to_string(fi);

        auto height = detail::number_property(props, "height");
        auto levels_raw = detail::number_property(props, "building:levels");
        std::optional<int> levels;
        if (levels_raw && *levels_raw > 0) levels = static_cast<int>(std::lround(*levels_raw));
        if (height && !(*height > 0)) {
            result.warnings.push_back(where + ": non-positive height ignored");
            height.reset();
        }
        double height_m = default_building_height_m;
        if (height) {
            height_m = *height;
            if (levels && std::abs(*levels * default_storey_height_m - *height) > default_storey_height_m)
                result.warnings.push_back(where + ": height " + fmt::general(*height, 6) +
                                          " m conflicts with building:levels " +
                                          std::to_string(*levels) + "; using height");
        } else if (levels) {
            height_m = *levels * default_storey_height_m;
        }

        const auto& coords = geom.contains("coordinates") ? geom["coordinates"] : nlohmann::json();
        if (!coords.is_array()) throw parse_error("malformed GeoJSON: " + where + " has no coordinates");
        std::vector<nlohmann::json> polygons;
        if (gtype == "Polygon")
            polygons.push_back(coords);
        else
            for (const auto& p : coords) polygons.push_back(p);

        for (std::size_t pi = 0; pi < polygons.size(); ++pi) {
            GeoFootprint fp;
            fp.id = polygons.size() > 1 ? id + ":" + std::to_string(pi) : id;
            fp.height_m = height_m;
            fp.levels = levels;
            try {
                const auto& rings = polygons[pi];
                if (!rings.is_array() || rings.empty()) throw std::invalid_argument("polygon has no rings");
                fp.outer = detail::read_ring(rings[0]);
                for (std::size_t r = 1; r < rings.size(); ++r) {
                    auto hole = detail::read_ring(rings[r]);
                    if (hole.size() >= 3)
                        fp.holes.push_back(std::move(hole));
                    else
                        result.warnings.push_back(where + ": degenerate hole dropped");
                }
            } catch (const std::invalid_argument& e) {
                result.warnings.push_back(where + ": skipped (" + e.what() + ")");
                continue;
            }
            if (fp.outer.size() < 3) {
                result.warnings.push_back(where + ": skipped (fewer than 3 distinct vertices)");
                continue;
            }
            result.footprints.push_back(std::move(fp));
        }
    }
    return result;
}

inline std::string serialize_footprints(const std::vector<GeoFootprint>& footprints) {
    auto ring_json = [](const GeoRing& ring) {
        auto arr = nlohmann::json::array();
        for (auto p : ring) arr.push_back({p.x, p.y});
        if (!ring.empty()) arr.push_back({ring.front().x, ring.front().y});
        return arr;
    };
    nlohmann::json doc = {{"type", "FeatureCollection"}, {"features", nlohmann::json::array()}};
    for (const auto& fp : footprints) {
        nlohmann::json rings = nlohmann::json::array();
        rings.push_back(ring_json(fp.outer));
        for (const auto& h : fp.holes) rings.push_back(ring_json(h));
        nlohmann::json props = {{"id", fp.id}, {"height", fp.height_m}};
        if (fp.levels) props["building:levels"] = *fp.levels;
        doc["features"].push_back({{"type", "Feature"},
                                   {"properties", props},
                                   {"geometry", {{"type", "Polygon"}, {"coordinates", rings}}}});
    }
    return doc.dump(1);
}

// ---------------------------------------------------------------------------
// Slippy-map tiles

inline constexpr double mercator_lat_limit = 85.0511287798066;

inline double tile_x_of(double lon, int z) { return (lon + 180.0) / 360.0 * std::ldexp(1.0, z); }
inline double tile_y_of(double lat, int z) {
    lat = std::clamp(lat, -mercator_lat_limit, mercator_lat_limit);
    return (1.0 - std::asinh(std::tan(deg2rad(lat))) / pi) / 2.0 * std::ldexp(1.0, z);
}

/// Geographic extent of a tile.
inline GeoBox tile_bounds(const TileIndex& t) {
    const double n = std::ldexp(1.0, t.z);
    auto lat_of = [n](double y) { return rad2deg(std::atan(std::sinh(pi * (1.0 - 2.0 * y / n)))); };
    return {t.x / n * 360.0 - 180.0, lat_of(static_cast<double>(t.y + 1)), (t.x + 1) / n * 360.0 - 180.0,
            lat_of(static_cast<double>(t.y))};
}

/// Tiles whose extent intersects `box` (closed), row-major (y then x).
/// Latitudes beyond the web-mercator limit are clamped to it.
inline std::vector<TileIndex> tiles_for_region(const GeoBox& box, int z) {
    if (z < 0 || z > 19) throw config_error("zoom level must be within [0, 19]");
    if (box.min_lon > box.max_lon || box.min_lat > box.max_lat)
        throw config_error("region bbox is inverted");
    const std::int64_t last = (std::int64_t{1} << z) - 1;
    auto clamp_idx = [last](double v) {
        return std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor(v)), 0, last);
    };
    const auto x0 = clamp_idx(tile_x_of(std::clamp(box.min_lon, -180.0, 180.0), z));
    const auto x1 = clamp_idx(tile_x_of(std::clamp(box.max_lon, -180.0, 180.0), z));
    const auto y0 = clamp_idx(tile_y_of(box.max_lat, z));
    const auto y1 = clamp_idx(tile_y_of(box.min_lat, z));
    std::vector<TileIndex> out;
    out.reserve(static_cast<std::size_t>((x1 - x0 + 1) * (y1 - y0 + 1)));
    for (auto y = y0; y <= y1; ++y)
        for (auto x = x0; x <= x1; ++x) out.push_back({z, x, y});
    return out;
}

// ---------------------------------------------------------------------------
// Elevation

inline ElevationGrid parse_elevation(std::string_view text) {
    ElevationGrid g;
    std::optional<double> xll, yll, cellsize;
    bool center_registered = false;
    std::optional<long long> nrows, ncols;

    std::size_t pos = 0, line_no = 0;
    std::vector<double> values;
    bool in_header = true;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        ++line_no;
        line = fmt::trim(line);
        if (line.empty()) continue;

        if (in_header && std::isalpha(static_cast<unsigned char>(line[0]))) {
            auto sp = line.find_first_of(" \t");
            if (sp == std::string_view::npos) throw parse_error("header line without value", line_no);
            std::string key(line.substr(0, sp));
            for (auto& c : key) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            auto val = line.substr(sp + 1);
            if (key == "ncols") ncols = fmt::to_int(val, key, line_no);
            else if (key == "nrows") nrows = fmt::to_int(val, key, line_no);
            else if (key == "xllcorner") xll = fmt::to_double(val, key, line_no);
            else if (key == "yllcorner") yll = fmt::to_double(val, key, line_no);
            else if (key == "xllcenter") xll = fmt::to_double(val, key, line_no), center_registered = true;
            else if (key == "yllcenter") yll = fmt::to_double(val, key, line_no), center_registered = true;
            else if (key == "cellsize") cellsize = fmt::to_double(val, key, line_no);
            else if (key == "nodata_value") g.nodata = fmt::to_double(val, key, line_no);
            else throw parse_error("unknown header key '" + key + "'", line_no);
            continue;
        }
        in_header = false;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
            auto j = i;
            while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
            if (j > i) values.push_back(fmt::to_double(line.substr(i, j - i), "grid value", line_no));
            i = j;
        }
    }
    if (!ncols || !nrows || !xll || !yll || !cellsize)
        throw parse_error("incomplete ESRI ASCII header (ncols, nrows, xllcorner, yllcorner, cellsize)");
    if (*ncols < 2 || *nrows < 2) throw parse_error("grid must have at least 2 rows and 2 columns");
    if (!(*cellsize > 0)) throw parse_error("cellsize must be positive");
    const auto expected = static_cast<std::size_t>(*ncols * *nrows);
    if (values.size() != expected)
        throw parse_error("grid has " + std::to_string(values.size()) + " values, header declares " +
                          std::to_string(expected), line_no);

    g.ncols = static_cast<int>(*ncols);
    g.nrows = static_cast<int>(*nrows);
    g.cell_size = *cellsize;
    g.origin = {*xll, *yll};
    if (center_registered) g.origin = {*xll - 0.5 * *cellsize, *yll - 0.5 * *cellsize};
    g.values = std::move(values);
    return g;
}

inline std::string serialize_elevation(const ElevationGrid& g) {
    std::string out;
    out += "ncols " + std::to_string(g.ncols) + "\n";
    out += "nrows " + std::to_string(g.nrows) + "\n";
    out += "xllcorner " + fmt::exact(g.origin.x) + "\n";
    out += "yllcorner " + fmt::exact(g.origin.y) + "\n";
    out += "cellsize " + fmt::exact(g.cell_size) + "\n";
    out += "NODATA_value " + fmt::exact(g.nodata) + "\n";
    for (int r = 0; r < g.nrows; ++r) {
        for (int c = 0; c < g.ncols; ++c) {
            if (c) out += ' ';
            out += fmt::exact(g.at(r, c));
        }
        out += '\n';
    }
    return out;
}

/// Bilinear interpolation between the four surrounding cell centers. Nodata
/// neighbours are dropped and the remaining weights renormalized.
inline double sample_elevation(const ElevationGrid& g, double x, double y) {
    constexpr double edge_tol = 1e-9;
    const Box2 ext = g.extent();
    if (!ext.contains({x, y}, edge_tol))
        throw geometry_error("elevation query (" + fmt::general(x, 10) + ", " + fmt::general(y, 10) +
                             ") outside grid extent");
    const double fx = std::clamp((x - g.node_x(0)) / g.cell_size, 0.0, g.ncols - 1.0);
    // Fractional row counted from the top row downwards.
    const double fy = std::clamp((g.node_y(0) - y) / g.cell_size, 0.0, g.nrows - 1.0);
    const int c0 = std::min(static_cast<int>(fx), g.ncols - 2);
    const int r0 = std::min(static_cast<int>(fy), g.nrows - 2);
    const double tx = fx - c0, ty = fy - r0;

    const std::array<double, 4> w{(1 - tx) * (1 - ty), tx * (1 - ty), (1 - tx) * ty, tx * ty};
    const std::array<std::pair<int, int>, 4> cells{{{r0, c0}, {r0, c0 + 1}, {r0 + 1, c0}, {r0 + 1, c0 + 1}}};
    double acc = 0, wsum = 0;
    for (std::size_t k = 0; k < 4; ++k) {
        if (w[k] == 0 || g.is_nodata(cells[k].first, cells[k].second)) continue;
        acc += w[k] * g.at(cells[k].first, cells[k].second);
        wsum += w[k];
    }
    if (wsum == 0)
        throw geometry_error("elevation query (" + fmt::general(x, 10) + ", " + fmt::general(y, 10) +
                             ") has only nodata neighbours");
    return acc / wsum;
}

// ---------------------------------------------------------------------------
// Weather

namespace detail {

// Accepts YYYY-MM-DDTHH:MM[:SS][Z|+HH:MM|-HH:MM]; a missing zone means UTC.
inline std::int64_t parse_iso8601(std::string_view s, std::size_t line) {
    s = fmt::trim(s);
    auto num = [&](std::size_t at, std::size_t len) -> int {
        if (at + len > s.size()) throw parse_error("truncated timestamp '" + std::string(s) + "'", line);
        int v = 0;
        for (std::size_t i = at; i < at + len; ++i) {
            if (!std::isdigit(static_cast<unsigned char>(s[i])))
                throw parse_error("invalid timestamp '" + std::string(s) + "'", line);
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    auto expect = [&](std::size_t at, char c) {
        if (at >= s.size() || (s[at] != c && !(c == 'T' && s[at] == ' ')))
            throw parse_error("invalid timestamp '" + std::string(s) + "'", line);
    };
    const int year = num(0, 4);
    expect(4, '-');
    const int month = num(5, 2);
    expect(7, '-');
    const int day = num(8, 2);
    expect(10, 'T');
    const int hour = num(11, 2);
    expect(13, ':');
    const int minute = num(14, 2);
    std::size_t at = 16;
    int second = 0;
    if (at < s.size() && s[at] == ':') {
        second = num(at + 1, 2);
        at += 3;
    }
    int offset_s = 0;
    if (at < s.size()) {
        if (s[at] == 'Z' && at + 1 == s.size()) {
        } else if ((s[at] == '+' || s[at] == '-') && at + 6 == s.size() && s[at + 3] == ':') {
            offset_s = (num(at + 1, 2) * 3600 + num(at + 4, 2) * 60) * (s[at] == '+' ? 1 : -1);
        } else {
            throw parse_error("invalid timestamp zone in '" + std::string(s) + "'", line);
        }
    }
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (!ymd.ok() || hour > 23 || minute > 59 || second > 60)
        throw parse_error("invalid calendar time '" + std::string(s) + "'", line);
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<std::int64_t>(days) * 86400 + hour * 3600 + minute * 60 + second - offset_s;
}

} // namespace detail

inline std::string format_iso8601(std::int64_t t) {
    using namespace std::chrono;
    auto days = static_cast<int>(std::floor(static_cast<double>(t) / 86400.0));
    std::int64_t rem = t - std::int64_t{days} * 86400;
    const year_month_day ymd{sys_days{std::chrono::days{days}}};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(rem / 3600), static_cast<int>(rem / 60 % 60), static_cast<int>(rem % 60));
    return buf;
}

/// Parses `timestamp,t_out,dni,dhi` CSV. Row numbers in errors count data
/// rows from 1 (the header is row 0).
inline WeatherSeries parse_weather(std::string_view text) {
    WeatherSeries w;
    std::size_t pos = 0, row = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        auto line = text.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos);
        pos = eol == std::string_view::npos ? text.size() : eol + 1;
        line = fmt::trim(line);
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "timestamp,t_out,dni,dhi")
                throw parse_error("weather header must be 'timestamp,t_out,dni,dhi'", 1);
            header_seen = true;
            continue;
        }
        ++row;
        auto cols = fmt::split(line, ',');
        if (cols.size() != 4) throw parse_error("weather row " + std::to_string(row) + " must have 4 columns", row + 1);
        const auto t = detail::parse_iso8601(cols[0], row + 1);
        const double t_out = fmt::to_double(cols[1], "t_out", row + 1);
        const double dni = fmt::to_double(cols[2], "dni", row + 1);
        const double dhi = fmt::to_double(cols[3], "dhi", row + 1);
        if (dni < 0 || dhi < 0)
            throw parse_error("weather row " + std::to_string(row) + ": negative irradiance", row + 1);
        if (w.timestamps.size() == 1) {
            w.step_s = t - w.timestamps[0];
            if (w.step_s <= 0)
                throw parse_error("weather row " + std::to_string(row) + ": timestamps not increasing", row + 1);
        } else if (w.timestamps.size() > 1 && t - w.timestamps.back() != w.step_s) {
            throw parse_error("weather row " + std::to_string(row) + ": non-uniform time step", row + 1);
        }
        w.timestamps.push_back(t);
        w.t_out.push_back(t_out);
        w.dni.push_back(dni);
        w.dhi.push_back(dhi);
    }
    if (w.timestamps.empty()) throw parse_error("weather series is empty");
    return w;
}

inline std::string serialize_weather(const WeatherSeries& w) {
    std::string out = "timestamp,t_out,dni,dhi\n";
    for (std::size_t i = 0; i < w.size(); ++i)
        out += format_iso8601(w.timestamps[i]) + "," + fmt::exact(w.t_out[i]) + "," + fmt::exact(w.dni[i]) +
               "," + fmt::exact(w.dhi[i]) + "\n";
    return out;
}

} // namespace kub
