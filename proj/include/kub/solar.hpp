#pragma once

// Sun position, sky-direction grid and plane-of-array irradiance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "error.hpp"
#include "geometry.hpp"

namespace kub {

struct SunDirection {
    double azimuth = 0;  ///< degrees clockwise from north, [0, 360)
    double altitude = 0; ///< degrees above the horizon
};

/// Unit vector towards the sun in the local frame (x east, y north, z up).
inline Vec3 to_vector(const SunDirection& s) {
    const double az = deg2rad(s.azimuth), alt = deg2rad(s.altitude);
    return {std::cos(alt) * std::sin(az), std::cos(alt) * std::cos(az), std::sin(alt)};
}

inline SunDirection from_vector(Vec3 d) {
    d = normalized(d);
    double az = rad2deg(std::atan2(d.x, d.y));
    if (az < 0) az += 360.0;
    if (az >= 360.0) az -= 360.0;
    return {az, rad2deg(std::asin(std::clamp(d.z, -1.0, 1.0)))};
}

/// Low-precision solar ephemeris (mean longitude / anomaly, ecliptic
/// longitude, declination and hour angle). About 0.01 deg over 1950-2050,
/// without refraction. `unix_seconds` is UTC.
inline SunDirection sun_position(double lat_deg, double lon_deg, std::int64_t unix_seconds) {
    const double n = static_cast<double>(unix_seconds) / 86400.0 + 2440587.5 - 2451545.0;
    const double mean_lon = std::fmod(280.460 + 0.9856474 * n, 360.0);
    const double anomaly = deg2rad(std::fmod(357.528 + 0.9856003 * n, 360.0));
    const double ecl_lon = deg2rad(mean_lon + 1.915 * std::sin(anomaly) + 0.020 * std::sin(2 * anomaly));
    const double obliquity = deg2rad(23.439 - 0.0000004 * n);

    const double ra = std::atan2(std::cos(obliquity) * std::sin(ecl_lon), std::cos(ecl_lon));
    const double decl = std::asin(std::sin(obliquity) * std::sin(ecl_lon));
    const double gmst_h = std::fmod(18.697374558 + 24.06570982441908 * n, 24.0);
    const double hour_angle = deg2rad(gmst_h * 15.0 + lon_deg) - ra;

    const double lat = deg2rad(lat_deg);
    const double sin_alt =
        std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
    const double alt = std::asin(std::clamp(sin_alt, -1.0, 1.0));
    double az = std::atan2(-std::sin(hour_angle),
                           std::tan(decl) * std::cos(lat) - std::sin(lat) * std::cos(hour_angle));
    az = rad2deg(az);
    az = std::fmod(az + 360.0, 360.0);
    return {az, rad2deg(alt)};
}

/// Sky discretization: azimuth [0, 360) x altitude [0, 90] in equal-angle bins.
struct SkyGrid {
    int n_az = 72;
    int n_alt = 10;

    SkyGrid() = default;
    SkyGrid(int az, int alt) : n_az(az), n_alt(alt) {
        if (az < 4 || alt < 2) throw config_error("sky grid needs at least 4 azimuth and 2 altitude bins");
    }

    std::size_t size() const { return static_cast<std::size_t>(n_az) * static_cast<std::size_t>(n_alt); }
    double az_step() const { return 360.0 / n_az; }
    double alt_step() const { return 90.0 / n_alt; }

    SunDirection center(int i_az, int i_alt) const {
        return {(i_az + 0.5) * az_step(), (i_alt + 0.5) * alt_step()};
    }
    /// Solid angle of an altitude row (steradians per bin).
    double solid_angle(int i_alt) const {
        return deg2rad(az_step()) *
               (std::sin(deg2rad((i_alt + 1) * alt_step())) - std::sin(deg2rad(i_alt * alt_step())));
    }
};

struct SkyBin {
    int az = 0, alt = 0;
    friend bool operator==(const SkyBin&, const SkyBin&) = default;
};

/// Bin containing `dir`, or nullopt when the sun is below the horizon.
inline std::optional<SkyBin> grid_bin(const SkyGrid& g, const SunDirection& dir) {
    if (dir.altitude < 0) return std::nullopt;
    double az = std::fmod(dir.azimuth, 360.0);
    if (az < 0) az += 360.0;
    const int i = std::min(static_cast<int>(az / g.az_step()), g.n_az - 1);
    const int j = std::min(static_cast<int>(std::min(dir.altitude, 90.0) / g.alt_step()), g.n_alt - 1);
    return SkyBin{i, j};
}

/// Direct beam on a tilted face (attenuated by `blocked`) plus isotropic
/// diffuse scaled by the face's sky view fraction.
inline double face_irradiance(Vec3 normal, const SunDirection& sun, double dni, double dhi, double blocked,
                              double sky_view) {
    double direct = 0;
    if (sun.altitude >= 0) direct = dni * std::max(0.0, dot(to_vector(sun), normal)) * (1.0 - blocked);
    return direct + dhi * sky_view;
}

/// Cosine-weighted unblocked fraction of the sky seen by a face:
/// (1/pi) * sum over bins of (1 - blocked) * integral of max(0, n.d) dw.
/// `blocked` is indexed [az * n_alt + alt]. Each bin is integrated with a
/// `sub` x `sub` midpoint rule in (azimuth, sin altitude).
inline double sky_view_factor(Vec3 normal, const SkyGrid& g, const std::vector<double>& blocked, int sub = 4) {
    double acc = 0;
    for (int i = 0; i < g.n_az; ++i)
        for (int j = 0; j < g.n_alt; ++j) {
            const double open = 1.0 - blocked[static_cast<std::size_t>(i) * g.n_alt + j];
            if (open <= 0) continue;
            const double s0 = std::sin(deg2rad(j * g.alt_step())), s1 = std::sin(deg2rad((j + 1) * g.alt_step()));
            double cos_sum = 0;
            for (int a = 0; a < sub; ++a)
                for (int b = 0; b < sub; ++b) {
                    const double az = (i + (a + 0.5) / sub) * g.az_step();
                    const double alt = rad2deg(std::asin(s0 + (s1 - s0) * (b + 0.5) / sub));
                    cos_sum += std::max(0.0, dot(to_vector({az, alt}), normal));
                }
            acc += open * cos_sum / (sub * sub) * g.solid_angle(j);
        }
    return std::clamp(acc / pi, 0.0, 1.0);
}

} // namespace kub
