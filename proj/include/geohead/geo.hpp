#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "geohead/errors.hpp"

namespace geohead {

// Mean Earth radius used by all great-circle distances.
inline constexpr double kEarthRadiusKm = 6371.0;

// WGS84 degrees treated as planar x/y on an equirectangular map. Labels must
// stay inside lon [-180, 180], lat [-90, 90]; model outputs may leave the
// window during training and are clamped only when reported.
struct GeoPoint {
  double lon = 0.0;
  double lat = 0.0;
};

inline bool is_finite(const GeoPoint& p) {
  return std::isfinite(p.lon) && std::isfinite(p.lat);
}

inline bool in_valid_range(const GeoPoint& p) {
  return is_finite(p) && p.lon >= -180.0 && p.lon <= 180.0 &&
         p.lat >= -90.0 && p.lat <= 90.0;
}

inline void require_finite(const GeoPoint& p, const char* what) {
  if (!is_finite(p)) {
    throw std::invalid_argument(std::string(what) + ": non-finite coordinate");
  }
}

// Training-space distance: squared Euclidean in degrees on the planar map.
// Deliberately does not wrap longitude; (-179, 0) to (179, 0) is 358 degrees
// apart here even though the great-circle distance is small.
inline double squared_euclidean_deg(const GeoPoint& a, const GeoPoint& b) {
  require_finite(a, "squared_euclidean_deg");
  require_finite(b, "squared_euclidean_deg");
  const double dlon = a.lon - b.lon;
  const double dlat = a.lat - b.lat;
  return dlon * dlon + dlat * dlat;
}

inline double deg_to_rad(double deg) {
  return deg * std::numbers::pi / 180.0;
}

// Evaluation-space distance: great-circle kilometers on a sphere of radius
// kEarthRadiusKm.
inline double haversine_km(const GeoPoint& a, const GeoPoint& b) {
  require_finite(a, "haversine_km");
  require_finite(b, "haversine_km");
  const double phi1 = deg_to_rad(a.lat);
  const double phi2 = deg_to_rad(b.lat);
  const double dphi = deg_to_rad(b.lat - a.lat);
  const double dlam = deg_to_rad(b.lon - a.lon);
  const double sp = std::sin(0.5 * dphi);
  const double sl = std::sin(0.5 * dlam);
  double h = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

// Clamp into the valid lon/lat window, counting the event when requested.
// Used at reporting boundaries only; losses see the raw prediction.
inline GeoPoint clamp_to_valid(const GeoPoint& p, long* clamp_events = nullptr) {
  require_finite(p, "clamp_to_valid");
  const GeoPoint q{std::clamp(p.lon, -180.0, 180.0),
                   std::clamp(p.lat, -90.0, 90.0)};
  if (clamp_events != nullptr && (q.lon != p.lon || q.lat != p.lat)) {
    ++*clamp_events;
  }
  return q;
}

}  // namespace geohead
