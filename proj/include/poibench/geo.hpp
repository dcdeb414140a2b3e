#pragma once

#include <cmath>

namespace poibench {

inline constexpr double kEarthRadiusKm = 6371.0;

/// Great-circle distance in kilometres (haversine form, stable for small
/// separations where the spherical law of cosines loses precision).
inline double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double deg = 3.14159265358979323846 / 180.0;
  const double phi1 = lat1 * deg;
  const double phi2 = lat2 * deg;
  const double dphi = (lat2 - lat1) * deg;
  const double dlam = (lon2 - lon1) * deg;
  const double s1 = std::sin(dphi / 2.0);
  const double s2 = std::sin(dlam / 2.0);
  const double a = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

}  // namespace poibench
