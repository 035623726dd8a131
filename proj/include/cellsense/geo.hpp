#pragma once

namespace cellsense {

// Mean earth radius used by the equirectangular projection.
inline constexpr double kEarthRadiusM = 6371000.0;

struct GeoPoint {
  double lat = 0.0;  // degrees, [-90, 90]
  double lon = 0.0;  // degrees, [-180, 180]

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

// Metres east (x) and north (y) of a projection origin.
struct LocalPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const LocalPoint&, const LocalPoint&) = default;
};

bool is_valid(const GeoPoint& p) noexcept;

// Throws InvalidInput when p is outside the lat/lon ranges or not finite.
void validate(const GeoPoint& p);

// Equirectangular projection around origin. Both points must be valid and
// within one degree of each other on each axis.
LocalPoint project(const GeoPoint& p, const GeoPoint& origin);

// Exact inverse of project().
GeoPoint unproject(const LocalPoint& p, const GeoPoint& origin);

double distance(const LocalPoint& a, const LocalPoint& b) noexcept;

}  // namespace cellsense
