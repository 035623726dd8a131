#include "cellsense/geo.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cellsense/error.hpp"

namespace cellsense {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

// Largest per-axis offset from the origin accepted by project().
constexpr double kMaxSpanDeg = 1.0;

}  // namespace

bool is_valid(const GeoPoint& p) noexcept {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 &&
         p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

void validate(const GeoPoint& p) {
  if (!is_valid(p)) {
    throw InvalidInput("coordinate out of range: lat=" + std::to_string(p.lat) +
                       " lon=" + std::to_string(p.lon));
  }
}

LocalPoint project(const GeoPoint& p, const GeoPoint& origin) {
  validate(p);
  validate(origin);
  const double dlat = p.lat - origin.lat;
  const double dlon = p.lon - origin.lon;
  if (std::abs(dlat) >= kMaxSpanDeg || std::abs(dlon) >= kMaxSpanDeg) {
    throw InvalidInput("point is more than one degree from the projection origin");
  }
  return {kEarthRadiusM * dlon * kDegToRad * std::cos(origin.lat * kDegToRad),
          kEarthRadiusM * dlat * kDegToRad};
}

GeoPoint unproject(const LocalPoint& p, const GeoPoint& origin) {
  validate(origin);
  const double cos_lat = std::cos(origin.lat * kDegToRad);
  return {origin.lat + p.y / (kEarthRadiusM * kDegToRad),
          origin.lon + p.x / (kEarthRadiusM * kDegToRad * cos_lat)};
}

double distance(const LocalPoint& a, const LocalPoint& b) noexcept {
  return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace cellsense
