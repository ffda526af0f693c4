#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <utility>

#include "sigloss/errors.hpp"
#include "sigloss/rng.hpp"

namespace sigloss::geo {

// Millidegree grid cell key. Integer keys keep grouping exact; 0.001 degree
// is roughly 111 m north-south.
struct GeoPixel {
  int64_t lat_milli = 0;
  int64_t lon_milli = 0;

  friend auto operator<=>(const GeoPixel&, const GeoPixel&) = default;
};

struct GeoPixelHash {
  size_t operator()(const GeoPixel& p) const noexcept {
    return static_cast<size_t>(rng::splitmix64(
        static_cast<uint64_t>(p.lat_milli) * 0x9ddfea08eb382d69ULL ^
        static_cast<uint64_t>(p.lon_milli)));
  }
};

enum class CoordMode {
  Strict,      // lat in [-90, 90], lon in [-180, 180]
  Permissive,  // any finite value whose millidegree key fits in int64
};

class CoordinateError : public Error {
 public:
  enum class Kind { NotFinite, OutOfRange };

  CoordinateError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Round half away from zero, the mode used for the grid keys and for the
// query-side round() binds. Ties at .0005 degrees go away from zero.
inline int64_t round_half_away(double value) {
  return std::llround(value);
}

inline int64_t to_millidegrees(double degrees) {
  if (!std::isfinite(degrees))
    throw CoordinateError(CoordinateError::Kind::NotFinite,
                          "coordinate is not a finite number");
  if (std::abs(degrees) > 9.0e15)
    throw CoordinateError(CoordinateError::Kind::OutOfRange,
                          "coordinate exceeds representable grid range");
  return round_half_away(degrees * 1000.0);
}

inline GeoPixel pixel_of(double lat, double lon,
                         CoordMode mode = CoordMode::Permissive) {
  if (!std::isfinite(lat) || !std::isfinite(lon))
    throw CoordinateError(CoordinateError::Kind::NotFinite,
                          "coordinate is not a finite number");
  if (mode == CoordMode::Strict) {
    if (lat < -90.0 || lat > 90.0)
      throw CoordinateError(CoordinateError::Kind::OutOfRange,
                            "latitude outside [-90, 90]");
    if (lon < -180.0 || lon > 180.0)
      throw CoordinateError(CoordinateError::Kind::OutOfRange,
                            "longitude outside [-180, 180]");
  }
  return GeoPixel{to_millidegrees(lat), to_millidegrees(lon)};
}

// Center of a pixel in decimal degrees; pixel_of(center_of(p)) == p.
inline std::pair<double, double> center_of(const GeoPixel& p) {
  return {static_cast<double>(p.lat_milli) / 1000.0,
          static_cast<double>(p.lon_milli) / 1000.0};
}

inline constexpr double kMetersPerDegree = 111320.0;
inline constexpr double kPi = 3.14159265358979323846;

struct PixelExtent {
  double east_west_m = 0.0;
  double north_south_m = 0.0;
};

// Physical size of one 0.001-degree cell at the given latitude. East-west
// extent shrinks with cos(lat); north-south is latitude-independent.
inline PixelExtent pixel_extent_meters(double lat) {
  if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0)
    throw CoordinateError(CoordinateError::Kind::OutOfRange,
                          "latitude outside [-90, 90]");
  double per_millidegree = kMetersPerDegree * 0.001;
  double ew = per_millidegree * std::cos(lat * kPi / 180.0);
  if (ew < 0.0) ew = 0.0;  // cos(90 deg) rounds to a tiny negative
  return PixelExtent{ew, per_millidegree};
}

}  // namespace sigloss::geo
