#pragma once

#include "aqnet/common.hpp"

namespace aqnet {

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// WGS-84 position in degrees.
struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool valid() const { return lat >= -90.0 && lat <= 90.0 && lon >= -180.0 && lon <= 180.0; }
    bool operator==(const GeoPoint&) const = default;
};

/// Great-circle distance in meters.
double haversine(GeoPoint p1, GeoPoint p2);

/// Axis-aligned lat/lon box.
struct BBox {
    GeoPoint south_west;
    GeoPoint north_east;

    /// Box of the given metric size centred on `center` (local equirectangular scale).
    static BBox around(GeoPoint center, double width_m, double height_m);

    bool contains(GeoPoint p) const {
        return p.lat >= south_west.lat && p.lat <= north_east.lat && p.lon >= south_west.lon &&
               p.lon <= north_east.lon;
    }
    GeoPoint center() const {
        return {(south_west.lat + north_east.lat) / 2.0, (south_west.lon + north_east.lon) / 2.0};
    }
    bool degenerate() const {
        return !(north_east.lat > south_west.lat) || !(north_east.lon > south_west.lon);
    }
    double width_m() const;
    double height_m() const;

    bool operator==(const BBox&) const = default;
};

/// East/north offsets in meters of `p` relative to `origin` on a local tangent plane.
struct LocalXY {
    double x = 0.0;
    double y = 0.0;
};

LocalXY to_local(GeoPoint origin, GeoPoint p);
GeoPoint from_local(GeoPoint origin, LocalXY xy);

}  // namespace aqnet
