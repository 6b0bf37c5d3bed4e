#include "aqnet/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace aqnet {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
}

double haversine(GeoPoint p1, GeoPoint p2) {
    const double phi1 = p1.lat * kDegToRad;
    const double phi2 = p2.lat * kDegToRad;
    const double dphi = (p2.lat - p1.lat) * kDegToRad;
    const double dlambda = (p2.lon - p1.lon) * kDegToRad;
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(std::min(1.0, h)));
}

LocalXY to_local(GeoPoint origin, GeoPoint p) {
    const double cos_lat = std::cos(origin.lat * kDegToRad);
    return {(p.lon - origin.lon) * kDegToRad * kEarthRadiusM * cos_lat,
            (p.lat - origin.lat) * kDegToRad * kEarthRadiusM};
}

GeoPoint from_local(GeoPoint origin, LocalXY xy) {
    const double cos_lat = std::cos(origin.lat * kDegToRad);
    return {origin.lat + xy.y / (kEarthRadiusM * kDegToRad),
            origin.lon + xy.x / (kEarthRadiusM * kDegToRad * cos_lat)};
}

BBox BBox::around(GeoPoint center, double width_m, double height_m) {
    const GeoPoint sw = from_local(center, {-width_m / 2.0, -height_m / 2.0});
    const GeoPoint ne = from_local(center, {width_m / 2.0, height_m / 2.0});
    return {sw, ne};
}

double BBox::width_m() const {
    const GeoPoint c = center();
    return to_local(c, {c.lat, north_east.lon}).x - to_local(c, {c.lat, south_west.lon}).x;
}

double BBox::height_m() const {
    return (north_east.lat - south_west.lat) * kDegToRad * kEarthRadiusM;
}

}  // namespace aqnet
