#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

namespace beamsel {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

// Axis-aligned box with positive volume.
struct Box {
    Vec3 lo, hi;

    bool valid() const { return lo.x < hi.x && lo.y < hi.y && lo.z < hi.z; }
    Vec3 center() const { return {(lo.x + hi.x) / 2, (lo.y + hi.y) / 2, (lo.z + hi.z) / 2}; }
    double diagonal() const { return distance(lo, hi); }

    bool contains(const Vec3& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z &&
               p.z <= hi.z;
    }

    bool overlaps(const Box& o) const {
        return lo.x < o.hi.x && o.lo.x < hi.x && lo.y < o.hi.y && o.lo.y < hi.y && lo.z < o.hi.z &&
               o.lo.z < hi.z;
    }

    // Distance from a point to the box surface; ~0 for points on the boundary.
    double surface_distance(const Vec3& p) const {
        const double dx = std::max({lo.x - p.x, 0.0, p.x - hi.x});
        const double dy = std::max({lo.y - p.y, 0.0, p.y - hi.y});
        const double dz = std::max({lo.z - p.z, 0.0, p.z - hi.z});
        const double outside = std::sqrt(dx * dx + dy * dy + dz * dz);
        if (outside > 0.0) return outside;
        const double ix = std::min(p.x - lo.x, hi.x - p.x);
        const double iy = std::min(p.y - lo.y, hi.y - p.y);
        const double iz = std::min(p.z - lo.z, hi.z - p.z);
        return std::min({ix, iy, iz});
    }
};

// Slab-method parametric intersection of the ray origin + t*dir with a box.
// Returns the entry/exit parameters when the intersection interval is
// nonempty, without clamping to t >= 0.
inline std::optional<std::pair<double, double>> ray_box_interval(const Vec3& origin,
                                                                 const Vec3& dir, const Box& b) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    const double o[3] = {origin.x, origin.y, origin.z};
    const double d[3] = {dir.x, dir.y, dir.z};
    const double lo[3] = {b.lo.x, b.lo.y, b.lo.z};
    const double hi[3] = {b.hi.x, b.hi.y, b.hi.z};
    for (int i = 0; i < 3; ++i) {
        if (d[i] == 0.0) {
            if (o[i] < lo[i] || o[i] > hi[i]) return std::nullopt;
            continue;
        }
        double a = (lo[i] - o[i]) / d[i];
        double c = (hi[i] - o[i]) / d[i];
        if (a > c) std::swap(a, c);
        t0 = std::max(t0, a);
        t1 = std::min(t1, c);
        if (t0 > t1) return std::nullopt;
    }
    return std::make_pair(t0, t1);
}

// Whether the open segment a->b passes through the box interior. Endpoints
// touching the surface do not count as blockage.
inline bool segment_blocked(const Vec3& a, const Vec3& b, const Box& box, double eps = 1e-9) {
    const Vec3 dir = b - a;
    auto iv = ray_box_interval(a, dir, box);
    if (!iv) return false;
    const double t0 = std::max(iv->first, eps);
    const double t1 = std::min(iv->second, 1.0 - eps);
    return t0 < t1;
}

// First hit of the ray origin + t*dir (t > 0) with the box, or nothing.
inline std::optional<double> ray_box_hit(const Vec3& origin, const Vec3& dir, const Box& b) {
    auto iv = ray_box_interval(origin, dir, b);
    if (!iv) return std::nullopt;
    if (iv->second < 0.0) return std::nullopt;
    return std::max(iv->first, 0.0);
}

}  // namespace beamsel
