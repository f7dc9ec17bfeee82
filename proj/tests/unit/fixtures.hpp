#pragma once

#include <cmath>
#include <vector>

#include "fracsynth/geometry.hpp"
#include "fracsynth/rng.hpp"

namespace fracsynth::testing {

//! Closed surface of an axis-aligned box, outward-facing triangles.
inline TriMesh box_surface(const Vec3& lo, const Vec3& hi) {
    std::vector<Vec3> v;
    for (int i = 0; i < 8; ++i) {
        v.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
    }
    std::vector<Triangle> t = {
        {0, 2, 1}, {1, 2, 3},  // z-
        {4, 5, 6}, {5, 7, 6},  // z+
        {0, 1, 4}, {1, 5, 4},  // y-
        {2, 6, 3}, {3, 6, 7},  // y+
        {0, 4, 2}, {2, 4, 6},  // x-
        {1, 3, 5}, {3, 7, 5},  // x+
    };
    return TriMesh(std::move(v), std::move(t));
}

//! Axis-aligned square polygon in the plane z = h.
inline Polygon3 square_at_z(double lo, double hi, double h) {
    return Polygon3({{lo, lo, h}, {hi, lo, h}, {hi, hi, h}, {lo, hi, h}});
}

//! Planar rectangular grid mesh on the plane through `origin` spanned by u, v.
inline TriMesh grid_mesh(const Vec3& origin, const Vec3& u, const Vec3& v, int nu, int nv) {
    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    for (int j = 0; j <= nv; ++j)
        for (int i = 0; i <= nu; ++i) verts.push_back(origin + u * (double(i) / nu) + v * (double(j) / nv));
    auto id = [&](int i, int j) { return static_cast<std::uint32_t>(j * (nu + 1) + i); };
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            tris.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            tris.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return TriMesh(std::move(verts), std::move(tris));
}

struct RigidTransform {
    double r[3][3];
    Vec3 t;

    Vec3 operator()(const Vec3& p) const {
        return {r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z + t.x,
                r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z + t.y,
                r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z + t.z};
    }

    static RigidTransform random(Rng& rng) {
        // Rotation from a random unit quaternion.
        double q[4];
        double n = 0;
        for (double& c : q) {
            c = rng.normal();
            n += c * c;
        }
        n = std::sqrt(n);
        for (double& c : q) c /= n;
        auto [w, x, y, z] = q;
        RigidTransform tr{};
        tr.r[0][0] = 1 - 2 * (y * y + z * z);
        tr.r[0][1] = 2 * (x * y - z * w);
        tr.r[0][2] = 2 * (x * z + y * w);
        tr.r[1][0] = 2 * (x * y + z * w);
        tr.r[1][1] = 1 - 2 * (x * x + z * z);
        tr.r[1][2] = 2 * (y * z - x * w);
        tr.r[2][0] = 2 * (x * z - y * w);
        tr.r[2][1] = 2 * (y * z + x * w);
        tr.r[2][2] = 1 - 2 * (x * x + y * y);
        tr.t = {rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
        return tr;
    }

    TriMesh apply(const TriMesh& m) const {
        std::vector<Vec3> v;
        for (const auto& p : m.vertices()) v.push_back((*this)(p));
        return TriMesh(std::move(v), {m.triangles().begin(), m.triangles().end()},
                       {m.uvs().begin(), m.uvs().end()});
    }

    Polygon3 apply(const Polygon3& f) const {
        std::vector<Vec3> v;
        for (const auto& p : f.vertices()) v.push_back((*this)(p));
        return Polygon3(std::move(v));
    }
};

inline double total_length(const std::vector<Segment3>& segs) {
    double s = 0;
    for (const auto& g : segs) s += g.length();
    return s;
}

}  // namespace fracsynth::testing
