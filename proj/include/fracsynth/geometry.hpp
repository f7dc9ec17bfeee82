#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fracsynth {

//---------------------------------------------------------------------------//
// Vectors
//---------------------------------------------------------------------------//

//! Position or direction in metres; x = east, y = north, z = up.
struct Vec3 {
    double x = 0, y = 0, z = 0;

    constexpr Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }
    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
constexpr Vec3 operator-(const Vec3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
constexpr Vec3 operator/(Vec3 a, double s) { return a *= (1.0 / s); }
constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }
inline Vec3 normalized(const Vec3& a) { return a / norm(a); }
inline bool is_finite(const Vec3& a) {
    return std::isfinite(a.x) && std::isfinite(a.y) && std::isfinite(a.z);
}
inline Vec3 lerp(const Vec3& a, const Vec3& b, double t) { return a + (b - a) * t; }

//! Any unit vector orthogonal to n.
Vec3 any_orthogonal(const Vec3& n);

struct Vec2 {
    double x = 0, y = 0;
    friend constexpr bool operator==(const Vec2&, const Vec2&) = default;
};
constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

//---------------------------------------------------------------------------//
// Orientations and planes
//---------------------------------------------------------------------------//

//! Plane attitude in degrees: dip in [0, 90], dip direction in [0, 360).
struct Orientation {
    double dip = 0;
    double dip_direction = 0;
};

//! Upward unit normal (sin dip sin dd, sin dip cos dd, cos dip).
Vec3 orientation_to_normal(const Orientation& o);

//! Inverse of orientation_to_normal; downward normals are flipped first.
Orientation normal_to_orientation(const Vec3& n);

//! Trend/plunge (degrees) of a line direction, flipped to plunge downward.
struct TrendPlunge {
    double trend = 0;
    double plunge = 0;
};
TrendPlunge line_trend_plunge(const Vec3& dir);

class Plane {
  public:
    Plane() = default;
    //! Normal is normalised; throws ValidationError on a zero normal.
    Plane(const Vec3& point, const Vec3& normal);

    const Vec3& point() const { return point_; }
    const Vec3& normal() const { return normal_; }
    double signed_distance(const Vec3& p) const { return dot(p - point_, normal_); }
    Vec3 project(const Vec3& p) const { return p - normal_ * signed_distance(p); }

  private:
    Vec3 point_{};
    Vec3 normal_{0, 0, 1};
};

//! Orthonormal in-plane axes used to flatten planar geometry to 2D.
struct PlaneFrame {
    Vec3 origin, u, v, n;

    explicit PlaneFrame(const Plane& plane);
    Vec2 to_2d(const Vec3& p) const { return {dot(p - origin, u), dot(p - origin, v)}; }
    Vec3 to_3d(const Vec2& q) const { return origin + u * q.x + v * q.y; }
};

//---------------------------------------------------------------------------//
// Polygons
//---------------------------------------------------------------------------//

constexpr double kPlanarityTolerance = 1e-6;

//! Planar, simple polygon with at least three vertices.
class Polygon3 {
  public:
    //! Fits the plane by Newell's method; throws ValidationError when the
    //! vertices are too few, non-planar, degenerate, or self-intersecting.
    explicit Polygon3(std::vector<Vec3> vertices);

    //! Regular n-gon of circumradius r centred at c in the plane normal to n.
    static Polygon3 regular(const Vec3& centre, const Vec3& normal, double radius, int sides,
                            double phase = 0.0);

    std::span<const Vec3> vertices() const { return vertices_; }
    const Plane& plane() const { return plane_; }
    std::size_t size() const { return vertices_.size(); }
    double area() const;
    Vec3 centroid() const;
    double bounding_radius() const;  //!< max distance from centroid

    //! Point-in-polygon test in the polygon's plane (boundary within eps counts).
    bool contains_projected(const Vec3& p, double eps) const;

  private:
    Polygon3(std::vector<Vec3> vertices, Plane plane) : vertices_(std::move(vertices)), plane_(plane) {}

    std::vector<Vec3> vertices_;
    Plane plane_;
};

//! Area-weighted centroid of a planar vertex loop.
Vec3 loop_centroid(std::span<const Vec3> loop);

//! Vector area (Newell) of a vertex loop; its length is the loop area.
Vec3 loop_area_vector(std::span<const Vec3> loop);

//! Keep the part of a convex loop where sign * plane.signed_distance >= 0.
std::vector<Vec3> clip_loop(std::span<const Vec3> loop, const Plane& plane, double sign);

//---------------------------------------------------------------------------//
// Boxes and meshes
//---------------------------------------------------------------------------//

struct Aabb {
    Vec3 lo{1e300, 1e300, 1e300};
    Vec3 hi{-1e300, -1e300, -1e300};

    void expand(const Vec3& p);
    void expand(const Aabb& b);
    Aabb inflated(double d) const { return {lo - Vec3{d, d, d}, hi + Vec3{d, d, d}}; }
    bool overlaps(const Aabb& b) const;
    bool contains(const Vec3& p, double eps = 0) const;
    bool empty() const { return lo.x > hi.x; }
    Vec3 centre() const { return (lo + hi) * 0.5; }
    Vec3 extent() const { return hi - lo; }
    double volume() const;
};

//! Convex loop clipped to an axis-aligned box.
std::vector<Vec3> clip_loop_to_box(std::span<const Vec3> loop, const Aabb& box);

using Triangle = std::array<std::uint32_t, 3>;

//! Triangle soup with optional per-vertex UVs. Open surfaces are allowed.
class TriMesh {
  public:
    TriMesh() = default;
    //! Throws ValidationError on out-of-range indices, degenerate
    //! triangles, non-finite vertices, or a UV count mismatch.
    TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
            std::vector<Vec2> uvs = {});

    std::span<const Vec3> vertices() const { return vertices_; }
    std::span<const Triangle> triangles() const { return triangles_; }
    std::span<const Vec2> uvs() const { return uvs_; }
    bool has_uvs() const { return !uvs_.empty(); }
    std::size_t triangle_count() const { return triangles_.size(); }

    std::array<Vec3, 3> corners(std::size_t t) const;
    Vec3 face_normal(std::size_t t) const;  //!< unit, right-hand winding
    double face_area(std::size_t t) const;
    double total_area() const;
    Aabb bounds() const;

    //! Area-weighted unit vertex normals.
    std::vector<Vec3> vertex_normals() const;
    //! Vertices on an edge used by exactly one triangle.
    std::vector<bool> boundary_vertices() const;
    //! For each triangle edge (t, k) joining corners k and k+1, the
    //! neighbouring triangle or -1.
    std::vector<std::array<std::int64_t, 3>> edge_neighbours() const;

    //! Copy with vertices replaced (same topology); degenerate triangles
    //! are dropped.
    TriMesh with_vertices(std::vector<Vec3> vertices) const;

    //! Concatenate meshes.
    static TriMesh merge(std::span<const TriMesh> parts);

  private:
    std::vector<Vec3> vertices_;
    std::vector<Triangle> triangles_;
    std::vector<Vec2> uvs_;
};

struct RayHit {
    double t = 0;
    std::uint32_t triangle = 0;
    double b1 = 0, b2 = 0;  //!< barycentric weights of corners 1 and 2
};

//! Bounding-volume hierarchy over the triangles of a mesh.
class Bvh {
  public:
    explicit Bvh(const TriMesh& mesh);

    //! Triangles whose bounds overlap the query box, in ascending order.
    std::vector<std::uint32_t> query(const Aabb& box) const;

    //! Nearest hit with t in (t_min, t_max).
    std::optional<RayHit> intersect(const Vec3& origin, const Vec3& dir, double t_min = 1e-9,
                                    double t_max = 1e300) const;

    //! Closest triangle to p within max_dist (by point-triangle distance).
    std::optional<std::uint32_t> closest_triangle(const Vec3& p, double max_dist) const;

    const TriMesh& mesh() const { return *mesh_; }

  private:
    struct Node {
        Aabb box;
        std::uint32_t first = 0;  //!< leaf: offset into order_; inner: right child
        std::uint32_t count = 0;  //!< 0 for inner nodes
    };
    std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Aabb>& boxes,
                        std::vector<Vec3>& centres);

    const TriMesh* mesh_;
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;
};

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

//---------------------------------------------------------------------------//
// Intersections
//---------------------------------------------------------------------------//

struct Segment3 {
    Vec3 a, b;
    double length() const { return distance(a, b); }
};

using Polyline3 = std::vector<Vec3>;

double polyline_length(std::span<const Vec3> line);

constexpr double kSnapTolerance = 1e-4;

//! Intersection curve of a planar polygon with a triangle mesh. Where the
//! polygon is coplanar with mesh faces the overlap boundary is returned.
std::vector<Segment3> intersect_polygon_mesh(const Polygon3& f, const TriMesh& m,
                                             double eps = kSnapTolerance);
std::vector<Segment3> intersect_polygon_mesh(const Polygon3& f, const Bvh& bvh,
                                             double eps = kSnapTolerance);

//! Intersection of one triangle with a polygon (non-coplanar case only).
//! Returns at most the pieces of the triangle/plane cut lying in f.
std::vector<Segment3> intersect_polygon_triangle(const Polygon3& f, const Vec3& a, const Vec3& b,
                                                 const Vec3& c, double eps);

//! Portion of segment s whose projection onto f's plane lies inside f.
std::vector<Segment3> clip_segment_to_polygon(const Segment3& s, const Polygon3& f, double eps);

//! Line segment shared by two planar polygons, if any.
std::optional<Segment3> intersect_polygons(const Polygon3& a, const Polygon3& b, double eps);

//! Join segments into maximal polylines. Endpoints within eps are merged;
//! junctions of degree >= 3 stay explicit (polylines pass straight through
//! them pairwise or end there).
std::vector<Polyline3> stitch_segments(std::span<const Segment3> segments,
                                       double eps = kSnapTolerance);

//---------------------------------------------------------------------------//
// OBJ
//---------------------------------------------------------------------------//

void write_obj(std::ostream& os, const TriMesh& mesh);
void write_obj(const std::string& path, const TriMesh& mesh);
TriMesh read_obj(std::istream& is);
TriMesh read_obj(const std::string& path);

}  // namespace fracsynth
