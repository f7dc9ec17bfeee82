#include "fracsynth/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fracsynth/error.hpp"

namespace fracsynth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double wrap_degrees(double a) {
    a = std::fmod(a, 360.0);
    if (a < 0) a += 360.0;
    if (a >= 360.0) a -= 360.0;
    return a;
}

}  // namespace

Vec3 any_orthogonal(const Vec3& n) {
    Vec3 axis = std::abs(n.x) <= std::abs(n.y) && std::abs(n.x) <= std::abs(n.z)
                    ? Vec3{1, 0, 0}
                    : (std::abs(n.y) <= std::abs(n.z) ? Vec3{0, 1, 0} : Vec3{0, 0, 1});
    return normalized(cross(n, axis));
}

//---------------------------------------------------------------------------//
// Orientation
//---------------------------------------------------------------------------//

Vec3 orientation_to_normal(const Orientation& o) {
    require(std::isfinite(o.dip) && o.dip >= 0.0 && o.dip <= 90.0, "dip must lie in [0, 90] degrees");
    require(std::isfinite(o.dip_direction) && o.dip_direction >= 0.0 && o.dip_direction < 360.0,
            "dip direction must lie in [0, 360) degrees");
    double d = o.dip * kDeg, dd = o.dip_direction * kDeg;
    return {std::sin(d) * std::sin(dd), std::sin(d) * std::cos(dd), std::cos(d)};
}

Orientation normal_to_orientation(const Vec3& n_in) {
    require(is_finite(n_in) && norm(n_in) > 0, "normal must be a finite nonzero vector");
    Vec3 n = normalized(n_in);
    if (n.z < 0) n = -n;
    double h = std::hypot(n.x, n.y);
    Orientation o;
    o.dip = std::atan2(h, n.z) / kDeg;
    o.dip_direction = h < 1e-15 ? 0.0 : wrap_degrees(std::atan2(n.x, n.y) / kDeg);
    return o;
}

TrendPlunge line_trend_plunge(const Vec3& dir_in) {
    Vec3 d = normalized(dir_in);
    if (d.z > 0) d = -d;
    double h = std::hypot(d.x, d.y);
    TrendPlunge tp;
    tp.plunge = std::atan2(-d.z, h) / kDeg;
    tp.trend = h < 1e-15 ? 0.0 : wrap_degrees(std::atan2(d.x, d.y) / kDeg);
    return tp;
}

Plane::Plane(const Vec3& point, const Vec3& normal) : point_(point) {
    double len = norm(normal);
    require(std::isfinite(len) && len > 1e-300, "plane normal must be nonzero");
    normal_ = normal / len;
}

PlaneFrame::PlaneFrame(const Plane& plane)
    : origin(plane.point()), u(any_orthogonal(plane.normal())), n(plane.normal()) {
    v = cross(n, u);
}

//---------------------------------------------------------------------------//
// Polygons
//---------------------------------------------------------------------------//

Vec3 loop_area_vector(std::span<const Vec3> loop) {
    Vec3 acc{};
    if (loop.size() < 3) return acc;
    const Vec3& o = loop[0];
    for (std::size_t i = 1; i + 1 < loop.size(); ++i) acc += cross(loop[i] - o, loop[i + 1] - o);
    return acc * 0.5;
}

Vec3 loop_centroid(std::span<const Vec3> loop) {
    if (loop.empty()) return {};
    Vec3 avg{};
    for (const auto& p : loop) avg += p;
    avg = avg / static_cast<double>(loop.size());
    if (loop.size() < 3) return avg;
    Vec3 total = loop_area_vector(loop);
    double tn = dot(total, total);
    if (tn <= 0) return avg;
    Vec3 acc{};
    double wsum = 0;
    for (std::size_t i = 0; i < loop.size(); ++i) {
        const Vec3& a = loop[i];
        const Vec3& b = loop[(i + 1) % loop.size()];
        double w = dot(cross(a - avg, b - avg), total) / 2.0;
        acc += (avg + a + b) * (w / 3.0);
        wsum += w;
    }
    return std::abs(wsum) > 0 ? acc / wsum : avg;
}

namespace {

bool segments_cross_2d(Vec2 p0, Vec2 p1, Vec2 q0, Vec2 q1) {
    auto orient = [](Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); };
    double d1 = orient(q0, q1, p0), d2 = orient(q0, q1, p1);
    double d3 = orient(p0, p1, q0), d4 = orient(p0, p1, q1);
    return ((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0));
}

double point_segment_distance_2d(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 ab = b - a;
    double len2 = dot(ab, ab);
    double t = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    return norm(p - (a + ab * t));
}

bool inside_2d(std::span<const Vec2> poly, Vec2 p) {
    bool in = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            double x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if (p.x < x) in = !in;
        }
    }
    return in;
}

}  // namespace

Polygon3::Polygon3(std::vector<Vec3> vertices) {
    require(vertices.size() >= 3, "polygon needs at least three vertices");
    for (const auto& v : vertices) require(is_finite(v), "polygon vertices must be finite");
    Vec3 area = loop_area_vector(vertices);
    double a = norm(area);
    require(a > 1e-14, "polygon is degenerate (zero area)");
    Vec3 c{};
    for (const auto& v : vertices) c += v;
    c = c / static_cast<double>(vertices.size());
    Plane plane(c, area);
    for (const auto& v : vertices) {
        require(std::abs(plane.signed_distance(v)) <= kPlanarityTolerance,
                "polygon vertices are not coplanar");
    }
    PlaneFrame frame(plane);
    std::vector<Vec2> flat;
    flat.reserve(vertices.size());
    for (const auto& v : vertices) flat.push_back(frame.to_2d(v));
    std::size_t n = flat.size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 2; j < n; ++j) {
            if (i == 0 && j == n - 1) continue;
            require(!segments_cross_2d(flat[i], flat[(i + 1) % n], flat[j], flat[(j + 1) % n]),
                    "polygon is self-intersecting");
        }
    }
    vertices_ = std::move(vertices);
    plane_ = plane;
}

Polygon3 Polygon3::regular(const Vec3& centre, const Vec3& normal, double radius, int sides,
                           double phase) {
    require(sides >= 3, "regular polygon needs at least three sides");
    require(radius > 0 && std::isfinite(radius), "regular polygon radius must be positive");
    Plane plane(centre, normal);
    PlaneFrame frame(plane);
    std::vector<Vec3> v;
    v.reserve(static_cast<std::size_t>(sides));
    for (int k = 0; k < sides; ++k) {
        double a = phase + 2.0 * std::numbers::pi * k / sides;
        v.push_back(centre + frame.u * (radius * std::cos(a)) + frame.v * (radius * std::sin(a)));
    }
    return Polygon3(std::move(v), plane);
}

double Polygon3::area() const { return norm(loop_area_vector(vertices_)); }

Vec3 Polygon3::centroid() const { return loop_centroid(vertices_); }

double Polygon3::bounding_radius() const {
    Vec3 c = centroid();
    double r = 0;
    for (const auto& v : vertices_) r = std::max(r, distance(v, c));
    return r;
}

bool Polygon3::contains_projected(const Vec3& p, double eps) const {
    PlaneFrame frame(plane_);
    std::vector<Vec2> flat;
    flat.reserve(vertices_.size());
    for (const auto& v : vertices_) flat.push_back(frame.to_2d(v));
    Vec2 q = frame.to_2d(p);
    if (inside_2d(flat, q)) return true;
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (point_segment_distance_2d(q, flat[i], flat[(i + 1) % flat.size()]) <= eps) return true;
    }
    return false;
}

std::vector<Vec3> clip_loop(std::span<const Vec3> loop, const Plane& plane, double sign) {
    std::vector<Vec3> out;
    if (loop.empty()) return out;
    out.reserve(loop.size() + 2);
    for (std::size_t i = 0; i < loop.size(); ++i) {
        const Vec3& a = loop[i];
        const Vec3& b = loop[(i + 1) % loop.size()];
        double da = sign * plane.signed_distance(a);
        double db = sign * plane.signed_distance(b);
        if (da >= 0) out.push_back(a);
        if ((da >= 0) != (db >= 0)) out.push_back(lerp(a, b, da / (da - db)));
    }
    return out;
}

//---------------------------------------------------------------------------//
// Aabb
//---------------------------------------------------------------------------//

void Aabb::expand(const Vec3& p) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
}

void Aabb::expand(const Aabb& b) {
    if (b.empty()) return;
    expand(b.lo);
    expand(b.hi);
}

bool Aabb::overlaps(const Aabb& b) const {
    return lo.x <= b.hi.x && b.lo.x <= hi.x && lo.y <= b.hi.y && b.lo.y <= hi.y && lo.z <= b.hi.z &&
           b.lo.z <= hi.z;
}

bool Aabb::contains(const Vec3& p, double eps) const {
    return p.x >= lo.x - eps && p.x <= hi.x + eps && p.y >= lo.y - eps && p.y <= hi.y + eps &&
           p.z >= lo.z - eps && p.z <= hi.z + eps;
}

double Aabb::volume() const {
    if (empty()) return 0;
    Vec3 e = extent();
    return e.x * e.y * e.z;
}

std::vector<Vec3> clip_loop_to_box(std::span<const Vec3> loop, const Aabb& box) {
    std::vector<Vec3> cur(loop.begin(), loop.end());
    const Vec3 axes[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (const auto& ax : axes) {
        cur = clip_loop(cur, Plane(box.lo, ax), 1.0);
        if (cur.empty()) return cur;
        cur = clip_loop(cur, Plane(box.hi, ax), -1.0);
        if (cur.empty()) return cur;
    }
    return cur;
}

//---------------------------------------------------------------------------//
// TriMesh
//---------------------------------------------------------------------------//

TriMesh::TriMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles, std::vector<Vec2> uvs)
    : vertices_(std::move(vertices)), triangles_(std::move(triangles)), uvs_(std::move(uvs)) {
    require(uvs_.empty() || uvs_.size() == vertices_.size(), "UV count must match vertex count");
    for (const auto& v : vertices_) require(is_finite(v), "mesh vertices must be finite");
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
        for (auto i : triangles_[t]) require(i < vertices_.size(), "triangle index out of range");
        require(face_area(t) > 1e-14, "degenerate triangle " + std::to_string(t));
    }
}

std::array<Vec3, 3> TriMesh::corners(std::size_t t) const {
    const auto& tri = triangles_[t];
    return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
}

Vec3 TriMesh::face_normal(std::size_t t) const {
    auto [a, b, c] = corners(t);
    return normalized(cross(b - a, c - a));
}

double TriMesh::face_area(std::size_t t) const {
    auto [a, b, c] = corners(t);
    return 0.5 * norm(cross(b - a, c - a));
}

double TriMesh::total_area() const {
    double s = 0;
    for (std::size_t t = 0; t < triangles_.size(); ++t) s += face_area(t);
    return s;
}

Aabb TriMesh::bounds() const {
    Aabb b;
    for (const auto& v : vertices_) b.expand(v);
    return b;
}

std::vector<Vec3> TriMesh::vertex_normals() const {
    std::vector<Vec3> n(vertices_.size());
    for (const auto& tri : triangles_) {
        const Vec3& a = vertices_[tri[0]];
        Vec3 w = cross(vertices_[tri[1]] - a, vertices_[tri[2]] - a);
        for (auto i : tri) n[i] += w;
    }
    for (auto& v : n) {
        double len = norm(v);
        v = len > 0 ? v / len : Vec3{0, 0, 1};
    }
    return n;
}

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

std::vector<std::array<std::int64_t, 3>> TriMesh::edge_neighbours() const {
    std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> owners;
    owners.reserve(triangles_.size() * 2);
    for (std::uint32_t t = 0; t < triangles_.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            owners[edge_key(triangles_[t][k], triangles_[t][(k + 1) % 3])].push_back(t);
        }
    }
    std::vector<std::array<std::int64_t, 3>> out(triangles_.size(), {-1, -1, -1});
    for (std::uint32_t t = 0; t < triangles_.size(); ++t) {
        for (int k = 0; k < 3; ++k) {
            const auto& own = owners[edge_key(triangles_[t][k], triangles_[t][(k + 1) % 3])];
            for (auto o : own) {
                if (o != t) {
                    out[t][k] = o;
                    break;
                }
            }
        }
    }
    return out;
}

std::vector<bool> TriMesh::boundary_vertices() const {
    std::unordered_map<std::uint64_t, int> count;
    count.reserve(triangles_.size() * 2);
    for (const auto& tri : triangles_) {
        for (int k = 0; k < 3; ++k) ++count[edge_key(tri[k], tri[(k + 1) % 3])];
    }
    std::vector<bool> boundary(vertices_.size(), false);
    for (const auto& [key, c] : count) {
        if (c == 1) {
            boundary[key >> 32] = true;
            boundary[key & 0xffffffffULL] = true;
        }
    }
    return boundary;
}

TriMesh TriMesh::with_vertices(std::vector<Vec3> vertices) const {
    require(vertices.size() == vertices_.size(), "vertex count must be unchanged");
    std::vector<Triangle> tris;
    tris.reserve(triangles_.size());
    for (const auto& tri : triangles_) {
        const Vec3& a = vertices[tri[0]];
        if (0.5 * norm(cross(vertices[tri[1]] - a, vertices[tri[2]] - a)) > 1e-14) tris.push_back(tri);
    }
    return TriMesh(std::move(vertices), std::move(tris), uvs_);
}

TriMesh TriMesh::merge(std::span<const TriMesh> parts) {
    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    std::vector<Vec2> uvs;
    bool all_uv = std::all_of(parts.begin(), parts.end(), [](const TriMesh& m) { return m.has_uvs(); });
    for (const auto& m : parts) {
        auto base = static_cast<std::uint32_t>(verts.size());
        verts.insert(verts.end(), m.vertices_.begin(), m.vertices_.end());
        if (all_uv) uvs.insert(uvs.end(), m.uvs_.begin(), m.uvs_.end());
        for (auto tri : m.triangles_) tris.push_back({tri[0] + base, tri[1] + base, tri[2] + base});
    }
    return TriMesh(std::move(verts), std::move(tris), std::move(uvs));
}

//---------------------------------------------------------------------------//
// Bvh
//---------------------------------------------------------------------------//

Bvh::Bvh(const TriMesh& mesh) : mesh_(&mesh) {
    auto n = static_cast<std::uint32_t>(mesh.triangle_count());
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    std::vector<Aabb> boxes(n);
    std::vector<Vec3> centres(n);
    for (std::uint32_t t = 0; t < n; ++t) {
        for (const auto& c : mesh.corners(t)) boxes[t].expand(c);
        centres[t] = boxes[t].centre();
    }
    nodes_.reserve(n > 0 ? 2 * n : 1);
    if (n == 0) {
        nodes_.push_back(Node{});
        return;
    }
    build(0, n, boxes, centres);
}

std::uint32_t Bvh::build(std::uint32_t begin, std::uint32_t end, std::vector<Aabb>& boxes,
                         std::vector<Vec3>& centres) {
    auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{});
    Aabb box, cbox;
    for (std::uint32_t i = begin; i < end; ++i) {
        box.expand(boxes[order_[i]]);
        cbox.expand(centres[order_[i]]);
    }
    nodes_[index].box = box;
    if (end - begin <= 4) {
        nodes_[index].first = begin;
        nodes_[index].count = end - begin;
        return index;
    }
    Vec3 e = cbox.extent();
    int axis = e.x >= e.y && e.x >= e.z ? 0 : (e.y >= e.z ? 1 : 2);
    std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                         double ca = centres[a][axis], cb = centres[b][axis];
                         return ca < cb || (ca == cb && a < b);
                     });
    build(begin, mid, boxes, centres);
    std::uint32_t right = build(mid, end, boxes, centres);
    nodes_[index].first = right;
    nodes_[index].count = 0;
    return index;
}

std::vector<std::uint32_t> Bvh::query(const Aabb& q) const {
    std::vector<std::uint32_t> out;
    if (mesh_->triangle_count() == 0) return out;
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
        const Node& node = nodes_[stack[--sp]];
        if (!node.box.overlaps(q)) continue;
        if (node.count > 0) {
            for (std::uint32_t i = 0; i < node.count; ++i) out.push_back(order_[node.first + i]);
        } else {
            auto self = static_cast<std::uint32_t>(&node - nodes_.data());
            stack[sp++] = node.first;
            stack[sp++] = self + 1;
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

bool ray_box(const Aabb& b, const Vec3& o, const Vec3& inv, double t_max, double& t_entry) {
    double t0 = 0, t1 = t_max;
    for (int a = 0; a < 3; ++a) {
        double lo = (b.lo[a] - o[a]) * inv[a];
        double hi = (b.hi[a] - o[a]) * inv[a];
        if (lo > hi) std::swap(lo, hi);
        t0 = lo > t0 ? lo : t0;
        t1 = hi < t1 ? hi : t1;
        if (t0 > t1) return false;
    }
    t_entry = t0;
    return true;
}

}  // namespace

std::optional<RayHit> Bvh::intersect(const Vec3& origin, const Vec3& dir, double t_min,
                                     double t_max) const {
    if (mesh_->triangle_count() == 0) return std::nullopt;
    Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
    std::optional<RayHit> best;
    double best_t = t_max;
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    auto verts = mesh_->vertices();
    auto tris = mesh_->triangles();
    while (sp > 0) {
        std::uint32_t ni = stack[--sp];
        const Node& node = nodes_[ni];
        double entry = 0;
        if (!ray_box(node.box, origin, inv, best_t, entry)) continue;
        if (node.count > 0) {
            for (std::uint32_t i = 0; i < node.count; ++i) {
                std::uint32_t t = order_[node.first + i];
                const Vec3& a = verts[tris[t][0]];
                Vec3 e1 = verts[tris[t][1]] - a;
                Vec3 e2 = verts[tris[t][2]] - a;
                Vec3 p = cross(dir, e2);
                double det = dot(e1, p);
                if (std::abs(det) < 1e-300) continue;
                double inv_det = 1.0 / det;
                Vec3 s = origin - a;
                double u = dot(s, p) * inv_det;
                if (u < 0.0 || u > 1.0) continue;
                Vec3 q = cross(s, e1);
                double v = dot(dir, q) * inv_det;
                if (v < 0.0 || u + v > 1.0) continue;
                double th = dot(e2, q) * inv_det;
                if (th > t_min && (th < best_t || (th == best_t && best && t < best->triangle))) {
                    best_t = th;
                    best = RayHit{th, t, u, v};
                }
            }
        } else {
            // Push the farther child first so the nearer one is popped next.
            std::uint32_t left = ni + 1, right = node.first;
            double el = 0, er = 0;
            bool hl = ray_box(nodes_[left].box, origin, inv, best_t, el);
            bool hr = ray_box(nodes_[right].box, origin, inv, best_t, er);
            if (hl && hr) {
                if (el <= er) {
                    stack[sp++] = right;
                    stack[sp++] = left;
                } else {
                    stack[sp++] = left;
                    stack[sp++] = right;
                }
            } else if (hl) {
                stack[sp++] = left;
            } else if (hr) {
                stack[sp++] = right;
            }
        }
    }
    return best;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 ab = b - a, ac = c - a, ap = p - a;
    double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0 && d2 <= 0) return a;
    Vec3 bp = p - b;
    double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0 && d4 <= d3) return b;
    double vc = d1 * d4 - d3 * d2;
    if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + ab * (d1 / (d1 - d3));
    Vec3 cp = p - c;
    double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0 && d5 <= d6) return c;
    double vb = d5 * d2 - d1 * d6;
    if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + ac * (d2 / (d2 - d6));
    double va = d3 * d6 - d5 * d4;
    if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
    double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

std::optional<std::uint32_t> Bvh::closest_triangle(const Vec3& p, double max_dist) const {
    Aabb q;
    q.expand(p);
    auto cand = query(q.inflated(max_dist));
    std::optional<std::uint32_t> best;
    double best_d = max_dist;
    for (auto t : cand) {
        auto [a, b, c] = mesh_->corners(t);
        double d = distance(p, closest_point_on_triangle(p, a, b, c));
        if (d <= best_d) {
            if (!best || d < best_d) {
                best = t;
                best_d = d;
            }
        }
    }
    return best;
}

//---------------------------------------------------------------------------//
// Intersections
//---------------------------------------------------------------------------//

double polyline_length(std::span<const Vec3> line) {
    double s = 0;
    for (std::size_t i = 1; i < line.size(); ++i) s += distance(line[i - 1], line[i]);
    return s;
}

std::vector<Segment3> clip_segment_to_polygon(const Segment3& s, const Polygon3& f, double eps) {
    std::vector<Segment3> out;
    PlaneFrame frame(f.plane());
    Vec2 p0 = frame.to_2d(s.a), p1 = frame.to_2d(s.b);
    Vec2 d = p1 - p0;
    double len = norm(d);
    if (len <= 1e-15) return out;
    std::vector<Vec2> poly;
    poly.reserve(f.size());
    for (const auto& v : f.vertices()) poly.push_back(frame.to_2d(v));

    std::vector<double> ts{0.0, 1.0};
    for (std::size_t i = 0; i < poly.size(); ++i) {
        Vec2 q0 = poly[i], e = poly[(i + 1) % poly.size()] - q0;
        double denom = cross(d, e);
        if (std::abs(denom) < 1e-15 * len * norm(e)) continue;
        Vec2 w = q0 - p0;
        double t = cross(w, e) / denom;
        double u = cross(w, d) / denom;
        if (t > 0 && t < 1 && u >= -1e-12 && u <= 1 + 1e-12) ts.push_back(t);
    }
    std::sort(ts.begin(), ts.end());

    auto inside = [&](Vec2 q) {
        if (inside_2d(poly, q)) return true;
        for (std::size_t i = 0; i < poly.size(); ++i) {
            if (point_segment_distance_2d(q, poly[i], poly[(i + 1) % poly.size()]) <= eps) return true;
        }
        return false;
    };

    double run_start = -1;
    double run_end = -1;
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
        double t0 = ts[k], t1 = ts[k + 1];
        if (t1 - t0 <= 1e-14) continue;
        bool keep = inside(p0 + d * (0.5 * (t0 + t1)));
        if (keep) {
            if (run_start < 0) run_start = t0;
            run_end = t1;
        } else if (run_start >= 0) {
            out.push_back({lerp(s.a, s.b, run_start), lerp(s.a, s.b, run_end)});
            run_start = -1;
        }
    }
    if (run_start >= 0) out.push_back({lerp(s.a, s.b, run_start), lerp(s.a, s.b, run_end)});
    return out;
}

namespace {

enum class CutKind { None, Crossing, Edge, Coplanar };

struct TriangleCut {
    CutKind kind = CutKind::None;
    Segment3 seg;
    int edge = -1;  //!< local edge index k (corners k, k+1) for CutKind::Edge
};

TriangleCut cut_triangle(const Plane& plane, const std::array<Vec3, 3>& p, double eps) {
    double d[3];
    int zero = 0, pos = 0, neg = 0;
    for (int i = 0; i < 3; ++i) {
        d[i] = plane.signed_distance(p[i]);
        if (std::abs(d[i]) <= eps) {
            d[i] = 0;
            ++zero;
        } else if (d[i] > 0) {
            ++pos;
        } else {
            ++neg;
        }
    }
    TriangleCut cut;
    if (zero == 3) {
        cut.kind = CutKind::Coplanar;
        return cut;
    }
    if (zero == 2) {
        for (int k = 0; k < 3; ++k) {
            if (d[k] == 0 && d[(k + 1) % 3] == 0) {
                cut.kind = CutKind::Edge;
                cut.edge = k;
                cut.seg = {p[k], p[(k + 1) % 3]};
            }
        }
        return cut;
    }
    if (pos == 0 || neg == 0) return cut;  // disjoint or vertex touch
    Vec3 pts[2];
    int n = 0;
    for (int i = 0; i < 3 && n < 2; ++i) {
        if (d[i] == 0) pts[n++] = p[i];
    }
    for (int i = 0; i < 3 && n < 2; ++i) {
        int j = (i + 1) % 3;
        if ((d[i] > 0 && d[j] < 0) || (d[i] < 0 && d[j] > 0)) {
            pts[n++] = lerp(p[i], p[j], d[i] / (d[i] - d[j]));
        }
    }
    if (n == 2) {
        cut.kind = CutKind::Crossing;
        cut.seg = {pts[0], pts[1]};
    }
    return cut;
}

bool same_segment(const Segment3& a, const Segment3& b, double eps) {
    return (distance(a.a, b.a) <= eps && distance(a.b, b.b) <= eps) ||
           (distance(a.a, b.b) <= eps && distance(a.b, b.a) <= eps);
}

}  // namespace

std::vector<Segment3> intersect_polygon_triangle(const Polygon3& f, const Vec3& a, const Vec3& b,
                                                 const Vec3& c, double eps) {
    auto cut = cut_triangle(f.plane(), {a, b, c}, eps);
    if (cut.kind != CutKind::Crossing && cut.kind != CutKind::Edge) return {};
    return clip_segment_to_polygon(cut.seg, f, eps);
}

std::vector<Segment3> intersect_polygon_mesh(const Polygon3& f, const TriMesh& m, double eps) {
    Bvh bvh(m);
    return intersect_polygon_mesh(f, bvh, eps);
}

std::vector<Segment3> intersect_polygon_mesh(const Polygon3& f, const Bvh& bvh, double eps) {
    require(eps > 0, "snap tolerance must be positive");
    const TriMesh& m = bvh.mesh();
    Aabb box;
    for (const auto& v : f.vertices()) box.expand(v);
    auto cand = bvh.query(box.inflated(eps));
    std::vector<Segment3> out;
    if (cand.empty()) return out;

    std::unordered_set<std::uint64_t> emitted_edges;
    std::vector<Segment3> coplanar_pieces;
    std::vector<std::array<std::int64_t, 3>> neighbours;
    std::vector<char> coplanar;  // lazily filled per candidate
    std::unordered_map<std::uint32_t, bool> coplanar_cache;

    auto is_coplanar = [&](std::uint32_t t) {
        auto it = coplanar_cache.find(t);
        if (it != coplanar_cache.end()) return it->second;
        bool cp = cut_triangle(f.plane(), m.corners(t), eps).kind == CutKind::Coplanar;
        coplanar_cache.emplace(t, cp);
        return cp;
    };

    auto tris = m.triangles();
    for (auto t : cand) {
        auto corners = m.corners(t);
        auto cut = cut_triangle(f.plane(), corners, eps);
        switch (cut.kind) {
            case CutKind::None:
                break;
            case CutKind::Crossing:
                for (auto& s : clip_segment_to_polygon(cut.seg, f, eps)) out.push_back(s);
                break;
            case CutKind::Edge: {
                auto key = edge_key(tris[t][cut.edge], tris[t][(cut.edge + 1) % 3]);
                if (emitted_edges.insert(key).second) {
                    for (auto& s : clip_segment_to_polygon(cut.seg, f, eps)) out.push_back(s);
                }
                break;
            }
            case CutKind::Coplanar: {
                if (neighbours.empty()) neighbours = m.edge_neighbours();
                // Triangle edges on the rim of the coplanar patch.
                for (int k = 0; k < 3; ++k) {
                    std::int64_t nb = neighbours[t][k];
                    if (nb >= 0 && is_coplanar(static_cast<std::uint32_t>(nb))) continue;
                    auto key = edge_key(tris[t][k], tris[t][(k + 1) % 3]);
                    if (!emitted_edges.insert(key).second) continue;
                    Segment3 e{corners[k], corners[(k + 1) % 3]};
                    for (auto& s : clip_segment_to_polygon(e, f, eps)) out.push_back(s);
                }
                // Polygon edges inside the triangle.
                Polygon3 tri_poly(std::vector<Vec3>{corners[0], corners[1], corners[2]});
                auto fv = f.vertices();
                for (std::size_t i = 0; i < fv.size(); ++i) {
                    Segment3 e{fv[i], fv[(i + 1) % fv.size()]};
                    for (auto& s : clip_segment_to_polygon(e, tri_poly, eps)) {
                        bool dup = std::any_of(coplanar_pieces.begin(), coplanar_pieces.end(),
                                               [&](const Segment3& o) { return same_segment(o, s, eps); });
                        if (!dup && s.length() > eps) coplanar_pieces.push_back(s);
                    }
                }
                break;
            }
        }
    }
    for (const auto& s : coplanar_pieces) {
        bool dup = std::any_of(out.begin(), out.end(), [&](const Segment3& o) { return same_segment(o, s, eps); });
        if (!dup) out.push_back(s);
    }
    return out;
}

std::optional<Segment3> intersect_polygons(const Polygon3& a, const Polygon3& b, double eps) {
    Vec3 dir = cross(a.plane().normal(), b.plane().normal());
    if (norm(dir) < 1e-12) return std::nullopt;
    // Chord of a cut by b's plane (a is convex).
    auto av = a.vertices();
    std::vector<Vec3> pts;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const Vec3& p = av[i];
        const Vec3& q = av[(i + 1) % av.size()];
        double dp = b.plane().signed_distance(p), dq = b.plane().signed_distance(q);
        if (dp == 0) pts.push_back(p);
        if ((dp > 0 && dq < 0) || (dp < 0 && dq > 0)) pts.push_back(lerp(p, q, dp / (dp - dq)));
    }
    if (pts.size() < 2) return std::nullopt;
    auto [lo, hi] = std::minmax_element(pts.begin(), pts.end(), [&](const Vec3& x, const Vec3& y) {
        return dot(x, dir) < dot(y, dir);
    });
    Segment3 chord{*lo, *hi};
    auto pieces = clip_segment_to_polygon(chord, b, eps);
    if (pieces.empty()) return std::nullopt;
    Segment3 s{pieces.front().a, pieces.back().b};
    if (s.length() <= eps) return std::nullopt;
    return s;
}

//---------------------------------------------------------------------------//
// Stitching
//---------------------------------------------------------------------------//

namespace {

struct UnionFind {
    std::vector<std::uint32_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0u); }
    std::uint32_t find(std::uint32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::uint32_t a, std::uint32_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

struct CellKey {
    std::int64_t i, j, k;
    bool operator==(const CellKey&) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& c) const {
        std::uint64_t h = static_cast<std::uint64_t>(c.i) * 0x9e3779b97f4a7c15ULL;
        h ^= static_cast<std::uint64_t>(c.j) * 0xc2b2ae3d27d4eb4fULL + (h << 6);
        h ^= static_cast<std::uint64_t>(c.k) * 0x165667b19e3779f9ULL + (h >> 2);
        return static_cast<std::size_t>(h);
    }
};

}  // namespace

std::vector<Polyline3> stitch_segments(std::span<const Segment3> segments, double eps) {
    require(eps > 0, "snap tolerance must be positive");
    std::vector<Polyline3> out;
    std::size_t npts = segments.size() * 2;
    if (npts == 0) return out;
    auto point = [&](std::size_t i) -> const Vec3& {
        return (i & 1) ? segments[i / 2].b : segments[i / 2].a;
    };

    UnionFind uf(npts);
    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> grid;
    auto cell_of = [&](const Vec3& p) {
        return CellKey{static_cast<std::int64_t>(std::floor(p.x / eps)),
                       static_cast<std::int64_t>(std::floor(p.y / eps)),
                       static_cast<std::int64_t>(std::floor(p.z / eps))};
    };
    for (std::uint32_t i = 0; i < npts; ++i) {
        const Vec3& p = point(i);
        CellKey c = cell_of(p);
        for (std::int64_t di = -1; di <= 1; ++di)
            for (std::int64_t dj = -1; dj <= 1; ++dj)
                for (std::int64_t dk = -1; dk <= 1; ++dk) {
                    auto it = grid.find({c.i + di, c.j + dj, c.k + dk});
                    if (it == grid.end()) continue;
                    for (auto q : it->second) {
                        if (distance(p, point(q)) <= eps) uf.unite(i, q);
                    }
                }
        grid[c].push_back(i);
    }

    // Nodes are union-find roots; the root point is the node position.
    struct Edge {
        std::uint32_t u, v;
    };
    std::vector<Edge> edges;
    edges.reserve(segments.size());
    for (std::uint32_t s = 0; s < segments.size(); ++s) {
        std::uint32_t u = uf.find(2 * s), v = uf.find(2 * s + 1);
        if (u != v) edges.push_back({u, v});
    }
    if (edges.empty()) return out;

    std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> incident;
    for (std::uint32_t e = 0; e < edges.size(); ++e) {
        incident[edges[e].u].push_back(e);
        incident[edges[e].v].push_back(e);
    }
    auto other = [&](std::uint32_t e, std::uint32_t node) { return edges[e].u == node ? edges[e].v : edges[e].u; };

    // pairing[(node, edge)] -> continuing edge at that node
    std::unordered_map<std::uint64_t, std::uint32_t> pairing;
    auto pkey = [](std::uint32_t node, std::uint32_t e) { return (static_cast<std::uint64_t>(node) << 32) | e; };
    std::vector<std::uint32_t> nodes;
    nodes.reserve(incident.size());
    for (const auto& kv : incident) nodes.push_back(kv.first);
    std::sort(nodes.begin(), nodes.end());
    for (auto node : nodes) {
        const auto& inc = incident[node];
        if (inc.size() == 2) {
            pairing[pkey(node, inc[0])] = inc[1];
            pairing[pkey(node, inc[1])] = inc[0];
        } else if (inc.size() >= 3) {
            const Vec3& c = point(node);
            std::vector<Vec3> dirs;
            for (auto e : inc) dirs.push_back(normalized(point(other(e, node)) - c));
            struct Cand {
                double d;
                std::size_t i, j;
            };
            std::vector<Cand> cands;
            for (std::size_t i = 0; i < inc.size(); ++i)
                for (std::size_t j = i + 1; j < inc.size(); ++j) {
                    double d = dot(dirs[i], dirs[j]);
                    if (d < -0.5) cands.push_back({d, i, j});
                }
            std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
                return a.d < b.d || (a.d == b.d && (a.i < b.i || (a.i == b.i && a.j < b.j)));
            });
            std::vector<bool> used(inc.size(), false);
            for (const auto& cd : cands) {
                if (used[cd.i] || used[cd.j]) continue;
                used[cd.i] = used[cd.j] = true;
                pairing[pkey(node, inc[cd.i])] = inc[cd.j];
                pairing[pkey(node, inc[cd.j])] = inc[cd.i];
            }
        }
    }
    auto next_edge = [&](std::uint32_t node, std::uint32_t e) -> std::optional<std::uint32_t> {
        auto it = pairing.find(pkey(node, e));
        if (it == pairing.end()) return std::nullopt;
        return it->second;
    };

    std::vector<bool> visited(edges.size(), false);
    for (std::uint32_t e0 = 0; e0 < edges.size(); ++e0) {
        if (visited[e0]) continue;
        // Walk backwards from u to find the chain start.
        std::uint32_t start_edge = e0, start_node = edges[e0].u;
        bool cycle = false;
        for (;;) {
            auto prev = next_edge(start_node, start_edge);
            if (!prev) break;
            if (*prev == e0) {
                cycle = true;
                break;
            }
            start_node = other(*prev, start_node);
            start_edge = *prev;
        }
        if (cycle) {
            start_edge = e0;
            start_node = edges[e0].u;
        }
        Polyline3 line{point(start_node)};
        std::uint32_t e = start_edge, node = start_node;
        for (;;) {
            visited[e] = true;
            node = other(e, node);
            line.push_back(point(node));
            auto nx = next_edge(node, e);
            if (!nx || visited[*nx]) break;
            e = *nx;
        }
        out.push_back(std::move(line));
    }
    return out;
}

//---------------------------------------------------------------------------//
// OBJ
//---------------------------------------------------------------------------//

void write_obj(std::ostream& os, const TriMesh& mesh) {
    char buf[128];
    for (const auto& v : mesh.vertices()) {
        std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        os << buf;
    }
    for (const auto& t : mesh.uvs()) {
        std::snprintf(buf, sizeof buf, "vt %.17g %.17g\n", t.x, t.y);
        os << buf;
    }
    for (const auto& tri : mesh.triangles()) {
        if (mesh.has_uvs()) {
            os << "f " << tri[0] + 1 << '/' << tri[0] + 1 << ' ' << tri[1] + 1 << '/' << tri[1] + 1
               << ' ' << tri[2] + 1 << '/' << tri[2] + 1 << '\n';
        } else {
            os << "f " << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
        }
    }
}

void write_obj(const std::string& path, const TriMesh& mesh) {
    std::ofstream os(path);
    require(os.good(), "cannot open " + path + " for writing");
    write_obj(os, mesh);
}

TriMesh read_obj(std::istream& is) {
    std::vector<Vec3> verts;
    std::vector<Vec2> uvs;
    std::vector<Triangle> tris;
    bool uv_aligned = true;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 v;
            require(static_cast<bool>(ls >> v.x >> v.y >> v.z), "bad vertex on line " + std::to_string(lineno));
            verts.push_back(v);
        } else if (tag == "vt") {
            Vec2 t;
            require(static_cast<bool>(ls >> t.x >> t.y), "bad uv on line " + std::to_string(lineno));
            uvs.push_back(t);
        } else if (tag == "f") {
            std::vector<std::uint32_t> idx;
            std::string tok;
            while (ls >> tok) {
                long vi = std::stol(tok.substr(0, tok.find('/')));
                auto slash = tok.find('/');
                if (slash != std::string::npos && slash + 1 < tok.size() && tok[slash + 1] != '/') {
                    long ti = std::stol(tok.substr(slash + 1, tok.find('/', slash + 1) - slash - 1));
                    if (ti != vi) uv_aligned = false;
                }
                require(vi > 0, "only positive OBJ indices are supported");
                idx.push_back(static_cast<std::uint32_t>(vi - 1));
            }
            require(idx.size() == 3, "only triangular faces are supported (line " + std::to_string(lineno) + ")");
            tris.push_back({idx[0], idx[1], idx[2]});
        }
    }
    if (!uv_aligned || uvs.size() != verts.size()) uvs.clear();
    return TriMesh(std::move(verts), std::move(tris), std::move(uvs));
}

TriMesh read_obj(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open " + path);
    return read_obj(is);
}

}  // namespace fracsynth
