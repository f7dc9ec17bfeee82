#include "fracsynth/scenes.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <ostream>
#include <set>
#include <tuple>

#include "fracsynth/error.hpp"
#include "fracsynth/noise.hpp"

namespace fracsynth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

//---------------------------------------------------------------------------//
// Slope
//---------------------------------------------------------------------------//

void SlopeSpec::validate() const {
    require(std::isfinite(length) && length > 0, "slope length must be positive");
    require(std::isfinite(bench_height) && bench_height > 0, "bench height must be positive");
    require(benches >= 1, "slope needs at least one bench");
    require(bench_angle > 0 && bench_angle <= 90, "bench angle must lie in (0, 90]");
    require(std::isfinite(berm_width) && berm_width >= 0, "berm width must be non-negative");
}

double SlopeSpec::horizontal_depth() const {
    double run = bench_angle == 90 ? 0.0 : bench_height / std::tan(bench_angle * kDeg);
    return benches * run + (benches - 1) * berm_width;
}

TriMesh build_slope_mesh(const SlopeSpec& spec, double resolution) {
    spec.validate();
    require(std::isfinite(resolution) && resolution > 0, "mesh resolution must be positive");
    if (spec.berm_width > 0 && spec.benches > 1) {
        require(resolution <= spec.berm_width, "mesh resolution must not exceed the berm width");
    }

    // Profile corners in (x, z), crest first.
    double run = spec.bench_angle == 90 ? 0.0 : spec.bench_height / std::tan(spec.bench_angle * kDeg);
    std::vector<Vec2> corners{{0, spec.total_height()}};
    for (int b = 0; b < spec.benches; ++b) {
        Vec2 top = corners.back();
        corners.push_back({top.x + run, top.y - spec.bench_height});
        if (b + 1 < spec.benches && spec.berm_width > 0) corners.push_back({corners.back().x + spec.berm_width, corners.back().y});
    }
    std::vector<Vec2> profile{corners.front()};
    std::vector<double> arc{0.0};
    for (std::size_t k = 0; k + 1 < corners.size(); ++k) {
        Vec2 a = corners[k], b = corners[k + 1];
        double len = norm(b - a);
        int pieces = std::max(1, static_cast<int>(std::ceil(len / resolution - 1e-9)));
        for (int i = 1; i <= pieces; ++i) {
            double t = static_cast<double>(i) / pieces;
            profile.push_back(i == pieces ? b : a + (b - a) * t);
            arc.push_back(arc.back() + len / pieces);
        }
    }
    int ny = std::max(1, static_cast<int>(std::ceil(spec.length / resolution - 1e-9)));
    auto np = static_cast<std::uint32_t>(profile.size());
    double total_arc = arc.back();

    std::vector<Vec3> verts;
    std::vector<Vec2> uvs;
    for (int j = 0; j <= ny; ++j) {
        double y = j == ny ? spec.length : spec.length * j / ny;
        for (std::uint32_t i = 0; i < np; ++i) {
            verts.push_back({profile[i].x, y, profile[i].y});
            uvs.push_back({y / spec.length, arc[i] / total_arc});
        }
    }
    std::vector<Triangle> tris;
    for (std::uint32_t j = 0; j < static_cast<std::uint32_t>(ny); ++j) {
        for (std::uint32_t i = 0; i + 1 < np; ++i) {
            std::uint32_t a = j * np + i, b = a + 1, c = a + np + 1, d = a + np;
            tris.push_back({a, b, c});
            tris.push_back({a, c, d});
        }
    }
    return TriMesh(std::move(verts), std::move(tris), std::move(uvs));
}

void RoughnessSpec::validate() const {
    require(std::isfinite(amplitude) && amplitude >= 0, "roughness amplitude must be non-negative");
    require(std::isfinite(frequency) && frequency > 0, "roughness frequency must be positive");
    require(octaves >= 1, "roughness needs at least one octave");
}

TriMesh apply_perlin_roughness(const TriMesh& mesh, const RoughnessSpec& spec) {
    spec.validate();
    if (spec.amplitude == 0) return mesh;
    auto verts = mesh.vertices();
    auto normals = mesh.vertex_normals();
    auto boundary = mesh.boundary_vertices();
    Perlin perlin(spec.seed);
    // Irrational offsets keep samples off the lattice, where noise is zero.
    const Vec3 offset{17.3205, 41.4214, 7.0711};
    std::vector<double> raw(verts.size(), 0.0);
    tbb::parallel_for(std::size_t{0}, verts.size(), [&](std::size_t i) {
        if (!boundary[i]) raw[i] = perlin.fbm(verts[i] * spec.frequency + offset, spec.octaves);
    });
    double sum = 0;
    std::size_t interior = 0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        if (!boundary[i]) sum += raw[i], ++interior;
    }
    if (interior == 0) return mesh;
    double mean = sum / interior, peak = 0;
    for (std::size_t i = 0; i < verts.size(); ++i) {
        if (!boundary[i]) peak = std::max(peak, std::abs(raw[i] - mean));
    }
    if (peak == 0) return mesh;
    std::vector<Vec3> moved(verts.begin(), verts.end());
    for (std::size_t i = 0; i < verts.size(); ++i) {
        if (!boundary[i]) moved[i] = verts[i] + normals[i] * (spec.amplitude * (raw[i] - mean) / peak);
    }
    return mesh.with_vertices(std::move(moved));
}

//---------------------------------------------------------------------------//
// Kinematics
//---------------------------------------------------------------------------//

Orientation face_orientation(const TriMesh& mesh) {
    require(mesh.triangle_count() > 0, "surface has no triangles");
    Vec3 steep{}, all{};
    const double cos45 = std::cos(45 * kDeg);
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
        Vec3 n = mesh.face_normal(t) * mesh.face_area(t);
        all += n;
        if (std::abs(mesh.face_normal(t).z) < cos45) steep += n;
    }
    return normal_to_orientation(norm(steep) > 0 ? steep : all);
}

bool markland_daylights(const TrendPlunge& line, const Orientation& face, double friction_angle, double lateral_limit) {
    double diff = std::fmod(std::abs(line.trend - face.dip_direction), 360.0);
    diff = std::min(diff, 360.0 - diff);
    return line.plunge > friction_angle && line.plunge < face.dip && diff <= lateral_limit;
}

namespace {

Vec3 upward(const Vec3& n) { return n.z < 0 ? -n : n; }

void carve_wedge(std::vector<Vec3>& verts, const Polygon3& a, const Polygon3& b) {
    Vec3 na = upward(a.plane().normal()), nb = upward(b.plane().normal());
    for (auto& v : verts) {
        double da = dot(v - a.plane().point(), na), db = dot(v - b.plane().point(), nb);
        if (da <= 0 || db <= 0) continue;
        if (!a.contains_projected(v, 0) || !b.contains_projected(v, 0)) continue;
        v -= da <= db ? na * da : nb * db;
    }
}

}  // namespace

KinematicResult kinematic_filter(const Dfn& dfn, const TriMesh& slope, double friction_angle,
                                 const KinematicOptions& options) {
    require(friction_angle >= 0 && friction_angle < 90, "friction angle must lie in [0, 90)");
    require(options.lateral_limit >= 0 && options.lateral_limit <= 180, "lateral limit must lie in [0, 180]");
    KinematicResult result{dfn, slope, {}};
    auto& report = result.report;
    report.face = face_orientation(slope);
    report.friction_angle = friction_angle;

    const auto& fr = dfn.fractures;
    Bvh bvh(slope);
    std::vector<char> cuts(fr.size(), 0);
    tbb::parallel_for(std::size_t{0}, fr.size(), [&](std::size_t i) {
        cuts[i] = !intersect_polygon_mesh(fr[i].polygon, bvh).empty();
    });
    std::vector<std::size_t> near;
    for (std::size_t i = 0; i < fr.size(); ++i) {
        if (cuts[i]) near.push_back(i);
    }

    for (std::size_t i : near) {
        Orientation o = normal_to_orientation(fr[i].polygon.plane().normal());
        TrendPlunge dip_vector{o.dip_direction, o.dip};
        if (markland_daylights(dip_vector, report.face, friction_angle, options.lateral_limit)) {
            report.flags.push_back({"planar", static_cast<int>(i), -1, fr[i].set_id, -1, dip_vector.trend, dip_vector.plunge});
        }
    }

    std::vector<Vec3> verts(slope.vertices().begin(), slope.vertices().end());
    bool carved = false;
    for (std::size_t a = 0; a < near.size(); ++a) {
        const auto& pa = fr[near[a]].polygon;
        for (std::size_t b = a + 1; b < near.size(); ++b) {
            const auto& pb = fr[near[b]].polygon;
            if (distance(pa.centroid(), pb.centroid()) > pa.bounding_radius() + pb.bounding_radius()) continue;
            Vec3 line = cross(pa.plane().normal(), pb.plane().normal());
            if (norm(line) < 1e-9) continue;
            if (!intersect_polygons(pa, pb, 1e-9)) continue;
            TrendPlunge tp = line_trend_plunge(line);
            if (!markland_daylights(tp, report.face, friction_angle, options.lateral_limit)) continue;
            report.flags.push_back({"wedge", static_cast<int>(near[a]), static_cast<int>(near[b]), fr[near[a]].set_id,
                                    fr[near[b]].set_id, tp.trend, tp.plunge});
            if (options.carve_notches) {
                carve_wedge(verts, pa, pb);
                carved = true;
            }
        }
    }
    if (carved) result.mesh = slope.with_vertices(std::move(verts));
    return result;
}

void write_kinematic_csv(std::ostream& os, const KinematicReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "# face dip %.4f dip_direction %.4f friction %.4f\n", report.face.dip,
                  report.face.dip_direction, report.friction_angle);
    os << buf << "mode,fracture_a,fracture_b,set_a,set_b,trend,plunge\n";
    for (const auto& f : report.flags) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%d,%.6f,%.6f\n", f.mode.c_str(), f.fracture_a, f.fracture_b, f.set_a,
                      f.set_b, f.trend, f.plunge);
        os << buf;
    }
}

//---------------------------------------------------------------------------//
// Boxes
//---------------------------------------------------------------------------//

void BoxSceneSpec::validate() const {
    require(std::isfinite(width) && width > 0 && std::isfinite(depth) && depth > 0 && std::isfinite(height) &&
                height > 0,
            "box dimensions must be positive");
    require(std::isfinite(gap), "gap must be finite");
    require(gap >= 0, "negative gap makes boxes overlap");
    std::set<std::array<int, 3>> seen;
    for (const auto& c : cells) require(seen.insert(c).second, "two boxes occupy the same cell");
}

Aabb BoxSceneSpec::box(const std::array<int, 3>& cell) const {
    double y0 = cell[0] * (width + gap), z0 = cell[1] * (height + gap);
    double x1 = -cell[2] * (depth + gap);
    return {{x1 - depth, y0, z0}, {x1, y0 + width, z0 + height}};
}

namespace {

void add_quad(std::vector<Vec3>& v, std::vector<Triangle>& t, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    auto base = static_cast<std::uint32_t>(v.size());
    v.insert(v.end(), {a, b, c, d});
    t.push_back({base, base + 1, base + 2});
    t.push_back({base, base + 2, base + 3});
}

Vec3 axis_vec(int axis, double s) {
    Vec3 e{};
    (axis == 0 ? e.x : axis == 1 ? e.y : e.z) = s;
    return e;
}

double& comp(Vec3& v, int axis) { return axis == 0 ? v.x : axis == 1 ? v.y : v.z; }

//! Quad in the plane axis_b = coordinate spanning [a0,a1] x [c0,c1], facing s e_b.
void add_facing_quad(std::vector<Vec3>& v, std::vector<Triangle>& t, int ax_b, double s, double coord, int ax_a,
                     double a0, double a1, int ax_c, double c0, double c1) {
    auto pt = [&](double a, double c) {
        Vec3 p{};
        comp(p, ax_b) = coord;
        comp(p, ax_a) = a;
        comp(p, ax_c) = c;
        return p;
    };
    Vec3 p0 = pt(a0, c0), p1 = pt(a1, c0), p2 = pt(a1, c1), p3 = pt(a0, c1);
    if (dot(cross(p1 - p0, p2 - p0), axis_vec(ax_b, s)) < 0) std::swap(p1, p3);
    add_quad(v, t, p0, p1, p2, p3);
}

}  // namespace

BoxScene build_box_scene(const BoxSceneSpec& spec) {
    spec.validate();
    BoxScene scene;
    std::vector<Vec3> verts;
    std::vector<Triangle> tris;
    std::set<std::array<int, 3>> occupied(spec.cells.begin(), spec.cells.end());

    for (const auto& cell : spec.cells) {
        Aabb b = spec.box(cell);
        scene.boxes.push_back(b);
        for (int axis = 0; axis < 3; ++axis) {
            int ax_a = (axis + 1) % 3, ax_c = (axis + 2) % 3;
            for (double s : {-1.0, 1.0}) {
                double coord = s > 0 ? b.hi[axis] : b.lo[axis];
                add_facing_quad(verts, tris, axis, s, coord, ax_a, b.lo[ax_a], b.hi[ax_a], ax_c, b.lo[ax_c], b.hi[ax_c]);
            }
        }
    }

    // Grid index steps along world axes: +x is one row forward, +y one
    // column, +z one level.
    auto step = [](const std::array<int, 3>& c, int world_axis, int s) {
        auto n = c;
        if (world_axis == 0) n[2] -= s;
        if (world_axis == 1) n[0] += s;
        if (world_axis == 2) n[1] += s;
        return n;
    };
    const double half = spec.gap / 2;
    std::map<std::tuple<int, int, long long>, std::vector<Segment3>> by_face;
    for (const auto& A : spec.cells) {
        for (int ax_a = 0; ax_a < 3; ++ax_a) {
            // B is the neighbour on the positive world side along ax_a.
            auto B = step(A, ax_a, 1);
            if (!occupied.count(B)) continue;
            Aabb ba = spec.box(A);
            double slab_lo = ba.hi[ax_a], slab_hi = slab_lo + spec.gap, centre = slab_lo + half;
            for (int k = 1; k <= 2; ++k) {
                int ax_b = (ax_a + k) % 3, ax_c = (ax_a + 3 - k) % 3;
                for (int s : {-1, 1}) {
                    if (occupied.count(step(A, ax_b, s)) || occupied.count(step(B, ax_b, s))) continue;
                    double coord = s > 0 ? ba.hi[ax_b] : ba.lo[ax_b];
                    auto extends = [&](int sc) {
                        return occupied.count(step(A, ax_c, sc)) || occupied.count(step(B, ax_c, sc));
                    };
                    double c0 = ba.lo[ax_c] - (extends(-1) ? half : 0.0);
                    double c1 = ba.hi[ax_c] + (extends(1) ? half : 0.0);
                    Vec3 p{}, q{};
                    comp(p, ax_b) = comp(q, ax_b) = coord;
                    comp(p, ax_a) = comp(q, ax_a) = centre;
                    comp(p, ax_c) = c0;
                    comp(q, ax_c) = c1;
                    long long key = std::llround(coord * 1e6);
                    by_face[{ax_b, s, key}].push_back({p, q});
                    if (spec.gap > 0) {
                        add_facing_quad(verts, tris, ax_b, s, coord, ax_a, slab_lo, slab_hi, ax_c, c0, c1);
                    }
                }
            }
        }
    }
    for (auto& [key, segs] : by_face) {
        Vec3 n = axis_vec(std::get<0>(key), std::get<1>(key));
        for (auto& line : stitch_segments(segs, std::max(kSnapTolerance * 1e-2, 1e-9))) {
            Trace t;
            t.normals.assign(line.size(), n);
            t.length = polyline_length(line);
            t.points = std::move(line);
            t.thickness = spec.gap;
            t.set_id = std::get<0>(key);
            scene.traces.push_back(std::move(t));
        }
    }
    scene.mesh = TriMesh(std::move(verts), std::move(tris));
    return scene;
}

}  // namespace fracsynth
