#include "fracsynth/traces.hpp"

#include <tbb/parallel_for.h>

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>

#include "fracsynth/error.hpp"
#include "fracsynth/noise.hpp"
#include "fracsynth/rng.hpp"
#include "json.hpp"

namespace fracsynth {

void TraceStyle::validate() const {
    require(std::isfinite(t_min) && t_min >= 0, "t_min must be non-negative");
    require(std::isfinite(t_max) && t_min <= t_max, "t_min must not exceed t_max");
    require(std::isfinite(waviness_amplitude) && waviness_amplitude >= 0, "waviness amplitude must be non-negative");
    require(std::isfinite(waviness_wavelength) && waviness_wavelength > 0, "waviness wavelength must be positive");
}

double thickness(double length, const TraceStyle& style) {
    require(style.t_min <= style.t_max, "t_min must not exceed t_max");
    require(std::isfinite(length) && length >= 0, "trace length must be non-negative");
    if (length >= kThicknessReferenceLength) return style.t_max;
    return length / kThicknessReferenceLength * (style.t_max - style.t_min) + style.t_min;
}

namespace {

std::vector<Vec3> surface_normals(const Polyline3& pts, const Bvh& bvh) {
    std::vector<Vec3> normals;
    normals.reserve(pts.size());
    for (const auto& p : pts) {
        auto t = bvh.closest_triangle(p, 1e-2);
        if (!t) t = bvh.closest_triangle(p, 1e300);
        normals.push_back(t ? bvh.mesh().face_normal(*t) : Vec3{0, 0, 1});
    }
    return normals;
}

void append_lines(std::vector<Trace>& out, std::vector<Polyline3> lines, const Bvh& bvh, int set_id, int fracture_id) {
    for (auto& line : lines) {
        double len = polyline_length(line);
        if (len < 2 * kSnapTolerance) continue;
        Trace t;
        t.normals = surface_normals(line, bvh);
        t.points = std::move(line);
        t.length = len;
        t.set_id = set_id;
        t.fracture_id = fracture_id;
        out.push_back(std::move(t));
    }
}

}  // namespace

std::vector<Trace> extract_traces(std::span<const Fracture> fractures, const Bvh& bvh) {
    std::vector<std::vector<Trace>> per(fractures.size());
    tbb::parallel_for(std::size_t{0}, fractures.size(), [&](std::size_t i) {
        auto segs = intersect_polygon_mesh(fractures[i].polygon, bvh);
        if (segs.empty()) return;
        append_lines(per[i], stitch_segments(segs), bvh, fractures[i].set_id, static_cast<int>(i));
    });
    std::vector<Trace> out;
    for (auto& v : per) {
        for (auto& t : v) out.push_back(std::move(t));
    }
    return out;
}

std::vector<Trace> extract_traces(const Dfn& dfn, const TriMesh& surface) {
    if (surface.triangle_count() == 0) return {};
    Bvh bvh(surface);
    return extract_traces(dfn.fractures, bvh);
}

Trace apply_waviness(const Trace& trace, const TraceStyle& style, std::uint64_t seed) {
    style.validate();
    const auto& pts = trace.points;
    if (style.waviness_amplitude == 0 || pts.size() < 2 || trace.normals.size() != pts.size()) return trace;
    double total = polyline_length(pts);
    if (total <= 0) return trace;

    // Densify so the noise is resolved at several points per wavelength.
    double step = std::min(style.waviness_wavelength / 8.0, total / 4.0);
    Polyline3 dense{pts.front()};
    std::vector<Vec3> dense_n{trace.normals.front()};
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        double len = distance(pts[i], pts[i + 1]);
        int pieces = std::max(1, static_cast<int>(std::ceil(len / step)));
        for (int k = 1; k <= pieces; ++k) {
            double t = static_cast<double>(k) / pieces;
            dense.push_back(k == pieces ? pts[i + 1] : lerp(pts[i], pts[i + 1], t));
            Vec3 n = lerp(trace.normals[i], trace.normals[i + 1], t);
            dense_n.push_back(norm(n) > 1e-12 ? normalized(n) : trace.normals[i]);
        }
    }

    Rng rng(seed);
    Perlin perlin(rng.bits());
    double offset = rng.uniform(0, 256);
    Trace out = trace;
    out.points = dense;
    out.normals = dense_n;
    double s = 0;
    for (std::size_t i = 1; i + 1 < dense.size(); ++i) {
        s += distance(dense[i - 1], dense[i]);
        Vec3 tangent = dense[i + 1] - dense[i - 1];
        if (norm(tangent) < 1e-15) continue;
        Vec3 lateral = cross(dense_n[i], normalized(tangent));
        if (norm(lateral) < 1e-9) continue;
        lateral = normalized(lateral);
        double n = std::clamp(perlin.fbm(s / style.waviness_wavelength + offset, 2), -1.0, 1.0);
        double taper = std::sin(std::numbers::pi * std::clamp(s / total, 0.0, 1.0));
        out.points[i] = dense[i] + lateral * (style.waviness_amplitude * n * taper);
    }
    out.points.front() = pts.front();
    out.points.back() = pts.back();
    out.length = polyline_length(out.points);
    if (out.length < trace.length) return trace;
    return out;
}

std::vector<Trace> style_traces(std::span<const Trace> traces, const TraceStyle& style, std::uint64_t seed) {
    style.validate();
    std::vector<Trace> out(traces.size());
    tbb::parallel_for(std::size_t{0}, traces.size(), [&](std::size_t i) {
        out[i] = apply_waviness(traces[i], style, derive_seed(seed, i));
        out[i].thickness = thickness(out[i].length, style);
    });
    return out;
}

std::vector<Trace> label_from_planes(std::span<const Polygon3> polygons, const TriMesh& surface, std::uint64_t seed,
                                     const PlaneLabelOptions& options) {
    require(options.grid_step > 0, "grid step must be positive");
    require(options.displacement >= 0, "displacement must be non-negative");
    require(0 <= options.thickness_lo && options.thickness_lo <= options.thickness_hi,
            "thickness range must satisfy 0 <= lo <= hi");
    std::vector<Trace> out;
    if (polygons.empty() || surface.triangle_count() == 0) return out;
    Bvh bvh(surface);
    for (std::size_t k = 0; k < polygons.size(); ++k) {
        const auto& poly = polygons[k];
        std::vector<Segment3> segs;
        if (options.displacement == 0) {
            segs = intersect_polygon_mesh(poly, bvh);
        } else {
            PlaneFrame frame(poly.plane());
            double ulo = 1e300, uhi = -1e300, vlo = 1e300, vhi = -1e300;
            for (const auto& p : poly.vertices()) {
                Vec2 q = frame.to_2d(p);
                ulo = std::min(ulo, q.x), uhi = std::max(uhi, q.x);
                vlo = std::min(vlo, q.y), vhi = std::max(vhi, q.y);
            }
            int nu = std::max(1, static_cast<int>(std::ceil((uhi - ulo) / options.grid_step)));
            int nv = std::max(1, static_cast<int>(std::ceil((vhi - vlo) / options.grid_step)));
            double du = (uhi - ulo) / nu, dv = (vhi - vlo) / nv;
            Rng rng(derive_seed(seed, k, 0));
            std::vector<Vec3> nodes;
            nodes.reserve(static_cast<std::size_t>(nu + 1) * (nv + 1));
            for (int j = 0; j <= nv; ++j) {
                for (int i = 0; i <= nu; ++i) {
                    double d = rng.uniform(-options.displacement, options.displacement);
                    nodes.push_back(frame.to_3d({ulo + i * du, vlo + j * dv}) + frame.n * d);
                }
            }
            auto node = [&](int i, int j) { return nodes[static_cast<std::size_t>(j) * (nu + 1) + i]; };
            auto add = [&](const Vec3& a, const Vec3& b, const Vec3& c) {
                std::optional<Polygon3> tri;
                try {
                    tri.emplace(std::vector<Vec3>{a, b, c});
                } catch (const ValidationError&) {
                    return;
                }
                for (const auto& s : intersect_polygon_mesh(*tri, bvh)) {
                    for (auto& piece : clip_segment_to_polygon(s, poly, kSnapTolerance)) segs.push_back(piece);
                }
            };
            for (int j = 0; j < nv; ++j) {
                for (int i = 0; i < nu; ++i) {
                    add(node(i, j), node(i + 1, j), node(i + 1, j + 1));
                    add(node(i, j), node(i + 1, j + 1), node(i, j + 1));
                }
            }
        }
        if (segs.empty()) continue;
        std::size_t first = out.size();
        append_lines(out, stitch_segments(segs), bvh, 0, static_cast<int>(k));
        Rng trng(derive_seed(seed, k, 1));
        for (std::size_t t = first; t < out.size(); ++t) {
            out[t].thickness = trng.uniform(options.thickness_lo, options.thickness_hi);
        }
    }
    return out;
}

void write_traces_jsonl(std::ostream& os, std::span<const Trace> traces) {
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto& t = traces[i];
        nlohmann::ordered_json j;
        j["id"] = i;
        j["fracture"] = t.fracture_id;
        j["set_id"] = t.set_id;
        j["length"] = t.length;
        j["thickness"] = t.thickness;
        auto pts = nlohmann::json::array();
        for (const auto& p : t.points) pts.push_back({p.x, p.y, p.z});
        j["points"] = std::move(pts);
        auto ns = nlohmann::json::array();
        for (const auto& n : t.normals) ns.push_back({n.x, n.y, n.z});
        j["normals"] = std::move(ns);
        os << j.dump() << '\n';
    }
}

std::vector<Trace> read_traces_jsonl(std::istream& is) {
    auto vec = [](const nlohmann::json& v) { return Vec3{v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()}; };
    std::vector<Trace> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        Trace t;
        for (const auto& p : j.at("points")) t.points.push_back(vec(p));
        if (j.contains("normals")) {
            for (const auto& n : j.at("normals")) t.normals.push_back(vec(n));
        }
        t.length = j.at("length").get<double>();
        t.thickness = j.at("thickness").get<double>();
        t.set_id = j.value("set_id", 0);
        t.fracture_id = j.value("fracture", -1);
        require(t.points.size() >= 2, "trace needs at least two points");
        require(t.thickness >= 0, "trace thickness must be non-negative");
        out.push_back(std::move(t));
    }
    return out;
}

void write_traces_svg(std::ostream& os, std::span<const Trace> traces, const Vec3& view_dir) {
    Vec3 d = normalized(view_dir);
    Vec3 up = std::abs(d.z) > 0.99 ? Vec3{0, 1, 0} : Vec3{0, 0, 1};
    Vec3 right = normalized(cross(d, up));
    Vec3 upv = cross(right, d);
    double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
    for (const auto& t : traces) {
        for (const auto& p : t.points) {
            double x = dot(p, right), y = dot(p, upv);
            xlo = std::min(xlo, x), xhi = std::max(xhi, x);
            ylo = std::min(ylo, y), yhi = std::max(yhi, y);
        }
    }
    if (traces.empty()) xlo = ylo = 0, xhi = yhi = 1;
    double pad = 0.02 * std::max({xhi - xlo, yhi - ylo, 1e-6});
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.6f %.6f %.6f %.6f\">\n", xlo - pad, -yhi - pad,
                  xhi - xlo + 2 * pad, yhi - ylo + 2 * pad);
    os << buf;
    for (const auto& t : traces) {
        os << "<polyline fill=\"none\" stroke=\"black\" stroke-linecap=\"round\"";
        std::snprintf(buf, sizeof buf, " stroke-width=\"%.6f\" points=\"", std::max(t.thickness, 1e-3));
        os << buf;
        for (std::size_t i = 0; i < t.points.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.6f,%.6f", i ? " " : "", dot(t.points[i], right), -dot(t.points[i], upv));
            os << buf;
        }
        os << "\"/>\n";
    }
    os << "</svg>\n";
}

}  // namespace fracsynth
