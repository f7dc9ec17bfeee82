#include "fracsynth/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "fracsynth/error.hpp"
#include "fracsynth/rng.hpp"

namespace fracsynth {

//---------------------------------------------------------------------------//
// Projection
//---------------------------------------------------------------------------//

namespace {

//! Barycentric weights of a point lying in triangle abc's plane.
std::array<double, 3> barycentric(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
    Vec3 v0 = b - a, v1 = c - a, v2 = p - a;
    double d00 = dot(v0, v0), d01 = dot(v0, v1), d11 = dot(v1, v1);
    double d20 = dot(v2, v0), d21 = dot(v2, v1);
    double den = d00 * d11 - d01 * d01;
    double v = (d11 * d20 - d01 * d21) / den, w = (d00 * d21 - d01 * d20) / den;
    return {1 - v - w, v, w};
}

}  // namespace

Vec2 estimate_uv_scale(const TriMesh& surface) {
    require(surface.has_uvs(), "surface mesh has no UV coordinates");
    // |e|^2 ~ a du^2 + b dv^2 over every triangle edge.
    double suu = 0, suv = 0, svv = 0, su = 0, sv = 0;
    auto uvs = surface.uvs();
    auto verts = surface.vertices();
    for (const auto& tri : surface.triangles()) {
        for (int k = 0; k < 3; ++k) {
            auto i = tri[k], j = tri[(k + 1) % 3];
            double du = uvs[j].x - uvs[i].x, dv = uvs[j].y - uvs[i].y;
            double e2 = dot(verts[j] - verts[i], verts[j] - verts[i]);
            double x = du * du, y = dv * dv;
            suu += x * x, suv += x * y, svv += y * y, su += x * e2, sv += y * e2;
        }
    }
    double det = suu * svv - suv * suv;
    require(det > 0, "UV coordinates are degenerate");
    double a = (su * svv - sv * suv) / det, b = (sv * suu - su * suv) / det;
    require(a > 0 && b > 0, "UV parametrisation is not orthogonal enough to scale");
    return {std::sqrt(a), std::sqrt(b)};
}

std::vector<Polyline2> project_to_surface_uv(std::span<const Trace> traces, const TriMesh& surface, Vec2 uv_scale) {
    require(surface.has_uvs(), "surface needs UVs for unrolled projection");
    std::vector<Polyline2> out;
    if (traces.empty()) return out;
    Bvh bvh(surface);
    auto uvs = surface.uvs();
    for (const auto& t : traces) {
        Polyline2 line;
        for (const auto& p : t.points) {
            // Growing radius: a hit within r is the global nearest.
            std::optional<std::uint32_t> tri;
            for (double r = 0.05; !tri && r < 1e7; r *= 8) tri = bvh.closest_triangle(p, r);
            require(tri.has_value(), "trace point has no nearby surface triangle");
            auto c = surface.corners(*tri);
            auto idx = surface.triangles()[*tri];
            auto w = barycentric(closest_point_on_triangle(p, c[0], c[1], c[2]), c[0], c[1], c[2]);
            Vec2 uv = uvs[idx[0]] * w[0] + uvs[idx[1]] * w[1] + uvs[idx[2]] * w[2];
            line.push_back({uv.x * uv_scale.x, uv.y * uv_scale.y});
        }
        out.push_back(std::move(line));
    }
    return out;
}

std::vector<Polyline2> project_to_plane(std::span<const Trace> traces, const PlaneFrame& frame) {
    std::vector<Polyline2> out;
    for (const auto& t : traces) {
        Polyline2 line;
        for (const auto& p : t.points) line.push_back(frame.to_2d(p));
        out.push_back(std::move(line));
    }
    return out;
}

//---------------------------------------------------------------------------//
// Nodes
//---------------------------------------------------------------------------//

std::string to_string(NodeType t) {
    switch (t) {
        case NodeType::I: return "I";
        case NodeType::Y: return "Y";
        case NodeType::X: return "X";
    }
    return "?";
}

namespace {

double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 d = b - a;
    double len2 = dot(d, d);
    double t = len2 > 0 ? std::clamp(dot(p - a, d) / len2, 0.0, 1.0) : 0.0;
    return norm(p - (a + d * t));
}

struct Seg {
    Vec2 a, b;
    int trace;
};

//! Uniform hash grid over segment bounding boxes inflated by eps.
class SegmentGrid {
  public:
    SegmentGrid(std::vector<Seg> segs, double eps) : segs_(std::move(segs)), eps_(eps) {
        double lo_x = 1e300, lo_y = 1e300, hi_x = -1e300, hi_y = -1e300, total = 0;
        for (const auto& s : segs_) {
            lo_x = std::min({lo_x, s.a.x, s.b.x}), lo_y = std::min({lo_y, s.a.y, s.b.y});
            hi_x = std::max({hi_x, s.a.x, s.b.x}), hi_y = std::max({hi_y, s.a.y, s.b.y});
            total += norm(s.b - s.a);
        }
        double diag = segs_.empty() ? 1.0 : std::hypot(hi_x - lo_x, hi_y - lo_y);
        double mean = segs_.empty() ? 1.0 : total / segs_.size();
        h_ = std::max({4 * eps, mean, diag / 512, 1e-12});
        origin_ = {lo_x, lo_y};
        for (std::size_t i = 0; i < segs_.size(); ++i) {
            auto [c0, c1] = cell_range(i);
            for (long x = c0[0]; x <= c1[0]; ++x)
                for (long y = c0[1]; y <= c1[1]; ++y) cells_[key(x, y)].push_back(static_cast<int>(i));
        }
    }

    const std::vector<Seg>& segments() const { return segs_; }

    //! Segment indices whose inflated bounds may contain p.
    const std::vector<int>* near(Vec2 p) const {
        auto it = cells_.find(key(cell(p.x, origin_.x), cell(p.y, origin_.y)));
        return it == cells_.end() ? nullptr : &it->second;
    }

    //! Calls f(i, j) once for every pair whose inflated bounds overlap.
    template <typename F>
    void for_each_pair(F&& f) const {
        for (std::size_t i = 0; i < segs_.size(); ++i) {
            auto [c0, c1] = cell_range(i);
            for (long x = c0[0]; x <= c1[0]; ++x)
                for (long y = c0[1]; y <= c1[1]; ++y) {
                    auto it = cells_.find(key(x, y));
                    for (int j : it->second) {
                        if (j <= static_cast<int>(i)) continue;
                        // Report the pair only in the cell holding the low corner of the overlap.
                        auto [d0, d1] = cell_range(j);
                        if (std::max(c0[0], d0[0]) != x || std::max(c0[1], d0[1]) != y) continue;
                        if (std::min(c1[0], d1[0]) < x || std::min(c1[1], d1[1]) < y) continue;
                        f(static_cast<int>(i), j);
                    }
                }
        }
    }

  private:
    static std::uint64_t key(long x, long y) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) | static_cast<std::uint32_t>(y);
    }
    long cell(double v, double o) const { return static_cast<long>(std::floor((v - o) / h_)); }
    std::pair<std::array<long, 2>, std::array<long, 2>> cell_range(std::size_t i) const {
        const auto& s = segs_[i];
        return {{cell(std::min(s.a.x, s.b.x) - eps_, origin_.x), cell(std::min(s.a.y, s.b.y) - eps_, origin_.y)},
                {cell(std::max(s.a.x, s.b.x) + eps_, origin_.x), cell(std::max(s.a.y, s.b.y) + eps_, origin_.y)}};
    }

    std::vector<Seg> segs_;
    double eps_;
    double h_ = 1;
    Vec2 origin_;
    std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

bool near_boundary(Vec2 p, const std::array<Vec2, 2>& box, double eps) {
    return p.x <= box[0].x + eps || p.y <= box[0].y + eps || p.x >= box[1].x - eps || p.y >= box[1].y - eps;
}

}  // namespace

std::vector<TraceNode> classify_nodes(std::span<const Polyline2> traces, const NodeOptions& options) {
    require(options.eps > 0, "node tolerance must be positive");
    const double eps = options.eps;
    std::vector<Seg> segs;
    for (std::size_t t = 0; t < traces.size(); ++t) {
        for (std::size_t k = 0; k + 1 < traces[t].size(); ++k) segs.push_back({traces[t][k], traces[t][k + 1], static_cast<int>(t)});
    }
    SegmentGrid grid(std::move(segs), eps);

    // Open-trace endpoints, clustered when within eps of each other.
    struct End {
        Vec2 p;
        int trace;
    };
    std::vector<End> ends;
    for (std::size_t t = 0; t < traces.size(); ++t) {
        const auto& line = traces[t];
        if (line.size() < 2) continue;
        if (norm(line.front() - line.back()) <= eps) continue;  // closed loop
        ends.push_back({line.front(), static_cast<int>(t)});
        ends.push_back({line.back(), static_cast<int>(t)});
    }
    std::vector<int> parent(ends.size());
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    {
        std::vector<Seg> pts;
        for (const auto& e : ends) pts.push_back({e.p, e.p, static_cast<int>(pts.size())});
        SegmentGrid eg(std::move(pts), eps);
        eg.for_each_pair([&](int i, int j) {
            if (norm(ends[i].p - ends[j].p) <= eps) {
                int a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }
        });
    }
    std::map<int, std::vector<int>> clusters;
    for (std::size_t i = 0; i < ends.size(); ++i) clusters[find(static_cast<int>(i))].push_back(static_cast<int>(i));

    std::vector<TraceNode> nodes;
    for (const auto& [root, members] : clusters) {
        const End& e = ends[members.front()];
        TraceNode node;
        node.position = e.p;
        node.trace_a = e.trace;
        for (int m : members) {
            if (ends[m].trace != e.trace) {
                node.trace_b = ends[m].trace;
                break;
            }
        }
        if (members.size() >= 2) {
            if (node.trace_b < 0) continue;  // both ends of one trace
            node.type = NodeType::Y;
        } else if (const auto* cand = grid.near(e.p)) {
            for (int s : *cand) {
                const auto& g = grid.segments()[s];
                if (g.trace == e.trace) continue;
                if (point_segment_distance(e.p, g.a, g.b) <= eps && (node.trace_b < 0 || g.trace < node.trace_b)) {
                    node.trace_b = g.trace;
                }
            }
            node.type = node.trace_b >= 0 ? NodeType::Y : NodeType::I;
        }
        if (node.type == NodeType::I && options.boundary && near_boundary(e.p, *options.boundary, eps)) {
            if (options.exclude_boundary) continue;
            node.on_boundary = true;
        }
        nodes.push_back(node);
    }

    // Interior crossings, deduplicated per trace pair.
    auto near_end = [&](Vec2 q, int t) {
        const auto& line = traces[t];
        return norm(q - line.front()) <= eps || norm(q - line.back()) <= eps;
    };
    std::map<std::pair<int, int>, std::vector<Vec2>> crossings;
    const auto& S = grid.segments();
    grid.for_each_pair([&](int i, int j) {
        const Seg& s1 = S[i];
        const Seg& s2 = S[j];
        if (s1.trace == s2.trace) return;
        Vec2 d1 = s1.b - s1.a, d2 = s2.b - s2.a;
        double den = cross(d1, d2);
        if (std::abs(den) <= 1e-14 * norm(d1) * norm(d2)) return;
        Vec2 w = s2.a - s1.a;
        double t = cross(w, d2) / den, u = cross(w, d1) / den;
        constexpr double slack = 1e-12;
        if (t < -slack || t > 1 + slack || u < -slack || u > 1 + slack) return;
        Vec2 q = s1.a + d1 * t;
        if (near_end(q, s1.trace) || near_end(q, s2.trace)) return;
        auto& list = crossings[{std::min(s1.trace, s2.trace), std::max(s1.trace, s2.trace)}];
        for (const auto& o : list) {
            if (norm(o - q) <= eps) return;
        }
        list.push_back(q);
    });
    for (const auto& [pair, pts] : crossings) {
        for (const auto& q : pts) nodes.push_back({q, NodeType::X, pair.first, pair.second, false});
    }
    return nodes;
}

TopologySummary topology_summary(std::span<const TraceNode> nodes) {
    TopologySummary s;
    for (const auto& n : nodes) {
        switch (n.type) {
            case NodeType::I: ++s.n_i; break;
            case NodeType::X: ++s.n_x; break;
            case NodeType::Y: ++s.n_y; break;
        }
    }
    s.n_lines = (static_cast<double>(s.n_i) + static_cast<double>(s.n_y)) / 2.0;
    s.c_l = s.n_lines > 0 ? 2.0 * static_cast<double>(s.n_x + s.n_y) / s.n_lines : 0.0;
    double total = static_cast<double>(s.n_i + s.n_x + s.n_y);
    if (total > 0) {
        s.p_i = s.n_i / total;
        s.p_x = s.n_x / total;
        s.p_y = s.n_y / total;
    }
    return s;
}

Vec2 ternary_coordinates(const TopologySummary& s) {
    return {s.p_y + 0.5 * s.p_x, s.p_x * std::sqrt(3.0) / 2.0};
}

void write_topology_csv(std::ostream& os, std::span<const TopologyRow> rows) {
    os << "name,n_i,n_x,n_y,n_lines,c_l,p_i,p_x,p_y,ternary_x,ternary_y\n";
    char buf[512];
    for (const auto& r : rows) {
        const auto& s = r.summary;
        Vec2 t = ternary_coordinates(s);
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%zu,%.1f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", r.name.c_str(), s.n_i, s.n_x,
                      s.n_y, s.n_lines, s.c_l, s.p_i, s.p_x, s.p_y, t.x, t.y);
        os << buf;
    }
}

void write_ternary_svg(std::ostream& os, std::span<const TopologyRow> rows) {
    // Unit triangle scaled to 400 px with a margin; SVG y points down.
    const double S = 400, M = 40, H = std::sqrt(3.0) / 2.0;
    auto px = [&](Vec2 p) { return Vec2{M + p.x * S, M + (H - p.y) * S}; };
    char buf[256];
    std::snprintf(buf, sizeof buf, "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\">\n",
                  S + 2 * M, H * S + 2 * M);
    os << buf;
    Vec2 i = px({0, 0}), y = px({1, 0}), x = px({0.5, H});
    std::snprintf(buf, sizeof buf,
                  "<polygon points=\"%.2f,%.2f %.2f,%.2f %.2f,%.2f\" fill=\"none\" stroke=\"black\"/>\n", i.x, i.y,
                  y.x, y.y, x.x, x.y);
    os << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.2f\" y=\"%.2f\">I</text><text x=\"%.2f\" y=\"%.2f\">Y</text>"
                  "<text x=\"%.2f\" y=\"%.2f\">X</text>\n",
                  i.x - 15, i.y + 15, y.x + 5, y.y + 15, x.x - 4, x.y - 8);
    os << buf;
    for (const auto& r : rows) {
        Vec2 p = px(ternary_coordinates(r.summary));
        std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\"><title>%s c_l=%.3f</title></circle>\n",
                      p.x, p.y, r.name.c_str(), r.summary.c_l);
        os << buf;
    }
    os << "</svg>\n";
}

//---------------------------------------------------------------------------//
// Blocks
//---------------------------------------------------------------------------//

BlockStats block_statistics(std::span<const PlaneFamily> families, const Aabb& region, double jitter, std::uint64_t seed,
                            const ClassThresholds& thresholds) {
    require(families.size() == 3, "block statistics need exactly three plane families");
    require(jitter >= 0 && jitter < 1, "spacing jitter must lie in [0, 1)");
    require(!region.empty() && region.volume() > 0, "region volume must be positive");
    std::array<Vec3, 3> n;
    for (int j = 0; j < 3; ++j) {
        require(std::isfinite(families[j].spacing) && families[j].spacing > 0, "family spacing must be positive");
        n[j] = orientation_to_normal(families[j].orientation);
    }
    double det = dot(n[0], cross(n[1], n[2]));
    require(std::abs(det) > 1e-6, "plane family normals must not be coplanar");

    std::array<Vec3, 8> corners;
    for (int c = 0; c < 8; ++c) {
        corners[c] = {(c & 1) ? region.hi.x : region.lo.x, (c & 2) ? region.hi.y : region.lo.y,
                      (c & 4) ? region.hi.z : region.lo.z};
    }
    // Plane offsets per family, starting at the region's low extreme.
    std::array<std::vector<double>, 3> offsets, gaps;
    Rng rng(seed);
    for (int j = 0; j < 3; ++j) {
        double lo = 1e300, hi = -1e300;
        for (const auto& c : corners) lo = std::min(lo, dot(n[j], c)), hi = std::max(hi, dot(n[j], c));
        double o = lo;
        offsets[j].push_back(o);
        while (o < hi) {
            double s = families[j].spacing * (jitter > 0 ? 1 + jitter * rng.uniform(-1, 1) : 1.0);
            gaps[j].push_back(s);
            o = lo + std::accumulate(gaps[j].begin(), gaps[j].end(), 0.0);
            offsets[j].push_back(o);
        }
    }

    std::array<Vec3, 3> edge_dir;
    std::array<double, 3> edge_scale;
    for (int j = 0; j < 3; ++j) {
        edge_dir[j] = normalized(cross(n[(j + 1) % 3], n[(j + 2) % 3]));
        edge_scale[j] = 1.0 / std::abs(dot(n[j], edge_dir[j]));
    }
    auto vertex = [&](double d0, double d1, double d2) {
        return (cross(n[1], n[2]) * d0 + cross(n[2], n[0]) * d1 + cross(n[0], n[1]) * d2) / det;
    };
    double tol = 1e-9 * norm(region.extent());

    BlockStats stats;
    std::map<std::string, std::size_t> palm, singh;
    for (std::size_t a = 0; a < gaps[0].size(); ++a)
        for (std::size_t b = 0; b < gaps[1].size(); ++b)
            for (std::size_t c = 0; c < gaps[2].size(); ++c) {
                bool inside = true;
                for (int k = 0; k < 8 && inside; ++k) {
                    Vec3 v = vertex(offsets[0][a + (k & 1)], offsets[1][b + ((k >> 1) & 1)], offsets[2][c + ((k >> 2) & 1)]);
                    inside = region.contains(v, tol);
                }
                if (!inside) continue;
                std::array<double, 3> g{gaps[0][a], gaps[1][b], gaps[2][c]};
                stats.volumes.push_back(g[0] * g[1] * g[2] / std::abs(det));
                Parallelepiped p;
                p.edges = {g[0] * edge_scale[0], g[1] * edge_scale[1], g[2] * edge_scale[2]};
                std::sort(p.edges.begin(), p.edges.end());
                auto cls = classify(p, thresholds);
                ++palm[to_string(cls.palmstrom)];
                ++singh[cls.singh];
            }
    std::sort(stats.volumes.begin(), stats.volumes.end());
    double total = static_cast<double>(stats.volumes.size());
    for (std::size_t k = 0; k < stats.volumes.size(); ++k) {
        double pct = 100.0 * (k + 1) / total;
        if (!stats.cdf.empty() && stats.cdf.back().first == stats.volumes[k]) {
            stats.cdf.back().second = pct;
        } else {
            stats.cdf.push_back({stats.volumes[k], pct});
        }
    }
    for (auto c : {PalmstromClass::Equidimensional, PalmstromClass::Flat, PalmstromClass::Long, PalmstromClass::LongFlat}) {
        auto name = to_string(c);
        stats.palmstrom_share.push_back({name, total > 0 ? 100.0 * palm[name] / total : 0.0});
    }
    for (const auto& name : thresholds.singh.classes()) {
        stats.singh_share.push_back({name, total > 0 ? 100.0 * singh[name] / total : 0.0});
    }
    return stats;
}

void write_block_cdf_csv(std::ostream& os, const BlockStats& stats) {
    os << "volume_m3,cumulative_percent\n";
    char buf[96];
    for (const auto& [v, p] : stats.cdf) {
        std::snprintf(buf, sizeof buf, "%.9g,%.6f\n", v, p);
        os << buf;
    }
}

void write_block_shares_csv(std::ostream& os, const BlockStats& stats) {
    os << "scheme,class,percent\n";
    char buf[160];
    for (const auto& [name, p] : stats.palmstrom_share) {
        std::snprintf(buf, sizeof buf, "palmstrom,%s,%.6f\n", name.c_str(), p);
        os << buf;
    }
    for (const auto& [name, p] : stats.singh_share) {
        std::snprintf(buf, sizeof buf, "singh,%s,%.6f\n", name.c_str(), p);
        os << buf;
    }
}

void write_block_cdf_svg(std::ostream& os, const BlockStats& stats) {
    const double W = 480, H = 320, M = 40;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"400\">\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, "<rect x=\"%.0f\" y=\"%.0f\" width=\"%.0f\" height=\"%.0f\" fill=\"none\" stroke=\"black\"/>\n",
                  M, M, W, H);
    os << buf;
    if (!stats.cdf.empty()) {
        double lo = std::log10(stats.cdf.front().first), hi = std::log10(stats.cdf.back().first);
        if (hi - lo < 1e-9) lo -= 0.5, hi += 0.5;
        os << "<polyline fill=\"none\" stroke=\"black\" points=\"";
        double prev = 0;
        for (std::size_t k = 0; k < stats.cdf.size(); ++k) {
            double x = M + (std::log10(stats.cdf[k].first) - lo) / (hi - lo) * W;
            std::snprintf(buf, sizeof buf, "%s%.2f,%.2f %.2f,%.2f", k ? " " : "", x, M + H - prev / 100 * H, x,
                          M + H - stats.cdf[k].second / 100 * H);
            os << buf;
            prev = stats.cdf[k].second;
        }
        os << "\"/>\n";
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%.0f\" y=\"%.0f\">%.3g m3</text><text x=\"%.0f\" y=\"%.0f\">%.3g m3</text>\n", M,
                      M + H + 20, std::pow(10, lo), M + W - 60, M + H + 20, std::pow(10, hi));
        os << buf;
    }
    os << "</svg>\n";
}

}  // namespace fracsynth
