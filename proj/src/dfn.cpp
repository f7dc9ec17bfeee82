#include "fracsynth/dfn.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "fracsynth/error.hpp"
#include "json.hpp"

namespace fracsynth {

void JointSet::validate() const {
    orientation_to_normal(mean_orientation);
    require(fisher_kappa >= 0, "Fisher kappa must be non-negative");
    require(std::isfinite(spacing) && spacing > 0, "joint spacing must be positive");
    require(std::isfinite(p32) && p32 > 0, "P32 must be positive");
    require(std::isfinite(size.mu) && std::isfinite(size.sigma) && size.sigma >= 0,
            "size distribution needs finite mu and sigma >= 0");
}

double estimate_p32(double spacing) {
    require(std::isfinite(spacing) && spacing > 0, "joint spacing must be positive");
    return 1.0 / spacing;
}

Vec3 sample_fisher(const Vec3& mean, double kappa, Rng& rng) {
    double u = rng.uniform();
    double phi = 2.0 * std::numbers::pi * rng.uniform();
    double cos_t;
    if (std::isinf(kappa)) {
        cos_t = 1.0;
    } else if (kappa <= 0) {
        cos_t = 2.0 * u - 1.0;
    } else {
        double uu = std::max(u, 1e-300);
        cos_t = 1.0 + std::log(uu + (1.0 - uu) * std::exp(-2.0 * kappa)) / kappa;
        cos_t = std::clamp(cos_t, -1.0, 1.0);
    }
    double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    Vec3 n = normalized(mean);
    Vec3 a = any_orthogonal(n);
    Vec3 b = cross(n, a);
    return normalized(n * cos_t + a * (sin_t * std::cos(phi)) + b * (sin_t * std::sin(phi)));
}

namespace {

double area_in_region(const Polygon3& f, const Aabb& region) {
    auto clipped = clip_loop_to_box(f.vertices(), region);
    return norm(loop_area_vector(clipped));
}

}  // namespace

namespace {

struct Source {
    int set_id;
    Vec3 mean;
    double kappa;
    double p32;
    SizeDistribution size;
    int rank;
};

std::vector<Source> make_sources(std::span<const JointSet> sets, double random_fraction, const DfnOptions& options) {
    std::vector<Source> sources;
    double total_p32 = 0;
    int youngest = 0;
    for (std::size_t j = 0; j < sets.size(); ++j) {
        const auto& s = sets[j];
        sources.push_back({static_cast<int>(j), orientation_to_normal(s.mean_orientation), s.fisher_kappa, s.p32, s.size,
                           s.chronology_rank});
        total_p32 += s.p32;
        youngest = std::max(youngest, s.chronology_rank + 1);
    }
    if (random_fraction > 0 && total_p32 > 0) {
        sources.push_back({kRandomSet, {0, 0, 1}, 0.0, total_p32 * random_fraction / (1.0 - random_fraction),
                           options.random_size, youngest});
    }
    return sources;
}

//! Random joints use a stream index past any real set.
std::uint64_t source_seed(std::uint64_t seed, const Source& src) {
    return derive_seed(seed, src.set_id == kRandomSet ? 1'000'000 : static_cast<std::uint64_t>(src.set_id));
}

Polygon3 draw_fracture(const Source& src, const Aabb& region, const DfnOptions& options, Rng& rng) {
    Vec3 lo = region.lo, ext = region.extent();
    Vec3 c{lo.x + ext.x * rng.uniform(), lo.y + ext.y * rng.uniform(), lo.z + ext.z * rng.uniform()};
    Vec3 n = sample_fisher(src.mean, src.kappa, rng);
    double r = rng.lognormal(src.size.mu, src.size.sigma);
    double phase = rng.uniform() * 2.0 * std::numbers::pi / options.polygon_sides;
    return Polygon3::regular(c, n, r, options.polygon_sides, phase);
}

}  // namespace

Dfn generate_dfn(std::span<const JointSet> sets, double random_fraction, const Aabb& region, std::uint64_t seed,
                 const DfnOptions& options) {
    require(random_fraction >= 0 && random_fraction < 1, "random fraction must lie in [0, 1)");
    require(!region.empty() && region.volume() > 0, "region volume must be positive");
    require(options.polygon_sides >= 3, "fracture polygons need at least three sides");
    for (const auto& s : sets) s.validate();

    Dfn dfn;
    dfn.region = region;
    dfn.seed = seed;
    double volume = region.volume();
    for (const auto& src : make_sources(sets, random_fraction, options)) {
        Rng rng(source_seed(seed, src));
        double target = src.p32 * volume;
        double accumulated = 0;
        while (accumulated < target) {
            if (dfn.fractures.size() >= options.max_fractures) {
                throw GenerationError("fracture count cap reached before the target intensity");
            }
            auto poly = draw_fracture(src, region, options, rng);
            accumulated += area_in_region(poly, region);
            dfn.fractures.push_back({std::move(poly), src.set_id, src.rank});
        }
    }
    return dfn;
}

double achieved_p32(const Dfn& dfn, std::optional<int> set_id) {
    double area = 0;
    for (const auto& f : dfn.fractures) {
        if (!set_id || f.set_id == *set_id) area += area_in_region(f.polygon, dfn.region);
    }
    return area / dfn.region.volume();
}

namespace {

std::vector<Vec3> dedupe_loop(std::vector<Vec3> loop) {
    std::vector<Vec3> out;
    for (const auto& p : loop) {
        if (out.empty() || distance(out.back(), p) > 1e-10) out.push_back(p);
    }
    while (out.size() > 1 && distance(out.front(), out.back()) <= 1e-10) out.pop_back();
    return out;
}

std::optional<Polygon3> make_polygon(std::vector<Vec3> loop) {
    loop = dedupe_loop(std::move(loop));
    if (loop.size() < 3 || norm(loop_area_vector(loop)) < 1e-9) return std::nullopt;
    try {
        return Polygon3(std::move(loop));
    } catch (const ValidationError&) {
        return std::nullopt;
    }
}

}  // namespace

namespace {

constexpr double kTerminationEps = 1e-9;

//! Clip `young` at `old`'s plane when they intersect, keeping the side that
//! holds young's centroid. Returns true if young changed.
bool terminate_against(Polygon3& young, const Polygon3& old, Rng& rng, double termination_prob) {
    if (distance(old.centroid(), young.centroid()) > old.bounding_radius() + young.bounding_radius()) return false;
    if (!intersect_polygons(old, young, kTerminationEps)) return false;
    if (rng.uniform() >= termination_prob) return false;
    const Plane& cut = old.plane();
    double side = cut.signed_distance(young.centroid());
    std::optional<Polygon3> kept;
    if (side > 0) {
        kept = make_polygon(clip_loop(young.vertices(), cut, 1.0));
    } else if (side < 0) {
        kept = make_polygon(clip_loop(young.vertices(), cut, -1.0));
    } else {
        auto pos = make_polygon(clip_loop(young.vertices(), cut, 1.0));
        auto neg = make_polygon(clip_loop(young.vertices(), cut, -1.0));
        kept = (pos && (!neg || pos->area() >= neg->area())) ? pos : neg;
    }
    if (!kept || kept->area() > young.area()) return false;
    young = *kept;
    return true;
}

}  // namespace

Dfn apply_chronology_termination(const Dfn& dfn, double termination_prob, std::uint64_t seed) {
    require(termination_prob >= 0 && termination_prob <= 1, "termination probability must lie in [0, 1]");
    Dfn out = dfn;
    if (termination_prob == 0 || out.fractures.size() < 2) return out;
    auto& fr = out.fractures;
    std::size_t n = fr.size();

    // Older fractures are final by the time a younger one is clipped.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fr[a].rank < fr[b].rank; });

    // Sweep along the longest region axis to prune pairs.
    Vec3 ext = out.region.extent();
    int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    std::vector<double> centre_c(n), radius(n);
    for (std::size_t i = 0; i < n; ++i) {
        centre_c[i] = fr[i].polygon.centroid()[axis];
        radius[i] = fr[i].polygon.bounding_radius();
    }
    std::vector<std::size_t> by_lo(n);
    std::iota(by_lo.begin(), by_lo.end(), 0);
    std::sort(by_lo.begin(), by_lo.end(), [&](std::size_t a, std::size_t b) {
        double la = centre_c[a] - radius[a], lb = centre_c[b] - radius[b];
        return la < lb || (la == lb && a < b);
    });

    for (std::size_t j : order) {
        // Bounds from the unclipped polygon stay conservative.
        double lo_j = centre_c[j] - radius[j], hi_j = centre_c[j] + radius[j];
        std::vector<std::size_t> older;
        for (std::size_t i : by_lo) {
            if (centre_c[i] - radius[i] > hi_j) break;
            if (centre_c[i] + radius[i] < lo_j || fr[i].rank >= fr[j].rank) continue;
            older.push_back(i);
        }
        std::sort(older.begin(), older.end());
        for (std::size_t i : older) {
            Rng rng(derive_seed(seed, i, j));
            terminate_against(fr[j].polygon, fr[i].polygon, rng, termination_prob);
        }
    }
    return out;
}

namespace {

//! Hashed grid of fracture bounding boxes for neighbour queries.
class FractureGrid {
  public:
    explicit FractureGrid(double cell) : h_(cell) {}

    void insert(std::size_t id, const Aabb& box) {
        auto [lo, hi] = range(box);
        for (long x = lo[0]; x <= hi[0]; ++x)
            for (long y = lo[1]; y <= hi[1]; ++y)
                for (long z = lo[2]; z <= hi[2]; ++z) cells_[key(x, y, z)].push_back(id);
    }

    std::vector<std::size_t> query(const Aabb& box) const {
        std::vector<std::size_t> out;
        auto [lo, hi] = range(box);
        for (long x = lo[0]; x <= hi[0]; ++x)
            for (long y = lo[1]; y <= hi[1]; ++y)
                for (long z = lo[2]; z <= hi[2]; ++z) {
                    auto it = cells_.find(key(x, y, z));
                    if (it != cells_.end()) out.insert(out.end(), it->second.begin(), it->second.end());
                }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

  private:
    static std::uint64_t key(long x, long y, long z) {
        auto u = [](long v) { return static_cast<std::uint64_t>(v) & 0x1fffff; };
        return (u(x) << 42) | (u(y) << 21) | u(z);
    }
    std::pair<std::array<long, 3>, std::array<long, 3>> range(const Aabb& b) const {
        auto c = [&](double v) { return static_cast<long>(std::floor(v / h_)); };
        return {{c(b.lo.x), c(b.lo.y), c(b.lo.z)}, {c(b.hi.x), c(b.hi.y), c(b.hi.z)}};
    }

    double h_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> cells_;
};

Aabb polygon_bounds(const Polygon3& p) {
    Aabb b;
    for (const auto& v : p.vertices()) b.expand(v);
    return b;
}

}  // namespace

Dfn generate_terminated_dfn(std::span<const JointSet> sets, double random_fraction, const Aabb& region,
                            std::uint64_t seed, double termination_prob, const DfnOptions& options) {
    require(termination_prob >= 0 && termination_prob <= 1, "termination probability must lie in [0, 1]");
    require(random_fraction >= 0 && random_fraction < 1, "random fraction must lie in [0, 1)");
    require(!region.empty() && region.volume() > 0, "region volume must be positive");
    require(options.polygon_sides >= 3, "fracture polygons need at least three sides");
    for (const auto& s : sets) s.validate();

    auto sources = make_sources(sets, random_fraction, options);
    std::stable_sort(sources.begin(), sources.end(), [](const Source& a, const Source& b) { return a.rank < b.rank; });

    Dfn dfn;
    dfn.region = region;
    dfn.seed = seed;
    double volume = region.volume();
    FractureGrid grid(std::max(1.0, 0.5 * std::exp(options.random_size.mu)));
    std::uint64_t term_seed = derive_seed(seed, 0x7e4f1a7eULL);
    for (const auto& src : sources) {
        Rng rng(source_seed(seed, src));
        double target = src.p32 * volume;
        double accumulated = 0;
        while (accumulated < target) {
            if (dfn.fractures.size() >= options.max_fractures) {
                throw GenerationError("fracture count cap reached before the target intensity");
            }
            auto poly = draw_fracture(src, region, options, rng);
            if (termination_prob > 0) {
                Rng trng(derive_seed(term_seed, dfn.fractures.size()));
                for (std::size_t i : grid.query(polygon_bounds(poly))) {
                    if (dfn.fractures[i].rank < src.rank) terminate_against(poly, dfn.fractures[i].polygon, trng, termination_prob);
                }
            }
            accumulated += area_in_region(poly, region);
            grid.insert(dfn.fractures.size(), polygon_bounds(poly));
            dfn.fractures.push_back({std::move(poly), src.set_id, src.rank});
        }
    }
    return dfn;
}

std::string DfnSuiteConfig::hash() const {
    std::ostringstream os;
    os.precision(17);
    os << "region=" << region.lo.x << ',' << region.lo.y << ',' << region.lo.z << ',' << region.hi.x << ','
       << region.hi.y << ',' << region.hi.z << ";kappa=" << fisher_kappa << ";mu=" << size.mu << ";sigma=" << size.sigma
       << ";random_fraction=" << random_fraction << ";termination_prob=" << termination_prob
       << ";sides=" << options.polygon_sides << ";max=" << options.max_fractures << ";rmu=" << options.random_size.mu
       << ";rsigma=" << options.random_size.sigma << ";preserve=" << preserve_intensity;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(os.str())));
    return buf;
}

std::vector<JointSet> joint_sets_for_block(const Parallelepiped& block, const DfnSuiteConfig& config) {
    std::vector<JointSet> sets;
    auto templates = joint_sets_from_block(block);
    for (int j = 0; j < 3; ++j) {
        JointSet s;
        s.mean_orientation = templates[j].orientation;
        s.fisher_kappa = config.fisher_kappa;
        s.spacing = templates[j].spacing;
        s.p32 = estimate_p32(s.spacing);
        s.size = config.size;
        s.chronology_rank = j;
        sets.push_back(s);
    }
    return sets;
}

Dfn build_suite_member(const Parallelepiped& block, const DfnSuiteConfig& config, std::uint64_t master_seed,
                       std::size_t index) {
    auto sets = joint_sets_for_block(block, config);
    std::uint64_t seed = derive_seed(master_seed, index);
    Dfn dfn;
    if (config.preserve_intensity) {
        dfn = generate_terminated_dfn(sets, config.random_fraction, config.region, seed, config.termination_prob,
                                      config.options);
    } else {
        dfn = generate_dfn(sets, config.random_fraction, config.region, seed, config.options);
        dfn = apply_chronology_termination(dfn, config.termination_prob, derive_seed(seed, 0xC4120ULL));
    }
    dfn.provenance = config.hash();
    return dfn;
}

std::vector<Dfn> build_dfn_suite(std::span<const Parallelepiped> blocks, const DfnSuiteConfig& config,
                                 std::uint64_t master_seed) {
    std::vector<Dfn> suite;
    suite.reserve(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b) suite.push_back(build_suite_member(blocks[b], config, master_seed, b));
    return suite;
}

void write_dfn_jsonl(std::ostream& os, const Dfn& dfn) {
    for (std::size_t i = 0; i < dfn.fractures.size(); ++i) {
        const auto& f = dfn.fractures[i];
        nlohmann::ordered_json j;
        j["id"] = i;
        j["set_id"] = f.set_id;
        j["rank"] = f.rank;
        auto verts = nlohmann::json::array();
        for (const auto& v : f.polygon.vertices()) verts.push_back({v.x, v.y, v.z});
        j["vertices"] = std::move(verts);
        os << j.dump() << '\n';
    }
}

std::vector<Fracture> read_dfn_jsonl(std::istream& is) {
    std::vector<Fracture> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        std::vector<Vec3> verts;
        for (const auto& v : j.at("vertices")) verts.push_back({v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()});
        out.push_back({Polygon3(std::move(verts)), j.at("set_id").get<int>(), j.at("rank").get<int>()});
    }
    return out;
}

}  // namespace fracsynth
