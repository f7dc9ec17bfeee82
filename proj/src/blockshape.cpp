#include "fracsynth/blockshape.hpp"

#include <algorithm>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "fracsynth/error.hpp"
#include "fracsynth/rng.hpp"
#include "json.hpp"

namespace fracsynth {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kMinGram = 0.05;

}  // namespace

void Parallelepiped::validate() const {
    for (double a : edges) require(std::isfinite(a) && a > 0, "edge lengths must be positive");
    require(edges[0] <= edges[1] && edges[1] <= edges[2], "edge lengths must be sorted ascending");
    for (double a : {alpha12, alpha13, alpha23}) {
        require(std::isfinite(a) && a > 30 && a < 150, "inter-edge angles must lie in (30, 150) degrees");
    }
    require(gram() > 1e-12, "parallelepiped has zero volume");
}

double Parallelepiped::gram() const {
    double c12 = std::cos(alpha12 * kDeg), c13 = std::cos(alpha13 * kDeg), c23 = std::cos(alpha23 * kDeg);
    return 1 - c12 * c12 - c13 * c13 - c23 * c23 + 2 * c12 * c13 * c23;
}

std::array<Vec3, 3> Parallelepiped::edge_directions() const {
    double c12 = std::cos(alpha12 * kDeg), s12 = std::sin(alpha12 * kDeg);
    double c13 = std::cos(alpha13 * kDeg), c23 = std::cos(alpha23 * kDeg);
    double y3 = (c23 - c12 * c13) / s12;
    double z3 = std::sqrt(std::max(0.0, 1 - c13 * c13 - y3 * y3));
    return {Vec3{1, 0, 0}, Vec3{c12, s12, 0}, Vec3{c13, y3, z3}};
}

std::array<Vec3, 3> Parallelepiped::edge_vectors() const {
    auto u = edge_directions();
    return {u[0] * edges[0], u[1] * edges[1], u[2] * edges[2]};
}

double Parallelepiped::volume() const {
    return edges[0] * edges[1] * edges[2] * std::sqrt(std::max(0.0, gram()));
}

Parallelepiped Parallelepiped::scaled(double s) const {
    Parallelepiped p = *this;
    for (double& a : p.edges) a *= s;
    return p;
}

BlockShapeParams shape_params(const Parallelepiped& p) {
    return {p.edges[1] / p.edges[0], p.edges[2] / p.edges[1]};
}

std::string to_string(PalmstromClass c) {
    switch (c) {
        case PalmstromClass::Equidimensional: return "Equidimensional";
        case PalmstromClass::Flat: return "Flat";
        case PalmstromClass::Long: return "Long";
        case PalmstromClass::LongFlat: return "LongFlat";
    }
    return "?";
}

PalmstromClass palmstrom_from_string(const std::string& s) {
    for (auto c : {PalmstromClass::Equidimensional, PalmstromClass::Flat, PalmstromClass::Long,
                   PalmstromClass::LongFlat}) {
        if (to_string(c) == s) return c;
    }
    throw ValidationError("unknown Palmstrom class '" + s + "'");
}

void SinghGrid::validate() const {
    require(std::is_sorted(flatness_bounds.begin(), flatness_bounds.end()), "Singh flatness bounds must be sorted");
    require(std::is_sorted(elongation_bounds.begin(), elongation_bounds.end()),
            "Singh elongation bounds must be sorted");
    require(names.size() == flatness_bounds.size() + 1, "Singh grid needs one row per flatness bin");
    for (const auto& row : names) {
        require(row.size() == elongation_bounds.size() + 1, "Singh grid needs one column per elongation bin");
    }
}

std::vector<std::string> SinghGrid::classes() const {
    std::vector<std::string> out;
    for (const auto& row : names)
        for (const auto& n : row)
            if (std::find(out.begin(), out.end(), n) == out.end()) out.push_back(n);
    return out;
}

namespace {

// Number of bounds strictly below v; a value on a bound stays in the lower bin.
std::size_t bin_of(double v, const std::vector<double>& bounds) {
    return static_cast<std::size_t>(std::count_if(bounds.begin(), bounds.end(), [&](double b) { return v > b; }));
}

}  // namespace

BlockShapeClass classify(const Parallelepiped& p, const ClassThresholds& t) {
    auto s = shape_params(p);
    bool flat = s.flatness > t.palmstrom_flatness;
    bool elongated = s.elongation > t.palmstrom_elongation;
    BlockShapeClass c;
    c.palmstrom = flat ? (elongated ? PalmstromClass::LongFlat : PalmstromClass::Flat)
                       : (elongated ? PalmstromClass::Long : PalmstromClass::Equidimensional);
    c.singh = t.singh.names.at(bin_of(s.flatness, t.singh.flatness_bounds))
                  .at(bin_of(s.elongation, t.singh.elongation_bounds));
    return c;
}

void SamplingRanges::validate() const {
    auto check = [](const Interval& r, const char* name, double min_lo, double max_hi) {
        require(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi,
                std::string("sampling interval '") + name + "' is empty or inverted");
        require(r.lo >= min_lo && r.hi <= max_hi, std::string("sampling interval '") + name + "' is out of bounds");
    };
    check(a1, "a1", 1e-9, 1e9);
    check(flatness, "flatness", 1.0, 1e9);
    check(elongation, "elongation", 1.0, 1e9);
    check(alpha12, "alpha12", 30.0 + 1e-9, 150.0 - 1e-9);
    check(alpha13, "alpha13", 30.0 + 1e-9, 150.0 - 1e-9);
    check(alpha23, "alpha23", 30.0 + 1e-9, 150.0 - 1e-9);
}

std::vector<Parallelepiped> sample_parallelepipeds(std::size_t n, const SamplingRanges& ranges,
                                                   std::uint64_t seed) {
    require(n >= 1, "block count must be at least 1");
    ranges.validate();
    Rng rng(seed);
    constexpr int kDims = 6;
    std::array<std::vector<std::uint32_t>, kDims> strata;
    for (auto& perm : strata) {
        perm.resize(n);
        std::iota(perm.begin(), perm.end(), 0u);
        rng.shuffle(perm.begin(), perm.end());
    }
    auto stratified = [&](int dim, std::size_t i) { return (strata[dim][i] + rng.uniform()) / static_cast<double>(n); };
    auto log_lerp = [](const Interval& r, double u) {
        return r.lo == r.hi ? r.lo : std::exp(std::log(r.lo) + u * (std::log(r.hi) - std::log(r.lo)));
    };
    auto lin_lerp = [](const Interval& r, double u) { return r.lo + u * (r.hi - r.lo); };

    std::vector<Parallelepiped> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        double a1 = log_lerp(ranges.a1, stratified(0, i));
        double f = log_lerp(ranges.flatness, stratified(1, i));
        double e = log_lerp(ranges.elongation, stratified(2, i));
        Parallelepiped p;
        p.edges = {a1, a1 * f, a1 * f * e};
        p.alpha12 = lin_lerp(ranges.alpha12, stratified(3, i));
        p.alpha13 = lin_lerp(ranges.alpha13, stratified(4, i));
        p.alpha23 = lin_lerp(ranges.alpha23, stratified(5, i));
        // Angle triples that collapse the cell are redrawn inside their strata
        // first, then anywhere in the range.
        for (int attempt = 0; p.gram() < kMinGram; ++attempt) {
            require(attempt < 1000, "angle ranges admit no non-degenerate parallelepiped");
            bool local = attempt < 64;
            auto redraw = [&](int dim, const Interval& r) {
                return lin_lerp(r, local ? stratified(dim, i) : rng.uniform());
            };
            p.alpha12 = redraw(3, ranges.alpha12);
            p.alpha13 = redraw(4, ranges.alpha13);
            p.alpha23 = redraw(5, ranges.alpha23);
        }
        out.push_back(p);
    }
    return out;
}

std::vector<std::size_t> select_representatives(std::span<const Parallelepiped> pop, std::size_t k,
                                                const ClassThresholds& t) {
    require(k <= pop.size(), "cannot select more blocks than the population holds");
    t.singh.validate();
    std::size_t n = pop.size();
    std::vector<Vec2> feat(n);
    std::vector<BlockShapeClass> cls(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto s = shape_params(pop[i]);
        feat[i] = {std::log(s.flatness), std::log(s.elongation)};
        cls[i] = classify(pop[i], t);
    }

    std::vector<std::size_t> chosen;
    std::vector<bool> taken(n, false);
    std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
    std::set<PalmstromClass> covered_p;
    std::set<std::string> covered_s;
    auto take = [&](std::size_t i) {
        taken[i] = true;
        chosen.push_back(i);
        covered_p.insert(cls[i].palmstrom);
        covered_s.insert(cls[i].singh);
        for (std::size_t j = 0; j < n; ++j) min_dist[j] = std::min(min_dist[j], norm(feat[j] - feat[i]));
    };
    // Farthest member of `members` from the current selection; with nothing
    // selected yet, the member nearest the group's mean feature.
    auto pick_from = [&](const std::vector<std::size_t>& members) {
        std::size_t best = members.front();
        if (chosen.empty()) {
            Vec2 mean{};
            for (auto i : members) mean = mean + feat[i];
            mean = mean * (1.0 / static_cast<double>(members.size()));
            double bd = std::numeric_limits<double>::infinity();
            for (auto i : members) {
                double d = norm(feat[i] - mean);
                if (d < bd) bd = d, best = i;
            }
        } else {
            double bd = -1;
            for (auto i : members) {
                if (min_dist[i] > bd) bd = min_dist[i], best = i;
            }
        }
        return best;
    };

    // Coverage pass: Palmstrom classes, then Singh classes.
    std::vector<std::vector<std::size_t>> groups;
    for (auto pc : {PalmstromClass::Equidimensional, PalmstromClass::Flat, PalmstromClass::Long,
                    PalmstromClass::LongFlat}) {
        std::vector<std::size_t> m;
        for (std::size_t i = 0; i < n; ++i)
            if (cls[i].palmstrom == pc) m.push_back(i);
        groups.push_back(std::move(m));
    }
    std::size_t n_palmstrom_groups = groups.size();
    for (const auto& name : t.singh.classes()) {
        std::vector<std::size_t> m;
        for (std::size_t i = 0; i < n; ++i)
            if (cls[i].singh == name) m.push_back(i);
        groups.push_back(std::move(m));
    }
    for (std::size_t g = 0; g < groups.size() && chosen.size() < k; ++g) {
        const auto& m = groups[g];
        if (m.empty()) continue;
        bool covered = g < n_palmstrom_groups ? covered_p.count(cls[m.front()].palmstrom) > 0
                                              : covered_s.count(cls[m.front()].singh) > 0;
        if (covered) continue;
        take(pick_from(m));
    }

    // Spread pass: farthest-point sampling; ties go to the lowest index.
    while (chosen.size() < k) {
        std::size_t best = n;
        double bd = -1;
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i] && min_dist[i] > bd) bd = min_dist[i], best = i;
        }
        take(best);
    }
    std::sort(chosen.begin(), chosen.end());
    return chosen;
}

std::array<JointSetTemplate, 3> joint_sets_from_block(const Parallelepiped& p) {
    p.validate();
    auto u = p.edge_directions();
    std::array<JointSetTemplate, 3> out;
    for (int j = 0; j < 3; ++j) {
        Vec3 n = normalized(cross(u[(j + 1) % 3], u[(j + 2) % 3]));
        if (n.z < 0) n = -n;
        out[j].normal = n;
        out[j].orientation = normal_to_orientation(n);
        out[j].spacing = p.edges[j] * std::abs(dot(u[j], n));
    }
    return out;
}

//---------------------------------------------------------------------------//
// I/O
//---------------------------------------------------------------------------//

void write_blocks_csv(std::ostream& os, std::span<const BlockRecord> blocks, const ClassThresholds& t) {
    os << "id,a1,a2,a3,alpha12,alpha13,alpha23,f,e,palmstrom,singh\n";
    char buf[512];
    for (const auto& r : blocks) {
        auto s = shape_params(r.block);
        auto c = classify(r.block, t);
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", r.id,
                      r.block.edges[0], r.block.edges[1], r.block.edges[2], r.block.alpha12, r.block.alpha13,
                      r.block.alpha23, s.flatness, s.elongation);
        os << buf << to_string(c.palmstrom) << ',' << c.singh << '\n';
    }
}

std::vector<BlockRecord> read_blocks_csv(std::istream& is) {
    std::vector<BlockRecord> out;
    std::string line;
    require(static_cast<bool>(std::getline(is, line)), "blocks CSV is empty");
    require(line.rfind("id,a1,a2,a3,alpha12,alpha13,alpha23", 0) == 0, "blocks CSV has an unexpected header");
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        require(cells.size() >= 7, "blocks CSV row has too few columns");
        BlockRecord r;
        r.id = std::stoul(cells[0]);
        r.block.edges = {std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])};
        r.block.alpha12 = std::stod(cells[4]);
        r.block.alpha13 = std::stod(cells[5]);
        r.block.alpha23 = std::stod(cells[6]);
        r.block.validate();
        out.push_back(r);
    }
    return out;
}

void write_selection_jsonl(std::ostream& os, std::span<const BlockRecord> blocks, const ClassThresholds& t) {
    for (const auto& r : blocks) {
        auto c = classify(r.block, t);
        auto s = shape_params(r.block);
        nlohmann::ordered_json j;
        j["id"] = r.id;
        j["a1"] = r.block.edges[0];
        j["a2"] = r.block.edges[1];
        j["a3"] = r.block.edges[2];
        j["alpha12"] = r.block.alpha12;
        j["alpha13"] = r.block.alpha13;
        j["alpha23"] = r.block.alpha23;
        j["f"] = s.flatness;
        j["e"] = s.elongation;
        j["palmstrom"] = to_string(c.palmstrom);
        j["singh"] = c.singh;
        os << j.dump() << '\n';
    }
}

std::vector<BlockRecord> read_selection_jsonl(std::istream& is) {
    std::vector<BlockRecord> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line);
        BlockRecord r;
        r.id = j.at("id").get<std::size_t>();
        r.block.edges = {j.at("a1").get<double>(), j.at("a2").get<double>(), j.at("a3").get<double>()};
        r.block.alpha12 = j.at("alpha12").get<double>();
        r.block.alpha13 = j.at("alpha13").get<double>();
        r.block.alpha23 = j.at("alpha23").get<double>();
        r.block.validate();
        out.push_back(r);
    }
    return out;
}

}  // namespace fracsynth
