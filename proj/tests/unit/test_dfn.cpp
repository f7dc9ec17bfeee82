#include <limits>
#include <sstream>

#include "doctest.h"
#include "fracsynth/dfn.hpp"
#include "fracsynth/error.hpp"

using namespace fracsynth;

namespace {

JointSet flat_set(Orientation o, double spacing) {
    JointSet s;
    s.mean_orientation = o;
    s.spacing = spacing;
    s.p32 = estimate_p32(spacing);
    return s;
}

std::vector<JointSet> three_sets() {
    auto a = flat_set({80, 90}, 2), b = flat_set({80, 0}, 2), c = flat_set({10, 45}, 3);
    b.chronology_rank = 1;
    c.chronology_rank = 2;
    return {a, b, c};
}

bool same_polygon(const Polygon3& a, const Polygon3& b) {
    if (a.vertices().size() != b.vertices().size()) return false;
    for (std::size_t i = 0; i < a.vertices().size(); ++i) {
        if (a.vertices()[i] != b.vertices()[i]) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("estimate_p32") {
    CHECK(estimate_p32(1) == 1.0);
    CHECK(estimate_p32(0.5) == 2.0);
    CHECK(estimate_p32(4) == 0.25);
    CHECK_THROWS_AS(estimate_p32(0), ValidationError);
    CHECK_THROWS_AS(estimate_p32(-1), ValidationError);
}

TEST_CASE("sample_fisher concentrates with kappa") {
    Rng rng(4);
    Vec3 mean = normalized(Vec3{1, 2, 3});
    CHECK(distance(sample_fisher(mean, std::numeric_limits<double>::infinity(), rng), mean) < 1e-12);
    // Mean resultant cosine for a Fisher distribution: coth(k) - 1/k.
    for (double kappa : {2.0, 20.0, 100.0}) {
        double sum = 0;
        int n = 20000;
        for (int i = 0; i < n; ++i) sum += dot(sample_fisher(mean, kappa, rng), mean);
        double expect = 1.0 / std::tanh(kappa) - 1.0 / kappa;
        CHECK(sum / n == doctest::Approx(expect).epsilon(0.01));
    }
    double sum = 0;
    for (int i = 0; i < 20000; ++i) sum += dot(sample_fisher(mean, 0, rng), mean);
    CHECK(std::abs(sum / 20000) < 0.02);
}

TEST_CASE("generated P32 matches the parallel-plane target") {
    // Huge, undispersed discs cross the whole region, so every fracture
    // contributes a full planar section of the box.
    Aabb region{{0, 0, 0}, {10, 10, 10}};
    JointSet s = flat_set({35, 120}, 1);
    s.fisher_kappa = std::numeric_limits<double>::infinity();
    s.size = {std::log(1000.0), 0};
    double total = 0;
    int seeds = 24;
    for (int seed = 0; seed < seeds; ++seed) {
        auto dfn = generate_dfn(std::span(&s, 1), 0, region, seed);
        double p = achieved_p32(dfn, 0);
        CHECK(p >= 1.0);
        total += p;
    }
    CHECK(total / seeds == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("generated P32 within 15% per set for default sizes") {
    Aabb region{{0, 0, 0}, {20, 20, 20}};
    auto sets = three_sets();
    for (auto& s : sets) s.size = {std::log(4.0), 0.5};
    std::array<double, 3> sum{};
    int seeds = 20;
    for (int seed = 0; seed < seeds; ++seed) {
        auto dfn = generate_dfn(sets, 0, region, 100 + seed);
        for (int j = 0; j < 3; ++j) sum[j] += achieved_p32(dfn, j);
    }
    for (int j = 0; j < 3; ++j) CHECK(std::abs(sum[j] / seeds - sets[j].p32) <= 0.15 * sets[j].p32);
}

TEST_CASE("generate_dfn basics") {
    Aabb region{{0, 0, 0}, {15, 15, 15}};
    auto sets = three_sets();
    auto dfn = generate_dfn(sets, 0, region, 9);
    REQUIRE(!dfn.fractures.empty());
    for (const auto& f : dfn.fractures) {
        CHECK((f.set_id >= 0 && f.set_id <= 2));
        CHECK(region.contains(f.polygon.centroid()));
        CHECK(f.polygon.area() > 0);
        CHECK(f.polygon.vertices().size() == 12);
    }

    auto again = generate_dfn(sets, 0, region, 9);
    REQUIRE(again.fractures.size() == dfn.fractures.size());
    for (std::size_t i = 0; i < dfn.fractures.size(); ++i) CHECK(same_polygon(again.fractures[i].polygon, dfn.fractures[i].polygon));

    auto mixed = generate_dfn(sets, 0.25, region, 9);
    double random = achieved_p32(mixed, kRandomSet), all = achieved_p32(mixed);
    CHECK(random / all == doctest::Approx(0.25).epsilon(0.2));
    // Set streams are decoupled: adding random joints leaves set 0 untouched.
    CHECK(same_polygon(mixed.fractures[0].polygon, dfn.fractures[0].polygon));

    CHECK_THROWS_AS(generate_dfn(sets, 1.0, region, 1), ValidationError);
    CHECK_THROWS_AS(generate_dfn(sets, 0, Aabb{{0, 0, 0}, {0, 1, 1}}, 1), ValidationError);
    DfnOptions tight;
    tight.max_fractures = 5;
    CHECK_THROWS_AS(generate_dfn(sets, 0, region, 1, tight), GenerationError);
}

TEST_CASE("chronology termination examples") {
    Aabb region{{-5, -5, -5}, {5, 5, 5}};
    Dfn dfn;
    dfn.region = region;
    // Older vertical disc in the xz plane; younger horizontal disc crossing it.
    dfn.fractures.push_back({Polygon3::regular({0, 0, 0}, {0, 1, 0}, 2, 12), 0, 0});
    dfn.fractures.push_back({Polygon3::regular({0, 0.3, 0}, {0, 0, 1}, 1, 12), 1, 1});

    auto same = apply_chronology_termination(dfn, 0, 1);
    for (std::size_t i = 0; i < 2; ++i) CHECK(same_polygon(same.fractures[i].polygon, dfn.fractures[i].polygon));

    auto cut = apply_chronology_termination(dfn, 1, 1);
    REQUIRE(cut.fractures.size() == 2);
    CHECK(same_polygon(cut.fractures[0].polygon, dfn.fractures[0].polygon));
    const auto& half = cut.fractures[1].polygon;
    for (const auto& v : half.vertices()) CHECK(v.y >= -1e-12);
    // Hand clip: the chord at 0.3 from the centre of a 12-gon of circumradius 1.
    auto full = dfn.fractures[1].polygon.vertices();
    std::vector<Vec3> expect_loop = clip_loop(full, Plane({0, 0, 0}, {0, 1, 0}), 1.0);
    CHECK(half.area() == doctest::Approx(norm(loop_area_vector(expect_loop))));
    CHECK(half.area() < dfn.fractures[1].polygon.area());

    SUBCASE("centred crossing keeps a half disc") {
        Dfn d = dfn;
        d.fractures[1] = {Polygon3::regular({0, 0, 0}, {0, 0, 1}, 1, 12, 0.1), 1, 1};
        auto c = apply_chronology_termination(d, 1, 3);
        CHECK(c.fractures[1].polygon.area() ==
              doctest::Approx(d.fractures[1].polygon.area() / 2).epsilon(1e-9));
    }
    SUBCASE("disjoint pair unchanged") {
        Dfn d = dfn;
        d.fractures[1] = {Polygon3::regular({0, 3, 0}, {0, 0, 1}, 1, 12), 1, 1};
        auto c = apply_chronology_termination(d, 1, 3);
        CHECK(same_polygon(c.fractures[1].polygon, d.fractures[1].polygon));
    }
    SUBCASE("equal ranks never terminate") {
        Dfn d = dfn;
        d.fractures[1].rank = 0;
        auto c = apply_chronology_termination(d, 1, 3);
        CHECK(same_polygon(c.fractures[1].polygon, d.fractures[1].polygon));
    }
}

TEST_CASE("termination is monotone and keeps older fractures") {
    Aabb region{{0, 0, 0}, {20, 20, 20}};
    auto sets = three_sets();
    for (auto& s : sets) s.size = {std::log(4.0), 0.5};
    auto dfn = generate_dfn(sets, 0.1, region, 77);
    auto out = apply_chronology_termination(dfn, 0.8, 5);
    REQUIRE(out.fractures.size() == dfn.fractures.size());
    int clipped = 0;
    for (std::size_t i = 0; i < dfn.fractures.size(); ++i) {
        CHECK(out.fractures[i].polygon.area() <= dfn.fractures[i].polygon.area() + 1e-12);
        CHECK(out.fractures[i].rank == dfn.fractures[i].rank);
        CHECK(out.fractures[i].set_id == dfn.fractures[i].set_id);
        if (dfn.fractures[i].rank == 0) CHECK(same_polygon(out.fractures[i].polygon, dfn.fractures[i].polygon));
        if (!same_polygon(out.fractures[i].polygon, dfn.fractures[i].polygon)) ++clipped;
    }
    CHECK(clipped > 0);
    CHECK(achieved_p32(out) < achieved_p32(dfn));
}

TEST_CASE("build_dfn_suite") {
    DfnSuiteConfig cfg;
    cfg.region = {{0, 0, 0}, {12, 12, 12}};
    cfg.size = {std::log(3.0), 0.3};
    auto blocks = sample_parallelepipeds(3, {}, 1);
    auto suite = build_dfn_suite(blocks, cfg, 42);
    REQUIRE(suite.size() == 3);
    auto again = build_dfn_suite(blocks, cfg, 42);
    for (std::size_t b = 0; b < 3; ++b) {
        REQUIRE(again[b].fractures.size() == suite[b].fractures.size());
        CHECK(suite[b].provenance == cfg.hash());
        for (std::size_t i = 0; i < suite[b].fractures.size(); ++i) {
            CHECK(same_polygon(again[b].fractures[i].polygon, suite[b].fractures[i].polygon));
        }
    }
    CHECK(build_dfn_suite(std::span<const Parallelepiped>{}, cfg, 42).empty());

    DfnSuiteConfig other = cfg;
    other.termination_prob = 0.5;
    CHECK(other.hash() != cfg.hash());

    std::stringstream ss;
    write_dfn_jsonl(ss, suite[0]);
    auto back = read_dfn_jsonl(ss);
    REQUIRE(back.size() == suite[0].fractures.size());
    CHECK(same_polygon(back.back().polygon, suite[0].fractures.back().polygon));
    CHECK(back.back().set_id == suite[0].fractures.back().set_id);
}

TEST_CASE("terminated generation keeps per-set intensity") {
    Aabb region{{0, 0, 0}, {20, 20, 20}};
    auto sets = three_sets();
    for (auto& s : sets) s.size = {std::log(3.0), 0.3};
    DfnOptions opt;
    opt.random_size = {std::log(3.0), 0.3};

    auto plain = generate_dfn(sets, 0.1, region, 5, opt);
    auto same = generate_terminated_dfn(sets, 0.1, region, 5, 0.0, opt);
    REQUIRE(same.fractures.size() == plain.fractures.size());
    for (std::size_t i = 0; i < plain.fractures.size(); ++i) {
        CHECK(same_polygon(same.fractures[i].polygon, plain.fractures[i].polygon));
    }

    auto term = generate_terminated_dfn(sets, 0.1, region, 5, 0.8, opt);
    auto again = generate_terminated_dfn(sets, 0.1, region, 5, 0.8, opt);
    REQUIRE(term.fractures.size() == again.fractures.size());
    CHECK(term.fractures.size() > plain.fractures.size());
    std::size_t n0 = 0, clipped = 0;
    for (std::size_t i = 0; i < term.fractures.size(); ++i) {
        const auto& f = term.fractures[i];
        CHECK(same_polygon(f.polygon, again.fractures[i].polygon));
        if (f.set_id == 0) {
            // Oldest set draws the same stream and is never cut.
            CHECK(same_polygon(f.polygon, plain.fractures[n0].polygon));
            ++n0;
        } else if (f.polygon.vertices().size() != 12) {
            ++clipped;
        }
    }
    CHECK(clipped > 0);
    for (int s = 0; s < 3; ++s) {
        double p = achieved_p32(term, s);
        CHECK(p >= sets[s].p32);
        CHECK(p < sets[s].p32 * 1.05);
    }
    CHECK_THROWS_AS(generate_terminated_dfn(sets, 0.1, region, 5, 1.5, opt), ValidationError);
}
