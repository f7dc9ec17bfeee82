#include <set>
#include <sstream>

#include "doctest.h"
#include "fracsynth/blockshape.hpp"
#include "fracsynth/error.hpp"
#include "fracsynth/rng.hpp"

using namespace fracsynth;

namespace {

Parallelepiped box(double a, double b, double c) {
    Parallelepiped p;
    p.edges = {a, b, c};
    return p;
}

}  // namespace

TEST_CASE("sample_parallelepipeds") {
    auto pop = sample_parallelepipeds(8192, {}, 7);
    CHECK(pop.size() == 8192);
    for (const auto& p : pop) CHECK_NOTHROW(p.validate());
    CHECK(sample_parallelepipeds(8192, {}, 7)[4321].edges == pop[4321].edges);

    SamplingRanges unit;
    unit.a1 = unit.flatness = unit.elongation = {1, 1};
    unit.alpha12 = unit.alpha13 = unit.alpha23 = {90, 90};
    auto cube = sample_parallelepipeds(1, unit, 3);
    REQUIRE(cube.size() == 1);
    CHECK(cube[0].edges == std::array<double, 3>{1, 1, 1});
    CHECK(cube[0].volume() == doctest::Approx(1.0));

    SamplingRanges bad;
    bad.flatness = {3, 2};
    CHECK_THROWS_AS(sample_parallelepipeds(10, bad, 1), ValidationError);
    CHECK_THROWS_AS(sample_parallelepipeds(0, {}, 1), ValidationError);
}

TEST_CASE("sampling is stratified in every parameter") {
    // Each of n equal-probability strata of log(a1) holds exactly one block.
    std::size_t n = 64;
    SamplingRanges r;
    auto pop = sample_parallelepipeds(n, r, 99);
    std::set<long> strata;
    double lo = std::log(r.a1.lo), hi = std::log(r.a1.hi);
    for (const auto& p : pop) strata.insert(static_cast<long>((std::log(p.edges[0]) - lo) / (hi - lo) * n));
    CHECK(strata.size() == n);
}

TEST_CASE("classify under default thresholds") {
    auto c = classify(box(1, 1, 1));
    CHECK(c.palmstrom == PalmstromClass::Equidimensional);
    CHECK(c.singh == "Cubic");
    CHECK(classify(box(1, 1, 5)).palmstrom == PalmstromClass::Long);
    CHECK(classify(box(1, 3, 9)).palmstrom == PalmstromClass::LongFlat);
    CHECK(classify(box(1, 3, 3)).palmstrom == PalmstromClass::Flat);
    // On-boundary ratios go to the lower class.
    CHECK(classify(box(1, 2, 4)).palmstrom == PalmstromClass::Equidimensional);
    CHECK(classify(box(1, 1.5, 1.5)).singh == "Cubic");
    CHECK(classify(box(1, 4, 4)).singh == "Platy");
    CHECK(classify(box(1, 1, 4)).singh == "Elongated");
}

TEST_CASE("classify is scale invariant") {
    auto pop = sample_parallelepipeds(500, {}, 3);
    Rng rng(1);
    for (const auto& p : pop) {
        double s = std::exp(rng.uniform(-5, 5));
        auto a = classify(p), b = classify(p.scaled(s));
        CHECK(a.palmstrom == b.palmstrom);
        CHECK(a.singh == b.singh);
    }
}

TEST_CASE("select_representatives") {
    auto pop = sample_parallelepipeds(2048, {}, 5);
    auto sel = select_representatives(pop, 27);
    CHECK(sel.size() == 27);
    CHECK(std::is_sorted(sel.begin(), sel.end()));

    std::set<PalmstromClass> occupied, picked;
    for (const auto& p : pop) occupied.insert(classify(p).palmstrom);
    for (auto i : sel) picked.insert(classify(pop[i]).palmstrom);
    CHECK(picked == occupied);

    SUBCASE("k equal to the population returns everything") {
        std::vector<Parallelepiped> small(pop.begin(), pop.begin() + 10);
        auto all = select_representatives(small, 10);
        CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    }
    SUBCASE("idempotent on its own output") {
        std::vector<Parallelepiped> picks;
        for (auto i : sel) picks.push_back(pop[i]);
        auto again = select_representatives(picks, picks.size());
        CHECK(again.size() == picks.size());
        for (std::size_t i = 0; i < again.size(); ++i) CHECK(again[i] == i);
    }
    SUBCASE("degenerate spread breaks ties by index") {
        std::vector<Parallelepiped> cubes(6, box(1, 1, 1));
        CHECK(select_representatives(cubes, 3) == std::vector<std::size_t>{0, 1, 2});
    }
    CHECK_THROWS_AS(select_representatives(pop, pop.size() + 1), ValidationError);
}

TEST_CASE("joint_sets_from_block") {
    SUBCASE("unit cube") {
        auto sets = joint_sets_from_block(box(1, 1, 1));
        for (int j = 0; j < 3; ++j) {
            CHECK(sets[j].spacing == doctest::Approx(1.0));
            for (int k = j + 1; k < 3; ++k) CHECK(std::abs(dot(sets[j].normal, sets[k].normal)) < 1e-12);
        }
    }
    SUBCASE("scaled cube") {
        auto sets = joint_sets_from_block(box(1, 2, 4));
        CHECK(sets[0].spacing == doctest::Approx(1.0));
        CHECK(sets[1].spacing == doctest::Approx(2.0));
        CHECK(sets[2].spacing == doctest::Approx(4.0));
    }
    SUBCASE("sheared block") {
        Parallelepiped p = box(1, 1, 1);
        p.alpha12 = 60;
        auto sets = joint_sets_from_block(p);
        double angle = std::acos(dot(sets[0].normal, sets[1].normal)) * 180 / std::numbers::pi;
        CHECK((std::abs(angle - 120) < 1e-9 || std::abs(angle - 60) < 1e-9));
        CHECK(sets[0].spacing == doctest::Approx(std::sin(std::numbers::pi / 3)));
        CHECK(sets[1].spacing == doctest::Approx(std::sin(std::numbers::pi / 3)));
        CHECK(sets[2].spacing == doctest::Approx(1.0));
    }
}

TEST_CASE("joint sets reconstruct the block volume") {
    // Cells cut by three plane families have volume s1 s2 s3 / |det N|;
    // compare against a1 a2 a3 sqrt(Gram) from the edge description.
    auto pop = sample_parallelepipeds(300, {}, 21);
    for (const auto& p : pop) {
        auto sets = joint_sets_from_block(p);
        double det = dot(sets[0].normal, cross(sets[1].normal, sets[2].normal));
        double cell = sets[0].spacing * sets[1].spacing * sets[2].spacing / std::abs(det);
        CHECK(std::abs(cell - p.volume()) <= 1e-9 * p.volume());
    }
}

TEST_CASE("blocks CSV and selection JSONL round trip") {
    auto pop = sample_parallelepipeds(20, {}, 2);
    std::vector<BlockRecord> recs;
    for (std::size_t i = 0; i < pop.size(); ++i) recs.push_back({i, pop[i]});
    std::stringstream csv;
    write_blocks_csv(csv, recs);
    auto back = read_blocks_csv(csv);
    REQUIRE(back.size() == recs.size());
    CHECK(back[7].block.edges == recs[7].block.edges);
    CHECK(back[7].block.alpha23 == recs[7].block.alpha23);

    std::stringstream jl;
    write_selection_jsonl(jl, recs);
    auto back2 = read_selection_jsonl(jl);
    REQUIRE(back2.size() == recs.size());
    CHECK(back2[3].id == 3);
    CHECK(back2[3].block.edges == recs[3].block.edges);
}
