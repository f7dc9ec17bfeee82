#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "fracsynth/dataset.hpp"
#include "fracsynth/error.hpp"

using namespace fracsynth;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    void touch(const std::string& name) const { std::ofstream(path / name) << "x"; }
};

ManifestRecord rec(const std::string& path, Domain d, SceneKind k, const std::string& site) {
    ManifestRecord r;
    r.image_path = path + ".png";
    r.mask_path = path + "_mask.png";
    r.domain = d;
    r.scene_kind = k;
    r.site_tag = site;
    return r;
}

//! Small roster shaped like the real one.
std::vector<ManifestRecord> roster() {
    std::vector<ManifestRecord> out;
    auto add = [&](int n, Domain d, SceneKind k, const std::string& site) {
        for (int i = 0; i < n; ++i) out.push_back(rec(site + "/" + site + "_" + std::to_string(i), d, k, site));
    };
    add(60, Domain::Synthetic, SceneKind::Slope, "dfn00");
    add(57, Domain::Synthetic, SceneKind::Slope, "dfn01");
    add(40, Domain::Synthetic, SceneKind::Box, "box");
    add(100, Domain::Real, SceneKind::Box, "cardboard");
    add(100, Domain::Real, SceneKind::Box, "pattern");
    add(150, Domain::Real, SceneKind::Slope, "larvik");
    add(137, Domain::Real, SceneKind::Slope, "rv4");
    return out;
}

}  // namespace

TEST_CASE("build_manifest pairs images with masks") {
    TempDir box("fracsynth_manifest_box");
    for (int i = 0; i < 200; ++i) {
        std::string stem = "box_t" + std::to_string(i % 8) + "_p" + std::to_string(1000 + i);
        box.touch(stem + ".png");
        box.touch(stem + "_mask.png");
    }
    ManifestRoot root{box.path.string(), Domain::Synthetic, SceneKind::Box, ""};
    auto res = build_manifest(std::span(&root, 1));
    CHECK(res.records.size() == 200);
    CHECK(res.errors.empty());
    CHECK(res.records[0].site_tag == "box");
    CHECK(res.records[0].texture_id == 0);
    CHECK(res.records[0].mask_path.ends_with("_mask.png"));
    CHECK(std::is_sorted(res.records.begin(), res.records.end(),
                         [](const auto& a, const auto& b) { return a.image_path < b.image_path; }));

    TempDir empty("fracsynth_manifest_empty");
    ManifestRoot e{empty.path.string(), Domain::Real, SceneKind::Slope, "larvik"};
    CHECK(build_manifest(std::span(&e, 1)).records.empty());

    TempDir odd("fracsynth_manifest_odd");
    odd.touch("a.png");
    odd.touch("a_mask.png");
    odd.touch("b.png");
    odd.touch("c_mask.png");
    odd.touch("notes.txt");
    ManifestRoot o{odd.path.string(), Domain::Real, SceneKind::Box, "pattern"};
    auto r2 = build_manifest(std::span(&o, 1));
    REQUIRE(r2.records.size() == 1);
    CHECK(r2.records[0].site_tag == "pattern");
    CHECK(r2.records[0].texture_id == -1);
    REQUIRE(r2.errors.size() == 2);
    CHECK(r2.errors[0].starts_with("missing mask: "));
    CHECK(r2.errors[1].starts_with("orphan mask: "));

    ManifestRoot missing{(box.path / "nope").string()};
    CHECK_THROWS_AS(build_manifest(std::span(&missing, 1)), ValidationError);
}

TEST_CASE("manifest JSONL round trip") {
    auto rs = roster();
    rs[3].split = Split::Test;
    rs[4].texture_id = 6;
    std::stringstream ss;
    write_manifest_jsonl(ss, rs);
    auto back = read_manifest_jsonl(ss);
    REQUIRE(back.size() == rs.size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
        CHECK(back[i].image_path == rs[i].image_path);
        CHECK(back[i].mask_path == rs[i].mask_path);
        CHECK(back[i].domain == rs[i].domain);
        CHECK(back[i].scene_kind == rs[i].scene_kind);
        CHECK(back[i].site_tag == rs[i].site_tag);
        CHECK(back[i].texture_id == rs[i].texture_id);
        CHECK(back[i].split == rs[i].split);
    }
    std::stringstream bad("{\"image\": 1}\n");
    CHECK_THROWS_AS(read_manifest_jsonl(bad), ValidationError);
    std::stringstream junk("not json\n");
    CHECK_THROWS_AS(read_manifest_jsonl(junk), ValidationError);
}

TEST_CASE("split_train_val") {
    std::vector<ManifestRecord> rs;
    const std::map<std::string, int> sizes{{"a", 333}, {"b", 251}, {"c", 416}};
    for (const auto& [site, n] : sizes)
        for (int i = 0; i < n; ++i) rs.push_back(rec(site + std::to_string(i), Domain::Real, SceneKind::Slope, site));
    REQUIRE(rs.size() == 1000);

    auto out = split_train_val(rs, 3);
    std::map<std::string, int> val;
    int n_val = 0, n_train = 0;
    for (const auto& r : out) {
        CHECK(r.split != Split::Unassigned);
        if (r.split == Split::Val) ++val[r.site_tag], ++n_val;
        if (r.split == Split::Train) ++n_train;
    }
    CHECK(n_val == 100);
    CHECK(n_train == 900);
    for (const auto& [site, n] : sizes) CHECK(std::abs(val[site] - 0.1 * n) <= 1.0);

    auto again = split_train_val(rs, 3);
    auto other = split_train_val(rs, 4);
    bool differs = false;
    for (std::size_t i = 0; i < rs.size(); ++i) {
        CHECK(again[i].split == out[i].split);
        differs |= other[i].split != out[i].split;
    }
    CHECK(differs);

    // Held-out test records are never touched.
    for (int i = 0; i < 50; ++i) rs[i].split = Split::Test;
    auto held = split_train_val(rs, 3);
    int val2 = 0;
    for (int i = 0; i < 1000; ++i) {
        if (i < 50) CHECK(held[i].split == Split::Test);
        val2 += held[i].split == Split::Val;
    }
    CHECK(val2 == 95);

    std::vector<ManifestRecord> few(rs.begin(), rs.begin() + 59);  // 50 test + 9
    CHECK_THROWS_AS(split_train_val(few, 1), ValidationError);
}

TEST_CASE("experiment definitions") {
    auto defs = experiment_definitions();
    REQUIRE(defs.size() == 10);
    std::set<std::string> names;
    for (const auto& d : defs) {
        names.insert(d.name);
        if (d.generalisation) {
            for (const auto& t : d.real_train_tags) {
                CHECK(std::find(d.real_test_tags.begin(), d.real_test_tags.end(), t) == d.real_test_tags.end());
            }
        } else {
            CHECK(d.real_train_tags == d.real_test_tags);
        }
    }
    CHECK(names.size() == 10);
    auto gl = std::find_if(defs.begin(), defs.end(), [](const auto& d) { return d.name == "Gen. Larvik"; });
    REQUIRE(gl != defs.end());
    CHECK(gl->real_train_tags == std::vector<std::string>{"rv4"});
    CHECK(gl->real_test_tags == std::vector<std::string>{"larvik"});
}

TEST_CASE("build_experiment_matrix structure") {
    auto rs = roster();
    auto plans = build_experiment_matrix(rs, 11);
    CHECK(plans.size() == 240);
    std::map<std::string, int> per_arch;
    for (const auto& p : plans) {
        ++per_arch[p.architecture];
        if (p.strategy == Strategy::Finetune) {
            CHECK(p.real_percent != 0);
            CHECK(p.real_percent != 100);
        }
        std::set<std::string> train_paths, test_paths;
        std::set<std::string> train_tags, test_tags;
        std::size_t real_train = 0, synth_train = 0;
        for (const auto& it : p.items) {
            if (it.role == "test") {
                CHECK(it.record.domain == Domain::Real);
                test_paths.insert(it.record.image_path);
                test_tags.insert(it.record.site_tag);
            } else {
                train_paths.insert(it.record.image_path);
                if (it.record.domain == Domain::Real) {
                    ++real_train;
                    train_tags.insert(it.record.site_tag);
                } else {
                    ++synth_train;
                    CHECK(it.record.scene_kind == p.experiment.scene_kind);
                }
            }
        }
        for (const auto& path : train_paths) CHECK(test_paths.count(path) == 0);
        double exact = p.real_percent / 100.0 * static_cast<double>(p.real_pool_size);
        CHECK(std::abs(static_cast<double>(real_train) - exact) <= 1.0);
        if (p.experiment.generalisation) {
            for (const auto& t : train_tags) CHECK(test_tags.count(t) == 0);
        }
        if (p.real_percent == 0) CHECK(real_train == 0);
        if (p.real_percent == 100) CHECK(synth_train == 0);
        if (p.real_percent < 100) CHECK(synth_train > 0);
        CHECK(p.count("val", Domain::Real) + p.count("val", Domain::Synthetic) > 0);
    }
    CHECK(per_arch["unet"] == 120);
    CHECK(per_arch["deeplabv3plus"] == 120);

    // The test set is fixed across proportions and strategies.
    std::map<std::string, std::set<std::string>> tests;
    for (const auto& p : plans) {
        std::set<std::string> t;
        for (const auto& it : p.items)
            if (it.role == "test") t.insert(it.record.image_path);
        auto [pos, fresh] = tests.emplace(p.experiment.slug, t);
        if (!fresh) CHECK(pos->second == t);
    }
    CHECK(tests.at("gen_larvik") == tests.at("larvik"));
}

TEST_CASE("experiment matrix proportions nest and reproduce") {
    auto rs = roster();
    MatrixOptions opt;
    opt.architectures = {"unet"};
    auto a = build_experiment_matrix(rs, 5, opt);
    auto b = build_experiment_matrix(rs, 5, opt);
    REQUIRE(a.size() == 120);
    REQUIRE(b.size() == a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        std::stringstream sa, sb;
        write_plan_jsonl(sa, a[i]);
        write_plan_jsonl(sb, b[i]);
        CHECK(sa.str() == sb.str());
    }

    auto real_train = [](const ExperimentPlan& p) {
        std::set<std::string> s;
        for (const auto& it : p.items)
            if (it.role != "test" && it.record.domain == Domain::Real) s.insert(it.record.image_path);
        return s;
    };
    std::set<std::string> prev;
    std::size_t pool = 0;
    for (const auto& p : a) {
        if (p.experiment.slug != "larvik" || p.strategy != Strategy::SimpleMixed) continue;
        auto cur = real_train(p);
        CHECK(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
        prev = cur;
        pool = p.real_pool_size;
    }
    CHECK(pool == 120);  // 150 larvik minus a 20% holdout
    CHECK(prev.size() == pool);

    auto no_rv4 = rs;
    no_rv4.erase(std::remove_if(no_rv4.begin(), no_rv4.end(), [](const auto& r) { return r.site_tag == "rv4"; }),
                 no_rv4.end());
    CHECK_THROWS_AS(build_experiment_matrix(no_rv4, 5, opt), ValidationError);
    auto no_synth = rs;
    no_synth.erase(std::remove_if(no_synth.begin(), no_synth.end(), [](const auto& r) { return r.domain == Domain::Synthetic; }),
                   no_synth.end());
    CHECK_THROWS_AS(build_experiment_matrix(no_synth, 5, opt), ValidationError);
}

TEST_CASE("plan JSONL round trip and datasheet") {
    auto rs = roster();
    MatrixOptions opt;
    opt.architectures = {"unet"};
    auto plans = build_experiment_matrix(rs, 5, opt);
    const auto& p = plans[17];
    std::stringstream ss;
    write_plan_jsonl(ss, p);
    auto back = read_plan_jsonl(ss);
    CHECK(back.name == p.name);
    CHECK(back.strategy == p.strategy);
    CHECK(back.real_percent == p.real_percent);
    CHECK(back.experiment.real_test_tags == p.experiment.real_test_tags);
    REQUIRE(back.items.size() == p.items.size());
    for (std::size_t i = 0; i < p.items.size(); ++i) {
        CHECK(back.items[i].role == p.items[i].role);
        CHECK(back.items[i].record.image_path == p.items[i].record.image_path);
    }
    std::stringstream headless("{\"type\":\"item\",\"role\":\"train\"}\n");
    CHECK_THROWS_AS(read_plan_jsonl(headless), ValidationError);

    std::stringstream sheet;
    write_datasheet(sheet, rs, plans, 5, "abc123");
    auto text = sheet.str();
    CHECK(text.find("| Synthetic DFN | 117 |") != std::string::npos);
    CHECK(text.find("| Real-world box | 200 |") != std::string::npos);
    CHECK(text.find("abc123") != std::string::npos);
    CHECK(text.find("Total plans: 120") != std::string::npos);
}
