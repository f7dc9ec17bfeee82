#include "fracsynth/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <regex>
#include <set>

#include "fracsynth/error.hpp"
#include "fracsynth/rng.hpp"
#include "json.hpp"

namespace fracsynth {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string to_string(Domain d) { return d == Domain::Synthetic ? "synthetic" : "real"; }
std::string to_string(SceneKind k) { return k == SceneKind::Slope ? "slope" : "box"; }
std::string to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        default: return "unassigned";
    }
}
std::string to_string(Strategy s) { return s == Strategy::SimpleMixed ? "SimpleMixed" : "Finetune"; }

Domain domain_from_string(const std::string& s) {
    if (s == "synthetic") return Domain::Synthetic;
    if (s == "real") return Domain::Real;
    throw ValidationError("unknown domain: " + s);
}

SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "slope") return SceneKind::Slope;
    if (s == "box") return SceneKind::Box;
    throw ValidationError("unknown scene kind: " + s);
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    if (s == "unassigned") return Split::Unassigned;
    throw ValidationError("unknown split: " + s);
}

//---------------------------------------------------------------------------//
// Manifests
//---------------------------------------------------------------------------//

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

int texture_from_stem(const std::string& stem) {
    static const std::regex re("_t([0-9]+)_");
    std::smatch m;
    if (std::regex_search(stem, m, re)) return std::stoi(m[1]);
    return -1;
}

}  // namespace

ManifestResult build_manifest(std::span<const ManifestRoot> roots) {
    ManifestResult out;
    for (const auto& root : roots) {
        require(fs::is_directory(root.path), "manifest root is not a directory: " + root.path);
        std::set<std::string> images, masks;
        for (const auto& entry : fs::directory_iterator(root.path)) {
            if (!entry.is_regular_file()) continue;
            std::string name = entry.path().filename().string();
            if (!ends_with(name, ".png")) continue;
            if (ends_with(name, "_mask.png")) {
                masks.insert(name.substr(0, name.size() - 9));
            } else {
                images.insert(name.substr(0, name.size() - 4));
            }
        }
        for (const auto& stem : images) {
            std::string image = (fs::path(root.path) / (stem + ".png")).string();
            if (!masks.count(stem)) {
                out.errors.push_back("missing mask: " + image);
                continue;
            }
            ManifestRecord r;
            r.image_path = image;
            r.mask_path = (fs::path(root.path) / (stem + "_mask.png")).string();
            r.domain = root.domain;
            r.scene_kind = root.scene_kind;
            r.site_tag = root.site_tag.empty() ? stem.substr(0, stem.find('_')) : root.site_tag;
            r.texture_id = root.domain == Domain::Synthetic ? texture_from_stem(stem) : -1;
            out.records.push_back(std::move(r));
        }
        for (const auto& stem : masks) {
            if (!images.count(stem)) out.errors.push_back("orphan mask: " + (fs::path(root.path) / (stem + "_mask.png")).string());
        }
    }
    std::sort(out.records.begin(), out.records.end(),
              [](const ManifestRecord& a, const ManifestRecord& b) { return a.image_path < b.image_path; });
    std::sort(out.errors.begin(), out.errors.end());
    return out;
}

namespace {

json record_json(const ManifestRecord& r) {
    json j;
    j["image"] = r.image_path;
    j["mask"] = r.mask_path;
    j["domain"] = to_string(r.domain);
    j["scene"] = to_string(r.scene_kind);
    j["site"] = r.site_tag;
    j["texture"] = r.texture_id;
    j["split"] = to_string(r.split);
    return j;
}

ManifestRecord record_from_json(const json& j) {
    ManifestRecord r;
    r.image_path = j.at("image").get<std::string>();
    r.mask_path = j.at("mask").get<std::string>();
    r.domain = domain_from_string(j.at("domain").get<std::string>());
    r.scene_kind = scene_kind_from_string(j.at("scene").get<std::string>());
    r.site_tag = j.at("site").get<std::string>();
    r.texture_id = j.value("texture", -1);
    r.split = split_from_string(j.value("split", std::string("unassigned")));
    return r;
}

template <class F>
void for_each_json_line(std::istream& is, F&& f) {
    std::string line;
    std::size_t n = 0;
    while (std::getline(is, line)) {
        ++n;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            f(json::parse(line));
        } catch (const json::exception& e) {
            throw ValidationError("line " + std::to_string(n) + ": " + e.what());
        }
    }
}

}  // namespace

void write_manifest_jsonl(std::ostream& os, std::span<const ManifestRecord> records) {
    for (const auto& r : records) os << record_json(r).dump() << '\n';
}

std::vector<ManifestRecord> read_manifest_jsonl(std::istream& is) {
    std::vector<ManifestRecord> out;
    for_each_json_line(is, [&](const json& j) { out.push_back(record_from_json(j)); });
    return out;
}

namespace {

//! Per-stratum pick counts summing to round(fraction * total), by largest
//! remainder (ties broken by stratum order).
std::vector<std::size_t> largest_remainder(std::span<const std::size_t> sizes, double fraction) {
    std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
    auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(total)));
    std::vector<std::size_t> out(sizes.size());
    std::vector<std::pair<double, std::size_t>> rem;
    std::size_t given = 0;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        double exact = fraction * static_cast<double>(sizes[i]);
        out[i] = static_cast<std::size_t>(std::floor(exact));
        given += out[i];
        rem.push_back({exact - std::floor(exact), i});
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; given < want && k < rem.size(); ++k, ++given) ++out[rem[k].second];
    return out;
}

//! Indices grouped by site tag, each group sorted by image path.
std::map<std::string, std::vector<std::size_t>> strata(std::span<const ManifestRecord> records,
                                                       std::span<const std::size_t> idx) {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i : idx) out[records[i].site_tag].push_back(i);
    for (auto& [tag, v] : out) {
        std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) {
            return records[a].image_path < records[b].image_path;
        });
    }
    return out;
}

//! Stratified pick of about `fraction` of idx; returns a flag per record.
std::vector<bool> stratified_pick(std::span<const ManifestRecord> records, std::span<const std::size_t> idx,
                                  double fraction, std::uint64_t seed) {
    auto groups = strata(records, idx);
    std::vector<std::size_t> sizes;
    for (const auto& [tag, v] : groups) sizes.push_back(v.size());
    auto quota = largest_remainder(sizes, fraction);
    std::vector<bool> picked(records.size(), false);
    std::size_t g = 0;
    for (auto& [tag, v] : groups) {
        Rng rng(derive_seed(seed, fnv1a(tag)));
        rng.shuffle(v.begin(), v.end());
        for (std::size_t k = 0; k < quota[g]; ++k) picked[v[k]] = true;
        ++g;
    }
    return picked;
}

}  // namespace

std::vector<ManifestRecord> split_train_val(std::vector<ManifestRecord> records, std::uint64_t seed,
                                            double val_fraction) {
    require(val_fraction > 0 && val_fraction < 1, "validation fraction must lie in (0, 1)");
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split != Split::Test) idx.push_back(i);
    }
    require(idx.size() >= 10, "at least 10 non-test records are needed for a train/val split");
    auto val = stratified_pick(records, idx, val_fraction, seed);
    for (std::size_t i : idx) records[i].split = val[i] ? Split::Val : Split::Train;
    return records;
}

//---------------------------------------------------------------------------//
// Experiment matrix
//---------------------------------------------------------------------------//

std::vector<ExperimentDef> experiment_definitions() {
    const std::vector<std::string> box{"cardboard", "pattern"}, slope{"larvik", "rv4"};
    return {
        {"Box", "box", SceneKind::Box, box, box, false},
        {"Pattern box", "pattern_box", SceneKind::Box, {"pattern"}, {"pattern"}, false},
        {"Cardboard box", "cardboard_box", SceneKind::Box, {"cardboard"}, {"cardboard"}, false},
        {"Gen. pattern box", "gen_pattern_box", SceneKind::Box, {"cardboard"}, {"pattern"}, true},
        {"Gen. cardboard box", "gen_cardboard_box", SceneKind::Box, {"pattern"}, {"cardboard"}, true},
        {"Slope", "slope", SceneKind::Slope, slope, slope, false},
        {"Larvik", "larvik", SceneKind::Slope, {"larvik"}, {"larvik"}, false},
        {"Rv4", "rv4", SceneKind::Slope, {"rv4"}, {"rv4"}, false},
        {"Gen. Larvik", "gen_larvik", SceneKind::Slope, {"rv4"}, {"larvik"}, true},
        {"Gen. Rv4", "gen_rv4", SceneKind::Slope, {"larvik"}, {"rv4"}, true},
    };
}

std::size_t ExperimentPlan::count(const std::string& role, Domain domain) const {
    return static_cast<std::size_t>(std::count_if(items.begin(), items.end(), [&](const PlanItem& it) {
        return it.role == role && it.record.domain == domain;
    }));
}

std::vector<ExperimentPlan> build_experiment_matrix(std::span<const ManifestRecord> records, std::uint64_t seed,
                                                    const MatrixOptions& options) {
    require(!options.architectures.empty(), "at least one architecture is required");
    require(options.test_fraction > 0 && options.test_fraction < 1, "test fraction must lie in (0, 1)");
    require(options.val_fraction > 0 && options.val_fraction < 1, "validation fraction must lie in (0, 1)");
    for (int p : options.proportions) require(p >= 0 && p <= 100, "proportions must lie in [0, 100]");

    // Fixed test holdout per real site: explicit test records win, otherwise
    // a seeded share of the site.
    std::map<std::string, std::vector<std::size_t>> real_by_site;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].domain == Domain::Real) real_by_site[records[i].site_tag].push_back(i);
    }
    std::vector<bool> holdout(records.size(), false);
    for (auto& [tag, idx] : real_by_site) {
        bool explicit_test = std::any_of(idx.begin(), idx.end(), [&](std::size_t i) { return records[i].split == Split::Test; });
        if (explicit_test) {
            for (std::size_t i : idx) holdout[i] = records[i].split == Split::Test;
        } else {
            auto pick = stratified_pick(records, idx, options.test_fraction, derive_seed(seed, fnv1a("test")));
            for (std::size_t i : idx) holdout[i] = pick[i];
        }
    }

    auto sorted_by_path = [&](std::vector<std::size_t> v) {
        std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) { return records[a].image_path < records[b].image_path; });
        return v;
    };

    std::vector<ExperimentPlan> plans;
    for (const auto& exp : experiment_definitions()) {
        auto in = [](const std::vector<std::string>& tags, const std::string& t) {
            return std::find(tags.begin(), tags.end(), t) != tags.end();
        };
        std::vector<std::size_t> synth, pool, test;
        for (std::size_t i = 0; i < records.size(); ++i) {
            const auto& r = records[i];
            if (r.domain == Domain::Synthetic) {
                if (r.scene_kind == exp.scene_kind) synth.push_back(i);
            } else if (holdout[i]) {
                if (in(exp.real_test_tags, r.site_tag)) test.push_back(i);
            } else if (in(exp.real_train_tags, r.site_tag)) {
                pool.push_back(i);
            }
        }
        require(!synth.empty(), "no synthetic " + to_string(exp.scene_kind) + " records for experiment " + exp.name);
        require(!pool.empty(), "no real training records for experiment " + exp.name);
        require(!test.empty(), "no real test records for experiment " + exp.name);
        synth = sorted_by_path(synth);
        test = sorted_by_path(test);
        // One permutation per experiment: smaller proportions are prefixes of
        // larger ones.
        pool = sorted_by_path(pool);
        Rng rng(derive_seed(seed, fnv1a("pool:" + exp.slug)));
        rng.shuffle(pool.begin(), pool.end());

        for (const auto& arch : options.architectures) {
            for (Strategy strategy : {Strategy::SimpleMixed, Strategy::Finetune}) {
                for (int pct : options.proportions) {
                    if (strategy == Strategy::Finetune && (pct == 0 || pct == 100)) continue;
                    ExperimentPlan plan;
                    char buf[16];
                    std::snprintf(buf, sizeof buf, "%03d", pct);
                    plan.name = arch + "__" + exp.slug + "__" + to_string(strategy) + "__" + buf;
                    plan.architecture = arch;
                    plan.experiment = exp;
                    plan.strategy = strategy;
                    plan.real_percent = pct;
                    plan.real_pool_size = pool.size();

                    auto k = static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(pool.size())));
                    std::vector<std::size_t> train(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
                    if (pct < 100) train.insert(train.end(), synth.begin(), synth.end());
                    train = sorted_by_path(train);
                    // Same validation draw for both strategies at a proportion.
                    auto val = stratified_pick(records, train, options.val_fraction,
                                               derive_seed(seed, fnv1a("val:" + exp.slug), static_cast<std::uint64_t>(pct)));
                    for (std::size_t i : train) plan.items.push_back({val[i] ? "val" : "train", records[i]});
                    for (std::size_t i : test) plan.items.push_back({"test", records[i]});
                    plans.push_back(std::move(plan));
                }
            }
        }
    }
    return plans;
}

void write_plan_jsonl(std::ostream& os, const ExperimentPlan& plan) {
    json h;
    h["type"] = "plan";
    h["name"] = plan.name;
    h["architecture"] = plan.architecture;
    h["experiment"] = plan.experiment.name;
    h["slug"] = plan.experiment.slug;
    h["scene"] = to_string(plan.experiment.scene_kind);
    h["strategy"] = to_string(plan.strategy);
    h["real_percent"] = plan.real_percent;
    h["real_pool_size"] = plan.real_pool_size;
    h["real_train_tags"] = plan.experiment.real_train_tags;
    h["real_test_tags"] = plan.experiment.real_test_tags;
    h["generalisation"] = plan.experiment.generalisation;
    os << h.dump() << '\n';
    for (const auto& it : plan.items) {
        json j;
        j["type"] = "item";
        j["role"] = it.role;
        auto r = record_json(it.record);
        for (auto& [k, v] : r.items()) j[k] = v;
        os << j.dump() << '\n';
    }
}

ExperimentPlan read_plan_jsonl(std::istream& is) {
    ExperimentPlan plan;
    bool header = false;
    for_each_json_line(is, [&](const json& j) {
        std::string type = j.at("type").get<std::string>();
        if (type == "plan") {
            require(!header, "plan file has more than one header");
            header = true;
            plan.name = j.at("name").get<std::string>();
            plan.architecture = j.at("architecture").get<std::string>();
            plan.experiment.name = j.at("experiment").get<std::string>();
            plan.experiment.slug = j.at("slug").get<std::string>();
            plan.experiment.scene_kind = scene_kind_from_string(j.at("scene").get<std::string>());
            std::string s = j.at("strategy").get<std::string>();
            require(s == "SimpleMixed" || s == "Finetune", "unknown strategy: " + s);
            plan.strategy = s == "SimpleMixed" ? Strategy::SimpleMixed : Strategy::Finetune;
            plan.real_percent = j.at("real_percent").get<int>();
            plan.real_pool_size = j.at("real_pool_size").get<std::size_t>();
            plan.experiment.real_train_tags = j.at("real_train_tags").get<std::vector<std::string>>();
            plan.experiment.real_test_tags = j.at("real_test_tags").get<std::vector<std::string>>();
            plan.experiment.generalisation = j.at("generalisation").get<bool>();
        } else if (type == "item") {
            require(header, "plan item before header");
            plan.items.push_back({j.at("role").get<std::string>(), record_from_json(j)});
        } else {
            throw ValidationError("unknown plan line type: " + type);
        }
    });
    require(header, "plan file has no header");
    return plan;
}

void write_datasheet(std::ostream& os, std::span<const ManifestRecord> records, std::span<const ExperimentPlan> plans,
                     std::uint64_t seed, const std::string& config_hash) {
    std::map<std::tuple<std::string, std::string, std::string>, std::size_t> by_source;
    std::map<std::string, std::size_t> roster;
    std::set<int> textures;
    for (const auto& r : records) {
        ++by_source[{to_string(r.domain), to_string(r.scene_kind), r.site_tag}];
        std::string row = r.domain == Domain::Synthetic
                              ? (r.scene_kind == SceneKind::Slope ? "Synthetic DFN" : "Synthetic box")
                              : (r.scene_kind == SceneKind::Slope ? "Real-world rock slope" : "Real-world box");
        ++roster[row];
        if (r.texture_id >= 0) textures.insert(r.texture_id);
    }
    os << "# Dataset datasheet\n\n";
    os << "- master seed: " << seed << "\n";
    os << "- config hash: " << config_hash << "\n";
    os << "- records: " << records.size() << "\n";
    os << "- textures: " << textures.size() << "\n\n";
    os << "## Roster\n\n| Dataset | Images |\n|---|---|\n";
    for (const char* row : {"Synthetic DFN", "Real-world rock slope", "Synthetic box", "Real-world box"}) {
        os << "| " << row << " | " << (roster.count(row) ? roster.at(row) : 0) << " |\n";
    }
    os << "| Total | " << records.size() << " |\n\n";
    os << "## Sources\n\n| Domain | Scene | Site | Images |\n|---|---|---|---|\n";
    for (const auto& [key, n] : by_source) {
        os << "| " << std::get<0>(key) << " | " << std::get<1>(key) << " | " << std::get<2>(key) << " | " << n << " |\n";
    }
    if (!plans.empty()) {
        std::map<std::pair<std::string, std::string>, std::size_t> per;
        for (const auto& p : plans) ++per[{p.architecture, to_string(p.strategy)}];
        os << "\n## Experiment plans\n\n| Architecture | Strategy | Plans |\n|---|---|---|\n";
        for (const auto& [key, n] : per) os << "| " << key.first << " | " << key.second << " | " << n << " |\n";
        os << "\nTotal plans: " << plans.size() << "\n";
    }
    os << "\n## Notes\n\n"
          "- Real test sets are held out once per site and reused by every proportion, strategy and architecture; "
          "proportions apply to the remaining real pool.\n"
          "- Masks: joint = 0, background = 255, 8-bit PNG; RGB images are 8-bit truecolor PNG.\n";
}

}  // namespace fracsynth
