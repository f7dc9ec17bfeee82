#include "fracsynth/cli.hpp"

#include <oneapi/tbb/version.h>
#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <optional>
#include <sstream>

#include "fracsynth/analysis.hpp"
#include "fracsynth/blockshape.hpp"
#include "fracsynth/config.hpp"
#include "fracsynth/dataset.hpp"
#include "fracsynth/dfn.hpp"
#include "fracsynth/error.hpp"
#include "fracsynth/imaging.hpp"
#include "fracsynth/metrics.hpp"
#include "fracsynth/scenes.hpp"
#include "fracsynth/traces.hpp"

#ifndef FRACSYNTH_VERSION
#define FRACSYNTH_VERSION "0.0.0"
#endif

namespace fracsynth {

std::string version_string() { return FRACSYNTH_VERSION; }

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    require(is.good(), "cannot read " + p.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::uint64_t parse_seed(const std::string& text, const std::string& origin) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    require(ec == std::errc() && ptr == text.data() + text.size() && !text.empty(),
            origin + " must be an unsigned 64-bit integer, got '" + text + "'");
    return v;
}

//! Everything one invocation needs besides its own flags.
struct Run {
    std::string command;
    std::string config_path;
    std::string seed_text;
    std::string out_dir;
    int jobs = 0;

    Config config;
    std::optional<std::uint64_t> seed;
    fs::path out;
    ojson params = ojson::object();
    std::vector<std::pair<std::string, std::string>> inputs;  // (file name, content hash)
    std::vector<std::string> outputs;                          // relative to out

    void prepare() {
        if (!config_path.empty()) config = Config::load(config_path);
        if (!seed_text.empty()) {
            seed = parse_seed(seed_text, "--seed");
        } else if (const char* env = std::getenv("FRACSYNTH_SEED"); env && *env) {
            seed = parse_seed(env, "FRACSYNTH_SEED");
        }
        require(jobs >= 0, "--jobs must be >= 0");
        require(!out_dir.empty(), "--out is required");
        out = out_dir;
        std::error_code ec;
        fs::create_directories(out, ec);
        require(!ec && fs::is_directory(out), "cannot create output directory " + out.string());
        fs::path probe = out / ".fracsynth_write_probe";
        {
            std::ofstream os(probe);
            require(os.good(), "output directory " + out.string() + " is not writable");
        }
        fs::remove(probe, ec);
    }

    std::uint64_t need_seed() const {
        require(seed.has_value(), command + " needs a seed: pass --seed or set FRACSYNTH_SEED");
        return *seed;
    }

    //! Records an input by file name and content hash; returns its bytes.
    std::string input(const fs::path& p) {
        require(fs::is_regular_file(p), "input file not found: " + p.string());
        std::string bytes = read_file(p);
        inputs.emplace_back(p.filename().string(), hex64(fnv1a(bytes)));
        return bytes;
    }

    std::ofstream create(const std::string& rel) {
        fs::path p = out / rel;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream os(p, std::ios::binary);
        require(os.good(), "cannot write " + p.string());
        outputs.push_back(rel);
        return os;
    }

    void written(const std::string& rel) { outputs.push_back(rel); }

    //! Inputs, parameters, config and versions: enough to rerun the stage.
    //! Deliberately free of paths, timestamps and --jobs so output trees
    //! compare byte-for-byte across machines and thread counts.
    void write_provenance() {
        std::string name = "provenance_" + command + ".json";
        std::replace(name.begin(), name.end(), ' ', '_');
        ojson j;
        j["tool"] = "fracsynth";
        j["version"] = version_string();
        j["command"] = command;
        j["seed"] = seed ? ojson(*seed) : ojson(nullptr);
        j["config_hash"] = config.hash();
        j["config"] = config.canonical();
        j["parameters"] = params;
        auto in = ojson::array();
        for (const auto& [n, h] : inputs) in.push_back({{"name", n}, {"fnv1a", h}});
        j["inputs"] = in;
        std::sort(outputs.begin(), outputs.end());
        j["outputs"] = outputs;
        j["libraries"] = {{"oneTBB", TBB_VERSION_STRING},
                          {"libpng", png_library_version()},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                          {"CLI11", CLI11_VERSION}};
        std::ofstream os(out / name);
        require(os.good(), "cannot write provenance record");
        os << j.dump(2) << '\n';
    }
};

//! Stem before a known suffix: "dfn03_traces.jsonl" -> "dfn03".
std::string artifact_name(const fs::path& p, const std::string& suffix = "") {
    std::string stem = p.stem().string();
    if (!suffix.empty() && stem.size() > suffix.size() && stem.ends_with(suffix))
        stem.resize(stem.size() - suffix.size());
    return stem;
}

std::string dfn_name(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "dfn%02zu", index);
    return buf;
}

Interval interval_from(const Config& c, const std::string& key, Interval fallback) {
    auto v = c.numbers(key, {fallback.lo, fallback.hi});
    require(v.size() == 2, "config key '" + key + "' must be [lo, hi]");
    return {v[0], v[1]};
}

Aabb aabb_from(const Config& c, const std::string& key, const Aabb& fallback) {
    auto v = c.numbers(key, {fallback.lo.x, fallback.lo.y, fallback.lo.z, fallback.hi.x, fallback.hi.y, fallback.hi.z});
    require(v.size() == 6, "config key '" + key + "' must be [xmin, ymin, zmin, xmax, ymax, zmax]");
    require(v[0] < v[3] && v[1] < v[4] && v[2] < v[5], "config key '" + key + "' is an empty box");
    return {{v[0], v[1], v[2]}, {v[3], v[4], v[5]}};
}

ClassThresholds thresholds_from(const Config& c) {
    ClassThresholds t;
    t.palmstrom_flatness = c.number("classes.palmstrom_flatness", t.palmstrom_flatness);
    t.palmstrom_elongation = c.number("classes.palmstrom_elongation", t.palmstrom_elongation);
    t.singh.flatness_bounds = c.numbers("classes.singh_flatness_bounds", t.singh.flatness_bounds);
    t.singh.elongation_bounds = c.numbers("classes.singh_elongation_bounds", t.singh.elongation_bounds);
    t.singh.validate();
    return t;
}

std::vector<BlockRecord> read_blocks_any(Run& run, const std::string& path) {
    std::istringstream is(run.input(path));
    return fs::path(path).extension() == ".csv" ? read_blocks_csv(is) : read_selection_jsonl(is);
}

TriMesh read_mesh(Run& run, const std::string& path) {
    std::istringstream is(run.input(path));
    return read_obj(is);
}

//---------------------------------------------------------------------------//
// Stages
//---------------------------------------------------------------------------//

struct BlocksArgs {
    std::size_t n = 0;
    std::string input;
    std::size_t k = 0;
};

void blocks_sample(Run& run, const BlocksArgs& a) {
    std::uint64_t seed = run.need_seed();
    const Config& c = run.config;
    SamplingRanges r;
    r.a1 = interval_from(c, "blocks.a1", r.a1);
    r.flatness = interval_from(c, "blocks.flatness", r.flatness);
    r.elongation = interval_from(c, "blocks.elongation", r.elongation);
    r.alpha12 = interval_from(c, "blocks.alpha12", r.alpha12);
    r.alpha13 = interval_from(c, "blocks.alpha13", r.alpha13);
    r.alpha23 = interval_from(c, "blocks.alpha23", r.alpha23);
    std::size_t n = a.n ? a.n : static_cast<std::size_t>(c.integer("blocks.n", 8192));
    auto t = thresholds_from(c);
    c.require_all_used({"blocks", "classes"});
    require(n > 0, "--n must be positive");
    auto pop = sample_parallelepipeds(n, r, seed);
    std::vector<BlockRecord> recs;
    for (std::size_t i = 0; i < pop.size(); ++i) recs.push_back({i, pop[i]});
    auto os = run.create("blocks.csv");
    write_blocks_csv(os, recs, t);
    run.params["n"] = n;
}

void blocks_select(Run& run, const BlocksArgs& a) {
    const Config& c = run.config;
    std::size_t k = a.k ? a.k : static_cast<std::size_t>(c.integer("blocks.k", 27));
    auto t = thresholds_from(c);
    c.require_all_used({"classes"});
    auto recs = read_blocks_any(run, a.input);
    require(!recs.empty(), "no blocks in " + a.input);
    std::vector<Parallelepiped> pop;
    for (const auto& r : recs) pop.push_back(r.block);
    auto idx = select_representatives(pop, k, t);
    std::vector<BlockRecord> chosen;
    for (auto i : idx) chosen.push_back(recs[i]);
    auto os = run.create("selection.jsonl");
    write_selection_jsonl(os, chosen, t);
    run.params["k"] = k;
}

struct DfnArgs {
    std::string blocks;
    std::vector<std::size_t> only;
};

DfnSuiteConfig dfn_config_from(const Config& c) {
    DfnSuiteConfig d;
    d.region = aabb_from(c, "dfn.region", d.region);
    d.fisher_kappa = c.number("dfn.fisher_kappa", d.fisher_kappa);
    d.size.mu = c.number("dfn.size_mu", d.size.mu);
    d.size.sigma = c.number("dfn.size_sigma", d.size.sigma);
    d.random_fraction = c.number("dfn.random_fraction", d.random_fraction);
    d.termination_prob = c.number("dfn.termination_prob", d.termination_prob);
    d.preserve_intensity = c.boolean("dfn.preserve_intensity", d.preserve_intensity);
    d.options.polygon_sides = static_cast<int>(c.integer("dfn.polygon_sides", d.options.polygon_sides));
    d.options.max_fractures = static_cast<std::size_t>(c.integer("dfn.max_fractures", d.options.max_fractures));
    d.options.random_size.mu = c.number("dfn.random_size_mu", d.options.random_size.mu);
    d.options.random_size.sigma = c.number("dfn.random_size_sigma", d.options.random_size.sigma);
    require(d.termination_prob >= 0 && d.termination_prob <= 1, "dfn.termination_prob must lie in [0, 1]");
    require(d.random_fraction >= 0 && d.random_fraction < 1, "dfn.random_fraction must lie in [0, 1)");
    require(d.options.polygon_sides >= 3, "dfn.polygon_sides must be >= 3");
    return d;
}

void dfn_gen(Run& run, const DfnArgs& a) {
    std::uint64_t seed = run.need_seed();
    auto cfg = dfn_config_from(run.config);
    run.config.require_all_used({"dfn"});
    auto recs = read_blocks_any(run, a.blocks);
    require(!recs.empty(), "no blocks in " + a.blocks);
    std::vector<std::size_t> which = a.only;
    if (which.empty())
        for (std::size_t i = 0; i < recs.size(); ++i) which.push_back(i);
    for (auto i : which) require(i < recs.size(), "--only index " + std::to_string(i) + " is out of range");
    std::sort(which.begin(), which.end());
    which.erase(std::unique(which.begin(), which.end()), which.end());
    for (const auto& r : recs) r.block.validate();

    std::vector<Dfn> dfns(which.size());
    tbb::parallel_for(std::size_t(0), which.size(), [&](std::size_t i) {
        dfns[i] = build_suite_member(recs[which[i]].block, cfg, seed, which[i]);
    });

    auto summary = run.create("dfn_summary.csv");
    summary << "dfn,block_id,fractures,p32_total,p32_set0,p32_set1,p32_set2,p32_random\n";
    for (std::size_t i = 0; i < which.size(); ++i) {
        std::string name = dfn_name(which[i]);
        auto os = run.create(name + ".jsonl");
        write_dfn_jsonl(os, dfns[i]);
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6f,%.6f,%.6f,%.6f,%.6f\n", name.c_str(), recs[which[i]].id,
                      dfns[i].fractures.size(), achieved_p32(dfns[i]), achieved_p32(dfns[i], 0),
                      achieved_p32(dfns[i], 1), achieved_p32(dfns[i], 2), achieved_p32(dfns[i], kRandomSet));
        summary << buf;
    }
    run.params["suite_config_hash"] = cfg.hash();
    run.params["indices"] = which;
}

struct SceneArgs {
    std::vector<std::string> dfns;
};

Dfn load_dfn(Run& run, const std::string& path, const Aabb& region) {
    std::istringstream is(run.input(path));
    Dfn d;
    d.region = region;
    d.fractures = read_dfn_jsonl(is);
    return d;
}

void scene_slope(Run& run, const SceneArgs& a) {
    std::uint64_t seed = run.need_seed();
    const Config& c = run.config;
    SlopeSpec s;
    s.length = c.number("slope.length", s.length);
    s.bench_height = c.number("slope.bench_height", s.bench_height);
    s.benches = static_cast<int>(c.integer("slope.benches", s.benches));
    s.bench_angle = c.number("slope.bench_angle", s.bench_angle);
    s.berm_width = c.number("slope.berm_width", s.berm_width);
    double resolution = c.number("slope.resolution", 0.5);
    RoughnessSpec rough;
    rough.amplitude = c.number("slope.roughness_amplitude", rough.amplitude);
    rough.frequency = c.number("slope.roughness_frequency", rough.frequency);
    rough.octaves = static_cast<int>(c.integer("slope.roughness_octaves", rough.octaves));
    rough.seed = derive_seed(seed, fnv1a("roughness"));
    double friction = c.number("kinematic.friction_angle", 30);
    KinematicOptions kopt;
    kopt.lateral_limit = c.number("kinematic.lateral_limit", kopt.lateral_limit);
    kopt.carve_notches = c.boolean("kinematic.carve_notches", kopt.carve_notches);
    Aabb region = aabb_from(c, "dfn.region", DfnSuiteConfig{}.region);
    c.require_all_used({"slope", "kinematic"});

    auto mesh = build_slope_mesh(s, resolution);
    if (rough.amplitude > 0) mesh = apply_perlin_roughness(mesh, rough);
    {
        auto os = run.create("slope.obj");
        write_obj(os, mesh);
    }
    for (const auto& path : a.dfns) {
        auto dfn = load_dfn(run, path, region);
        auto res = kinematic_filter(dfn, mesh, friction, kopt);
        std::string name = artifact_name(path);
        auto os = run.create(name + "_kinematic.csv");
        write_kinematic_csv(os, res.report);
        if (kopt.carve_notches) {
            auto mo = run.create(name + "_slope.obj");
            write_obj(mo, res.mesh);
        }
    }
    run.params["resolution"] = resolution;
}

void scene_box(Run& run) {
    const Config& c = run.config;
    BoxSceneSpec s;
    s.width = c.number("box.width", s.width);
    s.depth = c.number("box.depth", s.depth);
    s.height = c.number("box.height", s.height);
    s.gap = c.number("box.gap", s.gap);
    c.require_all_used({"box"});
    auto scene = build_box_scene(s);
    {
        auto os = run.create("box.obj");
        write_obj(os, scene.mesh);
    }
    auto os = run.create("box_traces.jsonl");
    write_traces_jsonl(os, scene.traces);
}

struct TracesArgs {
    std::vector<std::string> dfns;
    std::string mesh;
    bool svg = false;
};

TraceStyle style_from(const Config& c) {
    TraceStyle s;
    s.t_min = c.number("traces.t_min", s.t_min);
    s.t_max = c.number("traces.t_max", s.t_max);
    s.waviness_amplitude = c.number("traces.waviness_amplitude", s.waviness_amplitude);
    s.waviness_wavelength = c.number("traces.waviness_wavelength", s.waviness_wavelength);
    s.validate();
    return s;
}

Vec3 mean_view_direction(const TriMesh& mesh) {
    Vec3 n;
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) n += mesh.face_normal(t) * mesh.face_area(t);
    return norm(n) > 0 ? -normalized(n) : Vec3{-1, 0, 0};
}

void traces_extract(Run& run, const TracesArgs& a) {
    std::uint64_t seed = run.need_seed();
    auto style = style_from(run.config);
    run.config.require_all_used({"traces"});
    auto mesh = read_mesh(run, a.mesh);
    Bvh bvh(mesh);
    std::vector<std::vector<Fracture>> inputs;
    std::vector<std::string> names;
    for (const auto& p : a.dfns) {
        std::istringstream is(run.input(p));
        inputs.push_back(read_dfn_jsonl(is));
        names.push_back(artifact_name(p));
    }
    std::vector<std::vector<Trace>> out(inputs.size());
    tbb::parallel_for(std::size_t(0), inputs.size(), [&](std::size_t i) {
        auto raw = extract_traces(inputs[i], bvh);
        out[i] = style_traces(raw, style, derive_seed(seed, fnv1a(names[i])));
    });
    auto summary = run.create("traces_summary.csv");
    summary << "dfn,traces,total_length\n";
    Vec3 view = mean_view_direction(mesh);
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto os = run.create(names[i] + "_traces.jsonl");
        write_traces_jsonl(os, out[i]);
        double total = 0;
        for (const auto& t : out[i]) total += t.length;
        char buf[96];
        std::snprintf(buf, sizeof buf, ",%zu,%.6f\n", out[i].size(), total);
        summary << names[i] << buf;
        if (a.svg) {
            auto svg = run.create(names[i] + "_traces.svg");
            write_traces_svg(svg, out[i], view);
        }
    }
}

std::vector<Trace> load_traces(Run& run, const std::string& path) {
    std::istringstream is(run.input(path));
    return read_traces_jsonl(is);
}

struct AnalyzeArgs {
    std::vector<std::string> traces;
    std::string mesh;
    std::string blocks;
};

void analyze_topology(Run& run, const AnalyzeArgs& a) {
    const Config& c = run.config;
    NodeOptions opt;
    opt.eps = c.number("topology.eps", opt.eps);
    opt.exclude_boundary = c.boolean("topology.exclude_boundary", opt.exclude_boundary);
    c.require_all_used({"topology"});
    auto mesh = read_mesh(run, a.mesh);
    Vec2 scale = estimate_uv_scale(mesh);
    opt.boundary = std::array<Vec2, 2>{Vec2{0, 0}, scale};
    std::vector<TopologyRow> rows;
    for (const auto& p : a.traces) {
        auto traces = load_traces(run, p);
        auto lines = project_to_surface_uv(traces, mesh, scale);
        rows.push_back({artifact_name(p, "_traces"), topology_summary(classify_nodes(lines, opt))});
    }
    {
        auto os = run.create("topology.csv");
        write_topology_csv(os, rows);
    }
    auto svg = run.create("ternary.svg");
    write_ternary_svg(svg, rows);
    run.params["uv_scale"] = {scale.x, scale.y};
}

void analyze_blocks(Run& run, const AnalyzeArgs& a) {
    std::uint64_t seed = run.need_seed();
    const Config& c = run.config;
    Aabb region = aabb_from(c, "block_stats.region", {{0, 0, 0}, {20, 20, 20}});
    double jitter = c.number("block_stats.jitter", 0.1);
    auto t = thresholds_from(c);
    c.require_all_used({"block_stats", "classes"});
    auto recs = read_blocks_any(run, a.blocks);
    std::vector<BlockStats> stats(recs.size());
    tbb::parallel_for(std::size_t(0), recs.size(), [&](std::size_t i) {
        auto sets = joint_sets_from_block(recs[i].block);
        std::vector<PlaneFamily> fam;
        for (const auto& s : sets) fam.push_back({s.orientation, s.spacing});
        stats[i] = block_statistics(fam, region, jitter, derive_seed(seed, i), t);
    });
    for (std::size_t i = 0; i < recs.size(); ++i) {
        std::string name = dfn_name(i);
        auto cdf = run.create(name + "_block_cdf.csv");
        write_block_cdf_csv(cdf, stats[i]);
        auto shares = run.create(name + "_block_shares.csv");
        write_block_shares_csv(shares, stats[i]);
        auto svg = run.create(name + "_block_cdf.svg");
        write_block_cdf_svg(svg, stats[i]);
    }
}

struct RenderArgs {
    std::string mesh;
    std::vector<std::string> traces;
    std::vector<int> textures;
    long poses = -1;
};

void render(Run& run, const RenderArgs& a) {
    std::uint64_t seed = run.need_seed();
    const Config& c = run.config;
    long n_poses = a.poses >= 0 ? a.poses : static_cast<long>(c.integer("render.poses", 118));
    std::array<double, 2> dist{c.number("render.dist_min", 5), c.number("render.dist_max", 15)};
    PoseOptions popt;
    popt.fov = c.number("render.fov", popt.fov);
    if (c.contains("render.ground_z")) popt.ground_z = c.number("render.ground_z", 0);
    popt.max_attempts = static_cast<int>(c.integer("render.max_attempts", popt.max_attempts));
    RenderOptions ropt;
    ropt.width = static_cast<int>(c.integer("render.width", ropt.width));
    ropt.height = static_cast<int>(c.integer("render.height", ropt.height));
    ropt.supersample = static_cast<int>(c.integer("render.supersample", ropt.supersample));
    ropt.darkening = c.number("render.darkening", ropt.darkening);
    ropt.ambient = c.number("render.ambient", ropt.ambient);
    c.require_all_used({"render"});
    ropt.validate();
    require(n_poses > 0, "no poses to render: the pose count is 0, so the output would be empty");
    require(!a.traces.empty(), "render needs at least one --traces file");

    auto mesh = read_mesh(run, a.mesh);
    std::vector<std::unique_ptr<RenderScene>> scenes;
    std::vector<std::string> names;
    for (const auto& p : a.traces) {
        scenes.push_back(std::make_unique<RenderScene>(mesh, load_traces(run, p)));
        names.push_back(artifact_name(p, "_traces"));
    }
    for (std::size_t i = 0; i < names.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) require(names[i] != names[j], "duplicate trace set name " + names[i]);

    auto suite = texture_suite(derive_seed(seed, fnv1a("textures")));
    std::vector<int> tex = a.textures;
    if (tex.empty())
        for (const auto& t : suite) tex.push_back(t.id);
    for (int t : tex) require(t >= 0 && t < static_cast<int>(suite.size()), "unknown texture id " + std::to_string(t));

    auto poses = sample_camera_poses(scenes.front()->bvh(), static_cast<std::size_t>(n_poses), dist,
                                     derive_seed(seed, fnv1a("poses")), popt);
    {
        auto os = run.create("poses.jsonl");
        for (std::size_t i = 0; i < poses.size(); ++i) {
            const auto& p = poses[i];
            ojson j;
            j["pose"] = i;
            j["position"] = {p.position.x, p.position.y, p.position.z};
            j["target"] = {p.target.x, p.target.y, p.target.z};
            j["up"] = {p.up.x, p.up.y, p.up.z};
            j["fov"] = p.fov;
            os << j.dump() << '\n';
        }
    }
    fs::path img_dir = run.out / "images";
    fs::create_directories(img_dir);
    std::size_t nt = tex.size(), np = poses.size();
    std::size_t tasks = scenes.size() * nt * np;
    tbb::parallel_for(std::size_t(0), tasks, [&](std::size_t k) {
        std::size_t d = k / (nt * np), t = (k / np) % nt, p = k % np;
        auto pair = render_pair(*scenes[d], suite[tex[t]], poses[p], ropt);
        pair.dfn = names[d];
        pair.texture = tex[t];
        pair.pose = static_cast<int>(p);
        write_pair(img_dir.string(), pair);
    });
    for (std::size_t d = 0; d < scenes.size(); ++d)
        for (int t : tex)
            for (std::size_t p = 0; p < np; ++p) {
                std::string stem = "images/" + pair_stem(names[d], t, static_cast<int>(p));
                run.written(stem + ".png");
                run.written(stem + "_mask.png");
            }
    run.params["poses"] = n_poses;
    run.params["textures"] = tex;
    run.params["dist_range"] = dist;
}

struct DatasetArgs {
    std::vector<std::string> roots;
    std::string manifest;
    double val_fraction = -1;
    std::vector<int> proportions;
    std::vector<std::string> architectures;
};

ManifestRoot parse_root(const std::string& spec) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream ss(spec);
    while (std::getline(ss, cur, ':')) parts.push_back(cur);
    require(!parts.empty() && parts.size() <= 4 && !parts[0].empty(),
            "--root must be path[:domain[:scene[:site]]], got '" + spec + "'");
    ManifestRoot r;
    r.path = parts[0];
    if (parts.size() > 1) r.domain = domain_from_string(parts[1]);
    if (parts.size() > 2) r.scene_kind = scene_kind_from_string(parts[2]);
    if (parts.size() > 3) r.site_tag = parts[3];
    return r;
}

std::vector<ManifestRecord> load_manifest(Run& run, const std::string& path) {
    std::istringstream is(run.input(path));
    return read_manifest_jsonl(is);
}

void dataset_manifest(Run& run, const DatasetArgs& a, std::ostream& err) {
    std::vector<ManifestRoot> roots;
    for (const auto& s : a.roots) roots.push_back(parse_root(s));
    for (const auto& r : roots) require(fs::is_directory(r.path), "manifest root is not a directory: " + r.path);
    auto res = build_manifest(roots);
    {
        auto os = run.create("manifest.jsonl");
        write_manifest_jsonl(os, res.records);
    }
    if (!res.errors.empty()) {
        auto os = run.create("manifest_errors.txt");
        for (const auto& e : res.errors) {
            os << e << '\n';
            err << "warning: " << e << '\n';
        }
    }
    run.params["records"] = res.records.size();
    run.params["unmatched"] = res.errors.size();
}

void dataset_split(Run& run, const DatasetArgs& a) {
    std::uint64_t seed = run.need_seed();
    double vf = a.val_fraction >= 0 ? a.val_fraction : run.config.number("dataset.val_fraction", 0.1);
    run.config.require_all_used({"dataset"});
    auto recs = split_train_val(load_manifest(run, a.manifest), seed, vf);
    auto os = run.create("manifest.jsonl");
    write_manifest_jsonl(os, recs);
    run.params["val_fraction"] = vf;
}

void dataset_matrix(Run& run, const DatasetArgs& a) {
    std::uint64_t seed = run.need_seed();
    const Config& c = run.config;
    MatrixOptions m;
    m.test_fraction = c.number("matrix.test_fraction", m.test_fraction);
    m.val_fraction = c.number("matrix.val_fraction", m.val_fraction);
    if (c.contains("matrix.proportions")) {
        m.proportions.clear();
        for (double p : c.numbers("matrix.proportions", {})) m.proportions.push_back(static_cast<int>(p));
    }
    c.require_all_used({"matrix"});
    if (!a.proportions.empty()) m.proportions = a.proportions;
    if (!a.architectures.empty()) m.architectures = a.architectures;
    auto recs = load_manifest(run, a.manifest);
    auto plans = build_experiment_matrix(recs, seed, m);
    auto index = run.create("plans_index.csv");
    index << "plan,architecture,experiment,strategy,real_percent,real_pool,train_synthetic,train_real,val,test\n";
    for (const auto& p : plans) {
        auto os = run.create("plans/" + p.name + ".jsonl");
        write_plan_jsonl(os, p);
        index << p.name << ',' << p.architecture << ',' << p.experiment.slug << ',' << to_string(p.strategy) << ','
              << p.real_percent << ',' << p.real_pool_size << ',' << p.count("train", Domain::Synthetic) << ','
              << p.count("train", Domain::Real) << ','
              << p.count("val", Domain::Real) + p.count("val", Domain::Synthetic) << ','
              << p.count("test", Domain::Real) + p.count("test", Domain::Synthetic) << '\n';
    }
    auto ds = run.create("datasheet.md");
    write_datasheet(ds, recs, plans, seed, c.hash());
    run.params["plans"] = plans.size();
    run.params["proportions"] = m.proportions;
    run.params["architectures"] = m.architectures;
}

struct EvalArgs {
    std::string pred;
    std::string label;
    std::string aggregate = "image";
    std::string experiment = "experiment";
    int epoch = -1;
};

void eval(Run& run, const EvalArgs& a) {
    Aggregate mode = aggregate_from_string(a.aggregate);
    require(fs::is_directory(a.pred), "prediction directory not found: " + a.pred);
    require(fs::is_directory(a.label), "label directory not found: " + a.label);
    std::vector<fs::path> labels;
    for (const auto& e : fs::directory_iterator(a.label)) {
        auto n = e.path().filename().string();
        if (e.is_regular_file() && n.ends_with("_mask.png")) labels.push_back(e.path());
    }
    std::sort(labels.begin(), labels.end());
    require(!labels.empty(), "no *_mask.png label files in " + a.label);
    std::vector<std::string> missing;
    for (const auto& l : labels)
        if (!fs::is_regular_file(fs::path(a.pred) / l.filename())) missing.push_back(l.filename().string());
    require(missing.empty(), "predictions missing for " + std::to_string(missing.size()) + " labels, first: " +
                                 (missing.empty() ? "" : missing.front()));
    std::vector<EvalRow> rows(labels.size());
    tbb::parallel_for(std::size_t(0), labels.size(), [&](std::size_t i) {
        auto label = read_png(labels[i].string());
        auto pred = read_png((fs::path(a.pred) / labels[i].filename()).string());
        auto c = confusion(pred, label);
        rows[i] = {labels[i].filename().string(), c, metric_report(c)};
    });
    for (const auto& l : labels) run.inputs.emplace_back(l.filename().string(), hex64(fnv1a(read_file(l))));
    {
        auto os = run.create("eval_images.csv");
        write_eval_csv(os, rows);
    }
    EvalSummary s{a.experiment, a.epoch, mode, rows.size(), aggregate(rows, mode)};
    auto os = run.create("eval_summary.csv");
    write_eval_summary_csv(os, std::span(&s, 1));
    run.params["aggregate"] = to_string(mode);
    run.params["experiment"] = a.experiment;
    run.params["epoch"] = a.epoch;
}

struct ReportArgs {
    std::vector<std::string> summaries;
    std::string quality;
    std::string aggregate = "image";
};

void report(Run& run, const ReportArgs& a) {
    Aggregate mode = aggregate_from_string(a.aggregate);
    std::vector<EvalSummary> sums;
    for (const auto& p : a.summaries) {
        std::istringstream is(run.input(p));
        for (auto& s : read_eval_summary_csv(is))
            if (s.mode == mode) sums.push_back(std::move(s));
    }
    std::istringstream qs(run.input(a.quality));
    auto q = quality_ingest(qs);
    {
        auto os = run.create("quality_means.csv");
        os << "experiment,epoch,n,mean_quality\n";
        for (const auto& m : q.means) {
            char buf[64];
            std::snprintf(buf, sizeof buf, ",%d,%zu,%.6f\n", m.epoch, m.n, m.mean);
            os << m.experiment << buf;
        }
    }
    {
        auto os = run.create("quality_rejected.txt");
        for (const auto& r : q.rejected) os << r << '\n';
    }
    auto pts = join_dice_quality(q.means, sums);
    auto rep = dice_quality_correlation(pts);
    {
        auto os = run.create("correlation.csv");
        write_correlation_csv(os, rep);
    }
    auto svg = run.create("dice_quality.svg");
    write_dice_quality_svg(svg, pts, rep);
    run.params["aggregate"] = to_string(mode);
    run.params["points"] = pts.size();
    run.params["rejected_rows"] = q.rejected.size();
}

//---------------------------------------------------------------------------//
// Dispatch
//---------------------------------------------------------------------------//

const std::vector<std::pair<std::string, std::vector<std::string>>>& command_table() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> t{
        {"blocks", {"sample", "select"}},
        {"dfn", {"gen"}},
        {"scene", {"slope", "box"}},
        {"traces", {"extract"}},
        {"analyze", {"topology", "blocks"}},
        {"render", {}},
        {"dataset", {"manifest", "split", "matrix"}},
        {"eval", {}},
        {"report", {}},
    };
    return t;
}

std::string usage_text() {
    std::string s = "usage: fracsynth <command> [<subcommand>] [options]\n\ncommands:\n";
    for (const auto& [cmd, subs] : command_table()) {
        s += "  " + cmd;
        if (!subs.empty()) {
            s += " ";
            for (std::size_t i = 0; i < subs.size(); ++i) s += (i ? "|" : "") + subs[i];
        }
        s += "\n";
    }
    s += "\ncommon options: --config <path> --seed <u64> --out <dir> --jobs <n>\n"
         "run 'fracsynth <command> [<subcommand>] --help' for details\n";
    return s;
}

//! Empty when the command path is known, else the offending word.
std::optional<std::string> unknown_command(std::span<const std::string> args) {
    if (args.empty()) return std::string();
    if (args[0] == "--help" || args[0] == "-h" || args[0] == "--version") return std::nullopt;
    for (const auto& [cmd, subs] : command_table()) {
        if (cmd != args[0]) continue;
        if (subs.empty()) return std::nullopt;
        if (args.size() < 2) return std::string();
        if (args[1] == "--help" || args[1] == "-h") return std::nullopt;
        if (std::find(subs.begin(), subs.end(), args[1]) != subs.end()) return std::nullopt;
        return args[1];
    }
    return args[0];
}

void error_report(std::ostream& err, const Run& run, const std::string& kind, const std::string& message, int code) {
    ojson j;
    j["status"] = "error";
    j["kind"] = kind;
    j["command"] = run.command;
    j["message"] = message;
    j["exit_code"] = code;
    err << j.dump() << '\n';
    if (!run.out_dir.empty()) {
        std::error_code ec;
        fs::create_directories(run.out_dir, ec);
        std::ofstream os(fs::path(run.out_dir) / "error.json");
        if (os) os << j.dump(2) << '\n';
    }
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
    if (auto bad = unknown_command(args)) {
        if (!bad->empty()) err << "fracsynth: unknown command '" << *bad << "'\n\n";
        err << usage_text();
        return kExitUsage;
    }

    CLI::App app{"Synthetic rock-joint trace images and labels, from block shapes to evaluation.", "fracsynth"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);
    Run run;

    auto common = [&](CLI::App* sub, const std::string& name) {
        sub->add_option("--config", run.config_path, "TOML-style config file")->check(CLI::ExistingFile);
        sub->add_option("--seed", run.seed_text, "master seed (u64); falls back to FRACSYNTH_SEED");
        sub->add_option("--out", run.out_dir, "output directory")->required();
        sub->add_option("--jobs", run.jobs, "worker threads, 0 = all cores");
        sub->callback([&run, name] { run.command = name; });
    };
    auto group = [&](const std::string& name, const std::string& desc) {
        auto g = app.add_subcommand(name, desc);
        g->require_subcommand(1);
        return g;
    };

    BlocksArgs ba;
    auto blocks = group("blocks", "parallelepiped block templates");
    auto bs = blocks->add_subcommand("sample", "Latin-hypercube sample of blocks -> blocks.csv");
    bs->add_option("--n", ba.n, "number of blocks (default 8192)");
    common(bs, "blocks sample");
    auto bsel = blocks->add_subcommand("select", "representative subset -> selection.jsonl");
    bsel->add_option("--in", ba.input, "blocks.csv or selection.jsonl")->required();
    bsel->add_option("--k", ba.k, "number of representatives (default 27)");
    common(bsel, "blocks select");

    DfnArgs da;
    auto dfn = group("dfn", "discrete fracture networks");
    auto dg = dfn->add_subcommand("gen", "one DFN per selected block -> dfnNN.jsonl");
    dg->add_option("--blocks", da.blocks, "selection.jsonl or blocks.csv")->required();
    dg->add_option("--only", da.only, "generate only these block indices");
    common(dg, "dfn gen");

    SceneArgs sa;
    auto scene = group("scene", "scene surfaces");
    auto ss = scene->add_subcommand("slope", "benched slope mesh -> slope.obj (+ kinematic reports)");
    ss->add_option("--dfn", sa.dfns, "DFN files to screen kinematically");
    common(ss, "scene slope");
    auto sb = scene->add_subcommand("box", "stacked boxes -> box.obj, box_traces.jsonl");
    common(sb, "scene box");

    TracesArgs ta;
    auto traces = group("traces", "joint traces");
    auto te = traces->add_subcommand("extract", "intersect DFNs with a surface -> NAME_traces.jsonl");
    te->add_option("--dfn", ta.dfns, "DFN JSONL files")->required();
    te->add_option("--mesh", ta.mesh, "surface OBJ")->required();
    te->add_flag("--svg", ta.svg, "also write an SVG per trace set");
    common(te, "traces extract");

    AnalyzeArgs aa;
    auto analyze = group("analyze", "trace-map and block statistics");
    auto at = analyze->add_subcommand("topology", "I/X/Y census -> topology.csv, ternary.svg");
    at->add_option("--traces", aa.traces, "trace JSONL files")->required();
    at->add_option("--mesh", aa.mesh, "surface OBJ with UVs")->required();
    common(at, "analyze topology");
    auto ab = analyze->add_subcommand("blocks", "block volume and shape statistics per template");
    ab->add_option("--blocks", aa.blocks, "selection.jsonl or blocks.csv")->required();
    common(ab, "analyze blocks");

    RenderArgs ra;
    auto rend = app.add_subcommand("render", "image/mask pairs for every (traces, texture, pose)");
    rend->add_option("--mesh", ra.mesh, "surface OBJ")->required();
    rend->add_option("--traces", ra.traces, "trace JSONL files")->required();
    rend->add_option("--textures", ra.textures, "texture ids (default: all)");
    rend->add_option("--poses", ra.poses, "camera targets (default 118)");
    common(rend, "render");

    DatasetArgs dsa;
    auto dataset = group("dataset", "manifests, splits and experiment plans");
    auto dm = dataset->add_subcommand("manifest", "scan image/mask pairs -> manifest.jsonl");
    dm->add_option("--root", dsa.roots, "path[:domain[:scene[:site]]]")->required();
    common(dm, "dataset manifest");
    auto dsp = dataset->add_subcommand("split", "stratified train/val split -> manifest.jsonl");
    dsp->add_option("--manifest", dsa.manifest, "input manifest")->required();
    dsp->add_option("--val-fraction", dsa.val_fraction, "validation share (default 0.1)");
    common(dsp, "dataset split");
    auto dmx = dataset->add_subcommand("matrix", "experiment plans -> plans/*.jsonl, datasheet.md");
    dmx->add_option("--manifest", dsa.manifest, "input manifest")->required();
    dmx->add_option("--proportion", dsa.proportions, "real-data percentages");
    dmx->add_option("--arch", dsa.architectures, "architectures");
    common(dmx, "dataset matrix");

    EvalArgs ea;
    auto ev = app.add_subcommand("eval", "score predicted masks against labels");
    ev->add_option("--pred", ea.pred, "directory of predicted masks")->required();
    ev->add_option("--label", ea.label, "directory of *_mask.png labels")->required();
    ev->add_option("--aggregate", ea.aggregate, "image | pixel");
    ev->add_option("--experiment", ea.experiment, "experiment name for the summary row");
    ev->add_option("--epoch", ea.epoch, "epoch for the summary row");
    common(ev, "eval");

    ReportArgs rpa;
    auto rep = app.add_subcommand("report", "Dice vs qualitative score correlation");
    rep->add_option("--summary", rpa.summaries, "eval_summary.csv files")->required();
    rep->add_option("--quality", rpa.quality, "qualitative score CSV")->required();
    rep->add_option("--aggregate", rpa.aggregate, "which summary rows to use: image | pixel");
    common(rep, "report");

    std::vector<std::string> argv_rev(args.rbegin(), args.rend());
    try {
        app.parse(argv_rev);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        if (run.command.empty()) {
            // Callbacks have not run; name the deepest parsed subcommand.
            for (auto* s = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front(); s;
                 s = s->get_subcommands().empty() ? nullptr : s->get_subcommands().front())
                run.command = run.command.empty() ? s->get_name() : run.command + " " + s->get_name();
        }
        error_report(err, run, "validation", e.what(), kExitValidation);
        return kExitValidation;
    }

    try {
        run.prepare();
        auto dispatch = [&] {
            const std::string& c = run.command;
            if (c == "blocks sample") blocks_sample(run, ba);
            else if (c == "blocks select") blocks_select(run, ba);
            else if (c == "dfn gen") dfn_gen(run, da);
            else if (c == "scene slope") scene_slope(run, sa);
            else if (c == "scene box") scene_box(run);
            else if (c == "traces extract") traces_extract(run, ta);
            else if (c == "analyze topology") analyze_topology(run, aa);
            else if (c == "analyze blocks") analyze_blocks(run, aa);
            else if (c == "render") render(run, ra);
            else if (c == "dataset manifest") dataset_manifest(run, dsa, err);
            else if (c == "dataset split") dataset_split(run, dsa);
            else if (c == "dataset matrix") dataset_matrix(run, dsa);
            else if (c == "eval") eval(run, ea);
            else if (c == "report") report(run, rpa);
        };
        if (run.jobs > 0) {
            // global_control alone cannot exceed the core count; the arena
            // gives exactly `jobs` slots.
            tbb::global_control gc(tbb::global_control::max_allowed_parallelism, run.jobs);
            tbb::task_arena arena(run.jobs);
            arena.execute(dispatch);
        } else {
            dispatch();
        }
        std::error_code ec;
        fs::remove(run.out / "error.json", ec);
        run.write_provenance();
        out << run.command << ": wrote " << run.outputs.size() << " files to " << run.out.string() << '\n';
        return kExitOk;
    } catch (const ValidationError& e) {
        error_report(err, run, "validation", e.what(), kExitValidation);
        return kExitValidation;
    } catch (const GenerationError& e) {
        error_report(err, run, "generation", e.what(), kExitFailure);
        return kExitFailure;
    } catch (const std::exception& e) {
        error_report(err, run, "failure", e.what(), kExitFailure);
        return kExitFailure;
    }
}

}  // namespace fracsynth
