#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include <tbb/global_control.h>
#include <tbb/task_arena.h>

#include "doctest.h"
#include "fixtures.hpp"
#include "fracsynth/error.hpp"
#include "fracsynth/imaging.hpp"
#include "fracsynth/scenes.hpp"

using namespace fracsynth;
using fracsynth::testing::grid_mesh;

namespace {

RenderOptions small(int px = 96) {
    RenderOptions o;
    o.width = o.height = px;
    return o;
}

//! Frontal camera on the gap crossing of the default 2 x 2 box wall, placed
//! so one metre on the wall spans `ppm` pixels.
CameraSpec frontal_box_camera(const BoxSceneSpec& spec, double ppm, int width) {
    double yc = spec.width + spec.gap / 2, zc = spec.height + spec.gap / 2;
    double d = (width / 2.0) / (ppm * std::tan(25.0 * std::numbers::pi / 180));
    return CameraSpec{{0, yc, zc}, {d, yc, zc}, 50, {0, 0, 1}};
}

}  // namespace

TEST_CASE("ramp_color interpolates and clamps") {
    std::vector<ColorStop> ramp{{0.2, {0, 0, 0}}, {0.6, {1, 0.5, 0}}, {1.0, {1, 1, 1}}};
    CHECK(ramp_color(ramp, 0.0) == std::array<double, 3>{0, 0, 0});
    CHECK(ramp_color(ramp, 2.0) == std::array<double, 3>{1, 1, 1});
    auto c = ramp_color(ramp, 0.4);
    CHECK(c[0] == doctest::Approx(0.5));
    CHECK(c[1] == doctest::Approx(0.25));
    CHECK(c[2] == doctest::Approx(0.0));
    c = ramp_color(ramp, 0.8);
    CHECK(c[1] == doctest::Approx(0.75));
}

TEST_CASE("texture_suite") {
    auto a = texture_suite(11), b = texture_suite(11), c = texture_suite(12);
    REQUIRE(a.size() == 8);
    std::set<int> ids;
    std::set<std::string> names;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ids.insert(a[i].id);
        names.insert(a[i].name);
        CHECK(a[i].ramp.size() >= 2);
        CHECK(a[i].noise_seed == b[i].noise_seed);
        CHECK(a[i].noise_seed != c[i].noise_seed);
        CHECK(a[i].frequency == c[i].frequency);
    }
    CHECK(ids.size() == 8);
    CHECK(names.size() == 8);

    // Colours stay inside the ramp's channel range.
    for (const auto& t : a) {
        TextureSampler s(t), s2(t);
        double lo[3] = {1, 1, 1}, hi[3] = {0, 0, 0};
        for (const auto& stop : t.ramp)
            for (int k = 0; k < 3; ++k) lo[k] = std::min(lo[k], stop.rgb[k]), hi[k] = std::max(hi[k], stop.rgb[k]);
        Rng rng(3);
        for (int i = 0; i < 200; ++i) {
            Vec3 p{rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(-50, 50)};
            auto col = s.color(p);
            CHECK(col == s2.color(p));
            for (int k = 0; k < 3; ++k) {
                CHECK(col[k] >= lo[k] - 1e-12);
                CHECK(col[k] <= hi[k] + 1e-12);
            }
        }
    }

    TextureSpec bad = a[0];
    bad.ramp.resize(1);
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = a[0];
    bad.grain_contrast = 1.5;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("camera spec") {
    CameraSpec cam{{0, 0, 0}, {0, 0, 0}};
    CHECK_THROWS_AS(cam.validate(), ValidationError);
    cam.position = {5, 0, 0};
    CHECK_NOTHROW(cam.validate());
    cam.fov = 10;
    CHECK_THROWS_AS(cam.validate(), ValidationError);
    cam.fov = 120;
    CHECK_THROWS_AS(cam.validate(), ValidationError);

    for (Vec3 pos : {Vec3{5, 1, 2}, Vec3{0, 0, 7}, Vec3{0, 0, -3}}) {
        CameraSpec c{{0, 0, 0}, pos};
        auto [r, u, f] = c.basis();
        CHECK(norm(r) == doctest::Approx(1));
        CHECK(norm(u) == doctest::Approx(1));
        CHECK(dot(r, u) == doctest::Approx(0).epsilon(1e-12));
        CHECK(dot(r, f) == doctest::Approx(0).epsilon(1e-12));
        CHECK(dot(cross(r, u), -f) == doctest::Approx(1));
    }
}

TEST_CASE("sample_camera_poses on the slope") {
    auto mesh = build_slope_mesh(SlopeSpec{}, 1.0);
    Bvh bvh(mesh);
    auto poses = sample_camera_poses(bvh, 118, {8, 14}, 5);
    REQUIRE(poses.size() == 118);
    for (const auto& p : poses) {
        CHECK_NOTHROW(p.validate());
        double d = distance(p.position, p.target);
        CHECK(d >= 8 - 1e-9);
        CHECK(d <= 14 + 1e-9);
        CHECK(p.position.z >= mesh.bounds().lo.z);
        Vec3 dir = normalized(p.target - p.position);
        auto hit = bvh.intersect(p.position, dir);
        REQUIRE(hit);
        CHECK(dot(mesh.face_normal(hit->triangle), dir) < 0);
    }
    // Targets follow surface area: roughly equal counts over two halves in y.
    int west = 0;
    for (const auto& p : poses) west += p.target.y < 50;
    CHECK(std::abs(west - 59) <= 3);

    auto again = sample_camera_poses(bvh, 118, {8, 14}, 5);
    for (std::size_t i = 0; i < poses.size(); ++i) {
        CHECK(poses[i].position == again[i].position);
        CHECK(poses[i].target == again[i].target);
    }

    for (const auto& p : sample_camera_poses(bvh, 20, {10, 10}, 9)) {
        CHECK(distance(p.position, p.target) == doctest::Approx(10).epsilon(1e-12));
    }

    CHECK_THROWS_AS(sample_camera_poses(bvh, 0, {8, 14}, 5), ValidationError);
    CHECK_THROWS_AS(sample_camera_poses(bvh, 3, {0, 14}, 5), ValidationError);
    CHECK_THROWS_AS(sample_camera_poses(bvh, 3, {9, 8}, 5), ValidationError);
}

TEST_CASE("sample_camera_poses fails when every offset is below ground") {
    // Downward-facing floor: every normal offset lands under the ground plane.
    auto floor = grid_mesh({0, 0, 0}, {0, 1, 0}, {1, 0, 0}, 2, 2);
    Bvh bvh(floor);
    REQUIRE(floor.face_normal(0).z < 0);
    CHECK_THROWS_AS(sample_camera_poses(bvh, 2, {1, 2}, 1), GenerationError);
    PoseOptions opt;
    opt.ground_z = -100;
    CHECK(sample_camera_poses(bvh, 2, {1, 2}, 1, opt).size() == 2);
}

TEST_CASE("render_pair basics") {
    auto tex = texture_suite(1)[0];
    auto mesh = grid_mesh({0, -1, -1}, {0, 2, 0}, {0, 0, 2}, 4, 4);  // plane x = 0 facing +x
    CameraSpec cam{{0, 0, 0}, {3, 0, 0}};

    SUBCASE("no traces gives an all-background mask") {
        RenderScene scene(mesh, {});
        auto pair = render_pair(scene, tex, cam, small());
        CHECK(pair.rgb.width == 96);
        CHECK(pair.mask.channels == 1);
        CHECK(joint_pixel_count(pair.mask) == 0);
    }

    SUBCASE("misses are white background") {
        RenderScene scene(mesh, {});
        CameraSpec away{{10, 0, 0}, {3, 0, 0}};
        auto pair = render_pair(scene, tex, away, small(16));
        for (auto v : pair.rgb.pixels) CHECK(v == 255);
        for (auto v : pair.mask.pixels) CHECK(v == kMaskBackground);
    }

    SUBCASE("joint pixels are exactly the darkened ones") {
        Trace t;
        t.points = {{0, -1, 0.1}, {0, 1, -0.2}};
        t.thickness = 0.08;
        RenderScene scene(mesh, {t});
        auto dark = render_pair(scene, tex, cam, small());
        auto opts = small();
        opts.darkening = 1.0;
        auto plain = render_pair(scene, tex, cam, opts);
        std::size_t joints = 0;
        for (int y = 0; y < 96; ++y) {
            for (int x = 0; x < 96; ++x) {
                auto m = dark.mask.at(x, y);
                REQUIRE((m == 0 || m == 255));
                CHECK(m == plain.mask.at(x, y));
                for (int k = 0; k < 3; ++k) {
                    int d = dark.rgb.at(x, y, k), p = plain.rgb.at(x, y, k);
                    if (m == kMaskJoint) {
                        CHECK(std::abs(d - 0.2 * p) <= 1.0);
                    } else {
                        CHECK(d == p);
                    }
                }
                joints += m == kMaskJoint;
            }
        }
        CHECK(joints > 0);
        // The band is about 0.08 m wide over 2.28 m of trace.
        double ppm = 48 / (3 * std::tan(25.0 * std::numbers::pi / 180));
        double expect = 0.08 * std::hypot(2.0, 0.3) * ppm * ppm;
        CHECK(joints == doctest::Approx(expect).epsilon(0.25));
    }

    SUBCASE("zero thickness draws nothing") {
        Trace t;
        t.points = {{0, -1, 0}, {0, 1, 0}};
        t.thickness = 0;
        RenderScene scene(mesh, {t});
        CHECK(joint_pixel_count(render_pair(scene, tex, cam, small()).mask) == 0);
    }

    SUBCASE("thicker traces never shrink the mask") {
        Rng rng(8);
        std::vector<Trace> thin;
        for (int i = 0; i < 6; ++i) {
            Trace t;
            t.points = {{0, rng.uniform(-1, 1), rng.uniform(-1, 1)}, {0, rng.uniform(-1, 1), rng.uniform(-1, 1)}};
            t.thickness = rng.uniform(0.01, 0.05);
            thin.push_back(t);
        }
        auto thick = thin;
        for (auto& t : thick) t.thickness *= 2;
        auto a = render_pair(RenderScene(mesh, thin), tex, cam, small());
        auto b = render_pair(RenderScene(mesh, thick), tex, cam, small());
        CHECK(joint_pixel_count(b.mask) >= joint_pixel_count(a.mask));
        for (std::size_t i = 0; i < a.mask.pixels.size(); ++i) {
            if (a.mask.pixels[i] == kMaskJoint) CHECK(b.mask.pixels[i] == kMaskJoint);
        }
    }

    CHECK_THROWS_AS(render_pair(RenderScene(mesh, {}), tex, CameraSpec{{0, 0, 0}, {0, 0, 0}}, small()),
                    ValidationError);
    auto bad = small();
    bad.supersample = 0;
    CHECK_THROWS_AS(render_pair(RenderScene(mesh, {}), tex, cam, bad), ValidationError);
}

TEST_CASE("box scene frontal joint fraction matches the projected gap area") {
    BoxSceneSpec spec;
    auto scene = build_box_scene(spec);
    RenderScene rs(scene.mesh, scene.traces);
    const int w = 800;
    const double ppm = 600;
    auto pair = render_pair(rs, texture_suite(2)[3], frontal_box_camera(spec, ppm, w), RenderOptions{});

    // Front wall is 2 x 2 boxes; joints are the two gap bands crossing it.
    double wall_y = 2 * spec.width + spec.gap, wall_z = 2 * spec.height + spec.gap;
    double joint_area = spec.gap * wall_z + spec.gap * wall_y - spec.gap * spec.gap;
    double expect = joint_area * ppm * ppm / (double(w) * w);
    double got = double(joint_pixel_count(pair.mask)) / (double(w) * w);
    CHECK(got == doctest::Approx(expect).epsilon(0.01));
}

TEST_CASE("rendering is independent of thread count") {
    auto tex = texture_suite(4)[5];
    auto mesh = build_slope_mesh(SlopeSpec{}, 1.0);
    Trace t;
    t.points = {{2, 30, 12}, {2, 36, 14}};
    t.thickness = 0.1;
    CameraSpec cam{{1, 33, 10}, {12, 33, 14}};
    std::vector<std::uint8_t> one, many;
    {
        tbb::global_control gc(tbb::global_control::max_allowed_parallelism, 1);
        one = encode_png(render_pair(RenderScene(mesh, {t}), tex, cam, small(64)).rgb);
    }
    {
        // An explicit arena forces real worker threads even on one core.
        tbb::global_control gc(tbb::global_control::max_allowed_parallelism, 8);
        tbb::task_arena arena(8);
        arena.execute([&] { many = encode_png(render_pair(RenderScene(mesh, {t}), tex, cam, small(64)).rgb); });
    }
    CHECK(one == many);
}

TEST_CASE("PNG round trip and naming") {
    auto dir = std::filesystem::temp_directory_path() / "fracsynth_png_test";
    std::filesystem::create_directories(dir);
    Image rgb{5, 3, 3, {}}, gray{4, 2, 1, {}};
    for (int i = 0; i < 45; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 5));
    for (int i = 0; i < 8; ++i) gray.pixels.push_back(i % 2 ? 255 : 0);
    write_png((dir / "rgb.png").string(), rgb);
    write_png((dir / "gray.png").string(), gray);
    auto r = read_png((dir / "rgb.png").string());
    auto g = read_png((dir / "gray.png").string());
    CHECK(r.channels == 3);
    CHECK(r.pixels == rgb.pixels);
    CHECK(g.channels == 1);
    CHECK(g.width == 4);
    CHECK(g.pixels == gray.pixels);
    CHECK(encode_png(rgb) == encode_png(rgb));

    CHECK(pair_stem("dfn03", 2, 17) == "dfn03_t2_p0017");
    ImagePair pair;
    pair.rgb = rgb;
    pair.mask = Image{5, 3, 1, std::vector<std::uint8_t>(15, 255)};
    pair.dfn = "box";
    pair.texture = 1;
    pair.pose = 2;
    write_pair(dir.string(), pair);
    CHECK(std::filesystem::exists(dir / "box_t1_p0002.png"));
    CHECK(std::filesystem::exists(dir / "box_t1_p0002_mask.png"));

    std::ofstream(dir / "junk.png") << "not a png";
    CHECK_THROWS_AS(read_png((dir / "junk.png").string()), ValidationError);
    CHECK_THROWS(read_png((dir / "missing.png").string()));
    CHECK_THROWS_AS(encode_png(Image{2, 2, 2, std::vector<std::uint8_t>(8)}), ValidationError);
    std::filesystem::remove_all(dir);
}
