#include "fracsynth/imaging.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <tbb/parallel_for.h>

#include "fracsynth/error.hpp"
#include "fracsynth/rng.hpp"

namespace fracsynth {

//---------------------------------------------------------------------------//
// Textures
//---------------------------------------------------------------------------//

void TextureSpec::validate() const {
    require(ramp.size() >= 2, "texture ramp needs at least two stops");
    for (std::size_t i = 0; i < ramp.size(); ++i) {
        require(ramp[i].t >= 0 && ramp[i].t <= 1, "ramp stop t must lie in [0, 1]");
        require(i == 0 || ramp[i].t >= ramp[i - 1].t, "ramp stops must be ascending");
        for (double c : ramp[i].rgb) require(c >= 0 && c <= 1, "ramp colours must lie in [0, 1]");
    }
    require(octaves >= 1 && octaves <= 12, "octaves must lie in [1, 12]");
    require(frequency > 0 && std::isfinite(frequency), "texture frequency must be positive");
    require(gain > 0 && gain < 1, "fBm gain must lie in (0, 1)");
    require(grain_contrast >= 0 && grain_contrast <= 1, "grain contrast must lie in [0, 1]");
    require(grain_frequency > 0, "grain frequency must be positive");
    require(banding >= 0, "banding must be non-negative");
}

std::array<double, 3> ramp_color(std::span<const ColorStop> ramp, double t) {
    if (t <= ramp.front().t) return ramp.front().rgb;
    if (t >= ramp.back().t) return ramp.back().rgb;
    for (std::size_t i = 1; i < ramp.size(); ++i) {
        if (t <= ramp[i].t) {
            double span = ramp[i].t - ramp[i - 1].t;
            double w = span > 0 ? (t - ramp[i - 1].t) / span : 1.0;
            std::array<double, 3> c;
            for (int k = 0; k < 3; ++k) c[k] = ramp[i - 1].rgb[k] * (1 - w) + ramp[i].rgb[k] * w;
            return c;
        }
    }
    return ramp.back().rgb;
}

TextureSampler::TextureSampler(const TextureSpec& spec)
    : spec_(spec), base_(derive_seed(spec.noise_seed, 1)), grain_(derive_seed(spec.noise_seed, 2)) {
    spec_.validate();
}

std::array<double, 3> TextureSampler::color(const Vec3& p) const {
    double n = base_.fbm(p * spec_.frequency, spec_.octaves, spec_.gain);
    double t = 0.5 + 0.9 * n;
    if (spec_.banding > 0) {
        // Noise-warped layers.
        double phase = p.z * spec_.banding + 1.5 * n;
        t = 0.5 * t + 0.25 * (1 + std::sin(2 * std::numbers::pi * phase));
    }
    t += 0.5 * spec_.grain_contrast * grain_.noise(p.x * spec_.grain_frequency, p.y * spec_.grain_frequency,
                                                   p.z * spec_.grain_frequency);
    return ramp_color(spec_.ramp, std::clamp(t, 0.0, 1.0));
}

std::vector<TextureSpec> texture_suite(std::uint64_t seed) {
    auto rgb = [](int r, int g, int b) { return std::array<double, 3>{r / 255.0, g / 255.0, b / 255.0}; };
    std::vector<TextureSpec> s(8);
    s[0] = {0, "granite", {{0, rgb(70, 66, 64)}, {0.45, rgb(168, 160, 156)}, {0.8, rgb(214, 200, 196)}, {1, rgb(240, 232, 228)}},
            4, 1.5, 0.5, 0.8, 60, 0, 0};
    s[1] = {1, "limestone", {{0, rgb(150, 146, 128)}, {0.5, rgb(200, 196, 178)}, {1, rgb(232, 228, 212)}},
            5, 0.6, 0.55, 0.15, 30, 1.2, 0};
    s[2] = {2, "basalt", {{0, rgb(24, 24, 28)}, {0.6, rgb(62, 62, 68)}, {1, rgb(100, 98, 102)}},
            5, 2.0, 0.5, 0.3, 50, 0, 0};
    s[3] = {3, "weathered", {{0, rgb(88, 58, 34)}, {0.4, rgb(146, 104, 62)}, {0.75, rgb(186, 150, 104)}, {1, rgb(214, 190, 150)}},
            6, 0.8, 0.6, 0.25, 25, 0, 0};
    s[4] = {4, "sandstone", {{0, rgb(166, 106, 64)}, {0.5, rgb(210, 156, 100)}, {1, rgb(236, 196, 146)}},
            4, 0.5, 0.5, 0.35, 45, 3.0, 0};
    s[5] = {5, "gneiss", {{0, rgb(46, 44, 48)}, {0.35, rgb(120, 116, 118)}, {0.65, rgb(190, 182, 176)}, {1, rgb(226, 220, 214)}},
            5, 1.0, 0.5, 0.5, 55, 5.0, 0};
    s[6] = {6, "slate", {{0, rgb(48, 56, 66)}, {0.5, rgb(86, 96, 108)}, {1, rgb(132, 140, 150)}},
            3, 0.4, 0.45, 0.1, 20, 0, 0};
    s[7] = {7, "marble", {{0, rgb(150, 150, 156)}, {0.3, rgb(218, 216, 214)}, {1, rgb(246, 244, 240)}},
            6, 0.7, 0.6, 0.05, 15, 0.8, 0};
    for (auto& t : s) {
        t.noise_seed = derive_seed(seed, static_cast<std::uint64_t>(t.id));
        t.validate();
    }
    return s;
}

//---------------------------------------------------------------------------//
// Cameras
//---------------------------------------------------------------------------//

void CameraSpec::validate() const {
    require(is_finite(target) && is_finite(position), "camera target and position must be finite");
    require(distance(position, target) > 1e-9, "camera position must differ from its target");
    require(fov > 10 && fov < 120, "camera fov must lie in (10, 120) degrees");
    require(is_finite(up) && norm(up) > 0, "camera up vector must be non-zero");
}

std::array<Vec3, 3> CameraSpec::basis() const {
    Vec3 f = normalized(target - position);
    Vec3 u = normalized(up);
    if (norm(cross(f, u)) < 1e-6) u = std::abs(f.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    Vec3 r = normalized(cross(f, u));
    return {r, cross(r, f), f};
}

std::vector<CameraSpec> sample_camera_poses(const Bvh& surface, std::size_t n_targets,
                                            std::array<double, 2> dist_range, std::uint64_t seed,
                                            const PoseOptions& options) {
    require(n_targets >= 1, "at least one camera target is required");
    require(dist_range[0] > 0 && dist_range[0] <= dist_range[1], "distance range needs 0 < d_min <= d_max");
    require(options.max_attempts >= 1, "max_attempts must be positive");
    const TriMesh& mesh = surface.mesh();
    require(mesh.triangle_count() > 0, "surface has no triangles");
    double ground = std::isnan(options.ground_z) ? mesh.bounds().lo.z : options.ground_z;

    std::vector<double> cdf(mesh.triangle_count());
    double acc = 0;
    for (std::size_t t = 0; t < cdf.size(); ++t) cdf[t] = acc += mesh.face_area(t);

    std::vector<CameraSpec> poses;
    poses.reserve(n_targets);
    for (std::size_t i = 0; i < n_targets; ++i) {
        Rng rng(derive_seed(seed, i));
        bool found = false;
        for (int attempt = 0; attempt < options.max_attempts && !found; ++attempt) {
            // Stratum i of the cumulative area keeps targets spread out.
            double u = (static_cast<double>(i) + rng.uniform()) / static_cast<double>(n_targets) * acc;
            std::size_t t = std::min<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin(), cdf.size() - 1);
            auto [a, b, c] = mesh.corners(t);
            double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
            Vec3 target = a * (1 - r1) + b * (r1 * (1 - r2)) + c * (r1 * r2);
            Vec3 n = mesh.face_normal(t);
            double d = rng.uniform(dist_range[0], dist_range[1]);
            CameraSpec cam{target, target + n * d, options.fov, options.up};
            if (cam.position.z < ground) continue;
            Vec3 dir = normalized(target - cam.position);
            auto hit = surface.intersect(cam.position, dir);
            if (!hit || dot(mesh.face_normal(hit->triangle), dir) >= 0) continue;
            poses.push_back(cam);
            found = true;
        }
        if (!found) throw GenerationError("no front-facing camera pose found for target " + std::to_string(i));
    }
    return poses;
}

//---------------------------------------------------------------------------//
// Rendering
//---------------------------------------------------------------------------//

void RenderOptions::validate() const {
    require(width > 0 && height > 0, "image dimensions must be positive");
    require(supersample >= 1 && supersample <= 8, "supersample must lie in [1, 8]");
    require(darkening >= 0 && darkening <= 1, "darkening must lie in [0, 1]");
    require(ambient >= 0 && ambient <= 1, "ambient must lie in [0, 1]");
    require(is_finite(light_dir) && norm(light_dir) > 0, "light direction must be non-zero");
}

namespace {

std::uint64_t cell_key(long x, long y, long z) {
    auto u = [](long v) { return static_cast<std::uint64_t>(v) & 0x1fffff; };
    return (u(x) << 42) | (u(y) << 21) | u(z);
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
    Vec3 ab = b - a;
    double len2 = dot(ab, ab);
    double t = len2 > 0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
    return distance(p, a + ab * t);
}

}  // namespace

RenderScene::RenderScene(TriMesh mesh, std::vector<Trace> traces)
    : mesh_(std::make_unique<TriMesh>(std::move(mesh))), traces_(std::move(traces)) {
    bvh_ = std::make_unique<Bvh>(*mesh_);
    double max_half = 0;
    for (const auto& tr : traces_) {
        if (!(tr.thickness > 0)) continue;
        double half = tr.thickness / 2;
        max_half = std::max(max_half, half);
        for (std::size_t k = 1; k < tr.points.size(); ++k) segs_.push_back({tr.points[k - 1], tr.points[k], half});
    }
    cell_ = std::max(0.25, 4 * max_half);
    auto c = [&](double v) { return static_cast<long>(std::floor(v / cell_)); };
    for (std::uint32_t s = 0; s < segs_.size(); ++s) {
        Aabb box;
        box.expand(segs_[s].a);
        box.expand(segs_[s].b);
        box = box.inflated(segs_[s].half);
        for (long x = c(box.lo.x); x <= c(box.hi.x); ++x)
            for (long y = c(box.lo.y); y <= c(box.hi.y); ++y)
                for (long z = c(box.lo.z); z <= c(box.hi.z); ++z) grid_.push_back({cell_key(x, y, z), s});
    }
    std::sort(grid_.begin(), grid_.end());
}

bool RenderScene::is_joint(const Vec3& p) const {
    if (grid_.empty()) return false;
    auto c = [&](double v) { return static_cast<long>(std::floor(v / cell_)); };
    std::uint64_t key = cell_key(c(p.x), c(p.y), c(p.z));
    auto lo = std::lower_bound(grid_.begin(), grid_.end(), std::pair<std::uint64_t, std::uint32_t>{key, 0});
    for (auto it = lo; it != grid_.end() && it->first == key; ++it) {
        const Seg& s = segs_[it->second];
        if (point_segment_distance(p, s.a, s.b) <= s.half) return true;
    }
    return false;
}

ImagePair render_pair(const RenderScene& scene, const TextureSpec& texture, const CameraSpec& camera,
                      const RenderOptions& options) {
    camera.validate();
    options.validate();
    TextureSampler sampler(texture);
    auto [right, up, fwd] = camera.basis();
    const int w = options.width, h = options.height, ss = options.supersample;
    const double tan_half = std::tan(camera.fov * std::numbers::pi / 360.0);
    const double aspect = static_cast<double>(w) / h;
    const Vec3 to_light = -normalized(options.light_dir);
    const Bvh& bvh = scene.bvh();
    const TriMesh& mesh = scene.mesh();

    auto ray_dir = [&](double sx, double sy) {
        double x = (2 * sx / w - 1) * tan_half * aspect;
        double y = (1 - 2 * sy / h) * tan_half;
        return normalized(fwd + right * x + up * y);
    };

    ImagePair pair;
    pair.camera = camera;
    pair.texture = texture.id;
    pair.rgb = {w, h, 3, std::vector<std::uint8_t>(std::size_t(w) * h * 3)};
    pair.mask = {w, h, 1, std::vector<std::uint8_t>(std::size_t(w) * h)};

    tbb::parallel_for(0, h, [&](int py) {
        for (int px = 0; px < w; ++px) {
            auto centre = bvh.intersect(camera.position, ray_dir(px + 0.5, py + 0.5));
            bool joint = centre && scene.is_joint(camera.position + ray_dir(px + 0.5, py + 0.5) * centre->t);

            std::array<double, 3> sum{0, 0, 0};
            for (int j = 0; j < ss; ++j) {
                for (int i = 0; i < ss; ++i) {
                    Vec3 d = ray_dir(px + (i + 0.5) / ss, py + (j + 0.5) / ss);
                    auto hit = bvh.intersect(camera.position, d);
                    if (!hit) {
                        for (double& v : sum) v += 1.0;
                        continue;
                    }
                    Vec3 p = camera.position + d * hit->t;
                    Vec3 n = mesh.face_normal(hit->triangle);
                    if (dot(n, d) > 0) n = -n;
                    double shade = options.ambient + (1 - options.ambient) * std::max(0.0, dot(n, to_light));
                    auto col = sampler.color(p);
                    for (int k = 0; k < 3; ++k) sum[k] += col[k] * shade;
                }
            }
            double scale = (joint ? options.darkening : 1.0) / (ss * ss);
            for (int k = 0; k < 3; ++k) {
                pair.rgb.at(px, py, k) = static_cast<std::uint8_t>(std::clamp(std::lround(sum[k] * scale * 255.0), 0L, 255L));
            }
            pair.mask.at(px, py) = joint ? kMaskJoint : kMaskBackground;
        }
    });
    return pair;
}

std::size_t joint_pixel_count(const Image& mask) {
    return static_cast<std::size_t>(std::count(mask.pixels.begin(), mask.pixels.end(), kMaskJoint));
}

//---------------------------------------------------------------------------//
// PNG
//---------------------------------------------------------------------------//

namespace {

void png_append(png_structp png, png_bytep data, png_size_t len) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + len);
}

void png_noop_flush(png_structp) {}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    (void)msg;
    png_longjmp(png, 1);
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& img) {
    require(img.width > 0 && img.height > 0, "image dimensions must be positive");
    require(img.channels == 1 || img.channels == 3, "PNG output supports 1 or 3 channels");
    require(img.pixels.size() == std::size_t(img.width) * img.height * img.channels, "pixel buffer size mismatch");
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("PNG encoding failed");
    }
    png_set_write_fn(png, &out, png_append, png_noop_flush);
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_SUB);
    png_set_IHDR(png, info, img.width, img.height, 8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::size_t stride = std::size_t(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(img.pixels.data() + stride * y));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const std::string& path, const Image& img) {
    auto bytes = encode_png(img);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("failed writing " + path);
}

std::string png_library_version() { return png_get_libpng_ver(nullptr); }

Image read_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw ValidationError("invalid PNG file: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);
    Image img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    img.pixels.resize(std::size_t(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) rows[y] = img.pixels.data() + std::size_t(y) * img.width * img.channels;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

std::string pair_stem(std::string_view dfn, int texture, int pose) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_t%d_p%04d", texture, pose);
    return std::string(dfn) + buf;
}

void write_pair(const std::string& dir, const ImagePair& pair) {
    std::filesystem::create_directories(dir);
    std::string stem = (std::filesystem::path(dir) / pair_stem(pair.dfn, pair.texture, pair.pose)).string();
    write_png(stem + ".png", pair.rgb);
    write_png(stem + "_mask.png", pair.mask);
}

}  // namespace fracsynth
