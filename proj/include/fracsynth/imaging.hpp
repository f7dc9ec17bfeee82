#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fracsynth/geometry.hpp"
#include "fracsynth/noise.hpp"
#include "fracsynth/traces.hpp"

namespace fracsynth {

//---------------------------------------------------------------------------//
// Procedural textures
//---------------------------------------------------------------------------//

struct ColorStop {
    double t = 0;
    std::array<double, 3> rgb{0, 0, 0};  //!< linear [0, 1]
};

struct TextureSpec {
    int id = 0;
    std::string name;
    std::vector<ColorStop> ramp;  //!< ascending t in [0, 1]
    int octaves = 5;
    double frequency = 1.0;  //!< cycles per metre of the base octave
    double gain = 0.5;
    double grain_contrast = 0.2;  //!< [0, 1]
    double grain_frequency = 40;
    double banding = 0;  //!< bands per metre along z; 0 disables
    std::uint64_t noise_seed = 0;

    void validate() const;
};

//! Ramp lookup with linear interpolation, clamped at the ends.
std::array<double, 3> ramp_color(std::span<const ColorStop> ramp, double t);

//! Solid (3D) texture evaluated at world positions.
class TextureSampler {
  public:
    explicit TextureSampler(const TextureSpec& spec);
    std::array<double, 3> color(const Vec3& p) const;

  private:
    TextureSpec spec_;
    Perlin base_;
    Perlin grain_;
};

//! Eight distinct rock-like presets; the seed only moves the noise fields.
std::vector<TextureSpec> texture_suite(std::uint64_t seed);

//---------------------------------------------------------------------------//
// Cameras
//---------------------------------------------------------------------------//

struct CameraSpec {
    Vec3 target{0, 0, 0};
    Vec3 position{0, 0, 1};
    double fov = 50;  //!< vertical, degrees
    Vec3 up{0, 0, 1};

    void validate() const;
    //! Right-handed basis (right, up, forward); falls back to another up
    //! vector when `up` is parallel to the view direction.
    std::array<Vec3, 3> basis() const;
};

struct PoseOptions {
    double fov = 50;
    Vec3 up{0, 0, 1};
    //! Camera positions below this height are rejected; NaN uses the mesh's
    //! lowest point.
    double ground_z = std::numeric_limits<double>::quiet_NaN();
    int max_attempts = 100;
};

//! One front-facing pose per target, targets stratified by surface area.
//! Throws GenerationError when a target exhausts its attempts.
std::vector<CameraSpec> sample_camera_poses(const Bvh& surface, std::size_t n_targets,
                                            std::array<double, 2> dist_range, std::uint64_t seed,
                                            const PoseOptions& options = {});

//---------------------------------------------------------------------------//
// Rendering
//---------------------------------------------------------------------------//

struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;  //!< row-major, interleaved

    std::uint8_t& at(int x, int y, int c = 0) { return pixels[(std::size_t(y) * width + x) * channels + c]; }
    std::uint8_t at(int x, int y, int c = 0) const { return pixels[(std::size_t(y) * width + x) * channels + c]; }
};

struct RenderOptions {
    int width = 800;
    int height = 800;
    int supersample = 2;  //!< per axis, RGB only; the mask uses the pixel centre
    double darkening = 0.2;
    Vec3 light_dir = normalized(Vec3{-0.6, -0.25, -1.0});  //!< direction light travels
    double ambient = 0.3;

    void validate() const;
};

inline constexpr std::uint8_t kMaskJoint = 0;
inline constexpr std::uint8_t kMaskBackground = 255;

struct ImagePair {
    Image rgb;
    Image mask;
    CameraSpec camera;
    std::string dfn;
    int texture = 0;
    int pose = 0;
};

//! Mesh + traces with the acceleration structures rendering needs.
class RenderScene {
  public:
    RenderScene(TriMesh mesh, std::vector<Trace> traces);

    const TriMesh& mesh() const { return *mesh_; }
    const Bvh& bvh() const { return *bvh_; }
    std::span<const Trace> traces() const { return traces_; }

    //! Within T/2 of some trace with T > 0 (3D distance to the polyline).
    bool is_joint(const Vec3& p) const;

  private:
    struct Seg {
        Vec3 a, b;
        double half;
    };
    std::unique_ptr<TriMesh> mesh_;
    std::unique_ptr<Bvh> bvh_;
    std::vector<Trace> traces_;
    std::vector<Seg> segs_;
    double cell_ = 1;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> grid_;  //!< (cell key, segment), sorted
};

ImagePair render_pair(const RenderScene& scene, const TextureSpec& texture, const CameraSpec& camera,
                      const RenderOptions& options = {});

//! Number of mask pixels equal to kMaskJoint.
std::size_t joint_pixel_count(const Image& mask);

//---------------------------------------------------------------------------//
// PNG
//---------------------------------------------------------------------------//

//! 8-bit gray (1 channel) or truecolor (3 channels); fixed zlib level and no
//! timestamp chunk, so equal images give equal bytes.
std::vector<std::uint8_t> encode_png(const Image& img);
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);
//! Runtime libpng version string.
std::string png_library_version();

//! `{dfn}_{texture}_{pose}`; the mask adds `_mask`.
std::string pair_stem(std::string_view dfn, int texture, int pose);
//! Writes `<dir>/<stem>.png` and `<dir>/<stem>_mask.png`.
void write_pair(const std::string& dir, const ImagePair& pair);

}  // namespace fracsynth
