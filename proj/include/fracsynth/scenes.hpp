#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fracsynth/dfn.hpp"
#include "fracsynth/geometry.hpp"
#include "fracsynth/traces.hpp"

namespace fracsynth {

//---------------------------------------------------------------------------//
// Benched slope
//---------------------------------------------------------------------------//

//! East-facing benched cut. The crest runs along y at x = 0, z = total
//! height; benches step down and east to the toe at z = 0.
struct SlopeSpec {
    double length = 100;
    double bench_height = 10;
    int benches = 2;
    double bench_angle = 75;  //!< degrees from horizontal
    double berm_width = 1.5;

    void validate() const;
    double total_height() const { return bench_height * benches; }
    //! Horizontal distance from crest to toe.
    double horizontal_depth() const;
};

//! Structured grid over the bench faces and berms; UVs follow arc length
//! (u along strike, v down the profile).
TriMesh build_slope_mesh(const SlopeSpec& spec, double resolution);

struct RoughnessSpec {
    double amplitude = 0.08;  //!< metres
    double frequency = 0.5;   //!< 1/m
    int octaves = 4;
    std::uint64_t seed = 0;

    void validate() const;
};

//! Zero-mean fBm displacement along vertex normals, scaled so the largest
//! displacement equals the amplitude. Boundary vertices stay fixed.
TriMesh apply_perlin_roughness(const TriMesh& mesh, const RoughnessSpec& spec);

//---------------------------------------------------------------------------//
// Kinematic filter
//---------------------------------------------------------------------------//

struct KinematicOptions {
    double lateral_limit = 20;  //!< degrees either side of the face dip direction
    bool carve_notches = false;
};

struct KinematicFlag {
    std::string mode;  //!< "planar" or "wedge"
    int fracture_a = -1;
    int fracture_b = -1;
    int set_a = 0;
    int set_b = 0;
    double trend = 0;
    double plunge = 0;
};

struct KinematicReport {
    Orientation face;
    double friction_angle = 0;
    std::vector<KinematicFlag> flags;
};

struct KinematicResult {
    Dfn dfn;  //!< unchanged: removal is reported, not applied to the network
    TriMesh mesh;
    KinematicReport report;
};

//! Mean attitude of the steep (dip > 45 degrees) part of a surface.
Orientation face_orientation(const TriMesh& mesh);

//! Markland daylight test: a sliding direction of plunge p and trend t is
//! kinematically free when friction < p < face dip and |t - face dd| <= limit.
bool markland_daylights(const TrendPlunge& line, const Orientation& face, double friction_angle,
                        double lateral_limit);

//! Flags single planes (dip vectors) and intersecting fracture pairs (wedge
//! lines) among fractures that cut the surface.
KinematicResult kinematic_filter(const Dfn& dfn, const TriMesh& slope, double friction_angle,
                                 const KinematicOptions& options = {});

void write_kinematic_csv(std::ostream& os, const KinematicReport& report);

//---------------------------------------------------------------------------//
// Stacked boxes
//---------------------------------------------------------------------------//

//! Boxes on a regular grid: cell (column, level, row) sits at
//! y = column (w + gap), z = level (h + gap), and row r behind the front
//! face at x = 0 (front faces point +x).
struct BoxSceneSpec {
    double width = 0.59;   //!< along y
    double depth = 0.39;   //!< along x
    double height = 0.60;  //!< along z
    double gap = 0.01;
    std::vector<std::array<int, 3>> cells{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0}, {0, 0, 1}};

    void validate() const;
    Aabb box(const std::array<int, 3>& cell) const;
};

struct BoxScene {
    TriMesh mesh;
    std::vector<Aabb> boxes;
    //! Gap centrelines on exposed faces, thickness = gap.
    std::vector<Trace> traces;
};

//! Gap openings are closed flush with the exposed faces so the joint band
//! has exactly the gap's projected area.
BoxScene build_box_scene(const BoxSceneSpec& spec);

}  // namespace fracsynth
