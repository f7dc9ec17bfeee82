#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "fracsynth/dfn.hpp"
#include "fracsynth/geometry.hpp"

namespace fracsynth {

//! A joint trace on a scene surface.
struct Trace {
    Polyline3 points;
    std::vector<Vec3> normals;  //!< surface normal per point; may be empty
    double length = 0;
    int set_id = 0;
    int fracture_id = -1;  //!< source fracture or polygon, -1 if synthetic
    double thickness = 0;
};

struct TraceStyle {
    double t_min = 0.01;
    double t_max = 0.10;
    double waviness_amplitude = 0.03;
    double waviness_wavelength = 2.0;

    void validate() const;
};

//! Length at which the visual thickness reaches t_max.
constexpr double kThicknessReferenceLength = 100.0;

//! Affine in length from t_min at L = 0 to t_max at L = 100 m, clamped above.
double thickness(double length, const TraceStyle& style);

//! Intersect every fracture with the surface and stitch into polylines.
//! Traces shorter than twice the snap tolerance are dropped.
std::vector<Trace> extract_traces(const Dfn& dfn, const TriMesh& surface);
std::vector<Trace> extract_traces(std::span<const Fracture> fractures, const Bvh& bvh);

//! Smooth lateral displacement within the surface tangent plane, tapered to
//! zero at both endpoints. Falls back to the input if length would drop.
Trace apply_waviness(const Trace& trace, const TraceStyle& style, std::uint64_t seed);

//! Waviness, then thickness from the post-waviness length.
std::vector<Trace> style_traces(std::span<const Trace> traces, const TraceStyle& style, std::uint64_t seed);

struct PlaneLabelOptions {
    double grid_step = 0.25;        //!< metres between sample nodes
    double displacement = 0.015;    //!< max offset normal to the joint plane
    double thickness_lo = 0.01;
    double thickness_hi = 0.10;
};

//! Traces for hand-digitised joint planes on a real surface: each polygon is
//! sampled on a grid, perturbed normal to its plane, and intersected with
//! the surface; thickness is drawn per trace.
std::vector<Trace> label_from_planes(std::span<const Polygon3> polygons, const TriMesh& surface,
                                     std::uint64_t seed, const PlaneLabelOptions& options = {});

void write_traces_jsonl(std::ostream& os, std::span<const Trace> traces);
std::vector<Trace> read_traces_jsonl(std::istream& is);

//! Orthographic view along `view_dir`, thickness drawn to scale.
void write_traces_svg(std::ostream& os, std::span<const Trace> traces, const Vec3& view_dir);

}  // namespace fracsynth
