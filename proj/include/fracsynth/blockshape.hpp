#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fracsynth/geometry.hpp"

namespace fracsynth {

//---------------------------------------------------------------------------//
/*!
 * Parallelepiped block templates and their shape classification.
 *
 * A block has sorted edge lengths a1 <= a2 <= a3 and the angles between its
 * edge directions. Shape is summarised by flatness f = a2/a1 and elongation
 * e = a3/a2, which drive both a four-class Palmstrom scheme and a finer
 * configurable grid of Singh-style classes.
 */
//---------------------------------------------------------------------------//

struct Parallelepiped {
    std::array<double, 3> edges{1, 1, 1};  //!< metres, sorted ascending
    double alpha12 = 90, alpha13 = 90, alpha23 = 90;  //!< degrees

    //! Throws ValidationError if any invariant is violated.
    void validate() const;

    //! Unit edge directions in the block frame (u1 along +x, u2 in xy).
    std::array<Vec3, 3> edge_directions() const;
    //! Edge vectors (directions scaled by lengths).
    std::array<Vec3, 3> edge_vectors() const;
    double volume() const;
    //! Normalised Gram determinant of the edge directions; > 0 iff the cell is non-degenerate.
    double gram() const;

    Parallelepiped scaled(double s) const;
};

struct BlockShapeParams {
    double flatness = 1;    //!< a2 / a1
    double elongation = 1;  //!< a3 / a2
};

BlockShapeParams shape_params(const Parallelepiped& p);

enum class PalmstromClass { Equidimensional, Flat, Long, LongFlat };

std::string to_string(PalmstromClass c);
PalmstromClass palmstrom_from_string(const std::string& s);

//! Rectangular grid of named classes over (flatness, elongation).
struct SinghGrid {
    std::vector<double> flatness_bounds{1.5, 3.0};
    std::vector<double> elongation_bounds{1.5, 3.0};
    //! names[flatness bin][elongation bin]
    std::vector<std::vector<std::string>> names{
        {"Cubic", "CubicElongated", "Elongated"},
        {"PlatyCubic", "Bladed", "PlatyElongated"},
        {"Platy", "ElongatedPlaty", "Bladed"},
    };

    void validate() const;
    //! Distinct class names in grid order.
    std::vector<std::string> classes() const;
};

struct ClassThresholds {
    double palmstrom_flatness = 2.0;
    double palmstrom_elongation = 2.0;
    SinghGrid singh;
};

struct BlockShapeClass {
    PalmstromClass palmstrom = PalmstromClass::Equidimensional;
    std::string singh;
};

//! Values on a boundary fall into the lower-ratio class.
BlockShapeClass classify(const Parallelepiped& p, const ClassThresholds& t = {});

struct Interval {
    double lo = 0, hi = 0;
};

struct SamplingRanges {
    Interval a1{0.3, 2.0};        //!< shortest edge, metres (log-uniform)
    Interval flatness{1.0, 8.0};  //!< log-uniform
    Interval elongation{1.0, 8.0};
    Interval alpha12{65, 115};  //!< degrees
    Interval alpha13{65, 115};
    Interval alpha23{65, 115};

    void validate() const;
};

//! Latin-hypercube (jittered, stratified per parameter) sample of n blocks.
std::vector<Parallelepiped> sample_parallelepipeds(std::size_t n, const SamplingRanges& ranges,
                                                   std::uint64_t seed);

//! Indices (ascending) of k blocks covering every occupied class of both
//! schemes where k permits, then maximising spread in (log f, log e).
std::vector<std::size_t> select_representatives(std::span<const Parallelepiped> pop, std::size_t k,
                                                const ClassThresholds& t = {});

struct JointSetTemplate {
    Orientation orientation;
    Vec3 normal;
    double spacing = 1;  //!< metres
};

//! Face-pair j (opposite edge j) becomes joint set j.
std::array<JointSetTemplate, 3> joint_sets_from_block(const Parallelepiped& p);

//---------------------------------------------------------------------------//
// I/O
//---------------------------------------------------------------------------//

struct BlockRecord {
    std::size_t id = 0;
    Parallelepiped block;
};

void write_blocks_csv(std::ostream& os, std::span<const BlockRecord> blocks,
                      const ClassThresholds& t = {});
std::vector<BlockRecord> read_blocks_csv(std::istream& is);

void write_selection_jsonl(std::ostream& os, std::span<const BlockRecord> blocks,
                           const ClassThresholds& t = {});
std::vector<BlockRecord> read_selection_jsonl(std::istream& is);

}  // namespace fracsynth
