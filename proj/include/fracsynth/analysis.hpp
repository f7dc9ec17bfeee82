#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fracsynth/blockshape.hpp"
#include "fracsynth/geometry.hpp"
#include "fracsynth/traces.hpp"

namespace fracsynth {

//---------------------------------------------------------------------------//
// Trace-network topology
//---------------------------------------------------------------------------//

using Polyline2 = std::vector<Vec2>;

//! Unrolled surface coordinates in metres: mesh UVs scaled per axis.
std::vector<Polyline2> project_to_surface_uv(std::span<const Trace> traces, const TriMesh& surface,
                                             Vec2 uv_scale);
//! Per-axis metres per UV unit, least squares over mesh edges assuming an
//! orthogonal parametrisation. Throws ValidationError without UVs.
Vec2 estimate_uv_scale(const TriMesh& surface);
//! Orthogonal projection into a plane frame.
std::vector<Polyline2> project_to_plane(std::span<const Trace> traces, const PlaneFrame& frame);

enum class NodeType { I, Y, X };

std::string to_string(NodeType t);

struct TraceNode {
    Vec2 position;
    NodeType type = NodeType::I;
    int trace_a = -1;
    int trace_b = -1;  //!< second trace for X and Y nodes
    bool on_boundary = false;
};

//! Node tolerance default: ten times the geometry snap tolerance.
constexpr double kNodeTolerance = 10 * kSnapTolerance;

struct NodeOptions {
    double eps = kNodeTolerance;
    //! Map boundary; endpoints within eps of it are censored nodes.
    std::optional<std::array<Vec2, 2>> boundary;
    //! Drop censored endpoints instead of counting them as I nodes.
    bool exclude_boundary = false;
};

//! I: free endpoint. Y: endpoint on another trace (including two endpoints
//! meeting). X: interior crossing.
std::vector<TraceNode> classify_nodes(std::span<const Polyline2> traces, const NodeOptions& options = {});

struct TopologySummary {
    std::size_t n_i = 0, n_x = 0, n_y = 0;
    double n_lines = 0;  //!< (n_i + n_y) / 2
    double c_l = 0;      //!< 2 (n_x + n_y) / n_lines, 0 without lines
    double p_i = 0, p_x = 0, p_y = 0;
};

TopologySummary topology_summary(std::span<const TraceNode> nodes);

//! Triangular-plot point with I = (0, 0), Y = (1, 0), X = (0.5, sqrt 3 / 2).
Vec2 ternary_coordinates(const TopologySummary& s);

struct TopologyRow {
    std::string name;
    TopologySummary summary;
};
void write_topology_csv(std::ostream& os, std::span<const TopologyRow> rows);
void write_ternary_svg(std::ostream& os, std::span<const TopologyRow> rows);

//---------------------------------------------------------------------------//
// Block statistics
//---------------------------------------------------------------------------//

struct PlaneFamily {
    Orientation orientation;
    double spacing = 1;
};

struct BlockStats {
    std::vector<double> volumes;  //!< ascending, m^3
    //! (volume, percent of blocks with volume <= it), one entry per distinct volume.
    std::vector<std::pair<double, double>> cdf;
    std::vector<std::pair<std::string, double>> palmstrom_share;  //!< percent
    std::vector<std::pair<std::string, double>> singh_share;      //!< percent
};

//! Cells cut from the region by three persistent plane families whose
//! spacings are jittered by a factor in [1 - jitter, 1 + jitter]. Only cells
//! lying wholly inside the region are counted.
BlockStats block_statistics(std::span<const PlaneFamily> families, const Aabb& region, double jitter,
                            std::uint64_t seed, const ClassThresholds& thresholds = {});

void write_block_cdf_csv(std::ostream& os, const BlockStats& stats);
void write_block_shares_csv(std::ostream& os, const BlockStats& stats);
void write_block_cdf_svg(std::ostream& os, const BlockStats& stats);

}  // namespace fracsynth
