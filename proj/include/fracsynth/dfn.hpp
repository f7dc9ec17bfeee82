#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fracsynth/blockshape.hpp"
#include "fracsynth/geometry.hpp"
#include "fracsynth/rng.hpp"

namespace fracsynth {

//---------------------------------------------------------------------------//
/*!
 * Stochastic discrete fracture networks.
 *
 * Each joint set places fracture centres uniformly (Poisson) in the region
 * with Fisher-dispersed orientations and lognormal equivalent radii until the
 * set's in-region area per unit volume reaches its P32 target. Random joints
 * form an extra, youngest pseudo-set with uniform orientations.
 */
//---------------------------------------------------------------------------//

//! Lognormal distribution of the equivalent fracture radius (metres).
struct SizeDistribution {
    double mu = 2.0794415416798357;  //!< ln 8
    double sigma = 0.5;
};

struct JointSet {
    Orientation mean_orientation;
    double fisher_kappa = 100;  //!< 0 is uniform; infinity is no dispersion
    double spacing = 1;         //!< metres
    double p32 = 1;             //!< m^2 / m^3
    SizeDistribution size;
    int chronology_rank = 0;  //!< lower is older

    void validate() const;
};

constexpr int kRandomSet = -1;

struct Fracture {
    Polygon3 polygon;
    int set_id = 0;  //!< joint set index, or kRandomSet
    int rank = 0;
};

struct Dfn {
    Aabb region;
    std::vector<Fracture> fractures;
    std::uint64_t seed = 0;
    std::string provenance;  //!< hex hash of the generating configuration
};

struct DfnOptions {
    int polygon_sides = 12;
    std::size_t max_fractures = 1'000'000;
    SizeDistribution random_size;
};

//! Areal density of an infinite family of parallel planes at this spacing.
double estimate_p32(double spacing);

//! Unit vector drawn from a Fisher distribution about `mean`.
Vec3 sample_fisher(const Vec3& mean, double kappa, Rng& rng);

Dfn generate_dfn(std::span<const JointSet> sets, double random_fraction, const Aabb& region,
                 std::uint64_t seed, const DfnOptions& options = {});

//! Fracture area clipped to the region per unit region volume, for one set
//! (or all fractures when set_id is omitted).
double achieved_p32(const Dfn& dfn, std::optional<int> set_id = std::nullopt);

//! Younger fractures terminate against older ones they intersect, each pair
//! independently with the given probability.
Dfn apply_chronology_termination(const Dfn& dfn, double termination_prob, std::uint64_t seed);

//! Generation in chronological order with each new fracture terminated
//! against older ones as it is placed; the P32 targets are met by the
//! terminated fractures.
Dfn generate_terminated_dfn(std::span<const JointSet> sets, double random_fraction, const Aabb& region,
                            std::uint64_t seed, double termination_prob, const DfnOptions& options = {});

struct DfnSuiteConfig {
    Aabb region{{-10, -10, -10}, {17, 110, 30}};
    double fisher_kappa = 100;
    SizeDistribution size;
    double random_fraction = 0.1;
    double termination_prob = 0.8;
    //! Meet P32 after termination instead of terminating a finished network.
    bool preserve_intensity = false;
    DfnOptions options;

    //! Hex digest of every field, recorded as DFN provenance.
    std::string hash() const;
};

//! One DFN per block: joint sets from the block, P32 from spacing,
//! generation, then chronology termination. Per-DFN seeds derive from
//! (master_seed, block index).
std::vector<Dfn> build_dfn_suite(std::span<const Parallelepiped> blocks, const DfnSuiteConfig& config,
                                 std::uint64_t master_seed);

//! Member `index` of the suite, identical to build_dfn_suite(...)[index].
Dfn build_suite_member(const Parallelepiped& block, const DfnSuiteConfig& config, std::uint64_t master_seed,
                       std::size_t index);

std::vector<JointSet> joint_sets_for_block(const Parallelepiped& block, const DfnSuiteConfig& config);

//! One fracture per line: id, set_id, rank, vertices.
void write_dfn_jsonl(std::ostream& os, const Dfn& dfn);
std::vector<Fracture> read_dfn_jsonl(std::istream& is);

}  // namespace fracsynth
