#pragma once

#include <array>
#include <cstdint>

#include "fracsynth/geometry.hpp"

namespace fracsynth {

//! Improved Perlin gradient noise with a seeded permutation table.
class Perlin {
  public:
    explicit Perlin(std::uint64_t seed);

    //! Roughly in [-1, 1]; zero at integer lattice points.
    double noise(double x, double y, double z) const;
    double noise(double x) const;

    //! Octave sum with lacunarity 2, normalised by the amplitude total.
    double fbm(const Vec3& p, int octaves, double gain = 0.5) const;
    double fbm(double x, int octaves, double gain = 0.5) const;

  private:
    std::array<std::uint8_t, 512> perm_{};
};

}  // namespace fracsynth
