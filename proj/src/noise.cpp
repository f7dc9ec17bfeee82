#include "fracsynth/noise.hpp"

#include <cmath>
#include <numeric>

#include "fracsynth/rng.hpp"

namespace fracsynth {

namespace {

double fade(double t) { return t * t * t * (t * (t * 6 - 15) + 10); }

double grad3(int hash, double x, double y, double z) {
    int h = hash & 15;
    double u = h < 8 ? x : y;
    double v = h < 4 ? y : (h == 12 || h == 14 ? x : z);
    return ((h & 1) ? -u : u) + ((h & 2) ? -v : v);
}

double grad1(int hash, double x) {
    // Gradients in {±1, ±0.75, ±0.5, ±0.25}.
    int h = hash & 7;
    double g = 1.0 - 0.25 * (h >> 1);
    return (h & 1) ? -g * x : g * x;
}

}  // namespace

Perlin::Perlin(std::uint64_t seed) {
    std::array<std::uint8_t, 256> p;
    std::iota(p.begin(), p.end(), 0);
    Rng rng(seed);
    rng.shuffle(p.begin(), p.end());
    for (int i = 0; i < 512; ++i) perm_[i] = p[i & 255];
}

double Perlin::noise(double x, double y, double z) const {
    double fx = std::floor(x), fy = std::floor(y), fz = std::floor(z);
    int X = static_cast<int>(static_cast<long long>(fx) & 255);
    int Y = static_cast<int>(static_cast<long long>(fy) & 255);
    int Z = static_cast<int>(static_cast<long long>(fz) & 255);
    x -= fx;
    y -= fy;
    z -= fz;
    double u = fade(x), v = fade(y), w = fade(z);
    const auto& P = perm_;
    int A = P[X] + Y, AA = P[A] + Z, AB = P[A + 1] + Z;
    int B = P[X + 1] + Y, BA = P[B] + Z, BB = P[B + 1] + Z;
    auto lerp1 = [](double t, double a, double b) { return a + t * (b - a); };
    return lerp1(w,
                 lerp1(v, lerp1(u, grad3(P[AA], x, y, z), grad3(P[BA], x - 1, y, z)),
                       lerp1(u, grad3(P[AB], x, y - 1, z), grad3(P[BB], x - 1, y - 1, z))),
                 lerp1(v, lerp1(u, grad3(P[AA + 1], x, y, z - 1), grad3(P[BA + 1], x - 1, y, z - 1)),
                       lerp1(u, grad3(P[AB + 1], x, y - 1, z - 1), grad3(P[BB + 1], x - 1, y - 1, z - 1))));
}

double Perlin::noise(double x) const {
    double fx = std::floor(x);
    int X = static_cast<int>(static_cast<long long>(fx) & 255);
    x -= fx;
    double a = grad1(perm_[X], x), b = grad1(perm_[X + 1], x - 1);
    // Peak magnitude of the 1D kernel is 0.5; rescale to about [-1, 1].
    return 2.0 * (a + fade(x) * (b - a));
}

double Perlin::fbm(const Vec3& p, int octaves, double gain) const {
    double sum = 0, amp = 1, total = 0, f = 1;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * noise(p.x * f, p.y * f, p.z * f);
        total += amp;
        amp *= gain;
        f *= 2;
    }
    return total > 0 ? sum / total : 0.0;
}

double Perlin::fbm(double x, int octaves, double gain) const {
    double sum = 0, amp = 1, total = 0, f = 1;
    for (int o = 0; o < octaves; ++o) {
        sum += amp * noise(x * f);
        total += amp;
        amp *= gain;
        f *= 2;
    }
    return total > 0 ? sum / total : 0.0;
}

}  // namespace fracsynth
