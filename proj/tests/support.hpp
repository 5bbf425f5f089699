#pragma once

// Shared fixtures for the test binaries.

#include "flowrecon/geometry.hpp"

#include <random>
#include <vector>

namespace flowrecon::testing {

/// Random radius function of the given order with r0 < R < r1 on the
/// admissibility grid; the amplitude of mode k decays like 1/k.
inline RadiusFunction random_radius(std::mt19937_64& rng, const GeometryBounds& bounds,
                                    int order = 4, double amplitude = 0.06)
{
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    const double mid = 0.5 * (bounds.r0 + bounds.r1);
    const double span = 0.5 * (bounds.r1 - bounds.r0);
    for (;;) {
        std::vector<double> a(order), b(order);
        for (int k = 0; k < order; ++k) {
            a[k] = amplitude * unit(rng) / (k + 1);
            b[k] = amplitude * unit(rng) / (k + 1);
        }
        RadiusFunction r(mid + 0.5 * span * unit(rng), a, b);
        if (r.admissible(bounds)) {
            return r;
        }
    }
}

/// Uniform random point in the closed unit disk.
inline Vec2 random_disk_point(std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double r = std::sqrt(u(rng));
    const double phi = kTwoPi * u(rng);
    return {r * std::cos(phi), r * std::sin(phi)};
}

} // namespace flowrecon::testing
