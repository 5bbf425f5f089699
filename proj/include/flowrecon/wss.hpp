#pragma once

#include "flowrecon/geometry.hpp"
#include "flowrecon/velocity.hpp"

#include <functional>
#include <vector>

namespace flowrecon {

/// Stress samples at angles 2 pi i / P.
struct WssProfile {
    std::vector<double> angles;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

/// Throws InvalidArgument unless P >= 8 is a power of two.
void check_sample_count(int samples);

using GradientField = std::function<Vec2(Vec2)>;

/// tau(phi) = -mu (J^-1 n) . grad v at the boundary point (cos phi, sin phi) of
/// the unit disk, i.e. minus the outward normal derivative of u = v o T^-1 on
/// the physical wall.
WssProfile wall_shear_stress(const RadiusFunction& radius, const GradientField& grad_v,
                             const GeometryBounds& bounds, int samples = 256,
                             double viscosity = 1.0);
WssProfile wall_shear_stress(const RadiusFunction& radius, const VelocityCoefficients& v,
                             const GeometryBounds& bounds, int samples = 256,
                             double viscosity = 1.0);

/// Keeps Fourier modes |k| <= K; K = P/2 is the identity, K = 0 the mean.
WssProfile lowpass_filter(const WssProfile& tau, int k_max);

double mean_wss(const WssProfile& tau);

/// Relative discrete L2(0, 2pi) error; throws InvalidArgument on mismatched P.
double wss_error(const WssProfile& tau, const WssProfile& reference);

/// v(r, phi - theta) expressed in the same basis.
VelocityCoefficients rotated(const VelocityCoefficients& v, double theta);

} // namespace flowrecon
