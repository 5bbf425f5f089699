#include "flowrecon/wss.hpp"

#include "flowrecon/error.hpp"

#include <cmath>
#include <numeric>
#include <vector>

namespace flowrecon {

void check_sample_count(int samples)
{
    if (samples < 8 || (samples & (samples - 1)) != 0) {
        throw InvalidArgument("WSS sample count must be a power of two >= 8, got " +
                              std::to_string(samples));
    }
}

WssProfile wall_shear_stress(const RadiusFunction& radius, const GradientField& grad_v,
                             const GeometryBounds& bounds, int samples, double viscosity)
{
    check_sample_count(samples);
    const DiskTransform transform(radius, bounds);
    WssProfile out;
    out.angles.resize(samples);
    out.values.resize(samples);
    for (int i = 0; i < samples; ++i) {
        const double phi = kTwoPi * i / samples;
        const Vec2 x{std::cos(phi), std::sin(phi)};
        const Vec2 n = boundary_normal(radius, phi);
        const Vec2 pulled = transform.inverse_jacobian(x) * n;
        out.angles[i] = phi;
        out.values[i] = -viscosity * dot(pulled, grad_v(x));
    }
    return out;
}

WssProfile wall_shear_stress(const RadiusFunction& radius, const VelocityCoefficients& v,
                             const GeometryBounds& bounds, int samples, double viscosity)
{
    // on the unit circle every Bessel factor is evaluated at its zero, so the
    // radial parts are fixed per mode and only the angular parts vary
    std::vector<double> radial_part(v.c.size()), angular_part(v.c.size());
    for (std::size_t j = 0; j < v.c.size(); ++j) {
        const EigenMode& mode = v.basis.modes[j];
        radial_part[j] = v.c[j] * mode.norm_factor * mode.zero * bessel_j_derivative(mode.m, mode.zero);
        angular_part[j] = v.c[j] * mode.norm_factor * bessel_j(mode.m, mode.zero) * mode.m;
    }
    const auto grad = [&](Vec2 x) {
        const double phi = std::atan2(x.y, x.x);
        double d_r = 0.0, d_t = 0.0;
        for (std::size_t j = 0; j < v.c.size(); ++j) {
            if (v.c[j] == 0.0) {
                continue;
            }
            const EigenMode& mode = v.basis.modes[j];
            const double cm = std::cos(mode.m * phi), sm = std::sin(mode.m * phi);
            const bool cos_mode = mode.parity == Parity::Cos;
            d_r += radial_part[j] * (cos_mode ? cm : sm);
            d_t += angular_part[j] * (cos_mode ? -sm : cm);
        }
        const Vec2 er{std::cos(phi), std::sin(phi)};
        const Vec2 ephi{-er.y, er.x};
        return d_r * er + d_t * ephi;
    };
    return wall_shear_stress(radius, grad, bounds, samples, viscosity);
}

WssProfile lowpass_filter(const WssProfile& tau, int k_max)
{
    const int p = static_cast<int>(tau.size());
    check_sample_count(p);
    if (k_max < 0 || k_max > p / 2) {
        throw InvalidArgument("low-pass cutoff must lie in [0, P/2]");
    }
    WssProfile out{tau.angles, std::vector<double>(p, 0.0)};
    for (int k = 0; k <= k_max; ++k) {
        double ck = 0.0, sk = 0.0;
        for (int i = 0; i < p; ++i) {
            const double arg = kTwoPi * static_cast<double>((static_cast<long>(k) * i) % p) / p;
            ck += tau.values[i] * std::cos(arg);
            sk += tau.values[i] * std::sin(arg);
        }
        // the Nyquist mode and the mean are not doubled
        const double scale = (k == 0 || 2 * k == p) ? 1.0 / p : 2.0 / p;
        for (int i = 0; i < p; ++i) {
            const double arg = kTwoPi * static_cast<double>((static_cast<long>(k) * i) % p) / p;
            out.values[i] += scale * (ck * std::cos(arg) + sk * std::sin(arg));
        }
    }
    return out;
}

double mean_wss(const WssProfile& tau)
{
    if (tau.values.empty()) {
        throw InvalidArgument("empty WSS profile");
    }
    return std::accumulate(tau.values.begin(), tau.values.end(), 0.0) /
           static_cast<double>(tau.values.size());
}

double wss_error(const WssProfile& tau, const WssProfile& reference)
{
    if (tau.size() != reference.size()) {
        throw InvalidArgument("WSS profiles have different sample counts");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < tau.size(); ++i) {
        const double d = tau.values[i] - reference.values[i];
        num += d * d;
        den += reference.values[i] * reference.values[i];
    }
    if (!(den > 0.0)) {
        throw NumericalFailure("reference WSS profile is identically zero");
    }
    return std::sqrt(num / den);
}

VelocityCoefficients rotated(const VelocityCoefficients& v, double theta)
{
    VelocityCoefficients out = v;
    const auto& modes = v.basis.modes;
    for (std::size_t j = 0; j < modes.size(); ++j) {
        if (modes[j].parity != Parity::Cos || modes[j].m == 0) {
            continue;
        }
        for (std::size_t k = 0; k < modes.size(); ++k) {
            if (modes[k].parity == Parity::Sin && modes[k].m == modes[j].m &&
                modes[k].n == modes[j].n) {
                const double cm = std::cos(modes[j].m * theta), sm = std::sin(modes[j].m * theta);
                out.c[j] = v.c[j] * cm - v.c[k] * sm;
                out.c[k] = v.c[j] * sm + v.c[k] * cm;
                break;
            }
        }
    }
    return out;
}

} // namespace flowrecon
