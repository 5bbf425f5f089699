#include "flowrecon/error.hpp"
#include "flowrecon/wss.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace flowrecon;

namespace {

/// m = 0 modes only, enough to resolve a radial profile.
DiskEigenBasis radial_basis(int count)
{
    DiskEigenBasis b;
    for (int n = 1; n <= count; ++n) {
        b.modes.push_back(make_mode(0, n, Parity::Cos));
    }
    b.cutoff = b.modes.back().lambda;
    return b;
}

VelocityCoefficients random_velocity(std::mt19937_64& rng, double cutoff)
{
    std::normal_distribution<double> n(0.0, 1.0);
    VelocityCoefficients v{build_basis(cutoff), {}};
    for (const auto& mode : v.basis.modes) {
        v.c.push_back(n(rng) / mode.lambda);
    }
    return v;
}

double max_abs_diff(const WssProfile& a, const WssProfile& b)
{
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::abs(a.values[i] - b.values[i]));
    }
    return worst;
}

} // namespace

TEST_CASE("zero velocity has zero stress")
{
    const GeometryBounds b{0.25, 0.9, 4};
    const VelocityCoefficients v{build_basis(50.0), std::vector<double>(build_basis(50.0).size(), 0.0)};
    const WssProfile tau = wall_shear_stress(RadiusFunction(0.5, {0.02}, {0.03}), v, b, 64);
    CHECK(tau.size() == 64);
    for (double t : tau.values) {
        CHECK(t == 0.0);
    }
}

TEST_CASE("poiseuille profile gives the analytic wall stress")
{
    const double r0 = 0.5, u_max = 1.0;
    const GeometryBounds b{r0, 0.9, 4};
    const RadiusFunction radius = RadiusFunction::constant(r0);
    const DiskEigenBasis basis = radial_basis(400);
    // pure scaling: v(x) = u(r0 x) = u_max (1 - |x|^2)
    const VelocityCoefficients v = project_onto_basis(
        basis, [&](Vec2 x) { return u_max * (1 - dot(x, x)); }, 512, 16);
    double err = 0.0;
    for (double r : {0.0, 0.3, 0.7, 0.95}) {
        err = std::max(err, std::abs(eval_velocity(v, {r, 0.0}) - u_max * (1 - r * r)));
    }
    CHECK(err < 1e-4);

    const WssProfile tau = wall_shear_stress(radius, v, b);
    for (double t : tau.values) {
        CHECK(t == doctest::Approx(2 * u_max / r0).epsilon(0.01));
    }
    CHECK(mean_wss(tau) == doctest::Approx(2 * u_max / r0).epsilon(0.03));
    const auto [lo, hi] = std::minmax_element(tau.values.begin(), tau.values.end());
    CHECK(*hi - *lo <= 1e-10);
}

TEST_CASE("analytic gradient field with a non-circular domain")
{
    // v = 1 - |x|^2 on B: grad v = -2x, tau = 2 (J^-1 n) . x
    const GeometryBounds b{0.25, 0.9, 4};
    const RadiusFunction radius(0.5, {0.03}, {0.0, 0.05});
    const DiskTransform t(radius, b);
    const WssProfile tau =
        wall_shear_stress(radius, [](Vec2 x) { return -2.0 * x; }, b, 32);
    for (std::size_t i = 0; i < tau.size(); ++i) {
        const double phi = tau.angles[i];
        const Vec2 x{std::cos(phi), std::sin(phi)};
        const Vec2 n = boundary_normal(radius, phi);
        const Mat2 inv = t.inverse_jacobian(x);
        // (J^-1 n) . g = n . (J^-T g)
        const Vec2 pulled = inv.transpose() * Vec2{2 * x.x, 2 * x.y};
        CHECK(tau.values[i] == doctest::Approx(dot(n, pulled)).epsilon(1e-12));
    }
}

TEST_CASE("radially symmetric input gives constant stress")
{
    const GeometryBounds b{0.25, 0.9, 4};
    VelocityCoefficients v{radial_basis(20), {}};
    for (int n = 0; n < 20; ++n) {
        v.c.push_back(1.0 / (n + 1));
    }
    const WssProfile tau = wall_shear_stress(RadiusFunction::constant(0.6), v, b);
    const auto [lo, hi] = std::minmax_element(tau.values.begin(), tau.values.end());
    CHECK(*hi - *lo <= 1e-10);
}

TEST_CASE("rotational equivariance")
{
    std::mt19937_64 rng(21);
    const GeometryBounds b{0.25, 0.9, 4};
    const RadiusFunction radius(0.5, {0.02, 0.0, -0.01}, {0.03, 0.02});
    const VelocityCoefficients v = random_velocity(rng, 120.0);
    const int samples = 128;
    const int shift = 13;
    const double theta = kTwoPi * shift / samples;
    const WssProfile tau = wall_shear_stress(radius, v, b, samples);
    const WssProfile turned = wall_shear_stress(radius.rotated(theta), rotated(v, theta), b, samples);
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
        worst = std::max(worst, std::abs(turned.values[(i + shift) % samples] - tau.values[i]));
    }
    CHECK(worst <= 1e-8);
}

TEST_CASE("stress is linear in the velocity")
{
    std::mt19937_64 rng(22);
    const GeometryBounds b{0.25, 0.9, 4};
    const RadiusFunction radius(0.55, {0.02}, {0.0, 0.04});
    const VelocityCoefficients v1 = random_velocity(rng, 90.0);
    const VelocityCoefficients v2 = random_velocity(rng, 90.0);
    VelocityCoefficients sum = v1;
    for (std::size_t j = 0; j < sum.c.size(); ++j) {
        sum.c[j] += v2.c[j];
    }
    const WssProfile t1 = wall_shear_stress(radius, v1, b, 64);
    const WssProfile t2 = wall_shear_stress(radius, v2, b, 64);
    const WssProfile ts = wall_shear_stress(radius, sum, b, 64);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        CHECK(std::abs(ts.values[i] - t1.values[i] - t2.values[i]) <= 1e-12 * (1 + std::abs(ts.values[i])));
    }
}

TEST_CASE("linear response to radius and velocity perturbations")
{
    std::mt19937_64 rng(23);
    const GeometryBounds b{0.25, 0.9, 4};
    const RadiusFunction radius(0.5, {0.02}, {0.0, 0.04});
    const RadiusFunction dir(0.0, {0.0, 0.01}, {0.02, 0.0, 0.01});
    const VelocityCoefficients v = random_velocity(rng, 90.0);
    const VelocityCoefficients dv = random_velocity(rng, 90.0);
    const WssProfile tau = wall_shear_stress(radius, v, b, 64);

    std::vector<double> geo_ratio, vel_ratio;
    for (double s : {1e-2, 1e-3, 1e-4}) {
        const RadiusFunction moved = radius + s * dir;
        geo_ratio.push_back(max_abs_diff(wall_shear_stress(moved, v, b, 64), tau) /
                            std::sqrt(sobolev_norm_sq(moved - radius, 2)));
        VelocityCoefficients w = v;
        for (std::size_t j = 0; j < w.c.size(); ++j) {
            w.c[j] += s * dv.c[j];
        }
        VelocityCoefficients diff = dv;
        for (double& c : diff.c) {
            c *= s;
        }
        vel_ratio.push_back(max_abs_diff(wall_shear_stress(radius, w, b, 64), tau) /
                            std::sqrt(proxy_h2_norm_sq(diff)));
    }
    CHECK(geo_ratio[1] == doctest::Approx(geo_ratio[2]).epsilon(0.05));
    CHECK(geo_ratio[0] == doctest::Approx(geo_ratio[2]).epsilon(0.25));
    CHECK(vel_ratio[0] == doctest::Approx(vel_ratio[2]).epsilon(1e-6));
}

TEST_CASE("low-pass filter")
{
    std::mt19937_64 rng(24);
    std::normal_distribution<double> n(0.0, 1.0);
    WssProfile tau;
    const int p = 64;
    for (int i = 0; i < p; ++i) {
        tau.angles.push_back(kTwoPi * i / p);
        tau.values.push_back(n(rng));
    }
    const WssProfile same = lowpass_filter(tau, p / 2);
    CHECK(max_abs_diff(same, tau) <= 1e-12);

    const WssProfile flat = lowpass_filter(tau, 0);
    for (double v : flat.values) {
        CHECK(v == doctest::Approx(mean_wss(tau)).epsilon(1e-12));
    }

    double e_in = 0.0, e_out = 0.0;
    const WssProfile f8 = lowpass_filter(tau, 8);
    for (int i = 0; i < p; ++i) {
        e_in += tau.values[i] * tau.values[i];
        e_out += f8.values[i] * f8.values[i];
    }
    CHECK(e_out <= e_in);
    CHECK(max_abs_diff(lowpass_filter(f8, 8), f8) <= 1e-12);

    // a pure mode-3 signal passes K = 3 and is removed by K = 2
    WssProfile mode3 = tau;
    for (int i = 0; i < p; ++i) {
        mode3.values[i] = std::cos(3 * tau.angles[i] + 0.4);
    }
    CHECK(max_abs_diff(lowpass_filter(mode3, 3), mode3) <= 1e-12);
    for (double v : lowpass_filter(mode3, 2).values) {
        CHECK(std::abs(v) <= 1e-12);
    }
    CHECK_THROWS_AS(lowpass_filter(tau, p / 2 + 1), InvalidArgument);
}

TEST_CASE("mean and relative error")
{
    WssProfile c;
    for (int i = 0; i < 16; ++i) {
        c.angles.push_back(kTwoPi * i / 16);
        c.values.push_back(2.5);
    }
    CHECK(mean_wss(c) == doctest::Approx(2.5));

    WssProfile ref = c;
    for (int i = 0; i < 16; ++i) {
        ref.values[i] = 1.0 + std::sin(ref.angles[i]);
    }
    CHECK(wss_error(ref, ref) == 0.0);
    WssProfile doubled = ref;
    for (double& v : doubled.values) {
        v *= 2;
    }
    CHECK(wss_error(doubled, ref) == doctest::Approx(1.0));
    WssProfile scaled_a = c, scaled_b = ref;
    for (int i = 0; i < 16; ++i) {
        scaled_a.values[i] *= -3.0;
        scaled_b.values[i] *= -3.0;
    }
    CHECK(wss_error(scaled_a, scaled_b) == doctest::Approx(wss_error(c, ref)));

    WssProfile short_profile = ref;
    short_profile.values.pop_back();
    short_profile.angles.pop_back();
    CHECK_THROWS_AS(wss_error(short_profile, ref), InvalidArgument);
}

TEST_CASE("sample count validation")
{
    CHECK_NOTHROW(check_sample_count(8));
    CHECK_NOTHROW(check_sample_count(256));
    CHECK_THROWS_AS(check_sample_count(4), InvalidArgument);
    CHECK_THROWS_AS(check_sample_count(100), InvalidArgument);
}
