#include "flowrecon/error.hpp"
#include "flowrecon/geometry.hpp"
#include "flowrecon/io.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace flowrecon;
using flowrecon::testing::random_disk_point;
using flowrecon::testing::random_radius;

namespace {

constexpr double kPi = std::numbers::pi;

/// Trapezoid quadrature over one period.
template <typename F>
double periodic_integral(F f, int n = 4096)
{
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        s += f(kTwoPi * i / n);
    }
    return s * kTwoPi / n;
}

double max_frobenius(const Mat2& a) { return std::sqrt(a.a11 * a.a11 + a.a12 * a.a12 + a.a21 * a.a21 + a.a22 * a.a22); }

} // namespace

TEST_CASE("radius function evaluation")
{
    CHECK(RadiusFunction(0.5, {}, {}).value(1.234) == doctest::Approx(0.5));
    CHECK(RadiusFunction(0.5, {}, {0.1}).value(0.0) == doctest::Approx(0.6));
    CHECK(RadiusFunction(0.5, {0.0, 0.05}, {}).value(kPi / 4) == doctest::Approx(0.55));

    const RadiusFunction r(0.5, {0.02, -0.01, 0.03}, {0.04, 0.0, -0.02});
    const double step = 1e-5;
    for (double phi : {0.1, 1.7, 4.0}) {
        const double fd = (r.value(phi + step) - r.value(phi - step)) / (2 * step);
        const double fd2 = (r.derivative(phi + step) - r.derivative(phi - step)) / (2 * step);
        CHECK(r.derivative(phi) == doctest::Approx(fd).epsilon(1e-8));
        CHECK(r.second_derivative(phi) == doctest::Approx(fd2).epsilon(1e-7));
    }
    CHECK(RadiusFunction::from_packed(r.packed()).packed() == r.packed());
}

TEST_CASE("sobolev norm matches quadrature of the derivative expansion")
{
    CHECK(sobolev_norm_sq(RadiusFunction::constant(1.0), 2) == doctest::Approx(kTwoPi));
    const RadiusFunction c1(0.0, {}, {1.0});
    CHECK(sobolev_norm_sq(c1, 0) == doctest::Approx(kPi));
    CHECK(sobolev_norm_sq(c1, 2) == doctest::Approx(4 * kPi));

    // (1 + k^2)^2 = 1 + 2k^2 + k^4 weights R^2 + 2 R'^2 + R''^2
    const RadiusFunction r(0.4, {0.02, -0.01, 0.03}, {0.04, 0.0, -0.02});
    const double direct = periodic_integral([&](double phi) {
        const double v = r.value(phi), d = r.derivative(phi), dd = r.second_derivative(phi);
        return v * v + 2 * d * d + dd * dd;
    });
    CHECK(sobolev_norm_sq(r, 2) == doctest::Approx(direct).epsilon(1e-12));
    const double h1 = periodic_integral([&](double phi) {
        const double v = r.value(phi), d = r.derivative(phi);
        return v * v + d * d;
    });
    CHECK(sobolev_norm_sq(r, 1) == doctest::Approx(h1).epsilon(1e-12));
}

TEST_CASE("disk transform reduces to scaling for R equal to r0")
{
    const GeometryBounds b{0.25, 0.9, 4};
    const DiskTransform t(RadiusFunction::constant(0.25), b);
    const Vec2 x{0.3, -0.4};
    CHECK(t.forward(x).x == doctest::Approx(0.075));
    CHECK(t.forward(x).y == doctest::Approx(-0.1));
    CHECK(t.forward({0, 0}) == Vec2{0, 0});
    CHECK(t.inverse({0.075, -0.1}).x == doctest::Approx(0.3));
    CHECK((t.jacobian(x) - Mat2::diag(0.25, 0.25)).max_abs() < 1e-14);
    CHECK((t.inverse_jacobian(x) - Mat2::diag(4.0, 4.0)).max_abs() < 1e-12);
}

TEST_CASE("boundary of the disk maps onto the domain boundary")
{
    const GeometryBounds b{0.25, 0.9, 4};
    const RadiusFunction r(0.5, {0.03}, {0.0, 0.05});
    const DiskTransform t(r, b);
    for (double phi : {0.0, 0.9, 2.5, 5.9}) {
        const Vec2 y = t.forward({std::cos(phi), std::sin(phi)});
        CHECK(y.x == doctest::Approx(r.value(phi) * std::cos(phi)).epsilon(1e-14));
        CHECK(y.y == doctest::Approx(r.value(phi) * std::sin(phi)).epsilon(1e-14));
        const Vec2 back = t.inverse(y);
        CHECK(back.x == doctest::Approx(std::cos(phi)).epsilon(1e-12));
        CHECK(back.y == doctest::Approx(std::sin(phi)).epsilon(1e-12));
    }
}

TEST_CASE("inverse map agrees with the quadratic formula for eta 2")
{
    // 0.35 r^2 + 0.25 r - 0.3 = 0
    const double oracle = (-0.25 + std::sqrt(0.25 * 0.25 + 4 * 0.35 * 0.3)) / (2 * 0.35);
    CHECK(oracle == doctest::Approx(0.635174).epsilon(1e-6));
    const DiskTransform t(RadiusFunction(0.5, {}, {0.1}), GeometryBounds{0.25, 0.9, 2});
    const Vec2 x = t.inverse({0.3, 0.0});
    CHECK(x.x == doctest::Approx(oracle).epsilon(1e-13));
    CHECK(std::abs(x.y) < 1e-15);
}

TEST_CASE("inverse map rejects points outside the domain")
{
    const DiskTransform t(RadiusFunction::constant(0.5), GeometryBounds{});
    CHECK_THROWS_AS(t.inverse({0.6, 0.0}), PointOutsideDomain);
}

TEST_CASE("transform round trip, determinant and frame consistency")
{
    std::mt19937_64 rng(11);
    const GeometryBounds b{0.25, 0.9, 4};
    for (int trial = 0; trial < 200; ++trial) {
        const DiskTransform t(random_radius(rng, b), b);
        const Vec2 x = random_disk_point(rng);
        const Vec2 back = t.inverse(t.forward(x));
        CHECK(norm(back - x) < 1e-10);
        CHECK(t.jacobian(x).det() >= b.r0 * b.r0);

        if (norm(x) > 1e-3) {
            const double phi = to_polar(x).second;
            const Mat2 q = Mat2::rotation(phi);
            const Mat2 composed = q * t.polar_jacobian(x) * q.transpose();
            CHECK((composed - t.jacobian(x)).max_abs() < 1e-10);
        }
        const Mat2 prod = t.jacobian(x) * t.inverse_jacobian(x);
        CHECK((prod - Mat2::identity()).max_abs() < 1e-12);
    }
}

TEST_CASE("jacobian matches central differences")
{
    std::mt19937_64 rng(12);
    const GeometryBounds b{0.25, 0.9, 4};
    const double step = 1e-6;
    for (int trial = 0; trial < 100; ++trial) {
        const DiskTransform t(random_radius(rng, b), b);
        const Vec2 x = 0.999 * random_disk_point(rng);
        const Vec2 dx = (1.0 / (2 * step)) * (t.forward(x + Vec2{step, 0}) - t.forward(x - Vec2{step, 0}));
        const Vec2 dy = (1.0 / (2 * step)) * (t.forward(x + Vec2{0, step}) - t.forward(x - Vec2{0, step}));
        const Mat2 fd{dx.x, dy.x, dx.y, dy.y};
        const Mat2 j = t.jacobian(x);
        CHECK(max_frobenius(fd - j) <= 1e-5 * max_frobenius(j));
    }
}

TEST_CASE("polar inverse jacobian on the boundary of a circular domain")
{
    const GeometryBounds b{0.25, 0.9, 4};
    const double r0v = 0.5;
    const DiskTransform t(RadiusFunction::constant(r0v), b);
    const Mat2 inv = t.polar_jacobian({1.0, 0.0}).inverse();
    CHECK(inv.a11 == doctest::Approx(1.0 / (b.r0 + b.eta * (r0v - b.r0))));
    CHECK(inv.a22 == doctest::Approx(1.0 / r0v));
    CHECK(std::abs(inv.a12) < 1e-15);
    CHECK(std::abs(inv.a21) < 1e-15);
}

TEST_CASE("boundary normal")
{
    const RadiusFunction c = RadiusFunction::constant(0.4);
    for (double phi : {0.0, 1.0, 3.0}) {
        const Vec2 n = boundary_normal(c, phi);
        CHECK(n.x == doctest::Approx(std::cos(phi)));
        CHECK(n.y == doctest::Approx(std::sin(phi)));
    }

    // tangent by central differences, rotated by -pi/2
    const RadiusFunction r(0.5, {}, {0.1});
    auto curve = [&](double phi) { return r.value(phi) * Vec2{std::cos(phi), std::sin(phi)}; };
    for (double phi : {kPi / 2, 0.3, 4.4}) {
        const double step = 1e-6;
        const Vec2 tangent = curve(phi + step) - curve(phi - step);
        const Vec2 oracle = (1.0 / norm(tangent)) * Vec2{tangent.y, -tangent.x};
        const Vec2 n = boundary_normal(r, phi);
        CHECK(std::abs(norm(n) - 1.0) < 1e-14);
        CHECK(norm(n - oracle) < 1e-8);
    }
}

TEST_CASE("normal perturbation is bounded by the radius perturbation")
{
    std::mt19937_64 rng(13);
    const GeometryBounds b{0.25, 0.9, 4};
    for (int trial = 0; trial < 20; ++trial) {
        const RadiusFunction r1 = random_radius(rng, b);
        const RadiusFunction r2 = random_radius(rng, b);
        const RadiusFunction d = r1 - r2;
        double max_dn = 0.0, max_d = 0.0, max_dd = 0.0;
        for (int i = 0; i < 720; ++i) {
            const double phi = kTwoPi * i / 720;
            max_dn = std::max(max_dn, norm(boundary_normal(r1, phi) - boundary_normal(r2, phi)));
            max_d = std::max(max_d, std::abs(d.value(phi)));
            max_dd = std::max(max_dd, std::abs(d.derivative(phi)));
        }
        CHECK(max_dn <= (1 + std::sqrt(2.0)) / b.r0 * (max_d + max_dd));
    }
}

TEST_CASE("domain area difference")
{
    const RadiusFunction r(0.5, {0.02}, {0.0, 0.03});
    CHECK(domain_area_difference(r, r) == doctest::Approx(0.0));
    CHECK(domain_area_difference(RadiusFunction::constant(0.6), RadiusFunction::constant(0.5)) ==
          doctest::Approx(0.11 * kPi).epsilon(1e-12));
}

TEST_CASE("inverse map depends linearly on the radius")
{
    const GeometryBounds b{0.25, 0.9, 4};
    const RadiusFunction base(0.5, {0.03}, {0.0, 0.04});
    const RadiusFunction dir(0.0, {0.0, 0.02}, {0.03, 0.0, 0.01});
    const DiskTransform t1(base, b);
    std::vector<double> xs, ys;
    for (double s : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
        const RadiusFunction r2 = base + s * dir;
        const DiskTransform t2(r2, b);
        double worst = 0.0;
        for (int i = 0; i < 60; ++i) {
            for (double rho : {0.1, 0.25, 0.4}) {
                const double phi = kTwoPi * i / 60;
                const Vec2 y = rho * Vec2{std::cos(phi), std::sin(phi)};
                worst = std::max(worst, norm(t1.inverse(y) - t2.inverse(y)));
            }
        }
        xs.push_back(std::log(std::sqrt(sobolev_norm_sq(r2 - base, 1))));
        ys.push_back(std::log(worst));
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    CHECK(slope >= 0.9);
}

TEST_CASE("radius and bounds json round trip")
{
    const RadiusFunction r(0.5, {0.1, 1.0 / 3}, {0.0, -0.2});
    const RadiusFunction back = radius_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(back.packed() == r.packed());
    const GeometryBounds b{0.2, 0.8, 3};
    const GeometryBounds bb = bounds_from_json(nlohmann::json::parse(to_json(b).dump()));
    CHECK(bb.r0 == b.r0);
    CHECK(bb.r1 == b.r1);
    CHECK(bb.eta == b.eta);
    CHECK_THROWS_AS((GeometryBounds{0.5, 0.4, 4}.validate()), InvalidArgument);
    CHECK_THROWS_AS((GeometryBounds{0.2, 0.8, 1}.validate()), InvalidArgument);
}
