#include "flowrecon/geometry.hpp"

#include "flowrecon/error.hpp"

#include <algorithm>
#include <string>

namespace flowrecon {

namespace {

constexpr int kAdmissibilityGrid = 720;
constexpr int kAreaQuadraturePoints = 2048;
constexpr double kDiskTolerance = 1e-12;

} // namespace

double wrap_angle(double phi)
{
    if (phi >= 0.0 && phi < kTwoPi) {
        return phi;
    }
    double w = std::fmod(phi, kTwoPi);
    if (w < 0.0) {
        w += kTwoPi;
    }
    // fmod of a tiny negative number can round up to exactly 2 pi
    return w >= kTwoPi ? 0.0 : w;
}

std::pair<double, double> to_polar(Vec2 x)
{
    const double r = norm(x);
    if (r == 0.0) {
        return {0.0, 0.0};
    }
    return {r, wrap_angle(std::atan2(x.y, x.x))};
}

Vec2 unit_direction(Vec2 x)
{
    const double r = norm(x);
    if (r == 0.0) {
        return {1.0, 0.0};
    }
    return {x.x / r, x.y / r};
}

void GeometryBounds::validate() const
{
    if (!(r0 > 0.0 && r0 < r1 && r1 < 1.0)) {
        throw InvalidArgument("geometry bounds must satisfy 0 < r0 < r1 < 1 (got r0=" +
                              std::to_string(r0) + ", r1=" + std::to_string(r1) + ")");
    }
    if (eta < 2) {
        throw InvalidArgument("transformation exponent eta must be >= 2");
    }
}

// --- RadiusFunction ---------------------------------------------------------

RadiusFunction::RadiusFunction(double b0, std::vector<double> sine, std::vector<double> cosine)
    : b0_(b0), a_(std::move(sine)), b_(std::move(cosine))
{
    const std::size_t n = std::max(a_.size(), b_.size());
    a_.resize(n, 0.0);
    b_.resize(n, 0.0);
}

RadiusFunction RadiusFunction::constant(double b0, int order)
{
    return RadiusFunction(b0, std::vector<double>(order, 0.0), std::vector<double>(order, 0.0));
}

RadiusFunction RadiusFunction::from_packed(std::span<const double> packed)
{
    if (packed.empty() || packed.size() % 2 == 0) {
        throw InvalidArgument("packed radius coefficients must have odd length 2N+1");
    }
    const std::size_t n = (packed.size() - 1) / 2;
    std::vector<double> a(n), b(n);
    for (std::size_t k = 0; k < n; ++k) {
        a[k] = packed[2 * k + 1];
        b[k] = packed[2 * k + 2];
    }
    return RadiusFunction(packed[0], std::move(a), std::move(b));
}

double RadiusFunction::value(double phi) const
{
    double sum = b0_;
    for (std::size_t k = 0; k < a_.size(); ++k) {
        const double kp = static_cast<double>(k + 1) * phi;
        sum += a_[k] * std::sin(kp) + b_[k] * std::cos(kp);
    }
    return sum;
}

double RadiusFunction::value_along(Vec2 u) const
{
    double sum = b0_;
    double ck = 1.0, sk = 0.0;
    for (std::size_t k = 0; k < a_.size(); ++k) {
        const double next_c = ck * u.x - sk * u.y;
        sk = sk * u.x + ck * u.y;
        ck = next_c;
        sum += a_[k] * sk + b_[k] * ck;
    }
    return sum;
}

bool RadiusFunction::contains(Vec2 x) const
{
    return norm(x) < value_along(unit_direction(x));
}

double RadiusFunction::derivative(double phi) const
{
    double sum = 0.0;
    for (std::size_t k = 0; k < a_.size(); ++k) {
        const double kk = static_cast<double>(k + 1);
        sum += kk * (a_[k] * std::cos(kk * phi) - b_[k] * std::sin(kk * phi));
    }
    return sum;
}

double RadiusFunction::second_derivative(double phi) const
{
    double sum = 0.0;
    for (std::size_t k = 0; k < a_.size(); ++k) {
        const double kk = static_cast<double>(k + 1);
        sum -= kk * kk * (a_[k] * std::sin(kk * phi) + b_[k] * std::cos(kk * phi));
    }
    return sum;
}

std::vector<double> RadiusFunction::packed() const
{
    std::vector<double> out(packed_size(order()));
    out[0] = b0_;
    for (std::size_t k = 0; k < a_.size(); ++k) {
        out[2 * k + 1] = a_[k];
        out[2 * k + 2] = b_[k];
    }
    return out;
}

double RadiusFunction::derivative_bound() const
{
    double bound = 0.0;
    for (std::size_t k = 0; k < a_.size(); ++k) {
        bound += static_cast<double>(k + 1) * (std::abs(a_[k]) + std::abs(b_[k]));
    }
    return bound;
}

RadiusFunction RadiusFunction::with_order(int order) const
{
    std::vector<double> a = a_, b = b_;
    a.resize(order, 0.0);
    b.resize(order, 0.0);
    return RadiusFunction(b0_, std::move(a), std::move(b));
}

RadiusFunction RadiusFunction::rotated(double theta) const
{
    // a sin(k(phi - t)) + b cos(k(phi - t)) re-expanded in sin(k phi), cos(k phi)
    std::vector<double> a(a_.size()), b(b_.size());
    for (std::size_t k = 0; k < a_.size(); ++k) {
        const double c = std::cos(static_cast<double>(k + 1) * theta);
        const double s = std::sin(static_cast<double>(k + 1) * theta);
        a[k] = a_[k] * c + b_[k] * s;
        b[k] = b_[k] * c - a_[k] * s;
    }
    return RadiusFunction(b0_, std::move(a), std::move(b));
}

std::pair<double, double> RadiusFunction::sampled_range() const
{
    double lo = value(0.0), hi = lo;
    for (int i = 1; i < kAdmissibilityGrid; ++i) {
        const double v = value(kTwoPi * i / kAdmissibilityGrid);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return {lo, hi};
}

bool RadiusFunction::admissible(const GeometryBounds& bounds) const
{
    const auto [lo, hi] = sampled_range();
    return lo >= bounds.r0 && hi <= bounds.r1;
}

RadiusFunction operator+(const RadiusFunction& p, const RadiusFunction& q)
{
    const int n = std::max(p.order(), q.order());
    RadiusFunction pp = p.with_order(n), qq = q.with_order(n);
    for (int k = 0; k < n; ++k) {
        pp.a_[k] += qq.a_[k];
        pp.b_[k] += qq.b_[k];
    }
    pp.b0_ += qq.b0_;
    return pp;
}

RadiusFunction operator*(double s, const RadiusFunction& p)
{
    RadiusFunction out = p;
    out.b0_ *= s;
    for (auto& v : out.a_) v *= s;
    for (auto& v : out.b_) v *= s;
    return out;
}

RadiusFunction operator-(const RadiusFunction& p, const RadiusFunction& q)
{
    return p + (-1.0) * q;
}

// --- norms and boundary geometry -------------------------------------------

double sobolev_weight(int k, int s)
{
    return std::pow(1.0 + static_cast<double>(k) * k, s);
}

double sobolev_norm_sq(const RadiusFunction& radius, int s)
{
    if (s < 0 || s > 2) {
        throw InvalidArgument("Sobolev index must be 0, 1 or 2");
    }
    double sum = 0.0;
    for (int k = 1; k <= radius.order(); ++k) {
        const double a = radius.sine()[k - 1], b = radius.cosine()[k - 1];
        sum += sobolev_weight(k, s) * (a * a + b * b);
    }
    return kTwoPi * radius.mean() * radius.mean() + std::numbers::pi * sum;
}

std::vector<double> sobolev_diagonal(int order, int s)
{
    std::vector<double> w(RadiusFunction::packed_size(order));
    w[0] = kTwoPi;
    for (int k = 1; k <= order; ++k) {
        w[2 * k - 1] = w[2 * k] = std::numbers::pi * sobolev_weight(k, s);
    }
    return w;
}

Vec2 boundary_normal(const RadiusFunction& radius, double phi)
{
    const double r = radius.value(phi);
    const double dr = radius.derivative(phi);
    const double c = std::cos(phi), s = std::sin(phi);
    const double len = std::hypot(r, dr);
    return {(r * c + dr * s) / len, (r * s - dr * c) / len};
}

double domain_area_difference(const RadiusFunction& r1, const RadiusFunction& r2)
{
    double sum = 0.0;
    for (int i = 0; i < kAreaQuadraturePoints; ++i) {
        const double phi = kTwoPi * i / kAreaQuadraturePoints;
        const double a = r1.value(phi), b = r2.value(phi);
        if (a > b) {
            sum += 0.5 * (a * a - b * b);
        }
    }
    // periodic trapezoid rule: equal weights
    return sum * kTwoPi / kAreaQuadraturePoints;
}

// --- DiskTransform ----------------------------------------------------------

DiskTransform::DiskTransform(RadiusFunction radius, GeometryBounds bounds)
    : radius_(std::move(radius)), bounds_(bounds)
{
    bounds_.validate();
    if (!radius_.admissible(bounds_)) {
        const auto [lo, hi] = radius_.sampled_range();
        throw InvalidArgument("radius function is not admissible: range [" + std::to_string(lo) +
                              ", " + std::to_string(hi) + "] not within [r0, r1]");
    }
}

double DiskTransform::radial_profile(double r, double radius_at_phi) const
{
    return bounds_.r0 * r + (radius_at_phi - bounds_.r0) * std::pow(r, bounds_.eta);
}

void DiskTransform::check_in_disk(Vec2 x) const
{
    if (norm(x) > 1.0 + kDiskTolerance) {
        throw InvalidArgument("point lies outside the unit disk");
    }
}

Vec2 DiskTransform::forward(Vec2 x) const
{
    check_in_disk(x);
    const auto [r, phi] = to_polar(x);
    if (r == 0.0) {
        return {0.0, 0.0};
    }
    const double rho = radial_profile(r, radius_.value(phi));
    return {rho * std::cos(phi), rho * std::sin(phi)};
}

Vec2 DiskTransform::inverse(Vec2 y) const
{
    const double rho = norm(y);
    if (rho == 0.0) {
        return {0.0, 0.0};
    }
    const Vec2 u{y.x / rho, y.y / rho};
    const double big_r = radius_.value_along(u);
    if (rho > big_r + kDiskTolerance) {
        throw PointOutsideDomain("point (" + std::to_string(y.x) + ", " + std::to_string(y.y) +
                                 ") lies outside the flow domain");
    }
    const double r = inverse_radial(std::min(rho, big_r), big_r);
    return {r * u.x, r * u.y};
}

double DiskTransform::inverse_radial(double rho, double radius_at_phi) const
{
    const double r0 = bounds_.r0;
    const int eta = bounds_.eta;
    const double excess = radius_at_phi - r0;
    const double target = std::clamp(rho, 0.0, radius_at_phi);

    // g(r) = r0 r + (R - r0) r^eta - rho is increasing with g' >= r0 on [0, 1]
    double lo = 0.0, hi = 1.0;
    double r = std::clamp(target / radius_at_phi, 0.0, 1.0);
    for (int it = 0; it < 60; ++it) {
        double rpow = 1.0;
        for (int k = 1; k < eta; ++k) {
            rpow *= r;
        }
        const double g = r0 * r + excess * rpow * r - target;
        if (g > 0.0) {
            hi = r;
        } else {
            lo = r;
        }
        if (std::abs(g) <= 1e-16) {
            break;
        }
        const double dg = r0 + eta * excess * rpow;
        double next = r - g / dg;
        if (!(next > lo && next < hi)) {
            next = 0.5 * (lo + hi);
        }
        if (std::abs(next - r) <= 1e-14 * std::max(1.0, r)) {
            r = next;
            break;
        }
        r = next;
    }
    return r;
}

Mat2 DiskTransform::polar_jacobian(Vec2 x) const
{
    check_in_disk(x);
    const auto [r, phi] = to_polar(x);
    const double r0 = bounds_.r0;
    const double rpow = std::pow(r, bounds_.eta - 1);
    const double excess = radius_.value(phi) - r0;
    return {r0 + bounds_.eta * excess * rpow, radius_.derivative(phi) * rpow,
            0.0, r0 + excess * rpow};
}

Mat2 DiskTransform::jacobian(Vec2 x) const
{
    const Mat2 p = polar_jacobian(x);
    const auto [r, phi] = to_polar(x);
    if (r == 0.0) {
        // r^(eta-1) vanishes at the origin, so the differential is r0 * I in every frame
        return p;
    }
    const Mat2 q = Mat2::rotation(phi);
    return q * p * q.transpose();
}

Mat2 DiskTransform::inverse_jacobian(Vec2 x) const
{
    return jacobian(x).inverse();
}

} // namespace flowrecon
