#pragma once

// Star-shaped flow domains parametrized by a truncated Fourier radius
// function, and the scaling transformation that carries the unit disk onto
// such a domain.

#include <cmath>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace flowrecon {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
    friend double norm(Vec2 a) { return std::hypot(a.x, a.y); }
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

/// Row-major 2x2 matrix.
struct Mat2 {
    double a11 = 0.0, a12 = 0.0;
    double a21 = 0.0, a22 = 0.0;

    static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
    static Mat2 diag(double d1, double d2) { return {d1, 0.0, 0.0, d2}; }
    /// Rotation whose columns are e_r = (cos, sin) and e_phi = (-sin, cos).
    static Mat2 rotation(double phi)
    {
        const double c = std::cos(phi), s = std::sin(phi);
        return {c, -s, s, c};
    }

    double det() const { return a11 * a22 - a12 * a21; }
    Mat2 transpose() const { return {a11, a21, a12, a22}; }
    Mat2 inverse() const
    {
        const double d = det();
        return {a22 / d, -a12 / d, -a21 / d, a11 / d};
    }
    double max_abs() const
    {
        return std::max(std::max(std::abs(a11), std::abs(a12)),
                        std::max(std::abs(a21), std::abs(a22)));
    }

    friend Mat2 operator*(const Mat2& m, const Mat2& n)
    {
        return {m.a11 * n.a11 + m.a12 * n.a21, m.a11 * n.a12 + m.a12 * n.a22,
                m.a21 * n.a11 + m.a22 * n.a21, m.a21 * n.a12 + m.a22 * n.a22};
    }
    friend Vec2 operator*(const Mat2& m, Vec2 v)
    {
        return {m.a11 * v.x + m.a12 * v.y, m.a21 * v.x + m.a22 * v.y};
    }
    friend Mat2 operator-(const Mat2& m, const Mat2& n)
    {
        return {m.a11 - n.a11, m.a12 - n.a12, m.a21 - n.a21, m.a22 - n.a22};
    }
};

/// Wraps an angle into [0, 2pi).
double wrap_angle(double phi);

/// Polar coordinates (r, phi) of a point, phi in [0, 2pi); the origin maps to (0, 0).
std::pair<double, double> to_polar(Vec2 x);

/// x / |x|, or (1, 0) at the origin.
Vec2 unit_direction(Vec2 x);

struct GeometryBounds {
    double r0 = 0.25;
    double r1 = 0.9;
    int eta = 4;

    /// Throws InvalidArgument unless 0 < r0 < r1 < 1 and eta >= 2.
    void validate() const;
};

/// R(phi) = b0 + sum_k a_k sin(k phi) + b_k cos(k phi).
///
/// The packed coefficient layout used by solvers is
/// [b0, a_1, b_1, a_2, b_2, ..., a_N, b_N].
class RadiusFunction {
public:
    RadiusFunction() = default;
    /// Shorter coefficient list is zero padded to the longer one.
    RadiusFunction(double b0, std::vector<double> sine, std::vector<double> cosine);

    static RadiusFunction constant(double b0, int order = 0);
    static RadiusFunction from_packed(std::span<const double> packed);

    int order() const { return static_cast<int>(a_.size()); }
    double mean() const { return b0_; }
    const std::vector<double>& sine() const { return a_; }
    const std::vector<double>& cosine() const { return b_; }

    double value(double phi) const;
    /// R at the angle of the unit vector u, without trigonometric calls.
    double value_along(Vec2 u) const;
    /// |x| < R along the direction of x.
    bool contains(Vec2 x) const;
    double derivative(double phi) const;
    double second_derivative(double phi) const;

    std::vector<double> packed() const;
    static int packed_size(int order) { return 2 * order + 1; }

    /// Upper bound on max |R'| from the coefficients.
    double derivative_bound() const;

    /// Copy truncated or zero-padded to the given order.
    RadiusFunction with_order(int order) const;
    /// R(phi - theta), i.e. the domain rotated counter-clockwise by theta.
    RadiusFunction rotated(double theta) const;

    /// r0 <= R <= r1 on 720 equispaced angles.
    bool admissible(const GeometryBounds& bounds) const;
    /// Minimum and maximum of R on 720 equispaced angles.
    std::pair<double, double> sampled_range() const;

    friend RadiusFunction operator+(const RadiusFunction& p, const RadiusFunction& q);
    friend RadiusFunction operator-(const RadiusFunction& p, const RadiusFunction& q);
    friend RadiusFunction operator*(double s, const RadiusFunction& p);

private:
    double b0_ = 0.0;
    std::vector<double> a_;
    std::vector<double> b_;
};

/// Per-mode weight (1 + k^2)^s of the Sobolev norm on the Fourier span.
double sobolev_weight(int k, int s);

/// 2 pi b0^2 + pi sum_k (1 + k^2)^s (a_k^2 + b_k^2), for s in {0, 1, 2}.
double sobolev_norm_sq(const RadiusFunction& radius, int s);

/// Diagonal of the quadratic form sobolev_norm_sq in packed layout.
std::vector<double> sobolev_diagonal(int order, int s);

/// Outward unit normal of the boundary curve R(phi)(cos phi, sin phi).
Vec2 boundary_normal(const RadiusFunction& radius, double phi);

/// Area of Omega_{R1} \ Omega_{R2} by 2048-point trapezoid quadrature.
double domain_area_difference(const RadiusFunction& r1, const RadiusFunction& r2);

/// The scaling map from the unit disk B onto Omega_R,
///   (r, phi) -> (r0 r + (R(phi) - r0) r^eta) (cos phi, sin phi).
class DiskTransform {
public:
    /// Throws InvalidArgument when the bounds are invalid or R is not admissible.
    DiskTransform(RadiusFunction radius, GeometryBounds bounds);

    const RadiusFunction& radius() const { return radius_; }
    const GeometryBounds& bounds() const { return bounds_; }

    Vec2 forward(Vec2 x) const;
    /// Inverse map; throws PointOutsideDomain if y is outside the closure of Omega_R.
    Vec2 inverse(Vec2 y) const;

    /// Cartesian differential of forward at x.
    Mat2 jacobian(Vec2 x) const;
    /// The same differential expressed in the local (e_r, e_phi) frame:
    /// [[r0 + eta (R - r0) r^(eta-1), R' r^(eta-1)], [0, r0 + (R - r0) r^(eta-1)]].
    Mat2 polar_jacobian(Vec2 x) const;
    Mat2 inverse_jacobian(Vec2 x) const;

    /// Radial profile rho(r) = r0 r + (R - r0) r^eta along the ray at angle phi.
    double radial_profile(double r, double radius_at_phi) const;
    /// The r in [0, 1] with radial_profile(r, radius_at_phi) = rho.
    double inverse_radial(double rho, double radius_at_phi) const;

private:
    void check_in_disk(Vec2 x) const;

    RadiusFunction radius_;
    GeometryBounds bounds_;
};

} // namespace flowrecon
