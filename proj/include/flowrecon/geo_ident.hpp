#pragma once

// Geometry identification: fit a Fourier radius function to normalized
// magnitude voxel data by Tikhonov regularization with an H^2 penalty,
// minimized by projected Gauss-Newton, with the regularization parameter
// chosen by a discrepancy principle.

#include "flowrecon/error.hpp"
#include "flowrecon/geometry.hpp"
#include "flowrecon/grid.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace flowrecon {

/// H_gamma(x) = arctan(x / gamma) / pi + 1/2.
double smooth_heaviside(double x, double gamma);
/// H_gamma'(x) = gamma / (pi (gamma^2 + x^2)).
double smooth_heaviside_derivative(double x, double gamma);

/// Smoothing width used when none is configured: h / 8.
double default_gamma(double h);

struct GeoIdentConfig {
    std::optional<double> gamma;  ///< unset: default_gamma(h)
    double alpha0 = 1.0;
    int order = 8;  ///< Fourier truncation N
    int quad_order = 4;
    int gn_max_iter = 60;
    double gn_tol = 1e-6;
    GeometryBounds bounds{};
    Vec2 center{};  ///< coordinate origin of the star-shaped parametrization

    double gamma_for(const GridSpec& spec) const;
    void validate() const;
};

/// Tensor Gauss-Legendre discretization of the smoothed forward operator
///   F(R)|_{V_i} = |V_i|^-1 int_{V_i} H_gamma(R(phi(xi)) - |xi|) dxi
/// with node geometry cached for repeated evaluation.
class ForwardModel {
public:
    ForwardModel(const GridSpec& spec, double gamma, int quad_order, int order, Vec2 center = {});

    const GridSpec& grid() const { return spec_; }
    int order() const { return order_; }
    int parameter_count() const { return 2 * order_ + 1; }

    VoxelGrid evaluate(const RadiusFunction& radius) const;
    /// Voxels x (2N+1) derivative with respect to the packed coefficients.
    Eigen::MatrixXd jacobian(const RadiusFunction& radius) const;
    /// Both at once; cheaper than two calls.
    void evaluate_with_jacobian(const RadiusFunction& radius, VoxelGrid& value,
                                Eigen::MatrixXd& jac) const;

private:
    GridSpec spec_;
    double gamma_;
    int order_;
    int nodes_per_voxel_;
    Eigen::VectorXd dist_;    ///< node distance from the center
    Eigen::VectorXd weight_;  ///< node quadrature weight
    Eigen::MatrixXd trig_;    ///< nodes x (2N+1) Fourier basis at the node angle
};

VoxelGrid forward_map(const RadiusFunction& radius, const GeoIdentConfig& cfg, const GridSpec& spec);
Eigen::MatrixXd forward_jacobian(const RadiusFunction& radius, const GeoIdentConfig& cfg,
                                 const GridSpec& spec);

/// ||F(R) - m||^2_{L2(D)} + alpha ||R||^2_{H^2}. Throws InvalidArgument for
/// an inadmissible R or non-conformal grids.
double objective(const RadiusFunction& radius, double alpha, const VoxelGrid& data,
                 const GeoIdentConfig& cfg);

enum class GeoIdentStatus { Converged, MaxIterations };

struct GeoIdentResult {
    RadiusFunction radius;
    double alpha = 0.0;
    double residual_norm = 0.0;  ///< ||F(R) - m||_{L2(D)}
    std::vector<double> objective_history;
    int iterations = 0;
    GeoIdentStatus status = GeoIdentStatus::MaxIterations;
    double stationarity = 0.0;  ///< norm of the objective gradient at the final iterate
    double normal_equation_residual = 0.0;  ///< relative residual of the last linear solve
    bool discrepancy_unreachable = false;
    Vec2 center{};
};

/// Thrown when backtracking cannot find an admissible descent step; carries
/// the last accepted iterate.
class NoAdmissibleStep : public NumericalFailure {
public:
    NoAdmissibleStep(const std::string& what, GeoIdentResult last)
        : NumericalFailure(what), last_(std::move(last))
    {
    }
    const GeoIdentResult& last() const { return last_; }

private:
    GeoIdentResult last_;
};

GeoIdentResult gauss_newton_minimize(const VoxelGrid& data, double alpha, const GeoIdentConfig& cfg,
                                     const RadiusFunction& initial);

/// Largest alpha in {alpha0 2^-n : n = 0..40} whose minimizer satisfies
/// ||F(R) - m|| <= 4 delta, warm-starting each solve from the previous one.
/// If none does, the smallest-residual result is returned with
/// discrepancy_unreachable set.
GeoIdentResult choose_alpha_discrepancy(const VoxelGrid& data, double delta,
                                        const GeoIdentConfig& cfg, const RadiusFunction& initial);

/// Intensity-weighted mean of voxel centers.
Vec2 barycenter(const VoxelGrid& data);

/// Circle of area h^2 sum(m), clamped to [r0 + 0.05, r1 - 0.05].
RadiusFunction initial_radius(const VoxelGrid& data, const GeoIdentConfig& cfg);

} // namespace flowrecon
