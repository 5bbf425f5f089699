#pragma once

// Velocity reconstruction on the unit disk in the Dirichlet-Laplacian
// eigenbasis, observed through voxel means in the physical domain.

#include "flowrecon/geometry.hpp"
#include "flowrecon/grid.hpp"
#include "flowrecon/phantom.hpp"

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace flowrecon {

/// J_m(x), x >= 0.
double bessel_j(int m, double x);
/// J_m'(x) = (J_{m-1}(x) - J_{m+1}(x)) / 2, with J_0' = -J_1.
double bessel_j_derivative(int m, double x);
/// n-th positive zero of J_m.
double bessel_zero(int m, int n);

enum class Parity { Cos, Sin };

std::string to_string(Parity parity);

/// psi(r, phi) = norm_factor J_m(j r) {cos, sin}(m phi), with -Laplace psi = j^2 psi.
struct EigenMode {
    int m = 0;
    int n = 1;
    Parity parity = Parity::Cos;
    double zero = 0.0;  ///< j_{m,n}
    double lambda = 0.0;  ///< j_{m,n}^2
    double norm_factor = 0.0;
};

struct DiskEigenBasis {
    std::vector<EigenMode> modes;
    double cutoff = 0.0;

    std::size_t size() const { return modes.size(); }
};

EigenMode make_mode(int m, int n, Parity parity);

/// All modes with j_{m,n}^2 <= cutoff, ascending in lambda; cos before sin,
/// lower m first on ties.
DiskEigenBasis build_basis(double cutoff);

/// Smallest cutoff whose basis holds at least `count` modes.
double cutoff_for_mode_count(std::size_t count);

double eval_mode(const EigenMode& mode, Vec2 x);
Vec2 eval_mode_gradient(const EigenMode& mode, Vec2 x);

struct VelocityCoefficients {
    DiskEigenBasis basis;
    std::vector<double> c;
};

/// v(x) = sum_j c_j psi_j(x) for |x| <= 1.
double eval_velocity(const VelocityCoefficients& v, Vec2 x);
Vec2 eval_gradient(const VelocityCoefficients& v, Vec2 x);

/// sum_j (1 + lambda_j + lambda_j^2) c_j^2, an H^2-equivalent norm on the span.
double proxy_h2_norm_sq(const VelocityCoefficients& v);
/// sum_j lambda_j^2 c_j^2 = ||Laplace v||^2.
double laplacian_norm_sq(const VelocityCoefficients& v);

/// L2(B) projection by polar quadrature (Gauss-Legendre in r, trapezoid in phi).
VelocityCoefficients project_onto_basis(const DiskEigenBasis& basis,
                                        const std::function<double(Vec2)>& f,
                                        int radial_nodes = 96, int angular_nodes = 256);

enum class LinearSolver { Cholesky, ConjugateGradient };

struct VelocityReconConfig {
    std::optional<double> cutoff;  ///< unset: mode_fraction modes per retained voxel
    double mode_fraction = 0.25;
    double beta0 = 1.0;
    int subsamples = 16;
    LinearSolver solver = LinearSolver::Cholesky;
    double cg_tol = 1e-12;
    int cg_max_iter = 10000;

    void validate() const;
};

/// Rows of the voxel observation operator for voxels meeting the domain.
struct DesignMatrix {
    Eigen::MatrixXd a;                ///< retained voxels x modes
    std::vector<std::size_t> voxels;  ///< grid index of each row
    Eigen::VectorXd weight;           ///< estimated |V_i cap Omega|
};

/// Entry (i, j) is the mean of psi_j(T^-1(xi - center)) over the subsample
/// points of voxel i inside the domain. Throws NumericalFailure when no voxel
/// meets the domain.
DesignMatrix assemble_design_matrix(const DiskEigenBasis& basis, const DiskTransform& transform,
                                    const GridSpec& spec, int subsamples, Vec2 center = {});

/// Voxel means over V_i cap Omega of a reference-domain field pushed forward
/// by the transform, sampled exactly like assemble_design_matrix.
VoxelMeans observe_reference_field(const std::function<double(Vec2)>& v,
                                   const DiskTransform& transform, const GridSpec& spec,
                                   int subsamples, Vec2 center = {});

struct VelocityReconResult {
    VelocityCoefficients velocity;
    double beta = 0.0;
    double residual_norm = 0.0;  ///< weighted data residual ||A c - u||_W
    double normal_equation_residual = 0.0;
    bool discrepancy_unreachable = false;
};

/// Holds the assembled system for repeated solves at different beta.
class VelocitySolver {
public:
    VelocitySolver(DiskEigenBasis basis, DesignMatrix design, const VoxelGrid& data,
                   const VelocityReconConfig& cfg);

    const DiskEigenBasis& basis() const { return basis_; }
    const DesignMatrix& design() const { return design_; }
    std::size_t retained_voxels() const { return design_.voxels.size(); }

    VelocityReconResult solve(double beta) const;
    /// Largest beta0 2^-n, n = 0..40, with residual <= 2 delta_U. Throws
    /// NumericalFailure if the residual ever decreases as beta grows.
    VelocityReconResult choose_beta_discrepancy(double delta_u) const;

private:
    DiskEigenBasis basis_;
    DesignMatrix design_;
    VelocityReconConfig cfg_;
    Eigen::VectorXd data_;  ///< retained voxel values
    Eigen::MatrixXd normal_;
    Eigen::VectorXd rhs_;
    Eigen::VectorXd lambda_sq_;
};

/// Mode count target for a given number of retained voxels.
std::size_t default_mode_count(std::size_t retained_voxels, double mode_fraction = 0.25);

/// Builds basis and design matrix from the configuration, choosing the cutoff
/// from the retained voxel count when unset.
VelocitySolver make_velocity_solver(const VoxelGrid& u_eps, const DiskTransform& transform,
                                    const VelocityReconConfig& cfg, Vec2 center = {});

VelocityReconResult reconstruct_velocity(const VoxelGrid& u_eps, const DiskTransform& transform,
                                         double beta, const VelocityReconConfig& cfg,
                                         Vec2 center = {});
VelocityReconResult choose_beta_discrepancy(const VoxelGrid& u_eps, const DiskTransform& transform,
                                            double delta_u, const VelocityReconConfig& cfg,
                                            Vec2 center = {});

struct NormBounds {
    double c = 1.0;
    double u3 = 1.0;  ///< a-priori bound on ||u||_{H^3}
};

/// delta_U = C (delta_R^(1/2) U3 + eps).
double compute_delta_u(double delta_r, double eps, const NormBounds& bounds = {});

/// Source-condition exponent used for a-priori parameter choices.
inline constexpr double kSourceExponent = 0.125;

/// beta = delta_U^(2 / (2 mu + 1)).
double apriori_beta(double delta_u, double mu = kSourceExponent);

} // namespace flowrecon
