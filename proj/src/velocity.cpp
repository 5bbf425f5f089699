#include "flowrecon/velocity.hpp"

#include "flowrecon/error.hpp"
#include "flowrecon/phantom.hpp"
#include "flowrecon/quadrature.hpp"

#include <boost/math/special_functions/bessel.hpp>

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace flowrecon {

namespace {

constexpr int kMaxHalvings = 40;

/// J_m(x) for m = 0..mmax on [0, xmax], cubic Hermite between tabulated
/// values and slopes.
class BesselTable {
public:
    BesselTable(int mmax, double xmax)
        : mmax_(mmax), count_(static_cast<int>(std::ceil(xmax / kTableStep)) + 2),
          data_(static_cast<std::size_t>(mmax + 1) * count_ * 2)
    {
        std::vector<double> row(mmax + 2);
        for (int i = 0; i < count_; ++i) {
            const double x = i * kTableStep;
            for (int m = 0; m <= mmax + 1; ++m) {
                row[m] = bessel_j(m, x);
            }
            for (int m = 0; m <= mmax; ++m) {
                double* cell = &data_[(static_cast<std::size_t>(m) * count_ + i) * 2];
                cell[0] = row[m];
                cell[1] = m == 0 ? -row[1] : 0.5 * (row[m - 1] - row[m + 1]);
            }
        }
    }

    double operator()(int m, double x) const
    {
        const double t = x / kTableStep;
        const int i = std::min(static_cast<int>(t), count_ - 2);
        const double s = t - i;
        const double s2 = s * s, s3 = s2 * s;
        const double* cell = &data_[(static_cast<std::size_t>(m) * count_ + i) * 2];
        return (2 * s3 - 3 * s2 + 1) * cell[0] + (s3 - 2 * s2 + s) * kTableStep * cell[1] +
               (-2 * s3 + 3 * s2) * cell[2] + (s3 - s2) * kTableStep * cell[3];
    }

private:
    static constexpr double kTableStep = 1.0 / 64.0;
    int mmax_;
    int count_;
    std::vector<double> data_;  // (value, slope) pairs, one run per order
};

/// Modes sharing a radial factor: (m, n) with its cos and (for m > 0) sin column.
struct ModePair {
    int m;
    double zero;
    double norm_factor;
    int cos_col;
    int sin_col;
};

std::vector<ModePair> pair_modes(const DiskEigenBasis& basis)
{
    std::vector<ModePair> pairs;
    std::vector<std::tuple<int, int, std::size_t>> seen;  // (m, n, pair index)
    for (std::size_t j = 0; j < basis.modes.size(); ++j) {
        const EigenMode& mode = basis.modes[j];
        auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& s) {
            return std::get<0>(s) == mode.m && std::get<1>(s) == mode.n;
        });
        std::size_t idx;
        if (it == seen.end()) {
            idx = pairs.size();
            seen.emplace_back(mode.m, mode.n, idx);
            pairs.push_back({mode.m, mode.zero, mode.norm_factor, -1, -1});
        } else {
            idx = std::get<2>(*it);
        }
        (mode.parity == Parity::Cos ? pairs[idx].cos_col : pairs[idx].sin_col) =
            static_cast<int>(j);
    }
    return pairs;
}

/// cos(k phi), sin(k phi) for k = 0..kmax by the angle-addition recurrence.
void trig_table(double c1, double s1, int kmax, std::vector<double>& c, std::vector<double>& s)
{
    c.resize(kmax + 1);
    s.resize(kmax + 1);
    c[0] = 1.0;
    s[0] = 0.0;
    for (int k = 1; k <= kmax; ++k) {
        c[k] = c[k - 1] * c1 - s[k - 1] * s1;
        s[k] = s[k - 1] * c1 + c[k - 1] * s1;
    }
}

void check_in_unit_disk(Vec2 x)
{
    if (!(norm(x) <= 1.0 + 1e-12)) {
        throw InvalidArgument("velocity evaluation point lies outside the unit disk");
    }
}

} // namespace

double bessel_j(int m, double x)
{
    if (m < 0) {
        throw InvalidArgument("Bessel order must be non-negative");
    }
    if (!(x >= 0.0)) {
        throw InvalidArgument("Bessel argument must be non-negative");
    }
    return boost::math::cyl_bessel_j(m, x);
}

double bessel_j_derivative(int m, double x)
{
    if (m == 0) {
        return -bessel_j(1, x);
    }
    return 0.5 * (bessel_j(m - 1, x) - bessel_j(m + 1, x));
}

double bessel_zero(int m, int n)
{
    if (m < 0 || n < 1) {
        throw InvalidArgument("bessel_zero needs m >= 0 and n >= 1");
    }
    return boost::math::cyl_bessel_j_zero(static_cast<double>(m), n);
}

std::string to_string(Parity parity)
{
    return parity == Parity::Cos ? "cos" : "sin";
}

EigenMode make_mode(int m, int n, Parity parity)
{
    if (m < 0 || n < 1 || (m == 0 && parity == Parity::Sin)) {
        throw InvalidArgument("invalid eigenmode (" + std::to_string(m) + ", " + std::to_string(n) +
                              ", " + to_string(parity) + ")");
    }
    const double z = bessel_zero(m, n);
    const double scale = std::sqrt(std::numbers::pi) * std::abs(bessel_j(m + 1, z));
    return {m, n, parity, z, z * z, (m == 0 ? 1.0 : std::numbers::sqrt2) / scale};
}

DiskEigenBasis build_basis(double cutoff)
{
    const double first = bessel_zero(0, 1);
    if (!(cutoff >= first * first)) {
        throw InvalidArgument("eigenvalue cutoff lies below the first Dirichlet eigenvalue");
    }
    DiskEigenBasis basis;
    basis.cutoff = cutoff;
    for (int m = 0;; ++m) {
        if (bessel_zero(m, 1) * bessel_zero(m, 1) > cutoff) {
            break;
        }
        for (int n = 1;; ++n) {
            const double z = bessel_zero(m, n);
            if (z * z > cutoff) {
                break;
            }
            basis.modes.push_back(make_mode(m, n, Parity::Cos));
            if (m > 0) {
                basis.modes.push_back(make_mode(m, n, Parity::Sin));
            }
        }
    }
    std::stable_sort(basis.modes.begin(), basis.modes.end(),
                     [](const EigenMode& p, const EigenMode& q) {
                         return std::tie(p.lambda, p.parity, p.m, p.n) <
                                std::tie(q.lambda, q.parity, q.m, q.n);
                     });
    return basis;
}

double cutoff_for_mode_count(std::size_t count)
{
    if (count == 0) {
        throw InvalidArgument("mode count must be positive");
    }
    // Weyl: N(lambda) ~ lambda / 4 on the unit disk
    double guess = 6.0 * static_cast<double>(count) + 60.0;
    for (;;) {
        const DiskEigenBasis basis = build_basis(guess);
        if (basis.size() >= count) {
            return basis.modes[count - 1].lambda;
        }
        guess *= 2.0;
    }
}

double eval_mode(const EigenMode& mode, Vec2 x)
{
    check_in_unit_disk(x);
    const auto [r, phi] = to_polar(x);
    const double radial = bessel_j(mode.m, mode.zero * std::min(r, 1.0));
    const double angular = mode.parity == Parity::Cos ? std::cos(mode.m * phi) : std::sin(mode.m * phi);
    return mode.norm_factor * radial * angular;
}

Vec2 eval_mode_gradient(const EigenMode& mode, Vec2 x)
{
    check_in_unit_disk(x);
    const double r = norm(x);
    if (r == 0.0) {
        if (mode.m != 1) {
            return {0.0, 0.0};
        }
        const double g = 0.5 * mode.norm_factor * mode.zero;
        return mode.parity == Parity::Cos ? Vec2{g, 0.0} : Vec2{0.0, g};
    }
    const double phi = std::atan2(x.y, x.x);
    const double zr = mode.zero * std::min(r, 1.0);
    const double cm = std::cos(mode.m * phi), sm = std::sin(mode.m * phi);
    const double trig = mode.parity == Parity::Cos ? cm : sm;
    const double dtrig = mode.parity == Parity::Cos ? -mode.m * sm : mode.m * cm;
    const double d_r = mode.norm_factor * mode.zero * bessel_j_derivative(mode.m, zr) * trig;
    const double d_t =
        mode.m == 0 ? 0.0 : mode.norm_factor * bessel_j(mode.m, zr) / r * dtrig;
    const Vec2 er{x.x / r, x.y / r};
    const Vec2 ephi{-er.y, er.x};
    return d_r * er + d_t * ephi;
}

double eval_velocity(const VelocityCoefficients& v, Vec2 x)
{
    double sum = 0.0;
    for (std::size_t j = 0; j < v.c.size(); ++j) {
        if (v.c[j] != 0.0) {
            sum += v.c[j] * eval_mode(v.basis.modes[j], x);
        }
    }
    return sum;
}

Vec2 eval_gradient(const VelocityCoefficients& v, Vec2 x)
{
    Vec2 sum{0.0, 0.0};
    for (std::size_t j = 0; j < v.c.size(); ++j) {
        if (v.c[j] != 0.0) {
            sum = sum + v.c[j] * eval_mode_gradient(v.basis.modes[j], x);
        }
    }
    return sum;
}

double proxy_h2_norm_sq(const VelocityCoefficients& v)
{
    double sum = 0.0;
    for (std::size_t j = 0; j < v.c.size(); ++j) {
        const double l = v.basis.modes[j].lambda;
        sum += (1.0 + l + l * l) * v.c[j] * v.c[j];
    }
    return sum;
}

double laplacian_norm_sq(const VelocityCoefficients& v)
{
    double sum = 0.0;
    for (std::size_t j = 0; j < v.c.size(); ++j) {
        const double l = v.basis.modes[j].lambda;
        sum += l * l * v.c[j] * v.c[j];
    }
    return sum;
}

VelocityCoefficients project_onto_basis(const DiskEigenBasis& basis,
                                        const std::function<double(Vec2)>& f, int radial_nodes,
                                        int angular_nodes)
{
    if (radial_nodes < 1 || angular_nodes < 1) {
        throw InvalidArgument("projection needs positive node counts");
    }
    int mmax = 0;
    for (const auto& mode : basis.modes) {
        mmax = std::max(mmax, mode.m);
    }
    const int na = std::max(angular_nodes, 4 * (mmax + 1));
    const QuadratureRule rule = gauss_legendre_unit(radial_nodes);

    // angular Fourier moments F_m(r_k) of f on each quadrature circle
    std::vector<std::vector<double>> fc(radial_nodes, std::vector<double>(mmax + 1));
    std::vector<std::vector<double>> fs(radial_nodes, std::vector<double>(mmax + 1));
    std::vector<double> c, s;
    const double dphi = kTwoPi / na;
    for (int k = 0; k < radial_nodes; ++k) {
        const double r = rule.nodes[k];
        for (int l = 0; l < na; ++l) {
            const double phi = l * dphi;
            const double val = f({r * std::cos(phi), r * std::sin(phi)});
            trig_table(std::cos(phi), std::sin(phi), mmax, c, s);
            for (int m = 0; m <= mmax; ++m) {
                fc[k][m] += val * c[m] * dphi;
                fs[k][m] += val * s[m] * dphi;
            }
        }
    }

    VelocityCoefficients out{basis, std::vector<double>(basis.size(), 0.0)};
    for (std::size_t j = 0; j < basis.size(); ++j) {
        const EigenMode& mode = basis.modes[j];
        double sum = 0.0;
        for (int k = 0; k < radial_nodes; ++k) {
            const double r = rule.nodes[k];
            const double moment = mode.parity == Parity::Cos ? fc[k][mode.m] : fs[k][mode.m];
            sum += rule.weights[k] * r * bessel_j(mode.m, mode.zero * r) * moment;
        }
        out.c[j] = mode.norm_factor * sum;
    }
    return out;
}

void VelocityReconConfig::validate() const
{
    if (cutoff) {
        const double first = bessel_zero(0, 1);
        if (!(*cutoff > first * first)) {
            throw InvalidArgument("eigenvalue cutoff must exceed the first eigenvalue");
        }
    }
    if (!(mode_fraction > 0.0) || mode_fraction > 4.0) {
        throw InvalidArgument("mode fraction must lie in (0, 4]");
    }
    if (!(beta0 > 0.0)) {
        throw InvalidArgument("beta0 must be positive");
    }
    if (subsamples < 1) {
        throw InvalidArgument("subsamples must be >= 1");
    }
    if (!(cg_tol > 0.0) || cg_max_iter < 1) {
        throw InvalidArgument("invalid conjugate-gradient settings");
    }
}

DesignMatrix assemble_design_matrix(const DiskEigenBasis& basis, const DiskTransform& transform,
                                    const GridSpec& spec, int subsamples, Vec2 center)
{
    spec.validate();
    if (subsamples < 1) {
        throw InvalidArgument("subsamples must be >= 1");
    }
    if (basis.size() == 0) {
        throw InvalidArgument("empty eigenbasis");
    }
    const RadiusFunction& radius = transform.radius();
    const std::vector<ModePair> pairs = pair_modes(basis);
    int mmax = 0;
    double zmax = 0.0;
    for (const auto& p : pairs) {
        mmax = std::max(mmax, p.m);
        zmax = std::max(zmax, p.zero);
    }
    const BesselTable table(mmax, zmax);

    const double lip = radius.derivative_bound();
    const double step = spec.h / subsamples;
    const double total = static_cast<double>(subsamples) * subsamples;
    const std::size_t cols = basis.size();
    std::vector<double> rows;
    std::vector<std::size_t> voxels;
    std::vector<double> weights;
    std::vector<double> row(cols), c, s, trig_c, trig_s;
    struct Point {
        double r, c1, s1;
    };
    std::vector<Point> points;

    for (int iy = 0; iy < spec.ny; ++iy) {
        for (int ix = 0; ix < spec.nx; ++ix) {
            const Vec2 lower = spec.lower_corner(ix, iy) - center;
            if (detail::classify_voxel(radius, lip, lower, spec.h) < 0) {
                continue;
            }
            points.clear();
            for (int sy = 0; sy < subsamples; ++sy) {
                for (int sx = 0; sx < subsamples; ++sx) {
                    const Vec2 xi{lower.x + (sx + 0.5) * step, lower.y + (sy + 0.5) * step};
                    const double rho = norm(xi);
                    const Vec2 u = unit_direction(xi);
                    const double big_r = radius.value_along(u);
                    if (rho < big_r) {
                        points.push_back({transform.inverse_radial(rho, big_r), u.x, u.y});
                    }
                }
            }
            const int inside = static_cast<int>(points.size());
            if (inside == 0) {
                continue;
            }
            // trig rows per point, then one pass per radial table so each
            // table is touched in a narrow band of r
            trig_c.resize(points.size() * (mmax + 1));
            trig_s.resize(points.size() * (mmax + 1));
            for (std::size_t q = 0; q < points.size(); ++q) {
                trig_table(points[q].c1, points[q].s1, mmax, c, s);
                std::copy(c.begin(), c.end(), trig_c.begin() + q * (mmax + 1));
                std::copy(s.begin(), s.end(), trig_s.begin() + q * (mmax + 1));
            }
            std::fill(row.begin(), row.end(), 0.0);
            for (std::size_t p = 0; p < pairs.size(); ++p) {
                const ModePair& mp = pairs[p];
                double acc_c = 0.0, acc_s = 0.0;
                for (std::size_t q = 0; q < points.size(); ++q) {
                    const double radial = table(mp.m, mp.zero * points[q].r);
                    acc_c += radial * trig_c[q * (mmax + 1) + mp.m];
                    acc_s += radial * trig_s[q * (mmax + 1) + mp.m];
                }
                if (mp.cos_col >= 0) {
                    row[mp.cos_col] = mp.norm_factor * acc_c;
                }
                if (mp.sin_col >= 0) {
                    row[mp.sin_col] = mp.norm_factor * acc_s;
                }
            }
            for (double& v : row) {
                rows.push_back(v / inside);
            }
            voxels.push_back(spec.index(ix, iy));
            weights.push_back(inside / total * spec.h * spec.h);
        }
    }
    if (voxels.empty()) {
        throw NumericalFailure("no voxel intersects the reconstructed domain");
    }
    DesignMatrix out;
    out.a = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rows.data(), static_cast<Eigen::Index>(voxels.size()), static_cast<Eigen::Index>(cols));
    out.voxels = std::move(voxels);
    out.weight = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
    return out;
}

VoxelMeans observe_reference_field(const std::function<double(Vec2)>& v,
                                   const DiskTransform& transform, const GridSpec& spec,
                                   int subsamples, Vec2 center)
{
    spec.validate();
    if (subsamples < 1) {
        throw InvalidArgument("subsamples must be >= 1");
    }
    const RadiusFunction& radius = transform.radius();
    const double lip = radius.derivative_bound();
    const double step = spec.h / subsamples;
    const double total = static_cast<double>(subsamples) * subsamples;
    VoxelMeans out{VoxelGrid(spec), VoxelGrid(spec)};
    for (int iy = 0; iy < spec.ny; ++iy) {
        for (int ix = 0; ix < spec.nx; ++ix) {
            const Vec2 lower = spec.lower_corner(ix, iy) - center;
            if (detail::classify_voxel(radius, lip, lower, spec.h) < 0) {
                continue;
            }
            double sum = 0.0;
            int inside = 0;
            for (int sy = 0; sy < subsamples; ++sy) {
                for (int sx = 0; sx < subsamples; ++sx) {
                    const Vec2 xi{lower.x + (sx + 0.5) * step, lower.y + (sy + 0.5) * step};
                    if (radius.contains(xi)) {
                        sum += v(transform.inverse(xi));
                        ++inside;
                    }
                }
            }
            if (inside > 0) {
                out.mean.at(ix, iy) = sum / inside;
                out.fraction.at(ix, iy) = inside / total;
            }
        }
    }
    return out;
}

// --- solver ---------------------------------------------------------------------

VelocitySolver::VelocitySolver(DiskEigenBasis basis, DesignMatrix design, const VoxelGrid& data,
                               const VelocityReconConfig& cfg)
    : basis_(std::move(basis)), design_(std::move(design)), cfg_(cfg)
{
    cfg_.validate();
    if (static_cast<std::size_t>(design_.a.cols()) != basis_.size()) {
        throw InvalidArgument("design matrix does not match the basis");
    }
    data_.resize(static_cast<Eigen::Index>(design_.voxels.size()));
    for (std::size_t i = 0; i < design_.voxels.size(); ++i) {
        if (design_.voxels[i] >= data.values.size()) {
            throw InvalidArgument("design matrix refers to voxels outside the data grid");
        }
        data_[static_cast<Eigen::Index>(i)] = data.values[design_.voxels[i]];
    }
    const Eigen::VectorXd sqrt_w = design_.weight.cwiseSqrt();
    const Eigen::MatrixXd aw = sqrt_w.asDiagonal() * design_.a;
    normal_ = Eigen::MatrixXd::Zero(aw.cols(), aw.cols());
    normal_.selfadjointView<Eigen::Lower>().rankUpdate(aw.transpose());
    normal_.triangularView<Eigen::StrictlyUpper>() = normal_.transpose();
    rhs_ = aw.transpose() * sqrt_w.cwiseProduct(data_);
    lambda_sq_.resize(static_cast<Eigen::Index>(basis_.size()));
    for (std::size_t j = 0; j < basis_.size(); ++j) {
        lambda_sq_[static_cast<Eigen::Index>(j)] = basis_.modes[j].lambda * basis_.modes[j].lambda;
    }
}

VelocityReconResult VelocitySolver::solve(double beta) const
{
    if (!(beta > 0.0)) {
        throw InvalidArgument("regularization parameter beta must be positive");
    }
    Eigen::MatrixXd system = normal_;
    system.diagonal() += beta * lambda_sq_;

    Eigen::VectorXd coef;
    if (cfg_.solver == LinearSolver::Cholesky) {
        Eigen::LLT<Eigen::MatrixXd> llt(system);
        if (llt.info() != Eigen::Success) {
            throw NumericalFailure("velocity normal equations are not positive definite");
        }
        coef = llt.solve(rhs_);
    } else {
        Eigen::ConjugateGradient<Eigen::MatrixXd, Eigen::Lower | Eigen::Upper,
                                 Eigen::DiagonalPreconditioner<double>>
            cg;
        cg.setTolerance(cfg_.cg_tol);
        cg.setMaxIterations(cfg_.cg_max_iter);
        cg.compute(system);
        coef = cg.solve(rhs_);
        if (cg.info() != Eigen::Success && cg.info() != Eigen::NoConvergence) {
            throw NumericalFailure("conjugate gradient failed on the velocity system");
        }
    }
    if (!coef.allFinite()) {
        throw NumericalFailure("velocity solve produced non-finite coefficients");
    }

    VelocityReconResult out;
    out.beta = beta;
    out.velocity.basis = basis_;
    out.velocity.c.assign(coef.data(), coef.data() + coef.size());
    const double rhs_norm = rhs_.norm();
    out.normal_equation_residual = rhs_norm > 0.0 ? (system * coef - rhs_).norm() / rhs_norm : 0.0;
    const Eigen::VectorXd res = design_.a * coef - data_;
    out.residual_norm = std::sqrt(res.dot(design_.weight.cwiseProduct(res)));
    return out;
}

VelocityReconResult VelocitySolver::choose_beta_discrepancy(double delta_u) const
{
    if (!(delta_u > 0.0)) {
        throw InvalidArgument("velocity noise level delta_U must be positive");
    }
    const double bound = 2.0 * delta_u;
    std::optional<VelocityReconResult> previous;
    std::optional<VelocityReconResult> best;
    for (int n = 0; n <= kMaxHalvings; ++n) {
        VelocityReconResult res = solve(std::ldexp(cfg_.beta0, -n));
        if (previous && res.residual_norm > previous->residual_norm * (1.0 + 1e-9) + 1e-15) {
            throw NumericalFailure("data residual increased as beta decreased");
        }
        if (res.residual_norm <= bound) {
            return res;
        }
        if (!best || res.residual_norm < best->residual_norm) {
            best = res;
        }
        previous = std::move(res);
    }
    best->discrepancy_unreachable = true;
    return *best;
}

std::size_t default_mode_count(std::size_t retained_voxels, double mode_fraction)
{
    return std::max<std::size_t>(
        1, static_cast<std::size_t>(mode_fraction * static_cast<double>(retained_voxels)));
}

namespace {

std::size_t count_retained_voxels(const RadiusFunction& radius, const GridSpec& spec,
                                  int subsamples, Vec2 center)
{
    const double lip = radius.derivative_bound();
    const double step = spec.h / subsamples;
    std::size_t count = 0;
    for (int iy = 0; iy < spec.ny; ++iy) {
        for (int ix = 0; ix < spec.nx; ++ix) {
            const Vec2 lower = spec.lower_corner(ix, iy) - center;
            const int cls = detail::classify_voxel(radius, lip, lower, spec.h);
            if (cls > 0) {
                ++count;
                continue;
            }
            if (cls < 0) {
                continue;
            }
            bool any = false;
            for (int sy = 0; sy < subsamples && !any; ++sy) {
                for (int sx = 0; sx < subsamples && !any; ++sx) {
                    const Vec2 xi{lower.x + (sx + 0.5) * step, lower.y + (sy + 0.5) * step};
                    any = radius.contains(xi);
                }
            }
            count += any ? 1 : 0;
        }
    }
    return count;
}

} // namespace

VelocitySolver make_velocity_solver(const VoxelGrid& u_eps, const DiskTransform& transform,
                                    const VelocityReconConfig& cfg, Vec2 center)
{
    cfg.validate();
    double cutoff;
    if (cfg.cutoff) {
        cutoff = *cfg.cutoff;
    } else {
        const std::size_t retained =
            count_retained_voxels(transform.radius(), u_eps.spec, cfg.subsamples, center);
        if (retained == 0) {
            throw NumericalFailure("no voxel intersects the reconstructed domain");
        }
        cutoff = cutoff_for_mode_count(default_mode_count(retained, cfg.mode_fraction));
    }
    DiskEigenBasis basis = build_basis(cutoff);
    DesignMatrix design = assemble_design_matrix(basis, transform, u_eps.spec, cfg.subsamples, center);
    return VelocitySolver(std::move(basis), std::move(design), u_eps, cfg);
}

VelocityReconResult reconstruct_velocity(const VoxelGrid& u_eps, const DiskTransform& transform,
                                         double beta, const VelocityReconConfig& cfg, Vec2 center)
{
    return make_velocity_solver(u_eps, transform, cfg, center).solve(beta);
}

VelocityReconResult choose_beta_discrepancy(const VoxelGrid& u_eps, const DiskTransform& transform,
                                            double delta_u, const VelocityReconConfig& cfg,
                                            Vec2 center)
{
    return make_velocity_solver(u_eps, transform, cfg, center).choose_beta_discrepancy(delta_u);
}

double compute_delta_u(double delta_r, double eps, const NormBounds& bounds)
{
    if (!(delta_r >= 0.0) || !(eps >= 0.0) || !(bounds.c >= 0.0) || !(bounds.u3 >= 0.0)) {
        throw InvalidArgument("noise levels and norm bounds must be non-negative");
    }
    return bounds.c * (std::sqrt(delta_r) * bounds.u3 + eps);
}

double apriori_beta(double delta_u, double mu)
{
    if (!(delta_u > 0.0) || !(mu >= 0.0)) {
        throw InvalidArgument("a-priori beta needs delta_U > 0 and mu >= 0");
    }
    return std::pow(delta_u, 2.0 / (2.0 * mu + 1.0));
}

} // namespace flowrecon
