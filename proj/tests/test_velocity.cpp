#include "flowrecon/quadrature.hpp"
#include "flowrecon/study.hpp"
#include "flowrecon/velocity.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace flowrecon;

namespace {

constexpr double kPi = std::numbers::pi;

double bisect_zero(int m, double lo, double hi)
{
    double flo = bessel_j(m, lo);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = bessel_j(m, mid);
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// Weighted residual sqrt(sum w_i (A c - u)_i^2) recomputed from the design.
double weighted_residual(const VelocitySolver& s, const VelocityCoefficients& v, const VoxelGrid& u)
{
    const auto& d = s.design();
    const Eigen::Map<const Eigen::VectorXd> c(v.c.data(), static_cast<Eigen::Index>(v.c.size()));
    const Eigen::VectorXd ac = d.a * c;
    double sum = 0.0;
    for (std::size_t i = 0; i < d.voxels.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double r = ac(k) - u.values[d.voxels[i]];
        sum += d.weight(k) * r * r;
    }
    return std::sqrt(sum);
}

struct PoiseuilleCase {
    DiskTransform transform{RadiusFunction::constant(0.5), GeometryBounds{0.25, 0.9, 4}};
    GridSpec spec = GridSpec::covering_fov(1.0 / 32);
    VoxelGrid exact;

    PoiseuilleCase()
    {
        const SyntheticTruth truth(transform.radius(), VelocityTruth{}, transform.bounds());
        exact = observe_reference_field([&](Vec2 x) { return truth.reference(x); }, transform, spec, 16).mean;
    }

    /// Exact data plus Gaussian noise of the given per-voxel deviation.
    VoxelGrid noisy(double sigma, std::uint64_t seed) const
    {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, sigma);
        VoxelGrid g = exact;
        for (double& v : g.values) {
            v += n(rng);
        }
        return g;
    }
};

} // namespace

TEST_CASE("bessel functions and zeros")
{
    CHECK(bessel_j(0, 0.0) == 1.0);
    CHECK(bessel_j(1, 0.0) == 0.0);
    const double j01 = bisect_zero(0, 2.0, 3.0);
    CHECK(j01 == doctest::Approx(2.404825557695773).epsilon(1e-14));
    CHECK(bessel_zero(0, 1) == doctest::Approx(j01).epsilon(1e-13));
    CHECK(std::abs(bessel_j(0, 2.404825557695773)) < 1e-10);
    CHECK(bessel_zero(0, 1) < bessel_zero(1, 1));
    CHECK(bessel_zero(1, 1) < bessel_zero(0, 2));

    for (int m = 0; m <= 10; ++m) {
        for (int n = 1; n <= 10; ++n) {
            const double z = bessel_zero(m, n);
            CHECK(std::abs(bessel_j(m, z)) <= 1e-12);
            if (n > 1) {
                CHECK(z > bessel_zero(m, n - 1));
            }
            if (m > 0) {
                CHECK(z > bessel_zero(m - 1, n));
            }
        }
    }
}

TEST_CASE("bessel equation residual")
{
    const double step = 1e-5;
    for (int m = 0; m <= 6; ++m) {
        for (double x : {0.3, 1.0, 2.7, 5.5, 9.1, 14.0}) {
            const double j = bessel_j(m, x);
            const double dj = bessel_j_derivative(m, x);
            const double ddj = (bessel_j_derivative(m, x + step) - bessel_j_derivative(m, x - step)) / (2 * step);
            CHECK(std::abs(x * x * ddj + x * dj + (x * x - m * m) * j) <= 1e-8);
            const double fd = (bessel_j(m, x + step) - bessel_j(m, x - step)) / (2 * step);
            CHECK(dj == doctest::Approx(fd).epsilon(1e-8));
        }
    }
}

TEST_CASE("basis enumeration")
{
    const DiskEigenBasis one = build_basis(6.0);
    REQUIRE(one.size() == 1);
    CHECK(one.modes[0].m == 0);
    CHECK(one.modes[0].n == 1);
    CHECK(one.modes[0].parity == Parity::Cos);

    std::size_t last = 0;
    for (double cutoff = 6.0; cutoff < 300.0; cutoff += 7.0) {
        const DiskEigenBasis b = build_basis(cutoff);
        CHECK(b.size() >= last);
        last = b.size();
        for (std::size_t j = 1; j < b.size(); ++j) {
            CHECK(b.modes[j].lambda >= b.modes[j - 1].lambda);
        }
    }
    CHECK(build_basis(cutoff_for_mode_count(40)).size() >= 40);
    CHECK(build_basis(cutoff_for_mode_count(40) * (1 - 1e-9)).size() < 40);
}

TEST_CASE("basis is orthonormal under polar quadrature")
{
    const DiskEigenBasis basis = build_basis(200.0);
    const QuadratureRule gl = gauss_legendre_unit(256);
    const int na = 512;
    const std::size_t m = basis.size();
    Eigen::MatrixXd values(static_cast<Eigen::Index>(256 * na), static_cast<Eigen::Index>(m));
    Eigen::VectorXd w(values.rows());
    Eigen::Index row = 0;
    for (int i = 0; i < 256; ++i) {
        const double r = gl.nodes[i];
        for (int k = 0; k < na; ++k, ++row) {
            const double phi = kTwoPi * k / na;
            w(row) = gl.weights[i] * r * kTwoPi / na;
            for (std::size_t j = 0; j < m; ++j) {
                values(row, static_cast<Eigen::Index>(j)) = eval_mode(basis.modes[j], {r * std::cos(phi), r * std::sin(phi)});
            }
        }
    }
    const Eigen::MatrixXd gram = values.transpose() * w.asDiagonal() * values;
    const Eigen::MatrixXd off = gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols());
    CHECK(off.cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("modes are Dirichlet eigenfunctions")
{
    const DiskEigenBasis basis = build_basis(60.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double step = 1e-3;
    // fourth-order five-point stencil per axis
    auto second = [&](const EigenMode& mode, Vec2 x, Vec2 e) {
        return (-eval_mode(mode, x + 2 * step * e) + 16 * eval_mode(mode, x + step * e) - 30 * eval_mode(mode, x) +
                16 * eval_mode(mode, x - step * e) - eval_mode(mode, x - 2 * step * e)) /
               (12 * step * step);
    };
    double worst = 0.0;
    for (int p = 0; p < 10000; ++p) {
        const double r = 0.98 * std::sqrt(u(rng));
        const double phi = kTwoPi * u(rng);
        const Vec2 x{r * std::cos(phi), r * std::sin(phi)};
        const auto& mode = basis.modes[static_cast<std::size_t>(p) % basis.size()];
        const double lap = second(mode, x, {1, 0}) + second(mode, x, {0, 1});
        worst = std::max(worst, std::abs(lap + mode.lambda * eval_mode(mode, x)));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("mode gradients")
{
    const DiskEigenBasis basis = build_basis(250.0);
    const EigenMode& m01 = basis.modes[0];
    CHECK(std::abs(eval_mode(m01, {1.0, 0.0})) < 1e-15);
    CHECK(norm(eval_mode_gradient(m01, {0.0, 0.0})) == 0.0);

    for (const auto& mode : basis.modes) {
        for (int i = 0; i < 360; ++i) {
            const double phi = kTwoPi * i / 360;
            const Vec2 g = eval_mode_gradient(mode, {std::cos(phi), std::sin(phi)});
            CHECK(std::abs(dot(g, Vec2{-std::sin(phi), std::cos(phi)})) <= 1e-12);
        }
        const double step = 1e-6;
        const Vec2 x{0.31, -0.22};
        const Vec2 g = eval_mode_gradient(mode, x);
        const double gx = (eval_mode(mode, x + Vec2{step, 0}) - eval_mode(mode, x - Vec2{step, 0})) / (2 * step);
        const double gy = (eval_mode(mode, x + Vec2{0, step}) - eval_mode(mode, x - Vec2{0, step})) / (2 * step);
        CHECK(std::abs(g.x - gx) < 1e-6 * (1 + mode.lambda));
        CHECK(std::abs(g.y - gy) < 1e-6 * (1 + mode.lambda));
    }

    // only m = 1 modes have a non-zero gradient at the origin
    for (const auto& mode : basis.modes) {
        const double g0 = norm(eval_mode_gradient(mode, {0.0, 0.0}));
        const double gsmall = norm(eval_mode_gradient(mode, {1e-9, 0.0}));
        CHECK(std::abs(g0 - gsmall) <= 1e-8 * (1 + mode.lambda));
        if (mode.m != 1) {
            CHECK(g0 == 0.0);
        }
    }
}

TEST_CASE("projection and norms on the basis span")
{
    const DiskEigenBasis basis = build_basis(120.0);
    VelocityCoefficients v{basis, std::vector<double>(basis.size(), 0.0)};
    v.c[0] = 0.7;
    v.c[3] = -0.2;
    const VelocityCoefficients p = project_onto_basis(basis, [&](Vec2 x) { return eval_velocity(v, x); });
    for (std::size_t j = 0; j < basis.size(); ++j) {
        CHECK(p.c[j] == doctest::Approx(v.c[j]).scale(1.0).epsilon(1e-10));
    }
    const double l0 = basis.modes[0].lambda, l3 = basis.modes[3].lambda;
    CHECK(laplacian_norm_sq(v) == doctest::Approx(0.49 * l0 * l0 + 0.04 * l3 * l3));
    CHECK(proxy_h2_norm_sq(v) == doctest::Approx(0.49 * (1 + l0 + l0 * l0) + 0.04 * (1 + l3 + l3 * l3)));
}

TEST_CASE("design matrix")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 16);
    const GeometryBounds b{0.25, 0.9, 4};
    const DiskEigenBasis basis = build_basis(60.0);

    SUBCASE("retained voxels and constant sampling")
    {
        const DiskTransform t(RadiusFunction(0.5, {0.03}, {0.0, 0.04}), b);
        const DesignMatrix d = assemble_design_matrix(basis, t, spec, 16);
        CHECK(std::find(d.voxels.begin(), d.voxels.end(), spec.index(0, 0)) == d.voxels.end());
        const VoxelMeans ones = observe_reference_field([](Vec2) { return 1.0; }, t, spec, 16);
        for (std::size_t i = 0; i < d.voxels.size(); ++i) {
            CHECK(ones.mean.values[d.voxels[i]] == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(d.weight(static_cast<Eigen::Index>(i)) > 0.0);
            CHECK(d.weight(static_cast<Eigen::Index>(i)) <= spec.h * spec.h * (1 + 1e-12));
        }
        double area = d.weight.sum();
        CHECK(area == doctest::Approx(kPi * 0.25).epsilon(0.01));
    }

    SUBCASE("pure scaling agrees with fine sampling")
    {
        const double r0 = 0.25;
        const DiskTransform t(RadiusFunction::constant(r0), b);
        const DesignMatrix d = assemble_design_matrix(basis, t, spec, 16);
        const int mid = spec.nx / 2;
        const std::size_t voxel = spec.index(mid, mid);
        const auto it = std::find(d.voxels.begin(), d.voxels.end(), voxel);
        REQUIRE(it != d.voxels.end());
        const auto row = static_cast<Eigen::Index>(it - d.voxels.begin());
        const int fine = 160;
        const Vec2 lower = spec.lower_corner(mid, mid);
        for (std::size_t j = 0; j < basis.size(); ++j) {
            double sum = 0.0;
            for (int sy = 0; sy < fine; ++sy) {
                for (int sx = 0; sx < fine; ++sx) {
                    const Vec2 xi{lower.x + (sx + 0.5) * spec.h / fine, lower.y + (sy + 0.5) * spec.h / fine};
                    sum += eval_mode(basis.modes[j], (1.0 / r0) * xi);
                }
            }
            CHECK(std::abs(d.a(row, static_cast<Eigen::Index>(j)) - sum / (fine * fine)) <= 1e-3);
        }
    }
}

TEST_CASE("single mode recovery and penalty limits")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 32);
    const DiskTransform t(RadiusFunction(0.5, {0.03}, {0.0, 0.04}), GeometryBounds{0.25, 0.9, 4});
    const DiskEigenBasis basis = build_basis(80.0);
    const VoxelGrid data =
        observe_reference_field([&](Vec2 x) { return eval_mode(basis.modes[0], x); }, t, spec, 16).mean;
    const VelocityReconConfig cfg;
    const VelocitySolver solver(basis, assemble_design_matrix(basis, t, spec, 16), data, cfg);

    const VelocityReconResult fit = solver.solve(1e-10);
    CHECK(fit.velocity.c[0] == doctest::Approx(1.0).epsilon(1e-3));
    for (std::size_t j = 1; j < basis.size(); ++j) {
        CHECK(std::abs(fit.velocity.c[j]) <= 1e-3);
    }
    CHECK(fit.normal_equation_residual <= 1e-10);
    CHECK(fit.residual_norm == doctest::Approx(weighted_residual(solver, fit.velocity, data)).scale(1e-12));

    const VelocityReconResult stiff = solver.solve(1e12);
    double cn = 0.0;
    for (double c : stiff.velocity.c) {
        cn += c * c;
    }
    CHECK(std::sqrt(cn) <= 1e-6);

    const VelocitySolver zero(basis, assemble_design_matrix(basis, t, spec, 16), VoxelGrid(spec, 0.0), cfg);
    for (double c : zero.solve(1e-3).velocity.c) {
        CHECK(c == 0.0);
    }

    VelocityReconConfig cg = cfg;
    cg.solver = LinearSolver::ConjugateGradient;
    const VelocitySolver iterative(basis, assemble_design_matrix(basis, t, spec, 16), data, cg);
    const VelocityReconResult cg_fit = iterative.solve(1e-6);
    const VelocityReconResult ch_fit = solver.solve(1e-6);
    for (std::size_t j = 0; j < basis.size(); ++j) {
        CHECK(cg_fit.velocity.c[j] == doctest::Approx(ch_fit.velocity.c[j]).scale(1.0).epsilon(1e-8));
    }
}

TEST_CASE("beta sweep is monotone")
{
    const PoiseuilleCase pc;
    const VoxelGrid u = pc.noisy(0.05, 9);
    const VelocitySolver solver = make_velocity_solver(u, pc.transform, VelocityReconConfig{});
    double last_res = 0.0, last_pen = std::numeric_limits<double>::infinity();
    for (int n = 40; n >= 0; --n) {
        const VelocityReconResult r = solver.solve(std::ldexp(1.0, -n));
        CHECK(r.residual_norm >= last_res * (1 - 1e-12));
        const double pen = std::sqrt(laplacian_norm_sq(r.velocity));
        CHECK(pen <= last_pen * (1 + 1e-12));
        last_res = r.residual_norm;
        last_pen = pen;
    }
}

TEST_CASE("beta discrepancy principle")
{
    const PoiseuilleCase pc;
    const VelocityReconConfig cfg;

    const VelocitySolver clean = make_velocity_solver(pc.exact, pc.transform, cfg);
    const VelocityReconResult at_top = clean.solve(cfg.beta0);
    CHECK(clean.choose_beta_discrepancy(at_top.residual_norm).beta == cfg.beta0);

    std::vector<double> betas;
    for (double sigma : {1e-1, 1e-2, 1e-3}) {
        const VoxelGrid u = pc.noisy(sigma, 4);
        const VelocitySolver solver = make_velocity_solver(u, pc.transform, cfg);
        // data error of the truth projected onto the reconstruction basis
        const SyntheticTruth truth(pc.transform.radius(), VelocityTruth{}, pc.transform.bounds());
        const VelocityCoefficients ref =
            project_onto_basis(solver.basis(), [&](Vec2 x) { return truth.reference(x); });
        const double delta_u = weighted_residual(solver, ref, u);
        const VelocityReconResult r = solver.choose_beta_discrepancy(delta_u);
        CHECK((r.residual_norm <= 2 * delta_u || r.discrepancy_unreachable));
        if (!r.discrepancy_unreachable) {
            betas.push_back(r.beta);
        }
    }
    REQUIRE(betas.size() == 3);
    CHECK(betas[1] < betas[0]);
    CHECK(betas[2] < betas[1]);
}

TEST_CASE("data error bound and a-priori beta")
{
    CHECK(compute_delta_u(0.0, 0.0) == 0.0);
    CHECK(compute_delta_u(0.04, 0.2) - compute_delta_u(0.04, 0.1) == doctest::Approx(0.1));
    const NormBounds nb{1.0, 1.0};
    const double first = compute_delta_u(0.08, 0.0, nb);
    CHECK(compute_delta_u(0.04, 0.0, nb) == doctest::Approx(first / std::sqrt(2.0)));
    CHECK(compute_delta_u(0.04, 0.1, NormBounds{2.0, 3.0}) == doctest::Approx(2.0 * (0.2 * 3.0 + 0.1)));
    CHECK(apriori_beta(0.01) == doctest::Approx(std::pow(0.01, 2 / 1.25)));
}

TEST_CASE("mode count target")
{
    CHECK(default_mode_count(400) == 100);
    CHECK(default_mode_count(400, 0.5) == 200);
    VelocityReconConfig cfg;
    cfg.mode_fraction = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
