#include "flowrecon/geo_ident.hpp"
#include "flowrecon/phantom.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace flowrecon;

namespace {

constexpr double kPi = std::numbers::pi;

double max_radius_error(const RadiusFunction& a, const RadiusFunction& b)
{
    double worst = 0.0;
    for (int i = 0; i < 720; ++i) {
        const double phi = kTwoPi * i / 720;
        worst = std::max(worst, std::abs(a.value(phi) - b.value(phi)));
    }
    return worst;
}

GeoIdentConfig small_config(int order = 4)
{
    GeoIdentConfig cfg;
    cfg.order = order;
    return cfg;
}

} // namespace

TEST_CASE("smoothed heaviside")
{
    CHECK(smooth_heaviside(0.0, 0.3) == 0.5);
    for (double x : {0.01, 0.2, 3.0}) {
        CHECK(smooth_heaviside(x, 0.05) + smooth_heaviside(-x, 0.05) == doctest::Approx(1.0).epsilon(1e-15));
        const double step = 1e-7;
        const double fd = (smooth_heaviside(x + step, 0.05) - smooth_heaviside(x - step, 0.05)) / (2 * step);
        CHECK(smooth_heaviside_derivative(x, 0.05) == doctest::Approx(fd).epsilon(1e-6));
    }
    CHECK(smooth_heaviside(1.0, 0.01) == doctest::Approx(std::atan(100.0) / kPi + 0.5).epsilon(1e-15));
    CHECK(smooth_heaviside(1.0, 0.01) == doctest::Approx(0.996817).epsilon(1e-6));
}

TEST_CASE("forward map saturates away from the boundary")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 32);
    GeoIdentConfig cfg = small_config();
    cfg.gamma = 1e-7;
    const VoxelGrid f = forward_map(RadiusFunction::constant(0.5, 4), cfg, spec);
    const int mid = spec.nx / 2;
    CHECK(f.at(mid, mid) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(f.at(0, 0)) < 1e-6);
}

TEST_CASE("forward map approaches the rasterized characteristic function")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 32);
    const RadiusFunction r = RadiusFunction::constant(0.5, 4);
    GeoIdentConfig cfg = small_config();
    cfg.gamma = 1e-4;
    cfg.quad_order = 64;
    const VoxelGrid f = forward_map(r, cfg, spec);
    const VoxelGrid chi = rasterize_characteristic(r, spec, 64);
    double worst = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        worst = std::max(worst, std::abs(f.values[i] - chi.values[i]));
    }
    CHECK(worst <= 0.02);
}

TEST_CASE("forward jacobian matches finite differences")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 16);
    const GeoIdentConfig cfg = small_config();
    const RadiusFunction r(0.5, {0.02, 0.0, -0.01}, {0.03, 0.01});
    const RadiusFunction rr = r.with_order(cfg.order);
    const Eigen::MatrixXd jac = forward_jacobian(rr, cfg, spec);
    const auto p = rr.packed();
    const double step = 1e-6;
    Eigen::MatrixXd fd(jac.rows(), jac.cols());
    for (std::size_t c = 0; c < p.size(); ++c) {
        auto plus = p, minus = p;
        plus[c] += step;
        minus[c] -= step;
        const VoxelGrid fp = forward_map(RadiusFunction::from_packed(plus), cfg, spec);
        const VoxelGrid fm = forward_map(RadiusFunction::from_packed(minus), cfg, spec);
        for (std::size_t i = 0; i < fp.values.size(); ++i) {
            fd(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
                (fp.values[i] - fm.values[i]) / (2 * step);
        }
    }
    CHECK((fd - jac).norm() <= 1e-5 * jac.norm());

    const int mid = spec.nx / 2;
    const double peak = jac.col(0).cwiseAbs().maxCoeff();
    CHECK(std::abs(jac(static_cast<Eigen::Index>(spec.index(mid, mid)), 0)) < 0.01 * peak);

    VoxelGrid value;
    Eigen::MatrixXd both;
    ForwardModel(spec, cfg.gamma_for(spec), cfg.quad_order, cfg.order).evaluate_with_jacobian(rr, value, both);
    CHECK((both - jac).norm() == 0.0);
}

TEST_CASE("objective")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 16);
    const GeoIdentConfig cfg = small_config();
    const RadiusFunction r(0.5, {0.02}, {0.0, 0.03});
    const VoxelGrid data = forward_map(r.with_order(cfg.order), cfg, spec);
    CHECK(objective(r.with_order(cfg.order), 0.0, data, cfg) <= 1e-4 * 1e-4);

    const double alpha = 0.01;
    const double reg = objective(r.with_order(cfg.order), alpha, data, cfg) -
                       objective(r.with_order(cfg.order), 0.0, data, cfg);
    CHECK(reg == doctest::Approx(alpha * sobolev_norm_sq(r, 2)).epsilon(1e-10));

    CHECK_THROWS_AS(objective(RadiusFunction::constant(0.0, cfg.order), 0.0, data, cfg), InvalidArgument);
}

TEST_CASE("sub-pixel reconstruction of a noiseless circle")
{
    const double h = 1.0 / 32;
    const GridSpec spec = GridSpec::covering_fov(h);
    const RadiusFunction truth = RadiusFunction::constant(0.5);
    const VoxelGrid data = rasterize_characteristic(truth, spec);
    GeoIdentConfig cfg;
    cfg.gamma = h / 2;
    const GeoIdentResult res = gauss_newton_minimize(data, 1e-6, cfg, initial_radius(data, cfg));
    CHECK(max_radius_error(res.radius, truth) < h / 4);
    for (std::size_t i = 1; i < res.objective_history.size(); ++i) {
        CHECK(res.objective_history[i] <= res.objective_history[i - 1]);
    }
    CHECK(res.normal_equation_residual <= 1e-10);
}

TEST_CASE("gauss-newton started at the truth stays there")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 24);
    const GeoIdentConfig cfg = small_config();
    const RadiusFunction truth = RadiusFunction(0.5, {0.0, 0.0, 0.03}, {0.0, 0.05}).with_order(cfg.order);
    const VoxelGrid data = forward_map(truth, cfg, spec);
    const double alpha = 1e-8;
    const GeoIdentResult res = gauss_newton_minimize(data, alpha, cfg, truth);
    CHECK(res.iterations <= 2);
    CHECK(res.objective_history.back() <= alpha * sobolev_norm_sq(truth, 2) * (1 + 1e-6));
    CHECK(res.objective_history.back() == doctest::Approx(alpha * sobolev_norm_sq(truth, 2)).epsilon(1e-3));
}

TEST_CASE("objective history is non-increasing on noisy data")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 24);
    const RadiusFunction truth(0.5, {0.0, 0.0, 0.03}, {0.0, 0.05});
    const VoxelGrid chi = rasterize_characteristic(truth, spec);
    const GeoIdentConfig cfg;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const NoisyGrid noisy = add_magnitude_noise(chi, NoiseSpec{0.05, 0.0, seed});
        for (double alpha : {1e-1, 1e-3, 1e-5}) {
            const GeoIdentResult res = gauss_newton_minimize(noisy.grid, alpha, cfg, initial_radius(noisy.grid, cfg));
            for (std::size_t i = 1; i < res.objective_history.size(); ++i) {
                CHECK(res.objective_history[i] <= res.objective_history[i - 1]);
            }
            CHECK(res.radius.admissible(cfg.bounds));
        }
    }
}

TEST_CASE("discrepancy principle")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 24);
    const RadiusFunction truth(0.5, {0.0, 0.0, 0.03}, {0.0, 0.05});
    const VoxelGrid chi = rasterize_characteristic(truth, spec);
    const GeoIdentConfig cfg;

    const GeoIdentResult huge = choose_alpha_discrepancy(chi, 100.0, cfg, initial_radius(chi, cfg));
    CHECK(huge.alpha == cfg.alpha0);
    CHECK_FALSE(huge.discrepancy_unreachable);

    std::vector<double> alphas;
    for (double sigma : {4e-2, 2e-2, 1e-2}) {
        const NoisyGrid noisy = add_magnitude_noise(chi, NoiseSpec{sigma, 0.0, 5});
        const GeoIdentResult res =
            choose_alpha_discrepancy(noisy.grid, noisy.delta, cfg, initial_radius(noisy.grid, cfg));
        CHECK((res.residual_norm <= 4 * noisy.delta || res.discrepancy_unreachable));
        if (!res.discrepancy_unreachable) {
            alphas.push_back(res.alpha);
        }
    }
    REQUIRE(alphas.size() >= 2);
    for (std::size_t i = 1; i < alphas.size(); ++i) {
        CHECK(alphas[i] <= alphas[i - 1]);
    }
}

TEST_CASE("barycenter and initial radius")
{
    const GridSpec spec = GridSpec::covering_fov(1.0 / 32);
    const VoxelGrid chi = rasterize_characteristic(RadiusFunction::constant(0.5), spec);
    const Vec2 c = barycenter(chi);
    CHECK(std::abs(c.x) < 1e-12);
    CHECK(std::abs(c.y) < 1e-12);
    const GeoIdentConfig cfg;
    CHECK(initial_radius(chi, cfg).mean() == doctest::Approx(0.5).epsilon(1e-3));
    CHECK(initial_radius(VoxelGrid(spec, 0.0), cfg).mean() == doctest::Approx(cfg.bounds.r0 + 0.05));
}
