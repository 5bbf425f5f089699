#include "flowrecon/geo_ident.hpp"

#include "flowrecon/error.hpp"
#include "flowrecon/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace flowrecon {

namespace {

constexpr double kMinStep = 0x1p-30;
constexpr int kMaxHalvings = 40;

void check_conformal(const VoxelGrid& data, const GridSpec& spec)
{
    if (!(data.spec == spec) || data.values.size() != spec.size()) {
        throw InvalidArgument("data grid does not match the forward model grid");
    }
}

double weighted_misfit(const VoxelGrid& f, const VoxelGrid& data)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < f.values.size(); ++i) {
        const double d = f.values[i] - data.values[i];
        sum += d * d;
    }
    return sum * data.spec.h * data.spec.h;
}

double penalty(const Eigen::VectorXd& x, const Eigen::VectorXd& w)
{
    return x.dot(w.cwiseProduct(x));
}

Eigen::VectorXd to_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

RadiusFunction from_vector(const Eigen::VectorXd& x)
{
    return RadiusFunction::from_packed(std::span<const double>(x.data(), x.size()));
}

} // namespace

double smooth_heaviside(double x, double gamma)
{
    return std::atan(x / gamma) / std::numbers::pi + 0.5;
}

double smooth_heaviside_derivative(double x, double gamma)
{
    return gamma / (std::numbers::pi * (gamma * gamma + x * x));
}

double default_gamma(double h)
{
    return h / 8.0;
}

double GeoIdentConfig::gamma_for(const GridSpec& spec) const
{
    return gamma.value_or(default_gamma(spec.h));
}

void GeoIdentConfig::validate() const
{
    if (gamma && !(*gamma > 0.0)) {
        throw InvalidArgument("Heaviside smoothing width gamma must be positive");
    }
    if (!(alpha0 > 0.0)) {
        throw InvalidArgument("alpha0 must be positive");
    }
    if (order < 0) {
        throw InvalidArgument("Fourier order must be non-negative");
    }
    if (quad_order < 2) {
        throw InvalidArgument("quadrature order must be >= 2");
    }
    if (gn_max_iter < 1 || !(gn_tol > 0.0)) {
        throw InvalidArgument("Gauss-Newton iteration limits must be positive");
    }
    bounds.validate();
}

// --- ForwardModel -------------------------------------------------------------

ForwardModel::ForwardModel(const GridSpec& spec, double gamma, int quad_order, int order,
                           Vec2 center)
    : spec_(spec), gamma_(gamma), order_(order), nodes_per_voxel_(quad_order * quad_order)
{
    spec_.validate();
    if (!(gamma > 0.0) || quad_order < 1 || order < 0) {
        throw InvalidArgument("invalid forward model parameters");
    }
    const QuadratureRule rule = gauss_legendre_unit(quad_order);
    const auto count = static_cast<Eigen::Index>(spec_.size() * nodes_per_voxel_);
    dist_.resize(count);
    weight_.resize(count);
    trig_.resize(count, parameter_count());
    Eigen::Index n = 0;
    for (int iy = 0; iy < spec_.ny; ++iy) {
        for (int ix = 0; ix < spec_.nx; ++ix) {
            const Vec2 lower = spec_.lower_corner(ix, iy);
            for (int qy = 0; qy < quad_order; ++qy) {
                for (int qx = 0; qx < quad_order; ++qx, ++n) {
                    const Vec2 xi{lower.x + rule.nodes[qx] * spec_.h - center.x,
                                  lower.y + rule.nodes[qy] * spec_.h - center.y};
                    const double d = norm(xi);
                    const double c = d > 0.0 ? xi.x / d : 1.0;
                    const double s = d > 0.0 ? xi.y / d : 0.0;
                    dist_[n] = d;
                    weight_[n] = rule.weights[qx] * rule.weights[qy];
                    trig_(n, 0) = 1.0;
                    double ck = c, sk = s;
                    for (int k = 1; k <= order_; ++k) {
                        trig_(n, 2 * k - 1) = sk;
                        trig_(n, 2 * k) = ck;
                        const double cn = ck * c - sk * s;
                        sk = sk * c + ck * s;
                        ck = cn;
                    }
                }
            }
        }
    }
}

namespace {

Eigen::VectorXd packed_vector(const RadiusFunction& radius, int order)
{
    if (radius.order() != order) {
        throw InvalidArgument("radius order does not match the forward model");
    }
    const std::vector<double> p = radius.packed();
    return Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
}

/// Sums consecutive blocks of `block` entries.
Eigen::VectorXd block_sums(const Eigen::VectorXd& x, int block)
{
    return Eigen::Map<const Eigen::MatrixXd>(x.data(), block, x.size() / block)
        .colwise()
        .sum()
        .transpose();
}

} // namespace

VoxelGrid ForwardModel::evaluate(const RadiusFunction& radius) const
{
    const Eigen::VectorXd arg = trig_ * packed_vector(radius, order_) - dist_;
    Eigen::VectorXd h(arg.size());
    for (Eigen::Index n = 0; n < arg.size(); ++n) {
        h[n] = weight_[n] * smooth_heaviside(arg[n], gamma_);
    }
    const Eigen::VectorXd sums = block_sums(h, nodes_per_voxel_);
    VoxelGrid out(spec_);
    std::copy(sums.data(), sums.data() + sums.size(), out.values.begin());
    return out;
}

void ForwardModel::evaluate_with_jacobian(const RadiusFunction& radius, VoxelGrid& value,
                                          Eigen::MatrixXd& jac) const
{
    const Eigen::VectorXd arg = trig_ * packed_vector(radius, order_) - dist_;
    Eigen::VectorXd h(arg.size()), dh(arg.size());
    for (Eigen::Index n = 0; n < arg.size(); ++n) {
        h[n] = weight_[n] * smooth_heaviside(arg[n], gamma_);
        dh[n] = weight_[n] * smooth_heaviside_derivative(arg[n], gamma_);
    }
    const Eigen::VectorXd sums = block_sums(h, nodes_per_voxel_);
    value = VoxelGrid(spec_);
    std::copy(sums.data(), sums.data() + sums.size(), value.values.begin());
    jac.resize(static_cast<Eigen::Index>(spec_.size()), parameter_count());
    for (int c = 0; c < parameter_count(); ++c) {
        jac.col(c) = block_sums(dh.cwiseProduct(trig_.col(c)), nodes_per_voxel_);
    }
}

Eigen::MatrixXd ForwardModel::jacobian(const RadiusFunction& radius) const
{
    VoxelGrid value;
    Eigen::MatrixXd jac;
    evaluate_with_jacobian(radius, value, jac);
    return jac;
}

VoxelGrid forward_map(const RadiusFunction& radius, const GeoIdentConfig& cfg, const GridSpec& spec)
{
    cfg.validate();
    return ForwardModel(spec, cfg.gamma_for(spec), cfg.quad_order, radius.order(), cfg.center)
        .evaluate(radius);
}

Eigen::MatrixXd forward_jacobian(const RadiusFunction& radius, const GeoIdentConfig& cfg,
                                 const GridSpec& spec)
{
    cfg.validate();
    return ForwardModel(spec, cfg.gamma_for(spec), cfg.quad_order, radius.order(), cfg.center)
        .jacobian(radius);
}

double objective(const RadiusFunction& radius, double alpha, const VoxelGrid& data,
                 const GeoIdentConfig& cfg)
{
    cfg.validate();
    if (!radius.admissible(cfg.bounds)) {
        throw InvalidArgument("objective evaluated at an inadmissible radius function");
    }
    const VoxelGrid f = forward_map(radius, cfg, data.spec);
    return weighted_misfit(f, data) + alpha * sobolev_norm_sq(radius, 2);
}

// --- Gauss-Newton ---------------------------------------------------------------

GeoIdentResult gauss_newton_minimize(const VoxelGrid& data, double alpha, const GeoIdentConfig& cfg,
                                     const RadiusFunction& initial)
{
    cfg.validate();
    if (!(alpha >= 0.0)) {
        throw InvalidArgument("regularization parameter alpha must be non-negative");
    }
    const RadiusFunction start = initial.with_order(cfg.order);
    if (!start.admissible(cfg.bounds)) {
        throw InvalidArgument("initial radius function is not admissible");
    }
    const GridSpec& spec = data.spec;
    const ForwardModel model(spec, cfg.gamma_for(spec), cfg.quad_order, cfg.order, cfg.center);
    check_conformal(data, model.grid());

    const double h2 = spec.h * spec.h;
    const Eigen::VectorXd w = to_vector(sobolev_diagonal(cfg.order, 2));
    const Eigen::VectorXd m = to_vector(data.values);

    Eigen::VectorXd x = to_vector(start.packed());
    VoxelGrid f;
    Eigen::MatrixXd jac;
    model.evaluate_with_jacobian(start, f, jac);
    double obj = weighted_misfit(f, data) + alpha * penalty(x, w);

    GeoIdentResult result;
    result.alpha = alpha;
    result.center = cfg.center;
    result.objective_history.push_back(obj);

    auto finish = [&](GeoIdentStatus status) {
        const Eigen::VectorXd residual = m - to_vector(f.values);
        result.radius = from_vector(x);
        result.residual_norm = std::sqrt(weighted_misfit(f, data));
        result.stationarity = (h2 * jac.transpose() * residual - alpha * w.cwiseProduct(x)).norm();
        result.status = status;
        return result;
    };

    for (int it = 0; it < cfg.gn_max_iter; ++it) {
        const Eigen::VectorXd residual = m - to_vector(f.values);
        Eigen::MatrixXd normal = h2 * (jac.transpose() * jac);
        normal.diagonal() += alpha * w;
        const Eigen::VectorXd rhs = h2 * (jac.transpose() * residual) - alpha * w.cwiseProduct(x);

        Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
        const Eigen::VectorXd step = ldlt.solve(rhs);
        const double rhs_norm = rhs.norm();
        result.normal_equation_residual =
            rhs_norm > 0.0 ? (normal * step - rhs).norm() / rhs_norm : 0.0;
        if (!step.allFinite()) {
            throw NoAdmissibleStep("Gauss-Newton normal equations are singular", finish(GeoIdentStatus::MaxIterations));
        }
        if (step.norm() < cfg.gn_tol) {
            return finish(GeoIdentStatus::Converged);
        }

        double lambda = 1.0;
        bool accepted = false;
        Eigen::VectorXd trial;
        VoxelGrid f_trial;
        double obj_trial = obj;
        while (lambda >= kMinStep) {
            trial = x + lambda * step;
            const RadiusFunction r_trial = from_vector(trial);
            if (r_trial.admissible(cfg.bounds)) {
                f_trial = model.evaluate(r_trial);
                obj_trial = weighted_misfit(f_trial, data) + alpha * penalty(trial, w);
                if (obj_trial < obj) {
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if (!accepted) {
            // a descent direction that cannot reduce the objective at any
            // resolvable step length means we are stationary up to rounding
            const double predicted = rhs.dot(step);
            if (predicted <= 1e-12 * std::max(obj, 1e-300)) {
                return finish(GeoIdentStatus::Converged);
            }
            throw NoAdmissibleStep("no admissible descent step above 2^-30",
                                   finish(GeoIdentStatus::MaxIterations));
        }

        x = trial;
        model.evaluate_with_jacobian(from_vector(x), f, jac);
        obj = obj_trial;
        result.objective_history.push_back(obj);
        result.iterations = it + 1;
        if ((lambda * step).norm() < cfg.gn_tol) {
            return finish(GeoIdentStatus::Converged);
        }
    }
    return finish(GeoIdentStatus::MaxIterations);
}

GeoIdentResult choose_alpha_discrepancy(const VoxelGrid& data, double delta,
                                        const GeoIdentConfig& cfg, const RadiusFunction& initial)
{
    cfg.validate();
    if (!(delta > 0.0)) {
        throw InvalidArgument("noise level delta must be positive");
    }
    const double bound = 4.0 * delta;
    RadiusFunction warm = initial;
    std::optional<GeoIdentResult> previous;
    std::optional<GeoIdentResult> best;

    for (int n = 0; n <= kMaxHalvings; ++n) {
        const double alpha = std::ldexp(cfg.alpha0, -n);
        GeoIdentResult res;
        try {
            res = gauss_newton_minimize(data, alpha, cfg, warm);
        } catch (const NoAdmissibleStep& e) {
            res = e.last();
        }
        warm = res.radius;
        if (res.residual_norm <= bound) {
            if (previous && std::abs(previous->residual_norm - res.residual_norm) <= 1e-12) {
                return *previous;
            }
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

Vec2 barycenter(const VoxelGrid& data)
{
    double total = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < data.values.size(); ++i) {
        const double w = data.values[i];
        const Vec2 c = data.spec.center(i);
        total += w;
        sx += w * c.x;
        sy += w * c.y;
    }
    if (!(total > 0.0)) {
        throw NumericalFailure("magnitude data has no positive mass; barycenter undefined");
    }
    return {sx / total, sy / total};
}

RadiusFunction initial_radius(const VoxelGrid& data, const GeoIdentConfig& cfg)
{
    double mass = 0.0;
    for (const double v : data.values) {
        mass += v;
    }
    const double area = mass * data.spec.h * data.spec.h;
    const double lo = cfg.bounds.r0 + 0.05, hi = cfg.bounds.r1 - 0.05;
    const double b0 = std::clamp(std::sqrt(std::max(area, 0.0) / std::numbers::pi), std::min(lo, hi),
                                 std::max(lo, hi));
    return RadiusFunction::constant(b0, cfg.order);
}

} // namespace flowrecon
