#include "flowrecon/study.hpp"

#include "flowrecon/config.hpp"
#include "flowrecon/error.hpp"
#include "flowrecon/io.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <thread>

namespace flowrecon {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double radius_error(const RadiusFunction& estimate, const RadiusFunction& truth, int s)
{
    return std::sqrt(sobolev_norm_sq(estimate - truth, s));
}

VoxelGrid select_noise_free_means(const SyntheticTruth& truth, const GridSpec& spec, int subsamples,
                                  VoxelGrid& fraction)
{
    VoxelMeans means = sample_voxel_means([&](Vec2 y) { return truth.physical(y); },
                                          truth.radius(), spec, subsamples);
    fraction = std::move(means.fraction);
    return std::move(means.mean);
}

/// Discrete L2(Omega) distance over voxels with positive weight fraction.
double weighted_distance(const VoxelGrid& a, const VoxelGrid& b, const VoxelGrid& fraction)
{
    const double h2 = a.spec.h * a.spec.h;
    double sum = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        if (fraction.values[i] > 0.0) {
            const double d = a.values[i] - b.values[i];
            sum += fraction.values[i] * h2 * d * d;
        }
    }
    return std::sqrt(sum);
}

struct GeometryOutcome {
    GeoIdentResult result;
    double delta = 0.0;
};

GeometryOutcome reconstruct_geometry(const StudyConfig& cfg, const SyntheticTruth& truth,
                                     const GridSpec& spec, const NoiseSpec& noise,
                                     std::optional<double> fixed_alpha)
{
    const VoxelGrid clean = rasterize_characteristic(truth.radius(), spec, cfg.phantom_subsamples);
    const NoisyGrid data = add_magnitude_noise(clean, noise);
    GeoIdentConfig gcfg = cfg.geometry;
    gcfg.bounds = cfg.bounds;
    const RadiusFunction init = initial_radius(data.grid, gcfg);

    GeometryOutcome out;
    out.delta = data.delta;
    if (fixed_alpha || cfg.mode == ParameterMode::Apriori) {
        const double alpha =
            fixed_alpha ? *fixed_alpha : std::pow(data.delta, 4.0 / cfg.apriori_k);
        try {
            out.result = gauss_newton_minimize(data.grid, alpha, gcfg, init);
        } catch (const NoAdmissibleStep& e) {
            out.result = e.last();
        }
    } else {
        out.result = choose_alpha_discrepancy(data.grid, data.delta, gcfg, init);
    }
    return out;
}

struct VelocityData {
    VoxelGrid u_eps;
    double eps = 0.0;
};

VelocityData make_velocity_data(const StudyConfig& cfg, const SyntheticTruth& truth,
                                const GridSpec& spec, const NoiseSpec& noise)
{
    const auto field = [&](Vec2 y) { return truth.physical(y); };
    const PhaseContrastData pc =
        synth_phase_contrast(field, truth.radius(), spec, cfg.venc, noise, cfg.phantom_subsamples);
    VelocityData out{retrieve_velocity(pc), 0.0};
    VoxelGrid fraction;
    const VoxelGrid clean = select_noise_free_means(truth, spec, cfg.phantom_subsamples, fraction);
    out.eps = weighted_distance(out.u_eps, clean, fraction);
    return out;
}

/// ||A P v_true - u_eps||_W: data misfit of the truth's projection onto the
/// reconstruction basis, observed through the reconstructed geometry.
double realized_delta_u(const VelocitySolver& solver, const VelocityCoefficients& v_ref,
                        const VoxelGrid& u_eps)
{
    const DesignMatrix& d = solver.design();
    const Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(v_ref.c.data(), v_ref.c.size());
    const Eigen::VectorXd pred = d.a * c;
    double sum = 0.0;
    for (std::size_t i = 0; i < d.voxels.size(); ++i) {
        const double r = pred[i] - u_eps.values[d.voxels[i]];
        sum += d.weight[i] * r * r;
    }
    return std::sqrt(sum);
}

double proxy_distance(const VelocityCoefficients& a, const VelocityCoefficients& b)
{
    VelocityCoefficients d = a;
    for (std::size_t j = 0; j < d.c.size(); ++j) {
        d.c[j] -= b.c[j];
    }
    return std::sqrt(proxy_h2_norm_sq(d));
}

std::string group_label(double h)
{
    return "h=" + format_double(h);
}

} // namespace

// --- truth ------------------------------------------------------------------------

SyntheticTruth::SyntheticTruth(RadiusFunction radius, VelocityTruth velocity, GeometryBounds bounds)
    : radius_(std::move(radius)), velocity_(std::move(velocity)), bounds_(bounds),
      transform_(radius_, bounds_)
{
    if (velocity_.kind == VelocityTruth::Kind::Manufactured) {
        VelocityCoefficients v{build_basis(velocity_.cutoff), velocity_.coefficients};
        if (v.c.size() != v.basis.size()) {
            throw InvalidArgument("manufactured velocity has " + std::to_string(v.c.size()) +
                                  " coefficients but the basis has " +
                                  std::to_string(v.basis.size()) + " modes");
        }
        manufactured_ = std::move(v);
    } else if (!(velocity_.u_max > 0.0)) {
        throw InvalidArgument("Poiseuille u_max must be positive");
    }
}

double SyntheticTruth::physical(Vec2 y) const
{
    const double r = norm(y);
    const double R = radius_.value_along(unit_direction(y));
    if (!(r < R)) {
        return 0.0;
    }
    if (manufactured_) {
        return eval_velocity(*manufactured_, transform_.inverse(y));
    }
    return velocity_.u_max * (1.0 - (r * r) / (R * R));
}

double SyntheticTruth::reference(Vec2 x) const
{
    if (manufactured_) {
        return eval_velocity(*manufactured_, x);
    }
    const double r = norm(x);
    const double R = radius_.value_along(unit_direction(x));
    const double rho = transform_.radial_profile(std::min(r, 1.0), R);
    return velocity_.u_max * (1.0 - (rho * rho) / (R * R));
}

WssProfile SyntheticTruth::wss(int samples) const
{
    if (manufactured_) {
        return wall_shear_stress(radius_, *manufactured_, bounds_, samples);
    }
    check_sample_count(samples);
    WssProfile out;
    for (int i = 0; i < samples; ++i) {
        const double phi = kTwoPi * i / samples;
        const double R = radius_.value(phi), dR = radius_.derivative(phi);
        out.angles.push_back(phi);
        out.values.push_back(2.0 * velocity_.u_max * std::sqrt(R * R + dR * dR) / (R * R));
    }
    return out;
}

double SyntheticTruth::max_speed() const
{
    if (!manufactured_) {
        return velocity_.u_max;
    }
    double best = 0.0;
    for (int i = 0; i <= 64; ++i) {
        for (int k = 0; k < 128; ++k) {
            const double r = i / 64.0, phi = kTwoPi * k / 128;
            best = std::max(best, std::abs(eval_velocity(*manufactured_, {r * std::cos(phi), r * std::sin(phi)})));
        }
    }
    return best;
}

// --- configuration ----------------------------------------------------------------

VelocityTruth velocity_truth_from_json(const nlohmann::json& j)
{
    VelocityTruth v;
    check_keys(j, {"profile", "u_max", "cutoff", "coefficients"}, "truth velocity");
    const std::string profile = get_string(j, "profile", "poiseuille");
    if (profile == "poiseuille") {
        v.kind = VelocityTruth::Kind::Poiseuille;
        v.u_max = get_double(j, "u_max", 1.0);
    } else if (profile == "manufactured") {
        v.kind = VelocityTruth::Kind::Manufactured;
        v.cutoff = get_double(j, "cutoff", 0.0);
        if (!j.contains("coefficients")) {
            throw InvalidArgument("manufactured velocity needs 'coefficients'");
        }
        try {
            v.coefficients = j.at("coefficients").get<std::vector<double>>();
        } catch (const nlohmann::json::exception&) {
            throw InvalidArgument("manufactured velocity coefficients must be numbers");
        }
    } else {
        throw InvalidArgument("unknown velocity profile '" + profile + "'");
    }
    return v;
}

nlohmann::ordered_json to_json(const VelocityTruth& v)
{
    nlohmann::ordered_json j;
    if (v.kind == VelocityTruth::Kind::Poiseuille) {
        j["profile"] = "poiseuille";
        j["u_max"] = v.u_max;
    } else {
        j["profile"] = "manufactured";
        j["cutoff"] = v.cutoff;
        j["coefficients"] = v.coefficients;
    }
    return j;
}

std::vector<NoiseLevel> default_noise_levels()
{
    std::vector<NoiseLevel> levels;
    for (int k = 0; k <= 6; ++k) {
        const double delta = std::pow(10.0, -1.0 - k / 4.0);
        levels.push_back({delta / 2.0, delta / 2.0});
    }
    return levels;
}

StudyConfig::StudyConfig() : noise_levels(default_noise_levels())
{
    velocity_recon.subsamples = 8;
}

void StudyConfig::validate() const
{
    bounds.validate();
    if (!truth_radius.admissible(bounds)) {
        throw InvalidArgument("truth radius is not admissible for the configured bounds");
    }
    if (resolutions.empty() || noise_levels.empty() || seeds.empty()) {
        throw InvalidArgument("study needs non-empty resolutions, noise levels and seeds");
    }
    for (const double h : resolutions) {
        if (!(h > 0.0) || h > 0.25) {
            throw InvalidArgument("resolution h must lie in (0, 0.25], got " + format_double(h));
        }
    }
    for (const auto& n : noise_levels) {
        NoiseSpec{n.sigma_mag, n.sigma_complex, 0}.validate();
    }
    if (mode == ParameterMode::Apriori && !(apriori_k > 0.0)) {
        throw InvalidArgument("a-priori exponent k must be positive");
    }
    if (!(venc > 0.0) || phantom_subsamples < 1) {
        throw InvalidArgument("venc and phantom subsamples must be positive");
    }
    geometry.validate();
    velocity_recon.validate();
    check_sample_count(wss_samples);
    if (lowpass < 0 || lowpass > wss_samples / 2) {
        throw InvalidArgument("low-pass cutoff must lie in [0, samples/2]");
    }
    if (table_noise_index >= static_cast<int>(noise_levels.size())) {
        throw InvalidArgument("table noise index out of range");
    }
    for (const double a : alpha_grid) {
        if (!(a >= 0.0)) {
            throw InvalidArgument("alpha grid values must be non-negative");
        }
    }
    for (const double b : beta_grid) {
        if (!(b > 0.0)) {
            throw InvalidArgument("beta grid values must be positive");
        }
    }
}

StudyConfig study_config_from_json(const nlohmann::json& j)
{
    StudyConfig cfg;
    check_keys(j,
               {"truth", "bounds", "resolutions", "noise_levels", "seeds", "parameter_mode",
                "geometry_only", "venc", "phantom_subsamples", "geometry", "velocity", "wss",
                "tables", "output_dir"},
               "study configuration");
    try {
        if (j.contains("truth")) {
            const auto& t = j.at("truth");
            check_keys(t, {"radius", "velocity"}, "truth");
            if (t.contains("radius")) {
                cfg.truth_radius = radius_from_json(t.at("radius"));
            }
            if (t.contains("velocity")) {
                cfg.velocity = velocity_truth_from_json(t.at("velocity"));
            }
        }
        if (j.contains("bounds")) {
            cfg.bounds = bounds_from_json(j.at("bounds"));
        }
        if (j.contains("resolutions")) {
            cfg.resolutions = j.at("resolutions").get<std::vector<double>>();
        }
        if (j.contains("noise_levels")) {
            cfg.noise_levels.clear();
            for (const auto& n : j.at("noise_levels")) {
                if (n.is_array() && n.size() == 2) {
                    cfg.noise_levels.push_back({n[0].get<double>(), n[1].get<double>()});
                } else {
                    check_keys(n, {"sigma_mag", "sigma_complex"}, "noise level");
                    cfg.noise_levels.push_back(
                        {get_double(n, "sigma_mag", 0.0), get_double(n, "sigma_complex", 0.0)});
                }
            }
        }
        if (j.contains("seeds")) {
            cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
        }
        if (j.contains("parameter_mode")) {
            const auto& m = j.at("parameter_mode");
            const std::string mode = m.is_string() ? m.get<std::string>() : get_string(m, "mode", "");
            if (mode == "discrepancy") {
                cfg.mode = ParameterMode::Discrepancy;
            } else if (mode == "apriori") {
                cfg.mode = ParameterMode::Apriori;
                if (m.is_object()) {
                    check_keys(m, {"mode", "k"}, "parameter mode");
                    cfg.apriori_k = get_double(m, "k", cfg.apriori_k);
                }
            } else {
                throw InvalidArgument("parameter_mode must be 'apriori' or 'discrepancy'");
            }
        }
        cfg.geometry_only = get_bool(j, "geometry_only", cfg.geometry_only);
        cfg.venc = get_double(j, "venc", cfg.venc);
        cfg.phantom_subsamples = get_int(j, "phantom_subsamples", cfg.phantom_subsamples);
        if (j.contains("geometry")) {
            cfg.geometry = geo_config_from_json(j.at("geometry"));
            if (j.at("geometry").contains("bounds") && !j.contains("bounds")) {
                cfg.bounds = cfg.geometry.bounds;
            }
        }
        if (j.contains("velocity")) {
            cfg.velocity_recon = velocity_config_from_json(j.at("velocity"));
            if (!j.at("velocity").contains("subsamples")) {
                cfg.velocity_recon.subsamples = StudyConfig{}.velocity_recon.subsamples;
            }
        }
        if (j.contains("wss")) {
            const auto& w = j.at("wss");
            check_keys(w, {"samples", "lowpass"}, "wss configuration");
            cfg.wss_samples = get_int(w, "samples", cfg.wss_samples);
            cfg.lowpass = get_int(w, "lowpass", cfg.lowpass);
        }
        if (j.contains("tables")) {
            const auto& t = j.at("tables");
            if (t.is_boolean()) {
                cfg.tables = t.get<bool>();
            } else {
                check_keys(t, {"enabled", "alpha_grid", "beta_grid", "noise_index"}, "tables");
                cfg.tables = get_bool(t, "enabled", true);
                if (t.contains("alpha_grid")) {
                    cfg.alpha_grid = t.at("alpha_grid").get<std::vector<double>>();
                }
                if (t.contains("beta_grid")) {
                    cfg.beta_grid = t.at("beta_grid").get<std::vector<double>>();
                }
                cfg.table_noise_index = get_int(t, "noise_index", cfg.table_noise_index);
            }
        }
        if (j.contains("output_dir")) {
            cfg.output_dir = j.at("output_dir").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed study configuration: ") + e.what());
    }
    cfg.geometry.bounds = cfg.bounds;
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json to_json(const StudyConfig& cfg)
{
    nlohmann::ordered_json j;
    j["truth"]["radius"] = to_json(cfg.truth_radius);
    j["truth"]["velocity"] = to_json(cfg.velocity);
    j["bounds"] = to_json(cfg.bounds);
    j["resolutions"] = cfg.resolutions;
    nlohmann::ordered_json levels = nlohmann::ordered_json::array();
    for (const auto& n : cfg.noise_levels) {
        levels.push_back({{"sigma_mag", n.sigma_mag}, {"sigma_complex", n.sigma_complex}});
    }
    j["noise_levels"] = levels;
    j["seeds"] = cfg.seeds;
    if (cfg.mode == ParameterMode::Apriori) {
        j["parameter_mode"] = {{"mode", "apriori"}, {"k", cfg.apriori_k}};
    } else {
        j["parameter_mode"] = "discrepancy";
    }
    j["geometry_only"] = cfg.geometry_only;
    j["venc"] = cfg.venc;
    j["phantom_subsamples"] = cfg.phantom_subsamples;
    j["geometry"] = to_json(cfg.geometry);
    j["velocity"] = to_json(cfg.velocity_recon);
    j["wss"] = {{"samples", cfg.wss_samples}, {"lowpass", cfg.lowpass}};
    j["tables"] = {{"enabled", cfg.tables},
                   {"alpha_grid", cfg.alpha_grid},
                   {"beta_grid", cfg.beta_grid},
                   {"noise_index", cfg.table_noise_index}};
    return j;
}

// --- cells ------------------------------------------------------------------------

CellRecord run_cell(const StudyConfig& cfg, const SyntheticTruth& truth, double h, int noise_index,
                    std::uint64_t seed)
{
    CellRecord rec;
    rec.h = h;
    rec.noise_index = noise_index;
    rec.noise = cfg.noise_levels.at(noise_index);
    rec.seed = seed;
    for (double* f : {&rec.delta, &rec.eps, &rec.delta_r, &rec.delta_u, &rec.alpha, &rec.beta,
                      &rec.geometry_residual, &rec.velocity_residual, &rec.err_r_l2,
                      &rec.err_r_h2, &rec.err_v, &rec.err_tau, &rec.tau_mean}) {
        *f = kNaN;
    }
    try {
        const GridSpec spec = GridSpec::covering_fov(h);
        const NoiseSpec noise{rec.noise.sigma_mag, rec.noise.sigma_complex, seed};
        const GeometryOutcome geo = reconstruct_geometry(cfg, truth, spec, noise, std::nullopt);
        rec.delta = geo.delta;
        rec.alpha = geo.result.alpha;
        rec.alpha_unreachable = geo.result.discrepancy_unreachable;
        rec.gn_iterations = geo.result.iterations;
        rec.geometry_residual = geo.result.residual_norm;
        rec.err_r_l2 = radius_error(geo.result.radius, truth.radius(), 0);
        rec.err_r_h2 = radius_error(geo.result.radius, truth.radius(), 2);
        rec.delta_r = rec.err_r_h2;
        if (cfg.geometry_only) {
            return rec;
        }

        const VelocityData vd = make_velocity_data(cfg, truth, spec, noise);
        rec.eps = vd.eps;
        const DiskTransform rec_transform(geo.result.radius, cfg.bounds);
        const VelocitySolver solver = make_velocity_solver(vd.u_eps, rec_transform, cfg.velocity_recon);
        const VelocityCoefficients v_ref =
            project_onto_basis(solver.basis(), [&](Vec2 x) { return truth.reference(x); });
        rec.delta_u = realized_delta_u(solver, v_ref, vd.u_eps);
        const VelocityReconResult vel = cfg.mode == ParameterMode::Apriori
                                            ? solver.solve(apriori_beta(rec.delta_u))
                                            : solver.choose_beta_discrepancy(rec.delta_u);
        rec.beta = vel.beta;
        rec.beta_unreachable = vel.discrepancy_unreachable;
        rec.velocity_residual = vel.residual_norm;
        rec.err_v = proxy_distance(vel.velocity, v_ref);

        const WssProfile tau =
            wall_shear_stress(geo.result.radius, vel.velocity, cfg.bounds, cfg.wss_samples);
        rec.tau_mean = mean_wss(tau);
        rec.err_tau = wss_error(lowpass_filter(tau, cfg.lowpass), truth.wss(cfg.wss_samples));
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.reason = e.what();
    }
    return rec;
}

// --- fitting ----------------------------------------------------------------------

SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size() || x.size() < 3) {
        throw InvalidArgument("slope fit needs at least three (x, y) pairs");
    }
    const std::size_t n = x.size();
    std::vector<double> lx(n), ly(n);
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0)) {
            throw InvalidArgument("log-log fit needs positive data");
        }
        lx[i] = std::log(x[i]);
        ly[i] = std::log(y[i]);
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) {
        throw InvalidArgument("slope fit needs at least two distinct noise values");
    }
    SlopeFit fit;
    fit.points = static_cast<int>(n);
    fit.slope = sxy / sxx;
    double ssr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ly[i] - my - fit.slope * (lx[i] - mx);
        ssr += r * r;
    }
    const double se = std::sqrt(ssr / static_cast<double>(n - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(n - 2));
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    fit.ci_low = fit.slope - t * se;
    fit.ci_high = fit.slope + t * se;
    return fit;
}

int flag_minimum(const std::vector<double>& errors, const std::vector<double>& parameters)
{
    int best = -1;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        if (!std::isfinite(errors[i])) {
            continue;
        }
        if (best < 0 || errors[i] < errors[best] ||
            (errors[i] == errors[best] && parameters[i] > parameters[best])) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

namespace {

struct QuantitySpec {
    const char* name;
    const char* driver;
    double CellRecord::*error;
    double CellRecord::*noise;
    double reference_norm;  ///< for the 50% relative-error guard
};

void add_slopes(const StudyConfig& cfg, const std::vector<CellRecord>& cells,
                const QuantitySpec& q, const std::string& group, std::optional<double> h,
                std::vector<SlopeFit>& out)
{
    std::vector<const CellRecord*> pts;
    for (const auto& c : cells) {
        if (h && c.h != *h) {
            continue;
        }
        const double e = c.*q.error, d = c.*q.noise;
        if (c.ok && std::isfinite(e) && e > 0.0 && std::isfinite(d) && d > 0.0) {
            pts.push_back(&c);
        }
    }
    std::vector<int> levels;
    for (const auto* c : pts) {
        if (std::find(levels.begin(), levels.end(), c->noise_index) == levels.end()) {
            levels.push_back(c->noise_index);
        }
    }
    if (levels.size() < 3) {
        return;
    }
    // noisiest level by magnitude sigma, then by index
    int noisiest = levels.front();
    for (const int l : levels) {
        const auto& a = cfg.noise_levels[l];
        const auto& b = cfg.noise_levels[noisiest];
        if (std::tie(a.sigma_mag, a.sigma_complex) > std::tie(b.sigma_mag, b.sigma_complex)) {
            noisiest = l;
        }
    }
    double mean_err = 0.0;
    int count = 0;
    for (const auto* c : pts) {
        if (c->noise_index == noisiest) {
            mean_err += c->*q.error;
            ++count;
        }
    }
    mean_err /= count;
    const bool exclude = mean_err > 0.5 * q.reference_norm && levels.size() > 3;
    std::vector<double> x, y;
    for (const auto* c : pts) {
        if (exclude && c->noise_index == noisiest) {
            continue;
        }
        x.push_back(c->*q.noise);
        y.push_back(c->*q.error);
    }
    try {
        SlopeFit fit = fit_loglog(x, y);
        fit.quantity = q.name;
        fit.driver = q.driver;
        fit.group = group;
        fit.excluded_noisiest = exclude;
        out.push_back(fit);
    } catch (const InvalidArgument&) {
        // degenerate noise measures: no slope for this group
    }
}

ParameterTable empty_table(const std::string& name, const std::vector<double>& params,
                           const std::vector<double>& resolutions)
{
    ParameterTable t;
    t.name = name;
    t.parameters = params;
    t.resolutions = resolutions;
    t.errors.assign(resolutions.size(), std::vector<double>(params.size(), kNaN));
    t.best.assign(resolutions.size(), -1);
    return t;
}

std::vector<ParameterTable> run_tables(const StudyConfig& cfg, const SyntheticTruth& truth)
{
    const int level = cfg.table_noise_index >= 0 ? cfg.table_noise_index
                                                 : static_cast<int>(cfg.noise_levels.size()) / 2;
    const NoiseLevel nl = cfg.noise_levels[level];
    const NoiseSpec noise{nl.sigma_mag, nl.sigma_complex, cfg.seeds.front()};
    const double r_norm = std::sqrt(sobolev_norm_sq(truth.radius(), 2));

    ParameterTable geo = empty_table("geometry", cfg.alpha_grid, cfg.resolutions);
    ParameterTable vel = empty_table("velocity", cfg.beta_grid, cfg.resolutions);
    ParameterTable wss = empty_table("wss", {kNaN, kNaN}, cfg.resolutions);

    for (std::size_t row = 0; row < cfg.resolutions.size(); ++row) {
        const GridSpec spec = GridSpec::covering_fov(cfg.resolutions[row]);
        std::vector<std::optional<GeoIdentResult>> fits(cfg.alpha_grid.size());
        for (std::size_t col = 0; col < cfg.alpha_grid.size(); ++col) {
            try {
                fits[col] = reconstruct_geometry(cfg, truth, spec, noise, cfg.alpha_grid[col]).result;
                geo.errors[row][col] = radius_error(fits[col]->radius, truth.radius(), 2) / r_norm;
            } catch (const std::exception&) {
                // recorded as NaN
            }
        }
        geo.best[row] = flag_minimum(geo.errors[row], cfg.alpha_grid);
        if (cfg.geometry_only || geo.best[row] < 0) {
            continue;
        }
        try {
            const GeoIdentResult& g = *fits[geo.best[row]];
            const VelocityData vd = make_velocity_data(cfg, truth, spec, noise);
            const DiskTransform rec_transform(g.radius, cfg.bounds);
            const VelocitySolver solver =
                make_velocity_solver(vd.u_eps, rec_transform, cfg.velocity_recon);
            const VelocityCoefficients v_ref =
                project_onto_basis(solver.basis(), [&](Vec2 x) { return truth.reference(x); });
            const double v_norm = std::sqrt(proxy_h2_norm_sq(v_ref));
            std::vector<std::optional<VelocityCoefficients>> sols(cfg.beta_grid.size());
            for (std::size_t col = 0; col < cfg.beta_grid.size(); ++col) {
                try {
                    sols[col] = solver.solve(cfg.beta_grid[col]).velocity;
                    vel.errors[row][col] = proxy_distance(*sols[col], v_ref) / v_norm;
                } catch (const std::exception&) {
                    // recorded as NaN
                }
            }
            vel.best[row] = flag_minimum(vel.errors[row], cfg.beta_grid);
            if (vel.best[row] >= 0) {
                const WssProfile tau =
                    wall_shear_stress(g.radius, *sols[vel.best[row]], cfg.bounds, cfg.wss_samples);
                wss.errors[row] = {cfg.alpha_grid[geo.best[row]], cfg.beta_grid[vel.best[row]]};
                wss.errors[row].push_back(
                    wss_error(lowpass_filter(tau, cfg.lowpass), truth.wss(cfg.wss_samples)));
                wss.best[row] = 2;
            }
        } catch (const std::exception&) {
            // velocity row stays NaN
        }
    }
    std::vector<ParameterTable> out{geo};
    if (!cfg.geometry_only) {
        out.push_back(vel);
        out.push_back(wss);
    }
    return out;
}

} // namespace

RateReport run_rate_study(const StudyConfig& cfg, int threads)
{
    cfg.validate();
    const SyntheticTruth truth(cfg.truth_radius, cfg.velocity, cfg.bounds);
    if (!cfg.geometry_only && truth.max_speed() >= 0.95 * 0.5 * cfg.venc) {
        throw InvalidArgument("venc too small for the truth velocity: phase wrapping");
    }

    struct Job {
        double h;
        int level;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (const double h : cfg.resolutions) {
        for (int l = 0; l < static_cast<int>(cfg.noise_levels.size()); ++l) {
            for (const auto seed : cfg.seeds) {
                jobs.push_back({h, l, seed});
            }
        }
    }

    RateReport report;
    report.cells.resize(jobs.size());
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            report.cells[i] = run_cell(cfg, truth, jobs[i].h, jobs[i].level, jobs[i].seed);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < jobs.size(); i = next++) {
                    report.cells[i] = run_cell(cfg, truth, jobs[i].h, jobs[i].level, jobs[i].seed);
                }
            });
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    const double r_l2 = std::sqrt(sobolev_norm_sq(truth.radius(), 0));
    const double r_h2 = std::sqrt(sobolev_norm_sq(truth.radius(), 2));
    std::vector<QuantitySpec> quantities{
        {"R_L2", "delta", &CellRecord::err_r_l2, &CellRecord::delta, r_l2},
        {"R_H2", "delta", &CellRecord::err_r_h2, &CellRecord::delta, r_h2},
    };
    if (!cfg.geometry_only) {
        // velocity errors are absolute; the guard uses the proxy norm of a unit profile
        quantities.push_back({"v_proxyH2", "delta_U", &CellRecord::err_v, &CellRecord::delta_u,
                              std::numeric_limits<double>::infinity()});
        quantities.push_back(
            {"tau_L2", "delta_U", &CellRecord::err_tau, &CellRecord::delta_u, 1.0});
    }
    for (const auto& q : quantities) {
        for (const double h : cfg.resolutions) {
            add_slopes(cfg, report.cells, q, group_label(h), h, report.slopes);
        }
        add_slopes(cfg, report.cells, q, "all", std::nullopt, report.slopes);
    }
    if (cfg.tables) {
        report.tables = run_tables(cfg, truth);
    }
    return report;
}

// --- output -----------------------------------------------------------------------

namespace {

std::string csv_number(double v)
{
    return format_double(v);
}

nlohmann::ordered_json json_number(double v)
{
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

std::string cells_csv(const std::vector<CellRecord>& cells)
{
    std::ostringstream os;
    os << "h,noise_index,sigma_mag,sigma_complex,seed,ok,delta,eps,delta_R,delta_U,alpha,"
          "alpha_unreachable,beta,beta_unreachable,gn_iterations,geometry_residual,"
          "velocity_residual,err_R_L2,err_R_H2,err_v_proxyH2,err_tau_L2,tau_mean,reason\n";
    for (const auto& c : cells) {
        std::string reason = c.reason;
        std::replace(reason.begin(), reason.end(), ',', ';');
        std::replace(reason.begin(), reason.end(), '\n', ' ');
        os << csv_number(c.h) << ',' << c.noise_index << ',' << csv_number(c.noise.sigma_mag) << ','
           << csv_number(c.noise.sigma_complex) << ',' << c.seed << ',' << (c.ok ? 1 : 0) << ','
           << csv_number(c.delta) << ',' << csv_number(c.eps) << ',' << csv_number(c.delta_r) << ','
           << csv_number(c.delta_u) << ',' << csv_number(c.alpha) << ','
           << (c.alpha_unreachable ? 1 : 0) << ',' << csv_number(c.beta) << ','
           << (c.beta_unreachable ? 1 : 0) << ',' << c.gn_iterations << ','
           << csv_number(c.geometry_residual) << ',' << csv_number(c.velocity_residual) << ','
           << csv_number(c.err_r_l2) << ',' << csv_number(c.err_r_h2) << ','
           << csv_number(c.err_v) << ',' << csv_number(c.err_tau) << ','
           << csv_number(c.tau_mean) << ',' << reason << '\n';
    }
    return os.str();
}

std::string table_csv(const ParameterTable& t)
{
    std::ostringstream os;
    if (t.name == "wss") {
        os << "h,alpha,beta,tau_L2\n";
        for (std::size_t r = 0; r < t.resolutions.size(); ++r) {
            os << csv_number(t.resolutions[r]);
            for (const double v : t.errors[r]) {
                os << ',' << csv_number(v);
            }
            os << '\n';
        }
        return os.str();
    }
    os << (t.name == "geometry" ? "h\\alpha" : "h\\beta");
    for (const double p : t.parameters) {
        os << ',' << csv_number(p);
    }
    os << '\n';
    for (std::size_t r = 0; r < t.resolutions.size(); ++r) {
        os << csv_number(t.resolutions[r]);
        for (std::size_t c = 0; c < t.parameters.size(); ++c) {
            os << ',' << csv_number(t.errors[r][c]) << (t.best[r] == static_cast<int>(c) ? "*" : "");
        }
        os << '\n';
    }
    return os.str();
}

} // namespace

void write_rate_report(const StudyConfig& cfg, const RateReport& report)
{
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) {
        throw IoFailure("cannot create output directory '" + cfg.output_dir.string() +
                        "': " + ec.message());
    }
    write_text_file(cfg.output_dir / "cells.csv", cells_csv(report.cells));

    std::ostringstream slopes;
    slopes << "quantity,driver,group,points,slope,ci_low,ci_high,excluded_noisiest\n";
    for (const auto& s : report.slopes) {
        slopes << s.quantity << ',' << s.driver << ',' << s.group << ',' << s.points << ','
               << csv_number(s.slope) << ',' << csv_number(s.ci_low) << ','
               << csv_number(s.ci_high) << ',' << (s.excluded_noisiest ? 1 : 0) << '\n';
    }
    write_text_file(cfg.output_dir / "slopes.csv", slopes.str());
    for (const auto& t : report.tables) {
        write_text_file(cfg.output_dir / ("table_" + t.name + ".csv"), table_csv(t));
    }

    nlohmann::ordered_json j;
    j["config"] = to_json(cfg);
    nlohmann::ordered_json cells = nlohmann::ordered_json::array();
    for (const auto& c : report.cells) {
        nlohmann::ordered_json r;
        r["h"] = c.h;
        r["noise_index"] = c.noise_index;
        r["seed"] = c.seed;
        r["ok"] = c.ok;
        if (!c.ok) {
            r["reason"] = c.reason;
        }
        r["delta"] = json_number(c.delta);
        r["delta_R_measured"] = json_number(c.delta_r);
        r["eps"] = json_number(c.eps);
        r["delta_U"] = json_number(c.delta_u);
        r["errors"] = {{"R_L2", json_number(c.err_r_l2)},
                       {"R_H2", json_number(c.err_r_h2)},
                       {"v_proxyH2", json_number(c.err_v)},
                       {"tau_L2", json_number(c.err_tau)}};
        r["chosen_alpha"] = json_number(c.alpha);
        r["alpha_unreachable"] = c.alpha_unreachable;
        r["chosen_beta"] = json_number(c.beta);
        r["beta_unreachable"] = c.beta_unreachable;
        cells.push_back(r);
    }
    j["cells"] = cells;
    nlohmann::ordered_json slopes_json = nlohmann::ordered_json::array();
    for (const auto& s : report.slopes) {
        slopes_json.push_back({{"quantity", s.quantity},
                               {"driver", s.driver},
                               {"group", s.group},
                               {"points", s.points},
                               {"slope", s.slope},
                               {"ci95", {s.ci_low, s.ci_high}},
                               {"excluded_noisiest", s.excluded_noisiest}});
    }
    j["slopes"] = slopes_json;
    j["theory"] = {{"R_L2", 1.0},
                   {"R_H2", 1.0 - 2.0 / cfg.apriori_k},
                   {"source_exponent_mu", kSourceExponent},
                   {"v_rate_exponent", 2.0 * kSourceExponent / (2.0 * kSourceExponent + 1.0)}};
    write_json_file(cfg.output_dir / "report.json", j);
}

} // namespace flowrecon
