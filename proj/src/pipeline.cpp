#include "flowrecon/pipeline.hpp"

#include "flowrecon/config.hpp"
#include "flowrecon/error.hpp"
#include "flowrecon/grid.hpp"
#include "flowrecon/io.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace flowrecon {

namespace {

void ensure_directory(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoFailure("cannot create directory '" + dir.string() + "': " + ec.message());
    }
}

nlohmann::ordered_json to_json(Vec2 p)
{
    return nlohmann::ordered_json::array({p.x, p.y});
}

Vec2 vec2_from_json(const nlohmann::json& j, const char* what)
{
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw InvalidArgument(std::string(what) + " must be a two-element number array");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

/// Copy of `j` without the listed keys.
nlohmann::json without(const nlohmann::json& j, std::initializer_list<const char*> keys)
{
    nlohmann::json out = j.is_object() ? j : nlohmann::json::object();
    for (const char* k : keys) {
        out.erase(k);
    }
    return out;
}

const char* to_string(GeoIdentStatus s)
{
    return s == GeoIdentStatus::Converged ? "converged" : "max_iterations";
}

const char* to_string(BetaRule r)
{
    switch (r) {
    case BetaRule::Discrepancy:
        return "discrepancy";
    case BetaRule::Apriori:
        return "apriori";
    case BetaRule::Fixed:
        return "fixed";
    }
    return "fixed";
}

template <typename Fn>
auto run_stage(const char* stage, Fn&& fn)
{
    try {
        return fn();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e, exit_code_for(e));
    }
}

} // namespace

// --- phantom ----------------------------------------------------------------------

void PhantomConfig::validate() const
{
    bounds.validate();
    if (!radius.admissible(bounds)) {
        throw InvalidArgument("phantom radius is not admissible for the configured bounds");
    }
    if (!(h > 0.0) || h > 0.25) {
        throw InvalidArgument("phantom resolution h must lie in (0, 0.25]");
    }
    if (!(venc > 0.0) || subsamples < 1) {
        throw InvalidArgument("venc and subsamples must be positive");
    }
    noise.validate();
}

PhantomConfig phantom_config_from_json(const nlohmann::json& j)
{
    PhantomConfig cfg;
    check_keys(j, {"radius", "velocity", "bounds", "h", "venc", "noise", "subsamples"},
               "phantom configuration");
    if (j.contains("radius")) {
        cfg.radius = radius_from_json(j.at("radius"));
    }
    if (j.contains("velocity")) {
        cfg.velocity = velocity_truth_from_json(j.at("velocity"));
    }
    if (j.contains("bounds")) {
        cfg.bounds = bounds_from_json(j.at("bounds"));
    }
    cfg.h = get_double(j, "h", cfg.h);
    cfg.venc = get_double(j, "venc", cfg.venc);
    if (j.contains("noise")) {
        cfg.noise = noise_from_json(j.at("noise"));
    }
    cfg.subsamples = get_int(j, "subsamples", cfg.subsamples);
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json to_json(const PhantomConfig& cfg)
{
    nlohmann::ordered_json j;
    j["radius"] = to_json(cfg.radius);
    j["velocity"] = to_json(cfg.velocity);
    j["bounds"] = to_json(cfg.bounds);
    j["h"] = cfg.h;
    j["venc"] = cfg.venc;
    j["noise"] = to_json(cfg.noise);
    j["subsamples"] = cfg.subsamples;
    return j;
}

NoiseLevels read_noise_levels(const std::filesystem::path& path)
{
    const nlohmann::json j = read_json_file(path);
    NoiseLevels n;
    try {
        n.delta = j.at("delta").get<double>();
        n.eps = j.at("eps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(path.string() + ": malformed noise file: " + e.what());
    }
    if (!(n.delta >= 0.0) || !(n.eps >= 0.0)) {
        throw IoFailure(path.string() + ": noise levels must be non-negative");
    }
    return n;
}

void write_noise_levels(const std::filesystem::path& path, const NoiseLevels& n)
{
    nlohmann::ordered_json j;
    j["delta"] = n.delta;
    j["eps"] = n.eps;
    write_json_file(path, j);
}

void cmd_phantom(const PhantomConfig& cfg, const std::filesystem::path& out)
{
    cfg.validate();
    const SyntheticTruth truth(cfg.radius, cfg.velocity, cfg.bounds);
    const GridSpec spec = GridSpec::covering_fov(cfg.h);
    const VelocityField field = [&](Vec2 y) { return truth.physical(y); };

    const VoxelGrid clean = rasterize_characteristic(cfg.radius, spec, cfg.subsamples);
    const NoisyGrid magnitude = add_magnitude_noise(clean, cfg.noise);
    const PhaseContrastData pc =
        synth_phase_contrast(field, cfg.radius, spec, cfg.venc, cfg.noise, cfg.subsamples);
    const VoxelGrid velocity = retrieve_velocity(pc);

    // eps against the exact voxel means, over voxels meeting the domain
    const VoxelMeans exact = sample_voxel_means(field, cfg.radius, spec, cfg.subsamples);
    double eps_sq = 0.0;
    for (std::size_t i = 0; i < spec.size(); ++i) {
        if (exact.fraction.values[i] > 0.0) {
            const double d = velocity.values[i] - exact.mean.values[i];
            eps_sq += exact.fraction.values[i] * spec.h * spec.h * d * d;
        }
    }

    ensure_directory(out);
    write_grid(out / files::kMagnitude, magnitude.grid, GridKind::Magnitude);
    write_grid(out / files::kPhaseContrast, pc);
    write_grid(out / files::kVelocity, velocity, GridKind::Velocity);

    nlohmann::ordered_json t = to_json(cfg);
    const WssProfile tau = truth.wss(256);
    t["wss_mean"] = mean_wss(tau);
    write_json_file(out / files::kTruth, t);
    write_noise_levels(out / files::kNoise,
                       {cfg.noise.sigma_mag > 0.0 ? magnitude.delta : 0.0, std::sqrt(eps_sq)});
}

// --- ingest -----------------------------------------------------------------------

double estimate_velocity_noise(const PhaseContrastData& data, const VoxelGrid& normalized)
{
    if (!(data.spec == normalized.spec)) {
        throw InvalidArgument("complex and magnitude grids are not conformal");
    }
    double sum_sq = 0.0, interior = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < data.values.size(); ++i) {
        if (normalized.values[i] < kExteriorThreshold) {
            sum_sq += std::norm(data.values[i]);
            count += 2;
        }
        interior += normalized.values[i];
    }
    if (count < 4) {
        throw InvalidArgument("exterior mask is empty; cannot estimate the velocity noise");
    }
    const double sigma = std::sqrt(sum_sq / static_cast<double>(count));
    const double area = interior * data.spec.h * data.spec.h;
    return data.venc * sigma / kTwoPi * std::sqrt(area);
}

void cmd_ingest(const std::filesystem::path& magnitude, const std::filesystem::path& complex,
                const std::filesystem::path& out)
{
    const VoxelGrid raw = read_real_grid(magnitude);
    const PhaseContrastData pc = read_complex_grid(complex);
    const VoxelGrid normalized = normalize_magnitude(raw);
    const VoxelGrid velocity = retrieve_velocity(pc);

    std::vector<std::uint8_t> mask(normalized.values.size());
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = normalized.values[i] < kExteriorThreshold ? 1 : 0;
    }
    NoiseLevels n;
    n.delta = estimate_noise_level(normalized, mask);
    n.eps = estimate_velocity_noise(pc, normalized);

    ensure_directory(out);
    write_grid(out / files::kMagnitude, normalized, GridKind::Magnitude);
    write_grid(out / files::kVelocity, velocity, GridKind::Velocity);
    write_noise_levels(out / files::kNoise, n);
}

// --- stage configuration ----------------------------------------------------------

GeometryStageConfig geometry_stage_from_json(const nlohmann::json& j)
{
    GeometryStageConfig cfg;
    if (j.is_null()) {
        return cfg;
    }
    if (!j.is_object()) {
        throw InvalidArgument("geometry configuration must be a JSON object");
    }
    cfg.solver = geo_config_from_json(without(j, {"alpha", "center"}));
    if (j.contains("alpha")) {
        const auto& a = j.at("alpha");
        if (a.is_string() && a == "discrepancy") {
            cfg.alpha.reset();
        } else if (a.is_number()) {
            cfg.alpha = a.get<double>();
            if (!(*cfg.alpha >= 0.0)) {
                throw InvalidArgument("alpha must be non-negative");
            }
        } else {
            throw InvalidArgument("alpha must be a number or \"discrepancy\"");
        }
    }
    if (j.contains("center")) {
        const auto& c = j.at("center");
        if (c == "barycenter") {
            cfg.center = CenterMode::Barycenter;
        } else if (c == "origin") {
            cfg.center = CenterMode::Origin;
        } else {
            throw InvalidArgument("center must be \"barycenter\" or \"origin\"");
        }
    }
    return cfg;
}

nlohmann::ordered_json to_json(const GeometryStageConfig& cfg)
{
    nlohmann::ordered_json j = to_json(cfg.solver);
    j["alpha"] = cfg.alpha ? nlohmann::ordered_json(*cfg.alpha) : nlohmann::ordered_json("discrepancy");
    j["center"] = cfg.center == CenterMode::Barycenter ? "barycenter" : "origin";
    return j;
}

VelocityStageConfig velocity_stage_from_json(const nlohmann::json& j)
{
    VelocityStageConfig cfg;
    if (j.is_null()) {
        return cfg;
    }
    if (!j.is_object()) {
        throw InvalidArgument("velocity configuration must be a JSON object");
    }
    cfg.solver = velocity_config_from_json(without(j, {"beta", "norm_bounds", "delta_u"}));
    if (j.contains("beta")) {
        const auto& b = j.at("beta");
        if (b == "discrepancy") {
            cfg.rule = BetaRule::Discrepancy;
        } else if (b == "apriori") {
            cfg.rule = BetaRule::Apriori;
        } else if (b.is_number()) {
            cfg.rule = BetaRule::Fixed;
            cfg.beta = b.get<double>();
            if (!(cfg.beta > 0.0)) {
                throw InvalidArgument("beta must be positive");
            }
        } else {
            throw InvalidArgument("beta must be a number, \"discrepancy\" or \"apriori\"");
        }
    }
    if (j.contains("norm_bounds")) {
        cfg.norm_bounds = norm_bounds_from_json(j.at("norm_bounds"));
    }
    if (j.contains("delta_u") && !j.at("delta_u").is_null()) {
        cfg.delta_u = get_double(j, "delta_u", 0.0);
        if (!(*cfg.delta_u > 0.0)) {
            throw InvalidArgument("delta_u must be positive");
        }
    }
    return cfg;
}

nlohmann::ordered_json to_json(const VelocityStageConfig& cfg)
{
    nlohmann::ordered_json j = to_json(cfg.solver);
    if (cfg.rule == BetaRule::Fixed) {
        j["beta"] = cfg.beta;
    } else {
        j["beta"] = to_string(cfg.rule);
    }
    j["norm_bounds"] = {{"C", cfg.norm_bounds.c}, {"U3", cfg.norm_bounds.u3}};
    j["delta_u"] = cfg.delta_u ? nlohmann::ordered_json(*cfg.delta_u) : nlohmann::ordered_json();
    return j;
}

WssStageConfig wss_stage_from_json(const nlohmann::json& j)
{
    WssStageConfig cfg;
    if (j.is_null()) {
        return cfg;
    }
    check_keys(j, {"samples", "lowpass", "viscosity"}, "wss configuration");
    cfg.samples = get_int(j, "samples", cfg.samples);
    cfg.lowpass = get_int(j, "lowpass", cfg.lowpass);
    cfg.viscosity = get_double(j, "viscosity", cfg.viscosity);
    check_sample_count(cfg.samples);
    if (cfg.lowpass < 0 || cfg.lowpass > cfg.samples / 2) {
        throw InvalidArgument("low-pass cutoff must lie in [0, samples/2]");
    }
    if (!(cfg.viscosity > 0.0)) {
        throw InvalidArgument("viscosity must be positive");
    }
    return cfg;
}

nlohmann::ordered_json to_json(const WssStageConfig& cfg)
{
    nlohmann::ordered_json j;
    j["samples"] = cfg.samples;
    j["lowpass"] = cfg.lowpass;
    j["viscosity"] = cfg.viscosity;
    return j;
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& j)
{
    PipelineConfig cfg;
    if (j.is_null()) {
        return cfg;
    }
    check_keys(j, {"geometry", "velocity", "wss"}, "pipeline configuration");
    cfg.geometry = geometry_stage_from_json(j.value("geometry", nlohmann::json()));
    cfg.velocity = velocity_stage_from_json(j.value("velocity", nlohmann::json()));
    cfg.wss = wss_stage_from_json(j.value("wss", nlohmann::json()));
    return cfg;
}

// --- stages -----------------------------------------------------------------------

GeometryArtifact run_geometry_stage(const GeometryStageConfig& cfg,
                                    const std::filesystem::path& magnitude,
                                    const std::filesystem::path& noise,
                                    const std::filesystem::path& out)
{
    const VoxelGrid m = read_real_grid(magnitude);
    const NoiseLevels n = read_noise_levels(noise);

    GeoIdentConfig solver = cfg.solver;
    solver.center = cfg.center == CenterMode::Barycenter ? barycenter(m) : Vec2{};
    const RadiusFunction init = initial_radius(m, solver);

    GeometryArtifact art;
    art.bounds = solver.bounds;
    art.delta = n.delta;
    art.delta_r = std::sqrt(n.delta);
    if (cfg.alpha) {
        art.result = gauss_newton_minimize(m, *cfg.alpha, solver, init);
    } else {
        if (!(n.delta > 0.0)) {
            throw InvalidArgument("discrepancy principle needs delta > 0; set a fixed alpha");
        }
        art.result = choose_alpha_discrepancy(m, n.delta, solver, init);
    }

    nlohmann::ordered_json j;
    j["radius"] = to_json(art.result.radius);
    j["bounds"] = to_json(art.bounds);
    j["center"] = to_json(art.result.center);
    j["alpha"] = art.result.alpha;
    j["alpha_rule"] = cfg.alpha ? "fixed" : "discrepancy";
    j["gamma"] = solver.gamma_for(m.spec);
    j["delta"] = art.delta;
    j["delta_r"] = art.delta_r;
    j["residual_norm"] = art.result.residual_norm;
    j["iterations"] = art.result.iterations;
    j["status"] = to_string(art.result.status);
    j["stationarity"] = art.result.stationarity;
    j["discrepancy_unreachable"] = art.result.discrepancy_unreachable;
    ensure_directory(out.parent_path().empty() ? "." : out.parent_path());
    write_json_file(out, j);
    return art;
}

GeometryArtifact read_geometry_artifact(const std::filesystem::path& path)
{
    const nlohmann::json j = read_json_file(path);
    GeometryArtifact art;
    try {
        art.result.radius = radius_from_json(j.at("radius"));
        art.bounds = bounds_from_json(j.at("bounds"));
        art.result.center = vec2_from_json(j.at("center"), "center");
        art.result.alpha = j.at("alpha").get<double>();
        art.result.residual_norm = j.at("residual_norm").get<double>();
        art.delta = j.at("delta").get<double>();
        art.delta_r = j.at("delta_r").get<double>();
        art.result.discrepancy_unreachable = j.value("discrepancy_unreachable", false);
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(path.string() + ": malformed geometry file: " + e.what());
    } catch (const InvalidArgument& e) {
        throw IoFailure(path.string() + ": " + e.what());
    }
    return art;
}

VelocityArtifact run_velocity_stage(const VelocityStageConfig& cfg,
                                    const std::filesystem::path& velocity,
                                    const std::filesystem::path& geometry,
                                    const std::filesystem::path& noise,
                                    const std::filesystem::path& out)
{
    const VoxelGrid u = read_real_grid(velocity);
    const GeometryArtifact geo = read_geometry_artifact(geometry);
    const NoiseLevels n = read_noise_levels(noise);

    VelocityArtifact art;
    art.center = geo.result.center;
    art.delta_u = cfg.delta_u ? *cfg.delta_u : compute_delta_u(geo.delta_r, n.eps, cfg.norm_bounds);
    const DiskTransform transform(geo.result.radius, geo.bounds);
    const VelocitySolver solver = make_velocity_solver(u, transform, cfg.solver, art.center);
    switch (cfg.rule) {
    case BetaRule::Fixed:
        art.result = solver.solve(cfg.beta);
        break;
    case BetaRule::Apriori:
        if (!(art.delta_u > 0.0)) {
            throw InvalidArgument("a-priori beta needs delta_U > 0; set a fixed beta");
        }
        art.result = solver.solve(apriori_beta(art.delta_u));
        break;
    case BetaRule::Discrepancy:
        if (!(art.delta_u > 0.0)) {
            throw InvalidArgument("discrepancy principle needs delta_U > 0; set a fixed beta");
        }
        art.result = solver.choose_beta_discrepancy(art.delta_u);
        break;
    }

    nlohmann::ordered_json j;
    j["velocity"] = to_json(art.result.velocity);
    j["center"] = to_json(art.center);
    j["beta"] = art.result.beta;
    j["beta_rule"] = to_string(cfg.rule);
    j["delta_u"] = art.delta_u;
    j["residual_norm"] = art.result.residual_norm;
    j["normal_equation_residual"] = art.result.normal_equation_residual;
    j["discrepancy_unreachable"] = art.result.discrepancy_unreachable;
    j["retained_voxels"] = solver.retained_voxels();
    ensure_directory(out.parent_path().empty() ? "." : out.parent_path());
    write_json_file(out, j);
    return art;
}

VelocityArtifact read_velocity_artifact(const std::filesystem::path& path)
{
    const nlohmann::json j = read_json_file(path);
    VelocityArtifact art;
    try {
        art.result.velocity = velocity_from_json(j.at("velocity"));
        art.center = vec2_from_json(j.at("center"), "center");
        art.result.beta = j.at("beta").get<double>();
        art.result.residual_norm = j.at("residual_norm").get<double>();
        art.delta_u = j.at("delta_u").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(path.string() + ": malformed velocity file: " + e.what());
    } catch (const InvalidArgument& e) {
        throw IoFailure(path.string() + ": " + e.what());
    }
    return art;
}

WssArtifact run_wss_stage(const WssStageConfig& cfg, const std::filesystem::path& geometry,
                          const std::filesystem::path& velocity, const std::filesystem::path& out)
{
    const GeometryArtifact geo = read_geometry_artifact(geometry);
    const VelocityArtifact vel = read_velocity_artifact(velocity);

    WssArtifact art;
    art.tau = wall_shear_stress(geo.result.radius, vel.result.velocity, geo.bounds, cfg.samples,
                                cfg.viscosity);
    art.filtered = lowpass_filter(art.tau, cfg.lowpass);
    art.mean = mean_wss(art.tau);
    double diff = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < art.tau.size(); ++i) {
        const double d = art.tau.values[i] - art.filtered.values[i];
        diff += d * d;
        norm += art.tau.values[i] * art.tau.values[i];
    }
    art.lowpass_residual = norm > 0.0 ? std::sqrt(diff / norm) : 0.0;

    nlohmann::ordered_json j = to_json(cfg);
    j["mean"] = art.mean;
    j["lowpass_residual"] = art.lowpass_residual;
    j["angles"] = art.tau.angles;
    j["tau"] = art.tau.values;
    j["tau_lowpass"] = art.filtered.values;
    ensure_directory(out);
    write_json_file(out / files::kWss, j);

    std::ostringstream csv;
    csv << "phi,tau,tau_lowpass\n";
    for (std::size_t i = 0; i < art.tau.size(); ++i) {
        csv << format_double(art.tau.angles[i]) << ',' << format_double(art.tau.values[i]) << ','
            << format_double(art.filtered.values[i]) << '\n';
    }
    write_text_file(out / files::kWssTable, csv.str());
    return art;
}

// --- pipeline ---------------------------------------------------------------------

StageError::StageError(std::string stage, const std::exception& cause, int exit_code)
    : std::runtime_error("[" + stage + "] " + cause.what()), stage_(std::move(stage)),
      exit_code_(exit_code)
{
}

int exit_code_for(const std::exception& e)
{
    if (const auto* s = dynamic_cast<const StageError*>(&e)) {
        return s->exit_code();
    }
    if (dynamic_cast<const InvalidArgument*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const NumericalFailure*>(&e)) {
        return 3;
    }
    if (dynamic_cast<const IoFailure*>(&e)) {
        return 4;
    }
    if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
        return 4;
    }
    return 3;
}

nlohmann::ordered_json cmd_pipeline(const PipelineConfig& cfg, const std::filesystem::path& data_dir,
                                    const std::filesystem::path& out)
{
    run_stage("setup", [&] {
        ensure_directory(out);
        return 0;
    });
    const auto geo = run_stage("geometry", [&] {
        return run_geometry_stage(cfg.geometry, data_dir / files::kMagnitude,
                                  data_dir / files::kNoise, out / files::kGeometry);
    });
    const auto vel = run_stage("velocity", [&] {
        return run_velocity_stage(cfg.velocity, data_dir / files::kVelocity,
                                  out / files::kGeometry, data_dir / files::kNoise,
                                  out / files::kVelocityResult);
    });
    const auto wss = run_stage("wss", [&] {
        return run_wss_stage(cfg.wss, out / files::kGeometry, out / files::kVelocityResult, out);
    });

    nlohmann::ordered_json s;
    s["geometry"] = {{"residual_norm", geo.result.residual_norm},
                     {"alpha", geo.result.alpha},
                     {"discrepancy_unreachable", geo.result.discrepancy_unreachable},
                     {"iterations", geo.result.iterations}};
    s["velocity"] = {{"residual_norm", vel.result.residual_norm},
                     {"beta", vel.result.beta},
                     {"delta_u", vel.delta_u},
                     {"discrepancy_unreachable", vel.result.discrepancy_unreachable}};
    s["wss"] = {{"residual_norm", wss.lowpass_residual}, {"mean", wss.mean}};
    s["config"] = {{"geometry", to_json(cfg.geometry)},
                   {"velocity", to_json(cfg.velocity)},
                   {"wss", to_json(cfg.wss)}};
    run_stage("summary", [&] {
        write_json_file(out / files::kSummary, s);
        return 0;
    });
    return s;
}

} // namespace flowrecon
