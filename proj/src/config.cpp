#include "flowrecon/config.hpp"

#include "flowrecon/error.hpp"
#include "flowrecon/io.hpp"

#include <algorithm>

namespace flowrecon {

namespace {

template <typename T>
T get_typed(const nlohmann::json& j, const char* key, T fallback)
{
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) {
        return fallback;
    }
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw InvalidArgument(std::string("configuration field '") + key + "' has the wrong type");
    }
}

} // namespace

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& context)
{
    if (!j.is_object()) {
        throw InvalidArgument(context + " must be a JSON object");
    }
    for (const auto& item : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return item.key() == k; });
        if (!known) {
            throw InvalidArgument("unknown key '" + item.key() + "' in " + context);
        }
    }
}

double get_double(const nlohmann::json& j, const char* key, double fallback)
{
    return get_typed<double>(j, key, fallback);
}

int get_int(const nlohmann::json& j, const char* key, int fallback)
{
    return get_typed<int>(j, key, fallback);
}

bool get_bool(const nlohmann::json& j, const char* key, bool fallback)
{
    return get_typed<bool>(j, key, fallback);
}

std::string get_string(const nlohmann::json& j, const char* key, const std::string& fallback)
{
    return get_typed<std::string>(j, key, fallback);
}

GeoIdentConfig geo_config_from_json(const nlohmann::json& j)
{
    GeoIdentConfig cfg;
    if (j.is_null()) {
        return cfg;
    }
    check_keys(j, {"gamma", "alpha0", "order", "quad_order", "gn_max_iter", "gn_tol", "bounds"},
               "geometry configuration");
    if (j.contains("gamma") && !j.at("gamma").is_null()) {
        if (j.at("gamma").is_string() && j.at("gamma") == "auto") {
            cfg.gamma.reset();
        } else {
            cfg.gamma = get_double(j, "gamma", 0.0);
        }
    }
    cfg.alpha0 = get_double(j, "alpha0", cfg.alpha0);
    cfg.order = get_int(j, "order", cfg.order);
    cfg.quad_order = get_int(j, "quad_order", cfg.quad_order);
    cfg.gn_max_iter = get_int(j, "gn_max_iter", cfg.gn_max_iter);
    cfg.gn_tol = get_double(j, "gn_tol", cfg.gn_tol);
    if (j.contains("bounds")) {
        cfg.bounds = bounds_from_json(j.at("bounds"));
    }
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json to_json(const GeoIdentConfig& cfg)
{
    nlohmann::ordered_json j;
    j["gamma"] = cfg.gamma ? nlohmann::ordered_json(*cfg.gamma) : nlohmann::ordered_json("auto");
    j["alpha0"] = cfg.alpha0;
    j["order"] = cfg.order;
    j["quad_order"] = cfg.quad_order;
    j["gn_max_iter"] = cfg.gn_max_iter;
    j["gn_tol"] = cfg.gn_tol;
    j["bounds"] = to_json(cfg.bounds);
    return j;
}

VelocityReconConfig velocity_config_from_json(const nlohmann::json& j)
{
    VelocityReconConfig cfg;
    if (j.is_null()) {
        return cfg;
    }
    check_keys(j, {"cutoff", "mode_fraction", "beta0", "subsamples", "solver", "cg_tol", "cg_max_iter"},
               "velocity configuration");
    if (j.contains("cutoff") && !j.at("cutoff").is_null() &&
        !(j.at("cutoff").is_string() && j.at("cutoff") == "auto")) {
        cfg.cutoff = get_double(j, "cutoff", 0.0);
    }
    cfg.mode_fraction = get_double(j, "mode_fraction", cfg.mode_fraction);
    cfg.beta0 = get_double(j, "beta0", cfg.beta0);
    cfg.subsamples = get_int(j, "subsamples", cfg.subsamples);
    const std::string solver = get_string(j, "solver", "cholesky");
    if (solver == "cholesky") {
        cfg.solver = LinearSolver::Cholesky;
    } else if (solver == "cg") {
        cfg.solver = LinearSolver::ConjugateGradient;
    } else {
        throw InvalidArgument("velocity solver must be 'cholesky' or 'cg', got '" + solver + "'");
    }
    cfg.cg_tol = get_double(j, "cg_tol", cfg.cg_tol);
    cfg.cg_max_iter = get_int(j, "cg_max_iter", cfg.cg_max_iter);
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json to_json(const VelocityReconConfig& cfg)
{
    nlohmann::ordered_json j;
    j["cutoff"] = cfg.cutoff ? nlohmann::ordered_json(*cfg.cutoff) : nlohmann::ordered_json("auto");
    j["mode_fraction"] = cfg.mode_fraction;
    j["beta0"] = cfg.beta0;
    j["subsamples"] = cfg.subsamples;
    j["solver"] = cfg.solver == LinearSolver::Cholesky ? "cholesky" : "cg";
    j["cg_tol"] = cfg.cg_tol;
    j["cg_max_iter"] = cfg.cg_max_iter;
    return j;
}

NoiseSpec noise_from_json(const nlohmann::json& j)
{
    NoiseSpec noise;
    if (j.is_null()) {
        return noise;
    }
    check_keys(j, {"sigma_mag", "sigma_complex", "seed"}, "noise configuration");
    noise.sigma_mag = get_double(j, "sigma_mag", noise.sigma_mag);
    noise.sigma_complex = get_double(j, "sigma_complex", noise.sigma_complex);
    noise.seed = get_typed<std::uint64_t>(j, "seed", noise.seed);
    noise.validate();
    return noise;
}

nlohmann::ordered_json to_json(const NoiseSpec& noise)
{
    nlohmann::ordered_json j;
    j["sigma_mag"] = noise.sigma_mag;
    j["sigma_complex"] = noise.sigma_complex;
    j["seed"] = noise.seed;
    return j;
}

NormBounds norm_bounds_from_json(const nlohmann::json& j)
{
    NormBounds b;
    if (j.is_null()) {
        return b;
    }
    check_keys(j, {"C", "U3"}, "norm bounds");
    b.c = get_double(j, "C", b.c);
    b.u3 = get_double(j, "U3", b.u3);
    if (!(b.c >= 0.0) || !(b.u3 >= 0.0)) {
        throw InvalidArgument("norm bounds must be non-negative");
    }
    return b;
}

nlohmann::ordered_json to_json(const VelocityCoefficients& v)
{
    nlohmann::ordered_json modes = nlohmann::ordered_json::array();
    for (const auto& mode : v.basis.modes) {
        nlohmann::ordered_json m;
        m["m"] = mode.m;
        m["n"] = mode.n;
        m["parity"] = to_string(mode.parity);
        m["lambda"] = mode.lambda;
        modes.push_back(m);
    }
    nlohmann::ordered_json j;
    j["cutoff"] = v.basis.cutoff;
    j["modes"] = modes;
    j["coefficients"] = v.c;
    return j;
}

VelocityCoefficients velocity_from_json(const nlohmann::json& j)
{
    VelocityCoefficients v;
    try {
        v.basis.cutoff = j.value("cutoff", 0.0);
        for (const auto& m : j.at("modes")) {
            const std::string parity = m.at("parity").get<std::string>();
            if (parity != "cos" && parity != "sin") {
                throw InvalidArgument("mode parity must be 'cos' or 'sin'");
            }
            v.basis.modes.push_back(make_mode(m.at("m").get<int>(), m.at("n").get<int>(),
                                              parity == "cos" ? Parity::Cos : Parity::Sin));
        }
        v.c = j.at("coefficients").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(std::string("malformed velocity coefficients: ") + e.what());
    }
    if (v.c.size() != v.basis.size()) {
        throw InvalidArgument("velocity coefficient count does not match the mode list");
    }
    return v;
}

} // namespace flowrecon
