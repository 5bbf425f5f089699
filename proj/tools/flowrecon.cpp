// Command-line front end: phantom generation, ingestion, the three
// reconstruction stages, the full pipeline and convergence-rate studies.

#include "flowrecon/config.hpp"
#include "flowrecon/error.hpp"
#include "flowrecon/io.hpp"
#include "flowrecon/pipeline.hpp"
#include "flowrecon/study.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

namespace fs = std::filesystem;
using namespace flowrecon;

namespace {

struct GlobalOptions {
    std::string config;
    std::string out;
    std::optional<int> threads;
    std::optional<std::uint64_t> seed;
};

/// The configuration file, with top-level keys checked.
struct ConfigFile {
    nlohmann::json root = nlohmann::json::object();

    nlohmann::json section(const char* key) const
    {
        return root.contains(key) ? root.at(key) : nlohmann::json();
    }
};

ConfigFile load_config(const GlobalOptions& g)
{
    ConfigFile cfg;
    if (g.config.empty()) {
        return cfg;
    }
    cfg.root = read_json_file(g.config);
    check_keys(cfg.root,
               {"phantom", "geometry", "velocity", "wss", "study", "output_dir", "threads", "seed"},
               "configuration file");
    return cfg;
}

fs::path output_dir(const GlobalOptions& g, const ConfigFile& c)
{
    if (!g.out.empty()) {
        return g.out;
    }
    return get_string(c.root, "output_dir", "out");
}

int thread_count(const GlobalOptions& g, const ConfigFile& c)
{
    const int fallback = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const int n = g.threads ? *g.threads : get_int(c.root, "threads", fallback);
    if (n < 1) {
        throw InvalidArgument("thread count must be >= 1");
    }
    return n;
}

std::optional<std::uint64_t> seed_override(const GlobalOptions& g, const ConfigFile& c)
{
    if (g.seed) {
        return g.seed;
    }
    if (c.root.contains("seed")) {
        try {
            return c.root.at("seed").get<std::uint64_t>();
        } catch (const nlohmann::json::exception&) {
            throw InvalidArgument("seed must be a non-negative integer");
        }
    }
    return std::nullopt;
}

fs::path or_default(const std::string& given, const fs::path& fallback)
{
    return given.empty() ? fallback : fs::path(given);
}

void report(const char* what, const fs::path& where)
{
    std::cout << what << " written to " << where.string() << '\n';
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"flowrecon: geometry, velocity and wall shear stress from phase-contrast data"};
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config, "JSON configuration file");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--threads", g.threads, "worker threads for studies")->check(CLI::PositiveNumber);
    app.add_option("--seed", g.seed, "noise seed");

    auto* phantom = app.add_subcommand("phantom", "synthesize magnitude and phase-contrast data");

    std::string in_magnitude, in_complex;
    auto* ingest = app.add_subcommand("ingest", "normalize raw magnitude and retrieve velocity");
    ingest->add_option("--magnitude", in_magnitude, "raw magnitude grid")->required();
    ingest->add_option("--complex", in_complex, "complex phase-contrast grid")->required();

    std::string data_dir, geometry_file, velocity_file;
    auto* geo = app.add_subcommand("recon-geometry", "identify the vessel boundary");
    geo->add_option("--data", data_dir, "directory with magnitude.grid and noise.json");

    auto* vel = app.add_subcommand("recon-velocity", "reconstruct the velocity field");
    vel->add_option("--data", data_dir, "directory with velocity.grid and noise.json");
    vel->add_option("--geometry", geometry_file, "geometry.json from recon-geometry");

    auto* wss = app.add_subcommand("wss", "wall shear stress from geometry and velocity");
    wss->add_option("--geometry", geometry_file, "geometry.json");
    wss->add_option("--velocity", velocity_file, "velocity.json");

    auto* pipeline = app.add_subcommand("pipeline", "geometry, velocity and wss in sequence");
    pipeline->add_option("--data", data_dir, "directory with the input grids and noise.json");

    auto* study = app.add_subcommand("rate-study", "synthetic convergence-rate study");

    for (auto* sub : {phantom, ingest, geo, vel, wss, pipeline, study}) {
        sub->fallthrough();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const ConfigFile cfg = load_config(g);
        const fs::path out = output_dir(g, cfg);
        const fs::path data = or_default(data_dir, out);

        if (phantom->parsed()) {
            PhantomConfig pc = phantom_config_from_json(
                cfg.section("phantom").is_null() ? nlohmann::json::object() : cfg.section("phantom"));
            if (const auto seed = seed_override(g, cfg)) {
                pc.noise.seed = *seed;
            }
            cmd_phantom(pc, out);
            report("phantom", out);
        } else if (ingest->parsed()) {
            cmd_ingest(in_magnitude, in_complex, out);
            report("normalized grids", out);
        } else if (geo->parsed()) {
            const auto stage = geometry_stage_from_json(cfg.section("geometry"));
            const auto art = run_geometry_stage(stage, data / files::kMagnitude, data / files::kNoise,
                                                out / files::kGeometry);
            std::cout << "alpha " << format_double(art.result.alpha) << " residual "
                      << format_double(art.result.residual_norm) << '\n';
            report("geometry", out / files::kGeometry);
        } else if (vel->parsed()) {
            const auto stage = velocity_stage_from_json(cfg.section("velocity"));
            const auto art = run_velocity_stage(stage, data / files::kVelocity,
                                                or_default(geometry_file, out / files::kGeometry),
                                                data / files::kNoise, out / files::kVelocityResult);
            std::cout << "beta " << format_double(art.result.beta) << " residual "
                      << format_double(art.result.residual_norm) << '\n';
            report("velocity", out / files::kVelocityResult);
        } else if (wss->parsed()) {
            const auto stage = wss_stage_from_json(cfg.section("wss"));
            const auto art = run_wss_stage(stage, or_default(geometry_file, out / files::kGeometry),
                                           or_default(velocity_file, out / files::kVelocityResult),
                                           out);
            std::cout << "mean wss " << format_double(art.mean) << '\n';
            report("wss", out / files::kWss);
        } else if (pipeline->parsed()) {
            nlohmann::json pj = nlohmann::json::object();
            for (const char* key : {"geometry", "velocity", "wss"}) {
                if (cfg.root.contains(key)) {
                    pj[key] = cfg.root.at(key);
                }
            }
            const auto summary = cmd_pipeline(pipeline_config_from_json(pj), data, out);
            std::cout << "mean wss " << format_double(summary["wss"]["mean"].get<double>()) << '\n';
            report("summary", out / files::kSummary);
        } else if (study->parsed()) {
            StudyConfig sc = cfg.section("study").is_null() ? StudyConfig{}
                                                            : study_config_from_json(cfg.section("study"));
            if (!g.out.empty() || cfg.root.contains("output_dir")) {
                sc.output_dir = out;
            }
            if (const auto seed = seed_override(g, cfg)) {
                sc.seeds = {*seed};
            }
            const RateReport rep = run_rate_study(sc, thread_count(g, cfg));
            write_rate_report(sc, rep);
            int failed = 0;
            for (const auto& c : rep.cells) {
                failed += c.ok ? 0 : 1;
            }
            std::cout << rep.cells.size() << " cells, " << failed << " failed\n";
            report("report", sc.output_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 0;
}
