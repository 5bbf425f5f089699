#pragma once

// File-based stages behind the command-line tool. Every stage reads its
// inputs from files and writes its outputs to files, so stages can be rerun
// independently.

#include "flowrecon/geo_ident.hpp"
#include "flowrecon/phantom.hpp"
#include "flowrecon/study.hpp"
#include "flowrecon/velocity.hpp"
#include "flowrecon/wss.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace flowrecon {

namespace files {
inline constexpr const char* kMagnitude = "magnitude.grid";
inline constexpr const char* kPhaseContrast = "phase_contrast.grid";
inline constexpr const char* kVelocity = "velocity.grid";
inline constexpr const char* kTruth = "truth.json";
inline constexpr const char* kNoise = "noise.json";
inline constexpr const char* kGeometry = "geometry.json";
inline constexpr const char* kVelocityResult = "velocity.json";
inline constexpr const char* kWss = "wss.json";
inline constexpr const char* kWssTable = "wss.csv";
inline constexpr const char* kSummary = "summary.json";
} // namespace files

struct PhantomConfig {
    RadiusFunction radius{0.5, {}, {}};
    VelocityTruth velocity;
    GeometryBounds bounds;
    double h = 1.0 / 32;
    double venc = 2.5;
    NoiseSpec noise;
    int subsamples = 16;

    void validate() const;
};

PhantomConfig phantom_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const PhantomConfig& cfg);

/// Noise levels as stored in noise.json.
struct NoiseLevels {
    double delta = 0.0;
    double eps = 0.0;
};

NoiseLevels read_noise_levels(const std::filesystem::path& path);
void write_noise_levels(const std::filesystem::path& path, const NoiseLevels& n);

/// Writes magnitude, phase-contrast and retrieved-velocity grids, truth.json
/// and noise.json with the realized delta and eps.
void cmd_phantom(const PhantomConfig& cfg, const std::filesystem::path& out);

/// Voxels with normalized magnitude below this value form the exterior mask.
inline constexpr double kExteriorThreshold = 0.1;

/// eps estimated from the exterior complex noise: the per-component standard
/// deviation sigma gives a phase error of about sigma / |d| inside, hence a
/// velocity error of venc sigma / (2 pi) per voxel.
double estimate_velocity_noise(const PhaseContrastData& data, const VoxelGrid& normalized);

/// Normalizes a raw magnitude grid, retrieves the velocity from a complex grid
/// and writes magnitude.grid, velocity.grid and noise.json.
void cmd_ingest(const std::filesystem::path& magnitude, const std::filesystem::path& complex,
                const std::filesystem::path& out);

enum class CenterMode { Origin, Barycenter };

struct GeometryStageConfig {
    GeoIdentConfig solver;
    std::optional<double> alpha;  ///< unset: discrepancy principle
    CenterMode center = CenterMode::Barycenter;
};

GeometryStageConfig geometry_stage_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const GeometryStageConfig& cfg);

enum class BetaRule { Discrepancy, Apriori, Fixed };

struct VelocityStageConfig {
    VelocityReconConfig solver;
    BetaRule rule = BetaRule::Discrepancy;
    double beta = 0.0;  ///< used with BetaRule::Fixed
    NormBounds norm_bounds;
    std::optional<double> delta_u;  ///< unset: C (delta_R^(1/2) U3 + eps)
};

VelocityStageConfig velocity_stage_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const VelocityStageConfig& cfg);

struct WssStageConfig {
    int samples = 256;
    int lowpass = 8;
    double viscosity = 1.0;
};

WssStageConfig wss_stage_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const WssStageConfig& cfg);

struct GeometryArtifact {
    GeoIdentResult result;
    GeometryBounds bounds;
    double delta = 0.0;
    double delta_r = 0.0;  ///< a-priori bound delta^(1/2) used downstream
};

struct VelocityArtifact {
    VelocityReconResult result;
    Vec2 center{};
    double delta_u = 0.0;
};

/// magnitude.grid + noise.json -> geometry.json
GeometryArtifact run_geometry_stage(const GeometryStageConfig& cfg,
                                    const std::filesystem::path& magnitude,
                                    const std::filesystem::path& noise,
                                    const std::filesystem::path& out);
GeometryArtifact read_geometry_artifact(const std::filesystem::path& path);

/// velocity.grid + geometry.json + noise.json -> velocity.json
VelocityArtifact run_velocity_stage(const VelocityStageConfig& cfg,
                                    const std::filesystem::path& velocity,
                                    const std::filesystem::path& geometry,
                                    const std::filesystem::path& noise,
                                    const std::filesystem::path& out);
VelocityArtifact read_velocity_artifact(const std::filesystem::path& path);

struct WssArtifact {
    WssProfile tau;
    WssProfile filtered;
    double mean = 0.0;
    double lowpass_residual = 0.0;  ///< ||tau - tau_K|| / ||tau||
};

/// geometry.json + velocity.json -> wss.json and wss.csv
WssArtifact run_wss_stage(const WssStageConfig& cfg, const std::filesystem::path& geometry,
                          const std::filesystem::path& velocity, const std::filesystem::path& out);

struct PipelineConfig {
    GeometryStageConfig geometry;
    VelocityStageConfig velocity;
    WssStageConfig wss;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& j);

/// A failure inside one pipeline stage; the message starts with the stage tag.
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::exception& cause, int exit_code);

    const std::string& stage() const { return stage_; }
    int exit_code() const { return exit_code_; }

private:
    std::string stage_;
    int exit_code_;
};

/// Exit code of the command-line tool for a library exception.
int exit_code_for(const std::exception& e);

/// Runs geometry, velocity and wss on the files in `data_dir`, writing the
/// three artifacts and summary.json to `out`.
nlohmann::ordered_json cmd_pipeline(const PipelineConfig& cfg, const std::filesystem::path& data_dir,
                                    const std::filesystem::path& out);

} // namespace flowrecon
