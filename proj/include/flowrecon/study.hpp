#pragma once

// Synthetic convergence-rate studies: a full factorial over resolutions,
// noise levels and seeds of phantom -> geometry -> velocity -> wss, plus
// parameter tables in the layout of rows = h, columns = alpha or beta.

#include "flowrecon/geo_ident.hpp"
#include "flowrecon/phantom.hpp"
#include "flowrecon/velocity.hpp"
#include "flowrecon/wss.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flowrecon {

struct VelocityTruth {
    enum class Kind { Poiseuille, Manufactured };
    Kind kind = Kind::Poiseuille;
    double u_max = 1.0;
    /// Manufactured profile: coefficients over build_basis(cutoff) on the
    /// reference disk.
    double cutoff = 0.0;
    std::vector<double> coefficients;
};

VelocityTruth velocity_truth_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const VelocityTruth& v);

/// Exact fields and wall shear stress of a synthetic truth.
class SyntheticTruth {
public:
    SyntheticTruth(RadiusFunction radius, VelocityTruth velocity, GeometryBounds bounds);

    const RadiusFunction& radius() const { return radius_; }
    const GeometryBounds& bounds() const { return bounds_; }

    /// u on the physical plane (zero outside the domain).
    double physical(Vec2 y) const;
    /// v = u o T on the reference disk.
    double reference(Vec2 x) const;
    WssProfile wss(int samples) const;
    double max_speed() const;

private:
    RadiusFunction radius_;
    VelocityTruth velocity_;
    GeometryBounds bounds_;
    DiskTransform transform_;
    std::optional<VelocityCoefficients> manufactured_;
};

struct NoiseLevel {
    double sigma_mag = 0.0;
    double sigma_complex = 0.0;
};

enum class ParameterMode { Apriori, Discrepancy };

struct StudyConfig {
    RadiusFunction truth_radius{0.5, {0.0, 0.0, 0.03}, {0.0, 0.05, 0.0}};
    VelocityTruth velocity;
    GeometryBounds bounds;
    std::vector<double> resolutions{1.0 / 16, 1.0 / 24, 1.0 / 32, 1.0 / 48};
    std::vector<NoiseLevel> noise_levels;  ///< default: four per decade over 1.5 decades
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    ParameterMode mode = ParameterMode::Discrepancy;
    double apriori_k = 4.0;
    bool geometry_only = false;
    double venc = 2.5;
    int phantom_subsamples = 16;
    GeoIdentConfig geometry;
    VelocityReconConfig velocity_recon;
    int wss_samples = 256;
    int lowpass = 8;
    std::vector<double> alpha_grid{0.04, 0.02, 0.01, 0.005, 0.0025, 0.00125, 0.000625};
    std::vector<double> beta_grid{1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 3e-7, 1e-7, 3e-8};
    int table_noise_index = -1;  ///< -1: middle level
    bool tables = true;
    std::filesystem::path output_dir = "study";

    StudyConfig();
    void validate() const;
};

StudyConfig study_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const StudyConfig& cfg);

/// Default noise levels: delta = 10^(-1 - k/4), k = 0..6, with
/// sigma_mag = sigma_complex = delta / 2 (so the realized magnitude noise
/// norm over the field of view is about delta).
std::vector<NoiseLevel> default_noise_levels();

struct CellRecord {
    double h = 0.0;
    int noise_index = 0;
    NoiseLevel noise;
    std::uint64_t seed = 0;
    bool ok = true;
    std::string reason;
    double delta = 0.0;
    double eps = 0.0;
    double delta_r = 0.0;  ///< measured ||R - R_true||_{H^2}
    double delta_u = 0.0;  ///< realized reference-domain data error
    double alpha = 0.0;
    double beta = 0.0;
    bool alpha_unreachable = false;
    bool beta_unreachable = false;
    int gn_iterations = 0;
    double geometry_residual = 0.0;
    double velocity_residual = 0.0;
    double err_r_l2 = 0.0;
    double err_r_h2 = 0.0;
    double err_v = 0.0;  ///< H^2-proxy distance on the reference disk
    double err_tau = 0.0;  ///< relative L2 error of the low-pass WSS
    double tau_mean = 0.0;
};

struct SlopeFit {
    std::string quantity;  ///< error name
    std::string driver;    ///< noise measure on the x axis
    std::string group;     ///< resolution label or "all"
    int points = 0;
    double slope = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool excluded_noisiest = false;
};

struct ParameterTable {
    std::string name;
    std::vector<double> parameters;        ///< columns
    std::vector<double> resolutions;       ///< rows
    std::vector<std::vector<double>> errors;
    std::vector<int> best;                 ///< flagged column per row (-1 when all failed)
};

struct RateReport {
    std::vector<CellRecord> cells;
    std::vector<SlopeFit> slopes;
    std::vector<ParameterTable> tables;
};

/// One (h, noise, seed) cell of the factorial study. Failures are recorded
/// in the record, never thrown.
CellRecord run_cell(const StudyConfig& cfg, const SyntheticTruth& truth, double h, int noise_index,
                    std::uint64_t seed);

/// Least-squares slope of log(y) against log(x) with a 95% t-interval.
/// Requires at least three points.
SlopeFit fit_loglog(const std::vector<double>& x, const std::vector<double>& y);

/// Index of the smallest finite entry; ties go to the larger parameter.
int flag_minimum(const std::vector<double>& errors, const std::vector<double>& parameters);

RateReport run_rate_study(const StudyConfig& cfg, int threads = 1);

/// cells.csv, slopes.csv, table_*.csv and report.json in cfg.output_dir.
void write_rate_report(const StudyConfig& cfg, const RateReport& report);

} // namespace flowrecon
