#pragma once

// Synthetic magnitude and phase-contrast voxel data, plus the preprocessing
// that turns raw scanner-like data into normalized magnitude and velocity
// grids.

#include "flowrecon/geometry.hpp"
#include "flowrecon/grid.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace flowrecon {

struct NoiseSpec {
    double sigma_mag = 0.0;      ///< std-dev of Gaussian noise on magnitude voxel means
    double sigma_complex = 0.0;  ///< std-dev per component of the complex signal noise
    std::uint64_t seed = 0;

    void validate() const;
};

/// Velocity field on the physical plane; must vanish outside the flow domain.
using VelocityField = std::function<double(Vec2)>;

/// Voxel fraction of subsamples x subsamples midpoint samples xi with |xi| < R(phi(xi)).
VoxelGrid rasterize_characteristic(const RadiusFunction& radius, const GridSpec& spec,
                                   int subsamples = 16);

struct NoisyGrid {
    VoxelGrid grid;
    double delta = 0.0;  ///< realized discrete L2(D) norm of the added noise
};

NoisyGrid add_magnitude_noise(const VoxelGrid& magnitude, const NoiseSpec& noise);

/// Voxel-mean complex signal of chi_Omega exp(i 2 pi u / venc) plus complex
/// Gaussian noise. Throws NumericalFailure when the sampled velocity reaches
/// 95% of the unambiguous phase range |u| < venc / 2.
PhaseContrastData synth_phase_contrast(const VelocityField& velocity, const RadiusFunction& radius,
                                       const GridSpec& spec, double venc, const NoiseSpec& noise,
                                       int subsamples = 16);

/// venc * arg(d) / (2 pi) per voxel, arg in (-pi, pi].
VoxelGrid retrieve_velocity(const PhaseContrastData& data);

/// Histogram-based two-peak normalization T((raw - m0) / (m1 - m0)) with
/// T(x) = max(0, min(1, x)).
VoxelGrid normalize_magnitude(const VoxelGrid& raw, int bins = 64);

struct MagnitudeScaling {
    double m0 = 0.0;  ///< exterior peak
    double m1 = 1.0;  ///< interior peak
};

/// The two histogram peaks used by normalize_magnitude, each located at the
/// median of the samples in its bin. Throws NumericalFailure
/// when fewer than two local maxima exist.
MagnitudeScaling find_magnitude_peaks(const VoxelGrid& raw, int bins = 64);

/// Sample standard deviation over the masked voxels times (nx ny h^2)^(1/2).
/// Throws InvalidArgument when fewer than two voxels are masked.
double estimate_noise_level(const VoxelGrid& grid, std::span<const std::uint8_t> mask);

/// Exact voxel means of a velocity field over V_i cap Omega, by subsampling.
struct VoxelMeans {
    VoxelGrid mean;      ///< mean of u over interior samples (0 where none)
    VoxelGrid fraction;  ///< fraction of interior samples
};

VoxelMeans sample_voxel_means(const VelocityField& velocity, const RadiusFunction& radius,
                              const GridSpec& spec, int subsamples = 16);

/// Deterministic per-voxel seed derived from (seed, stream, index); the same
/// value is produced regardless of evaluation order.
std::uint64_t voxel_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

namespace detail {

/// Voxel classification shared by the rasterizer and the phase-contrast
/// generator: -1 fully outside, +1 fully inside, 0 needs sampling.
int classify_voxel(const RadiusFunction& radius, double lipschitz, Vec2 lower, double h);

} // namespace detail

} // namespace flowrecon
