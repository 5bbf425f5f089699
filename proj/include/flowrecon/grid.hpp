#pragma once

#include "flowrecon/geometry.hpp"

#include <complex>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace flowrecon {

/// Geometry of a uniform voxel array inside the field of view D = (-1, 1)^2.
/// Voxel (ix, iy) is [origin.x + ix h, origin.x + (ix+1) h] x [same in y].
struct GridSpec {
    int nx = 0;
    int ny = 0;
    double h = 0.0;
    Vec2 origin{};

    /// Centered grid of spacing h covering as much of D as fits.
    static GridSpec covering_fov(double h);

    std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
    std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * nx + ix; }
    Vec2 lower_corner(int ix, int iy) const { return {origin.x + ix * h, origin.y + iy * h}; }
    Vec2 center(int ix, int iy) const
    {
        return {origin.x + (ix + 0.5) * h, origin.y + (iy + 0.5) * h};
    }
    Vec2 center(std::size_t i) const
    {
        return center(static_cast<int>(i % nx), static_cast<int>(i / nx));
    }

    /// Throws InvalidArgument unless the grid is non-empty and lies within the closed FOV.
    void validate() const;

    bool operator==(const GridSpec&) const = default;
};

/// Real voxel values, row-major (values[iy * nx + ix]).
struct VoxelGrid {
    GridSpec spec;
    std::vector<double> values;

    VoxelGrid() = default;
    explicit VoxelGrid(GridSpec s, double fill = 0.0) : spec(s), values(s.size(), fill) {}

    double& at(int ix, int iy) { return values[spec.index(ix, iy)]; }
    double at(int ix, int iy) const { return values[spec.index(ix, iy)]; }
};

/// Complex phase-contrast voxel signal with its velocity encoding.
struct PhaseContrastData {
    GridSpec spec;
    std::vector<std::complex<double>> values;
    double venc = 1.0;
};

/// Discrete L2(D) norm (sum v_i^2 h^2)^(1/2).
double l2_norm(const VoxelGrid& grid);
/// Discrete L2(D) distance between two conformal grids.
double l2_distance(const VoxelGrid& a, const VoxelGrid& b);

// --- file format -------------------------------------------------------------
//
// First line: JSON header {"nx":..,"ny":..,"h":..,"origin":[x,y],"kind":..}
// (complex grids also carry "venc"). Then ny CSV rows of nx values each,
// row iy = 0 first; complex rows hold re,im pairs.

enum class GridKind { Magnitude, Velocity, Complex };

std::string to_string(GridKind kind);

void write_grid(const std::filesystem::path& path, const VoxelGrid& grid, GridKind kind);
void write_grid(const std::filesystem::path& path, const PhaseContrastData& data);

struct LoadedGrid {
    GridKind kind = GridKind::Magnitude;
    VoxelGrid real;              // magnitude / velocity
    PhaseContrastData complex;   // complex
};

/// Throws IoFailure on unreadable or malformed files.
LoadedGrid read_grid(const std::filesystem::path& path);
VoxelGrid read_real_grid(const std::filesystem::path& path);
PhaseContrastData read_complex_grid(const std::filesystem::path& path);

} // namespace flowrecon
