#include "flowrecon/grid.hpp"

#include "flowrecon/error.hpp"
#include "flowrecon/io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace flowrecon {

GridSpec GridSpec::covering_fov(double h)
{
    if (!(h > 0.0) || h > 2.0) {
        throw InvalidArgument("voxel size h must lie in (0, 2]");
    }
    const int n = static_cast<int>(std::floor(2.0 / h + 1e-9));
    const double half = 0.5 * n * h;
    return GridSpec{n, n, h, {-half, -half}};
}

void GridSpec::validate() const
{
    if (nx <= 0 || ny <= 0 || !(h > 0.0)) {
        throw InvalidArgument("voxel grid must have positive dimensions and spacing");
    }
    constexpr double tol = 1e-9;
    const Vec2 far{origin.x + nx * h, origin.y + ny * h};
    for (const double c : {origin.x, origin.y, far.x, far.y}) {
        if (c < -1.0 - tol || c > 1.0 + tol) {
            throw InvalidArgument("voxel grid extends beyond the field of view (-1,1)^2");
        }
    }
}

double l2_norm(const VoxelGrid& grid)
{
    double sum = 0.0;
    for (const double v : grid.values) {
        sum += v * v;
    }
    return std::sqrt(sum) * grid.spec.h;
}

double l2_distance(const VoxelGrid& a, const VoxelGrid& b)
{
    if (!(a.spec == b.spec)) {
        throw InvalidArgument("grids are not conformal");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double d = a.values[i] - b.values[i];
        sum += d * d;
    }
    return std::sqrt(sum) * a.spec.h;
}

std::string to_string(GridKind kind)
{
    switch (kind) {
    case GridKind::Magnitude: return "magnitude";
    case GridKind::Velocity: return "velocity";
    case GridKind::Complex: return "complex";
    }
    return "magnitude";
}

namespace {

GridKind parse_kind(const std::string& s, const std::filesystem::path& path)
{
    if (s == "magnitude") return GridKind::Magnitude;
    if (s == "velocity") return GridKind::Velocity;
    if (s == "complex") return GridKind::Complex;
    throw IoFailure(path.string() + ": unknown grid kind '" + s + "'");
}

nlohmann::ordered_json header_json(const GridSpec& spec, GridKind kind)
{
    nlohmann::ordered_json j;
    j["nx"] = spec.nx;
    j["ny"] = spec.ny;
    j["h"] = spec.h;
    j["origin"] = {spec.origin.x, spec.origin.y};
    j["kind"] = to_string(kind);
    return j;
}

std::ofstream open_for_write(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoFailure("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

void finish_write(std::ofstream& out, const std::filesystem::path& path)
{
    out.flush();
    if (!out) {
        throw IoFailure("write to '" + path.string() + "' failed");
    }
}

} // namespace

void write_grid(const std::filesystem::path& path, const VoxelGrid& grid, GridKind kind)
{
    if (kind == GridKind::Complex) {
        throw InvalidArgument("real grid cannot be written with kind 'complex'");
    }
    auto out = open_for_write(path);
    out << header_json(grid.spec, kind).dump() << '\n';
    for (int iy = 0; iy < grid.spec.ny; ++iy) {
        for (int ix = 0; ix < grid.spec.nx; ++ix) {
            if (ix > 0) out << ',';
            out << format_double(grid.at(ix, iy));
        }
        out << '\n';
    }
    finish_write(out, path);
}

void write_grid(const std::filesystem::path& path, const PhaseContrastData& data)
{
    auto out = open_for_write(path);
    auto header = header_json(data.spec, GridKind::Complex);
    header["venc"] = data.venc;
    out << header.dump() << '\n';
    for (int iy = 0; iy < data.spec.ny; ++iy) {
        for (int ix = 0; ix < data.spec.nx; ++ix) {
            const auto z = data.values[data.spec.index(ix, iy)];
            if (ix > 0) out << ',';
            out << format_double(z.real()) << ',' << format_double(z.imag());
        }
        out << '\n';
    }
    finish_write(out, path);
}

LoadedGrid read_grid(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoFailure("cannot open grid file '" + path.string() + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IoFailure(path.string() + ": empty grid file");
    }

    LoadedGrid loaded;
    GridSpec spec;
    double venc = 1.0;
    try {
        const auto header = nlohmann::json::parse(line);
        spec.nx = header.at("nx").get<int>();
        spec.ny = header.at("ny").get<int>();
        spec.h = header.at("h").get<double>();
        spec.origin = {header.at("origin").at(0).get<double>(),
                       header.at("origin").at(1).get<double>()};
        loaded.kind = parse_kind(header.at("kind").get<std::string>(), path);
        if (loaded.kind == GridKind::Complex) {
            venc = header.at("venc").get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoFailure(path.string() + ": malformed grid header: " + e.what());
    }
    try {
        spec.validate();
    } catch (const InvalidArgument& e) {
        throw IoFailure(path.string() + ": " + e.what());
    }

    const int per_voxel = loaded.kind == GridKind::Complex ? 2 : 1;
    std::vector<double> raw;
    raw.reserve(spec.size() * per_voxel);
    for (int iy = 0; iy < spec.ny; ++iy) {
        if (!std::getline(in, line)) {
            throw IoFailure(path.string() + ": expected " + std::to_string(spec.ny) + " data rows");
        }
        std::stringstream row(line);
        std::string cell;
        int count = 0;
        while (std::getline(row, cell, ',')) {
            try {
                std::size_t used = 0;
                raw.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw IoFailure(path.string() + ": bad number '" + cell + "' in row " +
                                std::to_string(iy));
            }
            ++count;
        }
        if (count != spec.nx * per_voxel) {
            throw IoFailure(path.string() + ": row " + std::to_string(iy) + " has " +
                            std::to_string(count) + " values, expected " +
                            std::to_string(spec.nx * per_voxel));
        }
    }

    if (loaded.kind == GridKind::Complex) {
        loaded.complex.spec = spec;
        loaded.complex.venc = venc;
        loaded.complex.values.resize(spec.size());
        for (std::size_t i = 0; i < spec.size(); ++i) {
            loaded.complex.values[i] = {raw[2 * i], raw[2 * i + 1]};
        }
    } else {
        loaded.real.spec = spec;
        loaded.real.values = std::move(raw);
    }
    return loaded;
}

VoxelGrid read_real_grid(const std::filesystem::path& path)
{
    auto loaded = read_grid(path);
    if (loaded.kind == GridKind::Complex) {
        throw IoFailure(path.string() + ": expected a real-valued grid, found kind 'complex'");
    }
    return std::move(loaded.real);
}

PhaseContrastData read_complex_grid(const std::filesystem::path& path)
{
    auto loaded = read_grid(path);
    if (loaded.kind != GridKind::Complex) {
        throw IoFailure(path.string() + ": expected kind 'complex', found '" +
                        to_string(loaded.kind) + "'");
    }
    return std::move(loaded.complex);
}

} // namespace flowrecon
