#include "flowrecon/phantom.hpp"

#include "flowrecon/error.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>

namespace flowrecon {

namespace {

constexpr std::uint64_t kMagnitudeStream = 1;
constexpr std::uint64_t kComplexStream = 2;

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

void check_subsamples(int subsamples)
{
    if (subsamples < 1) {
        throw InvalidArgument("subsamples must be >= 1");
    }
}

/// Calls fn(xi, inside) for every midpoint subsample of the voxel.
template <typename Fn>
void for_each_subsample(const RadiusFunction& radius, Vec2 lower, double h, int subsamples, Fn&& fn)
{
    const double step = h / subsamples;
    for (int sy = 0; sy < subsamples; ++sy) {
        for (int sx = 0; sx < subsamples; ++sx) {
            const Vec2 xi{lower.x + (sx + 0.5) * step, lower.y + (sy + 0.5) * step};
            fn(xi, radius.contains(xi));
        }
    }
}

} // namespace

void NoiseSpec::validate() const
{
    if (!(sigma_mag >= 0.0) || !(sigma_complex >= 0.0)) {
        throw InvalidArgument("noise standard deviations must be non-negative");
    }
}

std::uint64_t voxel_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index)
{
    return splitmix64(splitmix64(seed ^ splitmix64(stream)) + index);
}

namespace detail {

int classify_voxel(const RadiusFunction& radius, double lipschitz, Vec2 lower, double h)
{
    const double x0 = lower.x, x1 = lower.x + h;
    const double y0 = lower.y, y1 = lower.y + h;
    const double dx = x0 > 0.0 ? x0 : (x1 < 0.0 ? -x1 : 0.0);
    const double dy = y0 > 0.0 ? y0 : (y1 < 0.0 ? -y1 : 0.0);
    const double dmin = std::hypot(dx, dy);
    const double dmax = std::hypot(std::max(std::abs(x0), std::abs(x1)),
                                   std::max(std::abs(y0), std::abs(y1)));

    const Vec2 c{x0 + 0.5 * h, y0 + 0.5 * h};
    const double half_diag = h / std::sqrt(2.0);
    const double rc = norm(c);
    if (rc <= half_diag * 1.0001) {
        return 0;
    }
    const double spread = lipschitz * std::asin(std::min(1.0, half_diag / rc)) + 1e-12;
    const double r_center = radius.value_along(unit_direction(c));
    if (dmax < r_center - spread) {
        return 1;
    }
    if (dmin > r_center + spread) {
        return -1;
    }
    return 0;
}

} // namespace detail

VoxelGrid rasterize_characteristic(const RadiusFunction& radius, const GridSpec& spec,
                                   int subsamples)
{
    check_subsamples(subsamples);
    spec.validate();
    VoxelGrid out(spec);
    const double lip = radius.derivative_bound();
    const double total = static_cast<double>(subsamples) * subsamples;
    for (int iy = 0; iy < spec.ny; ++iy) {
        for (int ix = 0; ix < spec.nx; ++ix) {
            const Vec2 lower = spec.lower_corner(ix, iy);
            const int cls = detail::classify_voxel(radius, lip, lower, spec.h);
            if (cls != 0) {
                out.at(ix, iy) = cls > 0 ? 1.0 : 0.0;
                continue;
            }
            int inside = 0;
            for_each_subsample(radius, lower, spec.h, subsamples,
                               [&](Vec2, bool in) { inside += in ? 1 : 0; });
            out.at(ix, iy) = inside / total;
        }
    }
    return out;
}

NoisyGrid add_magnitude_noise(const VoxelGrid& magnitude, const NoiseSpec& noise)
{
    noise.validate();
    NoisyGrid out{magnitude, 0.0};
    if (noise.sigma_mag == 0.0) {
        return out;
    }
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < out.grid.values.size(); ++i) {
        std::mt19937_64 gen(voxel_seed(noise.seed, kMagnitudeStream, i));
        std::normal_distribution<double> normal(0.0, noise.sigma_mag);
        const double e = normal(gen);
        out.grid.values[i] += e;
        sum_sq += e * e;
    }
    out.delta = std::sqrt(sum_sq) * magnitude.spec.h;
    return out;
}

PhaseContrastData synth_phase_contrast(const VelocityField& velocity, const RadiusFunction& radius,
                                       const GridSpec& spec, double venc, const NoiseSpec& noise,
                                       int subsamples)
{
    check_subsamples(subsamples);
    spec.validate();
    noise.validate();
    if (!(venc > 0.0)) {
        throw InvalidArgument("venc must be positive");
    }

    PhaseContrastData out{spec, std::vector<std::complex<double>>(spec.size()), venc};
    const double lip = radius.derivative_bound();
    const double total = static_cast<double>(subsamples) * subsamples;
    const double wrap_limit = 0.95 * 0.5 * venc;
    double max_speed = 0.0;

    for (int iy = 0; iy < spec.ny; ++iy) {
        for (int ix = 0; ix < spec.nx; ++ix) {
            const Vec2 lower = spec.lower_corner(ix, iy);
            std::complex<double> sum{0.0, 0.0};
            if (detail::classify_voxel(radius, lip, lower, spec.h) >= 0) {
                for_each_subsample(radius, lower, spec.h, subsamples, [&](Vec2 xi, bool in) {
                    if (!in) return;
                    const double u = velocity(xi);
                    max_speed = std::max(max_speed, std::abs(u));
                    sum += std::polar(1.0, kTwoPi * u / venc);
                });
            }
            out.values[spec.index(ix, iy)] = sum / total;
        }
    }
    if (max_speed >= wrap_limit) {
        throw NumericalFailure("phase wrap risk: sampled |u| = " + std::to_string(max_speed) +
                               " reaches 95% of venc/2 = " + std::to_string(0.5 * venc));
    }

    if (noise.sigma_complex > 0.0) {
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            std::mt19937_64 gen(voxel_seed(noise.seed, kComplexStream, i));
            std::normal_distribution<double> normal(0.0, noise.sigma_complex);
            const double re = normal(gen);
            const double im = normal(gen);
            out.values[i] += std::complex<double>(re, im);
        }
    }
    return out;
}

VoxelGrid retrieve_velocity(const PhaseContrastData& data)
{
    VoxelGrid out(data.spec);
    for (std::size_t i = 0; i < data.values.size(); ++i) {
        double phase = std::arg(data.values[i]);
        if (phase <= -std::numbers::pi) {
            phase = std::numbers::pi;
        }
        out.values[i] = data.venc * phase / kTwoPi;
    }
    return out;
}

MagnitudeScaling find_magnitude_peaks(const VoxelGrid& raw, int bins)
{
    if (bins < 3) {
        throw InvalidArgument("histogram needs at least 3 bins");
    }
    if (raw.values.empty()) {
        throw NumericalFailure("degenerate histogram: empty magnitude grid");
    }
    const auto [lo_it, hi_it] = std::minmax_element(raw.values.begin(), raw.values.end());
    const double lo = *lo_it, hi = *hi_it;
    if (!(hi > lo)) {
        throw NumericalFailure("degenerate histogram: magnitude data is constant");
    }
    const double width = (hi - lo) / bins;
    std::vector<long> counts(bins, 0);
    for (const double v : raw.values) {
        const int b = std::min(bins - 1, static_cast<int>((v - lo) / width));
        ++counts[b];
    }

    std::vector<int> peaks;
    for (int b = 0; b < bins; ++b) {
        const long left = b > 0 ? counts[b - 1] : -1;
        const long right = b + 1 < bins ? counts[b + 1] : -1;
        if (counts[b] > left && counts[b] > right) {
            peaks.push_back(b);
        }
    }
    if (peaks.size() < 2) {
        throw NumericalFailure("degenerate histogram: fewer than two local maxima");
    }
    // highest counts first; stable sort keeps lower bin index first on ties
    std::stable_sort(peaks.begin(), peaks.end(),
                     [&](int p, int q) { return counts[p] > counts[q]; });
    const int first = std::min(peaks[0], peaks[1]);
    const int second = std::max(peaks[0], peaks[1]);
    auto bin_median = [&](int bin) {
        std::vector<double> members;
        for (const double v : raw.values) {
            if (std::min(bins - 1, static_cast<int>((v - lo) / width)) == bin) {
                members.push_back(v);
            }
        }
        const auto mid = members.begin() + static_cast<std::ptrdiff_t>(members.size() / 2);
        std::nth_element(members.begin(), mid, members.end());
        return *mid;
    };
    return {bin_median(first), bin_median(second)};
}

VoxelGrid normalize_magnitude(const VoxelGrid& raw, int bins)
{
    const auto peaks = find_magnitude_peaks(raw, bins);
    VoxelGrid out(raw.spec);
    for (std::size_t i = 0; i < raw.values.size(); ++i) {
        out.values[i] = std::clamp((raw.values[i] - peaks.m0) / (peaks.m1 - peaks.m0), 0.0, 1.0);
    }
    return out;
}

double estimate_noise_level(const VoxelGrid& grid, std::span<const std::uint8_t> mask)
{
    if (mask.size() != grid.values.size()) {
        throw InvalidArgument("noise mask size does not match the grid");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            sum += grid.values[i];
            ++n;
        }
    }
    if (n < 2) {
        throw InvalidArgument("noise estimation needs at least two masked voxels");
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) {
            ss += (grid.values[i] - mean) * (grid.values[i] - mean);
        }
    }
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double area = static_cast<double>(grid.spec.size()) * grid.spec.h * grid.spec.h;
    return sd * std::sqrt(area);
}

VoxelMeans sample_voxel_means(const VelocityField& velocity, const RadiusFunction& radius,
                              const GridSpec& spec, int subsamples)
{
    check_subsamples(subsamples);
    spec.validate();
    VoxelMeans out{VoxelGrid(spec), VoxelGrid(spec)};
    const double lip = radius.derivative_bound();
    const double total = static_cast<double>(subsamples) * subsamples;
    for (int iy = 0; iy < spec.ny; ++iy) {
        for (int ix = 0; ix < spec.nx; ++ix) {
            const Vec2 lower = spec.lower_corner(ix, iy);
            if (detail::classify_voxel(radius, lip, lower, spec.h) < 0) {
                continue;
            }
            double sum = 0.0;
            int inside = 0;
            for_each_subsample(radius, lower, spec.h, subsamples, [&](Vec2 xi, bool in) {
                if (!in) return;
                sum += velocity(xi);
                ++inside;
            });
            if (inside > 0) {
                out.mean.at(ix, iy) = sum / inside;
                out.fraction.at(ix, iy) = inside / total;
            }
        }
    }
    return out;
}

} // namespace flowrecon
