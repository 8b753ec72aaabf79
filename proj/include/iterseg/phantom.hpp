#pragma once

// Seeded generator of synthetic "spine" volumes: ellipsoidal instances
// stacked along z on a sinusoidally displaced centerline, with exact
// reference masks. Stands in for clinical data in training and tests.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "iterseg/rng.hpp"
#include "iterseg/volume.hpp"

namespace iterseg {

enum class CropPolicy { none, crop_first, crop_last, crop_both };

inline const char* to_string(CropPolicy p) {
    switch (p) {
        case CropPolicy::none: return "none";
        case CropPolicy::crop_first: return "crop_first";
        case CropPolicy::crop_last: return "crop_last";
        case CropPolicy::crop_both: return "crop_both";
    }
    return "?";
}

inline CropPolicy crop_policy_from_string(const std::string& s) {
    if (s == "none") return CropPolicy::none;
    if (s == "crop_first") return CropPolicy::crop_first;
    if (s == "crop_last") return CropPolicy::crop_last;
    if (s == "crop_both") return CropPolicy::crop_both;
    throw std::invalid_argument("unknown crop policy '" + s + "'");
}

struct PhantomConfig {
    Vec3i dims{48, 48, 64};
    int n_instances = 4;
    int label_start = 1;               // labels run label_start .. label_start+n-1, bottom-up
    Vec3d instance_half_axes{10, 10, 5};  // voxels
    double gap = 3;                    // minimum z separation between instance hulls, voxels
    double column_curvature = 2;       // lateral x displacement amplitude, voxels
    double foreground_intensity = 1.0;
    double background_intensity = 0.25;
    double noise_sigma = 0.02;
    CropPolicy crop_policy = CropPolicy::none;
    std::uint64_t seed = 1;
};

struct PhantomResult {
    VoxelGrid image;
    InstanceMask mask;
};

namespace phantom_detail {

inline void validate(const PhantomConfig& c) {
    if (c.dims.x < 2 || c.dims.y < 2 || c.dims.z < 2)
        throw std::invalid_argument("phantom: dims must be at least 2 per axis");
    if (c.n_instances < 1) throw std::invalid_argument("phantom: n_instances must be >= 1");
    if (c.label_start < 1 || c.label_start + c.n_instances - 1 > 24)
        throw std::invalid_argument("phantom: labels must stay within 1..24");
    if (!(c.instance_half_axes.x > 0) || !(c.instance_half_axes.y > 0) || !(c.instance_half_axes.z > 0))
        throw std::invalid_argument("phantom: half axes must be positive");
    if (c.gap < 0) throw std::invalid_argument("phantom: gap must be >= 0");
    if (c.noise_sigma < 0) throw std::invalid_argument("phantom: noise_sigma must be >= 0");
    if (c.crop_policy == CropPolicy::crop_both && c.n_instances < 2)
        throw std::invalid_argument("phantom: crop_both needs at least 2 instances");

    const double lateral_x = c.instance_half_axes.x + std::abs(c.column_curvature);
    if (lateral_x > (c.dims.x - 1) / 2.0 - 1.0)
        throw std::invalid_argument("phantom: instances do not fit in dims along x");
    if (c.instance_half_axes.y > (c.dims.y - 1) / 2.0 - 1.0)
        throw std::invalid_argument("phantom: instances do not fit in dims along y");
}

/// z coordinates of instance centers, ascending.
inline std::vector<double> centers_z(const PhantomConfig& c) {
    const double az = c.instance_half_axes.z;
    const double pitch = 2 * az + c.gap;
    const int n = c.n_instances;
    std::vector<double> z(n);
    switch (c.crop_policy) {
        case CropPolicy::none: {
            const double extent = (n - 1) * pitch + 2 * az;
            if (extent + 2 > c.dims.z)
                throw std::invalid_argument("phantom: instances do not fit in dims along z");
            const double z0 = (c.dims.z - extent) / 2.0 + az;
            for (int m = 0; m < n; ++m) z[m] = z0 + m * pitch;
            break;
        }
        case CropPolicy::crop_first: {
            for (int m = 0; m < n; ++m) z[m] = m * pitch;  // first center on the z=0 face
            if (z[n - 1] + az + 1 > c.dims.z - 1)
                throw std::invalid_argument("phantom: instances do not fit in dims along z");
            break;
        }
        case CropPolicy::crop_last: {
            for (int m = 0; m < n; ++m) z[m] = (c.dims.z - 1) - (n - 1 - m) * pitch;
            if (z[0] - az < 1)
                throw std::invalid_argument("phantom: instances do not fit in dims along z");
            break;
        }
        case CropPolicy::crop_both: {
            const double stretched = static_cast<double>(c.dims.z - 1) / (n - 1);
            if (stretched < pitch)
                throw std::invalid_argument("phantom: instances do not fit in dims along z");
            for (int m = 0; m < n; ++m) z[m] = m * stretched;
            break;
        }
    }
    return z;
}

}  // namespace phantom_detail

inline PhantomResult generate_phantom(const PhantomConfig& cfg) {
    phantom_detail::validate(cfg);
    const auto zs = phantom_detail::centers_z(cfg);
    const Vec3d a = cfg.instance_half_axes;

    PhantomResult out;
    out.image = VoxelGrid(cfg.dims, static_cast<float>(cfg.background_intensity));
    out.mask = InstanceMask(cfg.dims);

    for (int m = 0; m < cfg.n_instances; ++m) {
        const double cz = zs[m];
        const double cx = (cfg.dims.x - 1) / 2.0 +
                          cfg.column_curvature * std::sin(2.0 * 3.14159265358979323846 * cz / cfg.dims.z);
        const double cy = (cfg.dims.y - 1) / 2.0;
        const std::uint16_t id = static_cast<std::uint16_t>(m + 1);

        std::size_t lattice_total = 0, in_bounds = 0;
        const int k0 = static_cast<int>(std::floor(cz - a.z)), k1 = static_cast<int>(std::ceil(cz + a.z));
        const int j0 = static_cast<int>(std::floor(cy - a.y)), j1 = static_cast<int>(std::ceil(cy + a.y));
        const int i0 = static_cast<int>(std::floor(cx - a.x)), i1 = static_cast<int>(std::ceil(cx + a.x));
        for (int k = k0; k <= k1; ++k)
            for (int j = j0; j <= j1; ++j)
                for (int i = i0; i <= i1; ++i) {
                    const double dx = (i - cx) / a.x, dy = (j - cy) / a.y, dz = (k - cz) / a.z;
                    if (dx * dx + dy * dy + dz * dz > 1.0) continue;
                    ++lattice_total;
                    if (!out.mask.in_bounds(i, j, k)) continue;
                    ++in_bounds;
                    std::uint16_t& cell = out.mask.at(i, j, k);
                    if (cell != 0) throw std::logic_error("phantom: overlapping instances");
                    cell = id;
                    out.image.at(i, j, k) = static_cast<float>(cfg.foreground_intensity);
                }
        if (lattice_total == 0) throw std::logic_error("phantom: degenerate instance");

        // the 2% rule: complete iff at most 2% of the uncropped volume is missing
        const double missing = 1.0 - static_cast<double>(in_bounds) / static_cast<double>(lattice_total);
        out.mask.records[id] = InstanceRecord{cfg.label_start + m, missing <= 0.02};
    }

    if (cfg.noise_sigma > 0) {
        Rng rng(cfg.seed);
        for (auto& v : out.image.values)
            v = static_cast<float>(v + rng.normal(0.0, cfg.noise_sigma));
    }
    return out;
}

}  // namespace iterseg
