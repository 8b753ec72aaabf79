#pragma once

// Dense 3D grid types: scalar volumes, instance masks and patch windows.
// Values are stored x-fastest; z is the cranio-caudal axis along which
// instance chains run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace iterseg {

struct Vec3i {
    int x = 0, y = 0, z = 0;

    friend bool operator==(const Vec3i&, const Vec3i&) = default;
    int& operator[](int axis) { return axis == 0 ? x : axis == 1 ? y : z; }
    int operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
};

struct Vec3d {
    double x = 0, y = 0, z = 0;

    friend bool operator==(const Vec3d&, const Vec3d&) = default;
    double& operator[](int axis) { return axis == 0 ? x : axis == 1 ? y : z; }
    double operator[](int axis) const { return axis == 0 ? x : axis == 1 ? y : z; }
};

inline Vec3i operator+(Vec3i a, Vec3i b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3i operator-(Vec3i a, Vec3i b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }

/// Dense scalar field on a regular grid. Voxel (i,j,k) occupies the cell
/// [origin + i*spacing, origin + (i+1)*spacing) per axis; its center sits at
/// origin + (i + 1/2)*spacing. All resampling uses this cell-centered
/// convention.
template <typename T>
struct Grid3 {
    Vec3i dims;
    Vec3d spacing{1.0, 1.0, 1.0};
    Vec3d origin{0.0, 0.0, 0.0};
    std::vector<T> values;

    Grid3() = default;
    Grid3(Vec3i d, T fill = T{}, Vec3d sp = {1.0, 1.0, 1.0}, Vec3d org = {0.0, 0.0, 0.0})
        : dims(d), spacing(sp), origin(org),
          values(static_cast<std::size_t>(d.x) * d.y * d.z, fill) {
        if (d.x < 1 || d.y < 1 || d.z < 1)
            throw std::invalid_argument("Grid3: dims must be positive");
        if (!(sp.x > 0) || !(sp.y > 0) || !(sp.z > 0))
            throw std::invalid_argument("Grid3: spacing must be positive");
    }

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims.x) * dims.y * dims.z;
    }
    std::size_t index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * dims.y + iy) * dims.x + ix;
    }
    bool in_bounds(int ix, int iy, int iz) const {
        return ix >= 0 && iy >= 0 && iz >= 0 && ix < dims.x && iy < dims.y && iz < dims.z;
    }
    T& at(int ix, int iy, int iz) { return values[index(ix, iy, iz)]; }
    const T& at(int ix, int iy, int iz) const { return values[index(ix, iy, iz)]; }

    bool isotropic(double tol = 1e-9) const {
        return std::abs(spacing.x - spacing.y) <= tol && std::abs(spacing.x - spacing.z) <= tol;
    }
};

using VoxelGrid = Grid3<float>;
using BinaryGrid = Grid3<std::uint8_t>;

template <typename T>
void validate_grid(const Grid3<T>& g) {
    if (g.dims.x < 1 || g.dims.y < 1 || g.dims.z < 1)
        throw std::invalid_argument("grid dims must be positive");
    if (!(g.spacing.x > 0) || !(g.spacing.y > 0) || !(g.spacing.z > 0) ||
        !std::isfinite(g.spacing.x) || !std::isfinite(g.spacing.y) || !std::isfinite(g.spacing.z))
        throw std::invalid_argument("grid spacing must be positive and finite");
    if (g.values.size() != g.voxel_count())
        throw std::invalid_argument("grid value count does not match dims");
    if constexpr (std::is_floating_point_v<T>) {
        for (T v : g.values)
            if (!std::isfinite(v)) throw std::invalid_argument("grid contains non-finite values");
    }
}

struct InstanceRecord {
    int anatomical_label = 0;  // 1..24 once assigned
    bool complete = true;
};

/// Per-voxel instance ids (0 = background) plus one record per instance.
struct InstanceMask {
    Vec3i dims;
    Vec3d spacing{1.0, 1.0, 1.0};
    Vec3d origin{0.0, 0.0, 0.0};
    std::vector<std::uint16_t> ids;
    std::map<std::uint16_t, InstanceRecord> records;

    InstanceMask() = default;
    InstanceMask(Vec3i d, Vec3d sp = {1.0, 1.0, 1.0}, Vec3d org = {0.0, 0.0, 0.0})
        : dims(d), spacing(sp), origin(org),
          ids(static_cast<std::size_t>(d.x) * d.y * d.z, 0) {}

    std::size_t voxel_count() const {
        return static_cast<std::size_t>(dims.x) * dims.y * dims.z;
    }
    std::size_t index(int ix, int iy, int iz) const {
        return (static_cast<std::size_t>(iz) * dims.y + iy) * dims.x + ix;
    }
    bool in_bounds(int ix, int iy, int iz) const {
        return ix >= 0 && iy >= 0 && iz >= 0 && ix < dims.x && iy < dims.y && iz < dims.z;
    }
    std::uint16_t& at(int ix, int iy, int iz) { return ids[index(ix, iy, iz)]; }
    std::uint16_t at(int ix, int iy, int iz) const { return ids[index(ix, iy, iz)]; }

    /// Every nonzero id must have a record; throws otherwise.
    void check_records() const {
        for (std::uint16_t id : ids)
            if (id != 0 && !records.count(id))
                throw std::invalid_argument("instance id " + std::to_string(id) + " has no record");
    }
};

/// A patch window: `size` voxels centered at `center` (offset floor(size/2));
/// regions outside the grid read as `pad_value`.
struct PatchSpec {
    Vec3i center;
    Vec3i size;
    double pad_value = 0.0;

    Vec3i start() const { return {center.x - size.x / 2, center.y - size.y / 2, center.z - size.z / 2}; }
};

template <typename T>
Grid3<T> extract_patch(const Grid3<T>& grid, const PatchSpec& spec) {
    if (spec.size.x < 1 || spec.size.y < 1 || spec.size.z < 1)
        throw std::invalid_argument("extract_patch: size components must be >= 1");
    Grid3<T> patch(spec.size, static_cast<T>(spec.pad_value), grid.spacing);
    const Vec3i s = spec.start();
    patch.origin = {grid.origin.x + s.x * grid.spacing.x,
                    grid.origin.y + s.y * grid.spacing.y,
                    grid.origin.z + s.z * grid.spacing.z};
    for (int k = 0; k < spec.size.z; ++k) {
        const int gz = s.z + k;
        if (gz < 0 || gz >= grid.dims.z) continue;
        for (int j = 0; j < spec.size.y; ++j) {
            const int gy = s.y + j;
            if (gy < 0 || gy >= grid.dims.y) continue;
            const int x0 = std::max(0, -s.x);
            const int x1 = std::min(spec.size.x, grid.dims.x - s.x);
            for (int i = x0; i < x1; ++i)
                patch.at(i, j, k) = grid.at(s.x + i, gy, gz);
        }
    }
    return patch;
}

/// Patch view of an instance mask's ids (background pad).
inline Grid3<std::uint16_t> extract_patch_ids(const InstanceMask& mask, const PatchSpec& spec) {
    Grid3<std::uint16_t> src;
    src.dims = mask.dims;
    src.spacing = mask.spacing;
    src.origin = mask.origin;
    src.values = mask.ids;
    PatchSpec s = spec;
    s.pad_value = 0;
    return extract_patch(src, s);
}

/// Writes a binary patch into the mask under a fresh id. Voxels already
/// owned by another instance are never overwritten (first-written wins);
/// out-of-bounds parts of the patch are dropped.
template <typename T>
InstanceMask paste_instance(InstanceMask dst, const Grid3<T>& binary_patch, const PatchSpec& spec,
                            std::uint16_t id, InstanceRecord record) {
    if (id == 0) throw std::invalid_argument("paste_instance: id must be nonzero");
    if (dst.records.count(id))
        throw std::invalid_argument("paste_instance: duplicate instance id " + std::to_string(id));
    if (binary_patch.dims != spec.size)
        throw std::invalid_argument("paste_instance: patch dims do not match spec size");
    const Vec3i s = spec.start();
    for (int k = 0; k < spec.size.z; ++k) {
        const int gz = s.z + k;
        if (gz < 0 || gz >= dst.dims.z) continue;
        for (int j = 0; j < spec.size.y; ++j) {
            const int gy = s.y + j;
            if (gy < 0 || gy >= dst.dims.y) continue;
            for (int i = 0; i < spec.size.x; ++i) {
                const int gx = s.x + i;
                if (gx < 0 || gx >= dst.dims.x) continue;
                if (binary_patch.at(i, j, k) > static_cast<T>(0.5)) {
                    std::uint16_t& cell = dst.at(gx, gy, gz);
                    if (cell == 0) cell = id;
                }
            }
        }
    }
    dst.records[id] = record;
    return dst;
}

enum class ResampleMode { trilinear, nearest };

namespace detail {

// Continuous source index of output voxel i: centers at (i+1/2)*t map onto
// source centers at (j+1/2)*s.
inline double source_coord(int i, double t, double s) { return (i + 0.5) * t / s - 0.5; }

inline int nearest_index(double u, int n) {
    long j = std::llround(u);  // half away from zero
    return static_cast<int>(std::clamp<long>(j, 0, n - 1));
}

}  // namespace detail

template <typename T>
Grid3<T> resample_to_isotropic(const Grid3<T>& grid, double target_spacing, ResampleMode mode) {
    if (!(target_spacing > 0) || !std::isfinite(target_spacing))
        throw std::invalid_argument("resample_to_isotropic: target spacing must be positive and finite");
    validate_grid(grid);
    if (grid.spacing.x == target_spacing && grid.spacing.y == target_spacing &&
        grid.spacing.z == target_spacing)
        return grid;

    Vec3i odims;
    for (int a = 0; a < 3; ++a)
        odims[a] = std::max(1, static_cast<int>(std::llround(grid.dims[a] * grid.spacing[a] / target_spacing)));
    Grid3<T> out(odims, T{}, {target_spacing, target_spacing, target_spacing}, grid.origin);

    for (int k = 0; k < odims.z; ++k) {
        const double uz = detail::source_coord(k, target_spacing, grid.spacing.z);
        for (int j = 0; j < odims.y; ++j) {
            const double uy = detail::source_coord(j, target_spacing, grid.spacing.y);
            for (int i = 0; i < odims.x; ++i) {
                const double ux = detail::source_coord(i, target_spacing, grid.spacing.x);
                if (mode == ResampleMode::nearest) {
                    out.at(i, j, k) = grid.at(detail::nearest_index(ux, grid.dims.x),
                                              detail::nearest_index(uy, grid.dims.y),
                                              detail::nearest_index(uz, grid.dims.z));
                } else {
                    const auto lerp_axis = [](double u, int n, int& lo, int& hi, double& f) {
                        lo = static_cast<int>(std::floor(u));
                        f = u - lo;
                        hi = std::clamp(lo + 1, 0, n - 1);
                        lo = std::clamp(lo, 0, n - 1);
                    };
                    int x0, x1, y0, y1, z0, z1;
                    double fx, fy, fz;
                    lerp_axis(ux, grid.dims.x, x0, x1, fx);
                    lerp_axis(uy, grid.dims.y, y0, y1, fy);
                    lerp_axis(uz, grid.dims.z, z0, z1, fz);
                    double acc = 0;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx) {
                                const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
                                if (w == 0) continue;
                                acc += w * static_cast<double>(grid.at(dx ? x1 : x0, dy ? y1 : y0, dz ? z1 : z0));
                            }
                    out.at(i, j, k) = static_cast<T>(acc);
                }
            }
        }
    }
    return out;
}

struct MaskResampleResult {
    InstanceMask mask;
    std::vector<std::uint16_t> vanished;  // instances left with zero voxels
};

/// Nearest-neighbor resampling of instance ids onto the reference grid.
/// Records are carried over unchanged; instances that end up with zero
/// voxels are listed in `vanished`.
template <typename T>
MaskResampleResult resample_mask_to_grid(const InstanceMask& mask, const Grid3<T>& reference) {
    validate_grid(reference);
    InstanceMask out(reference.dims, reference.spacing, reference.origin);
    out.records = mask.records;

    for (int k = 0; k < out.dims.z; ++k) {
        const double pz = reference.origin.z + (k + 0.5) * reference.spacing.z;
        const double uz = (pz - mask.origin.z) / mask.spacing.z - 0.5;
        const int sz = detail::nearest_index(uz, mask.dims.z);
        for (int j = 0; j < out.dims.y; ++j) {
            const double py = reference.origin.y + (j + 0.5) * reference.spacing.y;
            const double uy = (py - mask.origin.y) / mask.spacing.y - 0.5;
            const int sy = detail::nearest_index(uy, mask.dims.y);
            for (int i = 0; i < out.dims.x; ++i) {
                const double px = reference.origin.x + (i + 0.5) * reference.spacing.x;
                const double ux = (px - mask.origin.x) / mask.spacing.x - 0.5;
                out.at(i, j, k) = mask.at(detail::nearest_index(ux, mask.dims.x), sy, sz);
            }
        }
    }

    MaskResampleResult result{std::move(out), {}};
    std::map<std::uint16_t, std::size_t> counts;
    for (std::uint16_t id : result.mask.ids)
        if (id != 0) ++counts[id];
    for (const auto& [id, rec] : result.mask.records)
        if (!counts.count(id)) result.vanished.push_back(id);
    return result;
}

}  // namespace iterseg
