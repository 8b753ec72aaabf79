#pragma once

// Exact Euclidean distance transform via the separable squared-distance
// algorithm (per-axis lower envelope of parabolas), plus six-connected
// surface extraction. Distances are in mm and honor anisotropic spacing.

#include <cmath>
#include <limits>
#include <vector>

#include "iterseg/volume.hpp"

namespace iterseg {

inline constexpr double kInfDistance = std::numeric_limits<double>::infinity();

namespace edt_detail {

// 1D squared-distance transform: d[q] = min_j ((q-j)*h)^2 + f[j].
// Entries with f = +inf carry no site and are skipped.
inline void lower_envelope(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                           std::vector<double>& z, int n, double h) {
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInfDistance) continue;
        const double xq = q * h;
        double s = 0;
        while (k >= 0) {
            const double xv = v[k] * h;
            s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2 * (xq - xv));
            if (s <= z[k])
                --k;
            else
                break;
        }
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInfDistance;
        } else {
            ++k;
            v[k] = q;
            z[k] = s;
        }
        z[k + 1] = kInfDistance;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) d[q] = kInfDistance;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        const double xq = q * h;
        while (z[j + 1] < xq) ++j;
        const double dx = xq - v[j] * h;
        d[q] = dx * dx + f[v[j]];
    }
}

template <typename T>
bool is_set(T v) {
    return v > static_cast<T>(0.5);
}

}  // namespace edt_detail

/// Squared Euclidean distance (mm^2) from every voxel center to the nearest
/// set voxel center of `sites`. No set voxels → all +inf.
template <typename T>
Grid3<double> squared_distance_to_sites(const Grid3<T>& sites) {
    const Vec3i d = sites.dims;
    Grid3<double> out(d, 0.0, sites.spacing, sites.origin);

    const int nmax = std::max({d.x, d.y, d.z});
    std::vector<double> f(nmax), g(nmax), z(nmax + 1);
    std::vector<int> v(nmax);

    // pass 1: along x, seeded from the site mask
    for (int kz = 0; kz < d.z; ++kz)
        for (int ky = 0; ky < d.y; ++ky) {
            for (int i = 0; i < d.x; ++i)
                f[i] = edt_detail::is_set(sites.at(i, ky, kz)) ? 0.0 : kInfDistance;
            edt_detail::lower_envelope(f, g, v, z, d.x, sites.spacing.x);
            for (int i = 0; i < d.x; ++i) out.at(i, ky, kz) = g[i];
        }
    // pass 2: along y
    for (int kz = 0; kz < d.z; ++kz)
        for (int kx = 0; kx < d.x; ++kx) {
            for (int j = 0; j < d.y; ++j) f[j] = out.at(kx, j, kz);
            edt_detail::lower_envelope(f, g, v, z, d.y, sites.spacing.y);
            for (int j = 0; j < d.y; ++j) out.at(kx, j, kz) = g[j];
        }
    // pass 3: along z
    for (int ky = 0; ky < d.y; ++ky)
        for (int kx = 0; kx < d.x; ++kx) {
            for (int k = 0; k < d.z; ++k) f[k] = out.at(kx, ky, k);
            edt_detail::lower_envelope(f, g, v, z, d.z, sites.spacing.z);
            for (int k = 0; k < d.z; ++k) out.at(kx, ky, k) = g[k];
        }
    return out;
}

/// Set voxels of `target` that have at least one six-connected in-bounds
/// neighbor that is unset. (A full-grid target therefore has no surface.)
template <typename T>
BinaryGrid surface_voxels(const Grid3<T>& target) {
    BinaryGrid surf(target.dims, 0, target.spacing, target.origin);
    static constexpr int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int k = 0; k < target.dims.z; ++k)
        for (int j = 0; j < target.dims.y; ++j)
            for (int i = 0; i < target.dims.x; ++i) {
                if (!edt_detail::is_set(target.at(i, j, k))) continue;
                for (const auto& o : off) {
                    const int nx = i + o[0], ny = j + o[1], nz = k + o[2];
                    if (target.in_bounds(nx, ny, nz) && !edt_detail::is_set(target.at(nx, ny, nz))) {
                        surf.at(i, j, k) = 1;
                        break;
                    }
                }
            }
    return surf;
}

/// Unsigned exact Euclidean distance (mm) from every voxel — inside and
/// outside alike — to the target's surface-voxel set. An all-zero target
/// yields the +inf sentinel everywhere.
template <typename T>
Grid3<double> distance_to_surface(const Grid3<T>& target) {
    auto sq = squared_distance_to_sites(surface_voxels(target));
    for (auto& v : sq.values) v = std::sqrt(v);
    return sq;
}

}  // namespace iterseg
