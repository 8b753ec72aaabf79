#pragma once

// Iterative instance-by-instance traversal: a patch slides over the volume
// until a large-enough fragment is detected, recenters on the fragment's
// bounding box until the center stabilizes, commits the converged instance
// to memory (and, completeness permitting, to the output), then continues
// from the same spot until the sliding grid is exhausted.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iterseg/prediction.hpp"
#include "iterseg/volume.hpp"

namespace iterseg {

struct TraversalConfig {
    Vec3i patch_size{32, 32, 32};
    long v_min = 1000;  // fragment threshold in voxels, calibrated for 1 mm spacing
    int delta_max = 2;
    int max_iter_per_vertebra = 10;
    Vec3i step{0, 0, 0};  // sliding stride; {0,0,0} = half the patch size
    Direction direction = Direction::up;
    double binarize_threshold = 0.5;
    std::optional<double> hu_surface_threshold;  // e.g. 200 for CT
    bool keep_incomplete_in_output = false;

    Vec3i effective_step() const {
        if (step.x == 0 && step.y == 0 && step.z == 0)
            return {std::max(1, patch_size.x / 2), std::max(1, patch_size.y / 2),
                    std::max(1, patch_size.z / 2)};
        return step;
    }

    void validate() const {
        for (int a = 0; a < 3; ++a)
            if (patch_size[a] < 1)
                throw std::invalid_argument("TraversalConfig: patch_size components must be >= 1");
        if (v_min < 1) throw std::invalid_argument("TraversalConfig: v_min must be >= 1");
        if (delta_max < 0) throw std::invalid_argument("TraversalConfig: delta_max must be >= 0");
        if (max_iter_per_vertebra < 2)
            throw std::invalid_argument("TraversalConfig: max_iter_per_vertebra must be >= 2");
        const Vec3i st = effective_step();
        for (int a = 0; a < 3; ++a)
            if (st[a] < 1) throw std::invalid_argument("TraversalConfig: step components must be >= 1");
        if (!(binarize_threshold > 0.0) || !(binarize_threshold < 1.0))
            throw std::invalid_argument("TraversalConfig: binarize_threshold must be in (0,1)");
        if (hu_surface_threshold && !std::isfinite(*hu_surface_threshold))
            throw std::invalid_argument("TraversalConfig: hu_surface_threshold must be finite");
    }
};

/// Keeps the physical fragment-volume threshold constant across working
/// resolutions: 1000 voxels at 1 mm.
inline long v_min_for_spacing(double working_spacing_mm, double base_at_1mm = 1000.0) {
    if (!(working_spacing_mm > 0) || !std::isfinite(working_spacing_mm))
        throw std::invalid_argument("v_min_for_spacing: spacing must be positive and finite");
    const double scaled = base_at_1mm / (working_spacing_mm * working_spacing_mm * working_spacing_mm);
    return std::max(1L, std::lround(scaled));
}

struct VertebraRecord {
    std::uint16_t instance_id = 0;
    double raw_label_value = 0.0;    // p_L at the converged position
    double completeness_prob = 0.0;  // p_C
    bool complete = false;           // p_C >= 0.5
    int final_label = 0;             // assigned by label refinement, 0 until then
    Vec3i converged_center;
    int n_iterations = 0;
    bool forced_midpoint = false;
};

enum class TraversalPhase { sliding, converging };

inline const char* to_string(TraversalPhase p) {
    return p == TraversalPhase::sliding ? "sliding" : "converging";
}

struct TraceEntry {
    long t = 0;  // prediction counter over the whole run
    Vec3i x;     // patch center probed
    std::size_t v = 0;  // detected in-bounds voxels
    TraversalPhase phase = TraversalPhase::sliding;
    bool converged = false;
    bool forced_midpoint = false;
    std::size_t memory_voxels = 0;  // after this iteration's updates
};

struct TraversalResult {
    InstanceMask mask;
    std::vector<VertebraRecord> records;
    std::vector<TraceEntry> trace;
};

/// Ordered patch centers for the sliding phase: per axis a stride grid
/// clamped so patches stay maximally inside (last position always flush with
/// the far border), swept z-major from the boundary where traversal starts
/// (z ascending for up, descending for down), then y, then x.
inline std::vector<Vec3i> sliding_positions(Vec3i dims, Vec3i patch_size, Vec3i step, Direction direction) {
    auto axis_positions = [](int d, int s, int st) {
        std::vector<int> out;
        if (d <= s) {
            out.push_back(d / 2);
            return out;
        }
        const int lo = s / 2;
        const int hi = d - s + s / 2;
        for (int c = lo; c < hi; c += st) out.push_back(c);
        out.push_back(hi);
        return out;
    };
    const auto xs = axis_positions(dims.x, patch_size.x, step.x);
    const auto ys = axis_positions(dims.y, patch_size.y, step.y);
    auto zs = axis_positions(dims.z, patch_size.z, step.z);
    if (direction == Direction::down) std::reverse(zs.begin(), zs.end());

    std::vector<Vec3i> centers;
    centers.reserve(xs.size() * ys.size() * zs.size());
    for (int z : zs)
        for (int y : ys)
            for (int x : xs) centers.push_back({x, y, z});
    return centers;
}

/// Volume-coordinate center of the detected fragment's bounding box:
/// per-axis (min+max)/2, rounded half away from zero, clamped into the
/// volume so the follow-up patch stays within padded bounds.
inline Vec3i fragment_bbox_center(const Grid3<std::uint8_t>& detected, const PatchSpec& spec,
                                  Vec3i volume_dims) {
    const Vec3i s = spec.start();
    Vec3i lo{0, 0, 0}, hi{0, 0, 0};
    bool any = false;
    for (int k = 0; k < detected.dims.z; ++k)
        for (int j = 0; j < detected.dims.y; ++j)
            for (int i = 0; i < detected.dims.x; ++i) {
                if (!detected.at(i, j, k)) continue;
                const Vec3i g{s.x + i, s.y + j, s.z + k};
                if (g.x < 0 || g.x >= volume_dims.x || g.y < 0 || g.y >= volume_dims.y || g.z < 0 ||
                    g.z >= volume_dims.z)
                    continue;
                if (!any) {
                    lo = hi = g;
                    any = true;
                } else {
                    lo = {std::min(lo.x, g.x), std::min(lo.y, g.y), std::min(lo.z, g.z)};
                    hi = {std::max(hi.x, g.x), std::max(hi.y, g.y), std::max(hi.z, g.z)};
                }
            }
    if (!any) throw std::logic_error("fragment_bbox_center: no detected voxel inside the volume");
    Vec3i c;
    for (int a = 0; a < 3; ++a) {
        const auto r = static_cast<int>(std::llround((lo[a] + hi[a]) / 2.0));
        c[a] = std::clamp(r, 0, volume_dims[a] - 1);
    }
    return c;
}

/// Iteratively strips detected surface voxels whose image value lies below
/// the threshold, until no voxel qualifies. A surface voxel has at least one
/// six-connected in-bounds unset neighbor.
template <typename T>
Grid3<std::uint8_t> surface_refine_ct(Grid3<std::uint8_t> detected, const Grid3<T>& image_patch,
                                      double threshold) {
    if (detected.dims != image_patch.dims)
        throw std::invalid_argument("surface_refine_ct: patch dims mismatch");
    const Vec3i d = detected.dims;
    constexpr int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    std::vector<std::size_t> doomed;
    for (;;) {
        doomed.clear();
        for (int k = 0; k < d.z; ++k)
            for (int j = 0; j < d.y; ++j)
                for (int i = 0; i < d.x; ++i) {
                    if (!detected.at(i, j, k)) continue;
                    if (!(static_cast<double>(image_patch.at(i, j, k)) < threshold)) continue;
                    for (const auto& o : off) {
                        const int nx = i + o[0], ny = j + o[1], nz = k + o[2];
                        if (!detected.in_bounds(nx, ny, nz)) continue;
                        if (!detected.at(nx, ny, nz)) {
                            doomed.push_back(detected.index(i, j, k));
                            break;
                        }
                    }
                }
        if (doomed.empty()) return detected;
        for (std::size_t idx : doomed) detected.values[idx] = 0;
    }
}

/// Runs the full engine over one isotropic volume. The segmentor must
/// provide predict_at(image_patch, memory_patch, spec, direction) returning
/// a PatchPrediction whose S matches the patch size.
template <typename T, typename Segmentor>
TraversalResult run_traversal(const Grid3<T>& image, Segmentor&& segmentor, const TraversalConfig& cfg) {
    cfg.validate();
    validate_grid(image);
    if (!image.isotropic())
        throw std::invalid_argument("run_traversal: image must be isotropic; resample first");

    const Vec3i step = cfg.effective_step();
    const auto positions = sliding_positions(image.dims, cfg.patch_size, step, cfg.direction);
    const long hard_cap =
        static_cast<long>(positions.size()) + 25L * static_cast<long>(cfg.max_iter_per_vertebra);

    TraversalResult res;
    res.mask = InstanceMask(image.dims, image.spacing, image.origin);
    Grid3<T> memory(image.dims, T{}, image.spacing, image.origin);
    std::size_t memory_count = 0;

    std::size_t cursor = 0;
    TraversalPhase phase = TraversalPhase::sliding;
    Vec3i x{0, 0, 0};
    std::optional<Vec3i> x_prev;
    int iters = 0;               // predictions spent on the current vertebra
    bool midpoint_probe = false;  // current probe is the post-midpoint final one
    std::uint16_t next_id = 1;
    long t = 0;

    auto log_row = [&](std::size_t v, bool converged, bool forced) {
        res.trace.push_back({t, x, v, phase, converged, forced, memory_count});
        ++t;
    };
    auto revert_to_sliding = [&] {
        phase = TraversalPhase::sliding;
        x_prev.reset();
        iters = 0;
        midpoint_probe = false;
    };

    while (true) {
        if (phase == TraversalPhase::sliding) {
            if (cursor >= positions.size()) break;  // grid exhausted after the last detection
            x = positions[cursor];
        }
        if (t >= hard_cap)
            throw std::runtime_error(
                "run_traversal: iteration hard cap (" + std::to_string(hard_cap) +
                ") exceeded in phase " + to_string(phase) + " at center (" + std::to_string(x.x) +
                "," + std::to_string(x.y) + "," + std::to_string(x.z) +
                "); the segmentor keeps detecting without converging");

        const PatchSpec spec{x, cfg.patch_size, 0.0};
        const auto img_patch = extract_patch(image, spec);
        const auto mem_patch = extract_patch(memory, spec);
        const auto pred = segmentor.predict_at(img_patch, mem_patch, spec, cfg.direction);
        if (pred.S.dims != cfg.patch_size)
            throw std::runtime_error("run_traversal: segmentor returned a mismatched patch shape");

        // binarize; only in-bounds voxels count toward the fragment
        Grid3<std::uint8_t> det(cfg.patch_size, 0);
        std::size_t v = 0;
        const Vec3i s0 = spec.start();
        for (int k = 0; k < cfg.patch_size.z; ++k)
            for (int j = 0; j < cfg.patch_size.y; ++j)
                for (int i = 0; i < cfg.patch_size.x; ++i) {
                    if (!(static_cast<double>(pred.S.at(i, j, k)) > cfg.binarize_threshold)) continue;
                    if (!image.in_bounds(s0.x + i, s0.y + j, s0.z + k)) continue;
                    det.at(i, j, k) = 1;
                    ++v;
                }

        if (phase == TraversalPhase::sliding) {
            log_row(v, false, false);
            ++cursor;  // sliding later resumes past this spot
            if (v >= cfg.v_min) {
                phase = TraversalPhase::converging;
                x_prev = x;
                x = fragment_bbox_center(det, spec, image.dims);
                iters = 1;  // the detection probe opens this vertebra's budget
            }
            continue;
        }

        // --- converging phase ---
        ++iters;
        const bool accept_forced = midpoint_probe && v > 0;
        const bool accept_converged =
            !midpoint_probe && v >= cfg.v_min && x_prev &&
            std::abs(x.x - x_prev->x) <= cfg.delta_max && std::abs(x.y - x_prev->y) <= cfg.delta_max &&
            std::abs(x.z - x_prev->z) <= cfg.delta_max;

        if (accept_forced || accept_converged) {
            for (int k = 0; k < cfg.patch_size.z; ++k)
                for (int j = 0; j < cfg.patch_size.y; ++j)
                    for (int i = 0; i < cfg.patch_size.x; ++i) {
                        if (!det.at(i, j, k)) continue;
                        auto& m = memory.at(s0.x + i, s0.y + j, s0.z + k);
                        if (!(m > T(0.5))) {
                            m = T(1);
                            ++memory_count;
                        }
                    }
            const bool complete = pred.C >= 0.5;
            if (complete || cfg.keep_incomplete_in_output) {
                Grid3<std::uint8_t> out_det =
                    cfg.hu_surface_threshold
                        ? surface_refine_ct(det, img_patch, *cfg.hu_surface_threshold)
                        : det;
                InstanceRecord rec;
                rec.anatomical_label = static_cast<int>(std::llround(std::max(0.0, pred.L)));
                rec.complete = complete;
                res.mask = paste_instance(std::move(res.mask), out_det, spec, next_id, rec);
                res.records.push_back(
                    {next_id, pred.L, pred.C, complete, 0, x, iters, accept_forced});
                ++next_id;
            }
            log_row(v, true, accept_forced);
            // the same center is probed again for the next instance
            x_prev.reset();
            iters = 0;
            midpoint_probe = false;
            continue;
        }

        if (midpoint_probe || v < cfg.v_min) {
            // the midpoint probe found nothing, or the fragment was lost
            log_row(v, false, midpoint_probe);
            revert_to_sliding();
            continue;
        }

        if (iters >= cfg.max_iter_per_vertebra) {
            // oscillation breaker: one final probe between the last two centers
            const Vec3i mid{static_cast<int>(std::llround((x.x + x_prev->x) / 2.0)),
                            static_cast<int>(std::llround((x.y + x_prev->y) / 2.0)),
                            static_cast<int>(std::llround((x.z + x_prev->z) / 2.0))};
            log_row(v, false, false);
            x_prev = x;
            x = mid;
            midpoint_probe = true;
            continue;
        }

        log_row(v, false, false);
        x_prev = x;
        x = fragment_bbox_center(det, spec, image.dims);
    }

    return res;
}

}  // namespace iterseg
