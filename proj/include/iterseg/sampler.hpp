#pragma once

// Training patch sampler and augmentations. 75% of the patches are centered
// inside a randomly chosen instance's bounding box with memory derived from
// the instances preceding it in traversal order; 25% are drawn from anywhere
// with all visible bone flagged as memory and an empty target.

#include <stdexcept>
#include <vector>

#include "iterseg/loss.hpp"
#include "iterseg/rng.hpp"
#include "iterseg/volume.hpp"

namespace iterseg {

template <typename T = float>
struct ScanEntry {
    Grid3<T> image;
    InstanceMask reference;

    struct InstanceInfo {
        std::uint16_t id = 0;
        Vec3i bbox_lo, bbox_hi;  // inclusive
        std::size_t voxels = 0;  // whole-scan count
        int label = 0;
        bool complete = true;
        int min_z = 0;
    };
    std::vector<InstanceInfo> instances;  // ordered by ascending min_z (bottom-up)
};

template <typename T>
ScanEntry<T> make_scan_entry(Grid3<T> image, InstanceMask reference) {
    if (image.dims != reference.dims)
        throw std::invalid_argument("make_scan_entry: image and mask dims differ");
    reference.check_records();
    ScanEntry<T> entry{std::move(image), std::move(reference), {}};

    std::map<std::uint16_t, typename ScanEntry<T>::InstanceInfo> info;
    const auto& mask = entry.reference;
    for (int k = 0; k < mask.dims.z; ++k)
        for (int j = 0; j < mask.dims.y; ++j)
            for (int i = 0; i < mask.dims.x; ++i) {
                const std::uint16_t id = mask.at(i, j, k);
                if (id == 0) continue;
                auto [it, fresh] = info.try_emplace(id);
                auto& inst = it->second;
                if (fresh) {
                    inst.id = id;
                    inst.bbox_lo = inst.bbox_hi = {i, j, k};
                } else {
                    inst.bbox_lo = {std::min(inst.bbox_lo.x, i), std::min(inst.bbox_lo.y, j),
                                    std::min(inst.bbox_lo.z, k)};
                    inst.bbox_hi = {std::max(inst.bbox_hi.x, i), std::max(inst.bbox_hi.y, j),
                                    std::max(inst.bbox_hi.z, k)};
                }
                ++inst.voxels;
            }
    for (auto& [id, inst] : info) {
        const auto& rec = mask.records.at(id);
        inst.label = rec.anatomical_label;
        inst.complete = rec.complete;
        inst.min_z = inst.bbox_lo.z;
        entry.instances.push_back(inst);
    }
    std::sort(entry.instances.begin(), entry.instances.end(),
              [](const auto& a, const auto& b) { return a.min_z < b.min_z; });
    return entry;
}

template <typename T = float>
struct TrainingSample {
    Grid3<T> image;
    Grid3<T> memory;
    Targets<T> targets;
    bool scan_complete = true;  // scan-level completeness of the target instance
    bool random_draw = false;   // came from the 25% random-anywhere branch
};

namespace sampler_detail {

/// t_C rule: completely visible in the patch = marked complete in the scan
/// and at most 2% of the instance's reference volume missing from the patch.
inline bool patch_complete(bool scan_complete, std::size_t in_patch, std::size_t whole) {
    if (!scan_complete) return false;
    if (whole == 0) return false;
    return static_cast<double>(whole - in_patch) <= 0.02 * static_cast<double>(whole);
}

}  // namespace sampler_detail

/// Draws one training patch from the dataset. `direction` fixes the
/// traversal order used to derive the memory channel.
template <typename T>
TrainingSample<T> sample_training_patch(const std::vector<ScanEntry<T>>& dataset, Vec3i patch_size,
                                        Direction direction, double random_fraction, const LossConfig& loss_cfg,
                                        Rng& rng) {
    if (dataset.empty()) throw std::invalid_argument("sample_training_patch: dataset is empty");
    const auto& scan = dataset[rng.integer(dataset.size())];
    const bool random_draw = rng.uniform() < random_fraction || scan.instances.empty();

    TrainingSample<T> out;
    out.random_draw = random_draw;

    PatchSpec spec;
    spec.size = patch_size;
    spec.pad_value = 0.0;

    BinaryGrid memory_full(scan.reference.dims);
    std::size_t target_id = 0;

    if (random_draw) {
        for (int a = 0; a < 3; ++a) spec.center[a] = static_cast<int>(rng.integer(scan.image.dims[a]));
        // all visible bone goes to memory; the target stays empty
        for (std::size_t i = 0; i < scan.reference.ids.size(); ++i)
            memory_full.values[i] = scan.reference.ids[i] != 0;
        out.scan_complete = false;
    } else {
        const auto& inst = scan.instances[rng.integer(scan.instances.size())];
        target_id = inst.id;
        for (int a = 0; a < 3; ++a) {
            const int lo = inst.bbox_lo[a], hi = inst.bbox_hi[a];
            spec.center[a] = lo + static_cast<int>(rng.integer(static_cast<std::uint64_t>(hi - lo + 1)));
        }
        // memory = instances strictly preceding the target in traversal order
        std::vector<std::uint16_t> preceding;
        if (direction == Direction::up) {
            for (const auto& p : scan.instances) {
                if (p.id == inst.id) break;
                preceding.push_back(p.id);
            }
        } else {
            for (auto it = scan.instances.rbegin(); it != scan.instances.rend(); ++it) {
                if (it->id == inst.id) break;
                preceding.push_back(it->id);
            }
        }
        for (std::size_t i = 0; i < scan.reference.ids.size(); ++i) {
            const std::uint16_t id = scan.reference.ids[i];
            if (id == 0) continue;
            for (std::uint16_t p : preceding)
                if (id == p) {
                    memory_full.values[i] = 1;
                    break;
                }
        }
        out.scan_complete = inst.complete;
    }

    out.image = extract_patch(scan.image, spec);
    Grid3<T> mem_t(patch_size, T{}, scan.image.spacing);
    {
        PatchSpec mem_spec = spec;
        mem_spec.pad_value = 0.0;
        auto mem_patch = extract_patch(memory_full, mem_spec);
        for (std::size_t i = 0; i < mem_patch.values.size(); ++i)
            mem_t.values[i] = static_cast<T>(mem_patch.values[i]);
        mem_t.origin = out.image.origin;
    }
    out.memory = std::move(mem_t);

    out.targets.t = Grid3<T>(patch_size, T{}, out.image.spacing, out.image.origin);
    std::size_t in_patch = 0, whole = 0;
    if (target_id != 0) {
        const auto ids_patch = extract_patch_ids(scan.reference, spec);
        for (std::size_t i = 0; i < ids_patch.values.size(); ++i)
            if (ids_patch.values[i] == target_id) {
                out.targets.t.values[i] = T{1};
                ++in_patch;
            }
        for (const auto& inst : scan.instances)
            if (inst.id == target_id) {
                whole = inst.voxels;
                out.targets.t_L = inst.label;
            }
    }
    out.targets.total_target_voxels = whole;
    out.targets.t_C = sampler_detail::patch_complete(out.scan_complete, in_patch, whole);
    out.targets.weights = target_weights(out.targets.t, loss_cfg);
    return out;
}

struct AugmentConfig {
    double noise_sigma_min = 0, noise_sigma_max = 0;    // additive Gaussian noise
    double smooth_sigma_min = 0, smooth_sigma_max = 0;  // Gaussian smoothing
    int zcrop_max = 0;                                  // border slab thickness, voxels
    double pad_value = 0;
};

namespace sampler_detail {

template <typename T>
void gaussian_smooth_axis(Grid3<T>& g, double sigma, int axis) {
    const int radius = std::max(1, static_cast<int>(std::ceil(2.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= sum;

    Grid3<T> src = g;
    const Vec3i d = g.dims;
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                double acc = 0;
                for (int o = -radius; o <= radius; ++o) {
                    int ci = i, cj = j, ck = k;
                    (axis == 0 ? ci : axis == 1 ? cj : ck) += o;
                    ci = std::clamp(ci, 0, d.x - 1);
                    cj = std::clamp(cj, 0, d.y - 1);
                    ck = std::clamp(ck, 0, d.z - 1);
                    acc += kernel[o + radius] * static_cast<double>(src.at(ci, cj, ck));
                }
                g.at(i, j, k) = static_cast<T>(acc);
            }
}

}  // namespace sampler_detail

/// Applies noise, smoothing and z-cropping in that fixed order. Only the
/// image is distorted; z-cropping also clears the target slab and
/// recomputes t_C under the 2% rule.
template <typename T>
void augment(TrainingSample<T>& sample, const AugmentConfig& cfg, Rng& rng) {
    if (cfg.noise_sigma_max > 0) {
        const double sigma = rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);
        if (sigma > 0)
            for (auto& v : sample.image.values) v = static_cast<T>(v + rng.normal(0.0, sigma));
    }
    if (cfg.smooth_sigma_max > 0) {
        const double sigma = rng.uniform(cfg.smooth_sigma_min, cfg.smooth_sigma_max);
        if (sigma > 0)
            for (int axis = 0; axis < 3; ++axis)
                sampler_detail::gaussian_smooth_axis(sample.image, sigma, axis);
    }
    if (cfg.zcrop_max > 0) {
        const int thickness = static_cast<int>(rng.integer(static_cast<std::uint64_t>(cfg.zcrop_max) + 1));
        const bool top = rng.uniform() < 0.5;
        if (thickness > 0) {
            const Vec3i d = sample.image.dims;
            const int k0 = top ? d.z - thickness : 0;
            const int k1 = top ? d.z : thickness;
            for (int k = k0; k < std::min(k1, d.z); ++k)
                for (int j = 0; j < d.y; ++j)
                    for (int i = 0; i < d.x; ++i) {
                        sample.image.at(i, j, k) = static_cast<T>(cfg.pad_value);
                        sample.targets.t.at(i, j, k) = T{};
                    }
            std::size_t in_patch = 0;
            for (T v : sample.targets.t.values) in_patch += (v > static_cast<T>(0.5));
            sample.targets.t_C = sampler_detail::patch_complete(sample.scan_complete, in_patch,
                                                                sample.targets.total_target_voxels);
        }
    }
}

}  // namespace iterseg
