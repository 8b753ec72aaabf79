#pragma once

// Ground-truth oracle implementing the patch prediction contract: given the
// reference mask it emulates a perfectly trained network, returning the
// first not-yet-segmented instance in traversal direction.

#include <algorithm>
#include <map>
#include <stdexcept>

#include "iterseg/network.hpp"
#include "iterseg/prediction.hpp"
#include "iterseg/volume.hpp"

namespace iterseg {

/// Predicts from the reference mask. An instance counts as "in memory" when
/// more than 50% of its in-patch voxels are flagged in the memory patch;
/// among the remaining candidates, up-traversal picks the one with the
/// smallest minimum z, down-traversal the one with the largest maximum z.
template <typename T>
PatchPrediction<T> oracle_predict(const Grid3<T>& image_patch, const Grid3<T>& memory_patch,
                                  const InstanceMask& reference, const PatchSpec& spec, Direction direction) {
    if (image_patch.dims != memory_patch.dims)
        throw std::invalid_argument("oracle_predict: image and memory dims differ");
    if (image_patch.dims != spec.size)
        throw std::invalid_argument("oracle_predict: patch dims do not match spec size");

    struct Candidate {
        std::size_t in_patch = 0;
        std::size_t flagged = 0;
        int min_z = std::numeric_limits<int>::max();
        int max_z = std::numeric_limits<int>::min();
    };
    std::map<std::uint16_t, Candidate> found;

    const Vec3i s = spec.start();
    for (int k = 0; k < spec.size.z; ++k) {
        const int gz = s.z + k;
        if (gz < 0 || gz >= reference.dims.z) continue;
        for (int j = 0; j < spec.size.y; ++j) {
            const int gy = s.y + j;
            if (gy < 0 || gy >= reference.dims.y) continue;
            for (int i = 0; i < spec.size.x; ++i) {
                const int gx = s.x + i;
                if (gx < 0 || gx >= reference.dims.x) continue;
                const std::uint16_t id = reference.at(gx, gy, gz);
                if (id == 0) continue;
                auto& c = found[id];
                ++c.in_patch;
                if (memory_patch.at(i, j, k) > static_cast<T>(0.5)) ++c.flagged;
                c.min_z = std::min(c.min_z, gz);
                c.max_z = std::max(c.max_z, gz);
            }
        }
    }

    std::uint16_t best = 0;
    for (const auto& [id, c] : found) {
        if (2 * c.flagged > c.in_patch) continue;  // already in memory
        if (best == 0) {
            best = id;
            continue;
        }
        const auto& b = found[best];
        if (direction == Direction::up ? (c.min_z < b.min_z) : (c.max_z > b.max_z)) best = id;
    }

    PatchPrediction<T> out;
    out.S = Grid3<T>(spec.size, T{}, image_patch.spacing, image_patch.origin);
    if (best == 0) {
        out.L = 0.0;
        out.C = 0.0;
        return out;
    }
    for (int k = 0; k < spec.size.z; ++k) {
        const int gz = s.z + k;
        if (gz < 0 || gz >= reference.dims.z) continue;
        for (int j = 0; j < spec.size.y; ++j) {
            const int gy = s.y + j;
            if (gy < 0 || gy >= reference.dims.y) continue;
            for (int i = 0; i < spec.size.x; ++i) {
                const int gx = s.x + i;
                if (gx >= 0 && gx < reference.dims.x && reference.at(gx, gy, gz) == best)
                    out.S.at(i, j, k) = T{1};
            }
        }
    }
    const auto& rec = reference.records.at(best);
    out.L = static_cast<double>(rec.anatomical_label);
    out.C = rec.complete ? 1.0 : 0.0;
    return out;
}

/// Wraps the oracle into the segmentor object shape used by the traversal
/// engine (predict at a patch location given image and memory patches).
template <typename T>
struct OracleSegmentor {
    const InstanceMask* reference = nullptr;

    PatchPrediction<T> predict_at(const Grid3<T>& image_patch, const Grid3<T>& memory_patch,
                                  const PatchSpec& spec, Direction direction) const {
        return oracle_predict(image_patch, memory_patch, *reference, spec, direction);
    }
};

/// Same object shape backed by a trained network; the patch location is
/// irrelevant to the network.
template <typename T>
struct NetworkSegmentor {
    const TinyFcn<T>* net = nullptr;

    PatchPrediction<T> predict_at(const Grid3<T>& image_patch, const Grid3<T>& memory_patch,
                                  const PatchSpec&, Direction direction) const {
        return net->predict(image_patch, memory_patch, direction);
    }
};

}  // namespace iterseg
