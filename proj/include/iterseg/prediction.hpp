#pragma once

// The segmentor output contract: binary-segmentation probabilities plus the
// label regression value and completeness probability for one patch.

#include "iterseg/volume.hpp"

namespace iterseg {

enum class Direction { up, down };

inline const char* to_string(Direction d) { return d == Direction::up ? "up" : "down"; }

/// S: per-voxel probability that the voxel belongs to the targeted instance.
/// L: anatomical label regression value (>= 0, ReLU contract).
/// C: probability that the instance is completely inside the volume.
template <typename T = float>
struct PatchPrediction {
    Grid3<T> S;
    double L = 0.0;
    double C = 1.0;
};

}  // namespace iterseg
