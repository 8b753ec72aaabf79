#pragma once

// Maximum-likelihood anatomical labeling: per-instance label regression
// values become two-point probability distributions over adjacent integer
// labels; the globally consistent labeling is the contiguous ascending
// sequence with the highest mean per-instance mass.

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

namespace iterseg {

inline constexpr int kMinLabel = 1;
inline constexpr int kMaxLabel = 24;

struct LabelDistribution {
    std::map<int, double> support;  // label -> probability mass

    double mass(int label) const {
        auto it = support.find(label);
        return it == support.end() ? 0.0 : it->second;
    }
};

/// Mass (1-frac) on floor(value), frac on floor(value)+1; mass outside the
/// valid label range is dropped without renormalization.
inline LabelDistribution regression_to_distribution(double value) {
    if (value < 0) throw std::invalid_argument("regression_to_distribution: value must be >= 0");
    const int lo = static_cast<int>(std::floor(value));
    const double frac = value - lo;
    LabelDistribution dist;
    if (lo >= kMinLabel && lo <= kMaxLabel && 1.0 - frac > 0) dist.support[lo] = 1.0 - frac;
    if (lo + 1 >= kMinLabel && lo + 1 <= kMaxLabel && frac > 0) dist.support[lo + 1] = frac;
    return dist;
}

/// Refine raw regression values (ordered bottom-to-top) into the contiguous
/// ascending label sequence with the highest mean mass. Ties go to the
/// smaller starting label.
inline std::vector<int> refine_labels(const std::vector<double>& values) {
    const int k = static_cast<int>(values.size());
    if (k < 1) throw std::invalid_argument("refine_labels: need at least one value");
    if (k > kMaxLabel) throw std::invalid_argument("refine_labels: more instances than labels");

    std::vector<LabelDistribution> dists;
    dists.reserve(values.size());
    for (double v : values) dists.push_back(regression_to_distribution(v));

    int best_start = kMinLabel;
    double best_likelihood = -1.0;
    for (int s = kMinLabel; s + k - 1 <= kMaxLabel; ++s) {
        double sum = 0;
        for (int m = 0; m < k; ++m) sum += dists[m].mass(s + m);
        const double likelihood = sum / k;
        if (likelihood > best_likelihood) {  // strict: ties keep the smaller s
            best_likelihood = likelihood;
            best_start = s;
        }
    }

    std::vector<int> out(k);
    for (int m = 0; m < k; ++m) out[m] = best_start + m;
    return out;
}

}  // namespace iterseg
