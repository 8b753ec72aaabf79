#pragma once

// Training loss: surface-weighted soft false-positive/false-negative counts,
// lambda ramp over iterations, l1 label loss and completeness cross-entropy,
// with analytic gradients with respect to all prediction components.
//
//   L = lambda(n) * FP_soft + FN_soft + |p_L - t_L| + BCE(t_C, p_C)
//   FP_soft = sum_i w_i (1 - t_i) p_i,   FN_soft = sum_i w_i t_i (1 - p_i)
//   w_i = gamma * exp(-d_i^2 / sigma^2) + 1
//   lambda(n) = lambda_min + (1 - lambda_min) / (1 + exp(-theta)),
//   theta = (n - n_max/2) / (n_max/10)

#include <cmath>
#include <stdexcept>

#include "iterseg/distance_transform.hpp"
#include "iterseg/prediction.hpp"
#include "iterseg/volume.hpp"

namespace iterseg {

struct LossConfig {
    double gamma = 8.0;
    double sigma = 6.0;       // mm == voxels at the 1 mm isotropic working resolution
    double lambda_min = 0.1;
    long n_max = 1;           // training-iteration budget

    void validate() const {
        if (gamma < 0) throw std::invalid_argument("LossConfig: gamma must be >= 0");
        if (!(sigma > 0)) throw std::invalid_argument("LossConfig: sigma must be > 0");
        if (!(lambda_min > 0) || lambda_min > 1)
            throw std::invalid_argument("LossConfig: lambda_min must be in (0, 1]");
        if (n_max < 1) throw std::invalid_argument("LossConfig: n_max must be >= 1");
    }
};

struct LossBreakdown {
    double fp_soft = 0;
    double fn_soft = 0;
    double lambda = 0;
    double seg_loss = 0;           // lambda * fp_soft + fn_soft
    double label_loss = 0;         // |p_L - t_L|
    double completeness_loss = 0;  // BCE(t_C, p_C)
    double total = 0;
};

/// Training targets for one patch. t_L = 0 marks a patch with no target
/// instance; weights are derived from the distance to the target surface.
template <typename T = float>
struct Targets {
    Grid3<T> t;                         // binary target segmentation
    int t_L = 0;                        // anatomical label, 0 = none
    bool t_C = true;                    // instance completely in scan?
    Grid3<T> weights;                   // w_i
    std::size_t total_target_voxels = 0;  // whole-scan instance size (completeness accounting)
};

inline double lambda_schedule(long n, const LossConfig& cfg) {
    if (n < 0) throw std::invalid_argument("lambda_schedule: n must be >= 0");
    const double theta = (static_cast<double>(n) - cfg.n_max / 2.0) / (cfg.n_max / 10.0);
    return cfg.lambda_min + (1.0 - cfg.lambda_min) / (1.0 + std::exp(-theta));
}

/// w_i = gamma * exp(-d_i^2 / sigma^2) + 1; the +inf distance sentinel maps to 1.
template <typename T = float>
Grid3<T> weight_map(const Grid3<double>& distance_mm, const LossConfig& cfg) {
    Grid3<T> w(distance_mm.dims, T{1}, distance_mm.spacing, distance_mm.origin);
    for (std::size_t i = 0; i < w.values.size(); ++i) {
        const double d = distance_mm.values[i];
        w.values[i] = static_cast<T>(
            d == kInfDistance ? 1.0 : cfg.gamma * std::exp(-(d * d) / (cfg.sigma * cfg.sigma)) + 1.0);
    }
    return w;
}

/// Convenience: weights straight from a binary target patch.
template <typename T = float>
Grid3<T> target_weights(const Grid3<T>& target, const LossConfig& cfg) {
    return weight_map<T>(distance_to_surface(target), cfg);
}

struct SoftCounts {
    double fp = 0;
    double fn = 0;
};

/// FP_soft and FN_soft. The analytic per-voxel gradient is
///   d(lambda*FP + FN)/dp_i = lambda * w_i (1 - t_i) - w_i t_i,
/// accumulated by seg_gradient below.
template <typename TP, typename TT, typename TW>
SoftCounts soft_counts(const Grid3<TP>& p, const Grid3<TT>& t, const Grid3<TW>& w) {
    if (p.dims != t.dims || p.dims != w.dims)
        throw std::invalid_argument("soft_counts: p, t, w must share dims");
    SoftCounts out;
    for (std::size_t i = 0; i < p.values.size(); ++i) {
        const double pi = p.values[i];
        const double ti = t.values[i] > static_cast<TT>(0.5) ? 1.0 : 0.0;
        const double wi = w.values[i];
        out.fp += wi * (1.0 - ti) * pi;
        out.fn += wi * ti * (1.0 - pi);
    }
    return out;
}

inline constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) {
    return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

template <typename T>
struct LossGradients {
    Grid3<T> dS;     // d total / d p_i
    double dL = 0;   // d total / d p_L
    double dC = 0;   // d total / d p_C
};

template <typename T>
LossBreakdown total_loss(const PatchPrediction<T>& pred, const Targets<T>& targets, long n,
                         const LossConfig& cfg, LossGradients<T>* grads = nullptr) {
    cfg.validate();
    const auto counts = soft_counts(pred.S, targets.t, targets.weights);

    LossBreakdown out;
    out.fp_soft = counts.fp;
    out.fn_soft = counts.fn;
    out.lambda = lambda_schedule(n, cfg);
    out.seg_loss = out.lambda * out.fp_soft + out.fn_soft;
    out.label_loss = std::abs(pred.L - static_cast<double>(targets.t_L));

    const double pc = clamp_prob(pred.C);
    const double tc = targets.t_C ? 1.0 : 0.0;
    out.completeness_loss = -tc * std::log(pc) - (1.0 - tc) * std::log(1.0 - pc);
    out.total = out.seg_loss + out.label_loss + out.completeness_loss;

    if (grads) {
        grads->dS = Grid3<T>(pred.S.dims, T{}, pred.S.spacing, pred.S.origin);
        for (std::size_t i = 0; i < pred.S.values.size(); ++i) {
            const double ti = targets.t.values[i] > static_cast<T>(0.5) ? 1.0 : 0.0;
            const double wi = targets.weights.values[i];
            grads->dS.values[i] = static_cast<T>(out.lambda * wi * (1.0 - ti) - wi * ti);
        }
        const double diff = pred.L - static_cast<double>(targets.t_L);
        grads->dL = diff > 0 ? 1.0 : diff < 0 ? -1.0 : 0.0;
        grads->dC = -tc / pc + (1.0 - tc) / (1.0 - pc);
    }
    return out;
}

}  // namespace iterseg
