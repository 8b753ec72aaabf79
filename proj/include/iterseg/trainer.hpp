#pragma once

// Single-patch training loop: Adam with increased first-moment momentum,
// the surface-weighted loss with its lambda ramp, and the 75/25 patch
// sampler with augmentations.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "iterseg/loss.hpp"
#include "iterseg/network.hpp"
#include "iterseg/sampler.hpp"

namespace iterseg {

struct TrainerConfig {
    double learning_rate = 0.001;
    double momentum_beta1 = 0.99;  // Adam first-moment decay ("increased momentum")
    double beta2 = 0.999;
    double eps = 1e-8;
    long n_max = 2000;
    double random_patch_fraction = 0.25;
    Direction direction = Direction::up;
    AugmentConfig augment;
    LossConfig loss;  // n_max is overridden by the trainer's n_max
    std::uint64_t seed = 1;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("TrainerConfig: learning_rate must be > 0");
        if (momentum_beta1 < 0 || momentum_beta1 >= 1 || beta2 < 0 || beta2 >= 1)
            throw std::invalid_argument("TrainerConfig: betas must be in [0, 1)");
        if (random_patch_fraction < 0 || random_patch_fraction > 1)
            throw std::invalid_argument("TrainerConfig: random_patch_fraction must be in [0, 1]");
        if (n_max < 1) throw std::invalid_argument("TrainerConfig: n_max must be >= 1");
    }
};

struct TrainCurveRow {
    long iteration = 0;
    double lambda = 0;
    double fp_soft = 0;
    double fn_soft = 0;
    double seg_loss = 0;
    double label_loss = 0;
    double completeness_loss = 0;
    double total = 0;
};

template <typename T = float>
struct AdamState {
    std::vector<T> m, v;
    long t = 0;

    void step(std::vector<T>& params, const std::vector<T>& grad, const TrainerConfig& cfg) {
        if (m.size() != params.size()) {
            m.assign(params.size(), T{});
            v.assign(params.size(), T{});
        }
        ++t;
        const double b1 = cfg.momentum_beta1, b2 = cfg.beta2;
        const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            const double g = grad[i];
            const double mi = b1 * m[i] + (1.0 - b1) * g;
            const double vi = b2 * v[i] + (1.0 - b2) * g * g;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            params[i] -= static_cast<T>(cfg.learning_rate * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps));
        }
    }
};

/// One optimization step on one sample (batch size 1). Returns the loss at
/// the pre-update parameters.
template <typename T>
LossBreakdown train_step(TinyFcn<T>& net, AdamState<T>& adam, const TrainingSample<T>& sample, long n,
                         const TrainerConfig& cfg, std::vector<T>& grad_scratch) {
    LossConfig loss_cfg = cfg.loss;
    loss_cfg.n_max = cfg.n_max;

    typename TinyFcn<T>::Cache cache;
    const auto pred = net.forward(sample.image, sample.memory, &cache);

    LossGradients<T> grads;
    const auto breakdown = total_loss(pred, sample.targets, n, loss_cfg, &grads);
    if (!std::isfinite(breakdown.total))
        throw std::runtime_error("training aborted: non-finite loss at iteration " + std::to_string(n));

    grad_scratch.assign(net.parameter_count(), T{});
    net.backward(cache, grads.dS, grads.dL, grads.dC, grad_scratch);
    adam.step(net.parameters(), grad_scratch, cfg);
    return breakdown;
}

/// Full training run over n_max iterations; returns one curve row per
/// iteration.
template <typename T>
std::vector<TrainCurveRow> train(TinyFcn<T>& net, const std::vector<ScanEntry<T>>& dataset,
                                 const TrainerConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");

    LossConfig loss_cfg = cfg.loss;
    loss_cfg.n_max = cfg.n_max;
    AugmentConfig aug = cfg.augment;
    Rng rng(cfg.seed);
    AdamState<T> adam;
    std::vector<T> grad;
    std::vector<TrainCurveRow> curve;
    curve.reserve(static_cast<std::size_t>(cfg.n_max));

    for (long n = 0; n < cfg.n_max; ++n) {
        auto sample = sample_training_patch(dataset, net.config().patch_size, cfg.direction,
                                            cfg.random_patch_fraction, loss_cfg, rng);
        augment(sample, aug, rng);
        const auto breakdown = train_step(net, adam, sample, n, cfg, grad);
        curve.push_back({n, breakdown.lambda, breakdown.fp_soft, breakdown.fn_soft, breakdown.seg_loss,
                         breakdown.label_loss, breakdown.completeness_loss, breakdown.total});
    }
    return curve;
}

}  // namespace iterseg
