#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "randsac/errors.hpp"
#include "randsac/tensor.hpp"

namespace randsac {

struct OptimConfig {
    double weight_decay = 0.05;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double grad_clip = 0.0;  // 0 disables clipping
};

// Weight decay is applied to rank>=2 weight matrices only; biases, norm
// gains, and the skip weights are excluded.
inline bool decay_applies(const std::string& name, std::int64_t rank) {
    return rank >= 2 && name != "skip_w";
}

// Decoupled-weight-decay adaptive-moment optimizer with bias correction.
template <class T>
class AdamW {
public:
    explicit AdamW(OptimConfig cfg) : cfg_(cfg) {}

    std::int64_t step_count() const { return step_; }

    // One update over named parameters whose .grad holds the batch gradient.
    // lr_scale, when given, returns a per-parameter learning rate multiplier
    // (used by layer-wise lr decay).
    void step(const std::vector<std::pair<std::string, Parameter<T>*>>& params, double lr,
              const std::function<double(const std::string&)>* lr_scale = nullptr) {
        for (auto& [name, p] : params)
            for (auto g : p->grad.data)
                if (!std::isfinite(g))
                    throw DivergenceError("optimizer: non-finite gradient in '" + name + "' at step " +
                                          std::to_string(step_ + 1));
        if (cfg_.grad_clip > 0) {
            double sq = 0;
            for (auto& [name, p] : params)
                for (auto g : p->grad.data) sq += static_cast<double>(g) * g;
            const double norm = std::sqrt(sq);
            if (norm > cfg_.grad_clip) {
                const T scale = static_cast<T>(cfg_.grad_clip / norm);
                for (auto& [name, p] : params)
                    for (auto& g : p->grad.data) g *= scale;
            }
        }
        ++step_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
        for (auto& [name, p] : params) {
            auto& mom = moments_[name];
            if (mom.m.numel() == 0) {
                mom.m = Tensor<T>::zeros(p->value.shape);
                mom.v = Tensor<T>::zeros(p->value.shape);
            }
            const double lr_p = lr * (lr_scale ? (*lr_scale)(name) : 1.0);
            const bool decay = decay_applies(name, p->value.rank());
            for (std::int64_t i = 0; i < p->value.numel(); ++i) {
                const double g = p->grad.data[i];
                const double m = cfg_.beta1 * mom.m.data[i] + (1 - cfg_.beta1) * g;
                const double v = cfg_.beta2 * mom.v.data[i] + (1 - cfg_.beta2) * g * g;
                mom.m.data[i] = static_cast<T>(m);
                mom.v.data[i] = static_cast<T>(v);
                double upd = (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps);
                if (decay) upd += cfg_.weight_decay * p->value.data[i];
                p->value.data[i] -= static_cast<T>(lr_p * upd);
                if (!std::isfinite(static_cast<double>(p->value.data[i])))
                    throw DivergenceError("optimizer: parameter '" + name + "' became non-finite at step " +
                                          std::to_string(step_));
            }
        }
    }

private:
    struct Moments {
        Tensor<T> m, v;
    };
    OptimConfig cfg_;
    std::map<std::string, Moments> moments_;
    std::int64_t step_ = 0;
};

// Warmup-then-cosine schedule. Peak lr follows the linear scaling rule:
// peak = base_lr * batch_size / 256. Linear from 0 over the warmup steps,
// then 0.5 * peak * (1 + cos(pi * progress)) down to 0; steps beyond the
// schedule clamp to the final value.
inline double lr_at(std::int64_t step, double base_lr, std::int64_t batch_size, std::int64_t warmup_steps,
                    std::int64_t total_steps) {
    const double peak = base_lr * static_cast<double>(batch_size) / 256.0;
    if (step < 0) throw ConfigError("lr_at: negative step");
    if (warmup_steps > 0 && step < warmup_steps) return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
    if (step >= total_steps) step = total_steps;
    const std::int64_t decay_span = total_steps - warmup_steps;
    if (decay_span <= 0) return peak;
    const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(decay_span);
    return 0.5 * peak * (1.0 + std::cos(M_PI * progress));
}

}  // namespace randsac
