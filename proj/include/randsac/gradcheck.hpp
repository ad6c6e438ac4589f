#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "randsac/tensor.hpp"

namespace randsac {

template <class T>
struct GradCheckResult {
    T max_rel_err = 0;
    std::string worst_param;
    std::int64_t worst_index = -1;
};

// Central-difference check of reverse-mode gradients. `loss(true)` must build
// the graph, run backward, and leave gradients accumulated in the given
// parameters; `loss(false)` must return the objective value only. Relative
// error uses a small absolute floor so that near-zero gradients are compared
// absolutely.
template <class T>
GradCheckResult<T> grad_check(const std::vector<std::pair<std::string, Parameter<T>*>>& params,
                              const std::function<T(bool)>& loss, T h = T(1e-5)) {
    for (auto& [name, p] : params) p->zero_grad();
    loss(true);
    GradCheckResult<T> result;
    for (auto& [name, p] : params) {
        for (std::int64_t i = 0; i < p->value.numel(); ++i) {
            const T saved = p->value.data[i];
            p->value.data[i] = saved + h;
            const T lp = loss(false);
            p->value.data[i] = saved - h;
            const T lm = loss(false);
            p->value.data[i] = saved;
            const T numeric = (lp - lm) / (T(2) * h);
            const T analytic = p->grad.data[i];
            const T denom = std::max({std::abs(numeric), std::abs(analytic), T(1e-4)});
            const T rel = std::abs(numeric - analytic) / denom;
            if (rel > result.max_rel_err) {
                result.max_rel_err = rel;
                result.worst_param = name;
                result.worst_index = i;
            }
        }
    }
    return result;
}

}  // namespace randsac
