#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace qvt::toy {

struct AdamWHyper {
    float lr           = 1e-3f;
    float weight_decay = 1e-2f;
    float beta1        = 0.9f;
    float beta2        = 0.999f;
    float eps          = 1e-8f;
};

struct AdamWState {
    std::vector<float> m;
    std::vector<float> v;
    std::int64_t       t = 0;

    static AdamWState zeros(std::size_t n) { return {std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f), 0}; }
};

// One decoupled-weight-decay Adam step, in place:
//
//   t  <- t + 1
//   m  <- beta1 m + (1 - beta1) g
//   v  <- beta2 v + (1 - beta2) g*g
//   theta <- a_t theta - b_t m / (sqrt(v) + eps)
//
// with a_t = 1 - lr wd and b_t = lr sqrt(1 - beta2^t) / (1 - beta1^t).
// Throws NumericError naming the step if any gradient is non-finite; the
// state and parameters are untouched in that case.
void adamw_step(AdamWState & state, std::span<float> params, std::span<const float> grads, const AdamWHyper & hyper);

}  // namespace qvt::toy
