#include "qvt/toy/adamw.hpp"

#include <cmath>
#include <string>

#include "qvt/errors.hpp"

namespace qvt::toy {

void adamw_step(AdamWState & state, std::span<float> params, std::span<const float> grads, const AdamWHyper & hyper) {
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ValidationError("adamw_step: parameter, gradient and moment sizes differ");
    }
    if (state.t < 0) {
        throw ValidationError("adamw_step: negative step counter");
    }
    const std::int64_t step = state.t + 1;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw NumericError("non-finite gradient at optimizer step " + std::to_string(step) + ", index " +
                               std::to_string(i));
        }
    }

    const double t      = static_cast<double>(step);
    const float  a      = static_cast<float>(1.0 - static_cast<double>(hyper.lr) * hyper.weight_decay);
    const float  b      = static_cast<float>(static_cast<double>(hyper.lr) * std::sqrt(1.0 - std::pow(hyper.beta2, t)) /
                                             (1.0 - std::pow(hyper.beta1, t)));
    const float  one_b1 = 1.0f - hyper.beta1;
    const float  one_b2 = 1.0f - hyper.beta2;

    for (std::size_t i = 0; i < params.size(); ++i) {
        const float g = grads[i];
        const float m = hyper.beta1 * state.m[i] + one_b1 * g;
        const float v = hyper.beta2 * state.v[i] + one_b2 * (g * g);
        state.m[i]    = m;
        state.v[i]    = v;
        params[i]     = a * params[i] - b * (m / (std::sqrt(v) + hyper.eps));
    }
    state.t = step;
}

}  // namespace qvt::toy
