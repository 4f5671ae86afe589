#pragma once

#include "fedsim/errors.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// SGD with classical momentum: v <- mu*v + g, w <- w - eta*v. With mu = 0
// this is exactly the plain w <- w - eta*g update.
template <typename S>
struct OptimizerState {
    S learning_rate;
    S momentum;
    ModelParams<S> velocity;
};

template <typename S>
OptimizerState<S> make_optimizer_state(const ModelParams<S>& params, double learning_rate,
                                       double momentum) {
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must be in [0,1)");
    return {static_cast<S>(learning_rate), static_cast<S>(momentum), zeros_like(params)};
}

template <typename S>
void sgd_step(ModelParams<S>& params, const ModelParams<S>& grads, OptimizerState<S>& state) {
    if (!params.same_structure(grads) || !params.same_structure(state.velocity))
        throw InternalError("sgd_step: params/grads/velocity shapes disagree");
    const S eta = state.learning_rate, mu = state.momentum;
    for (std::size_t e = 0; e < params.entries.size(); ++e) {
        auto apply = [&](Tensor<S>& w, const Tensor<S>& g, Tensor<S>& v) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                v[i] = mu * v[i] + g[i];
                w[i] -= eta * v[i];
            }
        };
        apply(params.entries[e].weight, grads.entries[e].weight,
              state.velocity.entries[e].weight);
        apply(params.entries[e].bias, grads.entries[e].bias,
              state.velocity.entries[e].bias);
    }
}

}  // namespace fedsim
