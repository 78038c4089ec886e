#include "irff/optim.hpp"

#include <cmath>

IRFF_BEGIN_NAMESPACE

OptimizerState make_optimizer_state(const std::vector<Tensor>& params, AdamWOptions options) {
    OptimizerState state;
    state.options = options;
    for (const auto& p : params) {
        state.first_moment.emplace_back(p.numel(), real(0));
        state.second_moment.emplace_back(p.numel(), real(0));
    }
    return state;
}

void optimizer_step(std::vector<Tensor>& params, OptimizerState& state) {
    if (params.size() != state.first_moment.size()) {
        throw UsageError("optimizer state was built for a different parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            throw UsageError("parameter " + std::to_string(i) + " has no gradient; run backward() first");
        }
        if (state.first_moment[i].size() != params[i].numel()) {
            throw UsageError("optimizer moment shape does not match parameter " + std::to_string(i));
        }
    }
    const auto& o = state.options;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(static_cast<double>(o.beta1), t);
    const double bc2 = 1.0 - std::pow(static_cast<double>(o.beta2), t);
    const real decay = real(1) - o.lr * o.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i].mutable_data();
        auto g = params[i].grad();
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = o.beta1 * m[j] + (real(1) - o.beta1) * g[j];
            v[j] = o.beta2 * v[j] + (real(1) - o.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            w[j] = w[j] * decay - static_cast<real>(o.lr * mhat / (std::sqrt(vhat) + o.eps));
        }
    }
}

void zero_grad(std::vector<Tensor>& params) {
    for (auto& p : params) p.zero_grad();
}

IRFF_END_NAMESPACE
