#pragma once

#include <cstdint>
#include <vector>

#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

struct AdamWOptions {
    real lr = real(1e-3);
    real beta1 = real(0.9);
    real beta2 = real(0.999);
    real eps = real(1e-8);
    real weight_decay = real(1e-4);
};

/// Moments for AdamW with decoupled weight decay. One moment pair per
/// parameter, in the order the parameters were registered.
struct OptimizerState {
    AdamWOptions options;
    std::uint64_t step = 0;
    std::vector<std::vector<real>> first_moment;
    std::vector<std::vector<real>> second_moment;
};

OptimizerState make_optimizer_state(const std::vector<Tensor>& params, AdamWOptions options);

/// One AdamW update. Every parameter must carry a gradient (UsageError
/// otherwise). The decay term scales parameters directly by (1 - lr * wd)
/// and never enters the moment estimates.
void optimizer_step(std::vector<Tensor>& params, OptimizerState& state);

void zero_grad(std::vector<Tensor>& params);

IRFF_END_NAMESPACE
