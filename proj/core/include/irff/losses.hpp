#pragma once

#include <cstddef>

#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

/// Weights of the composite objective
///   main  = alpha * topology + beta * ce + gamma * dice   on (label, main)
///   aux   = same weighted sum                              on (label, aux)
///   total = main + delta * aux
struct LossWeights {
    real alpha = real(0.3);
    real beta = real(1.0);
    real gamma = real(1.0);
    real delta = real(0.1);
    std::size_t skeleton_iterations = 10;
    real epsilon = real(1e-6);

    /// ConfigError on negative weights, alpha+beta+gamma == 0,
    /// zero iterations or non-positive epsilon.
    void validate() const;
};

/// Throws DomainError unless every value lies in [0, 1] (tolerance 1e-6).
void require_soft_mask(const Tensor& mask, const char* what);

/// 3x3 grey-level erosion / dilation / opening on [C, H, W] maps. Borders
/// are padded so that out-of-image cells never win.
Tensor soft_erode(const Tensor& x);
Tensor soft_dilate(const Tensor& x);
Tensor soft_open(const Tensor& x);

/// Differentiable skeleton of a [0,1] map by iterated erosion: every erosion
/// level contributes relu(level - open(level)), merged with a probabilistic
/// union and clamped to [0, 1]. Requires iterations >= 1.
Tensor soft_skeleton(const Tensor& mask, std::size_t iterations);

/// (sum(skeleton * volume) + eps) / (sum(skeleton) + eps)
Tensor topo_precision(const Tensor& skeleton_pred, const Tensor& label, real eps);
Tensor topo_sensitivity(const Tensor& skeleton_label, const Tensor& pred, real eps);

/// 2 P S / (P + S + eps) of the two coverages above: the centerline Dice.
Tensor topology_similarity(const Tensor& label, const Tensor& pred, std::size_t iterations, real eps);

/// 1 - topology_similarity, so that lower is better.
Tensor topology_loss(const Tensor& label, const Tensor& pred, std::size_t iterations, real eps);

/// 1 - (2 sum(l p) + eps) / (sum(l) + sum(p) + eps)
Tensor dice_loss(const Tensor& label, const Tensor& pred, real eps);

/// Mean binary cross entropy with predictions clipped to [1e-7, 1 - 1e-7].
Tensor ce_loss(const Tensor& label, const Tensor& pred);

struct LossTerms {
    Tensor weighted;  // alpha*topology + beta*ce + gamma*dice
    double topology = 0;
    double ce = 0;
    double dice = 0;
};

struct CompositeLoss {
    Tensor total;
    LossTerms main;
    LossTerms aux;
};

LossTerms weighted_loss(const Tensor& label, const Tensor& pred, const LossWeights& w);

/// Full objective. The auxiliary terms are always evaluated and reported,
/// even when delta is zero.
CompositeLoss composite_loss(const Tensor& label, const Tensor& pred, const Tensor& pred_aux,
                             const LossWeights& w);

IRFF_END_NAMESPACE
