#include "irff/losses.hpp"

#include "irff/ops.hpp"

IRFF_BEGIN_NAMESPACE

namespace {

constexpr real kMaskTolerance = real(1e-6);
constexpr real kProbClip = real(1e-7);

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

Tensor coverage(const Tensor& skeleton, const Tensor& volume, real eps) {
    require_same_shape(skeleton, volume, "topology coverage");
    auto hit = add_scalar(sum(mul(skeleton, volume)), eps);
    auto mass = add_scalar(sum(skeleton), eps);
    return div(hit, mass);
}

}  // namespace

void LossWeights::validate() const {
    if (alpha < 0 || beta < 0 || gamma < 0 || delta < 0) throw ConfigError("loss weights must be non-negative");
    if (alpha + beta + gamma <= 0) throw ConfigError("alpha + beta + gamma must be positive");
    if (skeleton_iterations < 1) throw ConfigError("skeleton_iterations must be >= 1");
    if (!(epsilon > 0)) throw ConfigError("loss epsilon must be positive");
}

void require_soft_mask(const Tensor& mask, const char* what) {
    for (auto v : mask.data()) {
        if (!(v >= -kMaskTolerance && v <= real(1) + kMaskTolerance)) {
            throw DomainError(std::string(what) + " must lie in [0, 1], found " + std::to_string(v));
        }
    }
}

Tensor soft_erode(const Tensor& x) { return neg(maxpool2d(neg(x), 3, 1, 1)); }
Tensor soft_dilate(const Tensor& x) { return maxpool2d(x, 3, 1, 1); }
Tensor soft_open(const Tensor& x) { return soft_dilate(soft_erode(x)); }

Tensor soft_skeleton(const Tensor& mask, std::size_t iterations) {
    if (iterations < 1) throw ConfigError("soft_skeleton needs at least one iteration");
    require_soft_mask(mask, "soft_skeleton input");
    Tensor level = mask;
    Tensor eroded = soft_erode(level);
    Tensor skeleton = relu(sub(level, soft_dilate(eroded)));
    for (std::size_t it = 0; it < iterations; ++it) {
        level = eroded;
        eroded = soft_erode(level);
        auto residual = relu(sub(level, soft_dilate(eroded)));
        skeleton = add(skeleton, mul(residual, add_scalar(neg(skeleton), real(1))));
    }
    return clamp(skeleton, real(0), real(1));
}

Tensor topo_precision(const Tensor& skeleton_pred, const Tensor& label, real eps) {
    return coverage(skeleton_pred, label, eps);
}

Tensor topo_sensitivity(const Tensor& skeleton_label, const Tensor& pred, real eps) {
    return coverage(skeleton_label, pred, eps);
}

Tensor topology_similarity(const Tensor& label, const Tensor& pred, std::size_t iterations, real eps) {
    require_same_shape(label, pred, "topology_loss");
    Tensor label_skeleton;
    {
        // The label is constant; no tape needed for its skeleton.
        NoGradGuard no_grad;
        label_skeleton = soft_skeleton(label, iterations);
    }
    auto pred_skeleton = soft_skeleton(pred, iterations);
    auto precision = topo_precision(pred_skeleton, label, eps);
    auto sensitivity = topo_sensitivity(label_skeleton, pred, eps);
    return div(scale(mul(precision, sensitivity), real(2)), add_scalar(add(precision, sensitivity), eps));
}

Tensor topology_loss(const Tensor& label, const Tensor& pred, std::size_t iterations, real eps) {
    return add_scalar(neg(topology_similarity(label, pred, iterations, eps)), real(1));
}

Tensor dice_loss(const Tensor& label, const Tensor& pred, real eps) {
    require_same_shape(label, pred, "dice_loss");
    auto inter = add_scalar(scale(sum(mul(label, pred)), real(2)), eps);
    auto total = add_scalar(add(sum(label), sum(pred)), eps);
    return add_scalar(neg(div(inter, total)), real(1));
}

Tensor ce_loss(const Tensor& label, const Tensor& pred) {
    require_same_shape(label, pred, "ce_loss");
    auto p = clamp(pred, kProbClip, real(1) - kProbClip);
    auto one_minus_label = add_scalar(neg(label), real(1));
    auto one_minus_p = add_scalar(neg(p), real(1));
    auto ll = add(mul(label, log(p)), mul(one_minus_label, log(one_minus_p)));
    return neg(mean(ll));
}

LossTerms weighted_loss(const Tensor& label, const Tensor& pred, const LossWeights& w) {
    require_same_shape(label, pred, "composite_loss");
    LossTerms t;
    auto topo = topology_loss(label, pred, w.skeleton_iterations, w.epsilon);
    auto ce = ce_loss(label, pred);
    auto dice = dice_loss(label, pred, w.epsilon);
    t.topology = topo.item();
    t.ce = ce.item();
    t.dice = dice.item();
    t.weighted = add(add(scale(topo, w.alpha), scale(ce, w.beta)), scale(dice, w.gamma));
    return t;
}

CompositeLoss composite_loss(const Tensor& label, const Tensor& pred, const Tensor& pred_aux,
                             const LossWeights& w) {
    w.validate();
    require_same_shape(label, pred_aux, "composite_loss");
    CompositeLoss c;
    c.main = weighted_loss(label, pred, w);
    c.aux = weighted_loss(label, pred_aux, w);
    c.total = add(c.main.weighted, scale(c.aux.weighted, w.delta));
    return c;
}

IRFF_END_NAMESPACE
