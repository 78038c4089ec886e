#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "irff/error.hpp"
#include "irff/real.hpp"

IRFF_BEGIN_NAMESPACE

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace autograd {

struct Node;
using BackwardFn = std::function<void(Node& self)>;

/// One vertex of the dynamic tape. Values are written once by the op that
/// creates the node; `grad` is allocated lazily on the first accumulation.
struct Node {
    Shape shape;
    std::vector<real> value;
    std::vector<real> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    /// Gradient buffer of parent `i`, or nullptr when that parent is not
    /// differentiable. Allocates (zero-filled) on first use.
    real* parent_grad(std::size_t i);
};

}  // namespace autograd

/// Dense row-major tensor with optional participation in the gradient tape.
///
/// Tensor is a cheap shared handle; copies alias the same storage. Values
/// produced by ops are treated as immutable. Only leaf tensors (parameters,
/// inputs) should be mutated through mutable_data().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, real value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<real> data, bool requires_grad = false);
    static Tensor scalar(real value, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const real> data() const;
    std::span<real> mutable_data();
    real item() const;
    real at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const;
    void set_requires_grad(bool on);
    bool has_grad() const;
    std::span<const real> grad() const;
    std::span<real> mutable_grad();
    void zero_grad();

    /// Fresh leaf with a copy of the values and no tape history.
    Tensor detach() const;
    Tensor clone() const { return detach(); }

    const std::shared_ptr<autograd::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<autograd::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<autograd::Node> node_;
};

/// Runs reverse-mode accumulation from a one-element loss. Leaf gradients
/// accumulate across calls until zero_grad(); the interior of the tape is
/// released afterwards.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables tape recording for the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

namespace autograd {

/// Builds an op result. The backward closure is attached only when at least
/// one parent requires grad and recording is enabled.
Tensor make_result(Shape shape, std::vector<real> value, std::vector<Tensor> parents,
                   BackwardFn backward);

}  // namespace autograd

IRFF_END_NAMESPACE
