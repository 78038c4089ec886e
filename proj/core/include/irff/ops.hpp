#pragma once

#include <optional>
#include <vector>

#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

enum class ElementwiseKind { add, sub, mul, div, relu, sigmoid, neg, scale };

/// Padding sentinel for max pooling; never wins against real activations.
inline constexpr real kPoolPadValue = real(-3.4e38);

/// Generic elementwise entry point. Binary kinds require `b`; shapes must be
/// equal or one operand must hold a single element. `factor` is the multiplier
/// for ElementwiseKind::scale.
Tensor elementwise(ElementwiseKind kind, const Tensor& a, const std::optional<Tensor>& b = std::nullopt,
                   real factor = real(1));

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor neg(const Tensor& x);
Tensor scale(const Tensor& x, real factor);
Tensor add_scalar(const Tensor& x, real value);
Tensor log(const Tensor& x);
/// Values clipped to [lo, hi]; gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, real lo, real hi);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// x: [Cin, H, W], w: [Cout, Cin, k, k], b: [Cout].
Tensor conv2d(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b, std::size_t stride,
              std::size_t pad);

/// Max pooling on [C, H, W]; ties route the gradient to the first cell in
/// row-major window order.
Tensor maxpool2d(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad,
                 real pad_value = kPoolPadValue);

/// Numerically stable softmax along `axis` (max subtracted first).
Tensor softmax(const Tensor& x, std::size_t axis);

enum class ReduceKind { sum, mean };

/// Reduces over the listed axes and drops them. Reducing every axis yields a
/// one-element tensor of shape [1].
Tensor reduce(ReduceKind kind, const Tensor& x, const std::vector<std::size_t>& axes);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Bilinear resize of [C, H, W] with the align-corners-false convention.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);
std::vector<Tensor> split(const Tensor& x, std::size_t parts, std::size_t axis);
Tensor concat_channels(const std::vector<Tensor>& xs);
std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts);

/// x: [N, in], w: [in, out], b: [out] -> [N, out].
Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b);

/// Normalizes each row of x: [N, C] over C, then applies gamma/beta: [C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = real(1e-5));

/// Normalizes each channel of x: [C, H, W] over its spatial positions, then
/// applies per-channel gamma/beta: [C]. Independent of batch size.
Tensor channel_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps = real(1e-5));

IRFF_END_NAMESPACE
