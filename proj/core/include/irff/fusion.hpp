#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "irff/checkpoint.hpp"
#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

/// Weights of one RGB-thermal cross fusion block.
///
/// Each modality owns 1x1 query/key/value projections (C -> C_k, C_k, C_v)
/// and an output projection (C_v -> C) feeding its residual. The two
/// directions never share weights. Projections carry no bias.
struct FusionBlockParams {
    std::size_t channels = 0;
    std::size_t key_channels = 0;
    std::size_t value_channels = 0;
    std::size_t segments = 1;

    Tensor query_ir, key_ir, value_ir, proj_ir;
    Tensor query_rgb, key_rgb, value_rgb, proj_rgb;

    /// Zero-initialized weights with requires_grad set. Throws ConfigError
    /// unless key/value channels divide evenly into `segments`.
    static FusionBlockParams zeros(std::size_t channels, std::size_t key_channels, std::size_t value_channels,
                                   std::size_t segments);

    std::vector<NamedTensor> named(const std::string& prefix) const;
    std::size_t parameter_count() const;
};

/// Closed-form element count of one block: 3 projections per modality plus
/// the output projection, twice.
std::size_t fusion_block_parameter_count(std::size_t channels, std::size_t key_channels,
                                         std::size_t value_channels);

struct QkvProjection {
    Tensor query, key, value;
};

/// Three bias-free 1x1 convolutions of x: [C, H, W].
QkvProjection project_qkv(const Tensor& x, const Tensor& w_query, const Tensor& w_key, const Tensor& w_value);

/// Allocation record of the fused attention kernel.
struct AttentionProbe {
    std::size_t buffers = 0;
    std::size_t bytes = 0;
};

/// Segmented linear-complexity cross attention.
///
/// Query channels come from one modality, keys/values from the other. The
/// channel axis is cut into `segments` equal groups; for each group the keys
/// are softmax-normalized over spatial positions, the queries over channels
/// at each position, and
///
///   context = softmax_hw(K_i) * V_i^T            (C_k/n x C_v/n)
///   out_i   = context^T * softmax_c(Q_i)          (C_v/n x HW)
///
/// Group outputs are concatenated along channels. No HW x HW map is formed.
/// When `probe` is given it receives the count and size of every buffer the
/// forward pass allocates.
Tensor efficient_cross_attention(const Tensor& query, const Tensor& key_other, const Tensor& value_other,
                                 std::size_t segments, AttentionProbe* probe = nullptr);

/// Same operator evaluated by materializing each group's HW x HW
/// query-key map. Inference only; used as the quadratic baseline in
/// benchmarks.
Tensor dense_factorized_attention(const Tensor& query, const Tensor& key_other, const Tensor& value_other,
                                  std::size_t segments);

struct FusionOutput {
    Tensor ir;
    Tensor rgb;
};

/// Cross-modal fusion with residuals:
///   ir'  = proj_ir (attn(Q_ir,  K_rgb, V_rgb)) + ir
///   rgb' = proj_rgb(attn(Q_rgb, K_ir,  V_ir))  + rgb
FusionOutput fuse(const Tensor& x_ir, const Tensor& x_rgb, const FusionBlockParams& params);

struct AttentionCost {
    double naive_bytes = 0;
    double efficient_bytes = 0;
    double ratio = 0;
};

/// Memory model: the naive path stores the (HW)^2 attention map; the
/// efficient path stores the per-group contexts plus normalized K and Q and
/// the output (2*C_k*HW + C_v*HW elements).
AttentionCost attention_cost_estimate(std::size_t height, std::size_t width, std::size_t key_channels,
                                      std::size_t value_channels, std::size_t segments,
                                      std::size_t bytes_per_elem);

IRFF_END_NAMESPACE
