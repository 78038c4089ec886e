#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "irff/checkpoint.hpp"
#include "irff/fusion.hpp"
#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

inline constexpr std::size_t kStages = 3;

struct ModelConfig {
    std::array<std::size_t, kStages> stage_channels{12, 24, 48};
    std::array<std::size_t, kStages> stage_strides{2, 2, 2};
    std::array<bool, kStages> fusion_enabled{true, true, true};
    std::size_t heads = 1;
    std::size_t mlp_ratio = 2;
    std::size_t segments = 4;
    std::size_t decoder_width = 8;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t stride_product() const;
};

/// Ordered registry of named, trainable tensors.
class ParamStore {
public:
    Tensor add(std::string name, Shape shape);
    void add_existing(std::string name, Tensor tensor);

    const std::vector<NamedTensor>& entries() const { return entries_; }
    std::vector<NamedTensor>& entries() { return entries_; }
    std::vector<Tensor> tensors() const;
    std::size_t element_count() const;

private:
    std::vector<NamedTensor> entries_;
};

struct SegOutput {
    Tensor main_prob;  // [1, H, W]
    Tensor aux_prob;   // [1, H, W]
};

/// Dual-branch RGB-thermal segmentation network.
///
/// The thermal branch is a residual CNN, the RGB branch a small transformer
/// with strided patch embeddings. After each stage with fusion enabled the
/// two feature maps pass through a cross fusion block and the fused maps
/// continue down their own branches. The decoder reads only RGB-branch
/// features; the auxiliary head reads only thermal-branch features.
class IhbsModel {
public:
    explicit IhbsModel(ModelConfig config);

    const ModelConfig& config() const { return config_; }

    SegOutput forward(const Tensor& rgb, const Tensor& thermal) const;

    /// Unfused per-branch encoders, stage outputs in order.
    std::vector<Tensor> thermal_encoder(const Tensor& thermal) const;
    std::vector<Tensor> rgb_encoder(const Tensor& rgb) const;

    Tensor thermal_stage(std::size_t stage, const Tensor& x) const;
    Tensor rgb_stage(std::size_t stage, const Tensor& x) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::vector<Tensor> parameters() const { return params_.tensors(); }
    std::size_t parameter_count() const { return params_.element_count(); }

    /// Fusion block of a stage; only valid when that stage is enabled.
    const FusionBlockParams& fusion_block(std::size_t stage) const { return fusion_[stage]; }

private:
    struct ResidualBlock {
        Tensor conv1, norm1_gamma, norm1_beta;
        Tensor conv2, norm2_gamma, norm2_beta;
    };
    struct ThermalStage {
        Tensor down, down_gamma, down_beta;
        ResidualBlock block;
    };
    struct TransformerStage {
        Tensor embed, embed_bias, embed_gamma, embed_beta;
        Tensor ln1_gamma, ln1_beta;
        Tensor wq, bq, wk, bk, wv, bv, wo, bo;
        Tensor ln2_gamma, ln2_beta;
        Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
        Tensor out_gamma, out_beta;
    };
    struct Decoder {
        std::array<Tensor, kStages> lateral, lateral_bias;
        Tensor fuse1, fuse1_bias, fuse2, fuse2_bias, head, head_bias;
    };
    struct AuxHead {
        std::array<Tensor, kStages> weight, bias;
    };

    void build();
    void initialize();
    Tensor attention(const TransformerStage& s, const Tensor& tokens) const;
    Tensor decode(const std::vector<Tensor>& rgb_features, std::size_t h, std::size_t w) const;
    Tensor aux_decode(const std::vector<Tensor>& thermal_features, std::size_t h, std::size_t w) const;
    void check_input(const Tensor& x, std::size_t channels, const char* what) const;

    ModelConfig config_;
    ParamStore params_;
    std::array<ThermalStage, kStages> thermal_;
    std::array<TransformerStage, kStages> rgb_;
    std::array<FusionBlockParams, kStages> fusion_;
    Decoder decoder_;
    AuxHead aux_;
};

/// Element count of a model built from `config`, computed from the layer
/// formulas without constructing it.
std::size_t expected_parameter_count(const ModelConfig& config);

IRFF_END_NAMESPACE
