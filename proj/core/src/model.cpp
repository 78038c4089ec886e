#include "irff/model.hpp"

#include <cmath>

#include "irff/ops.hpp"
#include "irff/rng.hpp"

IRFF_BEGIN_NAMESPACE

namespace {

constexpr real kResidualScaleInit = real(0.5);
constexpr real kTransformerInitStd = real(0.02);

std::size_t stage_input_channels(const ModelConfig& c, std::size_t stage, std::size_t image_channels) {
    return stage == 0 ? image_channels : c.stage_channels[stage - 1];
}

void fill_uniform(Tensor& t, Rng& rng, double bound) {
    for (auto& v : t.mutable_data()) v = static_cast<real>(rng.uniform(-bound, bound));
}

void fill_normal(Tensor& t, Rng& rng, double stddev) {
    for (auto& v : t.mutable_data()) v = static_cast<real>(rng.normal(0.0, stddev));
}

void fill_const(Tensor& t, real value) {
    for (auto& v : t.mutable_data()) v = value;
}

// He-uniform bound for a conv weight [Cout, Cin, k, k].
double conv_bound(const Tensor& w) {
    const double fan_in = static_cast<double>(w.dim(1) * w.dim(2) * w.dim(3));
    return std::sqrt(6.0 / fan_in);
}

Tensor to_tokens(const Tensor& map) {
    return transpose(reshape(map, {map.dim(0), map.dim(1) * map.dim(2)}));
}

Tensor to_map(const Tensor& tokens, std::size_t h, std::size_t w) {
    return reshape(transpose(tokens), {tokens.dim(1), h, w});
}

}  // namespace

void ModelConfig::validate() const {
    for (std::size_t i = 0; i < kStages; ++i) {
        if (stage_channels[i] < 1) throw ConfigError("stage channels must be positive");
        if (stage_strides[i] < 1) throw ConfigError("stage strides must be positive");
        if (fusion_enabled[i] && stage_channels[i] % segments != 0) {
            throw ConfigError("stage " + std::to_string(i) + " width " + std::to_string(stage_channels[i]) +
                              " is not divisible by the fusion segment count " + std::to_string(segments));
        }
        if (heads < 1 || stage_channels[i] % heads != 0) {
            throw ConfigError("stage " + std::to_string(i) + " width must be divisible by the head count");
        }
    }
    if (segments < 1) throw ConfigError("fusion segment count must be >= 1");
    if (mlp_ratio < 1) throw ConfigError("mlp_ratio must be >= 1");
    if (decoder_width < 1) throw ConfigError("decoder_width must be >= 1");
}

std::size_t ModelConfig::stride_product() const {
    std::size_t p = 1;
    for (auto s : stage_strides) p *= s;
    return p;
}

Tensor ParamStore::add(std::string name, Shape shape) {
    auto t = Tensor::zeros(std::move(shape), true);
    entries_.push_back({std::move(name), t});
    return t;
}

void ParamStore::add_existing(std::string name, Tensor tensor) { entries_.push_back({std::move(name), std::move(tensor)}); }

std::vector<Tensor> ParamStore::tensors() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
}

std::size_t ParamStore::element_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
}

IhbsModel::IhbsModel(ModelConfig config) : config_(config) {
    config_.validate();
    build();
    initialize();
}

void IhbsModel::build() {
    const auto& c = config_;
    for (std::size_t i = 0; i < kStages; ++i) {
        const auto ch = c.stage_channels[i];
        const auto cin = stage_input_channels(c, i, 1);
        const std::string p = "thermal.s" + std::to_string(i);
        auto& t = thermal_[i];
        t.down = params_.add(p + ".down.weight", {ch, cin, 3, 3});
        t.down_gamma = params_.add(p + ".down.norm.gamma", {ch});
        t.down_beta = params_.add(p + ".down.norm.beta", {ch});
        t.block.conv1 = params_.add(p + ".block.conv1.weight", {ch, ch, 3, 3});
        t.block.norm1_gamma = params_.add(p + ".block.norm1.gamma", {ch});
        t.block.norm1_beta = params_.add(p + ".block.norm1.beta", {ch});
        t.block.conv2 = params_.add(p + ".block.conv2.weight", {ch, ch, 3, 3});
        t.block.norm2_gamma = params_.add(p + ".block.norm2.gamma", {ch});
        t.block.norm2_beta = params_.add(p + ".block.norm2.beta", {ch});
    }
    for (std::size_t i = 0; i < kStages; ++i) {
        const auto ch = c.stage_channels[i];
        const auto cin = stage_input_channels(c, i, 3);
        const auto s = c.stage_strides[i];
        const auto hidden = ch * c.mlp_ratio;
        const std::string p = "rgb.s" + std::to_string(i);
        auto& r = rgb_[i];
        r.embed = params_.add(p + ".embed.weight", {ch, cin, s, s});
        r.embed_bias = params_.add(p + ".embed.bias", {ch});
        r.embed_gamma = params_.add(p + ".embed.norm.gamma", {ch});
        r.embed_beta = params_.add(p + ".embed.norm.beta", {ch});
        r.ln1_gamma = params_.add(p + ".ln1.gamma", {ch});
        r.ln1_beta = params_.add(p + ".ln1.beta", {ch});
        r.wq = params_.add(p + ".attn.q.weight", {ch, ch});
        r.bq = params_.add(p + ".attn.q.bias", {ch});
        r.wk = params_.add(p + ".attn.k.weight", {ch, ch});
        r.bk = params_.add(p + ".attn.k.bias", {ch});
        r.wv = params_.add(p + ".attn.v.weight", {ch, ch});
        r.bv = params_.add(p + ".attn.v.bias", {ch});
        r.wo = params_.add(p + ".attn.out.weight", {ch, ch});
        r.bo = params_.add(p + ".attn.out.bias", {ch});
        r.ln2_gamma = params_.add(p + ".ln2.gamma", {ch});
        r.ln2_beta = params_.add(p + ".ln2.beta", {ch});
        r.mlp_w1 = params_.add(p + ".mlp.fc1.weight", {ch, hidden});
        r.mlp_b1 = params_.add(p + ".mlp.fc1.bias", {hidden});
        r.mlp_w2 = params_.add(p + ".mlp.fc2.weight", {hidden, ch});
        r.mlp_b2 = params_.add(p + ".mlp.fc2.bias", {ch});
        r.out_gamma = params_.add(p + ".out.norm.gamma", {ch});
        r.out_beta = params_.add(p + ".out.norm.beta", {ch});
    }
    for (std::size_t i = 0; i < kStages; ++i) {
        if (!c.fusion_enabled[i]) continue;
        const auto ch = c.stage_channels[i];
        fusion_[i] = FusionBlockParams::zeros(ch, ch, ch, c.segments);
        for (auto& e : fusion_[i].named("fusion.s" + std::to_string(i))) params_.add_existing(e.name, e.tensor);
    }
    const auto d = c.decoder_width;
    for (std::size_t i = 0; i < kStages; ++i) {
        const std::string p = "decoder.lateral" + std::to_string(i);
        decoder_.lateral[i] = params_.add(p + ".weight", {d, c.stage_channels[i], 1, 1});
        decoder_.lateral_bias[i] = params_.add(p + ".bias", {d});
    }
    decoder_.fuse1 = params_.add("decoder.fuse1.weight", {d, kStages * d, 3, 3});
    decoder_.fuse1_bias = params_.add("decoder.fuse1.bias", {d});
    decoder_.fuse2 = params_.add("decoder.fuse2.weight", {d, d, 3, 3});
    decoder_.fuse2_bias = params_.add("decoder.fuse2.bias", {d});
    decoder_.head = params_.add("decoder.head.weight", {1, d, 1, 1});
    decoder_.head_bias = params_.add("decoder.head.bias", {1});
    for (std::size_t i = 0; i < kStages; ++i) {
        const std::string p = "aux.s" + std::to_string(i);
        aux_.weight[i] = params_.add(p + ".weight", {1, c.stage_channels[i], 1, 1});
        aux_.bias[i] = params_.add(p + ".bias", {1});
    }
}

void IhbsModel::initialize() {
    Rng rng(config_.seed);
    auto conv = [&](Tensor& w) { fill_uniform(w, rng, conv_bound(w)); };
    auto normal = [&](Tensor& w) { fill_normal(w, rng, kTransformerInitStd); };

    for (auto& t : thermal_) {
        conv(t.down);
        fill_const(t.down_gamma, real(1));
        conv(t.block.conv1);
        fill_const(t.block.norm1_gamma, real(1));
        conv(t.block.conv2);
        fill_const(t.block.norm2_gamma, kResidualScaleInit);
    }
    for (auto& r : rgb_) {
        conv(r.embed);
        fill_const(r.embed_gamma, real(1));
        fill_const(r.ln1_gamma, real(1));
        normal(r.wq);
        normal(r.wk);
        normal(r.wv);
        normal(r.wo);
        fill_const(r.ln2_gamma, real(1));
        normal(r.mlp_w1);
        normal(r.mlp_w2);
        fill_const(r.out_gamma, real(1));
    }
    for (std::size_t i = 0; i < kStages; ++i) {
        if (!config_.fusion_enabled[i]) continue;
        auto& f = fusion_[i];
        for (auto* w : {&f.query_ir, &f.key_ir, &f.value_ir, &f.proj_ir, &f.query_rgb, &f.key_rgb, &f.value_rgb,
                        &f.proj_rgb})
            conv(*w);
    }
    for (auto& w : decoder_.lateral) conv(w);
    conv(decoder_.fuse1);
    conv(decoder_.fuse2);
    conv(decoder_.head);
    for (auto& w : aux_.weight) conv(w);
}

void IhbsModel::check_input(const Tensor& x, std::size_t channels, const char* what) const {
    if (x.rank() != 3 || x.dim(0) != channels) {
        throw ShapeError(std::string(what) + " must have shape [" + std::to_string(channels) + ", H, W], got " +
                         shape_str(x.shape()));
    }
    const auto f = config_.stride_product();
    if (x.dim(1) % f != 0 || x.dim(2) % f != 0) {
        throw ConfigError(std::string(what) + " size " + shape_str(x.shape()) +
                          " is not divisible by the cumulative stride " + std::to_string(f));
    }
}

Tensor IhbsModel::thermal_stage(std::size_t stage, const Tensor& x) const {
    const auto& t = thermal_[stage];
    auto y = relu(channel_norm(conv2d(x, t.down, std::nullopt, config_.stage_strides[stage], 1), t.down_gamma,
                               t.down_beta));
    const auto& b = t.block;
    auto r = relu(channel_norm(conv2d(y, b.conv1, std::nullopt, 1, 1), b.norm1_gamma, b.norm1_beta));
    r = channel_norm(conv2d(r, b.conv2, std::nullopt, 1, 1), b.norm2_gamma, b.norm2_beta);
    return relu(add(y, r));
}

Tensor IhbsModel::attention(const TransformerStage& s, const Tensor& tokens) const {
    const auto heads = config_.heads;
    const auto dim = tokens.dim(1) / heads;
    const real inv_sqrt = static_cast<real>(1.0 / std::sqrt(static_cast<double>(dim)));
    auto q = linear(tokens, s.wq, s.bq);
    auto k = linear(tokens, s.wk, s.bk);
    auto v = linear(tokens, s.wv, s.bv);
    std::vector<Tensor> outputs;
    if (heads == 1) {
        auto weights = softmax(scale(matmul(q, transpose(k)), inv_sqrt), 1);
        outputs.push_back(matmul(weights, v));
    } else {
        auto qs = split(q, heads, 1);
        auto ks = split(k, heads, 1);
        auto vs = split(v, heads, 1);
        for (std::size_t h = 0; h < heads; ++h) {
            auto weights = softmax(scale(matmul(qs[h], transpose(ks[h])), inv_sqrt), 1);
            outputs.push_back(matmul(weights, vs[h]));
        }
    }
    auto merged = outputs.size() == 1 ? outputs.front() : concat(outputs, 1);
    return linear(merged, s.wo, s.bo);
}

Tensor IhbsModel::rgb_stage(std::size_t stage, const Tensor& x) const {
    const auto& s = rgb_[stage];
    const auto stride = config_.stage_strides[stage];
    auto map = conv2d(x, s.embed, s.embed_bias, stride, 0);
    const auto h = map.dim(1), w = map.dim(2);
    auto tokens = layer_norm(to_tokens(map), s.embed_gamma, s.embed_beta);
    tokens = add(tokens, attention(s, layer_norm(tokens, s.ln1_gamma, s.ln1_beta)));
    auto hidden = relu(linear(layer_norm(tokens, s.ln2_gamma, s.ln2_beta), s.mlp_w1, s.mlp_b1));
    tokens = add(tokens, linear(hidden, s.mlp_w2, s.mlp_b2));
    return to_map(layer_norm(tokens, s.out_gamma, s.out_beta), h, w);
}

std::vector<Tensor> IhbsModel::thermal_encoder(const Tensor& thermal) const {
    check_input(thermal, 1, "thermal input");
    std::vector<Tensor> out;
    Tensor x = thermal;
    for (std::size_t i = 0; i < kStages; ++i) {
        x = thermal_stage(i, x);
        out.push_back(x);
    }
    return out;
}

std::vector<Tensor> IhbsModel::rgb_encoder(const Tensor& rgb) const {
    check_input(rgb, 3, "rgb input");
    std::vector<Tensor> out;
    Tensor x = rgb;
    for (std::size_t i = 0; i < kStages; ++i) {
        x = rgb_stage(i, x);
        out.push_back(x);
    }
    return out;
}

Tensor IhbsModel::decode(const std::vector<Tensor>& features, std::size_t h, std::size_t w) const {
    std::vector<Tensor> lifted;
    for (std::size_t i = 0; i < kStages; ++i) {
        auto lateral = conv2d(features[i], decoder_.lateral[i], decoder_.lateral_bias[i], 1, 0);
        lifted.push_back(resize_bilinear(lateral, h, w));
    }
    auto x = relu(conv2d(concat_channels(lifted), decoder_.fuse1, decoder_.fuse1_bias, 1, 1));
    x = relu(conv2d(x, decoder_.fuse2, decoder_.fuse2_bias, 1, 1));
    return sigmoid(conv2d(x, decoder_.head, decoder_.head_bias, 1, 0));
}

Tensor IhbsModel::aux_decode(const std::vector<Tensor>& features, std::size_t h, std::size_t w) const {
    Tensor logits;
    for (std::size_t i = 0; i < kStages; ++i) {
        auto up = resize_bilinear(conv2d(features[i], aux_.weight[i], aux_.bias[i], 1, 0), h, w);
        logits = logits.defined() ? add(logits, up) : up;
    }
    return sigmoid(logits);
}

SegOutput IhbsModel::forward(const Tensor& rgb, const Tensor& thermal) const {
    check_input(rgb, 3, "rgb input");
    check_input(thermal, 1, "thermal input");
    if (rgb.dim(1) != thermal.dim(1) || rgb.dim(2) != thermal.dim(2)) {
        throw ShapeError("rgb " + shape_str(rgb.shape()) + " and thermal " + shape_str(thermal.shape()) +
                         " are not spatially aligned");
    }
    const auto h = rgb.dim(1), w = rgb.dim(2);
    std::vector<Tensor> thermal_features, rgb_features;
    Tensor t = thermal, r = rgb;
    for (std::size_t i = 0; i < kStages; ++i) {
        t = thermal_stage(i, t);
        r = rgb_stage(i, r);
        if (config_.fusion_enabled[i]) {
            auto fused = fuse(t, r, fusion_[i]);
            t = fused.ir;
            r = fused.rgb;
        }
        thermal_features.push_back(t);
        rgb_features.push_back(r);
    }
    return {decode(rgb_features, h, w), aux_decode(thermal_features, h, w)};
}

std::size_t expected_parameter_count(const ModelConfig& c) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < kStages; ++i) {
        const auto ch = c.stage_channels[i];
        const auto t_in = stage_input_channels(c, i, 1);
        n += ch * t_in * 9 + 2 * ch;      // downsample conv + norm
        n += 2 * (ch * ch * 9 + 2 * ch);  // residual block

        const auto r_in = stage_input_channels(c, i, 3);
        const auto s = c.stage_strides[i];
        const auto hidden = ch * c.mlp_ratio;
        n += ch * r_in * s * s + ch + 2 * ch;         // patch embedding + norm
        n += 2 * ch;                                  // ln1
        n += 4 * (ch * ch + ch);                      // q, k, v, out
        n += 2 * ch;                                  // ln2
        n += ch * hidden + hidden + hidden * ch + ch;  // mlp
        n += 2 * ch;                                  // output norm

        if (c.fusion_enabled[i]) n += fusion_block_parameter_count(ch, ch, ch);

        n += ch * c.decoder_width + c.decoder_width;  // lateral
        n += ch + 1;                                  // aux head
    }
    const auto d = c.decoder_width;
    n += d * kStages * d * 9 + d + d * d * 9 + d + d + 1;
    return n;
}

IRFF_END_NAMESPACE
