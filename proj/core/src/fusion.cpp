#include "irff/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "irff/kernels.hpp"
#include "irff/ops.hpp"

IRFF_BEGIN_NAMESPACE

using autograd::Node;

namespace {

void check_segments(std::size_t key_channels, std::size_t value_channels, std::size_t segments) {
    if (segments < 1 || key_channels % segments != 0 || value_channels % segments != 0) {
        throw ConfigError("segment count " + std::to_string(segments) + " must divide key channels (" +
                          std::to_string(key_channels) + ") and value channels (" + std::to_string(value_channels) +
                          ")");
    }
}

// Buffer that reports its size to an optional probe.
std::vector<real> probed_buffer(std::size_t n, AttentionProbe* probe) {
    if (probe) {
        probe->buffers += 1;
        probe->bytes += n * sizeof(real);
    }
    return std::vector<real>(n);
}

}  // namespace

FusionBlockParams FusionBlockParams::zeros(std::size_t channels, std::size_t key_channels,
                                           std::size_t value_channels, std::size_t segments) {
    if (channels < 1) throw ConfigError("fusion block needs at least one channel");
    check_segments(key_channels, value_channels, segments);
    FusionBlockParams p;
    p.channels = channels;
    p.key_channels = key_channels;
    p.value_channels = value_channels;
    p.segments = segments;
    auto w = [](std::size_t out, std::size_t in) { return Tensor::zeros({out, in, 1, 1}, true); };
    p.query_ir = w(key_channels, channels);
    p.key_ir = w(key_channels, channels);
    p.value_ir = w(value_channels, channels);
    p.proj_ir = w(channels, value_channels);
    p.query_rgb = w(key_channels, channels);
    p.key_rgb = w(key_channels, channels);
    p.value_rgb = w(value_channels, channels);
    p.proj_rgb = w(channels, value_channels);
    return p;
}

std::vector<NamedTensor> FusionBlockParams::named(const std::string& prefix) const {
    return {
        {prefix + ".query_ir", query_ir},   {prefix + ".key_ir", key_ir},   {prefix + ".value_ir", value_ir},
        {prefix + ".proj_ir", proj_ir},     {prefix + ".query_rgb", query_rgb}, {prefix + ".key_rgb", key_rgb},
        {prefix + ".value_rgb", value_rgb}, {prefix + ".proj_rgb", proj_rgb},
    };
}

std::size_t FusionBlockParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : named("")) n += e.tensor.numel();
    return n;
}

std::size_t fusion_block_parameter_count(std::size_t channels, std::size_t key_channels,
                                         std::size_t value_channels) {
    return 2 * (2 * key_channels * channels + value_channels * channels + channels * value_channels);
}

QkvProjection project_qkv(const Tensor& x, const Tensor& w_query, const Tensor& w_key, const Tensor& w_value) {
    return {conv2d(x, w_query, std::nullopt, 1, 0), conv2d(x, w_key, std::nullopt, 1, 0),
            conv2d(x, w_value, std::nullopt, 1, 0)};
}

Tensor efficient_cross_attention(const Tensor& query, const Tensor& key_other, const Tensor& value_other,
                                 std::size_t segments, AttentionProbe* probe) {
    if (query.rank() != 3 || key_other.rank() != 3 || value_other.rank() != 3) {
        throw ShapeError("efficient_cross_attention expects [C, H, W] tensors");
    }
    const auto ck = query.dim(0);
    const auto cv = value_other.dim(0);
    if (key_other.dim(0) != ck) {
        throw ShapeError("query and key channel counts differ: " + shape_str(query.shape()) + " vs " +
                         shape_str(key_other.shape()));
    }
    if (key_other.dim(1) != value_other.dim(1) || key_other.dim(2) != value_other.dim(2)) {
        throw ShapeError("key and value spatial sizes differ");
    }
    check_segments(ck, cv, segments);
    const auto nq = query.dim(1) * query.dim(2);
    const auto nk = key_other.dim(1) * key_other.dim(2);
    const auto dk = ck / segments;
    const auto dv = cv / segments;

    auto q = query.data();
    auto k = key_other.data();
    auto v = value_other.data();

    // softmax over positions for every key row
    auto kn = std::make_shared<std::vector<real>>(probed_buffer(ck * nk, probe));
    for (std::size_t r = 0; r < ck; ++r) {
        const real* src = k.data() + r * nk;
        real* dst = kn->data() + r * nk;
        real mx = *std::max_element(src, src + nk);
        for (std::size_t p = 0; p < nk; ++p) dst[p] = src[p] - mx;
        kernels::exp_inplace(dst, nk);
        double total = 0.0;
        for (std::size_t p = 0; p < nk; ++p) total += dst[p];
        const real inv = static_cast<real>(1.0 / total);
        for (std::size_t p = 0; p < nk; ++p) dst[p] *= inv;
    }

    // softmax over the channels of each segment at every query position
    auto qn = std::make_shared<std::vector<real>>(probed_buffer(ck * nq, probe));
    for (std::size_t s = 0; s < segments; ++s) {
        const real* src = q.data() + s * dk * nq;
        real* dst = qn->data() + s * dk * nq;
        for (std::size_t p = 0; p < nq; ++p) {
            real mx = src[p];
            for (std::size_t a = 1; a < dk; ++a) mx = std::max(mx, src[a * nq + p]);
            double total = 0.0;
            for (std::size_t a = 0; a < dk; ++a) {
                dst[a * nq + p] = std::exp(src[a * nq + p] - mx);
                total += dst[a * nq + p];
            }
            const real inv = static_cast<real>(1.0 / total);
            for (std::size_t a = 0; a < dk; ++a) dst[a * nq + p] *= inv;
        }
    }

    // per-segment contexts, dk x dv each
    auto ctx = std::make_shared<std::vector<real>>(probed_buffer(segments * dk * dv, probe));
    for (std::size_t s = 0; s < segments; ++s) {
        for (std::size_t a = 0; a < dk; ++a) {
            const real* krow = kn->data() + (s * dk + a) * nk;
            for (std::size_t b = 0; b < dv; ++b) {
                const real* vrow = v.data() + (s * dv + b) * nk;
                double acc = 0.0;
                for (std::size_t p = 0; p < nk; ++p) acc += static_cast<double>(krow[p]) * vrow[p];
                (*ctx)[(s * dk + a) * dv + b] = static_cast<real>(acc);
            }
        }
    }

    auto out = probed_buffer(cv * nq, probe);
    std::fill(out.begin(), out.end(), real(0));
    for (std::size_t s = 0; s < segments; ++s) {
        for (std::size_t b = 0; b < dv; ++b) {
            real* orow = out.data() + (s * dv + b) * nq;
            for (std::size_t a = 0; a < dk; ++a) {
                const real c = (*ctx)[(s * dk + a) * dv + b];
                const real* qrow = qn->data() + (s * dk + a) * nq;
                for (std::size_t p = 0; p < nq; ++p) orow[p] += c * qrow[p];
            }
        }
    }

    Shape out_shape{cv, query.dim(1), query.dim(2)};
    return autograd::make_result(
        std::move(out_shape), std::move(out), {query, key_other, value_other}, [=](Node& self) {
            const real* g = self.grad.data();
            const real* vv = self.parents[2]->value.data();
            real* gq = self.parent_grad(0);
            real* gk = self.parent_grad(1);
            real* gv = self.parent_grad(2);
            std::vector<real> dctx(dk * dv);
            std::vector<real> dqn(dk * nq);
            std::vector<real> dkn(dk * nk);
            for (std::size_t s = 0; s < segments; ++s) {
                const real* qs = qn->data() + s * dk * nq;
                const real* ks = kn->data() + s * dk * nk;
                const real* cs = ctx->data() + s * dk * dv;
                const real* gs = g + s * dv * nq;
                const real* vs = vv + s * dv * nk;

                // dctx[a][b] = <qn_a, dOut_b>
                for (std::size_t a = 0; a < dk; ++a) {
                    for (std::size_t b = 0; b < dv; ++b) {
                        double acc = 0.0;
                        for (std::size_t p = 0; p < nq; ++p) acc += static_cast<double>(qs[a * nq + p]) * gs[b * nq + p];
                        dctx[a * dv + b] = static_cast<real>(acc);
                    }
                }

                if (gq) {
                    std::fill(dqn.begin(), dqn.end(), real(0));
                    for (std::size_t a = 0; a < dk; ++a)
                        for (std::size_t b = 0; b < dv; ++b) {
                            const real c = cs[a * dv + b];
                            for (std::size_t p = 0; p < nq; ++p) dqn[a * nq + p] += c * gs[b * nq + p];
                        }
                    real* gqs = gq + s * dk * nq;
                    for (std::size_t p = 0; p < nq; ++p) {
                        double dot = 0.0;
                        for (std::size_t a = 0; a < dk; ++a) dot += static_cast<double>(qs[a * nq + p]) * dqn[a * nq + p];
                        for (std::size_t a = 0; a < dk; ++a)
                            gqs[a * nq + p] += qs[a * nq + p] * (dqn[a * nq + p] - static_cast<real>(dot));
                    }
                }

                if (gk) {
                    std::fill(dkn.begin(), dkn.end(), real(0));
                    for (std::size_t a = 0; a < dk; ++a)
                        for (std::size_t b = 0; b < dv; ++b) {
                            const real c = dctx[a * dv + b];
                            for (std::size_t p = 0; p < nk; ++p) dkn[a * nk + p] += c * vs[b * nk + p];
                        }
                    real* gks = gk + s * dk * nk;
                    for (std::size_t a = 0; a < dk; ++a) {
                        double dot = 0.0;
                        for (std::size_t p = 0; p < nk; ++p) dot += static_cast<double>(ks[a * nk + p]) * dkn[a * nk + p];
                        for (std::size_t p = 0; p < nk; ++p)
                            gks[a * nk + p] += ks[a * nk + p] * (dkn[a * nk + p] - static_cast<real>(dot));
                    }
                }

                if (gv) {
                    real* gvs = gv + s * dv * nk;
                    for (std::size_t b = 0; b < dv; ++b)
                        for (std::size_t a = 0; a < dk; ++a) {
                            const real c = dctx[a * dv + b];
                            for (std::size_t p = 0; p < nk; ++p) gvs[b * nk + p] += c * ks[a * nk + p];
                        }
                }
            }
        });
}

Tensor dense_factorized_attention(const Tensor& query, const Tensor& key_other, const Tensor& value_other,
                                  std::size_t segments) {
    NoGradGuard no_grad;
    const auto ck = query.dim(0);
    const auto cv = value_other.dim(0);
    check_segments(ck, cv, segments);
    const auto nq = query.dim(1) * query.dim(2);
    const auto nk = key_other.dim(1) * key_other.dim(2);
    const auto dk = ck / segments;
    const auto dv = cv / segments;
    const auto k_soft = softmax(reshape(key_other, {ck, nk}), 1);
    const auto kn = k_soft.data();
    std::vector<real> out(cv * nq, real(0));
    std::vector<real> map(nq * nk);
    for (std::size_t s = 0; s < segments; ++s) {
        const auto qs = softmax(reshape(split_channels(query, segments)[s], {dk, nq}), 0);
        auto qv = qs.data();
        // map[p][p'] = sum_a qn[a][p] * kn[a][p']
        std::fill(map.begin(), map.end(), real(0));
        for (std::size_t a = 0; a < dk; ++a) {
            const real* krow = kn.data() + (s * dk + a) * nk;
            for (std::size_t p = 0; p < nq; ++p) {
                const real qa = qv[a * nq + p];
                real* mrow = map.data() + p * nk;
                for (std::size_t pp = 0; pp < nk; ++pp) mrow[pp] += qa * krow[pp];
            }
        }
        auto vv = value_other.data();
        for (std::size_t b = 0; b < dv; ++b) {
            const real* vrow = vv.data() + (s * dv + b) * nk;
            real* orow = out.data() + (s * dv + b) * nq;
            for (std::size_t p = 0; p < nq; ++p) {
                const real* mrow = map.data() + p * nk;
                double acc = 0.0;
                for (std::size_t pp = 0; pp < nk; ++pp) acc += static_cast<double>(mrow[pp]) * vrow[pp];
                orow[p] = static_cast<real>(acc);
            }
        }
    }
    return Tensor::from({cv, query.dim(1), query.dim(2)}, std::move(out));
}

FusionOutput fuse(const Tensor& x_ir, const Tensor& x_rgb, const FusionBlockParams& params) {
    if (x_ir.shape() != x_rgb.shape()) {
        throw ShapeError("fusion inputs differ in shape: " + shape_str(x_ir.shape()) + " vs " +
                         shape_str(x_rgb.shape()));
    }
    if (x_ir.rank() != 3 || x_ir.dim(0) != params.channels) {
        throw ShapeError("fusion block expects " + std::to_string(params.channels) + " channels, got " +
                         shape_str(x_ir.shape()));
    }
    const auto ir = project_qkv(x_ir, params.query_ir, params.key_ir, params.value_ir);
    const auto rgb = project_qkv(x_rgb, params.query_rgb, params.key_rgb, params.value_rgb);
    const auto attended_ir = efficient_cross_attention(ir.query, rgb.key, rgb.value, params.segments);
    const auto attended_rgb = efficient_cross_attention(rgb.query, ir.key, ir.value, params.segments);
    return {add(conv2d(attended_ir, params.proj_ir, std::nullopt, 1, 0), x_ir),
            add(conv2d(attended_rgb, params.proj_rgb, std::nullopt, 1, 0), x_rgb)};
}

AttentionCost attention_cost_estimate(std::size_t height, std::size_t width, std::size_t key_channels,
                                      std::size_t value_channels, std::size_t segments,
                                      std::size_t bytes_per_elem) {
    if (height < 1 || width < 1 || key_channels < 1 || value_channels < 1 || bytes_per_elem < 1) {
        throw ConfigError("attention cost estimate requires positive dimensions");
    }
    check_segments(key_channels, value_channels, segments);
    const double hw = static_cast<double>(height) * static_cast<double>(width);
    const double b = static_cast<double>(bytes_per_elem);
    const double dk = static_cast<double>(key_channels / segments);
    const double dv = static_cast<double>(value_channels / segments);
    AttentionCost c;
    c.naive_bytes = hw * hw * b;
    c.efficient_bytes = (static_cast<double>(segments) * dk * dv + 2.0 * static_cast<double>(key_channels) * hw +
                         static_cast<double>(value_channels) * hw) *
                        b;
    c.ratio = c.naive_bytes / c.efficient_bytes;
    return c;
}

IRFF_END_NAMESPACE
