#include <gtest/gtest.h>

#include <algorithm>

#include "irff/error.hpp"
#include "irff/fusion.hpp"
#include "irff/ops.hpp"
#include "irff/rng.hpp"
#include "support/oracles.hpp"

using namespace irff;

namespace {

Tensor random(Shape shape, Rng& rng, double lo = -1, double hi = 1) {
    auto t = Tensor::zeros(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<real>(rng.uniform(lo, hi));
    return t;
}

std::vector<double> as_double(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs_diff(const Tensor& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b[i]));
    return m;
}

void fill(FusionBlockParams& p, Rng& rng) {
    for (auto& e : p.named("f")) {
        auto t = e.tensor;
        for (auto& v : t.mutable_data()) v = static_cast<real>(rng.uniform(-0.5, 0.5));
    }
}

TEST(ProjectQkv, ConstantInputUnitWeights) {
    auto x = Tensor::full({1, 3, 3}, real(0.7));
    auto one = Tensor::full({1, 1, 1, 1}, 1);
    auto p = project_qkv(x, one, one, one);
    for (const auto& t : {p.query, p.key, p.value}) {
        for (auto v : t.data()) EXPECT_EQ(v, real(0.7));
    }
}

TEST(ProjectQkv, ZeroWeightsAndConvEquivalence) {
    Rng rng(1);
    auto x = random({4, 3, 5}, rng);
    auto z = project_qkv(x, Tensor::zeros({2, 4, 1, 1}), Tensor::zeros({2, 4, 1, 1}), Tensor::zeros({6, 4, 1, 1}));
    for (auto v : z.value.data()) EXPECT_EQ(v, real(0));
    EXPECT_EQ(z.value.shape(), (Shape{6, 3, 5}));

    auto wq = random({2, 4, 1, 1}, rng), wk = random({2, 4, 1, 1}, rng), wv = random({6, 4, 1, 1}, rng);
    auto p = project_qkv(x, wq, wk, wv);
    const auto ref = conv2d(x, wv, std::nullopt, 1, 0);
    EXPECT_EQ(std::vector<real>(p.value.data().begin(), p.value.data().end()),
              std::vector<real>(ref.data().begin(), ref.data().end()));
    EXPECT_THROW(project_qkv(x, Tensor::zeros({2, 3, 1, 1}), wk, wv), ShapeError);
}

TEST(CrossAttention, DegenerateSingleCell) {
    auto out = efficient_cross_attention(Tensor::full({1, 1, 1}, 3), Tensor::full({1, 1, 1}, -2),
                                         Tensor::full({1, 1, 1}, real(0.625)), 1);
    EXPECT_EQ(out.item(), real(0.625));
}

TEST(CrossAttention, LinearInValues) {
    Rng rng(2);
    auto out = efficient_cross_attention(random({4, 3, 3}, rng), random({4, 3, 3}, rng), Tensor::zeros({4, 3, 3}), 2);
    for (auto v : out.data()) EXPECT_EQ(v, real(0));
}

TEST(CrossAttention, MatchesDenseOracleSmallCase) {
    Rng rng(3);
    auto q = random({4, 3, 3}, rng, -2, 2), k = random({4, 3, 3}, rng, -2, 2), v = random({4, 3, 3}, rng);
    auto out = efficient_cross_attention(q, k, v, 2);
    const auto ref = oracle::dense_cross_attention(as_double(q), as_double(k), as_double(v), 4, 4, 9, 2);
    EXPECT_LE(max_abs_diff(out, ref), 1e-5);
    auto dense = dense_factorized_attention(q, k, v, 2);
    EXPECT_LE(max_abs_diff(dense, ref), 1e-5);
}

TEST(CrossAttention, DivisibilityIsConfigError) {
    EXPECT_THROW(efficient_cross_attention(Tensor::zeros({4, 2, 2}), Tensor::zeros({4, 2, 2}),
                                           Tensor::zeros({6, 2, 2}), 4),
                 ConfigError);
    EXPECT_THROW(FusionBlockParams::zeros(8, 6, 8, 4), ConfigError);
}

TEST(CrossAttention, SegmentLocality) {
    Rng rng(4);
    const std::size_t hw = 6;
    auto q = random({4, 2, 3}, rng, -2, 2), k = random({4, 2, 3}, rng, -2, 2), v = random({4, 2, 3}, rng);
    const auto base = efficient_cross_attention(q, k, v, 2);
    // Swap key channels 2 and 3 (segment 1) in both Q and K, and value
    // channels 0 and 1 (segment 0).
    auto swap_rows = [&](const Tensor& t, std::size_t a, std::size_t b) {
        auto c = t.detach();
        auto d = c.mutable_data();
        for (std::size_t p = 0; p < hw; ++p) std::swap(d[a * hw + p], d[b * hw + p]);
        return c;
    };
    const auto keys = efficient_cross_attention(swap_rows(q, 2, 3), swap_rows(k, 2, 3), v, 2);
    for (std::size_t i = 0; i < base.numel(); ++i) EXPECT_NEAR(keys.data()[i], base.data()[i], 1e-6);
    const auto vals = efficient_cross_attention(q, k, swap_rows(v, 0, 1), 2);
    const auto expect = swap_rows(base, 0, 1);
    for (std::size_t i = 0; i < base.numel(); ++i) EXPECT_NEAR(vals.data()[i], expect.data()[i], 1e-6);
}

TEST(CrossAttention, OutputsAreConvexInContextColumns) {
    Rng rng(5);
    const std::size_t ck = 4, cv = 4, n = 2, hw = 12, dk = 2, dv = 2;
    auto q = random({ck, 3, 4}, rng, -2, 2), k = random({ck, 3, 4}, rng, -2, 2), v = random({cv, 3, 4}, rng);
    auto out = efficient_cross_attention(q, k, v, n);
    const auto kd = as_double(k), vd = as_double(v);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t b = 0; b < dv; ++b) {
            double lo = 1e300, hi = -1e300;
            for (std::size_t a = 0; a < dk; ++a) {
                const std::size_t row = s * dk + a;
                double mx = -1e300, z = 0, ctx = 0;
                for (std::size_t p = 0; p < hw; ++p) mx = std::max(mx, kd[row * hw + p]);
                for (std::size_t p = 0; p < hw; ++p) z += std::exp(kd[row * hw + p] - mx);
                for (std::size_t p = 0; p < hw; ++p) ctx += std::exp(kd[row * hw + p] - mx) / z * vd[(s * dv + b) * hw + p];
                lo = std::min(lo, ctx);
                hi = std::max(hi, ctx);
            }
            for (std::size_t p = 0; p < hw; ++p) {
                const double o = out.data()[(s * dv + b) * hw + p];
                EXPECT_GE(o, lo - 1e-6);
                EXPECT_LE(o, hi + 1e-6);
            }
        }
    }
}

TEST(CrossAttention, ProbeMatchesAnalyticBytes) {
    Rng rng(6);
    for (std::size_t size : {1, 3, 8, 16}) {
        for (std::size_t n : {1, 2, 4}) {
            const std::size_t ck = 8, cv = 4;
            AttentionProbe probe;
            efficient_cross_attention(random({ck, size, size}, rng), random({ck, size, size}, rng),
                                      random({cv, size, size}, rng), n, &probe);
            const auto cost = attention_cost_estimate(size, size, ck, cv, n, sizeof(real));
            EXPECT_EQ(probe.buffers, 4u);
            EXPECT_EQ(static_cast<double>(probe.bytes), cost.efficient_bytes);
        }
    }
}

TEST(Fuse, ZeroWeightsAreIdentity) {
    Rng rng(7);
    auto p = FusionBlockParams::zeros(8, 8, 8, 4);
    auto xi = random({8, 4, 4}, rng), xr = random({8, 4, 4}, rng);
    auto out = fuse(xi, xr, p);
    EXPECT_TRUE(std::equal(out.ir.data().begin(), out.ir.data().end(), xi.data().begin()));
    EXPECT_TRUE(std::equal(out.rgb.data().begin(), out.rgb.data().end(), xr.data().begin()));
    EXPECT_EQ(out.ir.shape(), xi.shape());
}

TEST(Fuse, MirrorWeightsOnIdenticalInputs) {
    Rng rng(8);
    auto p = FusionBlockParams::zeros(4, 4, 8, 2);
    fill(p, rng);
    auto copy = [](const Tensor& from, Tensor to) {
        std::copy(from.data().begin(), from.data().end(), to.mutable_data().begin());
    };
    copy(p.query_ir, p.query_rgb);
    copy(p.key_ir, p.key_rgb);
    copy(p.value_ir, p.value_rgb);
    copy(p.proj_ir, p.proj_rgb);
    auto x = random({4, 3, 5}, rng);
    auto out = fuse(x, x.detach(), p);
    EXPECT_TRUE(std::equal(out.ir.data().begin(), out.ir.data().end(), out.rgb.data().begin()));
}

TEST(Fuse, DirectionsUseOppositeKeysAndValues) {
    Rng rng(9);
    auto p = FusionBlockParams::zeros(4, 4, 4, 1);
    fill(p, rng);
    auto xi = random({4, 2, 3}, rng), xr = random({4, 2, 3}, rng);
    auto out = fuse(xi, xr, p);
    auto qi = project_qkv(xi, p.query_ir, p.key_ir, p.value_ir);
    auto qr = project_qkv(xr, p.query_rgb, p.key_rgb, p.value_rgb);
    auto ir = add(conv2d(efficient_cross_attention(qi.query, qr.key, qr.value, 1), p.proj_ir, std::nullopt, 1, 0), xi);
    auto rgb =
        add(conv2d(efficient_cross_attention(qr.query, qi.key, qi.value, 1), p.proj_rgb, std::nullopt, 1, 0), xr);
    for (std::size_t i = 0; i < ir.numel(); ++i) {
        EXPECT_NEAR(out.ir.data()[i], ir.data()[i], 1e-6);
        EXPECT_NEAR(out.rgb.data()[i], rgb.data()[i], 1e-6);
    }
    EXPECT_THROW(fuse(xi, random({4, 3, 3}, rng), p), ShapeError);
}

TEST(Fuse, ParameterCountFormula) {
    auto p = FusionBlockParams::zeros(12, 8, 4, 4);
    EXPECT_EQ(p.parameter_count(), 2u * (2 * 8 * 12 + 4 * 12 + 12 * 4));
    EXPECT_EQ(p.parameter_count(), fusion_block_parameter_count(12, 8, 4));
    EXPECT_EQ(p.named("x").size(), 8u);
}

TEST(Cost, SinglePixelIsOneElement) {
    EXPECT_EQ(attention_cost_estimate(1, 1, 4, 4, 1, 4).naive_bytes, 4.0);
}

TEST(Cost, Naive256MapIs17GB) {
    const auto c = attention_cost_estimate(256, 256, 64, 64, 8, 4);
    EXPECT_EQ(c.naive_bytes, 17179869184.0);
    EXPECT_NEAR(c.naive_bytes / 1e9, 17.18, 0.005);
    EXPECT_LT(c.efficient_bytes, 100e6);
    EXPECT_GT(c.ratio, 100.0);
    const double elems = 8.0 * 8 * 8 + 2.0 * 64 * 65536 + 64.0 * 65536;
    EXPECT_EQ(c.efficient_bytes, elems * 4);
}

TEST(Cost, ScalingWithResolution) {
    for (std::size_t h : {4, 16, 64}) {
        const auto a = attention_cost_estimate(h, h, 32, 32, 4, 4);
        const auto b = attention_cost_estimate(2 * h, 2 * h, 32, 32, 4, 4);
        EXPECT_EQ(b.naive_bytes, 16 * a.naive_bytes);
        EXPECT_LE(b.efficient_bytes, 4 * a.efficient_bytes);
    }
}

}  // namespace
