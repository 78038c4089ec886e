#include <gtest/gtest.h>

#include <set>

#include "irff/error.hpp"
#include "irff/metrics.hpp"
#include "irff/rng.hpp"
#include "support/oracles.hpp"

using namespace irff;

namespace {

Tensor from_vec(const std::vector<double>& v, std::size_t h, std::size_t w) {
    std::vector<real> r(v.begin(), v.end());
    return Tensor::from({1, h, w}, std::move(r));
}

struct Pair {
    std::vector<double> pred, gt;
};

Pair random_pair(std::uint64_t seed, std::size_t n = 64) {
    Rng rng(seed);
    Pair p;
    const double density = rng.uniform(0.05, 0.6);
    for (std::size_t i = 0; i < n; ++i) {
        p.gt.push_back(rng.bernoulli(density) ? 1.0 : 0.0);
        p.pred.push_back(rng.uniform());
    }
    return p;
}

std::vector<std::uint8_t> as_bits(const std::vector<double>& v, double t) {
    std::vector<std::uint8_t> b;
    for (auto x : v) b.push_back(x >= t ? 1 : 0);
    return b;
}

TEST(Confusion, Examples) {
    const auto p = random_pair(1);
    auto gt = from_vec(p.gt, 8, 8);
    const auto self = confusion(gt, gt);
    EXPECT_EQ(self.fp, 0u);
    EXPECT_EQ(self.fn, 0u);
    std::uint64_t k = 0;
    for (auto v : p.gt) k += v > 0;
    const auto none = confusion(Tensor::zeros({1, 8, 8}), gt);
    EXPECT_EQ(none.fn, k);
    EXPECT_EQ(none.tp, 0u);
    EXPECT_EQ(none.total(), 64u);
}

TEST(Confusion, ThresholdIsInclusive) {
    auto pred = Tensor::from({1, 1, 2}, {0.5f, 0.49f});
    auto gt = Tensor::from({1, 1, 2}, {1, 1});
    const auto c = confusion(pred, gt, 0.5);
    EXPECT_EQ(c.tp, 1u);
    EXPECT_EQ(c.fn, 1u);
}

TEST(Confusion, Errors) {
    auto gt = Tensor::from({1, 1, 2}, {1, 0.5f});
    EXPECT_THROW(confusion(Tensor::zeros({1, 1, 2}), gt), DomainError);
    EXPECT_THROW(confusion(Tensor::zeros({1, 1, 2}), Tensor::zeros({1, 2, 1})), ShapeError);
    EXPECT_THROW(confusion(Tensor::zeros({1, 1, 2}), Tensor::zeros({1, 1, 2}), 0.0), ConfigError);
    EXPECT_THROW(confusion(Tensor::zeros({1, 1, 2}), Tensor::zeros({1, 1, 2}), 1.0), ConfigError);
}

TEST(Metrics, HandComputedCounts) {
    Confusion c{2, 1, 60, 1};
    const auto r = metrics_from_counts(c, {});
    EXPECT_DOUBLE_EQ(r.dice, 2.0 / 3);
    EXPECT_DOUBLE_EQ(r.iou, 0.5);
    EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3);
    EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3);
    EXPECT_DOUBLE_EQ(r.accuracy, 62.0 / 64);
    EXPECT_DOUBLE_EQ(r.specificity, 60.0 / 61);
}

TEST(Metrics, PerfectPredictionScoresOne) {
    const auto p = random_pair(2);
    auto gt = from_vec(p.gt, 8, 8);
    const auto r = compute_metrics(gt, gt);
    for (double v : {r.dice, r.iou, r.accuracy, r.precision, r.specificity, r.recall, r.cl_dice}) EXPECT_EQ(v, 1.0);
}

TEST(Metrics, EmptyBothIsPerfect) {
    const auto r = compute_metrics(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 4, 4}));
    EXPECT_EQ(r.dice, 1.0);
    EXPECT_EQ(r.iou, 1.0);
    EXPECT_EQ(r.precision, 1.0);
    EXPECT_EQ(r.recall, 1.0);
    EXPECT_EQ(r.cl_dice, 1.0);
    const auto miss = compute_metrics(Tensor::zeros({1, 4, 4}), Tensor::full({1, 4, 4}, 1));
    EXPECT_EQ(miss.dice, 0.0);
    EXPECT_EQ(miss.precision, 0.0);
    EXPECT_EQ(miss.specificity, 0.0);  // no gt background, but predicted background
}

TEST(Metrics, BruteForceOracle) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto p = random_pair(seed + 10);
        const auto r = compute_metrics(from_vec(p.pred, 8, 8), from_vec(p.gt, 8, 8));
        const auto c = oracle::pixel_counts(p.pred, p.gt, 0.5);
        EXPECT_EQ(r.counts.tp, c.tp);
        EXPECT_EQ(r.counts.fp, c.fp);
        EXPECT_EQ(r.counts.tn, c.tn);
        EXPECT_EQ(r.counts.fn, c.fn);
        const double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
        EXPECT_EQ(r.dice, oracle::safe_ratio(2 * tp, 2 * tp + fp + fn));
        EXPECT_EQ(r.iou, oracle::safe_ratio(tp, tp + fp + fn));
        EXPECT_EQ(r.accuracy, (tp + tn) / 64);
        EXPECT_EQ(r.precision, tp + fp == 0 ? (fn == 0 ? 1.0 : 0.0) : tp / (tp + fp));
        EXPECT_EQ(r.recall, tp + fn == 0 ? (fp == 0 ? 1.0 : 0.0) : tp / (tp + fn));
        EXPECT_EQ(r.specificity, oracle::safe_ratio(tn, tn + fp));
        EXPECT_NEAR(r.dice, 2 * r.iou / (1 + r.iou), 1e-12);

        const auto pb = as_bits(p.pred, 0.5), gb = as_bits(p.gt, 0.5);
        const auto sp = oracle::lantuejoul(pb, 8, 8), sg = oracle::lantuejoul(gb, 8, 8);
        double sp_n = 0, sp_in = 0, sg_n = 0, sg_in = 0;
        for (std::size_t i = 0; i < 64; ++i) {
            sp_n += sp[i];
            sp_in += sp[i] && gb[i];
            sg_n += sg[i];
            sg_in += sg[i] && pb[i];
        }
        const double tprec = sp_n == 0 ? 0 : sp_in / sp_n, tsens = sg_n == 0 ? 0 : sg_in / sg_n;
        const double cl = tprec + tsens > 0 ? 2 * tprec * tsens / (tprec + tsens) : 0.0;
        EXPECT_NEAR(r.cl_dice, cl, 1e-12) << seed;
    }
}

TEST(Metrics, SetIntersectionAgrees) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = random_pair(seed + 500, 100);
        std::set<std::size_t> a, b, all;
        for (std::size_t i = 0; i < 100; ++i) {
            all.insert(i);
            if (p.pred[i] >= 0.5) a.insert(i);
            if (p.gt[i] > 0.5) b.insert(i);
        }
        std::size_t inter = 0;
        for (auto i : a) inter += b.count(i);
        std::set<std::size_t> uni = a;
        uni.insert(b.begin(), b.end());
        const auto r = compute_metrics(from_vec(p.pred, 10, 10), from_vec(p.gt, 10, 10));
        EXPECT_NEAR(r.iou, uni.empty() ? 1.0 : double(inter) / uni.size(), 1e-15);
        EXPECT_NEAR(r.dice, a.size() + b.size() == 0 ? 1.0 : 2.0 * inter / (a.size() + b.size()), 1e-15);
        EXPECT_NEAR(r.accuracy, double(all.size() - uni.size() + inter) / all.size(), 1e-15);
    }
}

TEST(Metrics, PrecisionRecallSwapSymmetry) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = random_pair(seed + 900);
        auto a = from_vec(p.gt, 8, 8);
        const auto q = random_pair(seed + 901);
        auto b = from_vec(q.gt, 8, 8);
        EXPECT_EQ(compute_metrics(a, b).precision, compute_metrics(b, a).recall);
    }
}

TEST(Metrics, RecallNeverRisesWithThreshold) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = random_pair(seed + 300);
        auto pred = from_vec(p.pred, 8, 8), gt = from_vec(p.gt, 8, 8);
        double prev = 2;
        for (double t = 0.05; t < 1; t += 0.05) {
            const double r = compute_metrics(pred, gt, t).recall;
            EXPECT_LE(r, prev);
            prev = r;
        }
    }
}

TEST(HardSkeleton, LinesAndOracle) {
    std::vector<std::uint8_t> line(7 * 9, 0);
    for (std::size_t x = 0; x < 9; ++x) line[3 * 9 + x] = 1;
    EXPECT_EQ(hard_skeleton(line, 7, 9), line);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto p = random_pair(seed + 700, 144);
        const auto b = as_bits(p.pred, 0.3);
        EXPECT_EQ(hard_skeleton(b, 12, 12), oracle::lantuejoul(b, 12, 12));
    }
}

TEST(Aggregate, SingleAndIdenticalImages) {
    const auto p = random_pair(3);
    const auto r = compute_metrics(from_vec(p.pred, 8, 8), from_vec(p.gt, 8, 8));
    for (auto mode : {Aggregation::micro, Aggregation::macro}) {
        const auto a = aggregate({r}, mode);
        EXPECT_DOUBLE_EQ(a.dice, r.dice);
        EXPECT_DOUBLE_EQ(a.cl_dice, r.cl_dice);
        EXPECT_DOUBLE_EQ(a.specificity, r.specificity);
    }
    const auto two = aggregate({r, r}, Aggregation::macro);
    EXPECT_DOUBLE_EQ(two.dice, r.dice);
    EXPECT_DOUBLE_EQ(two.recall, r.recall);
    EXPECT_EQ(two.counts.tp, 2 * r.counts.tp);
    EXPECT_THROW(aggregate({}, Aggregation::micro), UsageError);
}

TEST(Aggregate, MicroDiffersFromMacro) {
    // Image A: tp 1, fp 1, fn 0, tn 2 (dice 2/3). Image B: tp 8, fp 0, fn 0,
    // tn 8 (dice 1). Micro: 18/19. Macro: 5/6.
    const auto a = metrics_from_counts({1, 1, 2, 0}, {});
    const auto b = metrics_from_counts({8, 0, 8, 0}, {});
    EXPECT_DOUBLE_EQ(aggregate({a, b}, Aggregation::micro).dice, 18.0 / 19);
    EXPECT_DOUBLE_EQ(aggregate({a, b}, Aggregation::macro).dice, 5.0 / 6);
    EXPECT_DOUBLE_EQ(aggregate({a, b}, Aggregation::micro).iou, 9.0 / 10);
    EXPECT_DOUBLE_EQ(aggregate({a, b}, Aggregation::macro).iou, 0.75);
}

TEST(ReportJson, RoundTrip) {
    const auto p = random_pair(4);
    ReportDocument doc;
    doc.report = compute_metrics(from_vec(p.pred, 8, 8), from_vec(p.gt, 8, 8));
    doc.mode = Aggregation::macro;
    doc.threshold = 0.4;
    doc.images = 7;
    const auto text = report_to_json(doc);
    const auto back = report_from_json(text);
    EXPECT_EQ(back.report.counts.tp, doc.report.counts.tp);
    EXPECT_EQ(back.report.counts.tn, doc.report.counts.tn);
    EXPECT_EQ(back.report.dice, doc.report.dice);
    EXPECT_EQ(back.report.cl_dice, doc.report.cl_dice);
    EXPECT_EQ(back.report.specificity, doc.report.specificity);
    EXPECT_EQ(back.mode, Aggregation::macro);
    EXPECT_EQ(back.threshold, 0.4);
    EXPECT_EQ(back.images, 7u);
    EXPECT_EQ(report_to_json(back), text);
    for (const char* key : {"\"tp\"", "\"fp\"", "\"tn\"", "\"fn\"", "\"dice\"", "\"iou\"", "\"accuracy\"",
                            "\"precision\"", "\"specificity\"", "\"recall\"", "\"cl_dice\"", "\"mode\"",
                            "\"threshold\""}) {
        EXPECT_NE(text.find(key), std::string::npos) << key;
    }
    EXPECT_THROW(report_from_json("{\"tp\": 1}"), DataError);
    EXPECT_THROW(report_from_json("not json"), DataError);
}

TEST(Aggregation, ParseNames) {
    EXPECT_EQ(parse_aggregation("micro"), Aggregation::micro);
    EXPECT_EQ(parse_aggregation("macro"), Aggregation::macro);
    EXPECT_EQ(to_string(Aggregation::macro), "macro");
    EXPECT_THROW(parse_aggregation("median"), ConfigError);
}

}  // namespace
