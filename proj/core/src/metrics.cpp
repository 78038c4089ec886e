#include "irff/metrics.hpp"

#include <algorithm>
#include "json.hpp"

IRFF_BEGIN_NAMESPACE

namespace {

using Plane = std::vector<std::uint8_t>;

double ratio(std::uint64_t num, std::uint64_t den, bool both_empty) {
    if (den == 0) return both_empty ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

void check_threshold(double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("threshold must lie in (0, 1), got " + std::to_string(threshold));
    }
}

void check_pair(const Tensor& pred, const Tensor& gt) {
    if (pred.shape() != gt.shape()) {
        throw ShapeError("metrics: prediction " + shape_str(pred.shape()) + " vs ground truth " + shape_str(gt.shape()));
    }
    if (pred.rank() < 2) throw ShapeError("metrics need at least [H, W] maps, got " + shape_str(pred.shape()));
}

void check_binary(const Tensor& gt) {
    for (auto v : gt.data()) {
        if (v != real(0) && v != real(1)) {
            throw DomainError("ground truth must be binary, found " + std::to_string(v));
        }
    }
}

// 3x3 min/max over in-bounds neighbours only.
Plane morph(const Plane& in, std::size_t h, std::size_t w, bool dilate) {
    Plane out(in.size());
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::uint8_t v = dilate ? 0 : 1;
            for (std::size_t yy = y ? y - 1 : 0; yy <= std::min(h - 1, y + 1); ++yy) {
                for (std::size_t xx = x ? x - 1 : 0; xx <= std::min(w - 1, x + 1); ++xx) {
                    v = dilate ? std::max(v, in[yy * w + xx]) : std::min(v, in[yy * w + xx]);
                }
            }
            out[y * w + x] = v;
        }
    }
    return out;
}

bool any(const Plane& p) {
    return std::any_of(p.begin(), p.end(), [](std::uint8_t v) { return v != 0; });
}

}  // namespace

std::string to_string(Aggregation mode) { return mode == Aggregation::micro ? "micro" : "macro"; }

Aggregation parse_aggregation(const std::string& text) {
    if (text == "micro") return Aggregation::micro;
    if (text == "macro") return Aggregation::macro;
    throw ConfigError("aggregation must be micro or macro, got '" + text + "'");
}

Confusion confusion(const Tensor& pred, const Tensor& gt, double threshold) {
    check_threshold(threshold);
    check_pair(pred, gt);
    check_binary(gt);
    Confusion c;
    const auto p = pred.data();
    const auto g = gt.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool fg = static_cast<double>(p[i]) >= threshold;
        const bool truth = g[i] == real(1);
        if (fg && truth) ++c.tp;
        else if (fg) ++c.fp;
        else if (truth) ++c.fn;
        else ++c.tn;
    }
    return c;
}

std::vector<std::uint8_t> hard_skeleton(const std::vector<std::uint8_t>& mask, std::size_t h, std::size_t w) {
    if (mask.size() != h * w) throw ShapeError("hard_skeleton: buffer does not match h x w");
    Plane skeleton(mask.size(), 0);
    Plane level = mask;
    while (any(level)) {
        const Plane eroded = morph(level, h, w, false);
        const Plane opened = morph(eroded, h, w, true);
        for (std::size_t i = 0; i < level.size(); ++i) {
            if (level[i] && !opened[i]) skeleton[i] = 1;
        }
        if (eroded == level) break;
        level = eroded;
    }
    return skeleton;
}

std::vector<std::uint8_t> binarize(const Tensor& x, double threshold) {
    std::vector<std::uint8_t> out(x.numel());
    const auto d = x.data();
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = static_cast<double>(d[i]) >= threshold ? 1 : 0;
    return out;
}

SkeletonCounts skeleton_counts(const Tensor& pred, const Tensor& gt, double threshold) {
    check_threshold(threshold);
    check_pair(pred, gt);
    const std::size_t h = pred.dim(pred.rank() - 2);
    const std::size_t w = pred.dim(pred.rank() - 1);
    const std::size_t plane = h * w;
    const auto p = binarize(pred, threshold);
    const auto g = binarize(gt, 0.5);
    SkeletonCounts s;
    for (std::size_t off = 0; off < p.size(); off += plane) {
        const Plane pp(p.begin() + off, p.begin() + off + plane);
        const Plane gp(g.begin() + off, g.begin() + off + plane);
        const auto sp = hard_skeleton(pp, h, w);
        const auto sg = hard_skeleton(gp, h, w);
        for (std::size_t i = 0; i < plane; ++i) {
            s.pred_skeleton += sp[i];
            s.pred_in_gt += sp[i] & gp[i];
            s.gt_skeleton += sg[i];
            s.gt_in_pred += sg[i] & pp[i];
        }
    }
    return s;
}

MetricsReport metrics_from_counts(const Confusion& c, const SkeletonCounts& s) {
    MetricsReport r;
    r.counts = c;
    r.skeleton = s;
    const bool pred_empty = c.tp + c.fp == 0;
    const bool gt_empty = c.tp + c.fn == 0;
    const bool fg_empty = pred_empty && gt_empty;
    const bool bg_empty = c.tn + c.fn == 0 && c.tn + c.fp == 0;
    r.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, fg_empty);
    r.iou = ratio(c.tp, c.tp + c.fp + c.fn, fg_empty);
    r.accuracy = ratio(c.tp + c.tn, c.total(), c.total() == 0);
    r.precision = ratio(c.tp, c.tp + c.fp, fg_empty);
    r.recall = ratio(c.tp, c.tp + c.fn, fg_empty);
    r.specificity = ratio(c.tn, c.tn + c.fp, bg_empty);

    const double tprec = ratio(s.pred_in_gt, s.pred_skeleton, fg_empty);
    const double tsens = ratio(s.gt_in_pred, s.gt_skeleton, fg_empty);
    if (fg_empty) r.cl_dice = 1.0;
    else r.cl_dice = tprec + tsens > 0 ? 2.0 * tprec * tsens / (tprec + tsens) : 0.0;
    return r;
}

MetricsReport compute_metrics(const Confusion& counts, const Tensor& pred, const Tensor& gt, double threshold) {
    return metrics_from_counts(counts, skeleton_counts(pred, gt, threshold));
}

MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt, double threshold) {
    return compute_metrics(confusion(pred, gt, threshold), pred, gt, threshold);
}

MetricsReport aggregate(const std::vector<MetricsReport>& reports, Aggregation mode) {
    if (reports.empty()) throw UsageError("aggregate needs at least one report");
    Confusion c;
    SkeletonCounts s;
    for (const auto& r : reports) {
        c.tp += r.counts.tp;
        c.fp += r.counts.fp;
        c.tn += r.counts.tn;
        c.fn += r.counts.fn;
        s.pred_skeleton += r.skeleton.pred_skeleton;
        s.pred_in_gt += r.skeleton.pred_in_gt;
        s.gt_skeleton += r.skeleton.gt_skeleton;
        s.gt_in_pred += r.skeleton.gt_in_pred;
    }
    auto out = metrics_from_counts(c, s);
    if (mode == Aggregation::micro) return out;

    const double n = static_cast<double>(reports.size());
    out.dice = out.iou = out.accuracy = out.precision = out.specificity = out.recall = out.cl_dice = 0;
    for (const auto& r : reports) {
        out.dice += r.dice;
        out.iou += r.iou;
        out.accuracy += r.accuracy;
        out.precision += r.precision;
        out.specificity += r.specificity;
        out.recall += r.recall;
        out.cl_dice += r.cl_dice;
    }
    out.dice /= n;
    out.iou /= n;
    out.accuracy /= n;
    out.precision /= n;
    out.specificity /= n;
    out.recall /= n;
    out.cl_dice /= n;
    return out;
}

std::string report_to_json(const ReportDocument& doc) {
    const auto& r = doc.report;
    nlohmann::ordered_json j;
    j["tp"] = r.counts.tp;
    j["fp"] = r.counts.fp;
    j["tn"] = r.counts.tn;
    j["fn"] = r.counts.fn;
    j["dice"] = r.dice;
    j["iou"] = r.iou;
    j["accuracy"] = r.accuracy;
    j["precision"] = r.precision;
    j["specificity"] = r.specificity;
    j["recall"] = r.recall;
    j["cl_dice"] = r.cl_dice;
    j["mode"] = to_string(doc.mode);
    j["threshold"] = doc.threshold;
    j["images"] = doc.images;
    return j.dump(2) + "\n";
}

ReportDocument report_from_json(const std::string& text) {
    ReportDocument doc;
    try {
        const auto j = nlohmann::json::parse(text);
        auto& r = doc.report;
        r.counts.tp = j.at("tp").get<std::uint64_t>();
        r.counts.fp = j.at("fp").get<std::uint64_t>();
        r.counts.tn = j.at("tn").get<std::uint64_t>();
        r.counts.fn = j.at("fn").get<std::uint64_t>();
        r.dice = j.at("dice").get<double>();
        r.iou = j.at("iou").get<double>();
        r.accuracy = j.at("accuracy").get<double>();
        r.precision = j.at("precision").get<double>();
        r.specificity = j.at("specificity").get<double>();
        r.recall = j.at("recall").get<double>();
        r.cl_dice = j.at("cl_dice").get<double>();
        doc.mode = parse_aggregation(j.at("mode").get<std::string>());
        doc.threshold = j.at("threshold").get<double>();
        doc.images = j.value("images", std::size_t{0});
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed metrics report: ") + e.what());
    }
    return doc;
}

IRFF_END_NAMESPACE
