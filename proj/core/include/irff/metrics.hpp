#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "irff/tensor.hpp"

IRFF_BEGIN_NAMESPACE

inline constexpr double kDefaultThreshold = 0.5;

struct Confusion {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t tn = 0;
    std::uint64_t fn = 0;

    std::uint64_t total() const { return tp + fp + tn + fn; }
};

/// Pixel counts of pred (foreground where >= threshold) against a binary
/// ground truth. DomainError if gt holds anything but 0 and 1, ShapeError on
/// shape mismatch, ConfigError unless 0 < threshold < 1.
Confusion confusion(const Tensor& pred, const Tensor& gt, double threshold = kDefaultThreshold);

/// Overlap counts between hard centerlines and the opposite volumes.
struct SkeletonCounts {
    std::uint64_t pred_skeleton = 0;  // |S(pred)|
    std::uint64_t pred_in_gt = 0;     // |S(pred) & gt|
    std::uint64_t gt_skeleton = 0;    // |S(gt)|
    std::uint64_t gt_in_pred = 0;     // |S(gt) & pred|
};

struct MetricsReport {
    Confusion counts;
    SkeletonCounts skeleton;
    double dice = 0;
    double iou = 0;
    double accuracy = 0;
    double precision = 0;
    double specificity = 0;
    double recall = 0;
    double cl_dice = 0;
};

enum class Aggregation { micro, macro };

std::string to_string(Aggregation mode);
Aggregation parse_aggregation(const std::string& text);

/// Morphological skeleton of a binary h x w plane: the union over erosion
/// levels of each level minus its opening (3x3 square element).
std::vector<std::uint8_t> hard_skeleton(const std::vector<std::uint8_t>& mask, std::size_t h, std::size_t w);

/// Binarizes a tensor whose last two axes are H and W; leading axes are
/// treated as separate planes.
std::vector<std::uint8_t> binarize(const Tensor& x, double threshold);

SkeletonCounts skeleton_counts(const Tensor& pred, const Tensor& gt, double threshold = kDefaultThreshold);

/// The six overlap metrics from counts plus the centerline Dice of the
/// binarized maps. A ratio with an empty denominator is 1 when both sets it
/// compares are empty and 0 otherwise.
MetricsReport compute_metrics(const Confusion& counts, const Tensor& pred, const Tensor& gt,
                              double threshold = kDefaultThreshold);
MetricsReport compute_metrics(const Tensor& pred, const Tensor& gt, double threshold = kDefaultThreshold);

/// Ratios from raw counts alone.
MetricsReport metrics_from_counts(const Confusion& counts, const SkeletonCounts& skeleton);

/// micro: sum counts then recompute. macro: average per-image ratios
/// (counts are still summed). UsageError on an empty list.
MetricsReport aggregate(const std::vector<MetricsReport>& reports, Aggregation mode);

struct ReportDocument {
    MetricsReport report;
    Aggregation mode = Aggregation::micro;
    double threshold = kDefaultThreshold;
    std::size_t images = 0;
};

std::string report_to_json(const ReportDocument& doc);
ReportDocument report_from_json(const std::string& text);

IRFF_END_NAMESPACE
