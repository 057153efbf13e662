#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "segforge/tensor.hpp"

SEGFORGE_NAMESPACE_BEGIN

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// Pixel confusion counts of pred >= threshold against a binary target.
ConfusionCounts confusion(std::span<const Real> pred, std::span<const Real> target, double threshold);

struct PairMetrics {
  double dice = 0, iou_fg = 0, iou_bg = 0, recall = 0, precision = 0;
  ConfusionCounts counts;
};

/// Metrics from confusion counts:
///   dice = 2TP/(2TP+FP+FN)   iou_fg = TP/(TP+FP+FN)   iou_bg = TN/(TN+FP+FN)
///   recall = TP/(TP+FN)      precision = TP/(TP+FP)
/// A zero denominator yields 1 when the other side is empty as well (nothing
/// predicted where nothing exists), else 0.
PairMetrics metrics_from_counts(const ConfusionCounts& c);

PairMetrics evaluate_pair(const Tensor& pred, const Tensor& target, double threshold = 0.5);

struct MetricReport {
  double dice = 0, miou = 0, recall = 0, precision = 0;
  std::size_t n_samples = 0;
  double threshold = 0.5;
};

/// Means over samples in index order; miou averages (iou_fg + iou_bg) / 2.
/// Throws ContractError on an empty set.
MetricReport aggregate(std::span<const PairMetrics> samples, double threshold = 0.5);

/// "dice,miou,recall,precision" formatted with 6 significant digits.
std::string format_report_csv(const MetricReport& report);

SEGFORGE_NAMESPACE_END
