#include "segforge/metrics.hpp"

#include <cstdio>

#include "segforge/error.hpp"

SEGFORGE_NAMESPACE_BEGIN

namespace {

double ratio(std::uint64_t num, std::uint64_t den, bool other_side_empty) {
  if (den == 0) return other_side_empty ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionCounts confusion(std::span<const Real> pred, std::span<const Real> target, double threshold) {
  if (pred.size() != target.size()) throw ContractError("confusion: prediction and target sizes differ");
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = static_cast<double>(pred[i]) >= threshold;
    const bool g = target[i] >= Real(0.5);
    if (p && g) {
      ++c.tp;
    } else if (p) {
      ++c.fp;
    } else if (g) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

PairMetrics metrics_from_counts(const ConfusionCounts& c) {
  PairMetrics m;
  m.counts = c;
  m.dice = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, true);
  m.iou_fg = ratio(c.tp, c.tp + c.fp + c.fn, true);
  m.iou_bg = ratio(c.tn, c.tn + c.fp + c.fn, true);
  m.recall = ratio(c.tp, c.tp + c.fn, c.fp == 0);
  m.precision = ratio(c.tp, c.tp + c.fp, c.fn == 0);
  return m;
}

PairMetrics evaluate_pair(const Tensor& pred, const Tensor& target, double threshold) {
  if (!(pred.shape() == target.shape())) {
    throw ContractError("evaluate_pair: shapes " + pred.shape().str() + " and " + target.shape().str() + " differ");
  }
  return metrics_from_counts(confusion(pred.data(), target.data(), threshold));
}

MetricReport aggregate(std::span<const PairMetrics> samples, double threshold) {
  if (samples.empty()) throw ContractError("aggregate: no samples");
  MetricReport r;
  for (const auto& s : samples) {
    r.dice += s.dice;
    r.miou += 0.5 * (s.iou_fg + s.iou_bg);
    r.recall += s.recall;
    r.precision += s.precision;
  }
  const double n = static_cast<double>(samples.size());
  r.dice /= n;
  r.miou /= n;
  r.recall /= n;
  r.precision /= n;
  r.n_samples = samples.size();
  r.threshold = threshold;
  return r;
}

std::string format_report_csv(const MetricReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%.6g,%.6g,%.6g,%.6g", report.dice, report.miou, report.recall, report.precision);
  return buf;
}

SEGFORGE_NAMESPACE_END
