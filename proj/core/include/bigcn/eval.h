#ifndef BIGCN_EVAL_H_
#define BIGCN_EVAL_H_

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bigcn/features.h"
#include "bigcn/graph.h"
#include "bigcn/model.h"

namespace bigcn {

struct ClassMetrics {
  ClassLabel label = ClassLabel::F;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
  // Set when the metric's denominator was zero and 0 was reported instead.
  bool precision_undefined = false;
  bool recall_undefined = false;
};

struct MetricsReport {
  std::vector<ClassLabel> classes;
  double accuracy = 0.0;
  std::vector<ClassMetrics> per_class;
  // confusion[truth][prediction]
  std::vector<std::vector<std::size_t>> confusion;
  std::size_t total = 0;

  std::string to_json() const;
  std::string to_table() const;
};

MetricsReport compute_metrics(std::span<const ClassLabel> predictions,
                              std::span<const ClassLabel> truths,
                              const std::vector<ClassLabel>& classes);

/// Eval-mode predicted labels for each event.
std::vector<ClassLabel> predict_labels(std::span<const PropagationEvent> events,
                                       const ModelParams& params,
                                       const Vocabulary& vocab,
                                       const ModelConfig& config);

MetricsReport evaluate(std::span<const PropagationEvent> events,
                       const ModelParams& params, const Vocabulary& vocab,
                       const ModelConfig& config);

struct CurvePoint {
  double deadline_minutes = 0.0;  // +inf for the full-data sentinel
  double accuracy = 0.0;
};

/// Accuracy when only posts within each deadline are visible. Deadlines
/// must be ascending; an infinite deadline is always appended.
std::vector<CurvePoint> early_detection_curve(
    std::span<const PropagationEvent> events, const ModelParams& params,
    const Vocabulary& vocab, const ModelConfig& config,
    std::span<const double> deadlines);

/// `deadline_minutes,accuracy` with one row per point; the sentinel is
/// written as `inf`.
void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve);
std::string curve_table(std::span<const CurvePoint> curve);

}  // namespace bigcn

#endif  // BIGCN_EVAL_H_
