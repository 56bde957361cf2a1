#include "bigcn/eval.h"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bigcn/dataio.h"
#include "bigcn/errors.h"

namespace bigcn {
namespace {

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

MetricsReport compute_metrics(std::span<const ClassLabel> predictions,
                              std::span<const ClassLabel> truths,
                              const std::vector<ClassLabel>& classes) {
  if (predictions.size() != truths.size()) {
    throw InputError("compute_metrics: " + std::to_string(predictions.size()) +
                     " predictions for " + std::to_string(truths.size()) +
                     " truths");
  }
  if (truths.empty()) throw InputError("compute_metrics: nothing to score");
  const std::size_t c = classes.size();
  MetricsReport r;
  r.classes = classes;
  r.total = truths.size();
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  for (std::size_t i = 0; i < truths.size(); ++i) {
    ++r.confusion[class_index(classes, truths[i])]
                 [class_index(classes, predictions[i])];
  }
  std::size_t correct = 0;
  for (std::size_t k = 0; k < c; ++k) correct += r.confusion[k][k];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.total);

  for (std::size_t k = 0; k < c; ++k) {
    std::size_t predicted = 0;
    std::size_t actual = 0;
    for (std::size_t j = 0; j < c; ++j) {
      predicted += r.confusion[j][k];
      actual += r.confusion[k][j];
    }
    ClassMetrics m;
    m.label = classes[k];
    m.support = actual;
    m.precision = ratio(r.confusion[k][k], predicted, m.precision_undefined);
    m.recall = ratio(r.confusion[k][k], actual, m.recall_undefined);
    const double denom = m.precision + m.recall;
    m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    r.per_class.push_back(m);
  }
  return r;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["accuracy"] = accuracy;
  j["total"] = total;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& m : per_class) {
    nlohmann::ordered_json entry;
    entry["precision"] = m.precision;
    entry["recall"] = m.recall;
    entry["f1"] = m.f1;
    entry["support"] = m.support;
    entry["precision_undefined"] = m.precision_undefined;
    entry["recall_undefined"] = m.recall_undefined;
    per[std::string(1, label_char(m.label))] = entry;
  }
  j["per_class"] = per;
  std::vector<std::string> labels;
  for (auto l : classes) labels.emplace_back(1, label_char(l));
  j["classes"] = labels;
  j["confusion"] = confusion;
  return j.dump(2);
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "accuracy %.4f over %zu events\n",
                accuracy, total);
  out << line;
  out << "class  precision  recall      f1  support\n";
  for (const auto& m : per_class) {
    std::snprintf(line, sizeof(line), "%-5c  %9.4f  %6.4f  %6.4f  %7zu%s\n",
                  label_char(m.label), m.precision, m.recall, m.f1,
                  m.support,
                  (m.precision_undefined || m.recall_undefined) ? "  *" : "");
    out << line;
  }
  out << "confusion (rows = truth, cols = prediction)\n      ";
  for (auto l : classes) out << "     " << label_char(l);
  out << '\n';
  for (std::size_t k = 0; k < classes.size(); ++k) {
    out << "  " << label_char(classes[k]) << "   ";
    for (std::size_t v : confusion[k]) {
      std::snprintf(line, sizeof(line), "%6zu", v);
      out << line;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<ClassLabel> predict_labels(std::span<const PropagationEvent> events,
                                       const ModelParams& params,
                                       const Vocabulary& vocab,
                                       const ModelConfig& config) {
  const auto classes = label_set(static_cast<int>(config.num_classes));
  std::vector<ClassLabel> out;
  out.reserve(events.size());
  for (const auto& event : events) {
    const DenseMatrix x = featurize_event(event, vocab);
    out.push_back(classes[argmax(predict_proba(event, x, params, config))]);
  }
  return out;
}

MetricsReport evaluate(std::span<const PropagationEvent> events,
                       const ModelParams& params, const Vocabulary& vocab,
                       const ModelConfig& config) {
  if (events.empty()) throw InputError("evaluate: no events");
  const auto predictions = predict_labels(events, params, vocab, config);
  std::vector<ClassLabel> truths;
  truths.reserve(events.size());
  for (const auto& e : events) truths.push_back(e.label);
  return compute_metrics(predictions, truths,
                         label_set(static_cast<int>(config.num_classes)));
}

std::vector<CurvePoint> early_detection_curve(
    std::span<const PropagationEvent> events, const ModelParams& params,
    const Vocabulary& vocab, const ModelConfig& config,
    std::span<const double> deadlines) {
  if (events.empty()) throw InputError("early_detection_curve: empty corpus");
  for (std::size_t i = 0; i < deadlines.size(); ++i) {
    if (!(deadlines[i] >= 0.0)) {
      throw InputError("early_detection_curve: deadlines must be >= 0");
    }
    if (i > 0 && deadlines[i] < deadlines[i - 1]) {
      throw InputError("early_detection_curve: deadlines must be ascending");
    }
  }
  std::vector<double> grid(deadlines.begin(), deadlines.end());
  grid.push_back(std::numeric_limits<double>::infinity());

  std::vector<CurvePoint> curve;
  curve.reserve(grid.size());
  std::vector<PropagationEvent> sliced(events.size());
  for (double deadline : grid) {
    for (std::size_t i = 0; i < events.size(); ++i) {
      sliced[i] = slice_by_deadline(events[i], deadline);
    }
    curve.push_back(
        {deadline, evaluate(sliced, params, vocab, config).accuracy});
  }
  return curve;
}

void write_curve_csv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "deadline_minutes,accuracy\n";
  for (const auto& p : curve) {
    if (p.deadline_minutes == std::numeric_limits<double>::infinity()) {
      out << "inf";
    } else {
      out << fixed(p.deadline_minutes, 2);
    }
    out << ',' << fixed(p.accuracy, 6) << '\n';
  }
}

std::string curve_table(std::span<const CurvePoint> curve) {
  std::ostringstream out;
  out << "deadline (min)  accuracy\n";
  char line[96];
  for (const auto& p : curve) {
    const std::string d =
        p.deadline_minutes == std::numeric_limits<double>::infinity()
            ? "inf"
            : fixed(p.deadline_minutes, 2);
    std::snprintf(line, sizeof(line), "%14s  %8.4f\n", d.c_str(), p.accuracy);
    out << line;
  }
  return out.str();
}

}  // namespace bigcn
