#include "polyth/metrics.hpp"

#include <fmt/format.h>

#include <stdexcept>

namespace polyth {

namespace {
void check_lengths(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) {
    throw std::invalid_argument("metrics: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(truth.size()) + " labels");
  }
  if (truth.empty()) throw std::invalid_argument("metrics: no samples");
  validate_labels(predicted);
  validate_labels(truth);
}

double trace_fraction(const Confusion& c) {
  std::size_t trace = 0, total = 0;
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    for (std::size_t p = 0; p < kNumClasses; ++p) total += c[t][p];
    trace += c[t][t];
  }
  return static_cast<double>(trace) / static_cast<double>(total);
}
}  // namespace

Confusion confusion_matrix(std::span<const int> predicted, std::span<const int> truth) {
  check_lengths(predicted, truth);
  Confusion c{};
  for (std::size_t i = 0; i < truth.size(); ++i) ++c[truth[i]][predicted[i]];
  return c;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  return trace_fraction(confusion_matrix(predicted, truth));
}

F1Scores f1_scores(const Confusion& confusion) {
  F1Scores out;
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    const std::size_t tp = confusion[k][k];
    std::size_t actual = 0, predicted = 0;
    for (std::size_t j = 0; j < kNumClasses; ++j) {
      actual += confusion[k][j];
      predicted += confusion[j][k];
    }
    if (actual == 0 && predicted == 0) continue;
    const double precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double recall = actual ? static_cast<double>(tp) / static_cast<double>(actual) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    out.per_class[k] = f1;
    sum += f1;
    ++counted;
  }
  out.macro = counted ? sum / static_cast<double>(counted) : 0.0;
  return out;
}

int decide(std::span<const double> probs, std::optional<double> threshold) {
  if (probs.size() != kNumClasses) {
    throw std::invalid_argument("decide: expected " + std::to_string(kNumClasses) + " probabilities, got " +
                                std::to_string(probs.size()));
  }
  if (threshold) {
    if (!(*threshold >= 0.0 && *threshold <= 1.0)) {
      throw std::invalid_argument("decide: threshold " + std::to_string(*threshold) + " outside [0,1]");
    }
    if (probs[kPolytheneClass] >= *threshold) return kPolytheneClass;
  }
  std::size_t best = 0;
  for (std::size_t k = 1; k < probs.size(); ++k) {
    if (probs[k] > probs[best]) best = k;
  }
  return static_cast<int>(best);
}

MetricsReport make_report(double total_loss, std::span<const int> predicted, std::span<const int> truth) {
  MetricsReport r;
  r.samples = truth.size();
  r.confusion = confusion_matrix(predicted, truth);
  r.accuracy = trace_fraction(r.confusion);
  r.mean_loss = total_loss / static_cast<double>(r.samples);
  const F1Scores f1 = f1_scores(r.confusion);
  r.per_class_f1 = f1.per_class;
  r.macro_f1 = f1.macro;
  return r;
}

std::string format_report(const MetricsReport& r) {
  std::string s;
  s += fmt::format("samples: {}\n", r.samples);
  s += fmt::format("mean_loss: {:.8f}\n", r.mean_loss);
  s += fmt::format("accuracy: {:.6f}\n", r.accuracy);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (r.per_class_f1[k]) {
      s += fmt::format("f1_class_{}: {:.6f}\n", k, *r.per_class_f1[k]);
    } else {
      s += fmt::format("f1_class_{}: n/a\n", k);
    }
  }
  s += fmt::format("macro_f1: {:.6f}\n", r.macro_f1);
  s += "confusion (rows=true, cols=predicted):\n";
  for (std::size_t t = 0; t < kNumClasses; ++t) {
    s += fmt::format("  {} {} {}\n", r.confusion[t][0], r.confusion[t][1], r.confusion[t][2]);
  }
  return s;
}

}  // namespace polyth
