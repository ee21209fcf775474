#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>

#include "polyth/loss.hpp"

namespace polyth {

/// Rows are true classes, columns predicted classes.
using Confusion = std::array<std::array<std::size_t, kNumClasses>, kNumClasses>;

double accuracy(std::span<const int> predicted, std::span<const int> truth);
Confusion confusion_matrix(std::span<const int> predicted, std::span<const int> truth);

struct F1Scores {
  // Absent for a class with no true and no predicted samples.
  std::array<std::optional<double>, kNumClasses> per_class;
  double macro = 0.0;
};

F1Scores f1_scores(const Confusion& confusion);

/// Class 2 when a threshold is given and probs[2] >= threshold, else the
/// first argmax.
int decide(std::span<const double> probs, std::optional<double> threshold = std::nullopt);

struct MetricsReport {
  std::size_t samples = 0;
  double mean_loss = 0.0;
  double accuracy = 0.0;
  Confusion confusion{};
  std::array<std::optional<double>, kNumClasses> per_class_f1;
  double macro_f1 = 0.0;
};

/// Builds a report from the summed loss and the predicted/true labels.
MetricsReport make_report(double total_loss, std::span<const int> predicted, std::span<const int> truth);

/// Human-readable, deterministic rendering of a report.
std::string format_report(const MetricsReport& report);

}  // namespace polyth
