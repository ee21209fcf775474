#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polyth/tensor.hpp"

namespace polyth {

inline constexpr std::size_t kNumClasses = 3;
inline constexpr int kPolytheneClass = 2;
/// Probabilities are clamped to [kProbClamp, 1] before taking logs.
inline constexpr double kProbClamp = 1e-12;

/// Extra weight on the polythene term of the cross-entropy.
struct LossWeighting {
  double lambda = 1.25;
  int polythene_class = kPolytheneClass;

  /// Throws for lambda <= 0; returns a warning message when lambda > 10.
  std::optional<std::string> validate() const;
};

void validate_labels(std::span<const int> labels);

Tensor one_hot(std::span<const int> labels, std::size_t num_classes = kNumClasses);

/// Categorical cross-entropy summed over the batch: -sum_j sum_i y_ji log(yhat_ji).
double cce_loss(const Tensor& y, const Tensor& yhat);

/// -sum_j [ sum_{i != polythene} y_ji log(yhat_ji) + lambda * y_j2 log(yhat_j2) ]
double weighted_cce_loss(const Tensor& y, const Tensor& yhat, const LossWeighting& w);

struct LossAndGrad {
  double loss = 0.0;  // weighted_cce_loss(y, softmax(logits), w), summed over the batch
  Tensor dlogits;
};

/// Fused softmax + weighted cross-entropy. Row j of dlogits is
/// w_c * ((softmax(row) - y_row) * grad_scale) for true class c, where w_c is
/// lambda for the polythene class and 1 otherwise. `grad_scale` lets the
/// trainer fold in the 1/batch mean.
LossAndGrad softmax_loss_grad(const Tensor& y, const Tensor& logits, const LossWeighting& w,
                              double grad_scale = 1.0);

}  // namespace polyth
