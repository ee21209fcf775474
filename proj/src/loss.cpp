#include "polyth/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "polyth/ops.hpp"

namespace polyth {

std::optional<std::string> LossWeighting::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw std::invalid_argument("loss: lambda must be positive and finite, got " + std::to_string(lambda));
  }
  if (polythene_class < 0 || polythene_class >= static_cast<int>(kNumClasses)) {
    throw std::invalid_argument("loss: polythene class index out of range");
  }
  if (lambda > 10.0) {
    return "lambda = " + std::to_string(lambda) + " is very large; other classes will be neglected";
  }
  return std::nullopt;
}

void validate_labels(std::span<const int> labels) {
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0 || labels[j] >= static_cast<int>(kNumClasses)) {
      throw std::invalid_argument("label " + std::to_string(labels[j]) + " at position " + std::to_string(j) +
                                  " is not in {0,1,2}");
    }
  }
}

Tensor one_hot(std::span<const int> labels, std::size_t num_classes) {
  if (labels.empty()) throw std::invalid_argument("one_hot: empty label batch");
  Tensor y({labels.size(), num_classes});
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] < 0 || static_cast<std::size_t>(labels[j]) >= num_classes) {
      throw std::invalid_argument("one_hot: label " + std::to_string(labels[j]) + " out of range");
    }
    y.at(j, static_cast<std::size_t>(labels[j])) = 1.0;
  }
  return y;
}

namespace {

void check_pair(const char* op, const Tensor& y, const Tensor& yhat) {
  if (y.rank() != 2 || yhat.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank-2 tensors, got " + shape_str(y.shape()) +
                                " and " + shape_str(yhat.shape()));
  }
  if (y.shape() != yhat.shape()) {
    throw std::invalid_argument(std::string(op) + ": label shape " + shape_str(y.shape()) +
                                " does not match prediction shape " + shape_str(yhat.shape()));
  }
}

double clamped_log(double p) { return std::log(std::clamp(p, kProbClamp, 1.0)); }

// Shared accumulation so that class weights of exactly 1 reproduce the
// unweighted sum bit for bit.
double weighted_sum(const Tensor& y, const Tensor& yhat, std::span<const double> class_weight) {
  const std::size_t m = y.dim(0), n = y.dim(1);
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    double row = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double yv = y.at(j, i);
      if (yv == 0.0) continue;
      row += class_weight[i] * (yv * clamped_log(yhat.at(j, i)));
    }
    total += row;
  }
  return -total;
}

}  // namespace

double cce_loss(const Tensor& y, const Tensor& yhat) {
  check_pair("cce_loss", y, yhat);
  const std::vector<double> ones(y.dim(1), 1.0);
  return weighted_sum(y, yhat, ones);
}

double weighted_cce_loss(const Tensor& y, const Tensor& yhat, const LossWeighting& w) {
  check_pair("weighted_cce_loss", y, yhat);
  w.validate();
  std::vector<double> weights(y.dim(1), 1.0);
  if (static_cast<std::size_t>(w.polythene_class) < weights.size()) weights[w.polythene_class] = w.lambda;
  return weighted_sum(y, yhat, weights);
}

LossAndGrad softmax_loss_grad(const Tensor& y, const Tensor& logits, const LossWeighting& w, double grad_scale) {
  check_pair("softmax_loss_grad", y, logits);
  const std::size_t m = y.dim(0), n = y.dim(1);
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t ones = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = y.at(j, i);
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = 2;
        break;
      }
    }
    if (ones != 1) throw std::invalid_argument("softmax_loss_grad: label row " + std::to_string(j) + " is not one-hot");
  }

  const Tensor probs = softmax(logits);
  LossAndGrad out{weighted_cce_loss(y, probs, w), Tensor(logits.shape())};
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t cls = 0;
    while (y.at(j, cls) != 1.0) ++cls;
    const double wc = static_cast<int>(cls) == w.polythene_class ? w.lambda : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      out.dlogits.at(j, i) = wc * ((probs.at(j, i) - y.at(j, i)) * grad_scale);
    }
  }
  return out;
}

}  // namespace polyth
