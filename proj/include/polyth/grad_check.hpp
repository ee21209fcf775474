#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "polyth/tensor.hpp"

namespace polyth {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;  // index into the checked inputs
  std::size_t worst_index = 0;  // flat element index within that input
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;  // number of elements compared
};

struct GradCheckOptions {
  double step = 1e-5;
  // Denominator floor so gradients that are zero up to rounding do not blow up the ratio.
  double floor = 1e-6;
  // 0 checks every element; otherwise a seeded random subset of this size per input.
  std::size_t max_per_input = 0;
  std::uint64_t seed = 0x5eed;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

using ScalarFn = std::function<double(const std::vector<Tensor>&)>;

/// Compares `analytic[i]` with central differences of `objective` w.r.t. `inputs[i]`.
/// Inputs whose analytic gradient is an empty tensor are skipped.
GradCheckReport grad_check_scalar(const ScalarFn& objective, const std::vector<Tensor>& analytic,
                                  std::vector<Tensor> inputs, const GradCheckOptions& opts = {});

using ForwardFn = std::function<Tensor(const std::vector<Tensor>&)>;
using BackwardFn = std::function<std::vector<Tensor>(const std::vector<Tensor>& inputs, const Tensor& dout)>;

/// Checks a forward/backward pair through the scalar objective sum(forward(x) * R)
/// with a fixed random projection R, so backward receives dout = R.
GradCheckReport grad_check(const ForwardFn& forward, const BackwardFn& backward, std::vector<Tensor> inputs,
                           const GradCheckOptions& opts = {});

}  // namespace polyth
