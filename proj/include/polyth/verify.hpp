#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace polyth {

struct VerifyCheck {
  std::string name;
  double value = 0.0;      // measured error
  double tolerance = 0.0;  // pass iff value < tolerance (or == 0 for bitwise checks)
  bool passed = false;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 20240601;
  /// Test hook: scales the analytic gradient of the named check by 1.01.
  std::string perturb;
};

/// Gradient checks for every layer and the fused loss, the whole-model
/// gradient on a toy config, the Adam reference comparison and the loss
/// identities.
std::vector<VerifyCheck> run_verification(const VerifyOptions& opts = {});

std::string format_verify_table(const std::vector<VerifyCheck>& checks);

/// Names accepted by VerifyOptions::perturb.
std::vector<std::string> verify_check_names();

}  // namespace polyth
