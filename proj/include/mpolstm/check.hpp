// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mpolstm {

struct CheckResult {
  std::string group;  // svd, mpo, gradients, cells, ratios, io
  std::string name;
  bool passed = false;
  std::string detail;
};

struct CheckOptions {
  /// Only groups or names containing this substring run; empty runs all.
  std::string filter;
  /// Multiplies every tolerance. Tiny values make the suite fail on purpose.
  double tol_scale = 1.0;
  std::uint64_t seed = 20240521;
};

std::vector<std::string> check_groups();

/// Runs the built-in invariant suite. Never throws for a failing check; an
/// exception inside a check is reported as a failure of that check.
std::vector<CheckResult> run_checks(const CheckOptions& options);

}  // namespace mpolstm
