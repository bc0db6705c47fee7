#pragma once

// Oracle verification suites behind `srtrl verify`.

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "srtrl/trl.hpp"

namespace srtrl {

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  std::string detail;
};

using BackwardFn =
    std::function<Gradients<double>(const TrlModelXd&, const TensorXd&, const MatrixXd&, const SketchDraw*)>;

struct VerifyOptions {
  /// Empty runs everything; otherwise a suite name or a substring of a check name.
  std::string filter;
  /// Gradient routine under test; defaults to srtrl::backward.
  BackwardFn backward;
  std::uint64_t seed = 1234;
};

/// Suites: algebra, sketch, srr, enum, grad.
std::vector<CheckResult> run_verification(const VerifyOptions& options = {});

void print_report(std::ostream& os, const std::vector<CheckResult>& results);

/// Relative finite-difference tolerance and step used by the gradient suite.
inline constexpr double kGradRelTol = 1e-5;
inline constexpr double kGradStep = 1e-5;
/// Denominator floor for entrywise relative error, so entries that are zero
/// up to rounding are compared absolutely.
inline constexpr double kGradFloor = 1e-3;

}  // namespace srtrl
