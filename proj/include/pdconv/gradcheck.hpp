// Copyright 2026 The pdconv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central-difference gradient checking and the registered op suite.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pdconv/layers.hpp"

namespace pdconv {

inline constexpr double kGradStep = 1e-5;
inline constexpr double kGradTolerance = 1e-4;

struct GradEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::int64_t checked = 0;  // coordinates compared
  std::int64_t size = 0;     // coordinates in the tensor
};

struct GradReport {
  std::string op;
  double step = kGradStep;
  DType dtype = DType::f64;
  std::vector<GradEntry> entries;

  double max_error() const;
  bool passed(double tolerance = kGradTolerance) const;
  /// One line per entry: "<op> <name> max_rel_err=<e> checked=<k>/<n> step=<h> dtype=<d> PASS|FAIL".
  std::vector<std::string> lines(double tolerance = kGradTolerance) const;
};

/// |a - n| / max(|a|, |n|, 1e-8).
double grad_rel_error(double analytic, double numeric);

/// Op name of the first node (inputs before outputs) holding a non-finite
/// value, or empty if all values are finite.
std::string find_nonfinite(const Var<double>& root);

/// Compares backward() against (f(x+h) - f(x-h)) / 2h for every listed
/// parameter. The loss callback must rebuild the graph from the current parameter values
/// and return a scalar. With fraction < 1 a seeded sample of coordinates is
/// checked per tensor (at least one; one-element tensors always). Throws
/// NumericError naming the op if any value is non-finite.
///
/// If `reference` is given, the central differences are taken on it instead
/// of on `loss`: it must compute the same function of the current parameter
/// values in extended precision, which keeps rounding in the difference
/// quotient well below the tolerance for near-zero gradients.
GradReport gradcheck(const std::string& op, const std::function<Var<double>()>& loss,
                     const ParamList<double>& params, double step = kGradStep, double fraction = 1.0,
                     std::uint64_t seed = 0, const std::function<long double()>& reference = {});

/// A registered check: builds random inputs and parameters from the seed.
struct GradCase {
  std::string name;
  std::string description;
  std::function<GradReport(std::uint64_t seed)> run;
};

/// Every primitive op and the PDC / CLK / CPDC / ECF / network composites.
const std::vector<GradCase>& gradcheck_suite();
const GradCase* find_grad_case(const std::string& name);

}  // namespace pdconv
