#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "metricforge/types.hpp"

namespace metricforge {

using MatrixList = std::vector<Matrix>;
using ValueFn = std::function<double(const MatrixList&)>;

// Central finite differences of a scalar function of one or more matrices:
// (f(x + h e) - f(x - h e)) / (2h) per coordinate. Throws NonFiniteLossError
// if any evaluation is NaN/Inf.
MatrixList finite_diff(const ValueFn& fn, const MatrixList& inputs,
                       double h = 1e-6);

// Outcome of checking one loss at one random configuration.
struct GradReport {
  std::string loss_name;
  std::uint64_t seed = 0;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::string worst_input;  // name of the perturbed matrix
  int worst_row = -1;
  int worst_col = -1;
  bool passed = false;
  double h = 1e-6;
  std::string note;
};

// One randomly generated check: the perturbable inputs, a value function over
// them, and the analytic gradients at the base point. kink_distance is the
// distance of the nearest hinge argument to its kink (infinity for smooth
// losses); configurations within 10h of a kink are excluded with a note.
struct CheckCase {
  std::vector<std::string> input_names;
  MatrixList inputs;
  ValueFn value;
  MatrixList analytic;
  double kink_distance = std::numeric_limits<double>::infinity();
};

using CaseGenerator = std::function<CheckCase(std::uint64_t seed)>;

GradReport check_case(const std::string& name, std::uint64_t seed,
                      const CheckCase& c, double tolerance, double h = 1e-6);

// Named generators for every loss in the library.
class LossRegistry {
 public:
  void add(std::string name, CaseGenerator gen) {
    entries_.emplace_back(std::move(name), std::move(gen));
  }
  const std::vector<std::pair<std::string, CaseGenerator>>& entries() const {
    return entries_;
  }

 private:
  std::vector<std::pair<std::string, CaseGenerator>> entries_;
};

// Registry covering every loss variant shipped by the library.
LossRegistry default_loss_registry();

// One report per (loss, seed). Failures are reported, never thrown.
std::vector<GradReport> check_all(const LossRegistry& registry,
                                  const std::vector<std::uint64_t>& seeds,
                                  double tolerance, double h = 1e-6);

}  // namespace metricforge
