#include "metricforge/gradcheck.hpp"

#include <cmath>

namespace metricforge {

MatrixList finite_diff(const ValueFn& fn, const MatrixList& inputs, double h) {
  if (h <= 0.0) throw Error("finite_diff: h must be positive");
  MatrixList grads;
  grads.reserve(inputs.size());
  MatrixList work = inputs;
  for (std::size_t m = 0; m < inputs.size(); ++m) {
    Matrix g(inputs[m].rows(), inputs[m].cols());
    for (Eigen::Index r = 0; r < inputs[m].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[m].cols(); ++c) {
        const double base = inputs[m](r, c);
        work[m](r, c) = base + h;
        const double up = fn(work);
        work[m](r, c) = base - h;
        const double down = fn(work);
        work[m](r, c) = base;
        if (!std::isfinite(up) || !std::isfinite(down))
          throw NonFiniteLossError("finite_diff: non-finite loss value");
        g(r, c) = (up - down) / (2.0 * h);
      }
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

GradReport check_case(const std::string& name, std::uint64_t seed,
                      const CheckCase& c, double tolerance, double h) {
  GradReport report;
  report.loss_name = name;
  report.seed = seed;
  report.h = h;

  if (c.kink_distance <= 10.0 * h) {
    report.note = "hinge kink within 10h of evaluation point; coordinates excluded";
    report.passed = true;
    return report;
  }

  MatrixList numeric;
  try {
    numeric = finite_diff(c.value, c.inputs, h);
  } catch (const NonFiniteLossError& e) {
    report.note = e.what();
    report.passed = false;
    return report;
  }

  // Relative error with an absolute floor: coordinates where both the
  // analytic and numeric values sit below 1e-8 are treated as matching zeros.
  constexpr double kFloor = 1e-8;
  for (std::size_t m = 0; m < c.analytic.size(); ++m) {
    for (Eigen::Index r = 0; r < c.analytic[m].rows(); ++r) {
      for (Eigen::Index col = 0; col < c.analytic[m].cols(); ++col) {
        const double a = c.analytic[m](r, col);
        const double n = numeric[m](r, col);
        const double abs_err = std::abs(a - n);
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (std::abs(a) <= kFloor && std::abs(n) <= kFloor) continue;
        const double rel = abs_err / std::max({std::abs(a), std::abs(n), kFloor});
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_input =
              m < c.input_names.size() ? c.input_names[m] : std::to_string(m);
          report.worst_row = static_cast<int>(r);
          report.worst_col = static_cast<int>(col);
        }
      }
    }
  }
  report.passed = report.max_rel_error <= tolerance;
  return report;
}

std::vector<GradReport> check_all(const LossRegistry& registry,
                                  const std::vector<std::uint64_t>& seeds,
                                  double tolerance, double h) {
  std::vector<GradReport> reports;
  for (const auto& [name, gen] : registry.entries()) {
    for (const std::uint64_t seed : seeds) {
      reports.push_back(check_case(name, seed, gen(seed), tolerance, h));
    }
  }
  return reports;
}

}  // namespace metricforge
