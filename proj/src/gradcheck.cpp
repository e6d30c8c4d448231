#include "cclab/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace cclab {

GradReport grad_check(const std::string& op_name, const ScalarClosure& op_closure,
                      std::vector<Tensor<double>> inputs, double tolerance) {
  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
    for (double v : in.values()) {
      if (!std::isfinite(v)) {
        throw std::runtime_error("grad_check: non-finite input");
      }
    }
  }
  Tensor<double> out = op_closure(inputs);
  if (out.numel() != 1) {
    throw std::runtime_error("grad_check: closure for '" + op_name +
                             "' must return a scalar");
  }
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) {
    auto g = in.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradReport report;
  report.op_name = op_name;
  {
    NoGradGuard ng;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      double worst = 0.0;
      auto vals = inputs[i].values();
      for (std::size_t j = 0; j < vals.size(); ++j) {
        const double x = vals[j];
        const double h = 1e-3 * std::max(1.0, std::fabs(x));
        vals[j] = x + h;
        const double fp = op_closure(inputs).item();
        vals[j] = x - h;
        const double fm = op_closure(inputs).item();
        vals[j] = x;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = analytic[i][j];
        const double rel =
            std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
        worst = std::max(worst, rel);
      }
      report.per_input_errs.push_back(worst);
      report.max_rel_err = std::max(report.max_rel_err, worst);
    }
  }
  report.pass = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace cclab
