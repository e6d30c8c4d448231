#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cclab/tensor.hpp"

namespace cclab {

struct GradReport {
  std::string op_name;
  double max_rel_err = 0.0;
  std::vector<double> per_input_errs;
  bool pass = false;
};

// Compares reverse-mode gradients against central finite differences in
// double precision. The closure must be a pure scalar function of its inputs;
// step size is 1e-3 * max(1, |x|) per coordinate.
using ScalarClosure =
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

GradReport grad_check(const std::string& op_name, const ScalarClosure& op_closure,
                      std::vector<Tensor<double>> inputs, double tolerance);

}  // namespace cclab
