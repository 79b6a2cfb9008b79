#pragma once

// Finite-difference gradient verification. Runs the graph builder in double
// precision ("shadow mode"), compares analytic gradients against central
// differences, and reports the max relative error. Coordinates near a kink
// (relu corner, maxpool tie) are excluded rather than failed: the function is
// not differentiable there, so no analytic value can be right. Two filters
// catch them: grossly disagreeing one-sided slopes, and a step-halved central
// difference that fails to reproduce the full-step estimate — a kink inside
// the stencil shifts the halved estimate by O(1), a smooth coordinate by
// O(h^2).

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stackgrasp/tensor.hpp"

namespace stackgrasp {

struct GradCheckReport {
  bool pass = true;
  double max_rel_err = 0.0;
  int checked = 0;
  int excluded = 0;
  std::vector<std::string> failures;
  std::string worst;

  std::string summary() const {
    return std::string(pass ? "pass" : "FAIL") + " max_rel_err=" +
           std::to_string(max_rel_err) + " checked=" + std::to_string(checked) +
           " excluded=" + std::to_string(excluded);
  }
};

// build: callable(const std::vector<Tensor<double>>&) -> scalar Tensor<double>.
// Inputs are leaf tensors; their data is perturbed in place between rebuilds.
// stride > 1 checks every stride-th coordinate (for large parameter sets).
inline GradCheckReport grad_check(
    const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& build,
    std::vector<Tensor<double>>& inputs, double tol, double h = 1e-3,
    size_t stride = 1) {
  GradCheckReport rep;

  for (auto& in : inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  Tensor<double> loss = build(inputs);
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) analytic.push_back(in.grad());

  // forward-only evaluations reuse the same leaves without grad
  for (auto& in : inputs) in.set_requires_grad(false);
  auto eval = [&]() { return build(inputs).item(); };

  const double kink_gap = 0.05;
  for (size_t t = 0; t < inputs.size(); ++t) {
    double* data = inputs[t].data();
    size_t n = inputs[t].numel();
    for (size_t i = 0; i < n; i += stride) {
      double keep = data[i];
      data[i] = keep + h;
      double fp = eval();
      data[i] = keep - h;
      double fm = eval();
      data[i] = keep;
      double f0 = eval();

      double fwd = (fp - f0) / h;
      double bwd = (f0 - fm) / h;
      if (std::abs(fwd - bwd) / std::max(1.0, std::abs(fwd) + std::abs(bwd)) > kink_gap) {
        ++rep.excluded;
        continue;
      }
      double numeric = (fp - fm) / (2.0 * h);

      data[i] = keep + 0.5 * h;
      double fp2 = eval();
      data[i] = keep - 0.5 * h;
      double fm2 = eval();
      data[i] = keep;
      double numeric2 = (fp2 - fm2) / h;
      if (std::abs(numeric - numeric2) /
              std::max(1.0, std::abs(numeric) + std::abs(numeric2)) >
          0.5 * tol) {
        ++rep.excluded;
        continue;
      }
      double a = analytic[t][i];
      double rel = std::abs(a - numeric) / std::max(1.0, std::abs(a) + std::abs(numeric));
      ++rep.checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = "input " + std::to_string(t) + " [" + std::to_string(i) +
                    "]: analytic " + std::to_string(a) + " numeric " +
                    std::to_string(numeric);
      }
      if (rel > tol) {
        rep.pass = false;
        if (rep.failures.size() < 16)
          rep.failures.push_back("input " + std::to_string(t) + " [" + std::to_string(i) +
                                 "]: analytic " + std::to_string(a) + " numeric " +
                                 std::to_string(numeric) + " rel " + std::to_string(rel));
      }
    }
  }

  for (auto& in : inputs) in.set_requires_grad(true);
  return rep;
}

}  // namespace stackgrasp
