#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "notasign/tensor.hpp"

namespace notasign {

// Adam with bias correction. Moment buffers are laid out to match the
// parameter list handed to create(); adam_step updates params in place.
struct AdamState {
  int64_t step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  static AdamState create(std::span<const Tensor> params, double learning_rate = 1e-3,
                          double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);
};

void adam_step(std::span<Tensor> params, AdamState& state);

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t worst_param = 0;
  int64_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  bool pass = true;
};

// Compares analytic gradients of the scalar f() against central differences
// (f(θ+h) − f(θ−h)) / 2h, element by element. f must be deterministic. The
// checker is the ground truth for every gradient test in the project and
// stays independent of any particular op's backward implementation.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  double h, double tol);

}  // namespace notasign
