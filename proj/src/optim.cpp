#include "notasign/optim.hpp"

#include <cmath>
#include <string>

#include "notasign/error.hpp"

namespace notasign {

AdamState AdamState::create(std::span<const Tensor> params, double learning_rate, double beta1,
                            double beta2, double epsilon) {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) || !(epsilon > 0.0)) {
    throw std::invalid_argument("AdamState: betas must lie in (0, 1) and epsilon must be > 0");
  }
  AdamState s;
  s.learning_rate = learning_rate;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.epsilon = epsilon;
  s.first_moment.reserve(params.size());
  s.second_moment.reserve(params.size());
  for (const Tensor& p : params) {
    s.first_moment.emplace_back(static_cast<size_t>(p.numel()), 0.0);
    s.second_moment.emplace_back(static_cast<size_t>(p.numel()), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (params.size() != state.first_moment.size()) {
    throw std::invalid_argument("adam_step: state tracks " +
                                std::to_string(state.first_moment.size()) + " params, got " +
                                std::to_string(params.size()));
  }
  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    if (!p.has_grad()) {
      throw NumericError("adam_step: parameter " + std::to_string(i) + " has no gradient");
    }
    if (state.first_moment[i].size() != static_cast<size_t>(p.numel())) {
      throw std::invalid_argument("adam_step: moment buffer " + std::to_string(i) +
                                  " does not match parameter shape " + shape_str(p.shape()));
    }
    std::span<const double> g = p.grad();
    std::span<double> theta = p.mutable_data();
    double* m = state.first_moment[i].data();
    double* v = state.second_moment[i].data();
    for (size_t j = 0; j < theta.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      theta[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, std::span<Tensor> params,
                                  double h, double tol) {
  if (!(h > 0.0 && h <= 1e-2)) {
    throw std::invalid_argument("finite_diff_check: h must lie in (0, 1e-2], got " +
                                std::to_string(h));
  }
  for (Tensor& p : params) p.clear_grad();
  Tensor loss = f();
  if (!std::isfinite(loss.item())) {
    throw NumericError("finite_diff_check: loss is non-finite at the base point");
  }
  backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (Tensor& p : params) {
    p.ensure_zero_grad();
    analytic.emplace_back(p.grad().begin(), p.grad().end());
  }

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    std::span<double> theta = params[pi].mutable_data();
    for (size_t j = 0; j < theta.size(); ++j) {
      const double saved = theta[j];
      theta[j] = saved + h;
      const double f_plus = f().item();
      theta[j] = saved - h;
      const double f_minus = f().item();
      theta[j] = saved;
      if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
        throw NumericError("finite_diff_check: non-finite evaluation at parameter " +
                           std::to_string(pi) + " index " + std::to_string(j));
      }
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = analytic[pi][j];
      // The denominator floor absorbs central-difference noise (~eps/h) on
      // near-zero gradients; anything above it is compared relatively.
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = pi;
        report.worst_index = static_cast<int64_t>(j);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace notasign
