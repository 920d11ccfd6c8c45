#include "notasign/kan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>

#include "notasign/error.hpp"

namespace notasign {

namespace {

void validate_config(const KanBasisConfig& cfg) {
  if (!(cfg.grid_min < cfg.grid_max) || cfg.num_grid < 2 || !(cfg.denominator > 0.0) ||
      cfg.exponent < 1) {
    throw std::invalid_argument("KanBasisConfig: requires grid_min < grid_max, num_grid >= 2, "
                                "denominator > 0, exponent >= 1");
  }
}

double int_pow(double v, int e) {
  double r = 1.0;
  for (int i = 0; i < e; ++i) r *= v;
  return r;
}

}  // namespace

std::vector<double> make_grid(const KanBasisConfig& cfg) {
  validate_config(cfg);
  std::vector<double> grid(static_cast<size_t>(cfg.num_grid));
  const double step = (cfg.grid_max - cfg.grid_min) / static_cast<double>(cfg.num_grid - 1);
  for (int i = 0; i < cfg.num_grid; ++i) grid[static_cast<size_t>(i)] = cfg.grid_min + step * i;
  return grid;
}

std::vector<double> basis_eval(double x, const KanBasisConfig& cfg) {
  const std::vector<double> grid = make_grid(cfg);
  std::vector<double> out(grid.size());
  for (size_t i = 0; i < grid.size(); ++i) {
    const double t = std::tanh((x - grid[i]) / cfg.denominator);
    out[i] = 1.0 - int_pow(t, cfg.exponent);
  }
  return out;
}

Tensor kan_basis_features(const Tensor& x, const std::vector<double>& grid,
                          const KanBasisConfig& cfg) {
  if (x.ndim() != 2) {
    throw std::invalid_argument("kan_basis_features: input must be 2-D, got " +
                                shape_str(x.shape()));
  }
  const int64_t rows = x.dim(0), n_in = x.dim(1);
  const int64_t g = static_cast<int64_t>(grid.size());
  const double inv_denom = 1.0 / cfg.denominator;
  const int e = cfg.exponent;

  std::vector<double> value(static_cast<size_t>(rows * n_in * g));
  auto tanhs = std::make_shared<std::vector<double>>(static_cast<size_t>(rows * n_in * g));
  const double* xv = x.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    for (int64_t p = 0; p < n_in; ++p) {
      const double xp = xv[r * n_in + p];
      double* brow = value.data() + (r * n_in + p) * g;
      double* trow = tanhs->data() + (r * n_in + p) * g;
      for (int64_t i = 0; i < g; ++i) {
        const double t = std::tanh((xp - grid[static_cast<size_t>(i)]) * inv_denom);
        trow[i] = t;
        brow[i] = 1.0 - int_pow(t, e);
      }
    }
  }

  auto px = x.node();
  std::array<Tensor, 1> parents{x};
  return custom_op(
      {rows, n_in * g}, std::move(value), parents,
      [px, tanhs, rows, n_in, g, e, inv_denom](detail::TensorNode& o) {
        double* gx = px->grad.data();
        const double* go = o.grad.data();
        for (int64_t r = 0; r < rows; ++r) {
          for (int64_t p = 0; p < n_in; ++p) {
            const double* trow = tanhs->data() + (r * n_in + p) * g;
            const double* grow = go + (r * n_in + p) * g;
            double acc = 0.0;
            for (int64_t i = 0; i < g; ++i) {
              const double t = trow[i];
              // d/dx [1 - t^e] = -e * t^(e-1) * (1 - t^2) / denom
              acc += grow[i] * (-static_cast<double>(e) * int_pow(t, e - 1) * (1.0 - t * t) *
                                inv_denom);
            }
            gx[r * n_in + p] += acc;
          }
        }
      });
}

KanLayerParams make_kan_layer(int n_in, int n_out, const KanBasisConfig& cfg, Rng& rng) {
  validate_config(cfg);
  KanLayerParams p;
  p.n_in = n_in;
  p.n_out = n_out;
  p.grid = make_grid(cfg);
  const int64_t g = cfg.num_grid;
  // Fan-in scaled init keeps activations O(1); the configured scale matches
  // the reference basis configuration.
  const double spline_std = cfg.spline_init_scale / std::sqrt(static_cast<double>(n_in) * g);
  std::vector<double> sw(static_cast<size_t>(n_in * g * n_out));
  for (double& w : sw) w = rng.normal(0.0, spline_std);
  p.spline_weights = Tensor::from_data({static_cast<int64_t>(n_in) * g, n_out}, std::move(sw), true);
  if (cfg.use_base_branch) {
    const double base_std = 1.0 / std::sqrt(static_cast<double>(n_in));
    std::vector<double> bw(static_cast<size_t>(n_in * n_out));
    for (double& w : bw) w = rng.normal(0.0, base_std);
    p.base_weights = Tensor::from_data({n_in, n_out}, std::move(bw), true);
  }
  return p;
}

int64_t kan_layer_param_count(const KanLayerParams& p) {
  int64_t count = p.spline_weights.numel();
  if (p.base_weights.defined()) count += p.base_weights.numel();
  return count;
}

Tensor kan_layer_forward(const Tensor& x, const KanLayerParams& p, const KanBasisConfig& cfg) {
  if (x.ndim() != 2 || x.dim(1) != p.n_in) {
    throw std::invalid_argument("kan_layer_forward: expected (rows, " + std::to_string(p.n_in) +
                                "), got " + shape_str(x.shape()));
  }
  Tensor features = kan_basis_features(x, p.grid, cfg);
  Tensor out = matmul(features, p.spline_weights);
  if (p.base_weights.defined()) out = add(out, matmul(silu(x), p.base_weights));
  return out;
}

KanFfnParams make_kan_ffn(int d, int h, const KanBasisConfig& cfg, double dropout_rate, Rng& rng) {
  KanFfnParams p;
  p.layer1 = make_kan_layer(d, h, cfg, rng);
  p.layer2 = make_kan_layer(h, d, cfg, rng);
  p.dropout_rate = dropout_rate;
  return p;
}

int64_t kan_ffn_param_count(const KanFfnParams& p) {
  return kan_layer_param_count(p.layer1) + kan_layer_param_count(p.layer2);
}

Tensor kan_ffn_forward(const Tensor& x, const KanFfnParams& p, const KanBasisConfig& cfg,
                       bool training, Rng& rng) {
  Tensor hidden = kan_layer_forward(x, p.layer1, cfg);
  Tensor out = kan_layer_forward(hidden, p.layer2, cfg);
  return dropout(out, p.dropout_rate, training, rng);
}

std::vector<double> input_importance(const KanLayerParams& p) {
  const int64_t g = static_cast<int64_t>(p.grid.size());
  const int64_t n_out = p.n_out;
  std::vector<double> importance(static_cast<size_t>(p.n_in), 0.0);
  const double* w = p.spline_weights.data().data();
  for (int64_t in = 0; in < p.n_in; ++in) {
    double sq = 0.0;
    for (int64_t i = 0; i < g; ++i) {
      const double* row = w + (in * g + i) * n_out;
      for (int64_t q = 0; q < n_out; ++q) sq += row[q] * row[q];
    }
    importance[static_cast<size_t>(in)] = std::sqrt(sq);
  }
  return importance;
}

std::vector<double> response_curve(const KanFfnParams& p, const KanBasisConfig& cfg,
                                   int layer_index, int input_dim,
                                   const std::vector<double>& xs) {
  if (layer_index != 0 && layer_index != 1) {
    throw std::invalid_argument("response_curve: layer_index must be 0 or 1, got " +
                                std::to_string(layer_index));
  }
  const KanLayerParams& layer = layer_index == 0 ? p.layer1 : p.layer2;
  if (input_dim < 0 || input_dim >= layer.n_in) {
    throw std::invalid_argument("response_curve: input_dim " + std::to_string(input_dim) +
                                " out of range for n_in " + std::to_string(layer.n_in));
  }
  // Representative output: the channel most influenced by the probed input.
  const int64_t g = static_cast<int64_t>(layer.grid.size());
  const double* w = layer.spline_weights.data().data();
  int best_q = 0;
  double best_norm = -1.0;
  for (int64_t q = 0; q < layer.n_out; ++q) {
    double sq = 0.0;
    for (int64_t i = 0; i < g; ++i) {
      const double v = w[(static_cast<int64_t>(input_dim) * g + i) * layer.n_out + q];
      sq += v * v;
    }
    if (sq > best_norm) {
      best_norm = sq;
      best_q = static_cast<int>(q);
    }
  }

  std::vector<double> ys;
  ys.reserve(xs.size());
  std::vector<double> row(static_cast<size_t>(layer.n_in), 0.0);
  for (double x : xs) {
    row[static_cast<size_t>(input_dim)] = x;
    Tensor input = Tensor::from_data({1, layer.n_in}, row);
    Tensor out = kan_layer_forward(input, layer, cfg);
    ys.push_back(out.data()[static_cast<size_t>(best_q)]);
  }
  return ys;
}

}  // namespace notasign
