#pragma once

#include <cstdint>
#include <vector>

#include "notasign/rng.hpp"
#include "notasign/tensor.hpp"

namespace notasign {

// Basis family: reflectional-switch bumps 1 - tanh((x - g_i) / denominator)^exponent
// centered at fixed, evenly spaced knots. Knots are non-learnable.
struct KanBasisConfig {
  double grid_min = -2.0;
  double grid_max = 2.0;
  int num_grid = 8;
  int exponent = 2;
  double denominator = 0.33;
  bool use_base_branch = true;
  double spline_init_scale = 0.667;
};

std::vector<double> make_grid(const KanBasisConfig& cfg);

// [b_1(x) ... b_G(x)] for a scalar input; total function.
std::vector<double> basis_eval(double x, const KanBasisConfig& cfg);

// One KAN layer: every edge (p -> q) carries a learnable univariate function
// given by a spline-weighted basis combination plus an optional SiLU base
// branch. Spline weights are stored as a (n_in * num_grid, n_out) matrix with
// row index p * num_grid + i so the token-wise forward is a single matmul
// over the basis features.
struct KanLayerParams {
  int n_in = 0;
  int n_out = 0;
  std::vector<double> grid;
  Tensor spline_weights;  // (n_in * num_grid, n_out)
  Tensor base_weights;    // (n_in, n_out); defined iff use_base_branch
};

KanLayerParams make_kan_layer(int n_in, int n_out, const KanBasisConfig& cfg, Rng& rng);

int64_t kan_layer_param_count(const KanLayerParams& p);

// Basis features of a (rows, n_in) input: (rows, n_in * num_grid).
Tensor kan_basis_features(const Tensor& x, const std::vector<double>& grid,
                          const KanBasisConfig& cfg);

// x: (rows, n_in) -> (rows, n_out); rows are independent tokens.
Tensor kan_layer_forward(const Tensor& x, const KanLayerParams& p, const KanBasisConfig& cfg);

// Token-wise FFN with width profile [d, h, d]: two KAN layers, dropout on the
// output during training only.
struct KanFfnParams {
  KanLayerParams layer1;  // d -> h
  KanLayerParams layer2;  // h -> d
  double dropout_rate = 0.1;
};

KanFfnParams make_kan_ffn(int d, int h, const KanBasisConfig& cfg, double dropout_rate, Rng& rng);

int64_t kan_ffn_param_count(const KanFfnParams& p);

Tensor kan_ffn_forward(const Tensor& x, const KanFfnParams& p, const KanBasisConfig& cfg,
                       bool training, Rng& rng);

// L2 norm of spline weights grouped by input channel (over output channels
// and grid coefficients).
std::vector<double> input_importance(const KanLayerParams& p);

// 1-D response of one layer of the FFN: the probed input dimension sweeps xs
// while every other dimension is held at zero; returns the value of the
// output channel with the largest spline-weight norm for that input.
std::vector<double> response_curve(const KanFfnParams& p, const KanBasisConfig& cfg,
                                   int layer_index, int input_dim,
                                   const std::vector<double>& xs);

}  // namespace notasign
