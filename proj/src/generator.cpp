#include "notasign/generator.hpp"

#include <cmath>
#include <string>

#include "notasign/error.hpp"

namespace notasign {

RefinementSchedule build_schedule(int t_steps) {
  if (t_steps < 2) {
    throw std::invalid_argument("build_schedule: t_steps must be >= 2, got " +
                                std::to_string(t_steps));
  }
  RefinementSchedule s;
  s.t_steps = t_steps;
  const double log_base = std::log(static_cast<double>(t_steps));
  s.gamma.resize(static_cast<size_t>(t_steps) + 1);
  for (int t = 0; t <= t_steps; ++t) {
    s.gamma[static_cast<size_t>(t)] = std::log(static_cast<double>(t_steps - t + 1)) / log_base;
  }
  s.alpha.resize(static_cast<size_t>(t_steps));
  for (int t = 0; t < t_steps; ++t) {
    s.alpha[static_cast<size_t>(t)] = s.gamma[static_cast<size_t>(t)] - s.gamma[static_cast<size_t>(t) + 1];
  }
  return s;
}

GeneratorParams make_generator(const GeneratorDims& dims, const EncoderConfig& cfg,
                               const KanBasisConfig& basis, int max_frames, int t_steps,
                               double dropout_rate, Rng& rng) {
  GeneratorParams p;
  p.pose_projection = make_linear(dims.pose_dim(), dims.d_model, rng);
  std::vector<double> pos(static_cast<size_t>(max_frames) * dims.d_model);
  for (double& v : pos) v = rng.normal(0.0, 0.02);
  p.pose_position_embedding = Tensor::from_data({max_frames, dims.d_model}, std::move(pos), true);
  std::vector<double> step(static_cast<size_t>(t_steps) * dims.d_model);
  for (double& v : step) v = rng.normal(0.0, 0.02);
  p.step_embedding = Tensor::from_data({t_steps, dims.d_model}, std::move(step), true);
  p.step_fc1 = make_linear(dims.d_model, dims.d_model, rng);
  p.step_fc2 = make_linear(dims.d_model, dims.d_model, rng);
  p.blocks.reserve(static_cast<size_t>(cfg.n_layers_text_pose));
  for (int i = 0; i < cfg.n_layers_text_pose; ++i) {
    p.blocks.push_back(make_transformer_block(dims.d_model, cfg.n_heads, cfg.ffn_kind,
                                              cfg.mlp_hidden, cfg.kan_hidden, basis, dropout_rate,
                                              rng));
  }
  p.coarse_fc1 = make_linear(dims.d_model, dims.d_model, rng);
  p.coarse_fc2 = make_linear(dims.d_model, dims.coarse_dim(), rng);
  p.fine_fc1 = make_linear(dims.d_model + dims.coarse_dim(), dims.d_model, rng);
  p.fine_fc2 = make_linear(dims.d_model, dims.pose_dim(), rng);
  return p;
}

Tensor init_pose_sequence(std::span<const double> first_frame, int64_t t_frames) {
  if (t_frames < 1) {
    throw std::invalid_argument("init_pose_sequence: t_frames must be >= 1, got " +
                                std::to_string(t_frames));
  }
  const int64_t dim = static_cast<int64_t>(first_frame.size());
  std::vector<double> data(static_cast<size_t>(t_frames * dim));
  for (int64_t t = 0; t < t_frames; ++t) {
    std::copy(first_frame.begin(), first_frame.end(), data.begin() + t * dim);
  }
  return Tensor::from_data({t_frames, dim}, std::move(data));
}

Tensor embed_pose(const Tensor& pose_flat, const GeneratorParams& p) {
  if (pose_flat.ndim() != 2 || pose_flat.dim(1) != p.pose_projection.weight.dim(0)) {
    throw std::invalid_argument("embed_pose: expected (frames, " +
                                std::to_string(p.pose_projection.weight.dim(0)) + "), got " +
                                shape_str(pose_flat.shape()));
  }
  const int64_t frames = pose_flat.dim(0);
  if (frames > p.pose_position_embedding.dim(0)) {
    throw DataError("embed_pose: " + std::to_string(frames) +
                    " frames exceed the positional table of " +
                    std::to_string(p.pose_position_embedding.dim(0)));
  }
  Tensor projected = linear(pose_flat, p.pose_projection);
  Tensor positions = slice(p.pose_position_embedding, 0, 0, frames);
  return add(projected, positions);
}

Tensor encode_step(int t, int t_steps, const GeneratorParams& p) {
  if (t < 0 || t >= t_steps) {
    throw std::invalid_argument("encode_step: step " + std::to_string(t) + " outside [0, " +
                                std::to_string(t_steps) + ")");
  }
  Tensor embedded = slice(p.step_embedding, 0, t, 1);  // (1, d)
  return linear(silu(linear(embedded, p.step_fc1)), p.step_fc2);
}

Tensor fuse_and_encode(const Tensor& e_pose, const Tensor& e_text, const Tensor& e_step,
                       const std::vector<uint8_t>& text_pad_mask, const GeneratorParams& p,
                       const GeneratorDims& dims, const KanBasisConfig& basis, bool training,
                       Rng& rng) {
  if (e_pose.dim(1) != e_text.dim(1) || e_pose.dim(1) != e_step.dim(1)) {
    throw std::invalid_argument("fuse_and_encode: hidden dims differ: pose " +
                                shape_str(e_pose.shape()) + ", text " + shape_str(e_text.shape()) +
                                ", step " + shape_str(e_step.shape()));
  }
  if (static_cast<int64_t>(text_pad_mask.size()) != e_text.dim(0)) {
    throw std::invalid_argument("fuse_and_encode: text mask length does not match text length");
  }
  const int64_t t_frames = e_pose.dim(0);
  std::vector<Tensor> parts{e_pose, e_text, e_step};
  Tensor h = concat(parts, 0);
  std::vector<uint8_t> mask(static_cast<size_t>(h.dim(0)), 0);
  std::copy(text_pad_mask.begin(), text_pad_mask.end(), mask.begin() + t_frames);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    h = transformer_block_forward(h, mask, p.blocks[i], basis, dims.n_heads, training, rng,
                                  "text_pose." + std::to_string(i));
  }
  return slice(h, 0, 0, t_frames);
}

Tensor predict_coarse(const Tensor& e_text_pose, const GeneratorParams& p) {
  return linear(silu(linear(e_text_pose, p.coarse_fc1)), p.coarse_fc2);
}

Tensor predict_fine(const Tensor& e_text_pose, const Tensor& coarse_flat,
                    const GeneratorParams& p) {
  std::vector<Tensor> parts{e_text_pose, coarse_flat};
  Tensor fused = concat(parts, 1);
  return linear(silu(linear(fused, p.fine_fc1)), p.fine_fc2);
}

RefineResult refine(std::span<const double> first_frame, int64_t t_frames, const Tensor& e_text,
                    const std::vector<uint8_t>& text_pad_mask, const RefinementSchedule& schedule,
                    const GeneratorParams& p, const GeneratorDims& dims,
                    const KanBasisConfig& basis, const RefineOptions& options,
                    const std::vector<Tensor>* interp_targets, Rng* rng) {
  if (t_frames < 1) {
    throw std::invalid_argument("refine: t_frames must be >= 1, got " + std::to_string(t_frames));
  }
  const bool train = options.mode == RefineMode::kTrain;
  if (train) {
    if (!interp_targets || static_cast<int>(interp_targets->size()) != schedule.t_steps + 1) {
      throw std::invalid_argument("refine: train mode needs t_steps + 1 interpolated targets");
    }
    if (!rng) throw std::invalid_argument("refine: train mode needs an rng");
  }

  RefineResult result;
  result.steps.reserve(static_cast<size_t>(schedule.t_steps));
  Tensor current = init_pose_sequence(first_frame, t_frames);
  Rng dropout_rng(0);
  Rng& fwd_rng = rng ? *rng : dropout_rng;

  for (int t = schedule.t_steps - 1; t >= 0; --t) {
    Tensor e_pose = embed_pose(current, p);
    Tensor e_step = encode_step(t, schedule.t_steps, p);
    Tensor e_tp = fuse_and_encode(e_pose, e_text, e_step, text_pad_mask, p, dims, basis,
                                  options.training, fwd_rng);
    Tensor coarse = predict_coarse(e_tp, p);
    // Single-scale mode disconnects the coarse pathway from the output: the
    // fine head sees zeros in the coarse slot, so no gradient reaches the
    // coarse head through the fine path.
    Tensor fine_coarse_input =
        options.multiscale ? coarse : Tensor::zeros({t_frames, dims.coarse_dim()});
    Tensor q = predict_fine(e_tp, fine_coarse_input, p);
    const double alpha = schedule.alpha[static_cast<size_t>(t)];
    Tensor s_hat = add(scale(q, alpha), scale(current, 1.0 - alpha));

    for (double v : s_hat.data()) {
      if (!std::isfinite(v)) {
        throw NumericError("refine: non-finite values at step " + std::to_string(t));
      }
    }
    result.steps.push_back(RefineStepRecord{t, q, coarse, s_hat});

    Tensor next = s_hat;
    if (train && t > 0) {
      // Teacher forcing swaps the next step's input for the interpolated
      // target; noise lands after the swap.
      if (rng->uniform01() < options.p_tf) {
        next = (*interp_targets)[static_cast<size_t>(t)];
      }
      if (options.noise_eps > 0.0) {
        std::vector<double> noise(static_cast<size_t>(next.numel()));
        for (double& v : noise) v = options.noise_eps * rng->normal();
        next = add(next, Tensor::from_data(next.shape(), std::move(noise)));
      }
    }
    current = next;
  }
  result.s0 = result.steps.back().s_hat;
  return result;
}

}  // namespace notasign
