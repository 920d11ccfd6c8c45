#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "notasign/encoder.hpp"
#include "notasign/tensor.hpp"

namespace notasign {

// Per-step blending schedule: gamma_t = log_T(T - t + 1) for t in [0, T],
// alpha_t = gamma_t - gamma_{t+1} for t in [0, T). Generation runs
// t = T-1 ... 0, so the largest step is applied first.
struct RefinementSchedule {
  int t_steps = 0;
  std::vector<double> gamma;  // size t_steps + 1
  std::vector<double> alpha;  // size t_steps
};

RefinementSchedule build_schedule(int t_steps);

struct GeneratorParams {
  LinearParams pose_projection;  // 2K -> d
  Tensor pose_position_embedding;  // (max_frames, d)
  Tensor step_embedding;           // (t_steps, d)
  LinearParams step_fc1, step_fc2;  // d -> d each
  std::vector<TransformerBlockParams> blocks;  // text-pose encoder
  LinearParams coarse_fc1;  // d -> d
  LinearParams coarse_fc2;  // d -> 2 * parts
  LinearParams fine_fc1;    // d + 2 * parts -> d
  LinearParams fine_fc2;    // d -> 2K
};

struct GeneratorDims {
  int d_model = 128;
  int n_heads = 4;
  int keypoints = 137;
  int coarse_parts = 25;
  int pose_dim() const { return keypoints * 2; }
  int coarse_dim() const { return coarse_parts * 2; }
};

GeneratorParams make_generator(const GeneratorDims& dims, const EncoderConfig& cfg,
                               const KanBasisConfig& basis, int max_frames, int t_steps,
                               double dropout_rate, Rng& rng);

// Every frame equals the provided reference frame; constant w.r.t. the graph.
Tensor init_pose_sequence(std::span<const double> first_frame, int64_t t_frames);

// Flatten -> linear projection -> learnable positional embedding.
Tensor embed_pose(const Tensor& pose_flat, const GeneratorParams& p);

// E_s = f2(SiLU(f1(e(t)))) from the step embedding table.
Tensor encode_step(int t, int t_steps, const GeneratorParams& p);

// Concatenate [pose | text | step] along the sequence axis, run the text-pose
// encoder with the text PAD mask extended (pose and step unmasked), and
// return the first t_frames positions.
Tensor fuse_and_encode(const Tensor& e_pose, const Tensor& e_text, const Tensor& e_step,
                       const std::vector<uint8_t>& text_pad_mask, const GeneratorParams& p,
                       const GeneratorDims& dims, const KanBasisConfig& basis, bool training,
                       Rng& rng);

Tensor predict_coarse(const Tensor& e_text_pose, const GeneratorParams& p);  // (T, 2*parts)

// Fine head consumes [E_tp | coarse] per frame.
Tensor predict_fine(const Tensor& e_text_pose, const Tensor& coarse_flat,
                    const GeneratorParams& p);  // (T, 2K)

enum class RefineMode { kTrain, kInfer };

struct RefineOptions {
  RefineMode mode = RefineMode::kInfer;
  double p_tf = 0.5;        // teacher-forcing probability (train mode)
  double noise_eps = 1e-4;  // Gaussian noise scale (train mode)
  bool multiscale = true;   // off: fine head sees zeros in the coarse slot
  bool training = false;    // dropout switch
};

struct RefineStepRecord {
  int step = 0;      // t, counting down from t_steps - 1
  Tensor q;          // refinement-module output (T, 2K)
  Tensor coarse;     // coarse prediction (T, 2*parts)
  Tensor s_hat;      // blended prediction at this step (T, 2K)
};

struct RefineResult {
  Tensor s0;  // final output, the blended prediction at t = 0
  std::vector<RefineStepRecord> steps;  // in generation order t = T-1 ... 0
};

// Iterative refinement. In train mode, interp_targets supplies the per-step
// targets s_t (index t in [0, t_steps]) used for teacher forcing; rng drives
// the per-step coin flips and noise.
RefineResult refine(std::span<const double> first_frame, int64_t t_frames, const Tensor& e_text,
                    const std::vector<uint8_t>& text_pad_mask, const RefinementSchedule& schedule,
                    const GeneratorParams& p, const GeneratorDims& dims,
                    const KanBasisConfig& basis, const RefineOptions& options,
                    const std::vector<Tensor>* interp_targets, Rng* rng);

}  // namespace notasign
