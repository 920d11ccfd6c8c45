#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "notasign/data.hpp"
#include "notasign/generator.hpp"
#include "notasign/model.hpp"
#include "notasign/optim.hpp"

namespace notasign {

struct LossWeights {
  double lambda_len = 2e-5;
};

struct TrainConfig {
  int epochs = 2000;
  int batch_size = 16;
  double learning_rate = 1e-3;
  int t_steps = 10;
  double p_tf = 0.5;
  double noise_eps = 1e-4;
  uint64_t seed = 42;
  FfnKind ffn_kind = FfnKind::kKan;
  bool multiscale = true;
};

// Confidence-weighted MSE: (1/N) sum_frames (1/K) sum_keypoints c * |err|^2,
// with the squared error summed over x and y. target/pred are (N, 2K);
// conf holds N x K weights.
Tensor masked_mse(const Tensor& target, const Tensor& pred, std::span<const double> conf,
                  int keypoints);

// Per-step supervision targets s_0..s_T with s_0 = ground truth and
// s_t = delta_t s_0 + (1 - delta_t) s_{t-1}, delta_t = t / T.
std::vector<Tensor> interp_targets(const Tensor& ground_truth, int t_steps);

// ln(T)^2 * sum over refinement steps of masked_mse against the interpolated
// target with the matching step index.
Tensor loss_refinement(const std::vector<Tensor>& targets,
                       const std::vector<RefineStepRecord>& steps, std::span<const double> conf,
                       int keypoints, int t_steps);

// Unweighted MSE summed over steps; only defined with multiscale on.
Tensor loss_coarse(const std::vector<RefineStepRecord>& steps, const Tensor& coarse_gt,
                   bool multiscale);

Tensor loss_length(const Tensor& raw_prediction, double gt_frames, const LossWeights& weights);

Tensor total_loss(const Tensor& refinement, const Tensor& length,
                  const std::optional<Tensor>& coarse);

// One training sample after ingestion: filtered, normalized, tokenized, with
// coarse targets extracted in the normalized frame.
struct TrainSample {
  std::string id;
  std::string dataset_tag;
  std::vector<int> token_ids;
  std::vector<uint8_t> pad_mask;  // all false; batching is per-sample
  int64_t frames = 0;
  std::vector<double> pose_flat;    // frames x 2K
  std::vector<double> conf;         // frames x K
  std::vector<double> coarse_flat;  // frames x 2P
  NormalizationRecord norm;
};

TrainSample make_train_sample(const Sample& filtered, const Vocabulary& vocab,
                              const PartGrouping& grouping, int max_text_len);

PoseSequence train_sample_pose(const TrainSample& sample);

// Forward + backward + Adam update over one batch of samples. Loss components
// come back as per-sample means; coarse_grad_norm is the L2 norm of the
// coarse-head gradient after backward.
struct StepStats {
  double loss_total = 0.0;
  double loss_refine = 0.0;
  double loss_coarse = 0.0;
  double loss_len = 0.0;
  double coarse_grad_norm = 0.0;
};

StepStats training_step(Model& model, AdamState& adam,
                        const std::vector<const TrainSample*>& batch,
                        const RefinementSchedule& schedule, const TrainConfig& config,
                        const LossWeights& weights, Rng& rng);

struct EpochRecord {
  int epoch = 0;
  double loss_total = 0.0;
  double loss_refine = 0.0;
  double loss_coarse = 0.0;
  double loss_len = 0.0;
  double seconds = 0.0;
  double coarse_grad_norm = 0.0;           // max over the epoch's batches
  double val_dtw = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  Model model;
  std::vector<EpochRecord> log;
  int best_epoch = -1;  // -1: no validation split, final params kept
  double best_val_dtw = std::numeric_limits<double>::quiet_NaN();
};

// Called after every epoch; return false to stop early.
using EpochCallback = std::function<bool(const Model&, const EpochRecord&)>;

// Adam over shuffled mini-batches. With a validation split, the best
// checkpoint by validation DTW-MJE is restored at the end.
FitResult fit(const std::vector<TrainSample>& train, const std::vector<TrainSample>* validation,
              ModelConfig model_config, const TrainConfig& config, const LossWeights& weights,
              const EpochCallback& on_epoch = {});

void write_training_log(const std::string& path, const std::vector<EpochRecord>& log);

// Checkpoint file: 8-byte magic, little-endian u64 manifest size, JSON
// manifest (config, epoch, metric, parameter table), then raw little-endian
// f64 arrays in registry order.
struct CheckpointInfo {
  ModelConfig config;
  int epoch = 0;
  std::string metric_name;
  double metric_value = 0.0;
};

void save_checkpoint(const std::string& path, const Model& model, int epoch,
                     const std::string& metric_name, double metric_value);
std::pair<Model, CheckpointInfo> load_checkpoint(const std::string& path);

}  // namespace notasign
