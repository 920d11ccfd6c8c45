#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "notasign/data.hpp"
#include "notasign/model.hpp"
#include "notasign/training.hpp"

namespace notasign {

struct DtwResult {
  double distance = 0.0;
  std::vector<std::pair<int, int>> path;  // (i, j) from (0,0) to (T1-1, T2-1)
  int64_t path_length = 0;
};

// Frame-pair cost: mean over keypoints of Euclidean distance; classic DTW
// with steps {(1,0),(0,1),(1,1)}; distance = accumulated cost / path length.
DtwResult dtw_mje(const PoseSequence& a, const PoseSequence& b);

// DTW-MJE with keypoints missing in the ground truth (confidence 0) masked
// out of the frame cost; the denominator stays the full keypoint count, so
// frames with no valid keypoints contribute zero cost.
double ndtw_mje(const PoseSequence& generated, const PoseSequence& ground_truth);

// Top-K retrieval accuracy in both directions, K in {1, 5, 10} (clamped to
// the set size). Ties break by index.
struct RankResult {
  static constexpr std::array<int, 3> kKs{1, 5, 10};
  std::array<double, 3> pred_top{};   // generated -> ground truth
  std::array<double, 3> label_top{};  // ground truth -> generated
};

// matrix_out, when given, receives the row-major n x n DTW matrix
// (pred i vs label j) for auditing.
RankResult distance_rank(const std::vector<PoseSequence>& preds,
                         const std::vector<PoseSequence>& labels,
                         std::vector<double>* matrix_out = nullptr);

// MAE/MSE in frames for raw and rounded+clipped length predictions, per
// dataset plus an overall row.
struct LengthMetricsRow {
  std::string dataset;
  int64_t count = 0;
  double raw_mae = 0.0;
  double raw_mse = 0.0;
  double clipped_mae = 0.0;
  double clipped_mse = 0.0;
};

std::vector<LengthMetricsRow> length_metrics(const std::vector<double>& raw_predictions,
                                             const std::vector<int>& final_predictions,
                                             const std::vector<int64_t>& gt_frames,
                                             const std::vector<std::string>& dataset_tags);

struct ParamCount {
  std::vector<std::pair<std::string, int64_t>> per_module;
  int64_t total = 0;
};

ParamCount count_params(const Model& model);

// Wall-clock only: median over timed repetitions after a warm-up pass.
// seconds_per_epoch times one full training pass over the batch; inference_ms
// times generation for the whole batch.
struct BenchmarkResult {
  double seconds_per_epoch = 0.0;
  double inference_ms = 0.0;
  int batch_size = 0;
};

BenchmarkResult benchmark(const Model& model, const std::vector<TrainSample>& batch,
                          const TrainConfig& config, int repetitions = 5);

}  // namespace notasign
