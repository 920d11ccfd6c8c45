#include "notasign/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include "notasign/error.hpp"

namespace notasign {

namespace {

constexpr int kK = keypoints::kTotal;

// Mean over all keypoints of pairwise Euclidean distance.
double frame_cost(const PoseSequence& a, int64_t i, const PoseSequence& b, int64_t j) {
  double sum = 0.0;
  for (int k = 0; k < kK; ++k) {
    sum += std::hypot(a.x(i, k) - b.x(j, k), a.y(i, k) - b.y(j, k));
  }
  return sum / kK;
}

// Distances summed over keypoints the ground truth actually has; the
// denominator stays |K| so masking can only lower the cost.
double masked_frame_cost(const PoseSequence& a, int64_t i, const PoseSequence& gt, int64_t j) {
  double sum = 0.0;
  for (int k = 0; k < kK; ++k) {
    if (gt.conf(j, k) > 0.0) {
      sum += std::hypot(a.x(i, k) - gt.x(j, k), a.y(i, k) - gt.y(j, k));
    }
  }
  return sum / kK;
}

template <typename CostFn>
DtwResult dtw_impl(int64_t t1, int64_t t2, CostFn&& cost) {
  if (t1 == 0 || t2 == 0) throw DataError("dtw: empty sequence");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(static_cast<size_t>(t1 * t2), inf);
  auto at = [t2](int64_t i, int64_t j) { return static_cast<size_t>(i * t2 + j); };
  for (int64_t i = 0; i < t1; ++i) {
    for (int64_t j = 0; j < t2; ++j) {
      const double c = cost(i, j);
      double best;
      if (i == 0 && j == 0) {
        best = 0.0;
      } else {
        best = inf;
        if (i > 0) best = std::min(best, acc[at(i - 1, j)]);
        if (j > 0) best = std::min(best, acc[at(i, j - 1)]);
        if (i > 0 && j > 0) best = std::min(best, acc[at(i - 1, j - 1)]);
      }
      acc[at(i, j)] = c + best;
    }
  }

  DtwResult result;
  // Backtrack; ties prefer the diagonal, then up, then left.
  int64_t i = t1 - 1, j = t2 - 1;
  result.path.emplace_back(static_cast<int>(i), static_cast<int>(j));
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const double diag = acc[at(i - 1, j - 1)];
      const double up = acc[at(i - 1, j)];
      const double left = acc[at(i, j - 1)];
      if (diag <= up && diag <= left) {
        --i;
        --j;
      } else if (up <= left) {
        --i;
      } else {
        --j;
      }
    } else if (i > 0) {
      --i;
    } else {
      --j;
    }
    result.path.emplace_back(static_cast<int>(i), static_cast<int>(j));
  }
  std::reverse(result.path.begin(), result.path.end());
  result.path_length = static_cast<int64_t>(result.path.size());
  result.distance = acc[at(t1 - 1, t2 - 1)] / static_cast<double>(result.path_length);
  return result;
}

}  // namespace

DtwResult dtw_mje(const PoseSequence& a, const PoseSequence& b) {
  return dtw_impl(a.frames, b.frames, [&](int64_t i, int64_t j) { return frame_cost(a, i, b, j); });
}

double ndtw_mje(const PoseSequence& generated, const PoseSequence& ground_truth) {
  return dtw_impl(generated.frames, ground_truth.frames, [&](int64_t i, int64_t j) {
           return masked_frame_cost(generated, i, ground_truth, j);
         })
      .distance;
}

RankResult distance_rank(const std::vector<PoseSequence>& preds,
                         const std::vector<PoseSequence>& labels,
                         std::vector<double>* matrix_out) {
  if (preds.size() != labels.size()) {
    throw std::invalid_argument("distance_rank: " + std::to_string(preds.size()) + " preds vs " +
                                std::to_string(labels.size()) + " labels");
  }
  const int n = static_cast<int>(preds.size());
  if (n == 0) throw std::invalid_argument("distance_rank: empty inputs");

  std::vector<double> dist(static_cast<size_t>(n) * n, 0.0);
  // Pairwise DTW is embarrassingly parallel; split rows across threads.
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int workers = static_cast<int>(std::min<unsigned>(hw, static_cast<unsigned>(n)));
  auto fill_rows = [&](int begin, int end) {
    for (int i = begin; i < end; ++i) {
      for (int j = 0; j < n; ++j) {
        dist[static_cast<size_t>(i) * n + j] = dtw_mje(preds[static_cast<size_t>(i)],
                                                       labels[static_cast<size_t>(j)]).distance;
      }
    }
  };
  if (workers <= 1 || n < 8) {
    fill_rows(0, n);
  } else {
    std::vector<std::thread> threads;
    const int chunk = (n + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const int begin = w * chunk;
      const int end = std::min(n, begin + chunk);
      if (begin < end) threads.emplace_back(fill_rows, begin, end);
    }
    for (auto& t : threads) t.join();
  }

  if (matrix_out) *matrix_out = dist;

  RankResult result;
  auto rank_of = [&](int fixed, bool pred_direction) {
    // Position of the true counterpart among candidates sorted by distance,
    // ties broken by index.
    std::vector<int> candidates(static_cast<size_t>(n));
    std::iota(candidates.begin(), candidates.end(), 0);
    auto d = [&](int c) {
      return pred_direction ? dist[static_cast<size_t>(fixed) * n + c]
                            : dist[static_cast<size_t>(c) * n + fixed];
    };
    std::sort(candidates.begin(), candidates.end(), [&](int lhs, int rhs) {
      if (d(lhs) != d(rhs)) return d(lhs) < d(rhs);
      return lhs < rhs;
    });
    for (int pos = 0; pos < n; ++pos) {
      if (candidates[static_cast<size_t>(pos)] == fixed) return pos;
    }
    return n;
  };

  for (size_t ki = 0; ki < RankResult::kKs.size(); ++ki) {
    const int k = std::min(RankResult::kKs[ki], n);
    int pred_hits = 0, label_hits = 0;
    for (int i = 0; i < n; ++i) {
      if (rank_of(i, true) < k) ++pred_hits;
      if (rank_of(i, false) < k) ++label_hits;
    }
    result.pred_top[ki] = static_cast<double>(pred_hits) / n;
    result.label_top[ki] = static_cast<double>(label_hits) / n;
  }
  return result;
}

std::vector<LengthMetricsRow> length_metrics(const std::vector<double>& raw_predictions,
                                             const std::vector<int>& final_predictions,
                                             const std::vector<int64_t>& gt_frames,
                                             const std::vector<std::string>& dataset_tags) {
  const size_t n = raw_predictions.size();
  if (final_predictions.size() != n || gt_frames.size() != n || dataset_tags.size() != n) {
    throw std::invalid_argument("length_metrics: input lists must be aligned");
  }
  std::vector<std::string> datasets;
  for (const std::string& tag : dataset_tags) {
    if (std::find(datasets.begin(), datasets.end(), tag) == datasets.end()) datasets.push_back(tag);
  }
  std::sort(datasets.begin(), datasets.end());
  datasets.insert(datasets.begin(), "overall");

  std::vector<LengthMetricsRow> rows;
  for (const std::string& dataset : datasets) {
    LengthMetricsRow row;
    row.dataset = dataset;
    for (size_t i = 0; i < n; ++i) {
      if (dataset != "overall" && dataset_tags[i] != dataset) continue;
      const double raw_err = raw_predictions[i] - static_cast<double>(gt_frames[i]);
      const double clip_err = static_cast<double>(final_predictions[i]) -
                              static_cast<double>(gt_frames[i]);
      row.count += 1;
      row.raw_mae += std::abs(raw_err);
      row.raw_mse += raw_err * raw_err;
      row.clipped_mae += std::abs(clip_err);
      row.clipped_mse += clip_err * clip_err;
    }
    if (row.count > 0) {
      row.raw_mae /= static_cast<double>(row.count);
      row.raw_mse /= static_cast<double>(row.count);
      row.clipped_mae /= static_cast<double>(row.count);
      row.clipped_mse /= static_cast<double>(row.count);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

ParamCount count_params(const Model& model) {
  const std::vector<std::pair<std::string, std::string>> groups{
      {"text.token_embedding", "text.embeddings"},
      {"text.position_embedding", "text.embeddings"},
      {"text.block", "text.blocks"},
      {"text.length_head", "text.length_head"},
      {"gen.pose_projection", "gen.pose_embedding"},
      {"gen.pose_position_embedding", "gen.pose_embedding"},
      {"gen.step_", "gen.step_encoder"},
      {"gen.block", "gen.blocks"},
      {"gen.coarse_", "gen.coarse_head"},
      {"gen.fine_", "gen.fine_head"},
  };
  ParamCount count;
  std::vector<std::pair<std::string, int64_t>> totals{
      {"text.embeddings", 0}, {"text.blocks", 0},     {"text.length_head", 0},
      {"gen.pose_embedding", 0}, {"gen.step_encoder", 0}, {"gen.blocks", 0},
      {"gen.coarse_head", 0},  {"gen.fine_head", 0},
  };
  for (const auto& [name, tensor] : model.registry) {
    const std::string* group = nullptr;
    for (const auto& [prefix, bucket] : groups) {
      if (name.rfind(prefix, 0) == 0) {
        group = &bucket;
        break;
      }
    }
    if (!group) throw NumericError("count_params: unmapped parameter '" + name + "'");
    for (auto& [bucket, total] : totals) {
      if (bucket == *group) total += tensor.numel();
    }
    count.total += tensor.numel();
  }
  count.per_module = std::move(totals);
  return count;
}

namespace {

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace

BenchmarkResult benchmark(const Model& model, const std::vector<TrainSample>& batch,
                          const TrainConfig& config, int repetitions) {
  if (batch.empty()) throw std::invalid_argument("benchmark: empty batch");
  repetitions = std::max(repetitions, 5);
  BenchmarkResult result;
  result.batch_size = static_cast<int>(batch.size());

  Model work = clone_model(model);
  std::vector<Tensor> params = work.params();
  AdamState adam = AdamState::create(params, config.learning_rate);
  const RefinementSchedule schedule = build_schedule(work.config.t_steps);
  LossWeights weights;
  Rng rng(config.seed);
  std::vector<const TrainSample*> pointers;
  for (const TrainSample& s : batch) pointers.push_back(&s);

  TrainConfig step_config = config;
  step_config.multiscale = work.config.multiscale;
  step_config.ffn_kind = work.config.encoder.ffn_kind;
  step_config.t_steps = work.config.t_steps;

  // Warm-up, then timed repetitions.
  training_step(work, adam, pointers, schedule, step_config, weights, rng);
  std::vector<double> train_times;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    training_step(work, adam, pointers, schedule, step_config, weights, rng);
    train_times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  result.seconds_per_epoch = median(train_times);

  auto run_inference = [&] {
    for (const TrainSample& s : batch) {
      infer_sample(model, s.token_ids,
                   std::span<const double>(s.pose_flat.data(),
                                           static_cast<size_t>(2 * model.config.keypoints)));
    }
  };
  run_inference();
  std::vector<double> infer_times;
  for (int rep = 0; rep < repetitions; ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    run_inference();
    infer_times.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  result.inference_ms = median(infer_times) * 1000.0;
  return result;
}

}  // namespace notasign
