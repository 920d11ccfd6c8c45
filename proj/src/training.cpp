#include "notasign/training.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "notasign/csv.hpp"
#include "notasign/error.hpp"
#include "notasign/eval.hpp"
#include "notasign/hamnosys.hpp"

namespace notasign {

Tensor masked_mse(const Tensor& target, const Tensor& pred, std::span<const double> conf,
                  int keypoints) {
  if (target.shape() != pred.shape()) {
    throw std::invalid_argument("masked_mse: shape mismatch " + shape_str(target.shape()) +
                                " vs " + shape_str(pred.shape()));
  }
  const int64_t frames = target.dim(0);
  const int64_t width = target.dim(1);
  if (width != 2LL * keypoints || static_cast<int64_t>(conf.size()) != frames * keypoints) {
    throw std::invalid_argument("masked_mse: confidence size does not match " +
                                shape_str(target.shape()));
  }
  std::vector<double> weights(static_cast<size_t>(frames * width));
  for (int64_t t = 0; t < frames; ++t) {
    for (int64_t k = 0; k < keypoints; ++k) {
      const double c = conf[static_cast<size_t>(t * keypoints + k)];
      weights[static_cast<size_t>(t * width + 2 * k)] = c;
      weights[static_cast<size_t>(t * width + 2 * k + 1)] = c;
    }
  }
  Tensor diff = sub(pred, target);
  Tensor weighted = mul(mul(diff, diff), Tensor::from_data(target.shape(), std::move(weights)));
  return scale(sum_all(weighted), 1.0 / (static_cast<double>(frames) * keypoints));
}

std::vector<Tensor> interp_targets(const Tensor& ground_truth, int t_steps) {
  std::vector<Tensor> targets;
  targets.reserve(static_cast<size_t>(t_steps) + 1);
  targets.push_back(ground_truth.detached_clone());
  for (int t = 1; t <= t_steps; ++t) {
    const double delta = static_cast<double>(t) / static_cast<double>(t_steps);
    const Tensor& prev = targets.back();
    std::vector<double> next(static_cast<size_t>(ground_truth.numel()));
    std::span<const double> s0 = ground_truth.data();
    std::span<const double> pv = prev.data();
    for (size_t i = 0; i < next.size(); ++i) next[i] = delta * s0[i] + (1.0 - delta) * pv[i];
    targets.push_back(Tensor::from_data(ground_truth.shape(), std::move(next)));
  }
  return targets;
}

Tensor loss_refinement(const std::vector<Tensor>& targets,
                       const std::vector<RefineStepRecord>& steps, std::span<const double> conf,
                       int keypoints, int t_steps) {
  if (static_cast<int>(steps.size()) != t_steps) {
    throw std::invalid_argument("loss_refinement: got " + std::to_string(steps.size()) +
                                " step records, expected " + std::to_string(t_steps));
  }
  Tensor sum;
  for (const RefineStepRecord& rec : steps) {
    Tensor term = masked_mse(targets[static_cast<size_t>(rec.step)], rec.s_hat, conf, keypoints);
    sum = sum.defined() ? add(sum, term) : term;
  }
  const double ln_t = std::log(static_cast<double>(t_steps));
  return scale(sum, ln_t * ln_t);
}

Tensor loss_coarse(const std::vector<RefineStepRecord>& steps, const Tensor& coarse_gt,
                   bool multiscale) {
  if (!multiscale) {
    throw std::invalid_argument("loss_coarse: called with multiscale disabled");
  }
  Tensor sum;
  for (const RefineStepRecord& rec : steps) {
    Tensor diff = sub(rec.coarse, coarse_gt);
    Tensor term = mean_all(mul(diff, diff));
    sum = sum.defined() ? add(sum, term) : term;
  }
  return sum;
}

Tensor loss_length(const Tensor& raw_prediction, double gt_frames, const LossWeights& weights) {
  if (!(gt_frames > 0)) {
    throw std::invalid_argument("loss_length: gt_frames must be positive");
  }
  Tensor diff = sub(raw_prediction, Tensor::scalar(gt_frames));
  return scale(mul(diff, diff), weights.lambda_len);
}

Tensor total_loss(const Tensor& refinement, const Tensor& length,
                  const std::optional<Tensor>& coarse) {
  Tensor total = add(refinement, length);
  if (coarse.has_value()) total = add(total, *coarse);
  return total;
}

TrainSample make_train_sample(const Sample& filtered, const Vocabulary& vocab,
                              const PartGrouping& grouping, int max_text_len) {
  TrainSample ts;
  ts.id = filtered.id;
  ts.dataset_tag = filtered.dataset_tag;
  ts.token_ids = tokenize(filtered.hamnosys, vocab);
  if (static_cast<int>(ts.token_ids.size()) > max_text_len) {
    throw DataError("sample '" + filtered.id + "': " + std::to_string(ts.token_ids.size()) +
                    " tokens exceed the max text length " + std::to_string(max_text_len));
  }
  ts.pad_mask.assign(ts.token_ids.size(), 0);

  auto [normalized, record] = normalize_pose(filtered.pose);
  ts.norm = record;
  ts.frames = normalized.frames;
  ts.pose_flat = normalized.coords;
  ts.conf = normalized.confidence;
  CoarsePoseSequence coarse = extract_coarse_gt(normalized, grouping);
  ts.coarse_flat = coarse.coords;
  return ts;
}

PoseSequence train_sample_pose(const TrainSample& sample) {
  PoseSequence pose = PoseSequence::empty(sample.frames);
  pose.coords = sample.pose_flat;
  pose.confidence = sample.conf;
  return pose;
}

namespace {

double coarse_head_grad_norm(const Model& model) {
  double sq = 0.0;
  for (const Tensor* t : {&model.gen.coarse_fc1.weight, &model.gen.coarse_fc1.bias,
                          &model.gen.coarse_fc2.weight, &model.gen.coarse_fc2.bias}) {
    if (!t->has_grad()) continue;
    for (double g : t->grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

}  // namespace

StepStats training_step(Model& model, AdamState& adam,
                        const std::vector<const TrainSample*>& batch,
                        const RefinementSchedule& schedule, const TrainConfig& config,
                        const LossWeights& weights, Rng& rng) {
  if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
  std::vector<Tensor> params = model.params();
  for (Tensor& p : params) {
    p.clear_grad();
    p.ensure_zero_grad();
  }

  const GeneratorDims dims = model.dims();
  StepStats stats;
  Tensor batch_total;
  for (const TrainSample* sample : batch) {
    TextForward text = text_forward(model, sample->token_ids, sample->pad_mask, true, rng);

    Tensor gt = Tensor::from_data({sample->frames, 2LL * dims.keypoints}, sample->pose_flat);
    std::vector<Tensor> targets = interp_targets(gt, schedule.t_steps);

    RefineOptions options;
    options.mode = RefineMode::kTrain;
    options.p_tf = config.p_tf;
    options.noise_eps = config.noise_eps;
    options.multiscale = config.multiscale;
    options.training = true;
    std::span<const double> first_frame(sample->pose_flat.data(),
                                        static_cast<size_t>(2 * dims.keypoints));
    RefineResult refined = refine(first_frame, sample->frames, text.encoded, sample->pad_mask,
                                  schedule, model.gen, dims, model.config.basis, options, &targets,
                                  &rng);

    Tensor l_refine = loss_refinement(targets, refined.steps, sample->conf, dims.keypoints,
                                      schedule.t_steps);
    Tensor l_len = loss_length(text.raw_length, static_cast<double>(sample->frames), weights);
    std::optional<Tensor> l_coarse;
    if (config.multiscale) {
      Tensor coarse_gt = Tensor::from_data({sample->frames, 2LL * dims.coarse_parts},
                                           sample->coarse_flat);
      l_coarse = loss_coarse(refined.steps, coarse_gt, true);
    }
    Tensor sample_total = total_loss(l_refine, l_len, l_coarse);

    stats.loss_refine += l_refine.item();
    stats.loss_len += l_len.item();
    if (l_coarse) stats.loss_coarse += l_coarse->item();
    batch_total = batch_total.defined() ? add(batch_total, sample_total) : sample_total;
  }

  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  Tensor batch_loss = scale(batch_total, inv_batch);
  stats.loss_refine *= inv_batch;
  stats.loss_coarse *= inv_batch;
  stats.loss_len *= inv_batch;
  stats.loss_total = batch_loss.item();
  if (!std::isfinite(stats.loss_total)) {
    throw NumericError("training_step: non-finite batch loss");
  }

  backward(batch_loss);
  stats.coarse_grad_norm = coarse_head_grad_norm(model);
  adam_step(params, adam);
  return stats;
}

FitResult fit(const std::vector<TrainSample>& train, const std::vector<TrainSample>* validation,
              ModelConfig model_config, const TrainConfig& config, const LossWeights& weights,
              const EpochCallback& on_epoch) {
  if (train.empty()) throw DataError("fit: empty training set");
  if (!(config.p_tf >= 0.0 && config.p_tf <= 1.0)) {
    throw UsageError("fit: p_tf must lie in [0, 1]");
  }
  model_config.encoder.ffn_kind = config.ffn_kind;
  model_config.multiscale = config.multiscale;
  model_config.t_steps = config.t_steps;

  Rng rng(config.seed);
  FitResult result;
  result.model = build_model(model_config, rng);
  std::vector<Tensor> params = result.model.params();
  AdamState adam = AdamState::create(params, config.learning_rate);
  const RefinementSchedule schedule = build_schedule(config.t_steps);

  auto validate = [&](const Model& m) {
    double total = 0.0;
    for (const TrainSample& s : *validation) {
      InferenceResult inf = infer_sample(m, s.token_ids,
                                         std::span<const double>(s.pose_flat.data(),
                                                                 static_cast<size_t>(
                                                                     2 * m.config.keypoints)));
      total += dtw_mje(inf.pose, train_sample_pose(s)).distance;
    }
    return total / static_cast<double>(validation->size());
  };

  std::vector<std::vector<double>> best_params;
  std::vector<size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    rng.shuffle(order);

    EpochRecord record;
    record.epoch = epoch;
    int64_t seen = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(config.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(config.batch_size));
      std::vector<const TrainSample*> batch;
      batch.reserve(end - begin);
      for (size_t i = begin; i < end; ++i) batch.push_back(&train[order[i]]);
      StepStats stats;
      try {
        stats = training_step(result.model, adam, batch, schedule, config, weights, rng);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(begin / config.batch_size) + ": " + e.what());
      }
      const auto n = static_cast<double>(batch.size());
      record.loss_total += stats.loss_total * n;
      record.loss_refine += stats.loss_refine * n;
      record.loss_coarse += stats.loss_coarse * n;
      record.loss_len += stats.loss_len * n;
      record.coarse_grad_norm = std::max(record.coarse_grad_norm, stats.coarse_grad_norm);
      seen += static_cast<int64_t>(batch.size());
    }
    record.loss_total /= static_cast<double>(seen);
    record.loss_refine /= static_cast<double>(seen);
    record.loss_coarse /= static_cast<double>(seen);
    record.loss_len /= static_cast<double>(seen);

    if (validation && !validation->empty()) {
      record.val_dtw = validate(result.model);
      if (result.best_epoch < 0 || record.val_dtw < result.best_val_dtw) {
        result.best_val_dtw = record.val_dtw;
        result.best_epoch = epoch;
        best_params.clear();
        for (const auto& [name, tensor] : result.model.registry) {
          best_params.emplace_back(tensor.data().begin(), tensor.data().end());
        }
      }
    }

    record.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.log.push_back(record);
    if (on_epoch && !on_epoch(result.model, record)) break;
  }

  if (!best_params.empty()) {
    for (size_t i = 0; i < result.model.registry.size(); ++i) {
      std::span<double> dst = result.model.registry[i].second.mutable_data();
      std::copy(best_params[i].begin(), best_params[i].end(), dst.begin());
    }
  }
  return result;
}

void write_training_log(const std::string& path, const std::vector<EpochRecord>& log) {
  CsvWriter csv(path, {"epoch", "loss_total", "loss_refine", "loss_coarse", "loss_len", "seconds"});
  for (const EpochRecord& r : log) {
    csv.row({std::to_string(r.epoch), fmt_double(r.loss_total), fmt_double(r.loss_refine),
             fmt_double(r.loss_coarse), fmt_double(r.loss_len), fmt_double(r.seconds)});
  }
}

namespace {

constexpr char kCheckpointMagic[8] = {'N', 'S', 'C', 'K', 'P', 'T', '0', '1'};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, int epoch,
                     const std::string& metric_name, double metric_value) {
  nlohmann::json manifest;
  manifest["format_version"] = 1;
  manifest["config"] = nlohmann::json::parse(model_config_to_json(model.config));
  manifest["epoch"] = epoch;
  manifest["metric"] = {{"name", metric_name}, {"value", metric_value}};
  nlohmann::json params = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& [name, tensor] : model.registry) {
    params.push_back({{"name", name},
                      {"shape", tensor.shape()},
                      {"numel", tensor.numel()},
                      {"offset", offset}});
    offset += tensor.numel();
  }
  manifest["params"] = std::move(params);
  const std::string manifest_text = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint64_t manifest_size = manifest_text.size();
  char size_bytes[8];
  for (int i = 0; i < 8; ++i) size_bytes[i] = static_cast<char>((manifest_size >> (8 * i)) & 0xFF);
  out.write(size_bytes, 8);
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (const auto& [name, tensor] : model.registry) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint writer assumes a little-endian host");
    std::span<const double> data = tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint " + path);
}

std::pair<Model, CheckpointInfo> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw DataError(path + ": not a checkpoint file");
  }
  char size_bytes[8];
  in.read(size_bytes, 8);
  uint64_t manifest_size = 0;
  for (int i = 7; i >= 0; --i) {
    manifest_size = (manifest_size << 8) | static_cast<unsigned char>(size_bytes[i]);
  }
  std::string manifest_text(manifest_size, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_size));
  if (!in) throw DataError(path + ": truncated manifest");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed manifest: " + e.what());
  }
  CheckpointInfo info;
  info.config = model_config_from_json(manifest.at("config").dump());
  info.epoch = manifest.at("epoch").get<int>();
  info.metric_name = manifest.at("metric").at("name").get<std::string>();
  info.metric_value = manifest.at("metric").at("value").get<double>();

  Rng rng(0);
  Model model = build_model(info.config, rng);
  const auto& params = manifest.at("params");
  if (params.size() != model.registry.size()) {
    throw DataError(path + ": manifest lists " + std::to_string(params.size()) +
                    " params, model has " + std::to_string(model.registry.size()));
  }
  for (size_t i = 0; i < model.registry.size(); ++i) {
    const auto& entry = params[i];
    if (entry.at("name").get<std::string>() != model.registry[i].first) {
      throw DataError(path + ": parameter order mismatch at '" + model.registry[i].first + "'");
    }
    if (entry.at("numel").get<int64_t>() != model.registry[i].second.numel()) {
      throw DataError(path + ": size mismatch for '" + model.registry[i].first + "'");
    }
    std::span<double> dst = model.registry[i].second.mutable_data();
    in.read(reinterpret_cast<char*>(dst.data()),
            static_cast<std::streamsize>(dst.size() * sizeof(double)));
    if (!in) throw DataError(path + ": truncated payload at '" + model.registry[i].first + "'");
  }
  return {std::move(model), std::move(info)};
}

}  // namespace notasign
