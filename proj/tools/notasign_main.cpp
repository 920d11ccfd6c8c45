// notasign: HamNoSys-to-pose generation pipeline.
//
// Subcommands: synth, prepare, train, generate, evaluate, inspect-kan,
// ablate. One JSON config file plus flag overrides (flags win); the effective
// config is echoed into every output directory. Exit codes: 0 success,
// 1 usage error, 2 data error, 3 numeric failure.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "notasign/csv.hpp"
#include "notasign/data.hpp"
#include "notasign/error.hpp"
#include "notasign/eval.hpp"
#include "notasign/hamnosys.hpp"
#include "notasign/kan.hpp"
#include "notasign/model.hpp"
#include "notasign/training.hpp"

namespace notasign {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  LossWeights weights;
  std::string vocabulary = "data/hamnosys_vocab.txt";
  std::string grouping = "data/part_grouping.json";
  std::string manifest;
  std::string out_dir = "out";
};

json run_config_to_json(const RunConfig& rc) {
  json j = json::parse(model_config_to_json(rc.model));
  j["epochs"] = rc.train.epochs;
  j["batch_size"] = rc.train.batch_size;
  j["learning_rate"] = rc.train.learning_rate;
  j["p_tf"] = rc.train.p_tf;
  j["noise_eps"] = rc.train.noise_eps;
  j["seed"] = rc.train.seed;
  j["lambda_len"] = rc.weights.lambda_len;
  j["vocabulary"] = rc.vocabulary;
  j["grouping"] = rc.grouping;
  j["manifest"] = rc.manifest;
  j["out_dir"] = rc.out_dir;
  return j;
}

void apply_json(RunConfig& rc, const json& j) {
  rc.model = model_config_from_json(j.dump());
  rc.train.epochs = j.value("epochs", rc.train.epochs);
  rc.train.batch_size = j.value("batch_size", rc.train.batch_size);
  rc.train.learning_rate = j.value("learning_rate", rc.train.learning_rate);
  rc.train.p_tf = j.value("p_tf", rc.train.p_tf);
  rc.train.noise_eps = j.value("noise_eps", rc.train.noise_eps);
  rc.train.seed = j.value("seed", rc.train.seed);
  rc.weights.lambda_len = j.value("lambda_len", rc.weights.lambda_len);
  rc.vocabulary = j.value("vocabulary", rc.vocabulary);
  rc.grouping = j.value("grouping", rc.grouping);
  rc.manifest = j.value("manifest", rc.manifest);
  rc.out_dir = j.value("out_dir", rc.out_dir);
}

// Flag values land here as optionals; only explicitly set flags override the
// config file, and NOTASIGN_SEED sits between the two.
struct FlagOverrides {
  std::optional<std::string> config_path;
  std::optional<std::string> ffn;
  std::optional<std::string> multiscale;
  std::optional<int> epochs;
  std::optional<int> batch_size;
  std::optional<double> learning_rate;
  std::optional<int> t_steps;
  std::optional<double> p_tf;
  std::optional<double> noise_eps;
  std::optional<uint64_t> seed;
  std::optional<int> d_model;
  std::optional<int> n_layers_text_pose;
  std::optional<int> kan_hidden;
  std::optional<std::string> vocabulary;
  std::optional<std::string> grouping;
  std::optional<std::string> manifest;
  std::optional<std::string> out_dir;
};

void add_common_flags(CLI::App* cmd, FlagOverrides& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--ffn", f.ffn, "feed-forward kind in the text-pose encoder")
      ->check(CLI::IsMember({"mlp", "kan"}));
  cmd->add_option("--multiscale", f.multiscale, "coarse supervision on/off")
      ->check(CLI::IsMember({"on", "off"}));
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch-size", f.batch_size, "mini-batch size");
  cmd->add_option("--learning-rate", f.learning_rate, "Adam learning rate");
  cmd->add_option("--t-steps", f.t_steps, "refinement steps");
  cmd->add_option("--p-tf", f.p_tf, "teacher-forcing probability");
  cmd->add_option("--noise-eps", f.noise_eps, "training noise scale");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--d-model", f.d_model, "hidden dimension");
  cmd->add_option("--layers-text-pose", f.n_layers_text_pose, "text-pose encoder depth");
  cmd->add_option("--kan-hidden", f.kan_hidden, "KAN FFN hidden width");
  cmd->add_option("--vocabulary", f.vocabulary, "vocabulary file");
  cmd->add_option("--grouping", f.grouping, "part grouping file");
  cmd->add_option("--manifest", f.manifest, "dataset manifest CSV");
  cmd->add_option("--out", f.out_dir, "output directory");
}

RunConfig resolve_config(const FlagOverrides& f) {
  RunConfig rc;
  if (f.config_path) {
    std::ifstream in(*f.config_path);
    if (!in) throw DataError("cannot open config " + *f.config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw DataError(*f.config_path + std::string(": malformed JSON: ") + e.what());
    }
    apply_json(rc, j);
  }
  if (const char* env_seed = std::getenv("NOTASIGN_SEED")) {
    rc.train.seed = std::strtoull(env_seed, nullptr, 10);
  }
  if (f.ffn) rc.model.encoder.ffn_kind = ffn_kind_from_string(*f.ffn);
  if (f.multiscale) rc.model.multiscale = *f.multiscale == "on";
  if (f.epochs) rc.train.epochs = *f.epochs;
  if (f.batch_size) rc.train.batch_size = *f.batch_size;
  if (f.learning_rate) rc.train.learning_rate = *f.learning_rate;
  if (f.t_steps) rc.model.t_steps = *f.t_steps;
  if (f.p_tf) rc.train.p_tf = *f.p_tf;
  if (f.noise_eps) rc.train.noise_eps = *f.noise_eps;
  if (f.seed) rc.train.seed = *f.seed;
  if (f.d_model) rc.model.encoder.d_model = *f.d_model;
  if (f.n_layers_text_pose) rc.model.encoder.n_layers_text_pose = *f.n_layers_text_pose;
  if (f.kan_hidden) rc.model.encoder.kan_hidden = *f.kan_hidden;
  if (f.vocabulary) rc.vocabulary = *f.vocabulary;
  if (f.grouping) rc.grouping = *f.grouping;
  if (f.manifest) rc.manifest = *f.manifest;
  if (f.out_dir) rc.out_dir = *f.out_dir;
  rc.train.ffn_kind = rc.model.encoder.ffn_kind;
  rc.train.multiscale = rc.model.multiscale;
  rc.train.t_steps = rc.model.t_steps;
  return rc;
}

void echo_config(const RunConfig& rc, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::ofstream out(out_dir / "config.json");
  out << run_config_to_json(rc).dump(1) << "\n";
}

struct LoadedSet {
  std::vector<TrainSample> train;
  std::vector<TrainSample> val;
  std::vector<TrainSample> test;
};

LoadedSet load_split_samples(const RunConfig& rc) {
  if (rc.manifest.empty()) throw UsageError("a --manifest is required");
  const Vocabulary vocab = load_vocabulary(rc.vocabulary);
  const PartGrouping grouping = load_part_grouping(rc.grouping);
  LoadedSet set;
  for (const ManifestEntry& entry : load_manifest(rc.manifest)) {
    Sample sample = parse_pose_file(entry.path);
    sample.id = entry.id;
    sample.dataset_tag = entry.dataset_tag;
    TrainSample ts = make_train_sample(filter_frames(sample), vocab, grouping,
                                       rc.model.encoder.max_positions);
    if (entry.split == "val") {
      set.val.push_back(std::move(ts));
    } else if (entry.split == "test") {
      set.test.push_back(std::move(ts));
    } else {
      set.train.push_back(std::move(ts));
    }
  }
  return set;
}

int cmd_synth(const RunConfig& rc, int count) {
  const Vocabulary vocab = load_vocabulary(rc.vocabulary);
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir / "poses");
  Rng rng(rc.train.seed);
  SyntheticOptions options;
  options.num_samples = count;
  std::vector<Sample> corpus = make_synthetic_corpus(vocab, options, rng);
  std::vector<ManifestEntry> manifest;
  for (size_t i = 0; i < corpus.size(); ++i) {
    const std::string rel = "poses/" + corpus[i].id + ".json";
    write_pose_file((out_dir / rel).string(), corpus[i]);
    // Splits: every 5th sample to val, every 4th to test, the rest train.
    std::string split = "train";
    if (i % 5 == 4) {
      split = "val";
    } else if (i % 4 == 3) {
      split = "test";
    }
    manifest.push_back({corpus[i].id, rel, corpus[i].dataset_tag, split});
  }
  write_manifest((out_dir / "manifest.csv").string(), manifest);
  echo_config(rc, out_dir);
  std::cout << "wrote " << corpus.size() << " synthetic samples under " << out_dir.string()
            << "\n";
  return 0;
}

int cmd_prepare(const RunConfig& rc) {
  if (rc.manifest.empty()) throw UsageError("prepare: --manifest is required");
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir / "poses");
  echo_config(rc, out_dir);

  const Vocabulary vocab = load_vocabulary(rc.vocabulary);
  const std::vector<ManifestEntry> entries = load_manifest(rc.manifest);
  CsvWriter rejections((out_dir / "rejections.csv").string(), {"id", "path", "reason"});
  std::vector<ManifestEntry> kept_entries;
  struct Prepared {
    std::string id;
    std::string tag;
    ComplexityStats stats;
  };
  std::vector<Prepared> prepared;
  size_t failures = 0;

  for (const ManifestEntry& entry : entries) {
    try {
      Sample sample = parse_pose_file(entry.path);
      sample.id = entry.id;
      sample.dataset_tag = entry.dataset_tag;
      // Reject rather than truncate notation that exceeds the text window.
      const std::vector<int> tokens = tokenize(sample.hamnosys, vocab);
      if (static_cast<int>(tokens.size()) > rc.model.encoder.max_positions) {
        throw DataError("notation has " + std::to_string(tokens.size()) +
                        " tokens, max text length is " +
                        std::to_string(rc.model.encoder.max_positions));
      }
      Sample filtered = filter_frames(sample);
      // Complexity is computed on the filtered, still-raw coordinates; the
      // stored files are normalized.
      ComplexityStats stats = complexity_score(filtered.pose);
      auto [normalized, record] = normalize_pose(filtered.pose);
      Sample out_sample = filtered;
      out_sample.pose = std::move(normalized);
      const std::string rel = "poses/" + entry.id + ".json";
      write_pose_file((out_dir / rel).string(), out_sample);
      kept_entries.push_back({entry.id, rel, entry.dataset_tag, entry.split});
      prepared.push_back({entry.id, entry.dataset_tag, stats});
    } catch (const DataError& e) {
      rejections.row({entry.id, entry.path, e.what()});
      ++failures;
    }
  }

  // Stratify within each dataset tag.
  std::vector<std::string> tags;
  for (const Prepared& p : prepared) {
    if (std::find(tags.begin(), tags.end(), p.tag) == tags.end()) tags.push_back(p.tag);
  }
  std::sort(tags.begin(), tags.end());
  CsvWriter buckets((out_dir / "buckets.csv").string(), {"id", "T", "E", "J", "C", "bucket"});
  for (const std::string& tag : tags) {
    std::vector<std::string> ids;
    std::vector<ComplexityStats> stats;
    for (const Prepared& p : prepared) {
      if (p.tag == tag) {
        ids.push_back(p.id);
        stats.push_back(p.stats);
      }
    }
    std::vector<ComplexityStats> bucketed = stratify(ids, stats);
    for (size_t i = 0; i < ids.size(); ++i) {
      buckets.row({ids[i], std::to_string(bucketed[i].frame_count), fmt_double(bucketed[i].motion),
                   fmt_double(bucketed[i].jerk), fmt_double(bucketed[i].combined),
                   bucketed[i].bucket});
    }
  }
  write_manifest((out_dir / "manifest.csv").string(), kept_entries);
  std::cout << "prepared " << kept_entries.size() << " samples, rejected " << failures << "\n";
  if (!entries.empty() && kept_entries.empty()) {
    throw DataError("prepare: every sample was rejected");
  }
  return 0;
}

int cmd_train(const RunConfig& rc) {
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);
  echo_config(rc, out_dir);
  LoadedSet set = load_split_samples(rc);
  if (set.train.empty()) throw DataError("train: no samples in the train split");

  FitResult result = fit(set.train, set.val.empty() ? nullptr : &set.val, rc.model, rc.train,
                         rc.weights);
  write_training_log((out_dir / "training_log.csv").string(), result.log);
  const double metric = result.best_epoch >= 0
                            ? result.best_val_dtw
                            : (result.log.empty() ? 0.0 : result.log.back().loss_total);
  const std::string metric_name = result.best_epoch >= 0 ? "val_dtw_mje" : "loss_total";
  save_checkpoint((out_dir / "checkpoint.nsck").string(), result.model,
                  result.best_epoch >= 0 ? result.best_epoch
                                         : static_cast<int>(result.log.size()),
                  metric_name, metric);
  std::cout << "trained " << result.log.size() << " epochs; checkpoint at "
            << (out_dir / "checkpoint.nsck").string() << "\n";
  return 0;
}

int cmd_generate(const RunConfig& rc, const std::string& checkpoint_path, const std::string& text,
                 const std::string& first_frame_path) {
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);
  auto [model, info] = load_checkpoint(checkpoint_path);
  const Vocabulary vocab = load_vocabulary(rc.vocabulary);

  struct Request {
    std::string id;
    std::string text;
    std::vector<double> first_frame;  // normalized
    NormalizationRecord norm;
  };
  std::vector<Request> requests;

  if (!text.empty() || !first_frame_path.empty()) {
    if (first_frame_path.empty()) {
      throw UsageError("generate: --first-frame is required with --text");
    }
    Sample ref = parse_pose_file(first_frame_path);
    auto [normalized, record] = normalize_pose(ref.pose);
    Request r;
    r.id = "generated";
    r.text = text;
    r.first_frame.assign(normalized.coords.begin(),
                         normalized.coords.begin() + 2 * keypoints::kTotal);
    r.norm = record;
    requests.push_back(std::move(r));
  } else {
    if (rc.manifest.empty()) throw UsageError("generate: need --text or --manifest");
    for (const ManifestEntry& entry : load_manifest(rc.manifest)) {
      Sample sample = parse_pose_file(entry.path);
      auto [normalized, record] = normalize_pose(filter_frames(sample).pose);
      Request r;
      r.id = entry.id;
      r.text = sample.hamnosys;
      r.first_frame.assign(normalized.coords.begin(),
                           normalized.coords.begin() + 2 * keypoints::kTotal);
      r.norm = record;
      requests.push_back(std::move(r));
    }
  }

  size_t ok = 0;
  for (const Request& r : requests) {
    try {
      const std::vector<int> ids = tokenize(r.text, vocab);
      InferenceResult inf = infer_sample(model, ids, r.first_frame);
      Sample out_sample;
      out_sample.id = r.id;
      out_sample.hamnosys = r.text;
      out_sample.dataset_tag = "generated";
      out_sample.pose = denormalize_pose(inf.pose, r.norm);
      write_pose_file((out_dir / (r.id + ".json")).string(), out_sample);
      std::cout << r.id << ": " << inf.final_length << " frames (raw " << inf.raw_length << ")\n";
      ++ok;
    } catch (const DataError& e) {
      std::cerr << r.id << ": " << e.what() << "\n";
    }
  }
  echo_config(rc, out_dir);
  if (ok == 0 && !requests.empty()) throw DataError("generate: every item failed");
  return 0;
}

int cmd_evaluate(const RunConfig& rc, const std::string& checkpoint_path,
                 bool dump_distances) {
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);
  echo_config(rc, out_dir);
  auto [model, info] = load_checkpoint(checkpoint_path);
  LoadedSet set = load_split_samples(rc);
  if (set.test.empty()) throw DataError("evaluate: no samples in the test split");

  std::vector<PoseSequence> generated, references;
  std::vector<double> raw_lengths;
  std::vector<int> final_lengths;
  std::vector<int64_t> gt_frames;
  std::vector<std::string> tags;
  for (const TrainSample& s : set.test) {
    InferenceResult inf = infer_sample(
        model, s.token_ids,
        std::span<const double>(s.pose_flat.data(), static_cast<size_t>(2 * keypoints::kTotal)));
    generated.push_back(inf.pose);
    references.push_back(train_sample_pose(s));
    raw_lengths.push_back(inf.raw_length);
    final_lengths.push_back(inf.final_length);
    gt_frames.push_back(s.frames);
    tags.push_back(s.dataset_tag);
  }

  json summary;
  CsvWriter metrics((out_dir / "metrics.csv").string(), {"dataset", "metric", "value"});
  auto emit = [&](const std::string& dataset, const std::string& metric, double value) {
    metrics.row({dataset, metric, fmt_double(value)});
    summary[dataset][metric] = value;
  };

  std::vector<std::string> datasets;
  for (const std::string& tag : tags) {
    if (std::find(datasets.begin(), datasets.end(), tag) == datasets.end()) datasets.push_back(tag);
  }
  std::sort(datasets.begin(), datasets.end());
  datasets.insert(datasets.begin(), "overall");
  for (const std::string& dataset : datasets) {
    double dtw_sum = 0.0, ndtw_sum = 0.0;
    int count = 0;
    for (size_t i = 0; i < generated.size(); ++i) {
      if (dataset != "overall" && tags[i] != dataset) continue;
      dtw_sum += dtw_mje(generated[i], references[i]).distance;
      ndtw_sum += ndtw_mje(generated[i], references[i]);
      ++count;
    }
    if (count == 0) continue;
    emit(dataset, "dtw_mje", dtw_sum / count);
    emit(dataset, "ndtw_mje", ndtw_sum / count);
  }

  std::vector<double> distance_matrix;
  RankResult rank = distance_rank(generated, references,
                                  dump_distances ? &distance_matrix : nullptr);
  for (size_t k = 0; k < RankResult::kKs.size(); ++k) {
    emit("overall", "rank_pred_top" + std::to_string(RankResult::kKs[k]), rank.pred_top[k]);
    emit("overall", "rank_label_top" + std::to_string(RankResult::kKs[k]), rank.label_top[k]);
  }
  if (dump_distances) {
    CsvWriter dist_csv((out_dir / "distances.csv").string(), {"pred", "label", "dtw_mje"});
    const size_t n = generated.size();
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        dist_csv.row({std::to_string(i), std::to_string(j), fmt_double(distance_matrix[i * n + j])});
      }
    }
  }

  for (const LengthMetricsRow& row : length_metrics(raw_lengths, final_lengths, gt_frames, tags)) {
    emit(row.dataset, "length_raw_mae", row.raw_mae);
    emit(row.dataset, "length_raw_mse", row.raw_mse);
    emit(row.dataset, "length_clipped_mae", row.clipped_mae);
    emit(row.dataset, "length_clipped_mse", row.clipped_mse);
  }

  ParamCount params = count_params(model);
  emit("overall", "param_count", static_cast<double>(params.total));

  TrainConfig bench_cfg = rc.train;
  bench_cfg.t_steps = model.config.t_steps;
  bench_cfg.ffn_kind = model.config.encoder.ffn_kind;
  bench_cfg.multiscale = model.config.multiscale;
  BenchmarkResult bench = benchmark(model, set.test, bench_cfg);
  emit("overall", "seconds_per_epoch", bench.seconds_per_epoch);
  emit("overall", "inference_ms_per_batch", bench.inference_ms);
  emit("overall", "benchmark_batch_size", bench.batch_size);

  std::ofstream json_out(out_dir / "metrics.json");
  json_out << summary.dump(1) << "\n";
  std::cout << "evaluated " << generated.size() << " test samples; metrics under "
            << out_dir.string() << "\n";
  return 0;
}

int cmd_inspect_kan(const RunConfig& rc, const std::string& checkpoint_path) {
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);
  echo_config(rc, out_dir);
  auto [model, info] = load_checkpoint(checkpoint_path);
  if (model.config.encoder.ffn_kind != FfnKind::kKan) {
    throw DataError("inspect-kan: checkpoint uses the MLP feed-forward; KAN inspection needs a "
                    "KAN checkpoint");
  }

  CsvWriter importance_csv((out_dir / "importance.csv").string(),
                           {"layer", "input_dim", "importance"});
  CsvWriter curves_csv((out_dir / "response_curves.csv").string(), {"layer", "x", "y"});
  for (size_t layer = 0; layer < model.gen.blocks.size(); ++layer) {
    const KanFfnParams& ffn = model.gen.blocks[layer].kan;
    std::vector<double> importance = input_importance(ffn.layer1);
    std::vector<size_t> order(importance.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (importance[a] != importance[b]) return importance[a] > importance[b];
      return a < b;
    });
    const size_t top = std::min<size_t>(10, order.size());
    for (size_t r = 0; r < top; ++r) {
      importance_csv.row({std::to_string(layer), std::to_string(order[r]),
                          fmt_double(importance[order[r]])});
    }
    // rank-0 response curve on [-3, 3] at 0.05 resolution
    std::vector<double> xs;
    for (int i = 0; i <= 120; ++i) xs.push_back(-3.0 + 0.05 * i);
    std::vector<double> ys = response_curve(ffn, model.config.basis, 0,
                                            static_cast<int>(order[0]), xs);
    for (size_t i = 0; i < xs.size(); ++i) {
      curves_csv.row({std::to_string(layer), fmt_double(xs[i]), fmt_double(ys[i])});
    }
  }
  std::cout << "wrote importance.csv and response_curves.csv under " << out_dir.string() << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& rc) {
  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);
  echo_config(rc, out_dir);
  LoadedSet set = load_split_samples(rc);
  if (set.train.empty()) throw DataError("ablate: no samples in the train split");
  const std::vector<TrainSample>& eval_set = set.test.empty() ? set.train : set.test;

  struct Setting {
    std::string name;
    FfnKind ffn;
    bool multiscale;
    int layers;
  };
  std::vector<Setting> grid{
      {"A_mlp_single", FfnKind::kMlp, false, rc.model.encoder.n_layers_text_pose},
      {"B_mlp_multiscale", FfnKind::kMlp, true, rc.model.encoder.n_layers_text_pose},
      {"C_kan_single", FfnKind::kKan, false, rc.model.encoder.n_layers_text_pose},
      {"D_kan_multiscale", FfnKind::kKan, true, rc.model.encoder.n_layers_text_pose},
  };
  for (int depth : {4, 6, 8}) {
    grid.push_back({"depth" + std::to_string(depth) + "_kan_single", FfnKind::kKan, false, depth});
    grid.push_back(
        {"depth" + std::to_string(depth) + "_kan_multiscale", FfnKind::kKan, true, depth});
  }

  CsvWriter csv((out_dir / "ablation.csv").string(),
                {"setting", "ffn", "multiscale", "layers", "params", "dtw_mje", "ndtw_mje",
                 "train_seconds", "max_coarse_grad_norm"});
  for (const Setting& setting : grid) {
    RunConfig run = rc;
    run.model.encoder.ffn_kind = setting.ffn;
    run.model.multiscale = setting.multiscale;
    run.model.encoder.n_layers_text_pose = setting.layers;
    run.train.ffn_kind = setting.ffn;
    run.train.multiscale = setting.multiscale;

    FitResult result = fit(set.train, nullptr, run.model, run.train, run.weights);
    double train_seconds = 0.0, max_coarse_grad = 0.0;
    for (const EpochRecord& r : result.log) {
      train_seconds += r.seconds;
      max_coarse_grad = std::max(max_coarse_grad, r.coarse_grad_norm);
    }
    double dtw_sum = 0.0, ndtw_sum = 0.0;
    for (const TrainSample& s : eval_set) {
      InferenceResult inf = infer_sample(
          result.model, s.token_ids,
          std::span<const double>(s.pose_flat.data(), static_cast<size_t>(2 * keypoints::kTotal)));
      dtw_sum += dtw_mje(inf.pose, train_sample_pose(s)).distance;
      ndtw_sum += ndtw_mje(inf.pose, train_sample_pose(s));
    }
    const double n = static_cast<double>(eval_set.size());
    csv.row({setting.name, to_string(setting.ffn), setting.multiscale ? "on" : "off",
             std::to_string(setting.layers),
             std::to_string(count_params(result.model).total), fmt_double(dtw_sum / n),
             fmt_double(ndtw_sum / n), fmt_double(train_seconds), fmt_double(max_coarse_grad)});
    std::cout << setting.name << ": dtw " << dtw_sum / n << "\n";
  }
  std::cout << "ablation table at " << (out_dir / "ablation.csv").string() << "\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"HamNoSys-to-pose generation pipeline"};
  app.require_subcommand(1);

  FlagOverrides flags;
  int synth_count = 9;
  std::string checkpoint_path;
  std::string text;
  std::string first_frame_path;

  CLI::App* synth = app.add_subcommand("synth", "write a synthetic pose corpus + manifest");
  add_common_flags(synth, flags);
  synth->add_option("--count", synth_count, "number of samples");

  CLI::App* prepare = app.add_subcommand(
      "prepare", "filter, normalize and stratify a dataset from a manifest");
  add_common_flags(prepare, flags);

  CLI::App* train = app.add_subcommand("train", "train a model on a prepared dataset");
  add_common_flags(train, flags);

  CLI::App* generate = app.add_subcommand("generate", "generate pose files from notation");
  add_common_flags(generate, flags);
  generate->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  generate->add_option("--text", text, "HamNoSys string (UTF-8)");
  generate->add_option("--first-frame", first_frame_path, "pose file supplying the reference frame");

  CLI::App* evaluate = app.add_subcommand("evaluate", "run the metric suite on the test split");
  add_common_flags(evaluate, flags);
  evaluate->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();
  bool dump_distances = false;
  evaluate->add_flag("--dump-distances", dump_distances, "write the pairwise DTW matrix as CSV");

  CLI::App* inspect = app.add_subcommand("inspect-kan", "export importance and response curves");
  add_common_flags(inspect, flags);
  inspect->add_option("--checkpoint", checkpoint_path, "trained checkpoint")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "run the 2x2 grid plus the depth sweep");
  add_common_flags(ablate, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  const RunConfig rc = resolve_config(flags);
  if (synth->parsed()) return cmd_synth(rc, synth_count);
  if (prepare->parsed()) return cmd_prepare(rc);
  if (train->parsed()) return cmd_train(rc);
  if (generate->parsed()) return cmd_generate(rc, checkpoint_path, text, first_frame_path);
  if (evaluate->parsed()) return cmd_evaluate(rc, checkpoint_path, dump_distances);
  if (inspect->parsed()) return cmd_inspect_kan(rc, checkpoint_path);
  if (ablate->parsed()) return cmd_ablate(rc);
  return 1;
}

}  // namespace
}  // namespace notasign

int main(int argc, char** argv) {
  try {
    return notasign::run(argc, argv);
  } catch (const notasign::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const notasign::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const notasign::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
