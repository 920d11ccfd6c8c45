#include "notasign/model.hpp"

#include <cmath>

#include "json.hpp"
#include "notasign/error.hpp"

namespace notasign {

namespace {

using nlohmann::json;

void register_linear(Model& m, const std::string& name, LinearParams& p) {
  m.registry.emplace_back(name + ".weight", p.weight);
  m.registry.emplace_back(name + ".bias", p.bias);
}

void register_block(Model& m, const std::string& name, TransformerBlockParams& b) {
  register_linear(m, name + ".attn.wq", b.attn.wq);
  register_linear(m, name + ".attn.wk", b.attn.wk);
  register_linear(m, name + ".attn.wv", b.attn.wv);
  register_linear(m, name + ".attn.wo", b.attn.wo);
  m.registry.emplace_back(name + ".norm1.gain", b.norm1.gain);
  m.registry.emplace_back(name + ".norm1.bias", b.norm1.bias);
  m.registry.emplace_back(name + ".norm2.gain", b.norm2.gain);
  m.registry.emplace_back(name + ".norm2.bias", b.norm2.bias);
  if (b.ffn_kind == FfnKind::kMlp) {
    register_linear(m, name + ".mlp.fc1", b.mlp.fc1);
    register_linear(m, name + ".mlp.fc2", b.mlp.fc2);
  } else {
    m.registry.emplace_back(name + ".kan.layer1.spline", b.kan.layer1.spline_weights);
    if (b.kan.layer1.base_weights.defined()) {
      m.registry.emplace_back(name + ".kan.layer1.base", b.kan.layer1.base_weights);
    }
    m.registry.emplace_back(name + ".kan.layer2.spline", b.kan.layer2.spline_weights);
    if (b.kan.layer2.base_weights.defined()) {
      m.registry.emplace_back(name + ".kan.layer2.base", b.kan.layer2.base_weights);
    }
  }
}

}  // namespace

std::string model_config_to_json(const ModelConfig& c) {
  json j;
  j["d_model"] = c.encoder.d_model;
  j["n_heads"] = c.encoder.n_heads;
  j["n_layers_text"] = c.encoder.n_layers_text;
  j["n_layers_text_pose"] = c.encoder.n_layers_text_pose;
  j["ffn_kind"] = to_string(c.encoder.ffn_kind);
  j["mlp_hidden"] = c.encoder.mlp_hidden;
  j["kan_hidden"] = c.encoder.kan_hidden;
  j["max_text_len"] = c.encoder.max_positions;
  j["grid_min"] = c.basis.grid_min;
  j["grid_max"] = c.basis.grid_max;
  j["num_grid"] = c.basis.num_grid;
  j["exponent"] = c.basis.exponent;
  j["denominator"] = c.basis.denominator;
  j["use_base_branch"] = c.basis.use_base_branch;
  j["spline_init_scale"] = c.basis.spline_init_scale;
  j["l_min"] = c.bounds.l_min;
  j["l_max"] = c.bounds.l_max;
  j["dropout"] = c.dropout_rate;
  j["t_steps"] = c.t_steps;
  j["keypoints"] = c.keypoints;
  j["coarse_parts"] = c.coarse_parts;
  j["max_frame_positions"] = c.max_frame_positions;
  j["vocab_embedding_size"] = c.vocab_embedding_size;
  j["multiscale"] = c.multiscale;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model config: malformed JSON: ") + e.what());
  }
  ModelConfig c;
  c.encoder.d_model = j.value("d_model", c.encoder.d_model);
  c.encoder.n_heads = j.value("n_heads", c.encoder.n_heads);
  c.encoder.n_layers_text = j.value("n_layers_text", c.encoder.n_layers_text);
  c.encoder.n_layers_text_pose = j.value("n_layers_text_pose", c.encoder.n_layers_text_pose);
  c.encoder.ffn_kind = ffn_kind_from_string(j.value("ffn_kind", to_string(c.encoder.ffn_kind)));
  c.encoder.mlp_hidden = j.value("mlp_hidden", c.encoder.mlp_hidden);
  c.encoder.kan_hidden = j.value("kan_hidden", c.encoder.kan_hidden);
  c.encoder.max_positions = j.value("max_text_len", c.encoder.max_positions);
  c.basis.grid_min = j.value("grid_min", c.basis.grid_min);
  c.basis.grid_max = j.value("grid_max", c.basis.grid_max);
  c.basis.num_grid = j.value("num_grid", c.basis.num_grid);
  c.basis.exponent = j.value("exponent", c.basis.exponent);
  c.basis.denominator = j.value("denominator", c.basis.denominator);
  c.basis.use_base_branch = j.value("use_base_branch", c.basis.use_base_branch);
  c.basis.spline_init_scale = j.value("spline_init_scale", c.basis.spline_init_scale);
  c.bounds.l_min = j.value("l_min", c.bounds.l_min);
  c.bounds.l_max = j.value("l_max", c.bounds.l_max);
  c.dropout_rate = j.value("dropout", c.dropout_rate);
  c.t_steps = j.value("t_steps", c.t_steps);
  c.keypoints = j.value("keypoints", c.keypoints);
  c.coarse_parts = j.value("coarse_parts", c.coarse_parts);
  c.max_frame_positions = j.value("max_frame_positions", c.max_frame_positions);
  c.vocab_embedding_size = j.value("vocab_embedding_size", c.vocab_embedding_size);
  c.multiscale = j.value("multiscale", c.multiscale);
  return c;
}

std::vector<Tensor> Model::params() const {
  std::vector<Tensor> out;
  out.reserve(registry.size());
  for (const auto& [name, tensor] : registry) out.push_back(tensor);
  return out;
}

GeneratorDims Model::dims() const {
  GeneratorDims d;
  d.d_model = config.encoder.d_model;
  d.n_heads = config.encoder.n_heads;
  d.keypoints = config.keypoints;
  d.coarse_parts = config.coarse_parts;
  return d;
}

Model build_model(const ModelConfig& config, Rng& rng) {
  if (config.encoder.d_model % config.encoder.n_heads != 0) {
    throw UsageError("build_model: d_model must be divisible by n_heads");
  }
  if (!(config.bounds.l_min > 0 && config.bounds.l_min <= config.bounds.l_max)) {
    throw UsageError("build_model: length bounds must satisfy 0 < l_min <= l_max");
  }
  if (config.max_frame_positions < config.bounds.l_max) {
    throw UsageError("build_model: max_frame_positions must cover l_max");
  }
  Model m;
  m.config = config;
  m.text = make_text_encoder(config.vocab_embedding_size, config.encoder, config.basis,
                             config.dropout_rate, rng);
  GeneratorDims dims;
  dims.d_model = config.encoder.d_model;
  dims.n_heads = config.encoder.n_heads;
  dims.keypoints = config.keypoints;
  dims.coarse_parts = config.coarse_parts;
  m.gen = make_generator(dims, config.encoder, config.basis, config.max_frame_positions,
                         config.t_steps, config.dropout_rate, rng);

  m.registry.emplace_back("text.token_embedding", m.text.token_embedding);
  m.registry.emplace_back("text.position_embedding", m.text.position_embedding);
  for (size_t i = 0; i < m.text.blocks.size(); ++i) {
    register_block(m, "text.block" + std::to_string(i), m.text.blocks[i]);
  }
  register_linear(m, "text.length_head", m.text.length_head);
  register_linear(m, "gen.pose_projection", m.gen.pose_projection);
  m.registry.emplace_back("gen.pose_position_embedding", m.gen.pose_position_embedding);
  m.registry.emplace_back("gen.step_embedding", m.gen.step_embedding);
  register_linear(m, "gen.step_fc1", m.gen.step_fc1);
  register_linear(m, "gen.step_fc2", m.gen.step_fc2);
  for (size_t i = 0; i < m.gen.blocks.size(); ++i) {
    register_block(m, "gen.block" + std::to_string(i), m.gen.blocks[i]);
  }
  register_linear(m, "gen.coarse_fc1", m.gen.coarse_fc1);
  register_linear(m, "gen.coarse_fc2", m.gen.coarse_fc2);
  register_linear(m, "gen.fine_fc1", m.gen.fine_fc1);
  register_linear(m, "gen.fine_fc2", m.gen.fine_fc2);
  return m;
}

Model clone_model(const Model& model) {
  Rng dummy(0);
  Model copy = build_model(model.config, dummy);
  if (copy.registry.size() != model.registry.size()) {
    throw NumericError("clone_model: registry size mismatch");
  }
  for (size_t i = 0; i < copy.registry.size(); ++i) {
    std::span<const double> src = model.registry[i].second.data();
    std::span<double> dst = copy.registry[i].second.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return copy;
}

TextForward text_forward(const Model& model, const std::vector<int>& token_ids,
                         const std::vector<uint8_t>& pad_mask, bool training, Rng& rng) {
  TextForward out;
  out.encoded = text_encoder_forward(token_ids, pad_mask, model.text, model.config.encoder,
                                     model.config.basis, training, rng);
  out.raw_length = predict_length(out.encoded, pad_mask, model.text.length_head);
  return out;
}

InferenceResult infer_sample(const Model& model, const std::vector<int>& token_ids,
                             std::span<const double> first_frame) {
  if (static_cast<int>(first_frame.size()) != model.config.keypoints * 2) {
    throw std::invalid_argument("infer_sample: first frame must have " +
                                std::to_string(model.config.keypoints * 2) + " coordinates");
  }
  Rng rng(0);  // inference is dropout- and noise-free; never drawn from
  const std::vector<uint8_t> pad_mask(token_ids.size(), 0);
  TextForward text = text_forward(model, token_ids, pad_mask, false, rng);

  InferenceResult result;
  result.raw_length = text.raw_length.item();
  result.final_length = finalize_length(result.raw_length, model.config.bounds);

  RefinementSchedule schedule = build_schedule(model.config.t_steps);
  RefineOptions options;
  options.mode = RefineMode::kInfer;
  options.multiscale = model.config.multiscale;
  options.training = false;
  RefineResult refined = refine(first_frame, result.final_length, text.encoded, pad_mask, schedule,
                                model.gen, model.dims(), model.config.basis, options, nullptr,
                                nullptr);

  result.pose = PoseSequence::empty(result.final_length);
  std::span<const double> coords = refined.s0.data();
  std::copy(coords.begin(), coords.end(), result.pose.coords.begin());
  std::fill(result.pose.confidence.begin(), result.pose.confidence.end(), 1.0);
  return result;
}

}  // namespace notasign
