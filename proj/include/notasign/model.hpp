#pragma once

#include <string>
#include <utility>
#include <vector>

#include "notasign/data.hpp"
#include "notasign/encoder.hpp"
#include "notasign/generator.hpp"

namespace notasign {

struct ModelConfig {
  EncoderConfig encoder;
  KanBasisConfig basis;
  LengthBounds bounds;
  double dropout_rate = 0.1;
  int t_steps = 10;
  int keypoints = 137;
  int coarse_parts = 25;
  int max_frame_positions = 200;  // must cover bounds.l_max
  int vocab_embedding_size = 212;
  bool multiscale = true;
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& json_text);

// Full model: text encoder + pose generator, plus a named registry over every
// learnable tensor in construction order. The registry order is the
// checkpoint layout and the optimizer layout.
struct Model {
  ModelConfig config;
  TextEncoderParams text;
  GeneratorParams gen;
  std::vector<std::pair<std::string, Tensor>> registry;

  std::vector<Tensor> params() const;
  GeneratorDims dims() const;
};

Model build_model(const ModelConfig& config, Rng& rng);

// Deep copy; parameters get fresh buffers, the registry points at them.
Model clone_model(const Model& model);

// Inference for one sample: predict the length from the text, then refine
// from the reference frame. Deterministic given the parameters.
struct InferenceResult {
  PoseSequence pose;      // generated sequence, confidence 1.0
  double raw_length = 0;  // pre-round, pre-clip length prediction
  int final_length = 0;
};

InferenceResult infer_sample(const Model& model, const std::vector<int>& token_ids,
                             std::span<const double> first_frame);

// Shared by training and inference: encode text and predict the raw length.
struct TextForward {
  Tensor encoded;     // (len, d)
  Tensor raw_length;  // scalar
};

TextForward text_forward(const Model& model, const std::vector<int>& token_ids,
                         const std::vector<uint8_t>& pad_mask, bool training, Rng& rng);

}  // namespace notasign
