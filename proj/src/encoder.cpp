#include "notasign/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "notasign/error.hpp"

namespace notasign {

std::string to_string(FfnKind kind) { return kind == FfnKind::kMlp ? "mlp" : "kan"; }

FfnKind ffn_kind_from_string(const std::string& name) {
  if (name == "mlp") return FfnKind::kMlp;
  if (name == "kan") return FfnKind::kKan;
  throw UsageError("ffn kind must be 'mlp' or 'kan', got '" + name + "'");
}

LinearParams make_linear(int in, int out, Rng& rng) {
  const double std = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(static_cast<size_t>(in) * out);
  for (double& v : w) v = rng.normal(0.0, std);
  LinearParams p;
  p.weight = Tensor::from_data({in, out}, std::move(w), true);
  p.bias = Tensor::zeros({out}, true);
  return p;
}

Tensor linear(const Tensor& x, const LinearParams& p) {
  return add(matmul(x, p.weight), p.bias);
}

LayerNormParams make_layer_norm(int d) {
  LayerNormParams p;
  p.gain = Tensor::full({d}, 1.0, true);
  p.bias = Tensor::zeros({d}, true);
  return p;
}

TransformerBlockParams make_transformer_block(int d, int n_heads, FfnKind kind, int mlp_hidden,
                                              int kan_hidden, const KanBasisConfig& basis,
                                              double dropout_rate, Rng& rng) {
  if (d % n_heads != 0) {
    throw UsageError("transformer block: d_model " + std::to_string(d) +
                     " not divisible by n_heads " + std::to_string(n_heads));
  }
  TransformerBlockParams p;
  p.attn.wq = make_linear(d, d, rng);
  p.attn.wk = make_linear(d, d, rng);
  p.attn.wv = make_linear(d, d, rng);
  p.attn.wo = make_linear(d, d, rng);
  p.norm1 = make_layer_norm(d);
  p.norm2 = make_layer_norm(d);
  p.ffn_kind = kind;
  if (kind == FfnKind::kMlp) {
    p.mlp.fc1 = make_linear(d, mlp_hidden, rng);
    p.mlp.fc2 = make_linear(mlp_hidden, d, rng);
  } else {
    p.kan = make_kan_ffn(d, kan_hidden, basis, dropout_rate, rng);
  }
  return p;
}

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p,
                            const std::vector<uint8_t>& key_padding, int n_heads) {
  const int64_t d = x.dim(1);
  const int64_t head_dim = d / n_heads;
  Tensor q = linear(x, p.wq);
  Tensor k = linear(x, p.wk);
  Tensor v = linear(x, p.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<Tensor> heads;
  heads.reserve(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = slice(q, 1, h * head_dim, head_dim);
    Tensor kh = slice(k, 1, h * head_dim, head_dim);
    Tensor vh = slice(v, 1, h * head_dim, head_dim);
    Tensor scores = scale(matmul(qh, transpose2d(kh)), inv_sqrt);
    Tensor weights = softmax_masked(scores, key_padding);
    heads.push_back(matmul(weights, vh));
  }
  Tensor context = concat(heads, 1);
  return linear(context, p.wo);
}

Tensor transformer_block_forward(const Tensor& x, const std::vector<uint8_t>& key_padding,
                                 const TransformerBlockParams& p, const KanBasisConfig& basis,
                                 int n_heads, bool training, Rng& rng,
                                 const std::string& layer_name) {
  Tensor attn = multi_head_attention(x, p.attn, key_padding, n_heads);
  Tensor h = layer_norm(add(x, attn), p.norm1.gain, p.norm1.bias);
  Tensor ffn;
  if (p.ffn_kind == FfnKind::kMlp) {
    ffn = linear(silu(linear(h, p.mlp.fc1)), p.mlp.fc2);
  } else {
    ffn = kan_ffn_forward(h, p.kan, basis, training, rng);
  }
  Tensor out = layer_norm(add(h, ffn), p.norm2.gain, p.norm2.bias);
  for (double v : out.data()) {
    if (!std::isfinite(v)) {
      throw NumericError("transformer block '" + layer_name + "': non-finite activation");
    }
  }
  return out;
}

TextEncoderParams make_text_encoder(int vocab_size, const EncoderConfig& cfg,
                                    const KanBasisConfig& basis, double dropout_rate, Rng& rng) {
  TextEncoderParams p;
  std::vector<double> tok(static_cast<size_t>(vocab_size) * cfg.d_model);
  for (double& v : tok) v = rng.normal(0.0, 0.02);
  p.token_embedding = Tensor::from_data({vocab_size, cfg.d_model}, std::move(tok), true);
  std::vector<double> pos(static_cast<size_t>(cfg.max_positions) * cfg.d_model);
  for (double& v : pos) v = rng.normal(0.0, 0.02);
  p.position_embedding = Tensor::from_data({cfg.max_positions, cfg.d_model}, std::move(pos), true);
  p.blocks.reserve(static_cast<size_t>(cfg.n_layers_text));
  for (int i = 0; i < cfg.n_layers_text; ++i) {
    // Text blocks always use the MLP feed-forward; the swappable kind applies
    // to the text-pose encoder.
    p.blocks.push_back(make_transformer_block(cfg.d_model, cfg.n_heads, FfnKind::kMlp,
                                              cfg.mlp_hidden, cfg.kan_hidden, basis, dropout_rate,
                                              rng));
  }
  p.length_head = make_linear(cfg.d_model, 1, rng);
  return p;
}

Tensor embed_tokens_row(const std::vector<int>& ids, const TextEncoderParams& p) {
  const int64_t max_positions = p.position_embedding.dim(0);
  if (static_cast<int64_t>(ids.size()) > max_positions) {
    throw DataError("embed_tokens: sequence length " + std::to_string(ids.size()) +
                    " exceeds max positions " + std::to_string(max_positions));
  }
  Tensor tok = gather_rows(p.token_embedding, ids);
  Tensor pos = slice(p.position_embedding, 0, 0, static_cast<int64_t>(ids.size()));
  return add(tok, pos);
}

std::vector<Tensor> embed_tokens(const TokenBatch& batch, const TextEncoderParams& p) {
  std::vector<Tensor> out;
  out.reserve(static_cast<size_t>(batch.batch));
  for (int64_t r = 0; r < batch.batch; ++r) out.push_back(embed_tokens_row(batch.row_ids(r), p));
  return out;
}

Tensor text_encoder_forward(const std::vector<int>& ids, const std::vector<uint8_t>& pad_mask,
                            const TextEncoderParams& p, const EncoderConfig& cfg,
                            const KanBasisConfig& basis, bool training, Rng& rng) {
  if (ids.size() != pad_mask.size()) {
    throw std::invalid_argument("text_encoder_forward: ids and mask lengths differ");
  }
  Tensor h = embed_tokens_row(ids, p);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    h = transformer_block_forward(h, pad_mask, p.blocks[i], basis, cfg.n_heads, training, rng,
                                  "text." + std::to_string(i));
  }
  return h;
}

Tensor predict_length(const Tensor& encoded, const std::vector<uint8_t>& pad_mask,
                      const LinearParams& length_head) {
  const int64_t len = encoded.dim(0);
  if (static_cast<int64_t>(pad_mask.size()) != len) {
    throw std::invalid_argument("predict_length: mask length does not match sequence length");
  }
  int64_t valid = 0;
  std::vector<double> weights(static_cast<size_t>(len), 0.0);
  for (int64_t i = 0; i < len; ++i) {
    if (!pad_mask[static_cast<size_t>(i)]) {
      weights[static_cast<size_t>(i)] = 1.0;
      ++valid;
    }
  }
  if (valid == 0) throw DataError("predict_length: every position is padding");
  for (double& w : weights) w /= static_cast<double>(valid);
  Tensor per_token = linear(encoded, length_head);  // (len, 1)
  Tensor weight_row = Tensor::from_data({1, len}, std::move(weights));
  return reshape(matmul(weight_row, per_token), {1});
}

int finalize_length(double raw, const LengthBounds& bounds) {
  if (!std::isfinite(raw)) throw NumericError("finalize_length: non-finite prediction");
  const double rounded = std::round(raw);  // half away from zero
  const double clamped = std::clamp(rounded, static_cast<double>(bounds.l_min),
                                    static_cast<double>(bounds.l_max));
  return static_cast<int>(clamped);
}

}  // namespace notasign
