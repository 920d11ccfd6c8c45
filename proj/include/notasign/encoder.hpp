#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "notasign/hamnosys.hpp"
#include "notasign/kan.hpp"
#include "notasign/rng.hpp"
#include "notasign/tensor.hpp"

namespace notasign {

enum class FfnKind { kMlp, kKan };

std::string to_string(FfnKind kind);
FfnKind ffn_kind_from_string(const std::string& name);

struct EncoderConfig {
  int d_model = 128;
  int n_heads = 4;
  int n_layers_text = 2;
  int n_layers_text_pose = 4;
  FfnKind ffn_kind = FfnKind::kKan;  // text-pose encoder only; text blocks stay MLP
  int mlp_hidden = 2048;
  int kan_hidden = 64;
  int max_positions = 64;  // tokens, including BOS
};

struct LengthBounds {
  int l_min = 20;
  int l_max = 200;
};

struct LinearParams {
  Tensor weight;  // (in, out)
  Tensor bias;    // (out)
};

LinearParams make_linear(int in, int out, Rng& rng);
Tensor linear(const Tensor& x, const LinearParams& p);

struct LayerNormParams {
  Tensor gain;
  Tensor bias;
};

LayerNormParams make_layer_norm(int d);

struct AttentionParams {
  LinearParams wq, wk, wv, wo;
};

struct MlpFfnParams {
  LinearParams fc1, fc2;
};

// Post-norm block: x = LN(x + Attn(x)); x = LN(x + FFN(x)). Keys flagged in
// key_padding receive exactly zero attention weight.
struct TransformerBlockParams {
  AttentionParams attn;
  LayerNormParams norm1, norm2;
  FfnKind ffn_kind = FfnKind::kMlp;
  MlpFfnParams mlp;
  KanFfnParams kan;
};

TransformerBlockParams make_transformer_block(int d, int n_heads, FfnKind kind, int mlp_hidden,
                                              int kan_hidden, const KanBasisConfig& basis,
                                              double dropout_rate, Rng& rng);

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p,
                            const std::vector<uint8_t>& key_padding, int n_heads);

Tensor transformer_block_forward(const Tensor& x, const std::vector<uint8_t>& key_padding,
                                 const TransformerBlockParams& p, const KanBasisConfig& basis,
                                 int n_heads, bool training, Rng& rng,
                                 const std::string& layer_name);

struct TextEncoderParams {
  Tensor token_embedding;     // (vocab, d)
  Tensor position_embedding;  // (max_positions, d)
  std::vector<TransformerBlockParams> blocks;
  LinearParams length_head;  // d -> 1
};

TextEncoderParams make_text_encoder(int vocab_size, const EncoderConfig& cfg,
                                    const KanBasisConfig& basis, double dropout_rate, Rng& rng);

// Token embedding + learnable positional embedding for one batch row. PAD
// positions are embedded too; masking happens in attention.
Tensor embed_tokens_row(const std::vector<int>& ids, const TextEncoderParams& p);
// Whole batch, one (len, d) matrix per row.
std::vector<Tensor> embed_tokens(const TokenBatch& batch, const TextEncoderParams& p);

// Full text encoder for one sequence; returns contextual embeddings (len, d).
Tensor text_encoder_forward(const std::vector<int>& ids, const std::vector<uint8_t>& pad_mask,
                            const TextEncoderParams& p, const EncoderConfig& cfg,
                            const KanBasisConfig& basis, bool training, Rng& rng);

// Per-token projection to a scalar, averaged over non-PAD positions.
Tensor predict_length(const Tensor& encoded, const std::vector<uint8_t>& pad_mask,
                      const LinearParams& length_head);

// Round half away from zero, then clamp to the valid frame range.
int finalize_length(double raw, const LengthBounds& bounds);

}  // namespace notasign
