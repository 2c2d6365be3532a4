#pragma once

#include <span>
#include <vector>

#include "dodt/autodiff/tensor.hpp"
#include "dodt/nn/layers.hpp"
#include "dodt/replay/buffer.hpp"

namespace dodt::odt {

using ad::Rng;
using ad::Tensor;

struct TransformerConfig {
  std::size_t obs_dim = 0;
  std::size_t act_dim = 0;
  std::size_t context = 20;  // K
  std::size_t layers = 3;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t max_timestep = 1024;
  double rtg_scale = 1.0;  // RTG tokens are embedded as g / rtg_scale
};

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

// Diagonal Gaussian over normalized actions, one row per predicted position.
struct ActionDistribution {
  Tensor mean;     // [N, act_dim], tanh-bounded
  Tensor log_std;  // [N, act_dim], in [kMinLogStd, kMaxLogStd]
};

// Causal decoder over interleaved tokens (g_1, s_1, a_1, g_2, ...). Each token
// is a per-modality linear embedding plus a learned timestep embedding. The
// action at step t is read from the output at the s_t token. Padding positions
// (left of valid_len) are excluded from attention; every token may attend to
// itself so fully padded rows stay finite.
class DecisionTransformer {
 public:
  DecisionTransformer(const TransformerConfig& config, Rng& rng);

  // All sequences must share one context length <= config().context. Rows of
  // the result are ordered b * context + i.
  ActionDistribution forward(std::span<const replay::TokenSequence> batch) const;
  // Distribution at the last position of a single sequence, [1, act_dim].
  ActionDistribution predict_last(const replay::TokenSequence& seq) const;

  const TransformerConfig& config() const { return config_; }
  nn::ParamList parameters() const;

 private:
  struct Block {
    nn::LayerNorm attn_norm;
    nn::Linear qkv;
    nn::Linear proj;
    nn::LayerNorm ff_norm;
    nn::Linear ff_in;
    nn::Linear ff_out;
  };

  Tensor attention(const Block& block, const Tensor& x, const Tensor& mask) const;

  TransformerConfig config_;
  nn::Linear embed_rtg_;
  nn::Linear embed_obs_;
  nn::Linear embed_act_;
  Tensor embed_time_;
  nn::LayerNorm embed_norm_;
  std::vector<Block> blocks_;
  nn::LayerNorm final_norm_;
  nn::Linear head_;
};

// Additive attention mask [B, 3K, 3K]: 0 where query p may attend key q
// (q <= p and q is not padding, or q == p), -inf elsewhere.
Tensor attention_mask(std::span<const replay::TokenSequence> batch);

}  // namespace dodt::odt
