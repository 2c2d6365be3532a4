#include "dodt/odt/transformer.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "dodt/autodiff/ops.hpp"

namespace dodt::odt {

using namespace ad;

DecisionTransformer::DecisionTransformer(const TransformerConfig& config, Rng& rng)
    : config_(config) {
  const std::size_t w = config_.width;
  if (config_.obs_dim == 0 || config_.act_dim == 0 || config_.context == 0 ||
      config_.layers == 0 || config_.heads == 0 || w % config_.heads != 0 ||
      config_.max_timestep == 0 || !(config_.rtg_scale > 0.0)) {
    throw std::invalid_argument("DecisionTransformer: invalid configuration");
  }
  embed_rtg_ = nn::Linear(1, w, rng, "embed.rtg");
  embed_obs_ = nn::Linear(config_.obs_dim, w, rng, "embed.obs");
  embed_act_ = nn::Linear(config_.act_dim, w, rng, "embed.act");
  embed_time_ = Tensor::randn({config_.max_timestep, w}, rng, 0.02, true);
  embed_time_.set_name("embed.time");
  embed_norm_ = nn::LayerNorm(w, "embed.norm");
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::string p = "block" + std::to_string(l);
    blocks_.push_back({nn::LayerNorm(w, p + ".attn_norm"), nn::Linear(w, 3 * w, rng, p + ".qkv"),
                       nn::Linear(w, w, rng, p + ".proj"), nn::LayerNorm(w, p + ".ff_norm"),
                       nn::Linear(w, 4 * w, rng, p + ".ff_in"),
                       nn::Linear(4 * w, w, rng, p + ".ff_out")});
  }
  final_norm_ = nn::LayerNorm(w, "final_norm");
  head_ = nn::Linear(w, 2 * config_.act_dim, rng, "head");
}

Tensor attention_mask(std::span<const replay::TokenSequence> batch) {
  const std::size_t k = batch.front().context();
  const std::size_t t = 3 * k;
  std::vector<double> m(batch.size() * t * t, -std::numeric_limits<double>::infinity());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t first = 3 * batch[b].pad();
    double* rows = m.data() + b * t * t;
    for (std::size_t p = 0; p < t; ++p) {
      for (std::size_t q = first; q <= p; ++q) rows[p * t + q] = 0.0;
      rows[p * t + p] = 0.0;
    }
  }
  return Tensor({batch.size(), t, t}, std::move(m));
}

Tensor DecisionTransformer::attention(const Block& block, const Tensor& x,
                                      const Tensor& mask) const {
  const std::size_t w = config_.width;
  const std::size_t dh = w / config_.heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const Tensor qkv = block.qkv(block.attn_norm(x));
  std::vector<Tensor> heads;
  heads.reserve(config_.heads);
  for (std::size_t h = 0; h < config_.heads; ++h) {
    const Tensor q = slice(qkv, 2, h * dh, dh);
    const Tensor k = slice(qkv, 2, w + h * dh, dh);
    const Tensor v = slice(qkv, 2, 2 * w + h * dh, dh);
    const Tensor weights = softmax(matmul(q, transpose(k)) * inv_sqrt + mask);
    heads.push_back(matmul(weights, v));
  }
  return block.proj(concat(heads, 2));
}

ActionDistribution DecisionTransformer::forward(
    std::span<const replay::TokenSequence> batch) const {
  if (batch.empty()) throw std::invalid_argument("DecisionTransformer: empty batch");
  const std::size_t k = batch.front().context();
  if (k > config_.context) {
    throw std::invalid_argument("DecisionTransformer: context " + std::to_string(k) +
                                " exceeds K = " + std::to_string(config_.context));
  }
  const std::size_t nb = batch.size();
  const std::size_t od = config_.obs_dim, adim = config_.act_dim, w = config_.width;
  std::vector<double> g(nb * k), o(nb * k * od), a(nb * k * adim);
  std::vector<std::size_t> ts(nb * k);
  for (std::size_t b = 0; b < nb; ++b) {
    const auto& s = batch[b];
    s.validate();
    if (s.context() != k) {
      throw std::invalid_argument("DecisionTransformer: mixed context lengths in batch");
    }
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t row = b * k + i;
      if (s.observations[i].size() != od || s.actions[i].size() != adim) {
        throw std::invalid_argument("DecisionTransformer: token dims do not match the model");
      }
      if (s.timesteps[i] >= config_.max_timestep) {
        throw std::invalid_argument("DecisionTransformer: timestep " +
                                    std::to_string(s.timesteps[i]) + " >= max_timestep");
      }
      g[row] = s.rtg[i] / config_.rtg_scale;
      std::copy(s.observations[i].begin(), s.observations[i].end(), o.begin() + row * od);
      std::copy(s.actions[i].begin(), s.actions[i].end(), a.begin() + row * adim);
      ts[row] = s.timesteps[i];
    }
  }
  const Tensor time = reshape(gather_rows(embed_time_, ts), {nb, k, w});
  const Tensor parts[] = {embed_rtg_(Tensor({nb, k, 1}, std::move(g))) + time,
                          embed_obs_(Tensor({nb, k, od}, std::move(o))) + time,
                          embed_act_(Tensor({nb, k, adim}, std::move(a))) + time};
  Tensor x = embed_norm_(reshape(concat(parts, 2), {nb, 3 * k, w}));

  const Tensor mask = attention_mask(batch);
  for (const auto& block : blocks_) {
    x = x + attention(block, x, mask);
    x = x + block.ff_out(relu(block.ff_in(block.ff_norm(x))));
  }
  x = final_norm_(x);

  std::vector<std::size_t> state_rows(nb * k);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t i = 0; i < k; ++i) state_rows[b * k + i] = b * 3 * k + 3 * i + 1;
  }
  const Tensor out = head_(gather_rows(reshape(x, {nb * 3 * k, w}), state_rows));
  const double half_range = 0.5 * (kMaxLogStd - kMinLogStd);
  return {tanh(slice(out, 1, 0, adim)),
          add_scalar(add_scalar(tanh(slice(out, 1, adim, adim)), 1.0) * half_range,
                     kMinLogStd)};
}

ActionDistribution DecisionTransformer::predict_last(const replay::TokenSequence& seq) const {
  const ActionDistribution d = forward(std::span(&seq, 1));
  const std::size_t last = seq.context() - 1;
  return {slice(d.mean, 0, last, 1), slice(d.log_std, 0, last, 1)};
}

nn::ParamList DecisionTransformer::parameters() const {
  nn::ParamList out;
  embed_rtg_.collect(out);
  embed_obs_.collect(out);
  embed_act_.collect(out);
  out.push_back({embed_time_.name(), embed_time_});
  embed_norm_.collect(out);
  for (const auto& b : blocks_) {
    b.attn_norm.collect(out);
    b.qkv.collect(out);
    b.proj.collect(out);
    b.ff_norm.collect(out);
    b.ff_in.collect(out);
    b.ff_out.collect(out);
  }
  final_norm_.collect(out);
  head_.collect(out);
  return out;
}

}  // namespace dodt::odt
