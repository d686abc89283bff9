#include "captime/ts_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "captime/optim.hpp"

namespace captime::ts_encoder {

namespace {

std::string block(std::size_t b) { return "encoder.block" + std::to_string(b); }

std::size_t max_tokens(const ModelConfig& cfg) { return cfg.backbone.max_positions; }

Tensor lower_triangle(std::size_t n) {
  Tensor t = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) t(i, j) = 1.0;
  }
  return t;
}

void add_mixer(ParameterStore& store, const ModelConfig& cfg, bool trainable, Rng& rng) {
  const std::size_t d = cfg.encoder_width;
  const std::size_t n = max_tokens(cfg);
  add_linear(store, "encoder.embed", cfg.patch_len, d, 1.0 / std::sqrt(static_cast<double>(cfg.patch_len)),
             trainable, rng);
  for (std::size_t b = 0; b < cfg.encoder_blocks; ++b) {
    const std::string p = block(b);
    add_layer_norm(store, p + ".token_ln", d, trainable);
    store.add(p + ".token_mix.weight", normal_tensor(n, n, 0.1, rng), trainable);
    store.add(p + ".token_mix.bias", Tensor::matrix(n, 1), trainable);
    add_layer_norm(store, p + ".channel_ln", d, trainable);
    add_linear(store, p + ".channel_fc1", d, 2 * d, 1.0 / std::sqrt(static_cast<double>(d)), trainable, rng);
    add_linear(store, p + ".channel_fc2", 2 * d, d, 1.0 / std::sqrt(static_cast<double>(2 * d)), trainable, rng);
  }
  add_layer_norm(store, "encoder.ln_f", d, trainable);
}

}  // namespace

void init(ParameterStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t dm = cfg.d_model();
  if (cfg.ablation == Ablation::kNoTsEncoder) {
    add_linear(store, "encoder.mlp.fc1", cfg.patch_len, dm, 1.0 / std::sqrt(static_cast<double>(cfg.patch_len)), true,
               rng);
    add_linear(store, "encoder.mlp.fc2", dm, dm, 1.0 / std::sqrt(static_cast<double>(dm)), true, rng);
    return;
  }
  add_mixer(store, cfg, cfg.finetune_encoder, rng);
  add_linear(store, "connector", cfg.encoder_width, dm, 1.0 / std::sqrt(static_cast<double>(cfg.encoder_width)), true,
             rng);
}

namespace {

Var mixer_blocks(const Binder& b, const ModelConfig& cfg, Var h) {
  const std::size_t n = h.rows();
  if (n > max_tokens(cfg)) {
    throw std::length_error("encoder: " + std::to_string(n) + " patches exceed max_positions " +
                            std::to_string(max_tokens(cfg)));
  }
  Graph& g = b.graph();
  Var mask = g.constant(lower_triangle(n));
  for (std::size_t k = 0; k < cfg.encoder_blocks; ++k) {
    const std::string p = block(k);
    Var u = layer_norm(b, p + ".token_ln", h);
    Var w = mul(slice_cols(slice_rows(b(p + ".token_mix.weight"), 0, n), 0, n), mask);
    Var bias = slice_rows(b(p + ".token_mix.bias"), 0, n);
    h = add(h, gelu(add(matmul(w, u), bias)));
    Var c = layer_norm(b, p + ".channel_ln", h);
    h = add(h, linear(b, p + ".channel_fc2", gelu(linear(b, p + ".channel_fc1", c))));
  }
  return layer_norm(b, "encoder.ln_f", h);
}

}  // namespace

Var mixer(const Binder& b, const ModelConfig& cfg, Var patches) {
  if (patches.cols() != cfg.patch_len) {
    throw ShapeError("encoder: patch length " + std::to_string(patches.cols()) + " != " +
                     std::to_string(cfg.patch_len));
  }
  return mixer_blocks(b, cfg, linear(b, "encoder.embed", patches));
}

Var encode(const Binder& b, const ModelConfig& cfg, Var patches) {
  if (cfg.ablation == Ablation::kNoTsEncoder) {
    if (patches.cols() != cfg.patch_len) throw ShapeError("encoder: patch length mismatch");
    return linear(b, "encoder.mlp.fc2", gelu(linear(b, "encoder.mlp.fc1", patches)));
  }
  return linear(b, "connector", mixer(b, cfg, patches));
}

PretrainResult pretrain(ParameterStore& store, const ModelConfig& cfg, const TrainConfig& tcfg,
                        const std::vector<PatchSet>& corpus) {
  if (cfg.ablation == Ablation::kNoTsEncoder) throw std::invalid_argument("pretrain: no encoder under ablation a1");
  if (!(tcfg.mask_ratio > 0.0 && tcfg.mask_ratio < 1.0)) {
    throw std::invalid_argument("pretrain: mask_ratio must lie in (0, 1); masking nothing leaves an empty loss");
  }
  if (corpus.empty()) throw std::invalid_argument("pretrain: corpus smaller than one window");

  const std::size_t d = cfg.encoder_width;
  Rng rng(tcfg.seed ^ 0x9e3779b97f4a7c15ULL);
  store.add("pretrain.mask", normal_tensor(1, d, 0.02, rng), true);
  add_linear(store, "pretrain.head", d, cfg.patch_len, 1.0 / std::sqrt(static_cast<double>(d)), true, rng);

  // Encoder tensors are made trainable for this stage only.
  std::vector<std::pair<Parameter*, bool>> saved;
  for (auto& [name, p] : store) {
    if (name.starts_with("encoder.embed.") || name.starts_with("encoder.block") || name.starts_with("encoder.ln_f.")) {
      saved.emplace_back(&p, p.trainable);
      p.trainable = true;
    }
  }
  std::vector<Parameter*> params;
  for (auto& [name, p] : store) {
    if (name.starts_with("pretrain.") || name.starts_with("encoder.embed.") || name.starts_with("encoder.block") ||
        name.starts_with("encoder.ln_f.")) {
      params.push_back(&p);
    }
  }

  Adam opt(tcfg.pretrain_lr, tcfg.beta1, tcfg.beta2, tcfg.eps);
  PretrainResult result;
  const std::size_t batch = std::min(tcfg.batch_size, corpus.size());
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  for (std::size_t step = 0; step < tcfg.pretrain_steps; ++step) {
    store.zero_grad();
    Graph g;
    Binder b(g, store);
    std::vector<Var> terms;
    for (std::size_t s = 0; s < batch; ++s) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const PatchSet& ps = corpus[order[cursor++]];
      const std::size_t n = ps.count();
      const std::size_t masked = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(tcfg.mask_ratio * n)));
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      Tensor keep = Tensor::matrix(n, 1, 1.0);
      Tensor hit = Tensor::matrix(n, 1, 0.0);
      for (std::size_t k = 0; k < std::min(masked, n); ++k) {
        keep(idx[k], 0) = 0.0;
        hit(idx[k], 0) = 1.0;
      }
      Var x = g.constant(ps.patches);
      Var h0 = linear(b, "encoder.embed", x);
      Var hm = add(mul(h0, g.constant(keep)), matmul(g.constant(hit), b("pretrain.mask")));
      Var pred = linear(b, "pretrain.head", mixer_blocks(b, cfg, hm));
      Var err = mul(square(sub(pred, x)), g.constant(hit));
      terms.push_back(scale(reduce_sum(err), 1.0 / static_cast<double>(std::min(masked, n) * cfg.patch_len)));
    }
    Var loss = terms.front();
    for (std::size_t k = 1; k < terms.size(); ++k) loss = add(loss, terms[k]);
    loss = scale(loss, 1.0 / static_cast<double>(terms.size()));
    result.losses.push_back(loss.value().item());
    g.backward(loss);
    clip_grad_norm(params, tcfg.grad_clip);
    opt.step(params);
  }

  for (auto& [p, t] : saved) p->trainable = t;
  for (const auto& name : store.names()) {
    if (name.starts_with("pretrain.")) store.erase(name);
  }
  return result;
}

}  // namespace captime::ts_encoder
