#include "captime/config.hpp"

#include <stdexcept>

#include "captime/series_prep.hpp"

namespace captime {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kNoTsEncoder: return "a1";
    case Ablation::kNoTextAbstraction: return "a2";
    case Ablation::kNoContextGate: return "a3";
    case Ablation::kPointForecast: return "a4";
    case Ablation::kFinetuneBackbone: return "b1";
    case Ablation::kRandomBackbone: return "b2";
    case Ablation::kNoBackbone: return "b3";
    case Ablation::kAttentionBackbone: return "b4";
  }
  return "none";
}

std::optional<Ablation> parse_ablation(std::string_view s) {
  for (Ablation a : {Ablation::kNone, Ablation::kNoTsEncoder, Ablation::kNoTextAbstraction, Ablation::kNoContextGate,
                     Ablation::kPointForecast, Ablation::kFinetuneBackbone, Ablation::kRandomBackbone,
                     Ablation::kNoBackbone, Ablation::kAttentionBackbone}) {
    if (ablation_name(a) == s) return a;
  }
  return std::nullopt;
}

void ModelConfig::validate() const {
  if (ablation == Ablation::kFinetuneBackbone) {
    throw std::invalid_argument("ablation b1 (trainable backbone) is unsupported");
  }
  if (ablation == Ablation::kAttentionBackbone) {
    throw std::invalid_argument("ablation b4 (attention in place of the backbone) is unsupported");
  }
  if (patch_len == 0) throw std::invalid_argument("patch_len must be >= 1");
  if (lookback < patch_len) throw std::invalid_argument("lookback must be >= patch_len");
  if (max_horizon == 0) throw std::invalid_argument("max_horizon must be >= 1");
  if (backbone.heads == 0 || backbone.width % backbone.heads != 0) {
    throw std::invalid_argument("backbone width must be divisible by heads");
  }
  if (backbone.layers == 0 && ablation != Ablation::kNoBackbone) {
    throw std::invalid_argument("backbone needs at least one layer");
  }
  const std::size_t needed = patch_count(lookback, patch_len) + (max_horizon + patch_len - 1) / patch_len;
  if (backbone.max_positions < needed) {
    throw std::invalid_argument("max_positions " + std::to_string(backbone.max_positions) + " < " +
                                std::to_string(needed) + " tokens needed for lookback + max_horizon");
  }
  if (backbone.vocab < 4) throw std::invalid_argument("vocabulary must hold at least the 4 special tokens");
  if (experts == 0 || top_k == 0 || top_k > experts) throw std::invalid_argument("need 1 <= top_k <= experts");
  if (encoder_width == 0) throw std::invalid_argument("encoder_width must be >= 1");
  if (text_max_len == 0) throw std::invalid_argument("text_max_len must be >= 1");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (epochs == 0 && max_steps == 0) throw std::invalid_argument("need epochs or max_steps");
  if (alpha < 0.0) throw std::invalid_argument("alpha must be >= 0");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("grad_clip must be > 0");
  if (!(pretrain_lr > 0.0)) throw std::invalid_argument("pretrain_lr must be > 0");
  if (!(mask_ratio > 0.0 && mask_ratio < 1.0)) {
    throw std::invalid_argument("mask_ratio must lie in (0, 1); a zero ratio leaves nothing to reconstruct");
  }
}

}  // namespace captime
