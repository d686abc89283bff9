#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace captime {

/// Structural model variants. b1 (trainable backbone) and b4 (attention
/// replacement) are recognised but rejected as unsupported.
enum class Ablation {
  kNone,
  kNoTsEncoder,          // a1: trainable MLP replaces the pretrained encoder
  kNoTextAbstraction,    // a2: E = T, gate falls back to Z
  kNoContextGate,        // a3: gate reads Z instead of A
  kPointForecast,        // a4: heads emit mu only, MSE loss
  kFinetuneBackbone,     // b1: unsupported
  kRandomBackbone,       // b2: seeded random backbone (also the default source)
  kNoBackbone,           // b3: Z = E
  kAttentionBackbone,    // b4: unsupported
};

std::string_view ablation_name(Ablation a);
/// Parses "none", "a1".."a4", "b1".."b4".
std::optional<Ablation> parse_ablation(std::string_view s);

struct BackboneConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t width = 64;
  std::size_t ffn = 256;
  std::size_t max_positions = 64;
  std::size_t vocab = 4;
};

struct ModelConfig {
  std::size_t lookback = 32;
  std::size_t patch_len = 8;
  std::size_t max_horizon = 32;
  std::size_t encoder_width = 64;
  std::size_t encoder_blocks = 2;
  BackboneConfig backbone;
  std::size_t experts = 4;
  std::size_t top_k = 2;
  std::size_t text_max_len = 256;
  bool finetune_encoder = false;
  Ablation ablation = Ablation::kNone;
  std::uint64_t seed = 0;

  std::size_t d_model() const { return backbone.width; }
  bool probabilistic() const { return ablation != Ablation::kPointForecast; }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 32;
  std::size_t epochs = 10;
  /// When non-zero, training runs exactly this many optimizer steps,
  /// cycling through epochs as needed; `epochs` is then ignored.
  std::size_t max_steps = 0;
  double alpha = 0.01;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  std::size_t stride = 0;  // 0 -> patch_len
  /// Extra lookback patches sampled per window (0..n), so positions reached
  /// during autoregressive generation are trained.
  std::size_t context_extension = 3;
  bool cosine_schedule = false;

  std::size_t pretrain_steps = 200;
  double pretrain_lr = 1e-3;
  double mask_ratio = 0.4;

  void validate() const;
};

}  // namespace captime
