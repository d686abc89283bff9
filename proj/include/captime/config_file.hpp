#pragma once

// `key = value` run configuration. Blank lines and lines starting with '#'
// are ignored. Keys:
//
//   model:    lookback patch_len max_horizon encoder_width encoder_blocks
//             backbone.layers backbone.heads backbone.width backbone.ffn
//             backbone.max_positions experts top_k text_max_len
//             finetune_encoder ablation seed
//   training: lr beta1 beta2 eps batch_size epochs max_steps alpha
//             grad_clip train_seed stride context_extension cosine_schedule
//             pretrain_steps pretrain_lr mask_ratio
//   data:     series texts backbone_weights train_frac val_frac
//             eval_stride eval_align quantiles (comma separated)
//   synth:    synth.length synth.period synth.noise synth.slope
//             synth.segment synth.announce_span synth.hetero synth.seed

#include <filesystem>
#include <string>
#include <vector>

#include "captime/config.hpp"
#include "captime/data_io.hpp"
#include "json.hpp"

namespace captime {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synth;
  std::filesystem::path series;
  std::filesystem::path texts;
  std::filesystem::path backbone_weights;
  double train_frac = 0.7;
  double val_frac = 0.1;
  std::size_t eval_stride = 0;
  std::size_t eval_align = 0;
  std::vector<double> quantiles{0.1, 0.5, 0.9};

  /// Applies one setting; throws ConfigError on an unknown key or bad value.
  void set(const std::string& key, const std::string& value);
  nlohmann::json to_json() const;
};

/// Applies every line of a config file on top of `cfg`. Relative data paths
/// are resolved against the file's directory.
void load_config_file(const std::filesystem::path& path, RunConfig& cfg);

}  // namespace captime
