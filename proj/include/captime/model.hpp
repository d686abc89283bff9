#pragma once

// Model assembly: parameter initialization, the full forward pass, the
// frozen/trainable partition, and checkpoint files.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "captime/abstraction.hpp"
#include "captime/config.hpp"
#include "captime/mixture_decoder.hpp"
#include "captime/text_embed.hpp"
#include "json.hpp"

namespace captime {

struct Model {
  ModelConfig cfg;
  ParameterStore store;
  Vocabulary vocab;
  std::size_t step = 0;

  const Tensor& token_table() const;
};

/// Seeded backbone (unless `backbone_weights` is given), encoder, connector,
/// abstraction and decoder. The backbone vocab size is taken from `vocab`.
Model init_model(ModelConfig cfg, Vocabulary vocab, const std::filesystem::path& backbone_weights = {});

struct ForwardResult {
  Var tokens;                                        // T
  std::optional<abstraction::AbstractionSet> text;   // absent under a2
  Var fused;                                         // E
  Var hidden;                                        // Z
  mixture_decoder::Routing routing;
  mixture_decoder::DecodedParams params;
};

/// Full forward on one channel: patches (n x L_p, normalized) and the prompt
/// embedding (N_s x D).
ForwardResult forward(const Binder& b, const ModelConfig& cfg, const Tensor& patches, const Tensor& text);

struct Partition {
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
};

/// Assigns every tensor to the trainable or frozen set by name and sets the
/// trainable flags to match. Throws on a tensor no rule covers.
Partition partition_parameters(ParameterStore& store, const ModelConfig& cfg);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

std::uint64_t config_hash(const nlohmann::json& j);
std::string hex64(std::uint64_t v);

/// Manifest: config, vocab hash, vocabulary, frozen/trainable listing, step.
nlohmann::json manifest(const Model& m);

void save_checkpoint(const std::filesystem::path& path, const Model& m);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace captime
