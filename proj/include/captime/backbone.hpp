#pragma once

// Frozen pre-layer-norm causal transformer (GPT-2 layout) over fused tokens.
//
// Tensor names:
//   backbone.wte                  V x D   token embeddings (shared with text)
//   backbone.wpe                  N_max x D
//   backbone.h{l}.ln1.{gain,bias}
//   backbone.h{l}.attn.qkv.{weight,bias}   D x 3D
//   backbone.h{l}.attn.out.{weight,bias}   D x D
//   backbone.h{l}.ln2.{gain,bias}
//   backbone.h{l}.mlp.fc.{weight,bias}     D x F
//   backbone.h{l}.mlp.proj.{weight,bias}   F x D
//   backbone.ln_f.{gain,bias}

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "captime/config.hpp"
#include "captime/layers.hpp"

namespace captime::backbone {

inline const std::string kTokenTable = "backbone.wte";

/// Every tensor name the config requires, with its shape.
std::map<std::string, Shape> expected_shapes(const BackboneConfig& cfg);

/// Normal(0, 0.02) weights, unit layer-norm gains, zero biases, and a zero
/// pad row in the token table. All tensors are added frozen.
void seeded_init(ParameterStore& store, const BackboneConfig& cfg, std::uint64_t seed);

/// Loads a named-tensor file into the store, validating every expected name
/// and shape. Returns the names present in the file but not expected.
std::vector<std::string> load_weights(ParameterStore& store, const BackboneConfig& cfg,
                                      const std::filesystem::path& path);

void save_weights(const ParameterStore& store, const BackboneConfig& cfg, const std::filesystem::path& path);

/// Z = LLM(E). Row i of the output depends only on rows 0..i of the input.
Var forward(const Binder& b, const BackboneConfig& cfg, Var tokens);

}  // namespace captime::backbone
