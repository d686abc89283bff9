#pragma once

// Patch-mixer temporal encoder, modality connector and the trainable MLP
// that replaces both under the a1 ablation.
//
// Tensor names:
//   encoder.embed.{weight,bias}                  L_p x D_enc
//   encoder.block{b}.token_ln.{gain,bias}
//   encoder.block{b}.token_mix.{weight,bias}     N_max x N_max, N_max x 1
//   encoder.block{b}.channel_ln.{gain,bias}
//   encoder.block{b}.channel_fc1.{weight,bias}   D_enc x 2 D_enc
//   encoder.block{b}.channel_fc2.{weight,bias}   2 D_enc x D_enc
//   encoder.ln_f.{gain,bias}
//   connector.{weight,bias}                      D_enc x D
//   encoder.mlp.fc1 / fc2                        L_p x D, D x D (a1 only)
//   pretrain.mask, pretrain.head                 pretraining only
//
// Token mixing is lower-triangular: token i mixes patches 0..i only, so the
// representation of a patch never sees the patches that follow it.

#include <cstdint>
#include <vector>

#include "captime/config.hpp"
#include "captime/layers.hpp"
#include "captime/series_prep.hpp"

namespace captime::ts_encoder {

/// Adds the mixer encoder (frozen unless cfg.finetune_encoder) and the
/// trainable connector, or the a1 MLP when that ablation is selected.
void init(ParameterStore& store, const ModelConfig& cfg, Rng& rng);

/// Mixer(P): n x D_enc.
Var mixer(const Binder& b, const ModelConfig& cfg, Var patches);

/// T = MC(Mixer(P)), or MLP(P) under a1: n x D.
Var encode(const Binder& b, const ModelConfig& cfg, Var patches);

struct PretrainResult {
  std::vector<double> losses;  // one per step, masked-patch MSE
};

/// Masked-patch reconstruction on normalized patch sets. A fraction
/// `mask_ratio` of each sample's patches (at least one) is replaced by a
/// learned mask vector after the patch embedding; the loss is MSE on the
/// masked patches. Only the mixer and the pretraining tensors are updated;
/// the pretraining tensors are removed from the store afterwards.
PretrainResult pretrain(ParameterStore& store, const ModelConfig& cfg, const TrainConfig& tcfg,
                        const std::vector<PatchSet>& corpus);

}  // namespace captime::ts_encoder
