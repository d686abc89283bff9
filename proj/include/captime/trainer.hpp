#pragma once

// Next-patch training: target construction, batching, the loss, Adam with
// gradient clipping, metric logs and the encoder-pretraining stage.

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "captime/data_io.hpp"
#include "captime/model.hpp"
#include "captime/series_prep.hpp"
#include "captime/ts_encoder.hpp"

namespace captime {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TargetSet {
  PatchSet inputs;    // normalized patches of the lookback
  Tensor targets;     // N_p x L_p, normalized with the context stats
  ChannelStats stats;
};

/// `values` holds at least lookback + L_p points. Token i (1-based) targets
/// patch i+1 while i < floor(lookback / L_p); the remaining tokens (the final
/// real one and the padded one) target the first future patch. Stats come
/// from the first `context` values (0 means the whole lookback).
TargetSet make_targets(std::span<const double> values, std::size_t lookback, std::size_t patch_len,
                       std::size_t context = 0);

struct Sample {
  Window window;
  Tensor patches;
  Tensor targets;
  Tensor text;  // prompt embedding
};

/// Training windows with stride `tcfg.stride` (patch_len when 0). For each
/// start, lookbacks H + j L_p for j = 0..context_extension are emitted; the
/// prompt and stats always come from the first H values.
std::vector<Sample> make_samples(const Model& m, const Corpus& c, Range range, const TrainConfig& tcfg,
                                 bool extend = true);

struct BatchLoss {
  Var total;
  Var main;     // mean NLL (MSE for point forecasts)
  Var balance;  // L_b
  Tensor probs;  // stacked routing over all batch tokens
  Tensor mask;
};

BatchLoss batch_loss(const Binder& b, const ModelConfig& cfg, const std::vector<const Sample*>& batch, double alpha);

/// Mean main loss over `samples`, without gradients.
double mean_loss(const Model& m, const std::vector<Sample>& samples);

struct LogRow {
  std::size_t step = 0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double balance = 0.0;
  std::vector<double> fraction;
};

struct RoutingSummary {
  std::size_t epoch = 0;
  std::vector<double> fraction;
  std::vector<double> mean_prob;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::vector<RoutingSummary> routing;
  std::size_t steps = 0;
};

struct TrainOptions {
  /// Where nan_batch.json is written on a non-finite loss (empty: cwd).
  std::filesystem::path dump_dir;
  /// Validation subset size (0: all).
  std::size_t val_limit = 256;
};

TrainResult train(Model& m, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& tcfg, const TrainOptions& opts = {});

/// Lookback-length patch sets from the training range for pretraining, each
/// window normalized with its own stats.
std::vector<PatchSet> pretrain_corpus(const Model& m, const Corpus& c, Range range, const TrainConfig& tcfg);

/// Vocabulary from the texts that start inside the training range.
Vocabulary training_vocab(const Corpus& c, Range train_range, std::size_t min_freq = 2);

struct FitResult {
  Model model;
  ts_encoder::PretrainResult pretrain;
  TrainResult train;
};

/// init -> encoder pretraining (skipped under a1, when pretrain_steps is 0,
/// or when `pretrained` supplies the encoder) -> main training.
FitResult fit(const ModelConfig& cfg, const TrainConfig& tcfg, const Corpus& c, const Splits& splits,
              const std::filesystem::path& backbone_weights = {}, const TrainOptions& opts = {},
              const Model* pretrained = nullptr);

/// Small configuration for full-model gradient checks: H=8, L_p=4, D=16,
/// M=2, K=1, one backbone layer.
ModelConfig tiny_config(std::uint64_t seed = 0);

/// Central-difference check of every trainable tensor through the complete
/// training loss (NLL + load balance) on a two-sample synthetic batch.
GradCheckReport model_grad_check(const ModelConfig& cfg, const GradCheckOptions& opts = {}, double alpha = 0.01);

void write_metrics_csv(const std::filesystem::path& path, const TrainResult& r, std::size_t experts);
void write_routing_csv(const std::filesystem::path& path, const TrainResult& r);

}  // namespace captime
