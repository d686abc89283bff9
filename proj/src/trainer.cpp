#include "captime/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include "captime/optim.hpp"
#include "json.hpp"

namespace captime {

TargetSet make_targets(std::span<const double> values, std::size_t lookback, std::size_t patch_len,
                       std::size_t context) {
  if (patch_len == 0) throw std::invalid_argument("make_targets: patch_len must be >= 1");
  if (values.size() < lookback + patch_len) {
    throw std::invalid_argument("make_targets: window of " + std::to_string(values.size()) +
                                " values is shorter than lookback + patch_len = " +
                                std::to_string(lookback + patch_len));
  }
  const std::size_t ctx = context == 0 ? lookback : context;
  if (ctx > lookback) throw std::invalid_argument("make_targets: context longer than lookback");
  TargetSet out;
  out.stats = channel_stats(values.first(ctx));
  const auto norm = normalize_channel(values.first(lookback + patch_len), out.stats);
  out.inputs = patchify(std::span<const double>(norm).first(lookback), patch_len);
  const std::size_t n = out.inputs.count();
  const std::size_t full = lookback / patch_len;
  out.targets = Tensor::matrix(n, patch_len);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t from = k + 1 < full ? (k + 1) * patch_len : lookback;
    for (std::size_t j = 0; j < patch_len; ++j) out.targets(k, j) = norm[from + j];
  }
  return out;
}

std::vector<Sample> make_samples(const Model& m, const Corpus& c, Range range, const TrainConfig& tcfg, bool extend) {
  const ModelConfig& cfg = m.cfg;
  const std::size_t L = cfg.patch_len, H = cfg.lookback;
  const std::size_t stride = tcfg.stride == 0 ? L : tcfg.stride;
  const std::size_t ext = extend ? tcfg.context_extension : 0;
  std::vector<Sample> out;
  for (const Window& base : make_windows(c, range, H, L, stride)) {
    for (std::size_t j = 0; j <= ext; ++j) {
      Window w = base;
      w.lookback = H + j * L;
      w.context = H;
      if (w.start + w.lookback + w.horizon > range.end) break;
      if (patch_count(w.lookback, L) > cfg.backbone.max_positions) break;
      const auto values = window_values(c, w);
      TargetSet t = make_targets(values, w.lookback, L, H);
      Sample s;
      s.window = w;
      s.patches = std::move(t.inputs.patches);
      s.targets = std::move(t.targets);
      s.text = embed(window_prompt(c, w, m.vocab, cfg.text_max_len), m.token_table());
      out.push_back(std::move(s));
    }
  }
  return out;
}

BatchLoss batch_loss(const Binder& b, const ModelConfig& cfg, const std::vector<const Sample*>& batch, double alpha) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  Graph& g = b.graph();
  std::vector<Var> mains, probs;
  std::vector<double> mask_rows;
  for (const Sample* s : batch) {
    ForwardResult r = forward(b, cfg, s->patches, s->text);
    Var y = g.constant(s->targets);
    mains.push_back(cfg.probabilistic() ? mixture_decoder::nll_loss(r.params, y)
                                        : mixture_decoder::mse_loss(r.params.mu, y));
    probs.push_back(r.routing.probs);
    mask_rows.insert(mask_rows.end(), r.routing.mask.data().begin(), r.routing.mask.data().end());
  }
  BatchLoss out;
  Var sum = mains.front();
  for (std::size_t i = 1; i < mains.size(); ++i) sum = add(sum, mains[i]);
  out.main = scale(sum, 1.0 / static_cast<double>(mains.size()));
  Var stacked = probs.size() == 1 ? probs.front() : concat_rows(probs);
  out.probs = stacked.value();
  out.mask = Tensor::matrix(out.probs.rows(), out.probs.cols(), std::move(mask_rows));
  out.balance = mixture_decoder::load_balance_loss(stacked, out.mask, alpha);
  out.total = alpha > 0.0 ? add(out.main, out.balance) : out.main;
  return out;
}

double mean_loss(const Model& m, const std::vector<Sample>& samples) {
  if (samples.empty()) throw std::invalid_argument("mean_loss: no samples");
  double total = 0.0;
  for (const Sample& s : samples) {
    Graph g;
    Binder b(g, static_cast<const ParameterStore&>(m.store));
    BatchLoss l = batch_loss(b, m.cfg, {&s}, 0.0);
    total += l.main.value().item();
  }
  return total / static_cast<double>(samples.size());
}

namespace {

std::vector<Sample> val_subset(const std::vector<Sample>& val, std::size_t limit) {
  if (limit == 0 || val.size() <= limit) return val;
  std::vector<Sample> out;
  out.reserve(limit);
  for (std::size_t i = 0; i < limit; ++i) out.push_back(val[i * val.size() / limit]);
  return out;
}

void dump_batch(const std::filesystem::path& dir, const std::vector<const Sample*>& batch, std::size_t step,
                const std::string& what) {
  nlohmann::json j;
  j["step"] = step;
  j["error"] = what;
  j["windows"] = nlohmann::json::array();
  for (const Sample* s : batch) {
    j["windows"].push_back({{"channel", s->window.channel},
                            {"start", s->window.start},
                            {"lookback", s->window.lookback},
                            {"patches", s->patches.vec()},
                            {"targets", s->targets.vec()}});
  }
  const auto path = (dir.empty() ? std::filesystem::path(".") : dir) / "nan_batch.json";
  std::ofstream(path) << j.dump(2) << '\n';
}

bool grads_finite(const std::vector<Parameter*>& params) {
  for (const Parameter* p : params) {
    if (!p->grad.all_finite()) return false;
  }
  return true;
}

}  // namespace

TrainResult train(Model& m, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& tcfg, const TrainOptions& opts) {
  tcfg.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  partition_parameters(m.store, m.cfg);
  const std::vector<Parameter*> params = m.store.trainable();
  const std::vector<Sample> val = val_subset(val_set, opts.val_limit);
  const std::size_t per_epoch = (train_set.size() + tcfg.batch_size - 1) / tcfg.batch_size;
  const std::size_t total_steps = tcfg.max_steps > 0 ? tcfg.max_steps : tcfg.epochs * per_epoch;

  Adam opt(tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps);
  Rng rng(tcfg.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  const auto validate = [&]() -> std::optional<double> {
    if (val.empty()) return std::nullopt;
    return mean_loss(m, val);
  };
  LogRow initial;
  initial.val_loss = validate();
  initial.train_loss = std::numeric_limits<double>::quiet_NaN();
  std::size_t step = 0;

  for (std::size_t epoch = 0; step < total_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    RoutingSummary summary{epoch, std::vector<double>(m.cfg.experts, 0.0), std::vector<double>(m.cfg.experts, 0.0)};
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size() && step < total_steps; at += tcfg.batch_size) {
      std::vector<const Sample*> batch;
      for (std::size_t k = at; k < std::min(order.size(), at + tcfg.batch_size); ++k) batch.push_back(&train_set[order[k]]);

      if (tcfg.cosine_schedule) {
        const double progress = static_cast<double>(step) / static_cast<double>(total_steps);
        opt.set_lr(tcfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
      }
      m.store.zero_grad();
      LogRow row;
      try {
        Graph g;
        Binder b(g, m.store);
        BatchLoss l = batch_loss(b, m.cfg, batch, tcfg.alpha);
        row.train_loss = l.main.value().item();
        row.balance = l.balance.value().item();
        const auto st = mixture_decoder::routing_stats(l.probs, l.mask);
        row.fraction = st.fraction;
        for (std::size_t e = 0; e < m.cfg.experts; ++e) {
          summary.fraction[e] += st.fraction[e];
          summary.mean_prob[e] += st.mean_prob[e];
        }
        if (!std::isfinite(l.total.value().item())) throw NumericError("loss is not finite");
        g.backward(l.total);
        if (!grads_finite(params)) throw NumericError("gradient is not finite");
      } catch (const NumericError& e) {
        dump_batch(opts.dump_dir, batch, step, e.what());
        throw TrainingError("non-finite value at step " + std::to_string(step) + ": " + e.what() +
                            " (batch written to nan_batch.json)");
      }
      clip_grad_norm(params, tcfg.grad_clip);
      opt.step(params);
      ++step;
      ++batches;
      row.step = step;
      result.log.push_back(std::move(row));
    }
    if (batches > 0) {
      for (std::size_t e = 0; e < m.cfg.experts; ++e) {
        summary.fraction[e] /= static_cast<double>(batches);
        summary.mean_prob[e] /= static_cast<double>(batches);
      }
      result.routing.push_back(std::move(summary));
      result.log.back().val_loss = validate();
    }
  }
  result.log.insert(result.log.begin(), initial);
  result.steps = step;
  m.step += step;
  return result;
}

std::vector<PatchSet> pretrain_corpus(const Model& m, const Corpus& c, Range range, const TrainConfig& tcfg) {
  const std::size_t L = m.cfg.patch_len, H = m.cfg.lookback;
  // Lookback-length windows, each normalized with its own stats.
  std::vector<PatchSet> out;
  for (const Window& w : make_windows(c, range, H, 0, tcfg.stride == 0 ? L : tcfg.stride)) {
    const auto values = window_values(c, w);
    out.push_back(patchify(normalize_channel(values, channel_stats(values)), L, w.channel));
  }
  return out;
}

Vocabulary training_vocab(const Corpus& c, Range train_range, std::size_t min_freq) {
  std::vector<std::string> texts;
  if (train_range.size() > 0) {
    const double last = c.timestamps.at(train_range.end - 1);
    for (const auto& t : c.texts) {
      if (t.start <= last) texts.push_back(t.text);
    }
  }
  return Vocabulary::build(texts, min_freq);
}

FitResult fit(const ModelConfig& cfg, const TrainConfig& tcfg, const Corpus& c, const Splits& splits,
              const std::filesystem::path& backbone_weights, const TrainOptions& opts, const Model* pretrained) {
  tcfg.validate();
  FitResult out{init_model(cfg, pretrained ? pretrained->vocab : training_vocab(c, splits.train), backbone_weights), {}, {}};
  Model& m = out.model;
  if (cfg.ablation != Ablation::kNoTsEncoder) {
    if (pretrained) {
      for (auto& [name, p] : m.store) {
        if (name.starts_with("encoder.") && pretrained->store.contains(name)) p.value = pretrained->store.at(name).value;
      }
    } else if (tcfg.pretrain_steps > 0) {
      out.pretrain = ts_encoder::pretrain(m.store, m.cfg, tcfg, pretrain_corpus(m, c, splits.train, tcfg));
    }
  }
  const auto train_set = make_samples(m, c, splits.train, tcfg, true);
  const auto val_set = make_samples(m, c, splits.val, tcfg, false);
  out.train = train(m, train_set, val_set, tcfg, opts);
  return out;
}

ModelConfig tiny_config(std::uint64_t seed) {
  ModelConfig c;
  c.lookback = 8;
  c.patch_len = 4;
  c.max_horizon = 8;
  c.encoder_width = 16;
  c.encoder_blocks = 1;
  c.backbone = {1, 2, 16, 32, 5, 4};
  c.experts = 2;
  c.top_k = 1;
  c.seed = seed;
  return c;
}

GradCheckReport model_grad_check(const ModelConfig& cfg, const GradCheckOptions& opts, double alpha) {
  SyntheticSpec synth;
  synth.length = 64;
  synth.period = 8.0;
  synth.segment = cfg.lookback;
  synth.announce_span = cfg.patch_len;
  synth.seed = cfg.seed;
  const SyntheticCorpus syn = generate_synthetic(synth);
  const Splits splits{{0, synth.length}, {0, 0}, {0, 0}};
  Model m = init_model(cfg, training_vocab(syn.corpus, splits.train));
  TrainConfig tcfg;
  tcfg.context_extension = 0;
  const auto samples = make_samples(m, syn.corpus, {cfg.lookback, synth.length}, tcfg, false);
  if (samples.size() < 2) throw std::logic_error("model_grad_check: not enough samples");
  const std::vector<const Sample*> batch{&samples[0], &samples[samples.size() / 2]};
  return grad_check(
      [&](Graph& g) {
        Binder b(g, m.store);
        return batch_loss(b, m.cfg, batch, alpha).total;
      },
      m.store, opts);
}

void write_metrics_csv(const std::filesystem::path& path, const TrainResult& r, std::size_t experts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "step,train_nll,val_nll,L_b";
  for (std::size_t e = 0; e < experts; ++e) out << ",f_" << e;
  out << '\n';
  for (const LogRow& row : r.log) {
    out << row.step << ',';
    if (std::isfinite(row.train_loss)) out << row.train_loss;
    out << ',';
    if (row.val_loss) out << *row.val_loss;
    out << ',' << row.balance;
    for (std::size_t e = 0; e < experts; ++e) {
      out << ',';
      if (e < row.fraction.size()) out << row.fraction[e];
    }
    out << '\n';
  }
}

void write_routing_csv(const std::filesystem::path& path, const TrainResult& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "epoch,expert,f,P\n";
  for (const RoutingSummary& s : r.routing) {
    for (std::size_t e = 0; e < s.fraction.size(); ++e) {
      out << s.epoch << ',' << e << ',' << s.fraction[e] << ',' << s.mean_prob[e] << '\n';
    }
  }
}

}  // namespace captime
