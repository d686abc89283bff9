#include "captime/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "captime/config_file.hpp"
#include "captime/inference.hpp"
#include "captime/metrics.hpp"
#include "captime/model.hpp"
#include "captime/trainer.hpp"

namespace fs = std::filesystem;

namespace captime {

namespace {

constexpr const char* kVersion = "0.1.0";

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::size_t> horizons;
  std::string ablation;
  bool explain = false;
  std::string out = "out";
  std::string series;
  std::string texts;
  std::string checkpoint;
  std::size_t season = 0;
  std::size_t window = 0;
  std::vector<std::string> variants;
};

struct RunContext {
  std::string command;
  Options opt;
  RunConfig cfg;
  fs::path out;
  std::ostream* log = nullptr;
  nlohmann::json report = nlohmann::json::object();
  std::vector<std::string> outputs;
  std::optional<nlohmann::json> checkpoint_manifest;

  fs::path file(const std::string& name) {
    outputs.push_back(name);
    return out / name;
  }
};

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

RunConfig build_config(const Options& o) {
  RunConfig cfg;
  if (!o.config.empty()) load_config_file(o.config, cfg);
  if (o.seed) {
    cfg.model.seed = *o.seed;
    cfg.train.seed = *o.seed;
    cfg.synth.seed = *o.seed;
  }
  if (!o.ablation.empty()) cfg.set("ablation", o.ablation);
  if (!o.series.empty()) cfg.series = o.series;
  if (!o.texts.empty()) cfg.texts = o.texts;
  return cfg;
}

Corpus load_corpus(const RunConfig& cfg) {
  if (cfg.series.empty()) throw std::runtime_error("no series given (use --series or the 'series' config key)");
  return load_csv(cfg.series, cfg.texts);
}

std::vector<std::size_t> horizons_or(const Options& o, std::size_t fallback) {
  return o.horizons.empty() ? std::vector<std::size_t>{fallback} : o.horizons;
}

nlohmann::json fit_summary(const FitResult& r) {
  nlohmann::json j;
  if (!r.pretrain.losses.empty()) {
    j["pretrain_first_loss"] = r.pretrain.losses.front();
    j["pretrain_last_loss"] = r.pretrain.losses.back();
  }
  j["steps"] = r.train.steps;
  if (r.train.log.front().val_loss) j["val_loss_initial"] = *r.train.log.front().val_loss;
  if (r.train.log.back().val_loss) j["val_loss_final"] = *r.train.log.back().val_loss;
  j["train_loss_final"] = r.train.log.back().train_loss;
  return j;
}

/// MSE/MAE/NLL/coverage per horizon, plus sMAPE/MASE/OWA against Naive2
/// when a seasonal period is given.
nlohmann::json evaluate_report(const Model& m, const Corpus& c, Range range, const std::vector<std::size_t>& horizons,
                               const RunConfig& cfg, std::size_t season) {
  nlohmann::json rows = nlohmann::json::array();
  const std::size_t stride = cfg.eval_stride == 0 ? m.cfg.patch_len : cfg.eval_stride;
  for (std::size_t f : horizons) {
    const auto windows = make_windows(c, range, m.cfg.lookback, f, stride, cfg.eval_align);
    double smape_sum = 0.0, mase_sum = 0.0, smape_n2 = 0.0, mase_n2 = 0.0;
    std::size_t scored = 0;
    const HorizonMetrics h = score(c, windows, f, [&](const Window& w) {
      ForecastResult r = forecast_window(m, c, w, f);
      if (season > 0) {
        const auto& ch = c.channels.at(w.channel);
        const auto first = ch.begin() + static_cast<std::ptrdiff_t>(w.start);
        const std::vector<double> insample(first, first + static_cast<std::ptrdiff_t>(w.lookback));
        const std::vector<double> truth(first + static_cast<std::ptrdiff_t>(w.lookback),
                                        first + static_cast<std::ptrdiff_t>(w.lookback + f));
        const auto n2 = metrics::naive2(insample, f, season);
        smape_sum += metrics::smape(truth, r.point);
        mase_sum += metrics::mase(truth, r.point, insample, season);
        smape_n2 += metrics::smape(truth, n2);
        mase_n2 += metrics::mase(truth, n2, insample, season);
        ++scored;
      }
      return r;
    });
    nlohmann::json row = metrics_to_json(h);
    if (scored > 0) {
      const double k = static_cast<double>(scored);
      row["smape"] = smape_sum / k;
      row["mase"] = mase_sum / k;
      row["smape_naive2"] = smape_n2 / k;
      row["mase_naive2"] = mase_n2 / k;
      row["owa"] = metrics::owa(smape_sum / k, mase_sum / k, smape_n2 / k, mase_n2 / k);
    }
    rows.push_back(row);
  }
  return rows;
}

void cmd_synth(RunContext& ctx) {
  const SyntheticCorpus syn = generate_synthetic(ctx.cfg.synth);
  write_series_csv(ctx.file("series.csv"), syn.corpus);
  write_texts_jsonl(ctx.file("texts.jsonl"), syn.corpus.texts);
  std::size_t counts[3] = {0, 0, 0};
  for (Regime r : syn.regimes) ++counts[static_cast<int>(r)];
  ctx.report["length"] = syn.corpus.length();
  ctx.report["texts"] = syn.corpus.texts.size();
  ctx.report["regimes"] = {{"flat", counts[0]}, {"surge", counts[1]}, {"drop", counts[2]}};
}

void cmd_pretrain(RunContext& ctx) {
  const Corpus c = load_corpus(ctx.cfg);
  const Splits s = split_corpus(c.length(), ctx.cfg.train_frac, ctx.cfg.val_frac);
  ctx.cfg.train.validate();
  Model m = init_model(ctx.cfg.model, training_vocab(c, s.train), ctx.cfg.backbone_weights);
  const auto res = ts_encoder::pretrain(m.store, m.cfg, ctx.cfg.train, pretrain_corpus(m, c, s.train, ctx.cfg.train));
  save_checkpoint(ctx.file("encoder.ckpt"), m);
  m.vocab.save(ctx.file("vocab.txt"));
  std::ofstream loss(ctx.file("pretrain_loss.csv"));
  loss.precision(17);
  loss << "step,mse\n";
  for (std::size_t i = 0; i < res.losses.size(); ++i) loss << i + 1 << ',' << res.losses[i] << '\n';
  ctx.report["steps"] = res.losses.size();
  if (!res.losses.empty()) {
    ctx.report["first_loss"] = res.losses.front();
    ctx.report["last_loss"] = res.losses.back();
  }
  ctx.checkpoint_manifest = manifest(m);
}

void cmd_train(RunContext& ctx) {
  const Corpus c = load_corpus(ctx.cfg);
  const Splits s = split_corpus(c.length(), ctx.cfg.train_frac, ctx.cfg.val_frac);
  std::optional<Model> pre;
  if (!ctx.opt.checkpoint.empty()) pre = load_checkpoint(ctx.opt.checkpoint);
  TrainOptions topts;
  topts.dump_dir = ctx.out;
  FitResult r = fit(ctx.cfg.model, ctx.cfg.train, c, s, ctx.cfg.backbone_weights, topts, pre ? &*pre : nullptr);
  save_checkpoint(ctx.file("model.ckpt"), r.model);
  r.model.vocab.save(ctx.file("vocab.txt"));
  write_metrics_csv(ctx.file("metrics.csv"), r.train, r.model.cfg.experts);
  write_routing_csv(ctx.file("routing.csv"), r.train);
  ctx.report["training"] = fit_summary(r);
  ctx.report["test"] = evaluate_report(r.model, c, s.test, horizons_or(ctx.opt, r.model.cfg.max_horizon), ctx.cfg,
                                       ctx.opt.season);
  ctx.checkpoint_manifest = manifest(r.model);
}

Model require_checkpoint(const RunContext& ctx) {
  if (ctx.opt.checkpoint.empty()) throw std::runtime_error("--checkpoint is required");
  return load_checkpoint(ctx.opt.checkpoint);
}

void cmd_evaluate(RunContext& ctx) {
  const Model m = require_checkpoint(ctx);
  const Corpus c = load_corpus(ctx.cfg);
  const Splits s = split_corpus(c.length(), ctx.cfg.train_frac, ctx.cfg.val_frac);
  ctx.report["checkpoint_step"] = m.step;
  ctx.report["test"] = evaluate_report(m, c, s.test, horizons_or(ctx.opt, m.cfg.max_horizon), ctx.cfg, ctx.opt.season);
  ctx.checkpoint_manifest = manifest(m);
}

void cmd_forecast(RunContext& ctx) {
  const Model m = require_checkpoint(ctx);
  const Corpus c = load_corpus(ctx.cfg);
  const std::size_t H = m.cfg.lookback;
  if (c.length() < H) throw std::runtime_error("series shorter than the lookback " + std::to_string(H));
  const std::size_t f = horizons_or(ctx.opt, m.cfg.max_horizon).front();
  nlohmann::json channels = nlohmann::json::object();
  for (std::size_t ch = 0; ch < c.num_channels(); ++ch) {
    const Window w{ch, c.length() - H, H, 0, H};
    ForecastRequest req;
    const auto& v = c.channels[ch];
    req.lookback.assign(v.end() - static_cast<std::ptrdiff_t>(H), v.end());
    req.prompt = window_prompt(c, w, m.vocab, m.cfg.text_max_len);
    req.horizon = f;
    if (m.cfg.probabilistic()) req.quantiles = ctx.cfg.quantiles;
    req.keep_attention = ctx.opt.explain;
    const ForecastResult r = forecast(m, req);
    const std::string& name = c.channel_names[ch];
    channels[name] = forecast_to_json(r);
    write_forecast_csv(ctx.file("forecast_" + name + ".csv"), r);
    for (std::size_t k = 0; k < r.attention.size(); ++k) {
      write_attention_csv(ctx.file("attention_" + name + "_step" + std::to_string(k + 1) + ".csv"), r.attention[k],
                          req.prompt, m.vocab);
    }
  }
  write_json(ctx.file("forecast.json"), {{"horizon", f}, {"channels", channels}});
  ctx.report["horizon"] = f;
  ctx.report["channels"] = c.num_channels();
  ctx.checkpoint_manifest = manifest(m);
}

void cmd_ablate(RunContext& ctx) {
  const Corpus c = load_corpus(ctx.cfg);
  const Splits s = split_corpus(c.length(), ctx.cfg.train_frac, ctx.cfg.val_frac);
  std::vector<std::string> variants{"none"};
  for (const auto& v : ctx.opt.variants.empty() ? std::vector<std::string>{"a2"} : ctx.opt.variants) {
    if (v != "none") variants.push_back(v);
  }
  nlohmann::json rows = nlohmann::json::object();
  std::optional<double> base_mse;
  for (const auto& v : variants) {
    RunConfig cfg = ctx.cfg;
    cfg.set("ablation", v);
    TrainOptions topts;
    topts.dump_dir = ctx.out;
    FitResult r = fit(cfg.model, cfg.train, c, s, cfg.backbone_weights, topts);
    save_checkpoint(ctx.file("model_" + v + ".ckpt"), r.model);
    nlohmann::json row;
    row["training"] = fit_summary(r);
    row["test"] = evaluate_report(r.model, c, s.test, horizons_or(ctx.opt, r.model.cfg.max_horizon), cfg, ctx.opt.season);
    const double mse = row["test"][0]["mse"].get<double>();
    if (v == "none") base_mse = mse;
    if (base_mse && v != "none") row["mse_ratio_full_over_variant"] = *base_mse / mse;
    rows[v] = row;
    *ctx.log << v << ": test mse " << mse << '\n';
  }
  ctx.report["variants"] = rows;
}

void cmd_gradcheck(RunContext& ctx, bool& failed) {
  GradCheckOptions go;
  go.tolerance = 1e-3;
  const GradCheckReport rep = model_grad_check(tiny_config(ctx.cfg.model.seed), go);
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : rep.entries) {
    entries.push_back({{"name", e.name},
                       {"elements", e.elements},
                       {"max_rel_error", e.max_rel_error},
                       {"max_abs_error", e.max_abs_error},
                       {"passed", e.passed}});
  }
  ctx.report["tolerance"] = go.tolerance;
  ctx.report["max_rel_error"] = rep.max_rel_error;
  ctx.report["passed"] = rep.passed;
  ctx.report["entries"] = entries;
  *ctx.log << "max relative error " << rep.max_rel_error << (rep.passed ? " (pass)" : " (FAIL)") << '\n';
  failed = !rep.passed;
}

void cmd_inspect(RunContext& ctx) {
  const Model m = require_checkpoint(ctx);
  if (m.cfg.ablation == Ablation::kNoTextAbstraction) throw std::runtime_error("checkpoint has no text abstraction");
  const Corpus c = load_corpus(ctx.cfg);
  const Splits s = split_corpus(c.length(), ctx.cfg.train_frac, ctx.cfg.val_frac);
  const std::size_t f = horizons_or(ctx.opt, m.cfg.max_horizon).front();
  const std::size_t stride = ctx.cfg.eval_stride == 0 ? m.cfg.patch_len : ctx.cfg.eval_stride;
  const auto windows = make_windows(c, s.test, m.cfg.lookback, f, stride, ctx.cfg.eval_align);
  if (ctx.opt.window >= windows.size()) {
    throw std::runtime_error("window " + std::to_string(ctx.opt.window) + " out of range (" +
                             std::to_string(windows.size()) + " test windows)");
  }
  const Window& w = windows[ctx.opt.window];
  ForecastRequest req;
  const auto& v = c.channels.at(w.channel);
  req.lookback.assign(v.begin() + static_cast<std::ptrdiff_t>(w.start),
                      v.begin() + static_cast<std::ptrdiff_t>(w.start + w.lookback));
  req.prompt = window_prompt(c, w, m.vocab, m.cfg.text_max_len);
  req.horizon = f;
  req.keep_attention = true;
  const ForecastResult with_text = forecast(m, req);
  ForecastRequest off = req;
  off.prompt = tokenize("", m.vocab, m.cfg.text_max_len);
  const ForecastResult without_text = forecast(m, off);
  for (std::size_t k = 0; k < with_text.attention.size(); ++k) {
    write_attention_csv(ctx.file("attention_step" + std::to_string(k + 1) + ".csv"), with_text.attention[k], req.prompt,
                        m.vocab);
  }
  std::vector<double> truth(v.begin() + static_cast<std::ptrdiff_t>(w.start + w.lookback),
                            v.begin() + static_cast<std::ptrdiff_t>(w.start + w.lookback + f));
  std::string prompt_text;
  for (TokenId id : req.prompt.token_ids) prompt_text += (prompt_text.empty() ? "" : " ") + m.vocab.token(id);
  ctx.report["window"] = {{"channel", w.channel}, {"start", w.start}, {"lookback", w.lookback}};
  ctx.report["prompt"] = prompt_text;
  ctx.report["truth"] = truth;
  ctx.report["with_text"] = forecast_to_json(with_text);
  ctx.report["without_text"] = forecast_to_json(without_text);
  ctx.report["mse_with_text"] = metrics::mse(truth, with_text.point);
  ctx.report["mse_without_text"] = metrics::mse(truth, without_text.point);
  ctx.checkpoint_manifest = manifest(m);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Context-aware probabilistic multimodal time-series forecasting", "captime"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  const auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "key = value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "seed for initialization, shuffling and synthetic data");
    sub->add_option("--out", o.out, "output directory")->capture_default_str();
  };
  const auto data = [&o](CLI::App* sub) {
    sub->add_option("--series", o.series, "series CSV (timestamp,<channel>,...)");
    sub->add_option("--texts", o.texts, "texts JSONL ({start,end,text} per line)");
  };
  const auto model_opts = [&o](CLI::App* sub) {
    sub->add_option("--ablation", o.ablation, "model variant")
        ->check(CLI::IsMember({"none", "a1", "a2", "a3", "a4", "b2", "b3"}));
  };
  const auto horizon = [&o](CLI::App* sub) {
    sub->add_option("--horizon", o.horizons, "forecast horizon (repeatable)")->check(CLI::PositiveNumber);
  };
  const auto season = [&o](CLI::App* sub) {
    sub->add_option("--season", o.season, "seasonal period for sMAPE/MASE/OWA (0 disables)");
  };

  auto* synth = app.add_subcommand("synth", "write the synthetic regime corpus");
  common(synth);
  auto* pretrain = app.add_subcommand("pretrain-encoder", "pretrain the patch-mixer encoder");
  common(pretrain);
  data(pretrain);
  auto* train = app.add_subcommand("train", "train the model (pretrains the encoder unless --checkpoint is given)");
  common(train);
  data(train);
  model_opts(train);
  horizon(train);
  season(train);
  train->add_option("--checkpoint", o.checkpoint, "checkpoint supplying a pretrained encoder")->check(CLI::ExistingFile);
  auto* evaluate_cmd = app.add_subcommand("evaluate", "evaluate a checkpoint on the test split");
  common(evaluate_cmd);
  data(evaluate_cmd);
  horizon(evaluate_cmd);
  season(evaluate_cmd);
  evaluate_cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  auto* forecast_cmd = app.add_subcommand("forecast", "forecast past the end of a series");
  common(forecast_cmd);
  data(forecast_cmd);
  horizon(forecast_cmd);
  forecast_cmd->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  forecast_cmd->add_flag("--explain", o.explain, "write attention maps");
  auto* ablate = app.add_subcommand("ablate", "train the full model and each variant with the same budget");
  common(ablate);
  data(ablate);
  horizon(ablate);
  season(ablate);
  ablate->add_option("variants", o.variants, "variants to compare against the full model (default a2)")
      ->check(CLI::IsMember({"none", "a1", "a2", "a3", "a4", "b2", "b3"}));
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of all trainable gradients");
  common(gradcheck);
  auto* inspect = app.add_subcommand("inspect-attn", "attention maps and text on/off comparison for a test window");
  common(inspect);
  data(inspect);
  horizon(inspect);
  inspect->add_option("--checkpoint", o.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  inspect->add_option("--window", o.window, "test window index");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return kExitUsage;
  }

  RunContext ctx;
  ctx.command = app.get_subcommands().front()->get_name();
  ctx.opt = o;
  ctx.log = &out;
  bool failed = false;
  try {
    ctx.cfg = build_config(o);
    ctx.out = o.out;
    fs::create_directories(ctx.out);
    if (ctx.command == "synth") cmd_synth(ctx);
    else if (ctx.command == "pretrain-encoder") cmd_pretrain(ctx);
    else if (ctx.command == "train") cmd_train(ctx);
    else if (ctx.command == "evaluate") cmd_evaluate(ctx);
    else if (ctx.command == "forecast") cmd_forecast(ctx);
    else if (ctx.command == "ablate") cmd_ablate(ctx);
    else if (ctx.command == "gradcheck") cmd_gradcheck(ctx, failed);
    else if (ctx.command == "inspect-attn") cmd_inspect(ctx);

    const nlohmann::json run_cfg = ctx.cfg.to_json();
    const std::string hash = hex64(config_hash(run_cfg));
    ctx.report["command"] = ctx.command;
    ctx.report["config_hash"] = hash;
    ctx.report["seed"] = ctx.cfg.model.seed;
    ctx.outputs.push_back("report.json");
    ctx.outputs.push_back("manifest.json");
    nlohmann::json man{{"command", ctx.command},
                       {"version", kVersion},
                       {"config", run_cfg},
                       {"config_hash", hash},
                       {"outputs", ctx.outputs}};
    if (ctx.checkpoint_manifest) man["checkpoint"] = *ctx.checkpoint_manifest;
    write_json(ctx.out / "report.json", ctx.report);
    write_json(ctx.out / "manifest.json", man);
    out << ctx.command << ": wrote " << (ctx.out / "report.json").string() << '\n';
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return failed ? kExitFailure : kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace captime
