#include "captime/config_file.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "captime/model.hpp"

namespace captime {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  using Setter = std::function<void(const std::string&)>;
  auto sz = [&key](std::size_t& f) -> Setter { return [&f, &key](const std::string& s) { f = to_size(key, s); }; };
  auto dbl = [&key](double& f) -> Setter { return [&f, &key](const std::string& s) { f = to_double(key, s); }; };
  auto bln = [&key](bool& f) -> Setter { return [&f, &key](const std::string& s) { f = to_bool(key, s); }; };
  auto u64 = [&key](std::uint64_t& f) -> Setter { return [&f, &key](const std::string& s) { f = to_u64(key, s); }; };
  auto path = [](std::filesystem::path& f) -> Setter { return [&f](const std::string& s) { f = s; }; };

  const std::map<std::string, Setter> table = {
      {"lookback", sz(model.lookback)},
      {"patch_len", sz(model.patch_len)},
      {"max_horizon", sz(model.max_horizon)},
      {"encoder_width", sz(model.encoder_width)},
      {"encoder_blocks", sz(model.encoder_blocks)},
      {"backbone.layers", sz(model.backbone.layers)},
      {"backbone.heads", sz(model.backbone.heads)},
      {"backbone.width", sz(model.backbone.width)},
      {"backbone.ffn", sz(model.backbone.ffn)},
      {"backbone.max_positions", sz(model.backbone.max_positions)},
      {"experts", sz(model.experts)},
      {"top_k", sz(model.top_k)},
      {"text_max_len", sz(model.text_max_len)},
      {"finetune_encoder", bln(model.finetune_encoder)},
      {"seed", u64(model.seed)},
      {"ablation",
       [this, &key](const std::string& s) {
         auto a = parse_ablation(s);
         if (!a) throw ConfigError(key + ": unknown ablation '" + s + "'");
         model.ablation = *a;
       }},
      {"lr", dbl(train.lr)},
      {"beta1", dbl(train.beta1)},
      {"beta2", dbl(train.beta2)},
      {"eps", dbl(train.eps)},
      {"batch_size", sz(train.batch_size)},
      {"epochs", sz(train.epochs)},
      {"max_steps", sz(train.max_steps)},
      {"alpha", dbl(train.alpha)},
      {"grad_clip", dbl(train.grad_clip)},
      {"train_seed", u64(train.seed)},
      {"stride", sz(train.stride)},
      {"context_extension", sz(train.context_extension)},
      {"cosine_schedule", bln(train.cosine_schedule)},
      {"pretrain_steps", sz(train.pretrain_steps)},
      {"pretrain_lr", dbl(train.pretrain_lr)},
      {"mask_ratio", dbl(train.mask_ratio)},
      {"series", path(series)},
      {"texts", path(texts)},
      {"backbone_weights", path(backbone_weights)},
      {"train_frac", dbl(train_frac)},
      {"val_frac", dbl(val_frac)},
      {"eval_stride", sz(eval_stride)},
      {"eval_align", sz(eval_align)},
      {"quantiles",
       [this, &key](const std::string& s) {
         quantiles.clear();
         std::stringstream ss(s);
         for (std::string item; std::getline(ss, item, ',');) {
           const double q = to_double(key, trim(item));
           if (!(q > 0.0 && q < 1.0)) throw ConfigError(key + ": quantiles must lie in (0, 1)");
           quantiles.push_back(q);
         }
       }},
      {"synth.length", sz(synth.length)},
      {"synth.period", dbl(synth.period)},
      {"synth.noise", dbl(synth.noise)},
      {"synth.slope", dbl(synth.slope)},
      {"synth.segment", sz(synth.segment)},
      {"synth.announce_span", sz(synth.announce_span)},
      {"synth.hetero", bln(synth.hetero)},
      {"synth.seed", u64(synth.seed)},
  };
  auto it = table.find(trim(key));
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(v);
}

nlohmann::json RunConfig::to_json() const {
  return {
      {"model", config_to_json(model)},
      {"train", train_config_to_json(train)},
      {"synth",
       {{"length", synth.length},
        {"period", synth.period},
        {"noise", synth.noise},
        {"slope", synth.slope},
        {"segment", synth.segment},
        {"announce_span", synth.announce_span},
        {"hetero", synth.hetero},
        {"seed", synth.seed}}},
      {"series", series.string()},
      {"texts", texts.string()},
      {"backbone_weights", backbone_weights.string()},
      {"train_frac", train_frac},
      {"val_frac", val_frac},
      {"eval_stride", eval_stride},
      {"eval_align", eval_align},
      {"quantiles", quantiles},
  };
}

void load_config_file(const std::filesystem::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      cfg.set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  const auto base = path.parent_path();
  for (auto* p : {&cfg.series, &cfg.texts, &cfg.backbone_weights}) {
    if (!p->empty() && p->is_relative()) *p = base / *p;
  }
}

}  // namespace captime
