#include "captime/model.hpp"

#include <cstdio>
#include <stdexcept>

#include "captime/backbone.hpp"
#include "captime/hash.hpp"
#include "captime/tensor_io.hpp"
#include "captime/ts_encoder.hpp"

namespace captime {

namespace {

constexpr int kCheckpointVersion = 1;

bool is_encoder_core(const std::string& name) {
  return name.starts_with("encoder.embed.") || name.starts_with("encoder.block") || name.starts_with("encoder.ln_f.");
}

}  // namespace

const Tensor& Model::token_table() const { return store.at(backbone::kTokenTable).value; }

Model init_model(ModelConfig cfg, Vocabulary vocab, const std::filesystem::path& backbone_weights) {
  cfg.backbone.vocab = vocab.size();
  cfg.validate();
  Model m;
  m.cfg = cfg;
  m.vocab = std::move(vocab);
  // Separate streams so that toggling one module's ablation leaves the
  // others' initial weights unchanged.
  if (!backbone_weights.empty() && cfg.ablation != Ablation::kRandomBackbone) {
    backbone::load_weights(m.store, cfg.backbone, backbone_weights);
  } else {
    backbone::seeded_init(m.store, cfg.backbone, cfg.seed);
  }
  Rng enc_rng(cfg.seed + 1), abs_rng(cfg.seed + 2), dec_rng(cfg.seed + 3);
  ts_encoder::init(m.store, cfg, enc_rng);
  if (cfg.ablation != Ablation::kNoTextAbstraction) abstraction::init(m.store, cfg, abs_rng);
  mixture_decoder::init(m.store, cfg, dec_rng);
  partition_parameters(m.store, cfg);
  return m;
}

ForwardResult forward(const Binder& b, const ModelConfig& cfg, const Tensor& patches, const Tensor& text) {
  Graph& g = b.graph();
  ForwardResult r;
  r.tokens = ts_encoder::encode(b, cfg, g.constant(patches));
  const std::size_t n = r.tokens.rows();
  if (cfg.ablation == Ablation::kNoTextAbstraction) {
    r.fused = r.tokens;
  } else {
    r.text = abstraction::abstract(b, cfg, g.constant(text), n);
    r.fused = abstraction::fuse(r.tokens, r.text->values);
  }
  r.hidden = cfg.ablation == Ablation::kNoBackbone ? r.fused : backbone::forward(b, cfg.backbone, r.fused);
  const bool gate_on_text = r.text.has_value() && cfg.ablation != Ablation::kNoContextGate;
  r.routing = mixture_decoder::route(b, cfg, gate_on_text ? r.text->values : r.hidden);
  r.params = mixture_decoder::decode(b, cfg, r.hidden, r.routing);
  return r;
}

Partition partition_parameters(ParameterStore& store, const ModelConfig& cfg) {
  Partition p;
  std::vector<std::string> unknown;
  for (auto& [name, param] : store) {
    bool trainable;
    if (name.starts_with("backbone.")) {
      trainable = false;
    } else if (is_encoder_core(name)) {
      trainable = cfg.finetune_encoder;
    } else if (name.starts_with("connector.") || name.starts_with("encoder.mlp.") ||
               name.starts_with("abstraction.") || name.starts_with("decoder.")) {
      trainable = true;
    } else {
      unknown.push_back(name);
      continue;
    }
    param.trainable = trainable;
    (trainable ? p.trainable : p.frozen).push_back(name);
  }
  if (!unknown.empty()) {
    std::string msg = "unpartitioned tensor(s):";
    for (const auto& u : unknown) msg += " " + u;
    throw std::logic_error(msg);
  }
  return p;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return {
      {"lookback", c.lookback},
      {"patch_len", c.patch_len},
      {"max_horizon", c.max_horizon},
      {"encoder_width", c.encoder_width},
      {"encoder_blocks", c.encoder_blocks},
      {"backbone",
       {{"layers", c.backbone.layers},
        {"heads", c.backbone.heads},
        {"width", c.backbone.width},
        {"ffn", c.backbone.ffn},
        {"max_positions", c.backbone.max_positions},
        {"vocab", c.backbone.vocab}}},
      {"experts", c.experts},
      {"top_k", c.top_k},
      {"text_max_len", c.text_max_len},
      {"finetune_encoder", c.finetune_encoder},
      {"ablation", std::string(ablation_name(c.ablation))},
      {"seed", c.seed},
  };
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.lookback = j.at("lookback").get<std::size_t>();
  c.patch_len = j.at("patch_len").get<std::size_t>();
  c.max_horizon = j.at("max_horizon").get<std::size_t>();
  c.encoder_width = j.at("encoder_width").get<std::size_t>();
  c.encoder_blocks = j.at("encoder_blocks").get<std::size_t>();
  const auto& bb = j.at("backbone");
  c.backbone.layers = bb.at("layers").get<std::size_t>();
  c.backbone.heads = bb.at("heads").get<std::size_t>();
  c.backbone.width = bb.at("width").get<std::size_t>();
  c.backbone.ffn = bb.at("ffn").get<std::size_t>();
  c.backbone.max_positions = bb.at("max_positions").get<std::size_t>();
  c.backbone.vocab = bb.at("vocab").get<std::size_t>();
  c.experts = j.at("experts").get<std::size_t>();
  c.top_k = j.at("top_k").get<std::size_t>();
  c.text_max_len = j.at("text_max_len").get<std::size_t>();
  c.finetune_encoder = j.at("finetune_encoder").get<bool>();
  const auto ab = parse_ablation(j.at("ablation").get<std::string>());
  if (!ab) throw std::invalid_argument("unknown ablation in config");
  c.ablation = *ab;
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
  return {
      {"lr", c.lr},
      {"beta1", c.beta1},
      {"beta2", c.beta2},
      {"eps", c.eps},
      {"batch_size", c.batch_size},
      {"epochs", c.epochs},
      {"max_steps", c.max_steps},
      {"alpha", c.alpha},
      {"grad_clip", c.grad_clip},
      {"seed", c.seed},
      {"stride", c.stride},
      {"context_extension", c.context_extension},
      {"cosine_schedule", c.cosine_schedule},
      {"pretrain_steps", c.pretrain_steps},
      {"pretrain_lr", c.pretrain_lr},
      {"mask_ratio", c.mask_ratio},
  };
}

std::uint64_t config_hash(const nlohmann::json& j) { return fnv1a(j.dump()); }

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::json manifest(const Model& m) {
  nlohmann::json frozen = nlohmann::json::array(), trainable = nlohmann::json::array();
  for (const auto& [name, p] : m.store) (p.trainable ? trainable : frozen).push_back(name);
  return {
      {"format_version", kCheckpointVersion},
      {"config", config_to_json(m.cfg)},
      {"config_hash", hex64(config_hash(config_to_json(m.cfg)))},
      {"vocab_hash", hex64(m.vocab.hash())},
      {"vocab", m.vocab.tokens()},
      {"frozen", frozen},
      {"trainable", trainable},
      {"step", m.step},
  };
}

void save_checkpoint(const std::filesystem::path& path, const Model& m) {
  TensorFile f;
  for (const auto& [name, p] : m.store) f.tensors.emplace(name, p.value);
  f.metadata = manifest(m);
  write_tensor_file(path, f);
}

Model load_checkpoint(const std::filesystem::path& path) {
  TensorFile f = read_tensor_file(path);
  const auto& meta = f.metadata;
  ModelConfig cfg;
  Vocabulary vocab;
  std::size_t step = 0;
  try {
    if (meta.at("format_version").get<int>() != kCheckpointVersion) {
      throw TensorFileError(path.string() + ": unsupported checkpoint version");
    }
    cfg = config_from_json(meta.at("config"));
    vocab = Vocabulary::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
    step = meta.at("step").get<std::size_t>();
    if (meta.at("vocab_hash").get<std::string>() != hex64(vocab.hash())) {
      throw TensorFileError(path.string() + ": vocabulary hash mismatch");
    }
  } catch (const nlohmann::json::exception& e) {
    throw TensorFileError(path.string() + ": malformed checkpoint manifest: " + e.what());
  }
  Model m = init_model(cfg, std::move(vocab));
  m.step = step;
  std::vector<std::string> problems;
  for (auto& [name, p] : m.store) {
    auto it = f.tensors.find(name);
    if (it == f.tensors.end()) {
      problems.push_back("missing " + name);
    } else if (it->second.shape() != p.value.shape()) {
      problems.push_back("shape mismatch " + name);
    } else {
      p.value = std::move(it->second);
      f.tensors.erase(it);
    }
  }
  for (const auto& [name, _] : f.tensors) problems.push_back("unexpected " + name);
  if (!problems.empty()) {
    std::string msg = path.string() + ": checkpoint does not match its config:";
    for (const auto& s : problems) msg += "\n  " + s;
    throw TensorFileError(msg);
  }
  const auto frozen = meta.value("frozen", std::vector<std::string>{});
  for (const auto& name : frozen) {
    if (!m.store.contains(name) || m.store.at(name).trainable) {
      throw TensorFileError(path.string() + ": frozen listing disagrees with the partition at " + name);
    }
  }
  return m;
}

}  // namespace captime
