#include "captime/backbone.hpp"

#include <cmath>
#include <sstream>

#include "captime/tensor_io.hpp"

namespace captime::backbone {

namespace {

std::string layer(std::size_t l) { return "backbone.h" + std::to_string(l); }

constexpr double kInitStd = 0.02;

}  // namespace

std::map<std::string, Shape> expected_shapes(const BackboneConfig& cfg) {
  const std::size_t d = cfg.width;
  std::map<std::string, Shape> out;
  out[kTokenTable] = {cfg.vocab, d};
  out["backbone.wpe"] = {cfg.max_positions, d};
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = layer(l);
    out[p + ".ln1.gain"] = {1, d};
    out[p + ".ln1.bias"] = {1, d};
    out[p + ".attn.qkv.weight"] = {d, 3 * d};
    out[p + ".attn.qkv.bias"] = {1, 3 * d};
    out[p + ".attn.out.weight"] = {d, d};
    out[p + ".attn.out.bias"] = {1, d};
    out[p + ".ln2.gain"] = {1, d};
    out[p + ".ln2.bias"] = {1, d};
    out[p + ".mlp.fc.weight"] = {d, cfg.ffn};
    out[p + ".mlp.fc.bias"] = {1, cfg.ffn};
    out[p + ".mlp.proj.weight"] = {cfg.ffn, d};
    out[p + ".mlp.proj.bias"] = {1, d};
  }
  out["backbone.ln_f.gain"] = {1, d};
  out["backbone.ln_f.bias"] = {1, d};
  return out;
}

void seeded_init(ParameterStore& store, const BackboneConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  // Deterministic order: std::map iterates names sorted.
  for (const auto& [name, shape] : expected_shapes(cfg)) {
    Tensor t(shape);
    const bool is_gain = name.ends_with(".gain");
    const bool is_bias = name.ends_with(".bias");
    if (is_gain) {
      t.fill(1.0);
    } else if (!is_bias) {
      t = normal_tensor(shape[0], shape[1], kInitStd, rng);
    }
    if (name == kTokenTable) {
      for (std::size_t c = 0; c < cfg.width; ++c) t(0, c) = 0.0;  // pad row
    }
    store.add(name, std::move(t), false);
  }
}

std::vector<std::string> load_weights(ParameterStore& store, const BackboneConfig& cfg,
                                      const std::filesystem::path& path) {
  TensorFile file = read_tensor_file(path);
  const auto expected = expected_shapes(cfg);
  std::vector<std::string> missing, mismatched, unknown;
  for (const auto& [name, shape] : expected) {
    auto it = file.tensors.find(name);
    if (it == file.tensors.end()) {
      missing.push_back(name);
    } else if (it->second.shape() != shape) {
      mismatched.push_back(name + " (expected " + shape_str(shape) + ", found " + shape_str(it->second.shape()) + ")");
    }
  }
  for (const auto& [name, _] : file.tensors) {
    if (name.starts_with("backbone.") && !expected.count(name)) unknown.push_back(name);
  }
  if (!missing.empty() || !mismatched.empty()) {
    std::ostringstream os;
    os << path.string() << ": backbone weights do not match the config.";
    for (const auto& m : missing) os << "\n  missing: " << m;
    for (const auto& m : mismatched) os << "\n  shape mismatch: " << m;
    throw TensorFileError(os.str());
  }
  for (const auto& [name, _] : expected) {
    Tensor& t = file.tensors.at(name);
    if (store.contains(name)) {
      store.at(name).value = std::move(t);
    } else {
      store.add(name, std::move(t), false);
    }
  }
  return unknown;
}

void save_weights(const ParameterStore& store, const BackboneConfig& cfg, const std::filesystem::path& path) {
  TensorFile file;
  for (const auto& [name, _] : expected_shapes(cfg)) file.tensors.emplace(name, store.at(name).value);
  write_tensor_file(path, file);
}

Var forward(const Binder& b, const BackboneConfig& cfg, Var tokens) {
  const std::size_t n = tokens.rows();
  const std::size_t d = cfg.width;
  if (tokens.cols() != d) {
    throw ShapeError("backbone: token width " + std::to_string(tokens.cols()) + " != " + std::to_string(d));
  }
  if (n > cfg.max_positions) {
    throw std::length_error("backbone: sequence length " + std::to_string(n) + " exceeds max_positions " +
                            std::to_string(cfg.max_positions));
  }
  const std::size_t dh = d / cfg.heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Var x = add(tokens, slice_rows(b("backbone.wpe"), 0, n));
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const std::string p = layer(l);
    Var h = layer_norm(b, p + ".ln1", x);
    Var qkv = linear(b, p + ".attn.qkv", h);
    std::vector<Var> heads;
    heads.reserve(cfg.heads);
    for (std::size_t k = 0; k < cfg.heads; ++k) {
      Var q = slice_cols(qkv, k * dh, (k + 1) * dh);
      Var kk = slice_cols(qkv, d + k * dh, d + (k + 1) * dh);
      Var v = slice_cols(qkv, 2 * d + k * dh, 2 * d + (k + 1) * dh);
      Var att = softmax(scale(matmul(q, transpose(kk)), att_scale), /*causal=*/true);
      heads.push_back(matmul(att, v));
    }
    Var merged = heads.size() == 1 ? heads[0] : concat_cols(heads);
    x = add(x, linear(b, p + ".attn.out", merged));
    Var m = layer_norm(b, p + ".ln2", x);
    x = add(x, linear(b, p + ".mlp.proj", gelu(linear(b, p + ".mlp.fc", m))));
  }
  return layer_norm(b, "backbone.ln_f", x);
}

}  // namespace captime::backbone
