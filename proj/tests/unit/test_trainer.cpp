#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "captime/trainer.hpp"
#include "doctest.h"

using namespace captime;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_synth() {
  SyntheticSpec s;
  s.length = 480;
  s.period = 8.0;
  s.segment = 16;
  s.announce_span = 4;
  s.seed = 3;
  return s;
}

TrainConfig quick(std::size_t steps) {
  TrainConfig t;
  t.max_steps = steps;
  t.batch_size = 8;
  t.pretrain_steps = 5;
  t.seed = 2;
  t.context_extension = 1;
  return t;
}

std::vector<double> denorm(const TargetSet& t, std::size_t row) {
  std::vector<double> out;
  for (std::size_t j = 0; j < t.targets.cols(); ++j) out.push_back(t.targets(row, j) * t.stats.std + t.stats.mean);
  return out;
}

void check_close(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

}  // namespace

TEST_CASE("next-patch targets for H=8, L=4 on 1..12") {
  std::vector<double> x(12);
  for (int i = 0; i < 12; ++i) x[i] = i + 1;
  const TargetSet t = make_targets(x, 8, 4);
  REQUIRE(t.targets.rows() == 3);
  CHECK(t.inputs.count() == 3);
  CHECK(t.stats.mean == 4.5);
  check_close(denorm(t, 0), {5, 6, 7, 8});
  check_close(denorm(t, 1), {9, 10, 11, 12});
  check_close(denorm(t, 2), {9, 10, 11, 12});
  CHECK_THROWS(make_targets(std::span<const double>(x).first(11), 8, 4));
}

TEST_CASE("constant series gives zero targets") {
  const std::vector<double> x(12, 3.0);
  const TargetSet t = make_targets(x, 8, 4);
  for (std::size_t i = 0; i < t.targets.size(); ++i) CHECK(t.targets[i] == 0.0);
}

TEST_CASE("targets are normalized with lookback stats only") {
  std::vector<double> x(12);
  for (int i = 0; i < 12; ++i) x[i] = std::sin(i);
  std::vector<double> y = x;
  for (int i = 8; i < 12; ++i) y[i] += 100.0;
  const TargetSet a = make_targets(x, 8, 4), b = make_targets(y, 8, 4);
  CHECK(a.stats.mean == b.stats.mean);
  CHECK(a.stats.std == b.stats.std);
  CHECK(a.inputs.patches == b.inputs.patches);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(a.targets(0, j) == b.targets(0, j));
    CHECK(b.targets(1, j) - a.targets(1, j) == doctest::Approx(100.0 / a.stats.std).epsilon(1e-12));
  }
}

TEST_CASE("parameter partition") {
  Model m = init_model(tiny_config(1), Vocabulary::from_tokens({"<pad>", "<unk>", "<query>", "<sep>", "demand"}));
  const Partition p = partition_parameters(m.store, m.cfg);
  CHECK(p.trainable.size() + p.frozen.size() == m.store.size());
  for (const auto& n : p.trainable) {
    CHECK(std::find(p.frozen.begin(), p.frozen.end(), n) == p.frozen.end());
    CHECK(m.store.at(n).trainable);
  }
  for (const auto& n : p.frozen) CHECK(!m.store.at(n).trainable);
  CHECK(m.store.at("decoder.gate.weight").trainable);
  CHECK(m.store.at("connector.weight").trainable);
  CHECK(m.store.at("abstraction.queries").trainable);
  CHECK(!m.store.at("backbone.wte").trainable);
  CHECK(!m.store.at("backbone.h0.attn.qkv.weight").trainable);
  CHECK(!m.store.at("encoder.embed.weight").trainable);
  m.store.add("stray.tensor", Tensor::scalar(1.0), true);
  CHECK_THROWS(partition_parameters(m.store, m.cfg));
}

TEST_CASE("full-model gradient check") {
  const auto rep = model_grad_check(tiny_config(4), GradCheckOptions{1e-5, 1e-3, 1e-6});
  CHECK(rep.passed);
  CHECK(rep.find("backbone.wte") == nullptr);
  CHECK(rep.find("decoder.gate.weight") != nullptr);
}

TEST_CASE("ablations change the documented subgraph") {
  const Vocabulary v = Vocabulary::from_tokens({"<pad>", "<unk>", "<query>", "<sep>", "demand"});
  auto names_with = [](const Model& m, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& [name, _] : m.store) n += name.starts_with(prefix);
    return n;
  };
  auto with = [&](Ablation a) {
    ModelConfig c = tiny_config(1);
    c.ablation = a;
    return init_model(c, v);
  };
  const Model full = with(Ablation::kNone);
  const Model a1 = with(Ablation::kNoTsEncoder);
  CHECK(names_with(a1, "encoder.block") == 0);
  CHECK(names_with(a1, "encoder.mlp.") > 0);
  CHECK(names_with(a1, "connector.") == 0);
  const Model a2 = with(Ablation::kNoTextAbstraction);
  CHECK(names_with(a2, "abstraction.") == 0);
  CHECK(names_with(full, "abstraction.") > 0);
  const Model a3 = with(Ablation::kNoContextGate);
  CHECK(a3.store.size() == full.store.size());
  const Model a4 = with(Ablation::kPointForecast);
  CHECK(a4.store.at("decoder.head0.weight").value.cols() == a4.cfg.patch_len);
  CHECK(full.store.at("decoder.head0.weight").value.cols() == 3 * full.cfg.patch_len);
  const Model b3 = with(Ablation::kNoBackbone);
  CHECK(b3.store.contains("backbone.wte"));
  for (Ablation a : {Ablation::kFinetuneBackbone, Ablation::kAttentionBackbone}) {
    ModelConfig c = tiny_config(1);
    c.ablation = a;
    CHECK_THROWS(init_model(c, v));
  }

  // Gate reads the abstraction: a backbone-only change moves the hidden
  // states but not the routing. With a3 the routing follows the backbone.
  const Tensor patches = Tensor::matrix(3, 4, 0.3);
  const Tensor text = Tensor::matrix(2, full.cfg.d_model(), 0.1);
  auto run = [&](const Model& m) {
    Graph g;
    Binder b(g, std::as_const(m.store));
    const ForwardResult r = forward(b, m.cfg, patches, text);
    return std::pair{r.routing.probs.value(), r.hidden.value()};
  };
  for (const Model* base : {&full, &a3}) {
    Model bumped = *base;
    auto& w = bumped.store.at("backbone.h0.mlp.fc.weight").value;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.5 * std::sin(static_cast<double>(i));
    const auto [p0, z0] = run(*base);
    const auto [p1, z1] = run(bumped);
    CHECK(!(z0 == z1));
    CHECK((p0 == p1) == (base == &full));
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  const fs::path dir = fs::temp_directory_path() / "captime_test_trainer";
  fs::create_directories(dir);
  Model m = init_model(tiny_config(5), Vocabulary::from_tokens({"<pad>", "<unk>", "<query>", "<sep>", "demand"}));
  m.step = 17;
  save_checkpoint(dir / "m.ckpt", m);
  const Model back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.step == 17);
  CHECK(back.vocab.tokens() == m.vocab.tokens());
  CHECK(config_to_json(back.cfg) == config_to_json(m.cfg));
  CHECK(back.store.size() == m.store.size());
  for (const auto& [name, p] : m.store) {
    CHECK(back.store.at(name).value == p.value);
    CHECK(back.store.at(name).trainable == p.trainable);
  }
  fs::remove_all(dir);
}

TEST_CASE("same seed gives identical loss curves") {
  const Corpus c = generate_synthetic(small_synth()).corpus;
  const Splits s = split_corpus(c.length());
  const FitResult a = fit(tiny_config(1), quick(15), c, s);
  const FitResult b = fit(tiny_config(1), quick(15), c, s);
  REQUIRE(a.train.log.size() == b.train.log.size());
  for (std::size_t i = 1; i < a.train.log.size(); ++i) {
    CHECK(a.train.log[i].train_loss == b.train.log[i].train_loss);
    CHECK(a.train.log[i].balance == b.train.log[i].balance);
  }
  CHECK(a.pretrain.losses == b.pretrain.losses);
  CHECK(a.train.steps == 15);
}

TEST_CASE("one step with alpha 0 lowers the loss on its batch") {
  const Corpus c = generate_synthetic(small_synth()).corpus;
  const Splits s = split_corpus(c.length());
  Model m = init_model(tiny_config(2), training_vocab(c, s.train));
  TrainConfig t = quick(1);
  t.alpha = 0.0;
  t.lr = 1e-4;
  t.batch_size = 64;
  std::vector<Sample> batch = make_samples(m, c, s.train, t, false);
  batch.resize(16);
  const double before = mean_loss(m, batch);
  train(m, batch, {}, t);
  CHECK(mean_loss(m, batch) < before);
}

TEST_CASE("validation loss falls over 300 steps; frozen tensors stay put") {
  const Corpus c = generate_synthetic(small_synth()).corpus;
  const Splits s = split_corpus(c.length());
  TrainConfig t = quick(300);
  t.pretrain_steps = 0;
  Model m = init_model(tiny_config(3), training_vocab(c, s.train));
  const Model initial = m;
  const auto train_set = make_samples(m, c, s.train, t);
  const auto val_set = make_samples(m, c, s.val, t, false);
  const TrainResult r = train(m, train_set, val_set, t);
  REQUIRE(r.log.front().val_loss.has_value());
  CHECK(std::isnan(r.log.front().train_loss));
  CHECK(mean_loss(m, val_set) < *r.log.front().val_loss);
  CHECK(r.steps == 300);
  for (const auto& [name, p] : initial.store) {
    if (!p.trainable) CHECK(m.store.at(name).value == p.value);
  }

  const fs::path dir = fs::temp_directory_path() / "captime_test_trainer_csv";
  fs::create_directories(dir);
  write_metrics_csv(dir / "metrics.csv", r, m.cfg.experts);
  std::ifstream in(dir / "metrics.csv");
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header.starts_with("step,train_nll,val_nll,L_b,f_0"));
  CHECK(first.starts_with("0,,"));
  fs::remove_all(dir);
}

TEST_CASE("pretraining corpus holds self-normalized lookback windows") {
  const Corpus c = generate_synthetic(small_synth()).corpus;
  const Splits s = split_corpus(c.length());
  Model m = init_model(tiny_config(1), training_vocab(c, s.train));
  TrainConfig t = quick(1);
  t.context_extension = 2;
  const auto corpus = pretrain_corpus(m, c, s.train, t);
  CHECK(corpus.size() == make_windows(c, s.train, 8, 0, 4).size());
  for (const PatchSet& p : corpus) {
    REQUIRE(p.count() == patch_count(8, 4));
    const auto v = unpatchify(p, 8);
    double mean = 0.0, sq = 0.0;
    for (double x : v) mean += x / 8.0;
    for (double x : v) sq += (x - mean) * (x - mean) / 8.0;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(std::abs(sq - 1.0) < 1e-9);
  }
}
