#include "captime/data_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "json.hpp"

namespace captime {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<TextRecord> load_texts_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open texts file " + path.string());
  std::vector<TextRecord> out;
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": malformed JSON: " + e.what());
    }
    TextRecord r;
    try {
      r.start = j.at("start").get<double>();
      r.end = j.at("end").get<double>();
      r.text = j.at("text").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(where + ": text record needs numeric start/end and string text: " + e.what());
    }
    if (r.end < r.start) {
      throw DataError(where + ": text record ends before it starts (start " + fmt(r.start) + ", end " + fmt(r.end) + ")");
    }
    out.push_back(std::move(r));
  }
  return out;
}

Corpus load_csv(const std::filesystem::path& series_path, const std::filesystem::path& texts_path) {
  std::ifstream in(series_path);
  if (!in) throw DataError("cannot open series file " + series_path.string());
  Corpus c;
  std::string line;
  if (!std::getline(in, line)) throw DataError(series_path.string() + ": empty file");
  auto header = split_csv_line(line);
  if (header.size() < 2 || trim(header[0]) != "timestamp") {
    throw DataError(series_path.string() + ":1: header must be timestamp,<channel>,...");
  }
  for (std::size_t i = 1; i < header.size(); ++i) c.channel_names.push_back(trim(header[i]));
  const std::size_t nc = c.channel_names.size();
  std::vector<std::vector<std::optional<double>>> raw(nc);

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = series_path.string() + ":" + std::to_string(lineno);
    auto cells = split_csv_line(line);
    if (cells.size() != nc + 1) {
      throw DataError(where + ": expected " + std::to_string(nc + 1) + " cells, found " + std::to_string(cells.size()));
    }
    auto ts = parse_double(trim(cells[0]));
    if (!ts) throw DataError(where + ": unparseable timestamp '" + cells[0] + "'");
    if (!c.timestamps.empty() && *ts <= c.timestamps.back()) {
      throw DataError(where + ": timestamps must be strictly increasing");
    }
    c.timestamps.push_back(*ts);
    for (std::size_t k = 0; k < nc; ++k) {
      const std::string cell = trim(cells[k + 1]);
      if (cell.empty()) {
        raw[k].push_back(std::nullopt);
        continue;
      }
      auto v = parse_double(cell);
      if (!v) throw DataError(where + ": unparseable value '" + cell + "' in column " + c.channel_names[k]);
      raw[k].push_back(v);
    }
  }

  c.channels.resize(nc);
  for (std::size_t k = 0; k < nc; ++k) {
    std::optional<double> first;
    for (const auto& v : raw[k]) {
      if (v) {
        first = v;
        break;
      }
    }
    if (!first) throw DataError(series_path.string() + ": channel " + c.channel_names[k] + " has no values");
    double last = *first;  // leading gaps take the first observed value
    for (const auto& v : raw[k]) {
      if (v) last = *v;
      c.channels[k].push_back(last);
    }
  }
  if (!texts_path.empty()) c.texts = load_texts_jsonl(texts_path);
  return c;
}

void write_series_csv(const std::filesystem::path& path, const Corpus& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "timestamp";
  for (const auto& n : c.channel_names) out << ',' << n;
  out << '\n';
  for (std::size_t t = 0; t < c.length(); ++t) {
    out << fmt(c.timestamps[t]);
    for (const auto& ch : c.channels) out << ',' << fmt(ch[t]);
    out << '\n';
  }
}

void write_texts_jsonl(const std::filesystem::path& path, const std::vector<TextRecord>& texts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : texts) out << nlohmann::json{{"start", t.start}, {"end", t.end}, {"text", t.text}}.dump() << '\n';
}

Splits split_corpus(std::size_t length, double train_frac, double val_frac) {
  if (!(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac < 1.0)) {
    throw std::invalid_argument("split fractions must satisfy 0 < train, 0 <= val, train + val < 1");
  }
  const auto a = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(length)));
  const auto b = static_cast<std::size_t>(std::floor((train_frac + val_frac) * static_cast<double>(length)));
  return {{0, a}, {a, b}, {b, length}};
}

std::vector<Window> make_windows(const Corpus& c, Range range, std::size_t lookback, std::size_t horizon,
                                 std::size_t stride, std::size_t align) {
  if (stride == 0) throw std::invalid_argument("make_windows: stride must be >= 1");
  if (range.end > c.length() || range.begin > range.end) throw std::out_of_range("make_windows: range outside corpus");
  std::vector<Window> out;
  const std::size_t span = lookback + horizon;
  if (range.size() < span) return out;
  std::size_t first = range.begin;
  if (align > 0) first = (range.begin + align - 1) / align * align;
  for (std::size_t ch = 0; ch < c.num_channels(); ++ch) {
    for (std::size_t s = first; s + span <= range.end; s += stride) out.push_back({ch, s, lookback, horizon, lookback});
  }
  return out;
}

std::vector<double> window_values(const Corpus& c, const Window& w) {
  const auto& ch = c.channels.at(w.channel);
  if (w.start + w.lookback + w.horizon > ch.size()) throw std::out_of_range("window_values: window past corpus end");
  return {ch.begin() + static_cast<std::ptrdiff_t>(w.start),
          ch.begin() + static_cast<std::ptrdiff_t>(w.start + w.lookback + w.horizon)};
}

TextPrompt window_prompt(const Corpus& c, const Window& w, const Vocabulary& vocab, std::size_t max_len) {
  const std::size_t ctx = w.context == 0 ? w.lookback : w.context;
  return build_prompt(c.texts, c.timestamps.at(w.start), c.timestamps.at(w.start + ctx - 1), vocab, max_len);
}

std::string_view regime_word(Regime r) {
  switch (r) {
    case Regime::kSurge: return "surge";
    case Regime::kDrop: return "drop";
    case Regime::kFlat: return "flat";
  }
  return "flat";
}

std::string regime_text(Regime r) { return "Outlook: demand " + std::string(regime_word(r)) + " expected next period."; }

SyntheticCorpus generate_synthetic(const SyntheticSpec& synth) {
  if (synth.segment == 0 || synth.length == 0) throw std::invalid_argument("synthetic: length and segment must be >= 1");
  if (!(synth.period > 0.0) || synth.noise < 0.0) throw std::invalid_argument("synthetic: need period > 0, noise >= 0");
  const std::size_t span = synth.announce_span == 0 ? synth.segment : std::min(synth.announce_span, synth.segment);
  std::mt19937_64 rng(synth.seed);
  std::uniform_int_distribution<int> pick(0, 2);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticCorpus out;
  Corpus& c = out.corpus;
  c.channel_names = {"value"};
  c.channels.assign(1, {});
  const std::size_t segments = (synth.length + synth.segment - 1) / synth.segment;
  for (std::size_t k = 0; k < segments; ++k) {
    const Regime r = synth.only_flat ? Regime::kFlat : static_cast<Regime>(pick(rng));
    out.regimes.push_back(r);
    if (k > 0) {
      const double s = static_cast<double>(k * synth.segment);
      c.texts.push_back({s - static_cast<double>(span), s - 1.0, regime_text(r)});
    }
  }
  double level = 0.0;
  for (std::size_t t = 0; t < synth.length; ++t) {
    const Regime r = out.regimes[t / synth.segment];
    const double slope = r == Regime::kSurge ? synth.slope : r == Regime::kDrop ? -synth.slope : 0.0;
    level += slope;
    const double sd = synth.noise * ((synth.hetero && r != Regime::kFlat) ? 2.0 : 1.0);
    const double season = std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / synth.period);
    c.timestamps.push_back(static_cast<double>(t));
    out.level.push_back(level);
    c.channels[0].push_back(season + level + sd * gauss(rng));
  }
  return out;
}

}  // namespace captime
