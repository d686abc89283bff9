#pragma once

// Corpus ingestion (series CSV + texts JSONL), chronological splits,
// windowing, and the synthetic regime corpus generator.
//
// Series CSV: header `timestamp,<channel>,...`; numeric cells, empty cells
// are forward-filled (leading gaps back-filled). Texts JSONL: one object per
// line, {"start": t0, "end": t1, "text": "..."} with t0 <= t1.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "captime/text_embed.hpp"

namespace captime {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Corpus {
  std::vector<double> timestamps;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;  // channels[c][t]
  std::vector<TextRecord> texts;

  std::size_t length() const { return timestamps.size(); }
  std::size_t num_channels() const { return channels.size(); }
};

Corpus load_csv(const std::filesystem::path& series_path, const std::filesystem::path& texts_path = {});
void write_series_csv(const std::filesystem::path& path, const Corpus& c);
void write_texts_jsonl(const std::filesystem::path& path, const std::vector<TextRecord>& texts);
std::vector<TextRecord> load_texts_jsonl(const std::filesystem::path& path);

/// Half-open index range [begin, end).
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct Splits {
  Range train, val, test;
};

/// Chronological train/val/test split by fraction of length.
Splits split_corpus(std::size_t length, double train_frac = 0.7, double val_frac = 0.1);

/// One (channel, window) sample. Values cover [start, start + lookback +
/// horizon). The first `context` values define the normalization stats and
/// the text prompt; the rest of the lookback (if any) is the already-known
/// continuation that autoregressive generation would have produced.
struct Window {
  std::size_t channel = 0;
  std::size_t start = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::size_t context = 0;
};

/// Chronological windows per channel inside `range`:
/// floor((len - lookback - horizon) / stride) + 1 per channel. When `align`
/// is non-zero, the first start is rounded up to a multiple of `align`.
std::vector<Window> make_windows(const Corpus& c, Range range, std::size_t lookback, std::size_t horizon,
                                 std::size_t stride, std::size_t align = 0);

std::vector<double> window_values(const Corpus& c, const Window& w);
/// Prompt from texts overlapping the first `context` timestamps.
TextPrompt window_prompt(const Corpus& c, const Window& w, const Vocabulary& vocab, std::size_t max_len);

enum class Regime { kFlat = 0, kSurge = 1, kDrop = 2 };

std::string_view regime_word(Regime r);
std::string regime_text(Regime r);

struct SyntheticSpec {
  std::size_t length = 6400;
  double period = 16.0;
  double noise = 0.1;
  double slope = 0.2;
  /// A regime is drawn i.i.d. for each segment of this many steps.
  std::size_t segment = 32;
  /// Announcement covers the last `announce_span` steps of the preceding
  /// segment (0 means the whole segment).
  std::size_t announce_span = 0;
  /// Noise doubles inside surge and drop segments.
  bool hetero = false;
  bool only_flat = false;
  std::uint64_t seed = 0;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<Regime> regimes;  // one per segment
  std::vector<double> level;    // regime component alone
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& synth);

}  // namespace captime
