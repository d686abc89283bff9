#pragma once

// Word-level tokenizer over a corpus-built vocabulary, prompt assembly from
// timestamped texts, and lookups into the frozen token-embedding table.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "captime/diffnum.hpp"

namespace captime {

using TokenId = std::uint32_t;

/// Text annotation valid over the closed interval [start, end].
struct TextRecord {
  double start = 0.0;
  double end = 0.0;
  std::string text;
};

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr TokenId kQuery = 2;
  static constexpr TokenId kSep = 3;
  static constexpr std::size_t kNumSpecial = 4;

  /// Special tokens only.
  Vocabulary();

  /// Keeps every normalized token seen at least `min_freq` times, ordered by
  /// descending frequency, then lexicographically.
  static Vocabulary build(const std::vector<std::string>& corpus, std::size_t min_freq = 2);
  static Vocabulary load(const std::filesystem::path& path);
  /// Full token list including the special header, in id order.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);
  void save(const std::filesystem::path& path) const;

  TokenId id(std::string_view token) const;
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }
  std::uint64_t hash() const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void insert(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TextPrompt {
  std::vector<TokenId> token_ids;
  /// Byte range [first, second) of each token in the source text; empty for
  /// pad and separator tokens.
  std::vector<std::pair<std::size_t, std::size_t>> spans;

  std::size_t size() const { return token_ids.size(); }
};

struct Segment {
  std::string token;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// ASCII-lowercased runs between whitespace and punctuation. Bytes >= 0x80
/// are kept as token characters, so UTF-8 sequences stay intact.
std::vector<Segment> segment_text(std::string_view text);

TextPrompt tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

/// Texts overlapping [window_start, window_end] (boundary contact counts),
/// ordered by start time, joined by separator tokens, truncated to max_len.
TextPrompt build_prompt(const std::vector<TextRecord>& texts, double window_start, double window_end,
                        const Vocabulary& vocab, std::size_t max_len);

/// Gathers table rows (V x D) for each token. The pad token always maps to a
/// zero row. The result is a plain tensor: no gradient reaches the table.
Tensor embed(const TextPrompt& prompt, const Tensor& table);

}  // namespace captime
