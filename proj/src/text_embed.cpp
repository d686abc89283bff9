#include "captime/text_embed.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <stdexcept>

#include "captime/hash.hpp"

namespace captime {

namespace {

const std::vector<std::string> kSpecialTokens = {"<pad>", "<unk>", "<query>", "<sep>"};

bool is_boundary(unsigned char c) {
  if (c >= 0x80) return false;
  return std::isspace(c) || std::ispunct(c);
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const auto& t : kSpecialTokens) insert(t);
}

void Vocabulary::insert(std::string token) {
  if (index_.count(token)) throw std::invalid_argument("vocabulary: duplicate token '" + token + "'");
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& corpus, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& text : corpus) {
    for (auto& seg : segment_text(text)) ++counts[seg.token];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : counts) {
    if (n >= min_freq && std::find(kSpecialTokens.begin(), kSpecialTokens.end(), tok) == kSpecialTokens.end()) {
      kept.emplace_back(tok, n);
    }
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (auto& [tok, _] : kept) v.insert(tok);
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  try {
    return from_tokens(lines);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("vocabulary file " + path.string() + ": " + e.what());
  }
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kNumSpecial) throw std::invalid_argument("missing special tokens");
  for (std::size_t i = 0; i < kNumSpecial; ++i) {
    if (tokens[i] != kSpecialTokens[i]) {
      throw std::invalid_argument("line " + std::to_string(i + 1) + ": expected " + kSpecialTokens[i] + ", found '" +
                                  tokens[i] + "'");
    }
  }
  Vocabulary v;
  for (std::size_t i = kNumSpecial; i < tokens.size(); ++i) v.insert(tokens[i]);
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = fnv1a("");
  for (const auto& t : tokens_) {
    h = fnv1a(t, h);
    h = fnv1a("\n", h);
  }
  return h;
}

std::vector<Segment> segment_text(std::string_view text) {
  std::vector<Segment> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_boundary(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t begin = i;
    while (i < text.size() && !is_boundary(static_cast<unsigned char>(text[i]))) ++i;
    if (i > begin) {
      Segment s{std::string(text.substr(begin, i - begin)), begin, i};
      for (char& c : s.token) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

TextPrompt tokenize(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("tokenize: max_len must be >= 1");
  TextPrompt p;
  for (const auto& seg : segment_text(text)) {
    if (p.token_ids.size() == max_len) break;
    p.token_ids.push_back(vocab.id(seg.token));
    p.spans.emplace_back(seg.begin, seg.end);
  }
  if (p.token_ids.empty()) {
    p.token_ids.push_back(Vocabulary::kPad);
    p.spans.emplace_back(0, 0);
  }
  return p;
}

TextPrompt build_prompt(const std::vector<TextRecord>& texts, double window_start, double window_end,
                        const Vocabulary& vocab, std::size_t max_len) {
  if (max_len == 0) throw std::invalid_argument("build_prompt: max_len must be >= 1");
  std::vector<const TextRecord*> hits;
  for (const auto& t : texts) {
    if (t.start <= window_end && t.end >= window_start) hits.push_back(&t);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const TextRecord* a, const TextRecord* b) { return a->start < b->start; });

  TextPrompt p;
  std::size_t offset = 0;
  for (const TextRecord* t : hits) {
    if (!p.token_ids.empty() && p.token_ids.size() < max_len) {
      p.token_ids.push_back(Vocabulary::kSep);
      p.spans.emplace_back(offset, offset);
    }
    for (const auto& seg : segment_text(t->text)) {
      if (p.token_ids.size() == max_len) break;
      p.token_ids.push_back(vocab.id(seg.token));
      p.spans.emplace_back(offset + seg.begin, offset + seg.end);
    }
    // Texts are joined with a single newline in the span coordinate system.
    offset += t->text.size() + 1;
    if (p.token_ids.size() == max_len) break;
  }
  if (p.token_ids.empty()) {
    p.token_ids.push_back(Vocabulary::kPad);
    p.spans.emplace_back(0, 0);
  }
  return p;
}

Tensor embed(const TextPrompt& prompt, const Tensor& table) {
  const std::size_t d = table.cols();
  Tensor out = Tensor::matrix(prompt.size(), d);
  for (std::size_t i = 0; i < prompt.size(); ++i) {
    const TokenId id = prompt.token_ids[i];
    if (id >= table.rows()) {
      throw std::out_of_range("embed: token id " + std::to_string(id) + " outside table of " +
                              std::to_string(table.rows()) + " rows");
    }
    if (id == Vocabulary::kPad) continue;
    std::copy_n(table.data().begin() + id * d, d, out.data().begin() + i * d);
  }
  return out;
}

}  // namespace captime
