// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/text.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "newsrec/error.hpp"

namespace newsrec {
namespace {

const char* const kReserved[kNumReserved] = {"[PAD]", "[UNK]", "[CLS]", "[MASK]"};
constexpr std::string_view kVocabHeader = "#NRVOCAB v1";

// Decodes one code point; malformed bytes decode as U+FFFD and advance one.
char32_t next_code_point(std::string_view s, std::size_t& i) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  auto cont = [&](std::size_t k) -> int {
    if (i + k >= s.size()) return -1;
    const auto b = static_cast<unsigned char>(s[i + k]);
    return (b & 0xC0) == 0x80 ? (b & 0x3F) : -1;
  };
  if (b0 < 0x80) {
    ++i;
    return b0;
  }
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  for (std::size_t k = 1; k < len; ++k) {
    int c = cont(k);
    if (c < 0) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | static_cast<char32_t>(c);
  }
  i += len;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_space(char32_t c) {
  return (c >= 0x09 && c <= 0x0D) || c == 0x20 || c == 0x85 || c == 0xA0 || c == 0x1680 ||
         (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
         c == 0x205F || c == 0x3000;
}

bool is_punct(char32_t c) {
  if (c < 0x80) {
    return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
           (c >= 0x7B && c <= 0x7E);
  }
  return (c >= 0xA1 && c <= 0xBF && c != 0xAA && c != 0xB2 && c != 0xB3 && c != 0xB5 &&
          c != 0xB9 && c != 0xBA && c != 0xBC && c != 0xBD && c != 0xBE) ||
         c == 0xD7 || c == 0xF7 || (c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) ||
         (c >= 0x3001 && c <= 0x3003) || (c >= 0x3008 && c <= 0x3011) ||
         (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) || c == 0xFFFD;
}

char32_t to_lower(char32_t c) {
  if (c >= 'A' && c <= 'Z') return c + 32;
  if ((c >= 0xC0 && c <= 0xDE) && c != 0xD7) return c + 32;
  if (c == 0x178) return 0xFF;
  if (c >= 0x100 && c <= 0x17F && c != 0x130 && c != 0x138 && c != 0x149 && c != 0x17F) {
    // Latin Extended-A alternates upper/lower, with a parity flip at U+0139..U+0148.
    const bool odd_upper = (c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E);
    if (odd_upper ? (c % 2 == 1) : (c % 2 == 0)) return c + 1;
    return c;
  }
  if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
  if (c >= 0x410 && c <= 0x42F) return c + 32;
  if (c >= 0x400 && c <= 0x40F) return c + 80;
  return c;
}

}  // namespace

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = next_code_point(text, i);
    if (is_space(cp) || is_punct(cp)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    append_utf8(cur, to_lower(cp));
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

Vocabulary::Vocabulary() {
  for (int i = 0; i < kNumReserved; ++i) {
    tokens_.emplace_back(kReserved[i]);
    index_.emplace(kReserved[i], i);
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  Vocabulary v;
  for (auto& t : tokens) {
    if (t.empty()) throw DataError("empty vocabulary token");
    if (v.index_.count(t)) throw DataError("duplicate vocabulary token '" + t + "'");
    v.index_.emplace(t, static_cast<int>(v.tokens_.size()));
    v.tokens_.push_back(std::move(t));
  }
  return v;
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t min_count,
                             std::size_t max_size) {
  if (corpus.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  if (max_size < static_cast<std::size_t>(kNumReserved)) {
    throw ConfigError("vocabulary max_size must be at least 4");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& title : corpus)
    for (auto& w : split_words(title)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, c] : counts) {
    if (c >= min_count && !std::count(std::begin(kReserved), std::end(kReserved), w)) {
      ranked.emplace_back(w, c);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - kNumReserved);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(std::move(ranked[i].first));
  return from_tokens(std::move(tokens));
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw IndexError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::serialize() const {
  std::string out(kVocabHeader);
  out += '\n';
  for (std::size_t i = kNumReserved; i < tokens_.size(); ++i) {
    out += tokens_[i];
    out += '\n';
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto nl = text.find('\n', start);
    if (nl == std::string_view::npos) nl = text.size();
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty() || lines[0] != kVocabHeader) throw DataError("missing #NRVOCAB v1 header");
  lines.erase(lines.begin());
  return from_tokens(std::move(lines));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write vocabulary " + path);
  os << serialize();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read vocabulary " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return deserialize(ss.str());
}

std::size_t TokenSequence::real_length() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

TokenSequence tokenize(std::string_view title, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 2) throw ConfigError("max title length must be at least 2");
  auto words = split_words(title);
  TokenSequence seq;
  seq.original_length = words.size() + 1;
  seq.ids.assign(max_len, kPadId);
  seq.mask.assign(max_len, 0);
  seq.ids[0] = kClsId;
  seq.mask[0] = 1;
  for (std::size_t i = 0; i < words.size() && i + 1 < max_len; ++i) {
    seq.ids[i + 1] = vocab.id(words[i]);
    seq.mask[i + 1] = 1;
  }
  return seq;
}

std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 1; i < seq.ids.size(); ++i) {
    if (!seq.mask[i]) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(seq.ids[i]);
  }
  return out;
}

MlmExample mask_for_mlm(const TokenSequence& seq, double mask_rate, std::uint64_t seed,
                        std::size_t vocab_size) {
  if (!(mask_rate > 0.0 && mask_rate < 1.0)) throw ConfigError("mask rate must be in (0, 1)");
  MlmExample ex{seq, {}};
  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i < seq.ids.size(); ++i)
    if (seq.mask[i]) candidates.push_back(i);
  if (candidates.empty()) return ex;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::size_t> chosen;
  for (auto pos : candidates)
    if (unit(rng) < mask_rate) chosen.push_back(pos);
  if (chosen.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    chosen.push_back(candidates[pick(rng)]);
  }
  const bool can_replace = vocab_size > static_cast<std::size_t>(kNumReserved);
  std::uniform_int_distribution<int> random_id(kNumReserved,
                                               std::max(kNumReserved, static_cast<int>(vocab_size) - 1));
  for (auto pos : chosen) {
    ex.targets.emplace_back(pos, seq.ids[pos]);
    const double u = unit(rng);
    if (u < 0.8) {
      ex.corrupted.ids[pos] = kMaskId;
    } else if (u < 0.9 && can_replace) {
      ex.corrupted.ids[pos] = random_id(rng);
    }
  }
  return ex;
}

}  // namespace newsrec
