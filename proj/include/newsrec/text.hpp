// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace newsrec {

inline constexpr int kPadId = 0;
inline constexpr int kUnkId = 1;
inline constexpr int kClsId = 2;
inline constexpr int kMaskId = 3;
inline constexpr int kNumReserved = 4;

/// Lowercases and splits a title into word tokens. Unicode whitespace and
/// punctuation both separate tokens; punctuation itself is dropped.
std::vector<std::string> split_words(std::string_view text);

class Vocabulary {
 public:
  /// Vocabulary holding only the reserved tokens.
  Vocabulary();

  /// Keeps tokens seen at least `min_count` times, most frequent first and
  /// ties in byte order, up to `max_size` entries including reserved ones.
  static Vocabulary build(std::span<const std::string> corpus, std::size_t min_count,
                          std::size_t max_size);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;  // kUnkId when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// "#NRVOCAB v1" header, then one non-reserved token per line in id order.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> mask;
  /// Token count including CLS before truncation.
  std::size_t original_length = 0;

  /// Number of unmasked positions (CLS included).
  std::size_t real_length() const;
};

/// CLS + word ids, truncated and padded to exactly `max_len` positions.
TokenSequence tokenize(std::string_view title, const Vocabulary& vocab, std::size_t max_len);
/// Space-joined tokens of the real non-CLS positions.
std::string detokenize(const TokenSequence& seq, const Vocabulary& vocab);

struct MlmExample {
  TokenSequence corrupted;
  std::vector<std::pair<std::size_t, int>> targets;  // (position, original id)
};

/// Selects real non-CLS positions independently with probability
/// `mask_rate` (forcing one if none were hit) and corrupts them 80/10/10
/// into MASK / a random non-reserved id / unchanged.
MlmExample mask_for_mlm(const TokenSequence& seq, double mask_rate, std::uint64_t seed,
                        std::size_t vocab_size);

}  // namespace newsrec
