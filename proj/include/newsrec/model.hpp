// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "newsrec/news_encoder.hpp"
#include "newsrec/user_encoder.hpp"

namespace newsrec {

/// Full two-tower configuration: news tower, user tower, and the sizes of
/// the id spaces they embed.
struct ModelSpec {
  NewsEncoderSpec news;
  UserEncoderSpec user;
  std::size_t vocab_size = 0;
  std::size_t max_title_len = 30;

  void validate() const;
  std::string to_json() const;
  static ModelSpec from_json(const std::string& text);
  /// FNV-1a over the canonical JSON form, as 16 hex digits.
  std::string hash() const;
};

std::size_t param_count(const ModelSpec& spec);

class RecModel {
 public:
  RecModel() = default;
  RecModel(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const NewsEncoder& news_encoder() const { return news_; }
  const UserEncoder& user_encoder() const { return user_; }

  /// [S x d] embeddings of the given titles.
  Var encode_news(Tape& tape, std::span<const TokenSequence> seqs) const;
  Var encode_users(Tape& tape, Var news, std::span<const UserInput> users) const;

  /// Applies the MINI_PLM finetune policy from the spec; other encoders
  /// stay fully trainable.
  void apply_finetune_policy();

  void save(const std::string& dir) const;
  static RecModel load(const std::string& dir);

 private:
  ModelSpec spec_;
  ParameterStore store_;
  NewsEncoder news_;
  UserEncoder user_;
};

/// News encoder plus the masked-token head used for pretraining. The head
/// ties its output projection to the token embedding table and adds a
/// per-token bias.
class MlmModel {
 public:
  MlmModel() = default;
  MlmModel(const NewsEncoderSpec& spec, std::size_t vocab_size, std::size_t max_len,
           std::uint64_t seed);

  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const NewsEncoder& encoder() const { return encoder_; }

  /// Mean cross-entropy of the original ids at the target positions.
  Var loss(Tape& tape, std::span<const TokenSequence> corrupted,
           std::span<const std::vector<std::pair<std::size_t, int>>> targets) const;

 private:
  ParameterStore store_;
  NewsEncoder encoder_;
  std::size_t out_bias_ = 0;
};

}  // namespace newsrec
