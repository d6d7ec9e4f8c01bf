// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "newsrec/autodiff.hpp"

namespace newsrec {

enum class UserEncoderKind { kGru, kAdditiveAttention, kNpa, kLstur, kNrms };

const char* to_string(UserEncoderKind kind);
UserEncoderKind parse_user_encoder_kind(std::string_view s);

struct UserEncoderSpec {
  UserEncoderKind kind = UserEncoderKind::kNrms;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t pool_dim = 0;         // 0 means d_model
  std::size_t user_table_size = 1;  // NPA/LSTUR; row 0 is the cold-start fallback
  std::size_t max_history = 50;

  std::size_t attention_dim() const { return pool_dim ? pool_dim : d_model; }
  bool uses_user_table() const {
    return kind == UserEncoderKind::kNpa || kind == UserEncoderKind::kLstur;
  }
  void validate() const;
};

std::size_t param_count(const UserEncoderSpec& spec);

/// Clicked-news embeddings of one user, most recent last, right-padded.
struct ClickHistory {
  std::size_t user_index = 0;
  Var news_embeddings;  // [T x d]
  std::vector<int> mask;
};

/// One user of a batch: rows of a shared news-embedding matrix.
struct UserInput {
  std::size_t user_index = 0;
  std::vector<int> rows;
};

/// Maps external user ids to table rows. Row 0 is shared by unknown users.
class UserIndex {
 public:
  UserIndex() = default;
  explicit UserIndex(std::vector<std::string> ids);

  std::size_t lookup(const std::string& id) const;
  std::size_t table_size() const { return ids_.size() + 1; }
  const std::vector<std::string>& ids() const { return ids_; }

  /// One id per line; line i is table row i + 1.
  std::string serialize() const;
  static UserIndex deserialize(const std::string& text);

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::size_t> rows_;
};

class UserEncoder {
 public:
  UserEncoder() = default;
  UserEncoder(const UserEncoderSpec& spec, ParameterStore& store, std::mt19937_64& rng,
              const std::string& prefix = "user.");

  const UserEncoderSpec& spec() const { return spec_; }

  /// Single history. ADDITIVE_ATTN and NRMS reject an empty history; the
  /// GRU family returns its initial state. `weights` receives the final
  /// attention weights over the real clicks, when the encoder has any.
  Var encode(Tape& tape, const ClickHistory& history, Tensor* weights = nullptr) const;

  /// [B x d] user embeddings for a batch. Empty histories yield the initial
  /// GRU state or a zero row for attention encoders.
  Var encode_batch(Tape& tape, Var news, std::span<const UserInput> users,
                   Tensor* weights = nullptr) const;

  std::size_t user_table_index() const { return user_table_; }

 private:
  Var gru(Tape& tape, Var gx, std::size_t begin, std::size_t end, Var h0) const;

  UserEncoderSpec spec_;
  std::string prefix_;
  std::size_t user_table_ = 0;
  std::size_t gru_wx_ = 0, gru_bx_ = 0, gru_wh_ = 0, gru_bh_ = 0;
  std::size_t wq_ = 0, bq_ = 0, wk_ = 0, bk_ = 0, wv_ = 0, bv_ = 0, wo_ = 0, bo_ = 0;
  std::size_t npa_w_ = 0, npa_b_ = 0;
  std::size_t pool_w_ = 0, pool_b_ = 0, pool_q_ = 0;
};

/// u . h_c
double click_score(const Tensor& user, const Tensor& news);
/// Candidate indices by descending score; ties keep the lower index first.
std::vector<std::size_t> rank_candidates(const Tensor& user, std::span<const Tensor> candidates);
std::vector<std::size_t> rank_by_score(std::span<const double> scores);

}  // namespace newsrec
