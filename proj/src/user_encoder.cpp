// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/user_encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "newsrec/error.hpp"
#include "newsrec/news_encoder.hpp"
#include "newsrec/ops.hpp"

namespace newsrec {
namespace {

constexpr double kTableStd = 0.02;

// Glorot-normal scale for a [fan_in x fan_out] weight; vectors count as one
// output column.
double glorot_std(const Shape& shape) {
  const double fan_in = static_cast<double>(shape[0]);
  const double fan_out = shape.size() > 1 ? static_cast<double>(shape[1]) : 1.0;
  return std::sqrt(2.0 / (fan_in + fan_out));
}

Var linear(Tape& tape, Var x, std::size_t w, std::size_t b) {
  return ops::add_bias(ops::matmul(x, tape.param(w)), tape.param(b));
}

}  // namespace

const char* to_string(UserEncoderKind kind) {
  switch (kind) {
    case UserEncoderKind::kGru: return "GRU";
    case UserEncoderKind::kAdditiveAttention: return "ADDITIVE_ATTN";
    case UserEncoderKind::kNpa: return "NPA_PERSONALIZED";
    case UserEncoderKind::kLstur: return "LSTUR";
    case UserEncoderKind::kNrms: return "NRMS_SELF_ATTN";
  }
  return "?";
}

UserEncoderKind parse_user_encoder_kind(std::string_view s) {
  if (s == "GRU") return UserEncoderKind::kGru;
  if (s == "ADDITIVE_ATTN") return UserEncoderKind::kAdditiveAttention;
  if (s == "NPA_PERSONALIZED") return UserEncoderKind::kNpa;
  if (s == "LSTUR") return UserEncoderKind::kLstur;
  if (s == "NRMS_SELF_ATTN") return UserEncoderKind::kNrms;
  throw ConfigError("unknown user encoder kind '" + std::string(s) + "'");
}

void UserEncoderSpec::validate() const {
  if (d_model == 0) throw ConfigError("user encoder d_model must be positive");
  if (kind == UserEncoderKind::kNrms && (num_heads == 0 || d_model % num_heads != 0)) {
    throw ConfigError("user encoder d_model must be divisible by num_heads");
  }
  if (user_table_size == 0) throw ConfigError("user table needs the fallback row");
  if (max_history == 0) throw ConfigError("max_history must be positive");
}

std::size_t param_count(const UserEncoderSpec& spec) {
  const std::size_t d = spec.d_model, a = spec.attention_dim();
  const std::size_t gru = 2 * (d * 3 * d + 3 * d);
  const std::size_t pool = d * a + 2 * a;
  switch (spec.kind) {
    case UserEncoderKind::kGru: return gru;
    case UserEncoderKind::kAdditiveAttention: return pool;
    case UserEncoderKind::kNpa: return spec.user_table_size * d + d * a + a + d * a + a;
    case UserEncoderKind::kLstur: return spec.user_table_size * d + gru;
    case UserEncoderKind::kNrms: return 4 * (d * d + d) + pool;
  }
  return 0;
}

UserIndex::UserIndex(std::vector<std::string> ids) {
  for (auto& id : ids) {
    if (rows_.count(id)) continue;
    rows_.emplace(id, ids_.size() + 1);
    ids_.push_back(std::move(id));
  }
}

std::size_t UserIndex::lookup(const std::string& id) const {
  auto it = rows_.find(id);
  return it == rows_.end() ? 0 : it->second;
}

std::string UserIndex::serialize() const {
  std::string out;
  for (const auto& id : ids_) out += id + "\n";
  return out;
}

UserIndex UserIndex::deserialize(const std::string& text) {
  std::vector<std::string> ids;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) ids.push_back(line);
  return UserIndex(std::move(ids));
}

UserEncoder::UserEncoder(const UserEncoderSpec& spec, ParameterStore& s, std::mt19937_64& rng,
                         const std::string& prefix)
    : spec_(spec), prefix_(prefix) {
  spec_.validate();
  const std::size_t d = spec_.d_model, a = spec_.attention_dim();
  const auto& p = prefix_;
  auto weight = [&](const std::string& n, Shape sh) {
    const double std = glorot_std(sh);
    return s.add_normal(p + n, std::move(sh), std, rng);
  };
  auto zeros = [&](const std::string& n, Shape sh) { return s.add(p + n, Tensor(std::move(sh))); };
  if (spec_.uses_user_table()) {
    user_table_ = s.add_normal(p + "user_emb", {spec_.user_table_size, d}, kTableStd, rng);
  }
  switch (spec_.kind) {
    case UserEncoderKind::kGru:
    case UserEncoderKind::kLstur:
      gru_wx_ = weight("gru.wx", {d, 3 * d});
      gru_bx_ = zeros("gru.bx", {3 * d});
      gru_wh_ = weight("gru.wh", {d, 3 * d});
      gru_bh_ = zeros("gru.bh", {3 * d});
      return;
    case UserEncoderKind::kNrms:
      wq_ = weight("attn.wq", {d, d});
      bq_ = zeros("attn.bq", {d});
      wk_ = weight("attn.wk", {d, d});
      bk_ = zeros("attn.bk", {d});
      wv_ = weight("attn.wv", {d, d});
      bv_ = zeros("attn.bv", {d});
      wo_ = weight("attn.wo", {d, d});
      bo_ = zeros("attn.bo", {d});
      break;
    case UserEncoderKind::kNpa:
      npa_w_ = weight("npa.w", {d, a});
      npa_b_ = zeros("npa.b", {a});
      break;
    case UserEncoderKind::kAdditiveAttention:
      break;
  }
  pool_w_ = weight("pool.w", {d, a});
  pool_b_ = zeros("pool.b", {a});
  if (spec_.kind != UserEncoderKind::kNpa) pool_q_ = weight("pool.q", {a});
}

Var UserEncoder::gru(Tape& tape, Var gx, std::size_t begin, std::size_t end, Var h) const {
  const std::size_t d = spec_.d_model;
  Var wh = tape.param(gru_wh_);
  Var bh = tape.param(gru_bh_);
  for (std::size_t i = begin; i < end; ++i) {
    const int r = static_cast<int>(i);
    Var gxi = ops::gather_rows(gx, std::span<const int>(&r, 1));
    Var gh = ops::add_bias(ops::matmul(h, wh), bh);
    Var reset = ops::sigmoid(ops::add(ops::slice_cols(gxi, 0, d), ops::slice_cols(gh, 0, d)));
    Var update = ops::sigmoid(ops::add(ops::slice_cols(gxi, d, 2 * d), ops::slice_cols(gh, d, 2 * d)));
    Var cand = ops::tanh(ops::add(ops::slice_cols(gxi, 2 * d, 3 * d),
                                  ops::mul(reset, ops::slice_cols(gh, 2 * d, 3 * d))));
    // h' = (1 - z) * n + z * h
    h = ops::add(ops::mul(ops::add_scalar(ops::scale(update, -1.0), 1.0), cand), ops::mul(update, h));
  }
  return h;
}

Var UserEncoder::encode_batch(Tape& tape, Var news, std::span<const UserInput> users,
                              Tensor* weights) const {
  if (users.empty()) throw DimensionError("encode_batch needs at least one user");
  const std::size_t d = spec_.d_model;
  if (news.value().rank() != 2 || news.shape()[1] != d) {
    throw DimensionError("news embeddings " + shape_str(news.shape()) +
                         " do not match user encoder width " + std::to_string(d));
  }
  std::vector<int> all_rows;
  std::vector<std::size_t> offsets{0};
  std::vector<int> user_rows;
  for (const auto& u : users) {
    if (spec_.uses_user_table() && u.user_index >= spec_.user_table_size) {
      throw IndexError("user index " + std::to_string(u.user_index) + " outside the user table");
    }
    // Keep only the most recent max_history clicks.
    const std::size_t n = u.rows.size();
    const std::size_t skip = n > spec_.max_history ? n - spec_.max_history : 0;
    all_rows.insert(all_rows.end(), u.rows.begin() + static_cast<long>(skip), u.rows.end());
    offsets.push_back(all_rows.size());
    user_rows.push_back(static_cast<int>(u.user_index));
  }
  Var packed = ops::gather_rows(news, all_rows);

  switch (spec_.kind) {
    case UserEncoderKind::kGru:
    case UserEncoderKind::kLstur: {
      Var gx = ops::add_bias(ops::matmul(packed, tape.param(gru_wx_)), tape.param(gru_bx_));
      Var zeros = tape.constant(Tensor(Shape{1, d}));
      std::vector<Var> finals;
      for (std::size_t s = 0; s < users.size(); ++s) {
        Var h0 = zeros;
        if (spec_.kind == UserEncoderKind::kLstur) {
          h0 = ops::gather_rows(tape.param(user_table_), std::span<const int>(&user_rows[s], 1));
        }
        finals.push_back(gru(tape, gx, offsets[s], offsets[s + 1], h0));
      }
      return finals.size() == 1 ? finals[0] : ops::stack_rows(finals);
    }
    case UserEncoderKind::kAdditiveAttention:
      return additive_attention_pool(tape, packed, offsets, pool_w_, pool_b_, pool_q_, weights);
    case UserEncoderKind::kNrms: {
      Var q = linear(tape, packed, wq_, bq_);
      Var k = linear(tape, packed, wk_, bk_);
      Var v = linear(tape, packed, wv_, bv_);
      Var ctx = linear(tape, ops::multihead_attention(q, k, v, offsets, spec_.num_heads), wo_, bo_);
      return additive_attention_pool(tape, ctx, offsets, pool_w_, pool_b_, pool_q_, weights);
    }
    case UserEncoderKind::kNpa: {
      Var e = ops::gather_rows(tape.param(user_table_), user_rows);
      Var queries = ops::tanh(linear(tape, e, npa_w_, npa_b_));
      Var keys = ops::tanh(linear(tape, packed, pool_w_, pool_b_));
      Var a = ops::segment_softmax(ops::segment_rowdot(keys, queries, offsets), offsets);
      if (weights) *weights = a.value();
      return ops::segment_weighted_sum(a, packed, offsets);
    }
  }
  throw ConfigError("unknown user encoder kind");
}

Var UserEncoder::encode(Tape& tape, const ClickHistory& history, Tensor* weights) const {
  const Var& emb = history.news_embeddings;
  if (emb.value().rank() != 2 || history.mask.size() != emb.shape()[0]) {
    throw DimensionError("click history mask does not match its embeddings");
  }
  UserInput input{history.user_index, {}};
  bool padding = false;
  for (std::size_t i = 0; i < history.mask.size(); ++i) {
    if (history.mask[i]) {
      if (padding) throw DataError("click history must be right-padded");
      input.rows.push_back(static_cast<int>(i));
    } else {
      padding = true;
    }
  }
  if (input.rows.empty() && (spec_.kind == UserEncoderKind::kAdditiveAttention ||
                             spec_.kind == UserEncoderKind::kNrms)) {
    throw DimensionError(std::string(to_string(spec_.kind)) + " needs at least one click");
  }
  return ops::row(encode_batch(tape, emb, std::span<const UserInput>(&input, 1), weights), 0);
}

double click_score(const Tensor& user, const Tensor& news) {
  if (user.size() != news.size()) {
    throw DimensionError("click_score: user " + shape_str(user.shape()) + " vs news " +
                         shape_str(news.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < user.size(); ++i) s += user[i] * news[i];
  return s;
}

std::vector<std::size_t> rank_by_score(std::span<const double> scores) {
  if (scores.empty()) throw DimensionError("cannot rank an empty candidate list");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

std::vector<std::size_t> rank_candidates(const Tensor& user, std::span<const Tensor> candidates) {
  std::vector<double> scores;
  scores.reserve(candidates.size());
  for (const auto& c : candidates) scores.push_back(click_score(user, c));
  return rank_by_score(scores);
}

}  // namespace newsrec
