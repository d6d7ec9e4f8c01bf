// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/news_encoder.hpp"

#include "newsrec/error.hpp"
#include "newsrec/ops.hpp"

namespace newsrec {
namespace {

constexpr double kInitStd = 0.02;

std::size_t add_weight(ParameterStore& s, const std::string& name, Shape shape,
                       std::mt19937_64& rng) {
  return s.add_normal(name, std::move(shape), kInitStd, rng);
}

std::size_t add_zeros(ParameterStore& s, const std::string& name, Shape shape) {
  return s.add(name, Tensor(std::move(shape)));
}

std::size_t add_ones(ParameterStore& s, const std::string& name, Shape shape) {
  return s.add(name, Tensor(std::move(shape), 1.0));
}

Var linear(Tape& tape, Var x, std::size_t w, std::size_t b) {
  return ops::add_bias(ops::matmul(x, tape.param(w)), tape.param(b));
}

}  // namespace

const char* to_string(NewsEncoderKind kind) {
  switch (kind) {
    case NewsEncoderKind::kCnn: return "CNN";
    case NewsEncoderKind::kSelfAttention: return "SELF_ATTN";
    case NewsEncoderKind::kMiniPlm: return "MINI_PLM";
  }
  return "?";
}

const char* to_string(Pooling pooling) {
  switch (pooling) {
    case Pooling::kCls: return "CLS";
    case Pooling::kAverage: return "AVERAGE";
    case Pooling::kAttention: return "ATTENTION";
  }
  return "?";
}

NewsEncoderKind parse_news_encoder_kind(std::string_view s) {
  if (s == "CNN") return NewsEncoderKind::kCnn;
  if (s == "SELF_ATTN") return NewsEncoderKind::kSelfAttention;
  if (s == "MINI_PLM") return NewsEncoderKind::kMiniPlm;
  throw ConfigError("unknown news encoder kind '" + std::string(s) + "'");
}

Pooling parse_pooling(std::string_view s) {
  if (s == "CLS") return Pooling::kCls;
  if (s == "AVERAGE") return Pooling::kAverage;
  if (s == "ATTENTION") return Pooling::kAttention;
  throw ConfigError("unknown pooling mode '" + std::string(s) + "'");
}

void NewsEncoderSpec::validate() const {
  if (d_model == 0) throw ConfigError("d_model must be positive");
  if (num_heads == 0 || d_model % num_heads != 0) {
    throw ConfigError("d_model must be divisible by num_heads");
  }
  if (kind == NewsEncoderKind::kMiniPlm) {
    if (depth < 1) throw ConfigError("MINI_PLM depth must be at least 1");
    if (finetune_last_k > depth) throw ConfigError("finetune_last_k exceeds depth");
  }
  if (kind == NewsEncoderKind::kCnn && conv_window % 2 == 0) {
    throw ConfigError("conv_window must be odd");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0, 1)");
}

PackedTokens PackedTokens::pack(std::span<const TokenSequence> seqs) {
  PackedTokens p;
  p.offsets.push_back(0);
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      if (!s.mask[i]) continue;
      p.ids.push_back(s.ids[i]);
      p.positions.push_back(static_cast<int>(i));
    }
    p.offsets.push_back(p.ids.size());
  }
  return p;
}

std::size_t transformer_block_params(std::size_t d) { return 12 * d * d + 13 * d; }

std::size_t param_count(const NewsEncoderSpec& spec, std::size_t vocab_size, std::size_t max_len) {
  spec.validate();
  const std::size_t d = spec.d_model;
  std::size_t n = vocab_size * d;
  switch (spec.kind) {
    case NewsEncoderKind::kCnn:
      n += spec.conv_window * d * d + d;
      break;
    case NewsEncoderKind::kSelfAttention:
      n += 4 * (d * d + d);
      break;
    case NewsEncoderKind::kMiniPlm:
      n += max_len * d + spec.depth * transformer_block_params(d) + 2 * d;
      break;
  }
  if (spec.pooling == Pooling::kAttention) {
    const std::size_t a = spec.attention_dim();
    n += d * a + 2 * a;
  }
  return n;
}

NewsEncoder::NewsEncoder(const NewsEncoderSpec& spec, std::size_t vocab_size, std::size_t max_len,
                         ParameterStore& s, std::mt19937_64& rng, const std::string& prefix)
    : spec_(spec), vocab_size_(vocab_size), max_len_(max_len), prefix_(prefix) {
  spec_.validate();
  if (vocab_size < static_cast<std::size_t>(kNumReserved)) {
    throw ConfigError("vocabulary too small");
  }
  const std::size_t d = spec_.d_model;
  const auto& p = prefix_;
  tok_emb_ = add_weight(s, p + "tok_emb", {vocab_size, d}, rng);
  switch (spec_.kind) {
    case NewsEncoderKind::kCnn:
      conv_w_ = add_weight(s, p + "conv.w", {spec_.conv_window * d, d}, rng);
      conv_b_ = add_zeros(s, p + "conv.b", {d});
      break;
    case NewsEncoderKind::kSelfAttention:
      wq_ = add_weight(s, p + "attn.wq", {d, d}, rng);
      bq_ = add_zeros(s, p + "attn.bq", {d});
      wk_ = add_weight(s, p + "attn.wk", {d, d}, rng);
      bk_ = add_zeros(s, p + "attn.bk", {d});
      wv_ = add_weight(s, p + "attn.wv", {d, d}, rng);
      bv_ = add_zeros(s, p + "attn.bv", {d});
      wo_ = add_weight(s, p + "attn.wo", {d, d}, rng);
      bo_ = add_zeros(s, p + "attn.bo", {d});
      break;
    case NewsEncoderKind::kMiniPlm: {
      pos_emb_ = add_weight(s, p + "pos_emb", {max_len, d}, rng);
      for (std::size_t l = 0; l < spec_.depth; ++l) {
        const std::string b = p + "block" + std::to_string(l) + ".";
        Block blk{};
        blk.ln1_g = add_ones(s, b + "ln1.g", {d});
        blk.ln1_b = add_zeros(s, b + "ln1.b", {d});
        blk.wq = add_weight(s, b + "attn.wq", {d, d}, rng);
        blk.bq = add_zeros(s, b + "attn.bq", {d});
        blk.wk = add_weight(s, b + "attn.wk", {d, d}, rng);
        blk.bk = add_zeros(s, b + "attn.bk", {d});
        blk.wv = add_weight(s, b + "attn.wv", {d, d}, rng);
        blk.bv = add_zeros(s, b + "attn.bv", {d});
        blk.wo = add_weight(s, b + "attn.wo", {d, d}, rng);
        blk.bo = add_zeros(s, b + "attn.bo", {d});
        blk.ln2_g = add_ones(s, b + "ln2.g", {d});
        blk.ln2_b = add_zeros(s, b + "ln2.b", {d});
        blk.w1 = add_weight(s, b + "ffn.w1", {d, 4 * d}, rng);
        blk.b1 = add_zeros(s, b + "ffn.b1", {4 * d});
        blk.w2 = add_weight(s, b + "ffn.w2", {4 * d, d}, rng);
        blk.b2 = add_zeros(s, b + "ffn.b2", {d});
        blocks_.push_back(blk);
      }
      lnf_g_ = add_ones(s, p + "ln_f.g", {d});
      lnf_b_ = add_zeros(s, p + "ln_f.b", {d});
      break;
    }
  }
  if (spec_.pooling == Pooling::kAttention) {
    const std::size_t a = spec_.attention_dim();
    pool_w_ = add_weight(s, p + "pool.w", {d, a}, rng);
    pool_b_ = add_zeros(s, p + "pool.b", {a});
    pool_q_ = add_weight(s, p + "pool.q", {a}, rng);
  }
}

TokenHiddenStates NewsEncoder::hidden_states(Tape& tape, const PackedTokens& tokens,
                                             std::vector<Tensor>* attention) const {
  switch (spec_.kind) {
    case NewsEncoderKind::kCnn: return encode_cnn(tape, tokens);
    case NewsEncoderKind::kSelfAttention: return encode_self_attention(tape, tokens, attention);
    case NewsEncoderKind::kMiniPlm: return encode_mini_plm(tape, tokens, attention);
  }
  throw ConfigError("unknown news encoder kind");
}

TokenHiddenStates NewsEncoder::encode_cnn(Tape& tape, const PackedTokens& t) const {
  Var emb = ops::dropout(ops::embedding_lookup(tape.param(tok_emb_), t.ids), spec_.dropout);
  // Same-padded window: each column block holds the row at a fixed offset,
  // or zeros past the sequence edge.
  const auto half = static_cast<long long>(spec_.conv_window / 2);
  std::vector<Var> shifted;
  std::vector<int> idx(t.ids.size());
  for (long long o = -half; o <= half; ++o) {
    for (std::size_t s = 0; s + 1 < t.offsets.size(); ++s) {
      const auto b = static_cast<long long>(t.offsets[s]);
      const auto e = static_cast<long long>(t.offsets[s + 1]);
      for (long long i = b; i < e; ++i) {
        const long long j = i + o;
        idx[static_cast<std::size_t>(i)] = (j >= b && j < e) ? static_cast<int>(j) : -1;
      }
    }
    shifted.push_back(o == 0 ? emb : ops::gather_rows(emb, idx));
  }
  Var windows = shifted.size() == 1 ? shifted[0] : ops::concat_cols(shifted);
  Var out = ops::relu(linear(tape, windows, conv_w_, conv_b_));
  return {ops::dropout(out, spec_.dropout), t.offsets};
}

TokenHiddenStates NewsEncoder::encode_self_attention(Tape& tape, const PackedTokens& t,
                                                     std::vector<Tensor>* attention) const {
  Var x = ops::dropout(ops::embedding_lookup(tape.param(tok_emb_), t.ids), spec_.dropout);
  Var q = linear(tape, x, wq_, bq_);
  Var k = linear(tape, x, wk_, bk_);
  Var v = linear(tape, x, wv_, bv_);
  Var a = ops::multihead_attention(q, k, v, t.offsets, spec_.num_heads, attention);
  Var out = linear(tape, a, wo_, bo_);
  return {ops::dropout(out, spec_.dropout), t.offsets};
}

TokenHiddenStates NewsEncoder::encode_mini_plm(Tape& tape, const PackedTokens& t,
                                               std::vector<Tensor>* attention) const {
  for (int pos : t.positions) {
    if (static_cast<std::size_t>(pos) >= max_len_) {
      throw DimensionError("sequence longer than the position table (" +
                           std::to_string(max_len_) + ")");
    }
  }
  Var x = ops::add(ops::embedding_lookup(tape.param(tok_emb_), t.ids),
                   ops::embedding_lookup(tape.param(pos_emb_), t.positions));
  x = ops::dropout(x, spec_.dropout);
  for (const auto& blk : blocks_) {
    Var h = ops::layer_norm(x, tape.param(blk.ln1_g), tape.param(blk.ln1_b));
    Var q = linear(tape, h, blk.wq, blk.bq);
    Var k = linear(tape, h, blk.wk, blk.bk);
    Var v = linear(tape, h, blk.wv, blk.bv);
    Var a = ops::multihead_attention(q, k, v, t.offsets, spec_.num_heads, attention);
    x = ops::add(x, ops::dropout(linear(tape, a, blk.wo, blk.bo), spec_.dropout));
    Var h2 = ops::layer_norm(x, tape.param(blk.ln2_g), tape.param(blk.ln2_b));
    Var f = linear(tape, ops::gelu(linear(tape, h2, blk.w1, blk.b1)), blk.w2, blk.b2);
    x = ops::add(x, ops::dropout(f, spec_.dropout));
  }
  return {ops::layer_norm(x, tape.param(lnf_g_), tape.param(lnf_b_)), t.offsets};
}

Var additive_attention_pool(Tape& tape, Var rows, std::span<const std::size_t> offsets,
                            std::size_t w, std::size_t b, std::size_t q, Tensor* weights) {
  Var keys = ops::tanh(ops::add_bias(ops::matmul(rows, tape.param(w)), tape.param(b)));
  Var a = ops::segment_softmax(ops::matvec(keys, tape.param(q)), offsets);
  if (weights) *weights = a.value();
  return ops::segment_weighted_sum(a, rows, offsets);
}

Var NewsEncoder::pool(Tape& tape, const TokenHiddenStates& h, Tensor* weights) const {
  for (std::size_t s = 0; s + 1 < h.offsets.size(); ++s) {
    if (h.offsets[s] == h.offsets[s + 1]) {
      throw DimensionError("cannot pool a fully masked sequence");
    }
  }
  switch (spec_.pooling) {
    case Pooling::kCls: {
      std::vector<int> first(h.offsets.begin(), h.offsets.end() - 1);
      return ops::gather_rows(h.states, first);
    }
    case Pooling::kAverage:
      return ops::segment_mean(h.states, h.offsets, /*skip_first=*/true);
    case Pooling::kAttention:
      return additive_attention_pool(tape, h.states, h.offsets, pool_w_, pool_b_, pool_q_, weights);
  }
  throw ConfigError("unknown pooling mode");
}

Var NewsEncoder::encode(Tape& tape, std::span<const TokenSequence> seqs) const {
  return pool(tape, hidden_states(tape, PackedTokens::pack(seqs)));
}

FinetunePartition NewsEncoder::apply_finetune_policy(ParameterStore& store, std::size_t k) const {
  if (spec_.kind != NewsEncoderKind::kMiniPlm) {
    throw ConfigError("finetune policy applies to MINI_PLM encoders only");
  }
  if (k > spec_.depth) throw ConfigError("finetune_last_k exceeds depth");
  const std::size_t frozen_blocks = spec_.depth - k;
  const bool freeze_embeddings = k < spec_.depth;
  FinetunePartition part;
  for (auto& param : store) {
    const std::string_view name = param.name;
    if (name.substr(0, prefix_.size()) != prefix_) continue;
    const std::string_view rest = name.substr(prefix_.size());
    bool frozen = false;
    if (rest.starts_with("tok_emb") || rest.starts_with("pos_emb")) {
      frozen = freeze_embeddings;
    } else if (rest.starts_with("block")) {
      const auto dot = rest.find('.');
      const auto l = std::stoul(std::string(rest.substr(5, dot - 5)));
      frozen = l < frozen_blocks;
    } else if (rest.starts_with("ln_f")) {
      frozen = k == 0;
    }
    param.trainable = !frozen;
    (frozen ? part.frozen : part.trainable).push_back(param.name);
  }
  return part;
}

}  // namespace newsrec
