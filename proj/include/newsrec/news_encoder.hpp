// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "newsrec/autodiff.hpp"
#include "newsrec/text.hpp"

namespace newsrec {

enum class NewsEncoderKind { kCnn, kSelfAttention, kMiniPlm };
enum class Pooling { kCls, kAverage, kAttention };

const char* to_string(NewsEncoderKind kind);
const char* to_string(Pooling pooling);
NewsEncoderKind parse_news_encoder_kind(std::string_view s);
Pooling parse_pooling(std::string_view s);

struct NewsEncoderSpec {
  NewsEncoderKind kind = NewsEncoderKind::kMiniPlm;
  std::size_t d_model = 64;
  std::size_t num_heads = 4;
  std::size_t depth = 2;        // Transformer blocks, MINI_PLM only
  std::size_t conv_window = 3;  // CNN only
  Pooling pooling = Pooling::kAttention;
  std::size_t pool_dim = 0;  // attention pooling width; 0 means d_model
  std::size_t finetune_last_k = 2;
  double dropout = 0.0;

  std::size_t attention_dim() const { return pool_dim ? pool_dim : d_model; }
  /// Throws ConfigError on a violated invariant.
  void validate() const;
};

/// Real (unmasked) token rows of a batch of sequences, packed back to back.
struct PackedTokens {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<std::size_t> offsets;  // size = sequences + 1

  static PackedTokens pack(std::span<const TokenSequence> seqs);
  std::size_t sequences() const { return offsets.size() - 1; }
};

/// Per-token contextual states r_1..r_L of each packed sequence. Masked
/// positions have no row at all.
struct TokenHiddenStates {
  Var states;  // [P x d_model]
  std::vector<std::size_t> offsets;
};

struct FinetunePartition {
  std::vector<std::string> trainable;
  std::vector<std::string> frozen;
};

/// Token sequence -> news embedding. Parameters live in a ParameterStore
/// under `prefix`; the encoder keeps only their indices.
class NewsEncoder {
 public:
  NewsEncoder() = default;
  NewsEncoder(const NewsEncoderSpec& spec, std::size_t vocab_size, std::size_t max_len,
              ParameterStore& store, std::mt19937_64& rng, const std::string& prefix = "news.");

  const NewsEncoderSpec& spec() const { return spec_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t max_len() const { return max_len_; }
  const std::string& prefix() const { return prefix_; }
  std::size_t token_embedding_index() const { return tok_emb_; }

  /// Dispatches to the CNN, self-attention or Transformer stack. When
  /// `attention` is non-null, per-layer attention weights are appended.
  TokenHiddenStates hidden_states(Tape& tape, const PackedTokens& tokens,
                                  std::vector<Tensor>* attention = nullptr) const;
  /// [S x d] pooled embeddings. `weights` receives pooling attention weights
  /// over the packed rows when pooling is ATTENTION.
  Var pool(Tape& tape, const TokenHiddenStates& states, Tensor* weights = nullptr) const;
  Var encode(Tape& tape, std::span<const TokenSequence> seqs) const;

  /// Marks embeddings and the lowest depth-k Transformer blocks frozen; only
  /// meaningful for MINI_PLM.
  FinetunePartition apply_finetune_policy(ParameterStore& store, std::size_t k) const;

 private:
  TokenHiddenStates encode_cnn(Tape& tape, const PackedTokens& t) const;
  TokenHiddenStates encode_self_attention(Tape& tape, const PackedTokens& t,
                                          std::vector<Tensor>* attention) const;
  TokenHiddenStates encode_mini_plm(Tape& tape, const PackedTokens& t,
                                    std::vector<Tensor>* attention) const;

  struct Block {
    std::size_t ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };

  NewsEncoderSpec spec_;
  std::size_t vocab_size_ = 0;
  std::size_t max_len_ = 0;
  std::string prefix_;
  std::size_t tok_emb_ = 0, pos_emb_ = 0;
  std::size_t conv_w_ = 0, conv_b_ = 0;
  std::size_t wq_ = 0, bq_ = 0, wk_ = 0, bk_ = 0, wv_ = 0, bv_ = 0, wo_ = 0, bo_ = 0;
  std::vector<Block> blocks_;
  std::size_t lnf_g_ = 0, lnf_b_ = 0;
  std::size_t pool_w_ = 0, pool_b_ = 0, pool_q_ = 0;
};

/// Closed-form parameter tally of a news encoder (pooling included).
std::size_t param_count(const NewsEncoderSpec& spec, std::size_t vocab_size, std::size_t max_len);
/// Size of one Transformer block at width d.
std::size_t transformer_block_params(std::size_t d_model);

/// Additive attention over packed rows: a = softmax_seg(tanh(R W + b) q),
/// returns [S x d] sums of a_i r_i. Shared by news pooling and user encoders.
Var additive_attention_pool(Tape& tape, Var rows, std::span<const std::size_t> offsets,
                            std::size_t w, std::size_t b, std::size_t q, Tensor* weights = nullptr);

}  // namespace newsrec
