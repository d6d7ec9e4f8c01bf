// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/model.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "newsrec/checkpoint.hpp"
#include "newsrec/error.hpp"
#include "newsrec/ops.hpp"

namespace newsrec {

using ojson = nlohmann::ordered_json;

void ModelSpec::validate() const {
  news.validate();
  user.validate();
  if (user.d_model != news.d_model) {
    throw ConfigError("user encoder width must equal the news embedding width");
  }
  if (vocab_size < static_cast<std::size_t>(kNumReserved)) throw ConfigError("vocab_size < 4");
  if (max_title_len < 2) throw ConfigError("max_title_len must be at least 2");
}

std::string ModelSpec::to_json() const {
  ojson j;
  j["news_encoder"] = {{"kind", to_string(news.kind)},
                       {"d_model", news.d_model},
                       {"num_heads", news.num_heads},
                       {"depth", news.depth},
                       {"conv_window", news.conv_window},
                       {"pooling", to_string(news.pooling)},
                       {"pool_dim", news.attention_dim()},
                       {"finetune_last_k", news.finetune_last_k},
                       {"dropout", news.dropout}};
  j["user_encoder"] = {{"kind", to_string(user.kind)},
                       {"d_model", user.d_model},
                       {"num_heads", user.num_heads},
                       {"pool_dim", user.attention_dim()},
                       {"user_table_size", user.user_table_size},
                       {"max_history", user.max_history}};
  j["vocab_size"] = vocab_size;
  j["max_title_len"] = max_title_len;
  return j.dump(2);
}

ModelSpec ModelSpec::from_json(const std::string& text) {
  ModelSpec s;
  try {
    auto j = ojson::parse(text);
    const auto& n = j.at("news_encoder");
    s.news.kind = parse_news_encoder_kind(n.at("kind").get<std::string>());
    s.news.d_model = n.at("d_model").get<std::size_t>();
    s.news.num_heads = n.at("num_heads").get<std::size_t>();
    s.news.depth = n.at("depth").get<std::size_t>();
    s.news.conv_window = n.at("conv_window").get<std::size_t>();
    s.news.pooling = parse_pooling(n.at("pooling").get<std::string>());
    s.news.pool_dim = n.at("pool_dim").get<std::size_t>();
    s.news.finetune_last_k = n.at("finetune_last_k").get<std::size_t>();
    s.news.dropout = n.at("dropout").get<double>();
    const auto& u = j.at("user_encoder");
    s.user.kind = parse_user_encoder_kind(u.at("kind").get<std::string>());
    s.user.d_model = u.at("d_model").get<std::size_t>();
    s.user.num_heads = u.at("num_heads").get<std::size_t>();
    s.user.pool_dim = u.at("pool_dim").get<std::size_t>();
    s.user.user_table_size = u.at("user_table_size").get<std::size_t>();
    s.user.max_history = u.at("max_history").get<std::size_t>();
    s.vocab_size = j.at("vocab_size").get<std::size_t>();
    s.max_title_len = j.at("max_title_len").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model spec: ") + e.what());
  }
  s.validate();
  return s;
}

std::string ModelSpec::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : to_json()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t param_count(const ModelSpec& spec) {
  return param_count(spec.news, spec.vocab_size, spec.max_title_len) + param_count(spec.user);
}

RecModel::RecModel(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  std::mt19937_64 rng(seed);
  news_ = NewsEncoder(spec_.news, spec_.vocab_size, spec_.max_title_len, store_, rng);
  user_ = UserEncoder(spec_.user, store_, rng);
}

Var RecModel::encode_news(Tape& tape, std::span<const TokenSequence> seqs) const {
  return news_.encode(tape, seqs);
}

Var RecModel::encode_users(Tape& tape, Var news, std::span<const UserInput> users) const {
  return user_.encode_batch(tape, news, users);
}

void RecModel::apply_finetune_policy() {
  if (spec_.news.kind == NewsEncoderKind::kMiniPlm) {
    news_.apply_finetune_policy(store_, spec_.news.finetune_last_k);
  }
}

void RecModel::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  save_checkpoint(dir + "/model.nrt", store_);
  std::ofstream os(dir + "/model_spec.json", std::ios::binary);
  if (!os) throw IoError("cannot write " + dir + "/model_spec.json");
  os << spec_.to_json() << '\n';
}

RecModel RecModel::load(const std::string& dir) {
  std::ifstream is(dir + "/model_spec.json", std::ios::binary);
  if (!is) throw IoError("cannot read " + dir + "/model_spec.json");
  std::stringstream ss;
  ss << is.rdbuf();
  RecModel m(ModelSpec::from_json(ss.str()), 0);
  load_checkpoint_into(dir + "/model.nrt", m.store_, /*require_all=*/true);
  m.apply_finetune_policy();
  return m;
}

MlmModel::MlmModel(const NewsEncoderSpec& spec, std::size_t vocab_size, std::size_t max_len,
                   std::uint64_t seed) {
  if (spec.kind != NewsEncoderKind::kMiniPlm) {
    throw ConfigError("masked-token pretraining needs a MINI_PLM encoder");
  }
  std::mt19937_64 rng(seed);
  encoder_ = NewsEncoder(spec, vocab_size, max_len, store_, rng);
  out_bias_ = store_.add("mlm.out_bias", Tensor(Shape{vocab_size}));
}

Var MlmModel::loss(Tape& tape, std::span<const TokenSequence> corrupted,
                   std::span<const std::vector<std::pair<std::size_t, int>>> targets) const {
  if (corrupted.size() != targets.size()) throw DimensionError("one target list per sequence");
  auto packed = PackedTokens::pack(corrupted);
  auto hidden = encoder_.hidden_states(tape, packed);
  std::vector<int> rows;
  std::vector<int> labels;
  for (std::size_t s = 0; s < targets.size(); ++s) {
    for (const auto& [pos, id] : targets[s]) {
      const std::size_t row = packed.offsets[s] + pos;
      if (row >= packed.offsets[s + 1]) throw IndexError("target position is padding");
      rows.push_back(static_cast<int>(row));
      labels.push_back(id);
    }
  }
  if (rows.empty()) throw DataError("batch has no masked targets");
  Var picked = ops::gather_rows(hidden.states, rows);
  Var logits = ops::add_bias(
      ops::matmul(picked, ops::transpose(tape.param(encoder_.token_embedding_index()))),
      tape.param(out_bias_));
  return ops::cross_entropy_rows(logits, labels);
}

}  // namespace newsrec
