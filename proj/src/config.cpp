// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/config.hpp"

#include <cstdio>
#include <set>

#include <json.hpp>

#include "newsrec/error.hpp"

namespace newsrec {
namespace {

using ojson = nlohmann::ordered_json;

void check_keys(const ojson& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const ojson& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

ojson synthetic_json(const SyntheticSpec& s) {
  return {{"num_topics", s.num_topics},
          {"vocab_per_topic", s.vocab_per_topic},
          {"shared_vocab", s.shared_vocab},
          {"num_users", s.num_users},
          {"num_news", s.num_news},
          {"impressions_per_user", s.impressions_per_user},
          {"candidates_per_impression", s.candidates_per_impression},
          {"user_topic_concentration", s.user_topic_concentration},
          {"click_temperature", s.click_temperature},
          {"markets", s.markets},
          {"history_length", s.history_length},
          {"title_min_words", s.title_min_words},
          {"title_max_words", s.title_max_words},
          {"topic_word_prob", s.topic_word_prob},
          {"seed", s.seed}};
}

ojson to_json(const RunConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  ojson ds = ojson::object();
  if (c.dataset.synthetic) ds["synthetic"] = synthetic_json(*c.dataset.synthetic);
  if (!c.dataset.dir.empty()) ds["dir"] = c.dataset.dir;
  if (!c.dataset.news_tsv.empty()) ds["news_tsv"] = c.dataset.news_tsv;
  if (!c.dataset.behaviors_tsv.empty()) ds["behaviors_tsv"] = c.dataset.behaviors_tsv;
  if (!c.dataset.use_markets.empty()) ds["use_markets"] = c.dataset.use_markets;
  ds["split"] = {{"time_based", c.dataset.split.time_based},
                 {"test_fraction", c.dataset.split.test_fraction},
                 {"valid_fraction", c.dataset.split.valid_fraction},
                 {"allow_random_fallback", c.dataset.split.allow_random_fallback},
                 {"seed", c.dataset.split.seed}};
  j["dataset"] = ds;
  j["text"] = {{"max_title_len", c.text.max_title_len},
               {"min_count", c.text.min_count},
               {"max_vocab", c.text.max_vocab}};
  j["model"] = {{"news_encoder",
                 {{"kind", to_string(c.news.kind)},
                  {"d_model", c.news.d_model},
                  {"num_heads", c.news.num_heads},
                  {"depth", c.news.depth},
                  {"conv_window", c.news.conv_window},
                  {"pooling", to_string(c.news.pooling)},
                  {"pool_dim", c.news.pool_dim},
                  {"finetune_last_k", c.news.finetune_last_k},
                  {"dropout", c.news.dropout}}},
                {"user_encoder",
                 {{"kind", to_string(c.user.kind)},
                  {"num_heads", c.user.num_heads},
                  {"pool_dim", c.user.pool_dim},
                  {"max_history", c.user.max_history}}}};
  const auto& t = c.train.train;
  j["train"] = {{"init", to_string(c.train.init)},
                {"learning_rate", t.learning_rate},
                {"batch_size", t.batch_size},
                {"shards", t.shards},
                {"negatives", t.negatives},
                {"epochs", t.epochs},
                {"mlm_rate", t.mlm_rate},
                {"pretrain_epochs", c.train.pretrain_epochs},
                {"pretrain_learning_rate", c.train.pretrain_learning_rate},
                {"pretrain_batch_size", c.train.pretrain_batch_size}};
  j["eval"] = {{"split", c.eval.split}};
  ojson variants = ojson::array();
  for (const auto& v : c.compare.variants) {
    variants.push_back({{"name", v.name}, {"overrides", ojson::parse(v.overrides)}});
  }
  j["compare"] = {{"seeds", c.compare.seeds}, {"variants", variants}};
  return j;
}

RunConfig from_json(const ojson& j) {
  RunConfig c;
  check_keys(j, {"seed", "dataset", "text", "model", "train", "eval", "compare"}, "config");
  read(j, "seed", c.seed, "config");
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    check_keys(d, {"synthetic", "dir", "news_tsv", "behaviors_tsv", "use_markets", "split"}, "dataset");
    if (d.contains("synthetic")) {
      const auto& s = d["synthetic"];
      check_keys(s, {"num_topics", "vocab_per_topic", "shared_vocab", "num_users", "num_news",
                     "impressions_per_user", "candidates_per_impression", "user_topic_concentration",
                     "click_temperature", "markets", "history_length", "title_min_words",
                     "title_max_words", "topic_word_prob", "seed"},
                 "dataset.synthetic");
      SyntheticSpec sp;
      const std::string w = "dataset.synthetic";
      read(s, "num_topics", sp.num_topics, w);
      read(s, "vocab_per_topic", sp.vocab_per_topic, w);
      read(s, "shared_vocab", sp.shared_vocab, w);
      read(s, "num_users", sp.num_users, w);
      read(s, "num_news", sp.num_news, w);
      read(s, "impressions_per_user", sp.impressions_per_user, w);
      read(s, "candidates_per_impression", sp.candidates_per_impression, w);
      read(s, "user_topic_concentration", sp.user_topic_concentration, w);
      read(s, "click_temperature", sp.click_temperature, w);
      read(s, "markets", sp.markets, w);
      read(s, "history_length", sp.history_length, w);
      read(s, "title_min_words", sp.title_min_words, w);
      read(s, "title_max_words", sp.title_max_words, w);
      read(s, "topic_word_prob", sp.topic_word_prob, w);
      read(s, "seed", sp.seed, w);
      c.dataset.synthetic = sp;
    }
    read(d, "dir", c.dataset.dir, "dataset");
    read(d, "news_tsv", c.dataset.news_tsv, "dataset");
    read(d, "behaviors_tsv", c.dataset.behaviors_tsv, "dataset");
    read(d, "use_markets", c.dataset.use_markets, "dataset");
    if (d.contains("split")) {
      const auto& s = d["split"];
      check_keys(s, {"time_based", "test_fraction", "valid_fraction", "allow_random_fallback", "seed"},
                 "dataset.split");
      read(s, "time_based", c.dataset.split.time_based, "dataset.split");
      read(s, "test_fraction", c.dataset.split.test_fraction, "dataset.split");
      read(s, "valid_fraction", c.dataset.split.valid_fraction, "dataset.split");
      read(s, "allow_random_fallback", c.dataset.split.allow_random_fallback, "dataset.split");
      read(s, "seed", c.dataset.split.seed, "dataset.split");
    }
  }
  if (j.contains("text")) {
    const auto& t = j["text"];
    check_keys(t, {"max_title_len", "min_count", "max_vocab"}, "text");
    read(t, "max_title_len", c.text.max_title_len, "text");
    read(t, "min_count", c.text.min_count, "text");
    read(t, "max_vocab", c.text.max_vocab, "text");
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    check_keys(m, {"news_encoder", "user_encoder"}, "model");
    if (m.contains("news_encoder")) {
      const auto& n = m["news_encoder"];
      const std::string w = "model.news_encoder";
      check_keys(n, {"kind", "d_model", "num_heads", "depth", "conv_window", "pooling", "pool_dim",
                     "finetune_last_k", "dropout"},
                 w);
      std::string kind = to_string(c.news.kind), pooling = to_string(c.news.pooling);
      read(n, "kind", kind, w);
      read(n, "pooling", pooling, w);
      c.news.kind = parse_news_encoder_kind(kind);
      c.news.pooling = parse_pooling(pooling);
      read(n, "d_model", c.news.d_model, w);
      read(n, "num_heads", c.news.num_heads, w);
      read(n, "depth", c.news.depth, w);
      read(n, "conv_window", c.news.conv_window, w);
      read(n, "pool_dim", c.news.pool_dim, w);
      read(n, "finetune_last_k", c.news.finetune_last_k, w);
      read(n, "dropout", c.news.dropout, w);
    }
    if (m.contains("user_encoder")) {
      const auto& u = m["user_encoder"];
      const std::string w = "model.user_encoder";
      check_keys(u, {"kind", "num_heads", "pool_dim", "max_history"}, w);
      std::string kind = to_string(c.user.kind);
      read(u, "kind", kind, w);
      c.user.kind = parse_user_encoder_kind(kind);
      read(u, "num_heads", c.user.num_heads, w);
      read(u, "pool_dim", c.user.pool_dim, w);
      read(u, "max_history", c.user.max_history, w);
    }
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    const std::string w = "train";
    check_keys(t, {"init", "learning_rate", "batch_size", "shards", "negatives", "epochs", "mlm_rate",
                   "pretrain_epochs", "pretrain_learning_rate", "pretrain_batch_size"},
               w);
    std::string init = to_string(c.train.init);
    read(t, "init", init, w);
    if (init == "scratch") {
      c.train.init = InitMode::kScratch;
    } else if (init == "pretrained") {
      c.train.init = InitMode::kPretrained;
    } else {
      throw ConfigError("train.init must be 'scratch' or 'pretrained'");
    }
    auto& tc = c.train.train;
    read(t, "learning_rate", tc.learning_rate, w);
    read(t, "batch_size", tc.batch_size, w);
    read(t, "shards", tc.shards, w);
    read(t, "negatives", tc.negatives, w);
    read(t, "epochs", tc.epochs, w);
    read(t, "mlm_rate", tc.mlm_rate, w);
    read(t, "pretrain_epochs", c.train.pretrain_epochs, w);
    read(t, "pretrain_learning_rate", c.train.pretrain_learning_rate, w);
    read(t, "pretrain_batch_size", c.train.pretrain_batch_size, w);
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    check_keys(e, {"split"}, "eval");
    read(e, "split", c.eval.split, "eval");
  }
  if (j.contains("compare")) {
    const auto& cm = j["compare"];
    check_keys(cm, {"seeds", "variants"}, "compare");
    read(cm, "seeds", c.compare.seeds, "compare");
    if (cm.contains("variants")) {
      if (!cm["variants"].is_array()) throw ConfigError("compare.variants must be a list");
      for (const auto& v : cm["variants"]) {
        check_keys(v, {"name", "overrides"}, "compare.variants[]");
        CompareVariant var;
        read(v, "name", var.name, "compare.variants[]");
        if (!v.contains("overrides") || !v["overrides"].is_object()) {
          throw ConfigError("compare variant '" + var.name + "' needs an overrides object");
        }
        var.overrides = v["overrides"].dump();
        c.compare.variants.push_back(std::move(var));
      }
    }
  }
  // Data seeds are their own keys so a seed sweep keeps the dataset fixed.
  c.train.train.seed = c.seed;
  c.user.d_model = c.news.d_model;
  c.validate();
  c.source_json = to_json(c).dump(2);
  return c;
}

void flatten(const ojson& j, const std::string& prefix, std::set<std::string>& out) {
  if (j.is_object() && !j.empty()) {
    for (auto it = j.begin(); it != j.end(); ++it) {
      flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
    }
  } else {
    out.insert(prefix);
  }
}

}  // namespace

const char* to_string(InitMode mode) {
  return mode == InitMode::kPretrained ? "pretrained" : "scratch";
}

void RunConfig::validate() const {
  const int sources = (dataset.synthetic ? 1 : 0) + (dataset.dir.empty() ? 0 : 1) +
                      (dataset.news_tsv.empty() && dataset.behaviors_tsv.empty() ? 0 : 1);
  if (sources > 1) throw ConfigError("dataset: give exactly one of synthetic, dir, or news_tsv/behaviors_tsv");
  if (dataset.news_tsv.empty() != dataset.behaviors_tsv.empty()) {
    throw ConfigError("dataset: news_tsv and behaviors_tsv go together");
  }
  if (dataset.synthetic) dataset.synthetic->validate();
  if (!(dataset.split.test_fraction > 0.0 && dataset.split.test_fraction < 1.0) ||
      !(dataset.split.valid_fraction > 0.0 && dataset.split.valid_fraction < 1.0)) {
    throw ConfigError("dataset.split fractions must be in (0, 1)");
  }
  if (text.max_title_len < 2) throw ConfigError("text.max_title_len must be at least 2");
  if (text.max_vocab < static_cast<std::size_t>(kNumReserved) + 1) throw ConfigError("text.max_vocab too small");
  if (text.min_count == 0) throw ConfigError("text.min_count must be positive");
  news.validate();
  user.validate();
  train.train.validate();
  if (train.pretrain_batch_size == 0) throw ConfigError("train.pretrain_batch_size must be positive");
  if (!(train.pretrain_learning_rate >= 0.0)) throw ConfigError("train.pretrain_learning_rate must be non-negative");
  if (train.init == InitMode::kPretrained && news.kind != NewsEncoderKind::kMiniPlm) {
    throw ConfigError("train.init 'pretrained' needs a MINI_PLM news encoder");
  }
  if (eval.split != "test" && eval.split != "valid") throw ConfigError("eval.split must be 'test' or 'valid'");
}

RunConfig RunConfig::parse(const std::string& json_text) {
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return from_json(j);
}

RunConfig RunConfig::load(const std::string& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError&) {
    throw ConfigError("cannot read config file " + path);
  }
  return parse(text);
}

RunConfig RunConfig::with_seed(std::uint64_t s) const {
  auto j = ojson::parse(source_json);
  j["seed"] = s;
  return from_json(j);
}

std::string RunConfig::hash() const {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : source_json) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string compare_axis(const CompareConfig& compare) {
  if (compare.variants.empty()) throw ConfigError("compare needs at least one variant");
  std::set<std::string> axes;
  for (const auto& v : compare.variants) {
    std::set<std::string> leaves;
    flatten(ojson::parse(v.overrides), "", leaves);
    leaves.erase("");
    if (leaves.size() != 1) {
      throw ConfigError("variant '" + v.name + "' overrides " + std::to_string(leaves.size()) +
                        " settings; variants must sweep exactly one axis");
    }
    axes.insert(*leaves.begin());
  }
  if (axes.size() != 1) throw ConfigError("variants sweep multiple axes");
  return *axes.begin();
}

RunConfig apply_variant(const RunConfig& base, const CompareVariant& variant) {
  auto j = ojson::parse(base.source_json);
  j.merge_patch(ojson::parse(variant.overrides));
  return from_json(j);
}

}  // namespace newsrec
