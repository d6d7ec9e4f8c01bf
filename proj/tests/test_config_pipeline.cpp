// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include <filesystem>
#include <sstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "newsrec/error.hpp"
#include "newsrec/pipeline.hpp"

using namespace newsrec;
namespace fs = std::filesystem;

namespace {

const char* kTiny = R"({
  "seed": 4,
  "dataset": {"synthetic": {"num_topics": 3, "num_users": 30, "num_news": 80,
                            "impressions_per_user": 6, "seed": 4}},
  "text": {"max_title_len": 16},
  "model": {
    "news_encoder": {"kind": "SELF_ATTN", "d_model": 16, "num_heads": 2},
    "user_encoder": {"kind": "NRMS_SELF_ATTN", "num_heads": 2}
  },
  "train": {"learning_rate": 0.01, "batch_size": 32, "epochs": 1},
  "eval": {"split": "test"}
})";

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("newsrec_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const { return (sub.empty() ? path : path / sub).string(); }
};

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(read_text_file(p.string())); }

}  // namespace

TEST_CASE("shipped configs parse and validate") {
  for (const auto& e : fs::directory_iterator(NEWSREC_SOURCE_DIR "/configs")) {
    INFO(e.path().string());
    auto cfg = RunConfig::load(e.path().string());
    CHECK_NOTHROW(cfg.validate());
    if (!cfg.compare.variants.empty()) CHECK_NOTHROW(compare_axis(cfg.compare));
  }
}

TEST_CASE("config parsing rejects unknown keys, bad types and bad values") {
  CHECK_THROWS_AS(RunConfig::parse(R"({"seeed": 1})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"model": {"news_encoder": {"kind": "LSTM"}}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"train": {"epochs": "two"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"model": {"news_encoder": {"kind": "CNN"}}, "train": {"init": "pretrained"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"eval": {"split": "train"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"dataset": {"news_tsv": "a"}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"dataset": {"dir": "a", "synthetic": {}}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse(R"({"dataset": {"split": {"test_fraction": 1.5}}})"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("{not json"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/config.json"), ConfigError);
  auto plm = RunConfig::parse(
      R"({"model": {"news_encoder": {"kind": "MINI_PLM", "depth": 4, "finetune_last_k": 2}},
          "train": {"init": "pretrained"}})");
  CHECK(plm.news.depth == 4);
  CHECK(plm.train.init == InitMode::kPretrained);
}

TEST_CASE("seed and hash") {
  auto a = RunConfig::parse(kTiny);
  auto b = RunConfig::parse(kTiny);
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 16);
  CHECK(a.train.train.seed == 4);
  auto c = a.with_seed(9);
  CHECK(c.seed == 9);
  CHECK(c.train.train.seed == 9);
  CHECK(c.hash() != a.hash());
  // Data generation does not follow the run seed.
  CHECK(c.dataset.synthetic->seed == 4);
  CHECK(dataset_id(c) == dataset_id(a));
}

TEST_CASE("compare axis and variants") {
  auto cfg = RunConfig::parse(R"({
    "model": {"news_encoder": {"kind": "MINI_PLM", "depth": 2, "finetune_last_k": 1}},
    "compare": {"seeds": [1, 2], "variants": [
      {"name": "d2", "overrides": {"model": {"news_encoder": {"depth": 2}}}},
      {"name": "d4", "overrides": {"model": {"news_encoder": {"depth": 4}}}}]}
  })");
  CHECK(compare_axis(cfg.compare) == "model.news_encoder.depth");
  auto v = apply_variant(cfg, cfg.compare.variants[1]);
  CHECK(v.news.depth == 4);
  CHECK(v.news.kind == NewsEncoderKind::kMiniPlm);
  auto mixed = cfg.compare;
  mixed.variants[1].overrides = R"({"train": {"epochs": 3}})";
  CHECK_THROWS_AS(compare_axis(mixed), ConfigError);
  mixed.variants[1].overrides = R"({"train": {"epochs": 3, "batch_size": 4}})";
  CHECK_THROWS_AS(compare_axis(mixed), ConfigError);
}

TEST_CASE("published reference rows") {
  ModelSpec s;
  s.news.kind = NewsEncoderKind::kSelfAttention;
  s.user.kind = UserEncoderKind::kNrms;
  auto r = published_reference(s);
  CHECK(r.method == "NRMS");
  CHECK(r.auc == 68.18);
  s.news.kind = NewsEncoderKind::kMiniPlm;
  r = published_reference(s);
  CHECK(r.method == "NRMS-BERT");
  CHECK(r.auc == 69.50);
  CHECK(r.ndcg10 == 43.72);
  s.user.kind = UserEncoderKind::kLstur;
  CHECK(published_reference(s).mrr == 34.72);
  s.news.kind = NewsEncoderKind::kCnn;
  s.user.kind = UserEncoderKind::kGru;
  CHECK(published_reference(s).method == "EBNR");
}

TEST_CASE("gen-data is byte-identical and writes one directory per market") {
  TempDir tmp("gen");
  auto cfg = RunConfig::parse(kTiny);
  std::ostringstream log;
  cmd_gen_data(cfg, tmp.str("a"), log);
  cmd_gen_data(cfg, tmp.str("b"), log);
  for (const char* f : {"news.tsv", "behaviors.tsv", "topics.tsv", "summary.txt", "manifest.json", "config.json"}) {
    CHECK(read_text_file(tmp.str(std::string("a/") + f)) == read_text_file(tmp.str(std::string("b/") + f)));
  }
  auto manifest = read_json(tmp.path / "a" / "manifest.json");
  CHECK(manifest["command"] == "gen-data");
  CHECK(manifest["config_hash"] == cfg.hash());
  CHECK(manifest["files"].size() == 5);
  CHECK(manifest["files"][0]["path"] == "behaviors.tsv");
  CHECK(manifest["files"][0]["bytes"] == fs::file_size(tmp.path / "a" / "behaviors.tsv"));

  auto json = nlohmann::json::parse(kTiny);
  json["dataset"]["synthetic"]["markets"] = {"EN-US", "DE-DE"};
  auto two = RunConfig::parse(json.dump());
  cmd_gen_data(two, tmp.str("m"), log);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(tmp.path / "m")) files += e.is_regular_file();
  CHECK(files == 2 * 3 + 3);
  const auto summary = read_text_file(tmp.str("m/summary.txt"));
  CHECK(summary.find("DE-DE") != std::string::npos);
  CHECK(summary.find("Total") != std::string::npos);
  CHECK(summary.find("# Click Behaviors") != std::string::npos);

  // The generated tree loads back as a two-market dataset.
  DatasetConfig dc;
  dc.dir = tmp.str("m");
  auto ds = load_dataset(dc);
  CHECK(ds.markets() == std::vector<std::string>{"DE-DE", "EN-US"});
  CHECK(ds.news.size() == 160);
  CHECK(ds.news[0].topic_id.has_value());
  dc.use_markets = {"DE-DE"};
  CHECK(load_dataset(dc).news.size() == 80);
  dc.use_markets = {"FR-FR"};
  CHECK_THROWS_AS(load_dataset(dc), ConfigError);
  dc = {};
  dc.dir = tmp.str("missing");
  CHECK_THROWS_AS(load_dataset(dc), ConfigError);
  CHECK_THROWS_AS(cmd_pretrain(cfg, tmp.str("p"), log), ConfigError);
}

TEST_CASE("train, evaluate and export through the command layer") {
  TempDir tmp("train");
  auto cfg = RunConfig::parse(kTiny);
  std::ostringstream log;
  cmd_train(cfg, tmp.str("run"), {}, log);
  for (const char* f : {"model/model.nrt", "vocab.txt", "users.txt", "loss.csv", "config.json", "manifest.json"}) {
    CHECK(fs::exists(tmp.path / "run" / f));
  }
  CHECK(log.str().find("epoch 1 train_loss ") != std::string::npos);

  EvaluateOptions eo;
  eo.checkpoint_dir = tmp.str("run");
  cmd_evaluate(cfg, tmp.str("eval"), eo, log);
  auto report = read_json(tmp.path / "eval" / "eval_report.json");
  CHECK(report["metadata"]["seed"] == 4);
  CHECK(report["metadata"]["dataset_id"] == dataset_id(cfg));
  const double auc = report["means"]["auc"];
  CHECK(auc > 0.0);
  CHECK(auc < 1.0);

  // Re-evaluating the same checkpoint gives the same report.
  cmd_evaluate(cfg, tmp.str("eval2"), eo, log);
  CHECK(read_text_file(tmp.str("eval/eval_report.json")) == read_text_file(tmp.str("eval2/eval_report.json")));

  EvaluateOptions oracle;
  oracle.oracle_scorer = true;
  cmd_evaluate(cfg, tmp.str("oracle"), oracle, log);
  CHECK(read_json(tmp.path / "oracle" / "eval_report.json")["means"]["auc"] == 1.0);

  cmd_export_embeddings(cfg, tmp.str("emb"), tmp.str("run"), log);
  const auto csv = read_text_file(tmp.str("emb/embeddings.csv"));
  CHECK(csv.rfind("news_id,x,y,topic_id\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 81);
  auto summary = read_json(tmp.path / "emb" / "embeddings_summary.json");
  CHECK(summary.contains("silhouette_trained"));
  CHECK(summary.contains("silhouette_untrained"));
  CHECK_THROWS_AS(cmd_export_embeddings(cfg, tmp.str("emb2"), "", log), ConfigError);

  // A checkpoint from another encoder is refused.
  auto json = nlohmann::json::parse(kTiny);
  json["model"]["news_encoder"]["kind"] = "CNN";
  CHECK_THROWS_AS(cmd_evaluate(RunConfig::parse(json.dump()), tmp.str("bad"), eo, log), ConfigError);
  TrainOptions both;
  both.pretrained_dir = tmp.str("run");
  both.force_scratch = true;
  CHECK_THROWS_AS(cmd_train(cfg, tmp.str("x"), both, log), ConfigError);
}

TEST_CASE("pretrain then finetune keeps frozen layers bit-identical") {
  TempDir tmp("pretrain");
  auto json = nlohmann::json::parse(kTiny);
  json["model"]["news_encoder"] = {{"kind", "MINI_PLM"}, {"d_model", 16}, {"num_heads", 2},
                                   {"depth", 2}, {"finetune_last_k", 1}, {"pooling", "CLS"}};
  json["train"]["pretrain_epochs"] = 1;
  json["train"]["init"] = "pretrained";
  auto cfg = RunConfig::parse(json.dump());
  std::ostringstream log;
  cmd_pretrain(cfg, tmp.str("pre"), log);
  CHECK(log.str().find("encoder MINI_PLM d_model 16 depth 2") != std::string::npos);
  CHECK(log.str().find("param_count ") != std::string::npos);
  CHECK(fs::exists(tmp.path / "pre" / "pretrained" / "model.nrt"));
  TrainOptions to;
  to.pretrained_dir = tmp.str("pre");
  cmd_train(cfg, tmp.str("ft"), to, log);
  to.pretrained_dir = tmp.str("pre/pretrained");
  cmd_train(cfg, tmp.str("ft2"), to, log);
  CHECK(read_text_file(tmp.str("ft/loss.csv")) == read_text_file(tmp.str("ft2/loss.csv")));
  const auto frozen = read_text_file(tmp.str("ft/frozen_check.tsv"));
  CHECK(frozen.find("news.block0.attn.wq") != std::string::npos);
  CHECK(frozen.find("news.block1.") == std::string::npos);
  CHECK(frozen.find("changed") == std::string::npos);
}
