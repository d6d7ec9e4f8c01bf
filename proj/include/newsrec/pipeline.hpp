// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "newsrec/checkpoint.hpp"
#include "newsrec/config.hpp"
#include "newsrec/corpus.hpp"
#include "newsrec/eval.hpp"
#include "newsrec/training.hpp"

namespace newsrec {

/// Reads the configured source: a synthetic spec, a directory holding
/// news.tsv/behaviors.tsv (or one such subdirectory per market, with an
/// optional topics.tsv beside each), or an explicit file pair. Malformed
/// lines are appended to `issues`. Missing paths are ConfigErrors.
Dataset load_dataset(const DatasetConfig& config, std::vector<std::string>* issues = nullptr);

/// Dataset resolved for one run.
struct Workspace {
  RecData data;
  DatasetSplit split;
  std::vector<std::string> issues;

  std::span<const std::size_t> impressions(const std::string& split_name) const;
};

/// Loads, validates and splits the dataset, then tokenizes with `vocab` (or
/// a vocabulary built from every title) and indexes the training users.
Workspace prepare_workspace(const RunConfig& config, const Vocabulary* vocab = nullptr,
                            const UserIndex* users = nullptr);

ModelSpec model_spec(const RunConfig& config, const RecData& data);

/// "# Users", "# News", "# Impressions", "# Click Behaviors" per market.
std::string dataset_summary(const Dataset& ds);

struct FrozenCheck {
  std::string name;
  bool identical = false;
};

struct TrainedRun {
  RecModel model;
  TrainResult result;
  std::vector<double> mlm_losses;
  std::vector<FrozenCheck> frozen;  // filled when starting from a pretrained encoder

  bool frozen_ok() const;
};

/// Builds the model for `config`, optionally initializes the news encoder
/// from a pretrained checkpoint file (or pretrains in memory when the
/// config asks for a pretrained start and no file is given) and trains.
TrainedRun run_training(const RunConfig& config, const Workspace& ws,
                        const std::string& pretrained_checkpoint = "",
                        const EpochCallback& on_epoch = {}, std::ostream* log = nullptr);

/// MLM pretraining of the configured MINI_PLM encoder on every title.
struct PretrainedEncoder {
  MlmModel model;
  std::vector<double> losses;
};
PretrainedEncoder run_pretraining(const RunConfig& config, const RecData& data,
                                  std::ostream* log = nullptr);

/// Bitwise comparison of every frozen parameter against `reference`.
std::vector<FrozenCheck> check_frozen(const ParameterStore& store, const NamedTensors& reference);

/// Stable identifier of the dataset section of a config.
std::string dataset_id(const RunConfig& config);

/// Published MIND result for the configured encoders, shown for orientation.
struct PublishedResult {
  std::string method;
  double auc, mrr, ndcg5, ndcg10;
};
PublishedResult published_reference(const ModelSpec& spec);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for one seed
};

struct CompareRow {
  std::string variant;
  std::string value;  // value of the swept setting
  std::size_t param_count = 0;
  std::size_t seeds = 0;
  MetricSummary auc, mrr, ndcg5, ndcg10;
  PublishedResult reference;
};

struct CompareTable {
  std::string axis;
  std::vector<CompareRow> rows;

  std::string csv() const;
  std::string text() const;
};

CompareTable run_compare(const RunConfig& config, std::ostream* log = nullptr);

// Commands. Each writes its artifacts plus config.json and manifest.json
// under `out_dir` and reports progress to `log`.

struct TrainOptions {
  std::string pretrained_dir;  // output of pretrain; empty keeps the config's init
  bool force_scratch = false;
};

struct EvaluateOptions {
  std::string checkpoint_dir;  // output of train; empty evaluates a fresh model
  bool oracle_scorer = false;
};

void cmd_gen_data(const RunConfig& config, const std::string& out_dir, std::ostream& log);
void cmd_pretrain(const RunConfig& config, const std::string& out_dir, std::ostream& log);
void cmd_train(const RunConfig& config, const std::string& out_dir, const TrainOptions& options,
               std::ostream& log);
void cmd_evaluate(const RunConfig& config, const std::string& out_dir,
                  const EvaluateOptions& options, std::ostream& log);
void cmd_compare(const RunConfig& config, const std::string& out_dir, std::ostream& log);
void cmd_export_embeddings(const RunConfig& config, const std::string& out_dir,
                           const std::string& checkpoint_dir, std::ostream& log);

/// manifest.json: command, config hash, seed and every file under
/// `out_dir` with its size, sorted by path.
void write_manifest(const std::string& out_dir, const std::string& command, const RunConfig& config);

}  // namespace newsrec
