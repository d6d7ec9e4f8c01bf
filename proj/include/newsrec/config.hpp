// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "newsrec/data.hpp"
#include "newsrec/model.hpp"
#include "newsrec/training.hpp"

namespace newsrec {

struct DatasetConfig {
  std::optional<SyntheticSpec> synthetic;
  std::string dir;            // news.tsv + behaviors.tsv, or one subdirectory per market
  std::string news_tsv;       // explicit pair, alternative to dir
  std::string behaviors_tsv;
  std::vector<std::string> use_markets;  // empty keeps every market
  SplitPolicy split;
};

struct TextConfig {
  std::size_t max_title_len = 30;
  std::size_t min_count = 1;
  std::size_t max_vocab = 50000;
};

enum class InitMode { kScratch, kPretrained };

struct TrainSection {
  TrainConfig train;
  InitMode init = InitMode::kScratch;
  std::size_t pretrain_epochs = 5;
  double pretrain_learning_rate = 1e-4;
  std::size_t pretrain_batch_size = 32;
};

struct EvalConfig {
  std::string split = "test";  // "test" or "valid"
};

struct CompareVariant {
  std::string name;
  std::string overrides;  // JSON object merged onto the base config
};

struct CompareConfig {
  std::vector<std::uint64_t> seeds;
  std::vector<CompareVariant> variants;
};

/// Whole-run configuration. Every section is optional in the file; unknown
/// keys are rejected.
struct RunConfig {
  std::uint64_t seed = 17;
  DatasetConfig dataset;
  TextConfig text;
  NewsEncoderSpec news;
  UserEncoderSpec user;  // d_model follows the news encoder
  TrainSection train;
  EvalConfig eval;
  CompareConfig compare;
  std::string source_json;  // canonical JSON the config was built from

  static RunConfig parse(const std::string& json_text);
  static RunConfig load(const std::string& path);
  /// Returns a copy with `seed` replaced everywhere it is derived from.
  RunConfig with_seed(std::uint64_t seed) const;
  /// FNV-1a of the canonical JSON, 16 hex digits.
  std::string hash() const;
  void validate() const;
};

const char* to_string(InitMode mode);

/// Name of the single config path the variants override, e.g.
/// "model.news_encoder.depth". Throws ConfigError unless every variant sets
/// exactly the same one leaf.
std::string compare_axis(const CompareConfig& compare);

/// Applies a variant's overrides to the base config's JSON and re-parses.
RunConfig apply_variant(const RunConfig& base, const CompareVariant& variant);

}  // namespace newsrec
