// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "newsrec/corpus.hpp"
#include "newsrec/model.hpp"

namespace newsrec {

/// One clicked candidate plus K negatives from the same impression, in
/// shuffled order. `label` indexes the clicked one.
struct TrainingSample {
  std::size_t impression = 0;
  std::vector<int> candidates;
  std::size_t label = 0;
};

struct SampleSet {
  std::vector<TrainingSample> samples;
  std::size_t skipped = 0;  // clicks whose impression had no negatives
};

/// One sample per click. `candidate_lists[i]` holds (news index, label)
/// pairs; sample.impression is i. Negatives are drawn without replacement,
/// or with replacement when fewer than K exist.
SampleSet build_training_samples(std::span<const std::vector<std::pair<int, int>>> candidate_lists,
                                 std::size_t negatives, std::uint64_t seed);
/// Same, over a subset of `data`'s impressions; sample.impression indexes
/// the dataset.
SampleSet build_training_samples(const RecData& data, std::span<const std::size_t> impressions,
                                 std::size_t negatives, std::uint64_t seed);

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 128;
  std::size_t shards = 1;
  std::size_t negatives = 4;
  std::size_t epochs = 1;
  std::uint64_t seed = 17;
  double mlm_rate = 0.15;

  void validate() const;
};

/// Mean listwise loss of a batch. News shared by several samples is
/// encoded once.
Var batch_loss(Tape& tape, const RecModel& model, const RecData& data,
               std::span<const TrainingSample> batch);

/// Elementwise mean of per-shard gradients, reduced in shard order. The
/// shard count must divide `batch_size`.
GradientSet aggregate_shards(std::span<const GradientSet> shards, std::size_t batch_size);

struct BatchGradients {
  double loss = 0.0;
  GradientSet grads;
};

/// Splits the batch into `shards` equal contiguous parts, runs them
/// concurrently on separate tapes and aggregates.
BatchGradients batch_gradients(const RecModel& model, const RecData& data,
                               std::span<const TrainingSample> batch, std::size_t shards,
                               std::uint64_t tape_seed = 0);

/// Largest divisor of `batch` not above `shards`.
std::size_t effective_shards(std::size_t batch, std::size_t shards);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_auc = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> epochs;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam over the listwise loss with seeded per-epoch shuffling.
/// Validation loss and AUC are computed after every epoch. Any finetune
/// policy must already be applied to the model.
TrainResult train(RecModel& model, const RecData& data, const SampleSet& train_samples,
                  const SampleSet& valid_samples, std::span<const std::size_t> valid_impressions,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean listwise loss over samples, without gradients.
double mean_loss(const RecModel& model, const RecData& data, std::span<const TrainingSample> samples,
                 std::size_t batch_size = 256);

/// epoch,train_loss,valid_loss,valid_auc with six decimals.
std::string loss_csv(const TrainResult& result);

struct MlmConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  double mask_rate = 0.15;
  std::uint64_t seed = 17;
  /// Negative control: replace every target with a uniform random id.
  bool random_targets = false;
};

/// Masked-token pretraining. Masks are redrawn every epoch. Returns the
/// mean loss of each epoch.
std::vector<double> mlm_pretrain(MlmModel& model, std::span<const TokenSequence> corpus,
                                 const MlmConfig& config,
                                 const std::function<void(std::size_t, double)>& on_epoch = {});

/// epoch,mlm_loss with six decimals.
std::string mlm_loss_csv(std::span<const double> losses);

/// Copies every same-named, same-shaped tensor. Returns the count copied.
std::size_t copy_matching_parameters(const ParameterStore& from, ParameterStore& to);

}  // namespace newsrec
