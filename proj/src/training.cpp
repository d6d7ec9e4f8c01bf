// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "newsrec/error.hpp"
#include "newsrec/eval.hpp"
#include "newsrec/ops.hpp"

namespace newsrec {
namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  std::uint64_t x = a ^ (b * 0x9E3779B97F4A7C15ull) ^ (c * 0xC2B2AE3D27D4EB4Full);
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDull;
  x ^= x >> 33;
  x *= 0xC4CEB9FE1A85EC53ull;
  return x ^ (x >> 33);
}

}  // namespace

SampleSet build_training_samples(std::span<const std::vector<std::pair<int, int>>> candidate_lists,
                                 std::size_t negatives, std::uint64_t seed) {
  if (negatives == 0) throw ConfigError("negative count K must be at least 1");
  SampleSet out;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < candidate_lists.size(); ++i) {
    std::vector<int> pos, neg;
    for (const auto& [id, label] : candidate_lists[i]) (label ? pos : neg).push_back(id);
    if (neg.empty()) {
      out.skipped += pos.size();
      continue;
    }
    for (int p : pos) {
      TrainingSample s;
      s.impression = i;
      s.candidates.push_back(p);
      if (neg.size() >= negatives) {
        std::vector<int> pool = neg;
        for (std::size_t k = 0; k < negatives; ++k) {
          std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
          std::swap(pool[k], pool[pick(rng)]);
          s.candidates.push_back(pool[k]);
        }
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, neg.size() - 1);
        for (std::size_t k = 0; k < negatives; ++k) s.candidates.push_back(neg[pick(rng)]);
      }
      std::shuffle(s.candidates.begin(), s.candidates.end(), rng);
      // The positive id may also appear among the negatives only if the
      // impression lists it twice; take its first slot.
      s.label = static_cast<std::size_t>(std::find(s.candidates.begin(), s.candidates.end(), p) -
                                         s.candidates.begin());
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

SampleSet build_training_samples(const RecData& data, std::span<const std::size_t> impressions,
                                 std::size_t negatives, std::uint64_t seed) {
  std::vector<std::vector<std::pair<int, int>>> lists;
  lists.reserve(impressions.size());
  for (auto i : impressions) lists.push_back(data.candidates.at(i));
  SampleSet out = build_training_samples(lists, negatives, seed);
  for (auto& s : out.samples) s.impression = impressions[s.impression];
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be a finite non-negative number");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (shards == 0) throw ConfigError("shards must be positive");
  if (batch_size % shards != 0) {
    throw ConfigError("batch_size " + std::to_string(batch_size) + " is not divisible by shards " +
                      std::to_string(shards));
  }
  if (negatives == 0) throw ConfigError("negatives must be at least 1");
  if (!(mlm_rate > 0.0 && mlm_rate < 1.0)) throw ConfigError("mlm_rate must be in (0, 1)");
}

Var batch_loss(Tape& tape, const RecModel& model, const RecData& data,
               std::span<const TrainingSample> batch) {
  if (batch.empty()) throw DataError("empty training batch");
  const std::size_t width = batch[0].candidates.size();
  std::map<int, int> local;
  for (const auto& s : batch) {
    if (s.candidates.size() != width) throw DimensionError("samples in a batch differ in candidate count");
    for (int n : data.histories.at(s.impression)) local.emplace(n, 0);
    for (int n : s.candidates) local.emplace(n, 0);
  }
  std::vector<TokenSequence> titles;
  titles.reserve(local.size());
  for (auto& [news, row] : local) {
    row = static_cast<int>(titles.size());
    titles.push_back(data.titles.at(static_cast<std::size_t>(news)));
  }
  Var news = model.encode_news(tape, titles);

  std::vector<UserInput> users;
  std::vector<int> cand_rows;
  std::vector<int> labels;
  std::vector<std::size_t> offsets{0};
  for (const auto& s : batch) {
    UserInput u{data.user_rows.at(s.impression), {}};
    for (int n : data.histories[s.impression]) u.rows.push_back(local[n]);
    users.push_back(std::move(u));
    for (int n : s.candidates) cand_rows.push_back(local[n]);
    offsets.push_back(cand_rows.size());
    labels.push_back(static_cast<int>(s.label));
  }
  Var user = model.encode_users(tape, news, users);
  Var scores = ops::segment_rowdot(ops::gather_rows(news, cand_rows), user, offsets);
  return ops::cross_entropy_rows(ops::reshape(scores, Shape{batch.size(), width}), labels);
}

GradientSet aggregate_shards(std::span<const GradientSet> shards, std::size_t batch_size) {
  if (shards.empty()) throw ContractError("aggregate_shards needs at least one shard");
  if (batch_size % shards.size() != 0) {
    throw ContractError("shard count " + std::to_string(shards.size()) +
                        " does not divide batch size " + std::to_string(batch_size));
  }
  GradientSet out = shards[0];
  for (std::size_t s = 1; s < shards.size(); ++s) {
    if (shards[s].size() != out.size()) throw DimensionError("shards disagree on parameter count");
    for (std::size_t p = 0; p < out.size(); ++p) {
      if (shards[s][p].shape() != out[p].shape()) {
        throw DimensionError("shard gradient shape mismatch at parameter " + std::to_string(p));
      }
      auto& acc = out[p].values();
      const auto& g = shards[s][p].values();
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
    }
  }
  out.scale(1.0 / static_cast<double>(shards.size()));
  return out;
}

std::size_t effective_shards(std::size_t batch, std::size_t shards) {
  std::size_t g = std::max<std::size_t>(1, std::min(batch, shards));
  while (batch % g != 0) --g;
  return g;
}

BatchGradients batch_gradients(const RecModel& model, const RecData& data,
                               std::span<const TrainingSample> batch, std::size_t shards,
                               std::uint64_t tape_seed) {
  if (batch.empty()) throw DataError("empty training batch");
  if (shards == 0 || batch.size() % shards != 0) {
    throw ContractError("shard count must divide the batch");
  }
  const std::size_t per = batch.size() / shards;
  auto run = [&](std::size_t s) {
    Tape tape(&model.params(), mix(tape_seed, s + 1), /*training=*/true);
    Var loss = batch_loss(tape, model, data, batch.subspan(s * per, per));
    tape.backward(loss);
    return std::make_pair(loss.value().item(), tape.parameter_gradients());
  };
  std::vector<std::future<std::pair<double, GradientSet>>> pending;
  for (std::size_t s = 1; s < shards; ++s) pending.push_back(std::async(std::launch::async, run, s));
  std::vector<GradientSet> grads;
  double loss = 0.0;
  {
    auto [l, g] = run(0);
    loss += l;
    grads.push_back(std::move(g));
  }
  for (auto& f : pending) {
    auto [l, g] = f.get();
    loss += l;
    grads.push_back(std::move(g));
  }
  return {loss / static_cast<double>(shards), aggregate_shards(grads, batch.size())};
}

double mean_loss(const RecModel& model, const RecData& data, std::span<const TrainingSample> samples,
                 std::size_t batch_size) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (std::size_t b = 0; b < samples.size(); b += batch_size) {
    const std::size_t n = std::min(batch_size, samples.size() - b);
    Tape tape(&model.params());
    total += batch_loss(tape, model, data, samples.subspan(b, n)).value().item() * static_cast<double>(n);
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train(RecModel& model, const RecData& data, const SampleSet& train_samples,
                  const SampleSet& valid_samples, std::span<const std::size_t> valid_impressions,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  const auto& samples = train_samples.samples;
  if (samples.empty()) throw DataError("no training samples");
  AdamState adam = make_adam_state(model.params(), AdamConfig{.learning_rate = config.learning_rate});
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingSample> batch;
  TrainResult result;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng(mix(config.seed, epoch, 1));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    std::size_t step = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size, ++step) {
      const std::size_t n = std::min(config.batch_size, order.size() - b);
      batch.clear();
      for (std::size_t i = b; i < b + n; ++i) batch.push_back(samples[order[i]]);
      auto bg = batch_gradients(model, data, batch, effective_shards(n, config.shards),
                                mix(config.seed, epoch, step + 2));
      if (!std::isfinite(bg.loss)) {
        throw NumericalError("training loss became non-finite at epoch " + std::to_string(epoch) +
                             ", step " + std::to_string(step));
      }
      adam_step(model.params(), bg.grads, adam);
      total += bg.loss * static_cast<double>(n);
    }
    EpochStats st;
    st.epoch = epoch;
    st.train_loss = total / static_cast<double>(samples.size());
    st.valid_loss = mean_loss(model, data, valid_samples.samples);
    st.valid_auc = valid_impressions.empty() ? std::numeric_limits<double>::quiet_NaN()
                                             : mean_auc(model, data, valid_impressions);
    result.epochs.push_back(st);
    if (on_epoch) on_epoch(st);
  }
  return result;
}

std::string loss_csv(const TrainResult& result) {
  std::string out = "epoch,train_loss,valid_loss,valid_auc\n";
  char buf[128];
  for (const auto& e : result.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss, e.valid_loss, e.valid_auc);
    out += buf;
  }
  return out;
}

std::vector<double> mlm_pretrain(MlmModel& model, std::span<const TokenSequence> corpus,
                                 const MlmConfig& config,
                                 const std::function<void(std::size_t, double)>& on_epoch) {
  if (corpus.empty()) throw DataError("pretraining corpus is empty");
  if (config.batch_size == 0) throw ConfigError("pretraining batch size must be positive");
  if (!(config.mask_rate > 0.0 && config.mask_rate < 1.0)) throw ConfigError("mask rate must be in (0, 1)");
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (corpus[i].real_length() >= 2) usable.push_back(i);
  if (usable.empty()) throw DataError("pretraining corpus has no titles with words");
  const std::size_t vocab = model.encoder().vocab_size();
  if (config.random_targets && vocab <= static_cast<std::size_t>(kNumReserved)) {
    throw ConfigError("random targets need a vocabulary beyond the reserved ids");
  }
  AdamState adam = make_adam_state(model.params(), AdamConfig{.learning_rate = config.learning_rate});
  std::vector<double> losses;
  std::vector<TokenSequence> seqs;
  std::vector<std::vector<std::pair<std::size_t, int>>> targets;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 rng(mix(config.seed, epoch, 3));
    std::shuffle(usable.begin(), usable.end(), rng);
    std::uniform_int_distribution<int> random_id(kNumReserved, static_cast<int>(vocab) - 1);
    double total = 0.0;
    std::size_t weight = 0;
    for (std::size_t b = 0; b < usable.size(); b += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, usable.size() - b);
      seqs.clear();
      targets.clear();
      for (std::size_t i = b; i < b + n; ++i) {
        auto ex = mask_for_mlm(corpus[usable[i]], config.mask_rate, mix(config.seed, epoch, usable[i] + 7), vocab);
        if (config.random_targets)
          for (auto& t : ex.targets) t.second = random_id(rng);
        seqs.push_back(std::move(ex.corrupted));
        targets.push_back(std::move(ex.targets));
      }
      Tape tape(&model.params(), mix(config.seed, epoch, b + 11), /*training=*/true);
      Var loss = model.loss(tape, seqs, targets);
      if (!std::isfinite(loss.value().item())) throw NumericalError("MLM loss became non-finite");
      tape.backward(loss);
      adam_step(model.params(), tape.parameter_gradients(), adam);
      total += loss.value().item() * static_cast<double>(n);
      weight += n;
    }
    losses.push_back(total / static_cast<double>(weight));
    if (on_epoch) on_epoch(epoch, losses.back());
  }
  return losses;
}

std::string mlm_loss_csv(std::span<const double> losses) {
  std::string out = "epoch,mlm_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < losses.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", i + 1, losses[i]);
    out += buf;
  }
  return out;
}

std::size_t copy_matching_parameters(const ParameterStore& from, ParameterStore& to) {
  std::size_t copied = 0;
  for (const auto& p : from) {
    if (!to.contains(p.name)) continue;
    auto& dst = to.at(p.name);
    if (dst.value.shape() != p.value.shape()) {
      throw DimensionError("parameter " + p.name + " has shape " + shape_str(p.value.shape()) +
                           " but the target expects " + shape_str(dst.value.shape()));
    }
    dst.value = p.value;
    ++copied;
  }
  return copied;
}

}  // namespace newsrec
