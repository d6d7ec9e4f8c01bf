// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "newsrec/corpus.hpp"
#include "newsrec/model.hpp"

namespace newsrec {

// Per-impression ranking metrics. Labels are 0/1. Ranks come from
// rank_by_score, so ties keep candidate order.

/// Rank-sum AUC with ties counted as half. Needs a positive and a negative.
double auc_impression(std::span<const double> scores, std::span<const int> labels);
/// Mean reciprocal rank over the positives.
double mrr(std::span<const double> scores, std::span<const int> labels);
/// Binary-relevance nDCG of the top k.
double ndcg_at_k(std::span<const double> scores, std::span<const int> labels, std::size_t k);

struct ImpressionMetrics {
  std::string impression_id;
  double auc = 0.0;
  double mrr = 0.0;
  double ndcg5 = 0.0;
  double ndcg10 = 0.0;
  std::size_t num_candidates = 0;
  std::size_t num_positives = 0;
};

struct ScoredImpression {
  std::string impression_id;
  std::vector<double> scores;
  std::vector<int> labels;
};

struct ReportMetadata {
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::string dataset_id;
};

struct EvalReport {
  std::vector<ImpressionMetrics> impressions;
  double mean_auc = 0.0;
  double mean_mrr = 0.0;
  double mean_ndcg5 = 0.0;
  double mean_ndcg10 = 0.0;
  std::size_t skipped_no_positive = 0;
  std::size_t skipped_no_negative = 0;
  ReportMetadata metadata;

  /// Stable key order; includes 20-bin histograms of every metric.
  std::string to_json() const;
  std::string per_impression_csv() const;
};

/// Impressions lacking a positive or a negative are counted and skipped.
EvalReport build_report(std::span<const ScoredImpression> scored, ReportMetadata metadata = {});

/// [N x d] embeddings of every title, encoded in chunks.
Tensor encode_all_news(const RecModel& model, std::span<const TokenSequence> titles,
                       std::size_t chunk = 256);
/// Model click scores for the chosen impressions of `data`.
std::vector<ScoredImpression> score_impressions(const RecModel& model, const RecData& data,
                                                std::span<const std::size_t> impressions);
/// Debug scorer: scores = labels, or -labels with `anti`.
std::vector<ScoredImpression> oracle_scores(const RecData& data,
                                            std::span<const std::size_t> impressions,
                                            bool anti = false);
EvalReport evaluate(const RecModel& model, const RecData& data,
                    std::span<const std::size_t> impressions, ReportMetadata metadata = {});
/// Mean AUC over the scorable impressions; 0.5 if there are none.
double mean_auc(const RecModel& model, const RecData& data, std::span<const std::size_t> impressions);

struct Projection {
  Tensor coords;                         // [N x out_dims]
  std::vector<double> explained_ratio;   // per component
  bool zero_variance = false;
};

/// Mean-centred PCA. Components are ordered by decreasing variance and each
/// is signed so that its largest-magnitude loading is positive.
Projection pca_project(const Tensor& x, std::size_t out_dims = 2);

/// Mean Euclidean silhouette. Singleton clusters and 0/0 score zero.
double silhouette_score(const Tensor& x, std::span<const int> labels);

}  // namespace newsrec
