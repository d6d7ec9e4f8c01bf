// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/Dense>
#include <json.hpp>

#include "newsrec/error.hpp"

namespace newsrec {
namespace {

void check_pair(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size() || scores.empty()) {
    throw DimensionError(std::string(what) + ": scores and labels differ in length or are empty");
  }
}

std::size_t positives(std::span<const int> labels) {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int l) { return l > 0; }));
}

constexpr std::size_t kBins = 20;

std::array<std::size_t, kBins> histogram(const std::vector<ImpressionMetrics>& m,
                                         double ImpressionMetrics::*field) {
  std::array<std::size_t, kBins> h{};
  for (const auto& x : m) {
    auto b = static_cast<std::size_t>(x.*field * kBins);
    h[std::min(b, kBins - 1)]++;
  }
  return h;
}

}  // namespace

double auc_impression(std::span<const double> scores, std::span<const int> labels) {
  check_pair(scores, labels, "auc");
  const std::size_t p = positives(labels), n = labels.size() - p;
  if (p == 0 || n == 0) throw DataError("AUC needs at least one positive and one negative");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Ranks are half-integers, so the sum stays exact.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t)
      if (labels[order[t]] > 0) pos_rank_sum += avg_rank;
    i = j;
  }
  const double pd = static_cast<double>(p);
  return (pos_rank_sum - pd * (pd + 1.0) / 2.0) / (pd * static_cast<double>(n));
}

double mrr(std::span<const double> scores, std::span<const int> labels) {
  check_pair(scores, labels, "mrr");
  const std::size_t p = positives(labels);
  if (p == 0) throw DataError("MRR needs at least one positive");
  const auto order = rank_by_score(scores);
  double total = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (labels[order[r]] > 0) total += 1.0 / static_cast<double>(r + 1);
  return total / static_cast<double>(p);
}

double ndcg_at_k(std::span<const double> scores, std::span<const int> labels, std::size_t k) {
  check_pair(scores, labels, "ndcg");
  if (k == 0) throw ConfigError("nDCG cutoff must be at least 1");
  const std::size_t p = positives(labels);
  if (p == 0) throw DataError("nDCG needs at least one positive");
  const auto order = rank_by_score(scores);
  double dcg = 0.0, ideal = 0.0;
  for (std::size_t r = 0; r < std::min(k, order.size()); ++r) {
    const double disc = 1.0 / std::log2(static_cast<double>(r + 2));
    if (labels[order[r]] > 0) dcg += disc;
    if (r < p) ideal += disc;
  }
  return dcg / ideal;
}

EvalReport build_report(std::span<const ScoredImpression> scored, ReportMetadata metadata) {
  EvalReport rep;
  rep.metadata = std::move(metadata);
  for (const auto& s : scored) {
    const std::size_t p = positives(s.labels);
    if (p == 0) {
      rep.skipped_no_positive++;
      continue;
    }
    if (p == s.labels.size()) {
      rep.skipped_no_negative++;
      continue;
    }
    ImpressionMetrics m;
    m.impression_id = s.impression_id;
    m.auc = auc_impression(s.scores, s.labels);
    m.mrr = mrr(s.scores, s.labels);
    m.ndcg5 = ndcg_at_k(s.scores, s.labels, 5);
    m.ndcg10 = ndcg_at_k(s.scores, s.labels, 10);
    m.num_candidates = s.labels.size();
    m.num_positives = p;
    rep.impressions.push_back(std::move(m));
  }
  if (!rep.impressions.empty()) {
    for (const auto& m : rep.impressions) {
      rep.mean_auc += m.auc;
      rep.mean_mrr += m.mrr;
      rep.mean_ndcg5 += m.ndcg5;
      rep.mean_ndcg10 += m.ndcg10;
    }
    const double n = static_cast<double>(rep.impressions.size());
    rep.mean_auc /= n;
    rep.mean_mrr /= n;
    rep.mean_ndcg5 /= n;
    rep.mean_ndcg10 /= n;
  }
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["metadata"] = {{"spec_hash", metadata.spec_hash},
                   {"seed", metadata.seed},
                   {"dataset_id", metadata.dataset_id}};
  j["num_impressions"] = impressions.size();
  j["means"] = {{"auc", mean_auc}, {"mrr", mean_mrr}, {"ndcg@5", mean_ndcg5}, {"ndcg@10", mean_ndcg10}};
  j["skipped"] = {{"no_positive", skipped_no_positive}, {"no_negative", skipped_no_negative}};
  j["histograms"] = {{"bins", kBins},
                     {"auc", histogram(impressions, &ImpressionMetrics::auc)},
                     {"mrr", histogram(impressions, &ImpressionMetrics::mrr)},
                     {"ndcg@5", histogram(impressions, &ImpressionMetrics::ndcg5)},
                     {"ndcg@10", histogram(impressions, &ImpressionMetrics::ndcg10)}};
  return j.dump(2) + "\n";
}

std::string EvalReport::per_impression_csv() const {
  std::string out = "impression_id,num_candidates,num_positives,auc,mrr,ndcg5,ndcg10\n";
  char buf[256];
  for (const auto& m : impressions) {
    std::snprintf(buf, sizeof buf, ",%zu,%zu,%.17g,%.17g,%.17g,%.17g\n", m.num_candidates,
                  m.num_positives, m.auc, m.mrr, m.ndcg5, m.ndcg10);
    out += m.impression_id + buf;
  }
  return out;
}

Tensor encode_all_news(const RecModel& model, std::span<const TokenSequence> titles,
                       std::size_t chunk) {
  const std::size_t d = model.spec().news.d_model;
  Tensor out(Shape{titles.size(), d});
  for (std::size_t begin = 0; begin < titles.size(); begin += chunk) {
    const std::size_t end = std::min(titles.size(), begin + chunk);
    Tape tape(&model.params());
    Var e = model.encode_news(tape, titles.subspan(begin, end - begin));
    std::copy(e.value().values().begin(), e.value().values().end(), out.data() + begin * d);
  }
  return out;
}

std::vector<ScoredImpression> score_impressions(const RecModel& model, const RecData& data,
                                                std::span<const std::size_t> impressions) {
  std::vector<ScoredImpression> out;
  if (impressions.empty()) return out;
  const Tensor news = encode_all_news(model, data.titles);
  const std::size_t d = news.cols();
  constexpr std::size_t kChunk = 256;
  for (std::size_t begin = 0; begin < impressions.size(); begin += kChunk) {
    const std::size_t end = std::min(impressions.size(), begin + kChunk);
    Tape tape(&model.params());
    Var table = tape.constant(news);
    std::vector<UserInput> users;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t imp = impressions[i];
      users.push_back({data.user_rows.at(imp), data.histories.at(imp)});
    }
    const Tensor u = model.encode_users(tape, table, users).value();
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t imp = impressions[i];
      ScoredImpression s;
      s.impression_id = data.dataset.impressions[imp].impression_id;
      const double* urow = u.data() + (i - begin) * d;
      for (const auto& [idx, label] : data.candidates[imp]) {
        const double* nrow = news.data() + static_cast<std::size_t>(idx) * d;
        double score = 0.0;
        for (std::size_t c = 0; c < d; ++c) score += urow[c] * nrow[c];
        s.scores.push_back(score);
        s.labels.push_back(label);
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<ScoredImpression> oracle_scores(const RecData& data,
                                            std::span<const std::size_t> impressions, bool anti) {
  std::vector<ScoredImpression> out;
  for (auto imp : impressions) {
    ScoredImpression s;
    s.impression_id = data.dataset.impressions.at(imp).impression_id;
    for (const auto& [idx, label] : data.candidates[imp]) {
      s.scores.push_back(anti ? -label : label);
      s.labels.push_back(label);
    }
    out.push_back(std::move(s));
  }
  return out;
}

EvalReport evaluate(const RecModel& model, const RecData& data,
                    std::span<const std::size_t> impressions, ReportMetadata metadata) {
  return build_report(score_impressions(model, data, impressions), std::move(metadata));
}

double mean_auc(const RecModel& model, const RecData& data, std::span<const std::size_t> impressions) {
  const auto rep = evaluate(model, data, impressions);
  return rep.impressions.empty() ? 0.5 : rep.mean_auc;
}

Projection pca_project(const Tensor& x, std::size_t out_dims) {
  if (x.rank() != 2) throw DimensionError("pca_project expects an [N x d] matrix");
  const std::size_t n = x.rows(), d = x.cols();
  if (out_dims == 0 || n < out_dims || d < out_dims) {
    throw DimensionError("pca_project needs N >= out_dims and d >= out_dims");
  }
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat m = Eigen::Map<const Mat>(x.data(), static_cast<long>(n), static_cast<long>(d));
  m.rowwise() -= m.colwise().mean();
  const Eigen::MatrixXd cov = (m.transpose() * m) / static_cast<double>(n);
  Projection p;
  p.coords = Tensor(Shape{n, out_dims});
  const double total = cov.trace();
  if (!(total > 1e-300)) {
    p.zero_variance = true;
    p.explained_ratio.assign(out_dims, 0.0);
    return p;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  for (std::size_t c = 0; c < out_dims; ++c) {
    const long col = static_cast<long>(d - 1 - c);  // eigenvalues ascend
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    p.explained_ratio.push_back(std::max(0.0, eig.eigenvalues()(col)) / total);
    const Eigen::VectorXd proj = m * v;
    for (std::size_t r = 0; r < n; ++r) p.coords.at(r, c) = proj(static_cast<long>(r));
  }
  return p;
}

double silhouette_score(const Tensor& x, std::span<const int> labels) {
  if (x.rank() != 2 || x.rows() != labels.size()) {
    throw DimensionError("silhouette: one label per embedding row");
  }
  const std::size_t n = x.rows(), d = x.cols();
  if (n < 3) throw DataError("silhouette needs at least 3 points");
  std::vector<int> ids(labels.begin(), labels.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw DataError("silhouette needs at least two clusters");
  std::vector<std::size_t> cluster(n), sizes(ids.size(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    cluster[i] = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
    sizes[cluster[i]]++;
  }
  double total = 0.0;
  std::vector<double> dist_sum(ids.size());
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    const double* xi = x.data() + i * d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* xj = x.data() + j * d;
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += (xi[c] - xj[c]) * (xi[c] - xj[c]);
      dist_sum[cluster[j]] += std::sqrt(s);
    }
    const std::size_t own = cluster[i];
    if (sizes[own] == 1) continue;  // singleton scores zero
    const double a = dist_sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < ids.size(); ++c)
      if (c != own) b = std::min(b, dist_sum[c] / static_cast<double>(sizes[c]));
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

}  // namespace newsrec
