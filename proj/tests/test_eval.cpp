// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include <algorithm>
#include <cmath>
#include <numeric>
#include <map>
#include <random>
#include <set>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "newsrec/error.hpp"
#include "newsrec/eval.hpp"
#include "newsrec/pipeline.hpp"

using namespace newsrec;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& l) {
  double good = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (l[i] != 1 || l[j] != 0) continue;
      pairs += 1.0;
      good += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  return good / pairs;
}

// Cyclic Jacobi eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.rbegin(), ev.rend());
  return ev;
}

double silhouette_ref(const Tensor& x, const std::vector<int>& lab) {
  const std::size_t n = x.rows();
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t k = 0; k < x.cols(); ++k) s += (x.at(i, k) - x.at(j, k)) * (x.at(i, k) - x.at(j, k));
    return std::sqrt(s);
  };
  std::set<int> clusters(lab.begin(), lab.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::map<int, std::pair<double, int>> acc;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      acc[lab[j]].first += dist(i, j);
      acc[lab[j]].second += 1;
    }
    if (acc[lab[i]].second == 0) continue;
    const double a = acc[lab[i]].first / acc[lab[i]].second;
    double b = INFINITY;
    for (int c : clusters)
      if (c != lab[i] && acc[c].second) b = std::min(b, acc[c].first / acc[c].second);
    const double m = std::max(a, b);
    total += m > 0 ? (b - a) / m : 0.0;
  }
  return total / n;
}

}  // namespace

TEST_CASE("AUC examples and pairwise oracle") {
  CHECK(auc_impression(std::vector<double>{0.9, 0.1}, std::vector<int>{1, 0}) == 1.0);
  CHECK(auc_impression(std::vector<double>{0.1, 0.9}, std::vector<int>{1, 0}) == 0.0);
  CHECK(auc_impression(std::vector<double>{0.5, 0.5}, std::vector<int>{1, 0}) == 0.5);
  CHECK_THROWS_AS(auc_impression(std::vector<double>{1, 2}, std::vector<int>{1, 1}), DataError);
  CHECK_THROWS_AS(auc_impression(std::vector<double>{1, 2}, std::vector<int>{1}), DimensionError);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(2, 30), coarse(0, 4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < 1000; ++c) {
    const int n = len(rng);
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = c % 2 ? coarse(rng) : unit(rng);  // odd cases carry ties
      l[i] = unit(rng) < 0.3;
    }
    l[0] = 1;
    l[1] = 0;
    CHECK(std::abs(auc_impression(s, l) - pairwise_auc(s, l)) < 1e-12);
    if (c % 2 == 0) {
      std::vector<double> neg(n);
      for (int i = 0; i < n; ++i) neg[i] = -s[i];
      CHECK(std::abs(auc_impression(neg, l) - (1.0 - auc_impression(s, l))) < 1e-12);
    }
  }
}

TEST_CASE("MRR examples") {
  CHECK(mrr(std::vector<double>{3, 2, 1}, std::vector<int>{1, 0, 0}) == 1.0);
  CHECK(mrr(std::vector<double>{3, 4, 2, 1}, std::vector<int>{1, 0, 0, 0}) == 0.5);
  CHECK(std::abs(mrr(std::vector<double>{5, 4, 3, 2}, std::vector<int>{1, 0, 1, 0}) - 2.0 / 3.0) < 1e-15);
  CHECK_THROWS_AS(mrr(std::vector<double>{1, 2}, std::vector<int>{0, 0}), DataError);
}

TEST_CASE("nDCG examples and direct formula") {
  CHECK(ndcg_at_k(std::vector<double>{3, 2, 1}, std::vector<int>{1, 0, 0}, 5) == 1.0);
  CHECK(std::abs(ndcg_at_k(std::vector<double>{3, 2, 1, 0}, std::vector<int>{0, 0, 1, 0}, 5) - 0.5) < 1e-15);
  CHECK(ndcg_at_k(std::vector<double>{3, 2, 1, 0}, std::vector<int>{0, 0, 1, 0}, 2) == 0.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 0; c < 300; ++c) {
    const int n = 12;
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (int i = 0; i < n; ++i) {
      s[i] = unit(rng);
      l[i] = unit(rng) < 0.25;
    }
    l[5] = 1;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
    for (std::size_t k : {5u, 10u, 12u, 40u}) {
      double dcg = 0.0, idcg = 0.0;
      const int pos = std::accumulate(l.begin(), l.end(), 0);
      for (std::size_t r = 0; r < std::min<std::size_t>(k, n); ++r) {
        dcg += l[order[r]] / std::log2(r + 2.0);
        if (static_cast<int>(r) < pos) idcg += 1.0 / std::log2(r + 2.0);
      }
      const double v = ndcg_at_k(s, l, k);
      CHECK(std::abs(v - dcg / idcg) < 1e-12);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(ndcg_at_k(s, l, 12) == ndcg_at_k(s, l, 100));
  }
}

TEST_CASE("metrics are invariant under increasing transforms") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(-2.0, 2.0);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> s(9), t(9);
    std::vector<int> l(9, 0);
    l[c % 9] = 1;
    l[(c + 4) % 9] = 1;
    for (int i = 0; i < 9; ++i) {
      s[i] = std::round(unit(rng) * 2.0) / 2.0;
      t[i] = std::exp(3.0 * s[i]) + 1.0;
    }
    CHECK(auc_impression(s, l) == auc_impression(t, l));
    CHECK(mrr(s, l) == mrr(t, l));
    CHECK(ndcg_at_k(s, l, 5) == ndcg_at_k(t, l, 5));
  }
}

TEST_CASE("report means, skips and serialization") {
  std::vector<ScoredImpression> scored{
      {"a", {0.9, 0.1, 0.3}, {1, 0, 0}},
      {"b", {0.1, 0.9, 0.3}, {1, 0, 0}},
      {"c", {0.1, 0.2}, {0, 0}},
      {"d", {0.1, 0.2}, {1, 1}},
  };
  auto r = build_report(scored, {"abc", 7, "dataset-x"});
  REQUIRE(r.impressions.size() == 2);
  CHECK(r.skipped_no_positive == 1);
  CHECK(r.skipped_no_negative == 1);
  double auc = 0.0, m = 0.0;
  for (const auto& i : r.impressions) {
    auc += i.auc / 2.0;
    m += i.mrr / 2.0;
  }
  CHECK(std::abs(r.mean_auc - auc) < 1e-12);
  CHECK(std::abs(r.mean_mrr - m) < 1e-12);
  CHECK(r.mean_auc == 0.5);
  auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["metadata"]["seed"] == 7);
  CHECK(j["metadata"]["dataset_id"] == "dataset-x");
  CHECK(j["means"]["auc"] == 0.5);
  CHECK(j["histograms"]["auc"].size() == 20);
  CHECK(r.to_json() == build_report(scored, {"abc", 7, "dataset-x"}).to_json());
  auto csv = r.per_impression_csv();
  CHECK(csv.rfind("impression_id,num_candidates,num_positives,auc,mrr,ndcg5,ndcg10\na,3,1,1,1,1,1\n", 0) == 0);
}

TEST_CASE("oracle, anti-oracle and untrained model on synthetic data") {
  auto cfg = RunConfig::parse(R"({
    "seed": 3,
    "dataset": {"synthetic": {"num_users": 60, "num_news": 150, "impressions_per_user": 10, "seed": 3}},
    "text": {"max_title_len": 16},
    "model": {"news_encoder": {"kind": "SELF_ATTN", "d_model": 16, "num_heads": 2},
              "user_encoder": {"kind": "NRMS_SELF_ATTN", "num_heads": 2}}
  })");
  auto ws = prepare_workspace(cfg);
  std::vector<std::size_t> all(ws.data.candidates.size());
  std::iota(all.begin(), all.end(), 0);
  REQUIRE(all.size() >= 500);
  auto oracle = build_report(oracle_scores(ws.data, all));
  CHECK(oracle.mean_auc == 1.0);
  CHECK(oracle.mean_mrr == 1.0);
  CHECK(oracle.mean_ndcg5 == 1.0);
  CHECK(oracle.mean_ndcg10 == 1.0);
  CHECK(build_report(oracle_scores(ws.data, all, true)).mean_auc == 0.0);
  RecModel model(model_spec(cfg, ws.data), 11);
  auto r = evaluate(model, ws.data, all);
  CHECK(r.impressions.size() >= 500);
  CHECK(r.mean_auc >= 0.45);
  CHECK(r.mean_auc <= 0.55);
  CHECK(std::abs(mean_auc(model, ws.data, all) - r.mean_auc) < 1e-12);
}

TEST_CASE("PCA examples") {
  Tensor line(Shape{6, 3});
  for (std::size_t i = 0; i < 6; ++i) {
    line.at(i, 0) = 1.0 + 2.0 * i;
    line.at(i, 1) = -1.0 * i;
    line.at(i, 2) = 0.5 * i + 4.0;
  }
  auto p = pca_project(line, 2);
  CHECK(std::abs(p.explained_ratio[0] - 1.0) < 1e-12);
  CHECK(p.explained_ratio[1] < 1e-12);

  Tensor square(Shape{4, 2}, {0, 0, 1, 0, 0, 1, 1, 1});
  auto q = pca_project(square, 2);
  CHECK(std::abs(q.explained_ratio[0] - 0.5) < 1e-12);
  CHECK(std::abs(q.explained_ratio[1] - 0.5) < 1e-12);

  Tensor flat(Shape{5, 3});
  flat.fill(2.5);
  auto z = pca_project(flat, 2);
  CHECK(z.zero_variance);
  for (double v : z.coords.values()) CHECK(v == 0.0);
  CHECK_THROWS_AS(pca_project(flat, 4), DimensionError);
}

TEST_CASE("PCA reconstruction error matches an independent eigen-solver") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor x(Shape{50, 8});
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t k = 0; k < 8; ++k) x.at(i, k) = nd(rng) * (1.0 + k);
  auto p = pca_project(x, 2);
  std::vector<double> mean(8, 0.0);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t k = 0; k < 8; ++k) mean[k] += x.at(i, k) / 50.0;
  std::vector<std::vector<double>> cov(8, std::vector<double>(8, 0.0));
  double total = 0.0;
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t a = 0; a < 8; ++a) {
      total += (x.at(i, a) - mean[a]) * (x.at(i, a) - mean[a]);
      for (std::size_t b = 0; b < 8; ++b) cov[a][b] += (x.at(i, a) - mean[a]) * (x.at(i, b) - mean[b]);
    }
  auto ev = jacobi_eigenvalues(cov);
  double kept = 0.0;
  for (double v : p.coords.values()) kept += v * v;
  const double residual = total - kept;
  double expected = 0.0;
  for (std::size_t i = 2; i < 8; ++i) expected += ev[i];
  CHECK(std::abs(residual - expected) < 1e-8);
  CHECK(std::abs(p.explained_ratio[0] - ev[0] / total) < 1e-10);

  // Translation invariance.
  Tensor shifted = x;
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t k = 0; k < 8; ++k) shifted.at(i, k) += 3.0 - k;
  CHECK(max_abs_diff(pca_project(shifted, 2).coords, p.coords) < 1e-9);
}

TEST_CASE("silhouette") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor tight(Shape{40, 3});
  std::vector<int> lab(40);
  for (std::size_t i = 0; i < 40; ++i) {
    lab[i] = i < 20 ? 0 : 1;
    for (std::size_t k = 0; k < 3; ++k) tight.at(i, k) = 0.05 * nd(rng) + (lab[i] ? 10.0 : 0.0);
  }
  const double s = silhouette_score(tight, lab);
  CHECK(s > 0.9);
  CHECK(std::abs(s - silhouette_ref(tight, lab)) < 1e-12);

  Tensor iso(Shape{500, 4});
  std::vector<int> random(500);
  for (std::size_t i = 0; i < 500; ++i) {
    random[i] = static_cast<int>(rng() % 3);
    for (std::size_t k = 0; k < 4; ++k) iso.at(i, k) = nd(rng);
  }
  const double r = silhouette_score(iso, random);
  CHECK(std::abs(r) < 0.1);

  Tensor same(Shape{6, 2});
  same.fill(1.0);
  CHECK(silhouette_score(same, std::vector<int>{0, 0, 0, 1, 1, 1}) == 0.0);

  Tensor small(Shape{5, 2}, {0, 0, 0, 1, 5, 5, 5, 6, 9, 9});
  std::vector<int> l3{0, 0, 1, 1, 2};  // cluster 2 is a singleton
  CHECK(std::abs(silhouette_score(small, l3) - silhouette_ref(small, l3)) < 1e-12);
}
