// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "newsrec/error.hpp"
#include "newsrec/gradcheck.hpp"
#include "newsrec/ops.hpp"
#include "newsrec/user_encoder.hpp"

using namespace newsrec;

namespace {

constexpr std::size_t kD = 4;

struct Built {
  ParameterStore store;
  UserEncoder enc;
};

Built build(UserEncoderKind kind, std::size_t table = 5, std::uint64_t seed = 1, std::size_t max_history = 50) {
  Built b;
  UserEncoderSpec spec;
  spec.kind = kind;
  spec.d_model = kD;
  spec.num_heads = 2;
  spec.pool_dim = 3;
  spec.user_table_size = table;
  spec.max_history = max_history;
  std::mt19937_64 rng(seed);
  b.enc = UserEncoder(spec, b.store, rng);
  // Spread the user table so rows differ visibly.
  if (spec.uses_user_table()) {
    for (auto& v : b.store.at("user.user_emb").value.values()) v *= 25.0;
  }
  return b;
}

Tensor random_rows(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  Tensor t(Shape{n, d});
  for (auto& v : t.values()) v = nd(rng);
  return t;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// One GRU step with gate order [reset, update, candidate].
std::vector<double> gru_step(const ParameterStore& s, const std::vector<double>& h, const Tensor& x,
                             std::size_t row) {
  const auto &wx = s.at("user.gru.wx").value, &bx = s.at("user.gru.bx").value;
  const auto &wh = s.at("user.gru.wh").value, &bh = s.at("user.gru.bh").value;
  std::vector<double> gx(3 * kD), gh(3 * kD);
  for (std::size_t j = 0; j < 3 * kD; ++j) {
    gx[j] = bx[j];
    gh[j] = bh[j];
    for (std::size_t k = 0; k < kD; ++k) {
      gx[j] += x.at(row, k) * wx.at(k, j);
      gh[j] += h[k] * wh.at(k, j);
    }
  }
  std::vector<double> out(kD);
  for (std::size_t j = 0; j < kD; ++j) {
    const double r = sigmoid(gx[j] + gh[j]);
    const double z = sigmoid(gx[kD + j] + gh[kD + j]);
    const double n = std::tanh(gx[2 * kD + j] + r * gh[2 * kD + j]);
    out[j] = (1.0 - z) * n + z * h[j];
  }
  return out;
}

Tensor encode(const Built& b, const Tensor& clicks, std::vector<int> mask, std::size_t user = 0,
              Tensor* weights = nullptr) {
  Tape tape(&b.store);
  ClickHistory h{user, tape.constant(clicks), std::move(mask)};
  return b.enc.encode(tape, h, weights).value();
}

const UserEncoderKind kAll[] = {UserEncoderKind::kGru, UserEncoderKind::kAdditiveAttention,
                                UserEncoderKind::kNpa, UserEncoderKind::kLstur, UserEncoderKind::kNrms};

}  // namespace

TEST_CASE("GRU follows the gate equations") {
  auto b = build(UserEncoderKind::kGru);
  for (auto& p : b.store)
    for (auto& v : p.value.values()) v += 0.1;  // non-zero biases
  const Tensor x = random_rows(3, kD, 4);
  auto u = encode(b, x, {1, 1, 1});
  std::vector<double> h(kD, 0.0);
  for (std::size_t t = 0; t < 3; ++t) h = gru_step(b.store, h, x, t);
  for (std::size_t j = 0; j < kD; ++j) CHECK(std::abs(u[j] - h[j]) < 1e-12);
  // Padding after the last click changes nothing.
  Tensor padded(Shape{5, kD});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < kD; ++k) padded.at(i, k) = x.at(i, k);
  padded.at(3, 0) = 9.0;
  CHECK(max_abs_diff(encode(b, padded, {1, 1, 1, 0, 0}), u) == 0.0);
  // Empty history returns the initial zero state.
  auto e = encode(b, x, {0, 0, 0});
  for (double v : e.values()) CHECK(v == 0.0);
}

TEST_CASE("LSTUR starts from the user's long-term row") {
  auto b = build(UserEncoderKind::kLstur);
  const auto& table = b.store.at("user.user_emb").value;
  const Tensor x = random_rows(2, kD, 8);
  auto empty = encode(b, x, {0, 0}, 3);
  for (std::size_t j = 0; j < kD; ++j) CHECK(empty[j] == table.at(3, j));
  auto u = encode(b, x, {1, 1}, 3);
  std::vector<double> h(kD);
  for (std::size_t j = 0; j < kD; ++j) h[j] = table.at(3, j);
  for (std::size_t t = 0; t < 2; ++t) h = gru_step(b.store, h, x, t);
  for (std::size_t j = 0; j < kD; ++j) CHECK(std::abs(u[j] - h[j]) < 1e-12);
  CHECK(max_abs_diff(u, encode(b, x, {1, 1}, 2)) > 1e-6);
}

TEST_CASE("NPA personalized attention and the unknown-user row") {
  auto b = build(UserEncoderKind::kNpa);
  const Tensor x = random_rows(4, kD, 9);
  Tensor weights;
  auto u = encode(b, x, {1, 1, 1, 1}, 2, &weights);
  const auto& s = b.store;
  const auto &table = s.at("user.user_emb").value, &nw = s.at("user.npa.w").value,
             &nb = s.at("user.npa.b").value, &pw = s.at("user.pool.w").value, &pb = s.at("user.pool.b").value;
  std::vector<double> q(3);
  for (std::size_t a = 0; a < 3; ++a) {
    double z = nb[a];
    for (std::size_t k = 0; k < kD; ++k) z += table.at(2, k) * nw.at(k, a);
    q[a] = std::tanh(z);
  }
  std::vector<double> logit(4);
  for (std::size_t i = 0; i < 4; ++i) {
    logit[i] = 0.0;
    for (std::size_t a = 0; a < 3; ++a) {
      double z = pb[a];
      for (std::size_t k = 0; k < kD; ++k) z += x.at(i, k) * pw.at(k, a);
      logit[i] += q[a] * std::tanh(z);
    }
  }
  double total = 0.0;
  for (double& l : logit) total += (l = std::exp(l));
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(weights[i] - logit[i] / total) < 1e-12);
  for (std::size_t j = 0; j < kD; ++j) {
    double e = 0.0;
    for (std::size_t i = 0; i < 4; ++i) e += logit[i] / total * x.at(i, j);
    CHECK(std::abs(u[j] - e) < 1e-12);
  }

  UserIndex index({"U1", "U2", "U3"});
  CHECK(index.lookup("U2") == 2);
  CHECK(index.lookup("nobody") == 0);
  CHECK(index.lookup("other") == 0);
  CHECK(index.table_size() == 4);
  // Unknown users all share row 0.
  CHECK(encode(b, x, {1, 1, 1, 1}, index.lookup("nobody")) == encode(b, x, {1, 1, 1, 1}, index.lookup("other")));
  CHECK(UserIndex::deserialize(index.serialize()).ids() == index.ids());
}

TEST_CASE("additive attention user encoder") {
  auto b = build(UserEncoderKind::kAdditiveAttention);
  Tensor same(Shape{3, kD});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < kD; ++k) same.at(i, k) = 0.5 * k;
  Tensor w;
  auto u = encode(b, same, {1, 1, 1}, 0, &w);
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(w[i] - 1.0 / 3.0) < 1e-15);
  for (std::size_t k = 0; k < kD; ++k) CHECK(std::abs(u[k] - 0.5 * k) < 1e-12);
  CHECK_THROWS_AS(encode(b, same, {0, 0, 0}), DimensionError);
}

TEST_CASE("attention encoders ignore click order, recurrent ones do not") {
  const Tensor x = random_rows(4, kD, 11);
  Tensor rev(Shape{4, kD});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t k = 0; k < kD; ++k) rev.at(i, k) = x.at(3 - i, k);
  for (auto kind : kAll) {
    auto b = build(kind);
    const double diff = max_abs_diff(encode(b, x, {1, 1, 1, 1}, 1), encode(b, rev, {1, 1, 1, 1}, 1));
    const bool recurrent = kind == UserEncoderKind::kGru || kind == UserEncoderKind::kLstur;
    if (recurrent) {
      CHECK(diff > 1e-6);
    } else {
      CHECK(diff < 1e-12);
    }
  }
}

TEST_CASE("NRMS output has the model width and attends over real clicks only") {
  auto b = build(UserEncoderKind::kNrms);
  Tensor x = random_rows(5, kD, 12);
  Tensor w;
  auto u = encode(b, x, {1, 1, 1, 0, 0}, 0, &w);
  CHECK(u.shape() == Shape{kD});
  CHECK(w.size() == 3);
  x.at(4, 2) = 100.0;
  CHECK(encode(b, x, {1, 1, 1, 0, 0}) == u);
  CHECK_THROWS_AS(encode(b, x, {0, 0, 0, 0, 0}), DimensionError);
}

TEST_CASE("history validation and truncation") {
  auto b = build(UserEncoderKind::kGru, 5, 1, 3);
  const Tensor x = random_rows(5, kD, 13);
  CHECK_THROWS_AS(encode(b, x, {1, 0, 1, 0, 0}), DataError);
  CHECK_THROWS_AS(encode(b, x, {1, 1}), DimensionError);
  // max_history 3 keeps the three most recent clicks.
  Tensor last(Shape{3, kD});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < kD; ++k) last.at(i, k) = x.at(i + 2, k);
  CHECK(encode(b, x, {1, 1, 1, 1, 1}) == encode(b, last, {1, 1, 1}));
  auto npa = build(UserEncoderKind::kNpa, 3);
  CHECK_THROWS_AS(encode(npa, x, {1, 1, 1, 1, 1}, 3), IndexError);
}

TEST_CASE("batch encoding matches single-user encoding") {
  const Tensor news = random_rows(6, kD, 14);
  for (auto kind : kAll) {
    auto b = build(kind);
    std::vector<UserInput> users{{1, {0, 2, 4}}, {3, {5, 1}}, {0, {3}}};
    Tape tape(&b.store);
    auto batch = b.enc.encode_batch(tape, tape.constant(news), users).value();
    REQUIRE(batch.shape() == Shape{3, kD});
    for (std::size_t i = 0; i < users.size(); ++i) {
      Tensor hist(Shape{users[i].rows.size(), kD});
      for (std::size_t t = 0; t < users[i].rows.size(); ++t)
        for (std::size_t k = 0; k < kD; ++k) hist.at(t, k) = news.at(users[i].rows[t], k);
      auto single = encode(b, hist, std::vector<int>(users[i].rows.size(), 1), users[i].user_index);
      for (std::size_t k = 0; k < kD; ++k) CHECK(std::abs(batch.at(i, k) - single[k]) < 1e-12);
    }
  }
}

TEST_CASE("user encoder param_count matches instantiation") {
  for (auto kind : kAll) {
    auto b = build(kind, 7);
    UserEncoderSpec spec = b.enc.spec();
    CHECK(param_count(spec) == b.store.element_count());
  }
}

TEST_CASE("user encoder gradients") {
  const Tensor news = random_rows(6, kD, 15);
  for (auto kind : kAll) {
    auto b = build(kind);
    std::vector<UserInput> users{{1, {0, 2, 4}}, {2, {5, 1, 3}}};
    const Tensor target = random_rows(2, kD, 16);
    auto loss = [&](Tape& t) {
      return ops::sum(ops::mul(b.enc.encode_batch(t, t.constant(news), users), t.constant(target)));
    };
    GradCheckOptions opt;
    opt.denominator_floor = 1e-4;  // attn.bk has an exactly zero gradient
    auto report = gradient_check(b.store, loss, 1e-6, opt);
    for (const auto& p : report.params) {
      if (p.flagged) MESSAGE(std::string(to_string(kind)), " ", p.name, " ", p.max_rel_error);
    }
    CHECK(report.passed());
  }
}

TEST_CASE("click score and candidate ranking") {
  Tensor u(Shape{3}, {1.0, 2.0, -1.0});
  Tensor a(Shape{3}, {1.0, 0.0, 0.0});   // 1
  Tensor c(Shape{3}, {0.0, 1.0, 0.0});   // 2
  Tensor e(Shape{3}, {0.0, 0.0, 1.0});   // -1
  Tensor f(Shape{3}, {0.0, 0.5, 0.0});   // 1, ties with a
  CHECK(click_score(u, a) == 1.0);
  CHECK(click_score(u, e) == -1.0);
  std::vector<Tensor> cands{a, c, e, f};
  CHECK(rank_candidates(u, cands) == std::vector<std::size_t>{1, 0, 3, 2});
  CHECK_THROWS_AS(click_score(u, Tensor(Shape{2})), DimensionError);
  CHECK_THROWS_AS(rank_by_score({}), DimensionError);
}

TEST_CASE("user encoder kinds parse") {
  for (auto kind : kAll) CHECK(parse_user_encoder_kind(to_string(kind)) == kind);
  CHECK_THROWS_AS(parse_user_encoder_kind("LSTM"), ConfigError);
}
