// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include <algorithm>
#include <filesystem>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <doctest.h>

#include "newsrec/corpus.hpp"
#include "newsrec/error.hpp"
#include "newsrec/eval.hpp"

using namespace newsrec;

namespace {

std::set<std::string> words_of(const Dataset& ds, const std::string& market) {
  std::set<std::string> out;
  for (const auto& a : ds.news) {
    if (a.market != market) continue;
    std::istringstream is(a.title);
    std::string w;
    while (is >> w) out.insert(w);
  }
  return out;
}

std::vector<Impression> uniform_times(std::size_t n) {
  std::vector<Impression> imps(n);
  for (std::size_t i = 0; i < n; ++i) {
    imps[i].impression_id = std::to_string(i + 1);
    imps[i].timestamp = static_cast<std::int64_t>(i) * 60;
    imps[i].candidates = {{"N1", 1}};
  }
  return imps;
}

}  // namespace

TEST_CASE("news.tsv parsing") {
  auto r = parse_news_text(
      "N1\tsports\tsoccer\tTeam wins final\n"
      "N2\tnews\tworld\n"
      "N3\tnews\tworld\tMarkets rally\thttp://x\t[]\t[]\n"
      "N1\tsports\tsoccer\tDuplicate\n");
  REQUIRE(r.items.size() == 2);
  CHECK(r.items[0].news_id == "N1");
  CHECK(r.items[0].category == "sports");
  CHECK(r.items[0].subcategory == "soccer");
  CHECK(r.items[0].title == "Team wins final");
  CHECK_FALSE(r.items[0].topic_id.has_value());
  CHECK(r.items[1].title == "Markets rally");
  REQUIRE(r.malformed.size() == 2);
  CHECK(r.malformed[0].line == 2);
  CHECK(r.malformed[1].line == 4);
}

TEST_CASE("behaviors.tsv parsing") {
  auto r = parse_behaviors_text(
      "1\tU1\t11/15/2019 8:55:22 AM\tN1 N2\tN3-1 N4-0\n"
      "2\tU2\t11/15/2019 1:05:00 PM\t\tN5-0 N6-1\n"
      "3\tU3\t11/15/2019 1:05:00 PM\tN1\tN5\n");
  REQUIRE(r.items.size() == 2);
  const auto& a = r.items[0];
  CHECK(a.user_id == "U1");
  CHECK(a.history == std::vector<std::string>{"N1", "N2"});
  CHECK(a.candidates == std::vector<std::pair<std::string, int>>{{"N3", 1}, {"N4", 0}});
  CHECK(r.items[1].history.empty());
  CHECK(r.items[1].timestamp - a.timestamp == 4 * 3600 + 9 * 60 + 38);
  REQUIRE(r.malformed.size() == 1);
  CHECK(r.malformed[0].line == 3);
}

TEST_CASE("MIND timestamps") {
  CHECK(parse_mind_time("1/1/1970 12:00:00 AM") == 0);
  CHECK(parse_mind_time("1/1/1970 12:00:01 PM") == 12 * 3600 + 1);
  CHECK(parse_mind_time("11/15/2019 8:55:22 AM") == 1573808122);
  CHECK(format_mind_time(1573808122) == "11/15/2019 8:55:22 AM");
  CHECK_THROWS_AS(parse_mind_time("2019-11-15 08:55"), DataError);
}

TEST_CASE("TSV round trip of generated data") {
  SyntheticSpec spec;
  spec.num_users = 20;
  spec.num_news = 60;
  spec.impressions_per_user = 3;
  spec.markets = {"EN-US", "DE-DE"};
  auto ds = generate_synthetic(spec);
  auto news = parse_news_text(format_news_tsv(ds.news));
  auto imps = parse_behaviors_text(format_behaviors_tsv(ds.impressions));
  CHECK(news.malformed.empty());
  CHECK(imps.malformed.empty());
  apply_topics_tsv(format_topics_tsv(ds.news), news.items);
  REQUIRE(news.items.size() == ds.news.size());
  for (std::size_t i = 0; i < ds.news.size(); ++i) {
    auto expect = ds.news[i];
    expect.market = "";  // the market comes from the file location, not a column
    CHECK(news.items[i] == expect);
  }
  REQUIRE(imps.items.size() == ds.impressions.size());
  for (std::size_t i = 0; i < ds.impressions.size(); ++i) {
    auto expect = ds.impressions[i];
    expect.market = "";
    CHECK(imps.items[i] == expect);
  }
}

TEST_CASE("synthetic generation is a pure function of the spec") {
  SyntheticSpec spec;
  spec.num_users = 30;
  spec.num_news = 80;
  auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  CHECK(format_news_tsv(a.news) == format_news_tsv(b.news));
  CHECK(format_behaviors_tsv(a.impressions) == format_behaviors_tsv(b.impressions));
  spec.seed = 18;
  CHECK(format_behaviors_tsv(generate_synthetic(spec).impressions) != format_behaviors_tsv(a.impressions));
  // Every candidate and history id resolves.
  for (const auto& imp : a.impressions) {
    CHECK(imp.candidates.size() == spec.candidates_per_impression);
    int clicks = 0;
    for (const auto& [id, l] : imp.candidates) {
      CHECK(a.news_index.count(id) == 1);
      clicks += l;
    }
    CHECK(clicks == 1);
    for (const auto& h : imp.history) CHECK(a.news_index.count(h) == 1);
  }
}

TEST_CASE("near one-hot users click their topic whenever it is shown") {
  SyntheticSpec spec;
  spec.user_topic_concentration = 0.01;
  spec.click_temperature = 1e-4;
  spec.num_users = 300;
  spec.impressions_per_user = 20;
  auto ds = generate_synthetic(spec);
  std::map<std::string, std::map<int, int>> clicks_by_user;
  for (const auto& imp : ds.impressions)
    for (const auto& h : imp.history) ++clicks_by_user[imp.user_id][*ds.news[ds.news_index.at(h)].topic_id];
  // The user's topic is the one they clicked most in their history.
  std::map<std::string, int> topic_of;
  for (const auto& [u, counts] : clicks_by_user) {
    topic_of[u] = std::max_element(counts.begin(), counts.end(),
                                   [](auto& x, auto& y) { return x.second < y.second; })->first;
  }
  std::size_t shown = 0, hit = 0;
  for (const auto& imp : ds.impressions) {
    const int t = topic_of[imp.user_id];
    bool present = false;
    int clicked_topic = -1;
    for (const auto& [id, l] : imp.candidates) {
      const int ct = *ds.news[ds.news_index.at(id)].topic_id;
      present |= ct == t;
      if (l) clicked_topic = ct;
    }
    if (!present) continue;
    ++shown;
    hit += clicked_topic == t;
  }
  REQUIRE(shown > 1000);
  CHECK(static_cast<double>(hit) / static_cast<double>(shown) > 0.95);
}

TEST_CASE("a single topic carries no click signal") {
  SyntheticSpec spec;
  spec.num_topics = 1;
  spec.num_users = 200;
  auto ds = generate_synthetic(spec);
  std::vector<double> position(spec.candidates_per_impression, 0.0);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double auc = 0.0;
  for (const auto& imp : ds.impressions) {
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t k = 0; k < imp.candidates.size(); ++k) {
      // Any content-based score: here the title length plus noise.
      const auto& a = ds.news[ds.news_index.at(imp.candidates[k].first)];
      scores.push_back(static_cast<double>(a.title.size()) + unit(rng));
      labels.push_back(imp.candidates[k].second);
      if (imp.candidates[k].second) position[k] += 1.0 / ds.impressions.size();
    }
    auc += auc_impression(scores, labels) / ds.impressions.size();
  }
  CHECK(std::abs(auc - 0.5) < 0.03);
  for (double p : position) CHECK(std::abs(p - 0.2) < 0.03);
}

TEST_CASE("two markets share topics but no tokens") {
  SyntheticSpec spec;
  spec.markets = {"EN-US", "DE-DE"};
  spec.num_news = 400;
  auto ds = generate_synthetic(spec);
  auto en = words_of(ds, "EN-US"), de = words_of(ds, "DE-DE");
  std::vector<std::string> common;
  std::set_intersection(en.begin(), en.end(), de.begin(), de.end(), std::back_inserter(common));
  CHECK(common.empty());
  CHECK(en.size() > 100);
  // Word index w belongs to the same topic in both lexicons.
  const std::size_t topic_words = spec.num_topics * spec.vocab_per_topic;
  for (const auto& a : ds.news) {
    std::set<std::size_t> own;
    for (std::size_t w = 0; w < topic_words; ++w) {
      if (a.title.find(synthetic_word(a.market, w)) != std::string::npos) own.insert(w / spec.vocab_per_topic);
    }
    CHECK(own.size() <= 1);
    if (own.size() == 1) CHECK(static_cast<int>(*own.begin()) == *a.topic_id);
  }
  std::map<std::string, std::vector<double>> share;
  for (const auto& a : ds.news) {
    auto& s = share[a.market];
    s.resize(spec.num_topics);
    s[*a.topic_id] += 1.0 / spec.num_news;
  }
  for (std::size_t t = 0; t < spec.num_topics; ++t) {
    CHECK(std::abs(share["EN-US"][t] - 0.2) < 0.07);
    CHECK(std::abs(share["DE-DE"][t] - 0.2) < 0.07);
  }
  CHECK(ds.markets() == std::vector<std::string>{"DE-DE", "EN-US"});
  spec.markets = {"EN-US", "en_us"};
  CHECK_THROWS_AS(generate_synthetic(spec), ConfigError);
}

TEST_CASE("synthetic spec validation") {
  SyntheticSpec spec;
  spec.num_topics = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.markets.clear();
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = {};
  spec.click_temperature = 0.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("time-based split of 100 uniform impressions") {
  auto imps = uniform_times(100);
  SplitPolicy p;
  auto s = split_dataset(imps, p);
  // Threshold at 5/6 of the range [0, 99 min]: indices >= 82.5 go to test.
  CHECK((s.test.size() == 16 || s.test.size() == 17));
  CHECK(*std::min_element(s.test.begin(), s.test.end()) == 83);
  const std::size_t rest = 100 - s.test.size();
  CHECK(s.valid.size() == static_cast<std::size_t>(std::llround(rest * 0.1)));
  CHECK(s.train.size() + s.valid.size() == rest);
  auto again = split_dataset(imps, p);
  CHECK(again.train == s.train);
  CHECK(again.valid == s.valid);
  std::set<std::size_t> all(s.train.begin(), s.train.end());
  all.insert(s.valid.begin(), s.valid.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == 100);
}

TEST_CASE("degenerate time axis") {
  auto imps = uniform_times(50);
  for (auto& i : imps) i.timestamp = 7;
  SplitPolicy p;
  CHECK_THROWS_AS(split_dataset(imps, p), DataError);
  p.allow_random_fallback = true;
  auto s = split_dataset(imps, p);
  CHECK(s.test.size() == 8);
  CHECK(s.train.size() + s.valid.size() == 42);
  CHECK_THROWS_AS(split_dataset(uniform_times(3), SplitPolicy{}), DataError);
}

TEST_CASE("reference validation drops broken impressions") {
  Dataset ds;
  ds.news = parse_news_text("N1\ta\tb\tone two\nN2\ta\tb\tthree four\n").items;
  ds.impressions = parse_behaviors_text(
                       "1\tU1\t1/1/2020 1:00:00 AM\tN1 N9\tN1-1 N2-0\n"
                       "2\tU2\t1/1/2020 2:00:00 AM\tN2\tN7-1 N2-0\n")
                       .items;
  ds.rebuild_index();
  auto issues = ds.validate_references();
  CHECK(issues.size() == 2);
  REQUIRE(ds.impressions.size() == 1);
  CHECK(ds.impressions[0].history == std::vector<std::string>{"N1"});
  CHECK(ds.count_users() == 1);
  CHECK(ds.count_clicks() == 1);
}

TEST_CASE("prepared data indexes titles, users and candidates") {
  SyntheticSpec spec;
  spec.num_users = 10;
  spec.num_news = 40;
  spec.impressions_per_user = 2;
  auto ds = generate_synthetic(spec);
  auto vocab = build_title_vocabulary(ds, 1, 1000);
  std::vector<std::size_t> first{0, 1, 2};
  auto users = build_user_index(ds, first);
  auto data = prepare_data(ds, vocab, users, 16);
  CHECK(data.titles.size() == 40);
  CHECK(data.titles[0].ids[0] == kClsId);
  CHECK(data.candidates.size() == ds.impressions.size());
  for (std::size_t i = 0; i < ds.impressions.size(); ++i) {
    const auto& imp = ds.impressions[i];
    CHECK(data.user_rows[i] == users.lookup(imp.user_id));
    for (std::size_t k = 0; k < imp.candidates.size(); ++k) {
      CHECK(ds.news[data.candidates[i][k].first].news_id == imp.candidates[k].first);
    }
  }
  auto topics = topic_labels(ds);
  CHECK(topics.size() == 40);
  ds.news[3].topic_id.reset();
  CHECK_THROWS_AS(topic_labels(ds), DataError);
}

TEST_CASE("file reading errors") {
  CHECK_THROWS_AS(read_text_file("/nonexistent/news.tsv"), IoError);
  const auto dir = std::filesystem::temp_directory_path() / "newsrec_test_data";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "news.tsv").string();
  write_text_file(path, "N1\ta\tb\tHello world\n");
  CHECK(parse_news_tsv(path, "EN-US").items.at(0).market == "EN-US");
  std::filesystem::remove_all(dir);
}
