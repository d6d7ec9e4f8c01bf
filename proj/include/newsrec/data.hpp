// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "newsrec/text.hpp"

namespace newsrec {

struct NewsArticle {
  std::string news_id;
  std::string market;
  std::string category;
  std::string subcategory;
  std::string title;
  TokenSequence tokens;
  std::optional<int> topic_id;  // planted topic, synthetic data only

  friend bool operator==(const NewsArticle& a, const NewsArticle& b) {
    return a.news_id == b.news_id && a.market == b.market && a.category == b.category &&
           a.subcategory == b.subcategory && a.title == b.title && a.topic_id == b.topic_id;
  }
};

struct Impression {
  std::string impression_id;
  std::string user_id;
  std::int64_t timestamp = 0;  // seconds since the Unix epoch
  std::vector<std::string> history;
  std::vector<std::pair<std::string, int>> candidates;
  std::string market;

  friend bool operator==(const Impression&, const Impression&) = default;
};

struct MalformedLine {
  std::size_t line = 0;
  std::string reason;
};

template <class T>
struct ParseResult {
  std::vector<T> items;
  std::vector<MalformedLine> malformed;
};

// MIND-style TSV. news.tsv: id, category, subcategory, title, then optional
// columns that are ignored. behaviors.tsv: impression id, user id, time
// ("M/D/YYYY h:mm:ss AM"), space-separated history, space-separated
// candidates suffixed -1 (clicked) or -0.
ParseResult<NewsArticle> parse_news_text(const std::string& text, const std::string& market = "");
ParseResult<Impression> parse_behaviors_text(const std::string& text, const std::string& market = "");
ParseResult<NewsArticle> parse_news_tsv(const std::string& path, const std::string& market = "");
ParseResult<Impression> parse_behaviors_tsv(const std::string& path, const std::string& market = "");

std::string format_news_tsv(const std::vector<NewsArticle>& news);
std::string format_behaviors_tsv(const std::vector<Impression>& impressions);
/// news_id <TAB> topic_id, for articles that carry a planted topic.
std::string format_topics_tsv(const std::vector<NewsArticle>& news);
void apply_topics_tsv(const std::string& text, std::vector<NewsArticle>& news);

std::int64_t parse_mind_time(const std::string& s);
std::string format_mind_time(std::int64_t epoch_seconds);

/// News table plus impression log with id lookup.
struct Dataset {
  std::vector<NewsArticle> news;
  std::vector<Impression> impressions;
  std::unordered_map<std::string, std::size_t> news_index;

  void rebuild_index();
  /// Drops impressions whose candidates reference unknown news and strips
  /// unknown history ids. Returns a description per dropped/changed record.
  std::vector<std::string> validate_references();
  std::vector<std::string> markets() const;
  std::size_t count_users() const;
  std::size_t count_clicks() const;
};

struct SyntheticSpec {
  std::size_t num_topics = 5;
  std::size_t vocab_per_topic = 40;
  std::size_t shared_vocab = 30;
  std::size_t num_users = 200;
  std::size_t num_news = 500;
  std::size_t impressions_per_user = 20;
  std::size_t candidates_per_impression = 5;
  double user_topic_concentration = 1.0;  // Dirichlet alpha
  double click_temperature = 0.005;
  std::vector<std::string> markets{"EN-US"};
  std::uint64_t seed = 17;
  // Shape of titles and histories.
  std::size_t history_length = 30;
  std::size_t title_min_words = 6;
  std::size_t title_max_words = 12;
  double topic_word_prob = 0.5;

  void validate() const;
};

/// Deterministic topic-structured corpus. Topics own disjoint word sets
/// shared across markets; every market renders words in its own lexicon.
Dataset generate_synthetic(const SyntheticSpec& spec);
/// Surface form of word `index` in `market`'s lexicon.
std::string synthetic_word(const std::string& market, std::size_t index);

struct SplitPolicy {
  bool time_based = true;
  double test_fraction = 1.0 / 6.0;
  double valid_fraction = 0.1;
  bool allow_random_fallback = false;
  std::uint64_t seed = 17;
};

struct DatasetSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> valid;
  std::vector<std::size_t> test;
};

/// Latest test_fraction of the observed time range goes to test; the rest
/// is shuffled (seeded) and split into train/valid.
DatasetSplit split_dataset(const std::vector<Impression>& impressions, const SplitPolicy& policy);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace newsrec
