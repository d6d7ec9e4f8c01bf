// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "newsrec/error.hpp"

namespace newsrec {
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(s.substr(start));
      return out;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::vector<std::string> split_nonempty(const std::string& s, char sep) {
  std::vector<std::string> out;
  for (auto& p : split(s, sep))
    if (!p.empty()) out.push_back(std::move(p));
  return out;
}

std::vector<std::string> lines_of(const std::string& text) {
  auto lines = split(text, '\n');
  for (auto& l : lines)
    if (!l.empty() && l.back() == '\r') l.pop_back();
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

// Days since 1970-01-01 of a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const auto doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::string read_text_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path);
  os << text;
}

std::int64_t parse_mind_time(const std::string& s) {
  unsigned mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  int y = 0;
  char ampm[3] = {0};
  if (std::sscanf(s.c_str(), "%u/%u/%d %u:%u:%u %2s", &mo, &d, &y, &h, &mi, &sec, ampm) == 7) {
    const std::string ap(ampm);
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 1 || h > 12 || mi > 59 || sec > 59 ||
        (ap != "AM" && ap != "PM")) {
      throw DataError("bad timestamp '" + s + "'");
    }
    const unsigned hour24 = (h % 12) + (ap == "PM" ? 12 : 0);
    return days_from_civil(y, mo, d) * 86400 + hour24 * 3600 + mi * 60 + sec;
  }
  // Plain epoch seconds are accepted too.
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
    return std::stoll(s);
  }
  throw DataError("bad timestamp '" + s + "'");
}

std::string format_mind_time(std::int64_t t) {
  std::int64_t days = t >= 0 ? t / 86400 : -((-t + 86399) / 86400);
  std::int64_t rem = t - days * 86400;
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  const unsigned hour24 = static_cast<unsigned>(rem / 3600);
  const unsigned mi = static_cast<unsigned>((rem % 3600) / 60);
  const unsigned sec = static_cast<unsigned>(rem % 60);
  const unsigned h12 = hour24 % 12 == 0 ? 12 : hour24 % 12;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%u/%u/%lld %u:%02u:%02u %s", m, d, static_cast<long long>(y), h12,
                mi, sec, hour24 < 12 ? "AM" : "PM");
  return buf;
}

ParseResult<NewsArticle> parse_news_text(const std::string& text, const std::string& market) {
  ParseResult<NewsArticle> out;
  std::unordered_set<std::string> seen;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto cols = split(lines[ln], '\t');
    if (cols.size() < 4) {
      out.malformed.push_back({ln + 1, "expected at least 4 columns, got " + std::to_string(cols.size())});
      continue;
    }
    if (cols[0].empty()) {
      out.malformed.push_back({ln + 1, "empty news id"});
      continue;
    }
    if (!seen.insert(cols[0]).second) {
      out.malformed.push_back({ln + 1, "duplicate news id " + cols[0]});
      continue;
    }
    NewsArticle a;
    a.news_id = cols[0];
    a.market = market;
    a.category = cols[1];
    a.subcategory = cols[2];
    a.title = cols[3];
    out.items.push_back(std::move(a));
  }
  return out;
}

ParseResult<Impression> parse_behaviors_text(const std::string& text, const std::string& market) {
  ParseResult<Impression> out;
  std::unordered_set<std::string> seen;
  const auto lines = lines_of(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    auto cols = split(lines[ln], '\t');
    auto bad = [&](std::string reason) { out.malformed.push_back({ln + 1, std::move(reason)}); };
    if (cols.size() < 5) {
      bad("expected 5 columns, got " + std::to_string(cols.size()));
      continue;
    }
    Impression imp;
    imp.impression_id = cols[0];
    imp.user_id = cols[1];
    imp.market = market;
    if (imp.impression_id.empty() || imp.user_id.empty()) {
      bad("empty impression or user id");
      continue;
    }
    try {
      imp.timestamp = parse_mind_time(cols[2]);
    } catch (const DataError& e) {
      bad(e.what());
      continue;
    }
    imp.history = split_nonempty(cols[3], ' ');
    bool ok = true;
    for (auto& c : split_nonempty(cols[4], ' ')) {
      const auto dash = c.rfind('-');
      if (dash == std::string::npos || dash == 0 || dash + 2 != c.size() ||
          (c[dash + 1] != '0' && c[dash + 1] != '1')) {
        bad("candidate '" + c + "' lacks a -0/-1 click suffix");
        ok = false;
        break;
      }
      imp.candidates.emplace_back(c.substr(0, dash), c[dash + 1] - '0');
    }
    if (!ok) continue;
    if (imp.candidates.empty()) {
      bad("impression has no candidates");
      continue;
    }
    if (!seen.insert(imp.impression_id).second) {
      bad("duplicate impression id " + imp.impression_id);
      continue;
    }
    out.items.push_back(std::move(imp));
  }
  return out;
}

ParseResult<NewsArticle> parse_news_tsv(const std::string& path, const std::string& market) {
  return parse_news_text(read_text_file(path), market);
}

ParseResult<Impression> parse_behaviors_tsv(const std::string& path, const std::string& market) {
  return parse_behaviors_text(read_text_file(path), market);
}

std::string format_news_tsv(const std::vector<NewsArticle>& news) {
  std::string out;
  for (const auto& a : news) {
    // Abstract, URL and entity columns are left empty.
    out += a.news_id + '\t' + a.category + '\t' + a.subcategory + '\t' + a.title + "\t\t\t\t\n";
  }
  return out;
}

std::string format_behaviors_tsv(const std::vector<Impression>& impressions) {
  std::string out;
  for (const auto& imp : impressions) {
    out += imp.impression_id + '\t' + imp.user_id + '\t' + format_mind_time(imp.timestamp) + '\t';
    for (std::size_t i = 0; i < imp.history.size(); ++i) {
      if (i) out += ' ';
      out += imp.history[i];
    }
    out += '\t';
    for (std::size_t i = 0; i < imp.candidates.size(); ++i) {
      if (i) out += ' ';
      out += imp.candidates[i].first + '-' + std::to_string(imp.candidates[i].second);
    }
    out += '\n';
  }
  return out;
}

std::string format_topics_tsv(const std::vector<NewsArticle>& news) {
  std::string out;
  for (const auto& a : news)
    if (a.topic_id) out += a.news_id + '\t' + std::to_string(*a.topic_id) + '\n';
  return out;
}

void apply_topics_tsv(const std::string& text, std::vector<NewsArticle>& news) {
  std::unordered_map<std::string, int> topics;
  for (const auto& line : lines_of(text)) {
    auto cols = split(line, '\t');
    if (cols.size() != 2) throw DataError("malformed topics line '" + line + "'");
    topics[cols[0]] = std::stoi(cols[1]);
  }
  for (auto& a : news) {
    auto it = topics.find(a.news_id);
    if (it != topics.end()) a.topic_id = it->second;
  }
}

void Dataset::rebuild_index() {
  news_index.clear();
  for (std::size_t i = 0; i < news.size(); ++i) {
    if (!news_index.emplace(news[i].news_id, i).second) {
      throw DataError("duplicate news id " + news[i].news_id);
    }
  }
}

std::vector<std::string> Dataset::validate_references() {
  rebuild_index();
  std::vector<std::string> issues;
  std::vector<Impression> kept;
  for (auto& imp : impressions) {
    bool ok = true;
    for (const auto& [id, label] : imp.candidates) {
      if (!news_index.count(id)) {
        issues.push_back("impression " + imp.impression_id + ": unknown candidate " + id);
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    const std::size_t before = imp.history.size();
    std::erase_if(imp.history, [&](const std::string& id) { return !news_index.count(id); });
    if (imp.history.size() != before) {
      issues.push_back("impression " + imp.impression_id + ": dropped " +
                       std::to_string(before - imp.history.size()) + " unknown history ids");
    }
    kept.push_back(std::move(imp));
  }
  impressions = std::move(kept);
  return issues;
}

std::vector<std::string> Dataset::markets() const {
  std::vector<std::string> out;
  for (const auto& imp : impressions)
    if (std::find(out.begin(), out.end(), imp.market) == out.end()) out.push_back(imp.market);
  return out;
}

std::size_t Dataset::count_users() const {
  std::unordered_set<std::string> users;
  for (const auto& imp : impressions) users.insert(imp.user_id);
  return users.size();
}

std::size_t Dataset::count_clicks() const {
  std::size_t n = 0;
  for (const auto& imp : impressions)
    for (const auto& c : imp.candidates) n += c.second == 1;
  return n;
}

void SyntheticSpec::validate() const {
  if (!num_topics || !vocab_per_topic || !num_users || !num_news || !impressions_per_user ||
      !candidates_per_impression || !title_min_words) {
    throw ConfigError("synthetic spec counts must be positive");
  }
  if (title_max_words < title_min_words) throw ConfigError("title_max_words < title_min_words");
  if (candidates_per_impression > num_news) {
    throw ConfigError("candidates_per_impression exceeds num_news");
  }
  if (!(user_topic_concentration > 0.0) || !(click_temperature > 0.0)) {
    throw ConfigError("user_topic_concentration and click_temperature must be positive");
  }
  if (topic_word_prob < 0.0 || topic_word_prob > 1.0) throw ConfigError("topic_word_prob outside [0, 1]");
  if (topic_word_prob < 1.0 && shared_vocab == 0) {
    throw ConfigError("shared_vocab must be positive unless topic_word_prob is 1");
  }
  if (markets.empty()) throw ConfigError("at least one market is required");
  std::set<std::string> uniq(markets.begin(), markets.end());
  if (uniq.size() != markets.size()) throw ConfigError("duplicate market");
}

std::string synthetic_word(const std::string& market, std::size_t index) {
  std::string w;
  for (char c : market)
    if (std::isalnum(static_cast<unsigned char>(c))) w += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  // Fixed-width base-26 suffix keeps every market's lexicon prefix-closed.
  std::string suffix;
  std::size_t x = index;
  for (int i = 0; i < 4; ++i) {
    suffix += static_cast<char>('a' + x % 26);
    x /= 26;
  }
  return w + "x" + suffix;
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t topic_words = spec.num_topics * spec.vocab_per_topic;
  if (topic_words + spec.shared_vocab > 26 * 26 * 26 * 26) throw ConfigError("synthetic vocabulary too large");
  {
    std::set<std::string> prefixes;
    for (const auto& m : spec.markets) {
      if (!prefixes.insert(synthetic_word(m, 0)).second) {
        throw ConfigError("markets '" + m + "' share a lexicon prefix with another market");
      }
    }
  }
  const bool multi = spec.markets.size() > 1;
  const std::int64_t t0 = days_from_civil(2019, 11, 9) * 86400;
  const std::int64_t span = 42 * 86400;

  Dataset ds;
  for (std::size_t mi = 0; mi < spec.markets.size(); ++mi) {
    const std::string& market = spec.markets[mi];
    const std::string tag = multi ? market + "-" : "";
    std::mt19937_64 rng(splitmix64(spec.seed * 1000003ull + mi));
    std::uniform_int_distribution<std::size_t> pick_topic(0, spec.num_topics - 1);
    std::uniform_int_distribution<std::size_t> pick_len(spec.title_min_words, spec.title_max_words);
    std::uniform_int_distribution<std::size_t> pick_topic_word(0, spec.vocab_per_topic - 1);
    std::uniform_int_distribution<std::size_t> pick_shared(0, spec.shared_vocab ? spec.shared_vocab - 1 : 0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t news_base = ds.news.size();
    std::vector<std::size_t> topic_of(spec.num_news);
    for (std::size_t n = 0; n < spec.num_news; ++n) {
      const std::size_t topic = pick_topic(rng);
      topic_of[n] = topic;
      const std::size_t len = pick_len(rng);
      std::string title;
      for (std::size_t w = 0; w < len; ++w) {
        const std::size_t word = unit(rng) < spec.topic_word_prob
                                     ? topic * spec.vocab_per_topic + pick_topic_word(rng)
                                     : topic_words + pick_shared(rng);
        if (w) title += ' ';
        title += synthetic_word(market, word);
      }
      NewsArticle a;
      a.news_id = tag + "N" + std::to_string(n + 1);
      a.market = market;
      a.category = "news";
      a.subcategory = "synthetic";
      a.title = std::move(title);
      a.topic_id = static_cast<int>(topic);
      ds.news.push_back(std::move(a));
    }

    auto present = [&](std::vector<std::size_t>& cand) {
      // Distinct candidates by partial Fisher-Yates over the news pool.
      std::vector<std::size_t> pool(spec.num_news);
      std::iota(pool.begin(), pool.end(), 0);
      cand.clear();
      for (std::size_t k = 0; k < spec.candidates_per_impression; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, spec.num_news - 1);
        std::swap(pool[k], pool[pick(rng)]);
        cand.push_back(pool[k]);
      }
    };
    auto click = [&](const std::vector<double>& interest, const std::vector<std::size_t>& cand) {
      std::vector<double> logits;
      for (auto c : cand) logits.push_back(interest[topic_of[c]] / spec.click_temperature);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double total = 0.0;
      for (auto& l : logits) total += (l = std::exp(l - mx));
      double u = unit(rng) * total;
      for (std::size_t k = 0; k < cand.size(); ++k) {
        u -= logits[k];
        if (u < 0.0) return k;
      }
      return cand.size() - 1;
    };

    std::gamma_distribution<double> gamma(spec.user_topic_concentration, 1.0);
    std::vector<Impression> market_imps;
    std::vector<std::size_t> cand;
    for (std::size_t u = 0; u < spec.num_users; ++u) {
      std::vector<double> interest(spec.num_topics);
      double total = 0.0;
      for (auto& x : interest) total += (x = gamma(rng));
      if (total > 0.0) {
        for (auto& x : interest) x /= total;
      } else {
        interest[pick_topic(rng)] = 1.0;
      }
      const std::string user_id = tag + "U" + std::to_string(u + 1);
      std::vector<std::string> history;
      for (std::size_t h = 0; h < spec.history_length; ++h) {
        present(cand);
        history.push_back(ds.news[news_base + cand[click(interest, cand)]].news_id);
      }
      std::uniform_int_distribution<std::int64_t> when(0, span - 1);
      for (std::size_t k = 0; k < spec.impressions_per_user; ++k) {
        Impression imp;
        imp.user_id = user_id;
        imp.market = market;
        imp.timestamp = t0 + when(rng);
        imp.history = history;
        present(cand);
        const std::size_t clicked = click(interest, cand);
        for (std::size_t c = 0; c < cand.size(); ++c) {
          imp.candidates.emplace_back(ds.news[news_base + cand[c]].news_id, c == clicked ? 1 : 0);
        }
        market_imps.push_back(std::move(imp));
      }
    }
    for (auto& imp : market_imps) ds.impressions.push_back(std::move(imp));
  }
  std::stable_sort(ds.impressions.begin(), ds.impressions.end(),
                   [](const Impression& a, const Impression& b) { return a.timestamp < b.timestamp; });
  for (std::size_t i = 0; i < ds.impressions.size(); ++i) {
    ds.impressions[i].impression_id = std::to_string(i + 1);
  }
  ds.rebuild_index();
  return ds;
}

DatasetSplit split_dataset(const std::vector<Impression>& impressions, const SplitPolicy& policy) {
  if (impressions.empty()) throw DataError("cannot split an empty impression log");
  if (!(policy.test_fraction > 0.0 && policy.test_fraction < 1.0) ||
      !(policy.valid_fraction > 0.0 && policy.valid_fraction < 1.0)) {
    throw ConfigError("split fractions must be in (0, 1)");
  }
  std::mt19937_64 rng(policy.seed);
  DatasetSplit split;
  std::vector<std::size_t> rest;
  auto [lo, hi] = std::minmax_element(impressions.begin(), impressions.end(),
                                      [](const Impression& a, const Impression& b) {
                                        return a.timestamp < b.timestamp;
                                      });
  const bool degenerate = lo->timestamp == hi->timestamp;
  if (policy.time_based && !degenerate) {
    const double threshold = static_cast<double>(lo->timestamp) +
                             (1.0 - policy.test_fraction) *
                                 static_cast<double>(hi->timestamp - lo->timestamp);
    for (std::size_t i = 0; i < impressions.size(); ++i) {
      if (static_cast<double>(impressions[i].timestamp) >= threshold) {
        split.test.push_back(i);
      } else {
        rest.push_back(i);
      }
    }
  } else {
    if (policy.time_based && !policy.allow_random_fallback) {
      throw DataError("time-based split needs more than one distinct timestamp");
    }
    std::vector<std::size_t> all(impressions.size());
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(policy.test_fraction * all.size()));
    split.test.assign(all.begin(), all.begin() + static_cast<long>(n_test));
    rest.assign(all.begin() + static_cast<long>(n_test), all.end());
    std::sort(split.test.begin(), split.test.end());
    std::sort(rest.begin(), rest.end());
  }
  std::shuffle(rest.begin(), rest.end(), rng);
  const auto n_valid = static_cast<std::size_t>(std::llround(policy.valid_fraction * rest.size()));
  split.valid.assign(rest.begin(), rest.begin() + static_cast<long>(n_valid));
  split.train.assign(rest.begin() + static_cast<long>(n_valid), rest.end());
  std::sort(split.valid.begin(), split.valid.end());
  std::sort(split.train.begin(), split.train.end());
  if (split.train.empty() || split.valid.empty() || split.test.empty()) {
    throw DataError("empty partition: train=" + std::to_string(split.train.size()) +
                    " valid=" + std::to_string(split.valid.size()) +
                    " test=" + std::to_string(split.test.size()));
  }
  return split;
}

}  // namespace newsrec
