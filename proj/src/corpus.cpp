// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#include "newsrec/corpus.hpp"

#include "newsrec/error.hpp"

namespace newsrec {

Vocabulary build_title_vocabulary(const Dataset& ds, std::size_t min_count, std::size_t max_size) {
  std::vector<std::string> words;
  for (const auto& a : ds.news)
    for (auto& w : split_words(a.title)) words.push_back(std::move(w));
  return Vocabulary::build(words, min_count, max_size);
}

UserIndex build_user_index(const Dataset& ds, std::span<const std::size_t> impressions) {
  std::vector<std::string> ids;
  for (auto i : impressions) ids.push_back(ds.impressions.at(i).user_id);
  return UserIndex(std::move(ids));
}

RecData prepare_data(Dataset ds, Vocabulary vocab, UserIndex users, std::size_t max_title_len) {
  RecData r;
  r.issues = ds.validate_references();
  r.dataset = std::move(ds);
  r.vocab = std::move(vocab);
  r.users = std::move(users);
  r.max_title_len = max_title_len;
  const auto& d = r.dataset;
  r.titles.reserve(d.news.size());
  for (const auto& a : d.news) r.titles.push_back(tokenize(a.title, r.vocab, max_title_len));
  for (const auto& imp : d.impressions) {
    std::vector<int> hist;
    for (const auto& id : imp.history) hist.push_back(static_cast<int>(d.news_index.at(id)));
    r.histories.push_back(std::move(hist));
    r.user_rows.push_back(r.users.lookup(imp.user_id));
    std::vector<std::pair<int, int>> cands;
    for (const auto& [id, label] : imp.candidates) {
      cands.emplace_back(static_cast<int>(d.news_index.at(id)), label);
    }
    r.candidates.push_back(std::move(cands));
  }
  return r;
}

std::vector<int> topic_labels(const Dataset& ds) {
  std::vector<int> out;
  out.reserve(ds.news.size());
  for (const auto& a : ds.news) {
    if (!a.topic_id) throw DataError("news " + a.news_id + " has no topic label");
    out.push_back(*a.topic_id);
  }
  return out;
}

}  // namespace newsrec
