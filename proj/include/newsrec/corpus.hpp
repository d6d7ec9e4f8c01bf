// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The newsrec Authors

#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "newsrec/data.hpp"
#include "newsrec/text.hpp"
#include "newsrec/user_encoder.hpp"

namespace newsrec {

/// A dataset resolved to model inputs: tokenized titles and impressions
/// expressed as news-table indices.
struct RecData {
  Dataset dataset;
  Vocabulary vocab;
  UserIndex users;
  std::size_t max_title_len = 30;
  std::vector<TokenSequence> titles;                         // by news index
  std::vector<std::vector<int>> histories;                   // by impression
  std::vector<std::size_t> user_rows;                        // by impression
  std::vector<std::vector<std::pair<int, int>>> candidates;  // (news index, label)
  std::vector<std::string> issues;  // reference problems fixed while loading
};

/// Title vocabulary over the whole news table.
Vocabulary build_title_vocabulary(const Dataset& ds, std::size_t min_count, std::size_t max_size);
/// Users seen in the given impressions, in first-seen order.
UserIndex build_user_index(const Dataset& ds, std::span<const std::size_t> impressions);

RecData prepare_data(Dataset ds, Vocabulary vocab, UserIndex users, std::size_t max_title_len);

/// Topic of every news item; throws DataError if any is missing.
std::vector<int> topic_labels(const Dataset& ds);

}  // namespace newsrec
