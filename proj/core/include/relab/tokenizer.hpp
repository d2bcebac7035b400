// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace relab {

/// Word/symbol-level tokenizer over a closed vocabulary.
///
/// Text is split on whitespace, then single-character symbols are split off
/// as their own tokens. decode() joins with single spaces, so encode/decode
/// round-trips exactly for text in canonical spacing (symbols surrounded by
/// spaces), which is how the synthetic corpus is generated.
class Tokenizer {
 public:
  Tokenizer() = default;

  /// Builds the vocabulary from every token occurring in `lines`, sorted
  /// lexicographically so ids are independent of corpus order.
  static Tokenizer build(const std::vector<std::string>& lines);

  static std::vector<std::string> split(const std::string& text);

  /// Throws ValidationError naming the first out-of-vocabulary word.
  std::vector<int> encode(const std::string& text) const;
  std::string decode(std::span<const int> tokens) const;

  /// Token span [begin, end) of `phrase` inside `tokens`, searching from
  /// `from`; nullopt if absent. Phrase must be in-vocabulary.
  std::optional<std::pair<int, int>> find_span(std::span<const int> tokens,
                                               const std::string& phrase,
                                               int from = 0) const;

  /// Number of times `phrase` occurs as a token subsequence of `tokens`.
  int count_occurrences(std::span<const int> tokens, const std::string& phrase) const;

  int vocab_size() const { return static_cast<int>(id_to_word_.size()); }
  const std::string& word(int id) const { return id_to_word_.at(static_cast<size_t>(id)); }
  bool contains(const std::string& word) const { return word_to_id_.count(word) > 0; }

  const std::vector<std::string>& words() const { return id_to_word_; }

 private:
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, int> word_to_id_;
};

}  // namespace relab
