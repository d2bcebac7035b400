// Copyright (c) 2026 the relab authors
// SPDX-License-Identifier: Apache-2.0
#include "relab/tokenizer.hpp"

#include "relab/common.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace relab {

namespace {

bool is_symbol(char c) {
  static const std::string symbols = "()+*-/=,:;?!";
  return symbols.find(c) != std::string::npos;
}

}  // namespace

std::vector<std::string> Tokenizer::split(const std::string& text) {
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) {
      out.push_back(word);
      word.clear();
    }
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else if (is_symbol(c)) {
      flush();
      out.emplace_back(1, c);
    } else {
      word.push_back(c);
    }
  }
  flush();
  return out;
}

Tokenizer Tokenizer::build(const std::vector<std::string>& lines) {
  std::set<std::string> vocab;
  for (const auto& line : lines) {
    for (auto& tok : split(line)) vocab.insert(std::move(tok));
  }
  Tokenizer t;
  t.id_to_word_.assign(vocab.begin(), vocab.end());
  for (int i = 0; i < static_cast<int>(t.id_to_word_.size()); ++i) {
    t.word_to_id_[t.id_to_word_[static_cast<size_t>(i)]] = i;
  }
  return t;
}

std::vector<int> Tokenizer::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& tok : split(text)) {
    auto it = word_to_id_.find(tok);
    if (it == word_to_id_.end()) {
      throw ValidationError("out-of-vocabulary word: \"" + tok + "\"");
    }
    ids.push_back(it->second);
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const int> tokens) const {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    int id = tokens[i];
    if (id < 0 || id >= vocab_size()) {
      throw ValidationError("token id out of range: " + std::to_string(id));
    }
    out += id_to_word_[static_cast<size_t>(id)];
  }
  return out;
}

std::optional<std::pair<int, int>> Tokenizer::find_span(std::span<const int> tokens,
                                                        const std::string& phrase,
                                                        int from) const {
  std::vector<int> needle = encode(phrase);
  if (needle.empty() || needle.size() > tokens.size()) return std::nullopt;
  for (size_t i = static_cast<size_t>(std::max(from, 0));
       i + needle.size() <= tokens.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), tokens.begin() + static_cast<long>(i))) {
      return std::make_pair(static_cast<int>(i), static_cast<int>(i + needle.size()));
    }
  }
  return std::nullopt;
}

int Tokenizer::count_occurrences(std::span<const int> tokens, const std::string& phrase) const {
  int count = 0;
  int from = 0;
  while (auto span = find_span(tokens, phrase, from)) {
    ++count;
    from = span->first + 1;
  }
  return count;
}

}  // namespace relab
