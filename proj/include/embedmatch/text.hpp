/*
 * Copyright 2026 The embedmatch Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "embedmatch/numerics.hpp"

namespace embedmatch {

using TokenId = std::int32_t;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kCls = 1;
inline constexpr TokenId kSep = 2;
inline constexpr TokenId kMask = 3;
inline constexpr TokenId kUnk = 4;
inline constexpr TokenId kNumReserved = 5;
}  // namespace special

inline bool is_special(TokenId id) { return id >= 0 && id < special::kNumReserved; }

/// Ordered token ids. Padding, when present, only occupies a tail.
struct TokenSequence {
  std::vector<TokenId> ids;

  std::size_t size() const { return ids.size(); }
  bool empty() const { return ids.empty(); }

  /// Length up to (excluding) the first [PAD].
  std::size_t unpadded_length() const {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == special::kPad) return i;
    }
    return ids.size();
  }

  bool padding_is_tail() const {
    const std::size_t n = unpadded_length();
    for (std::size_t i = n; i < ids.size(); ++i) {
      if (ids[i] != special::kPad) return false;
    }
    return true;
  }

  bool operator==(const TokenSequence&) const = default;
};

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

/// Token <-> id map with the reserved ids [PAD]=0 [CLS]=1 [SEP]=2 [MASK]=3 [UNK]=4.
class Vocab {
 public:
  Vocab() {
    for (const char* s : {"[PAD]", "[CLS]", "[SEP]", "[MASK]", "[UNK]"}) add(s);
  }

  /// Builds a vocabulary from a corpus, min frequency 1, ids assigned in
  /// first-occurrence order.
  static Vocab from_texts(const std::vector<std::string>& texts) {
    Vocab v;
    for (const auto& t : texts) {
      for (const auto& w : split_whitespace(t)) v.add(w);
    }
    return v;
  }

  TokenId add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const auto id = static_cast<TokenId>(tokens_.size());
    tokens_.push_back(token);
    index_.emplace(token, id);
    return id;
  }

  TokenId id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? special::kUnk : it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw Error("out-of-vocabulary id " + std::to_string(id));
    }
    return tokens_[static_cast<std::size_t>(id)];
  }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Whitespace tokenization. With `add_specials`, [CLS] is prepended.
/// `max_len` of 0 means unbounded; otherwise the sequence is cut to max_len.
inline TokenSequence tokenize(std::string_view text, const Vocab& vocab, bool add_specials,
                              std::size_t max_len = 0) {
  TokenSequence seq;
  if (add_specials) seq.ids.push_back(special::kCls);
  for (const auto& w : split_whitespace(text)) seq.ids.push_back(vocab.id(w));
  if (max_len != 0 && seq.ids.size() > max_len) seq.ids.resize(max_len);
  return seq;
}

/// Inverse of tokenize for in-vocabulary text: specials are dropped and
/// tokens joined with single spaces.
inline std::string detokenize(const TokenSequence& seq, const Vocab& vocab) {
  std::string out;
  for (TokenId id : seq.ids) {
    if (is_special(id)) continue;
    if (!out.empty()) out.push_back(' ');
    out += vocab.token(id);
  }
  return out;
}

/// Token ids of a text without specials.
inline std::vector<TokenId> content_ids(std::string_view text, const Vocab& vocab) {
  std::vector<TokenId> out;
  for (const auto& w : split_whitespace(text)) out.push_back(vocab.id(w));
  return out;
}

}  // namespace embedmatch
