/*
 * Copyright 2026 The svcrec Authors.
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

// Service-name tokenizer and the token trie that drives constrained decoding.

#ifndef SVCREC_LEXICON_H_
#define SVCREC_LEXICON_H_

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "svcrec/error.h"

namespace svcrec {

enum class Casing { kPreserve, kFold };

// Splits a service name into whole fragments. A fragment is a run of
// non-delimiter characters followed by the delimiter run after it, so the
// fragments concatenate back to the input. Delimiters are '-', '_' and
// whitespace.
std::vector<std::string> SplitNameFragments(std::string_view name);

// Lower-cased alphanumeric words of free text (descriptions, queries).
std::vector<std::string> SplitTextWords(std::string_view text);

// Throws unless every character of `name` is printable ASCII outside the
// reserved set "<>|,".
void ValidateServiceName(std::string_view name);

class Tokenizer {
 public:
  static constexpr std::string_view kSepToken = "<|SEP|>";
  static constexpr std::string_view kEosToken = "<eos>";
  static constexpr std::string_view kBosToken = "<bos>";
  static constexpr std::string_view kUnkToken = "<unk>";

  // `vocab` must hold dense ids 0..n-1 and contain the four reserved tokens.
  Tokenizer(std::map<std::string, TokenId> vocab, Casing casing);

  TokenId sep_id() const { return sep_id_; }
  TokenId eos_id() const { return eos_id_; }
  TokenId bos_id() const { return bos_id_; }
  TokenId unk_id() const { return unk_id_; }
  Casing casing() const { return casing_; }
  std::size_t size() const { return id_to_token_.size(); }
  const std::map<std::string, TokenId>& vocab() const { return vocab_; }

  bool is_reserved(TokenId id) const {
    return id == sep_id_ || id == eos_id_ || id == bos_id_ || id == unk_id_;
  }

  // Longest-match segmentation of a service name. Throws if some position
  // has no matching token. Never yields a reserved id.
  std::vector<TokenId> Encode(std::string_view name) const;

  // Word-level encoding of free text; out-of-vocabulary words map to unk.
  std::vector<TokenId> EncodeText(std::string_view text) const;

  // Concatenation of token strings.
  std::string Decode(std::span<const TokenId> ids) const;

  const std::string& token(TokenId id) const;
  std::optional<TokenId> Find(std::string_view token) const;

  bool operator==(const Tokenizer& other) const {
    return casing_ == other.casing_ && vocab_ == other.vocab_;
  }

 private:
  std::string Normalize(std::string_view s) const;

  std::map<std::string, TokenId> vocab_;
  std::vector<std::string> id_to_token_;
  std::size_t max_token_length_ = 0;
  Casing casing_;
  TokenId sep_id_ = -1;
  TokenId eos_id_ = -1;
  TokenId bos_id_ = -1;
  TokenId unk_id_ = -1;
};

// Builds a vocabulary from the fragments of `names` (and the words of `texts`,
// if any). Ids: sep=0, eos=1, bos=2, unk=3, then tokens in byte order.
Tokenizer BuildTokenizer(std::span<const std::string> names,
                         std::span<const std::string> texts = {},
                         Casing casing = Casing::kPreserve);

struct ServiceEntry {
  ServiceId sid = 0;
  std::string name;
  std::vector<TokenId> tokens;
};

class TokenTrie {
 public:
  using NodeId = std::int32_t;
  static constexpr NodeId kRoot = 0;

  struct Node {
    std::map<TokenId, NodeId> children;
    std::optional<ServiceId> terminal_sid;
    // Sorted ids of every terminal in this node's subtree, itself included.
    std::vector<ServiceId> subtree_sids;
  };

  TokenTrie();

  const Node& node(NodeId id) const { return nodes_.at(id); }
  const Node& root() const { return nodes_.front(); }
  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_services() const { return root().subtree_sids.size(); }
  bool empty() const { return num_services() == 0; }

  std::optional<NodeId> Child(NodeId id, TokenId token) const;
  // Node reached from the root by `path`, if any.
  std::optional<NodeId> Walk(std::span<const TokenId> path) const;
  bool Contains(ServiceId sid) const;

 private:
  friend TokenTrie BuildTrie(std::span<const ServiceEntry> entries);
  std::vector<Node> nodes_;
};

// Throws on duplicate sids, empty token sequences, reserved tokens in a path,
// and two sids sharing one token sequence.
TokenTrie BuildTrie(std::span<const ServiceEntry> entries);

// Catalog of services under one tokenizer.
class Lexicon {
 public:
  Lexicon(Tokenizer tokenizer, std::vector<ServiceEntry> entries);

  // Tokenizes `names` (sid -> name) together with optional free text.
  static Lexicon FromNames(const std::map<ServiceId, std::string>& names,
                           std::span<const std::string> texts = {},
                           Casing casing = Casing::kPreserve);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  const std::vector<ServiceEntry>& entries() const { return entries_; }
  const ServiceEntry& entry(ServiceId sid) const;
  bool Contains(ServiceId sid) const { return by_sid_.contains(sid); }
  std::optional<ServiceId> FindByName(std::string_view name) const;

  // Trie over all entries except `excluded`.
  TokenTrie BuildTrie(std::span<const ServiceId> excluded = {}) const;

 private:
  Tokenizer tokenizer_;
  std::vector<ServiceEntry> entries_;
  std::unordered_map<ServiceId, std::size_t> by_sid_;
  std::map<std::string, ServiceId, std::less<>> by_name_;
};

}  // namespace svcrec

#endif  // SVCREC_LEXICON_H_
