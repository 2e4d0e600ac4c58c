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

#include "svcrec/lexicon.h"

#include <algorithm>
#include <cctype>
#include <set>
#include <utility>

namespace svcrec {
namespace {

bool IsDelimiter(char c) {
  return c == '-' || c == '_' || std::isspace(static_cast<unsigned char>(c));
}

std::string FoldCase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<std::string> SplitNameFragments(std::string_view name) {
  std::vector<std::string> fragments;
  std::size_t i = 0;
  while (i < name.size()) {
    const std::size_t start = i;
    while (i < name.size() && !IsDelimiter(name[i])) ++i;
    while (i < name.size() && IsDelimiter(name[i])) ++i;
    fragments.emplace_back(name.substr(start, i - start));
  }
  return fragments;
}

std::vector<std::string> SplitTextWords(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!current.empty()) {
      words.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

void ValidateServiceName(std::string_view name) {
  if (name.empty()) throw Error("empty_name", "service name is empty");
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u > 0x7e || c == '<' || c == '>' || c == '|' || c == ',') {
      throw Error("invalid_name_char",
                  "service name '" + std::string(name) +
                      "' contains a character outside the tokenizer alphabet");
    }
  }
}

Tokenizer::Tokenizer(std::map<std::string, TokenId> vocab, Casing casing)
    : vocab_(std::move(vocab)), casing_(casing) {
  id_to_token_.resize(vocab_.size());
  std::vector<bool> seen(vocab_.size(), false);
  for (const auto& [token, id] : vocab_) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_.size() || seen[id]) {
      throw Error("bad_vocab", "vocabulary ids must be dense and unique");
    }
    if (token.empty()) throw Error("bad_vocab", "empty token in vocabulary");
    seen[id] = true;
    id_to_token_[id] = token;
    max_token_length_ = std::max(max_token_length_, token.size());
  }
  auto reserved = [this](std::string_view t) {
    auto it = vocab_.find(std::string(t));
    if (it == vocab_.end()) {
      throw Error("bad_vocab", "vocabulary lacks reserved token " + std::string(t));
    }
    return it->second;
  };
  sep_id_ = reserved(kSepToken);
  eos_id_ = reserved(kEosToken);
  bos_id_ = reserved(kBosToken);
  unk_id_ = reserved(kUnkToken);
}

std::string Tokenizer::Normalize(std::string_view s) const {
  return casing_ == Casing::kFold ? FoldCase(s) : std::string(s);
}

std::vector<TokenId> Tokenizer::Encode(std::string_view name) const {
  ValidateServiceName(name);
  const std::string s = Normalize(name);
  std::vector<TokenId> ids;
  std::size_t pos = 0;
  while (pos < s.size()) {
    const std::size_t longest = std::min(max_token_length_, s.size() - pos);
    bool matched = false;
    for (std::size_t len = longest; len > 0; --len) {
      auto it = vocab_.find(s.substr(pos, len));
      if (it != vocab_.end() && !is_reserved(it->second)) {
        ids.push_back(it->second);
        pos += len;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw Error("unencodable", "cannot encode '" + std::string(name) +
                                     "' at offset " + std::to_string(pos));
    }
  }
  return ids;
}

std::vector<TokenId> Tokenizer::EncodeText(std::string_view text) const {
  std::vector<TokenId> ids;
  for (const std::string& word : SplitTextWords(text)) {
    auto it = vocab_.find(word);
    ids.push_back(it == vocab_.end() || is_reserved(it->second) ? unk_id_ : it->second);
  }
  return ids;
}

std::string Tokenizer::Decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token(id);
  return out;
}

const std::string& Tokenizer::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw Error("bad_token", "token id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[id];
}

std::optional<TokenId> Tokenizer::Find(std::string_view token) const {
  auto it = vocab_.find(std::string(token));
  if (it == vocab_.end()) return std::nullopt;
  return it->second;
}

Tokenizer BuildTokenizer(std::span<const std::string> names,
                         std::span<const std::string> texts, Casing casing) {
  if (names.empty()) throw Error("empty_catalog", "no service names given");
  std::set<std::string> tokens;
  for (const std::string& raw : names) {
    ValidateServiceName(raw);
    const std::string name = casing == Casing::kFold ? FoldCase(raw) : raw;
    for (std::string& f : SplitNameFragments(name)) tokens.insert(std::move(f));
  }
  for (const std::string& text : texts) {
    for (std::string& w : SplitTextWords(text)) tokens.insert(std::move(w));
  }
  std::map<std::string, TokenId> vocab;
  for (std::string_view r : {Tokenizer::kSepToken, Tokenizer::kEosToken,
                             Tokenizer::kBosToken, Tokenizer::kUnkToken}) {
    vocab.emplace(std::string(r), static_cast<TokenId>(vocab.size()));
  }
  for (const std::string& t : tokens) {
    vocab.emplace(t, static_cast<TokenId>(vocab.size()));
  }
  return Tokenizer(std::move(vocab), casing);
}

TokenTrie::TokenTrie() : nodes_(1) {}

std::optional<TokenTrie::NodeId> TokenTrie::Child(NodeId id, TokenId token) const {
  const auto& children = node(id).children;
  auto it = children.find(token);
  if (it == children.end()) return std::nullopt;
  return it->second;
}

std::optional<TokenTrie::NodeId> TokenTrie::Walk(std::span<const TokenId> path) const {
  NodeId current = kRoot;
  for (TokenId t : path) {
    auto next = Child(current, t);
    if (!next) return std::nullopt;
    current = *next;
  }
  return current;
}

bool TokenTrie::Contains(ServiceId sid) const {
  return std::binary_search(root().subtree_sids.begin(), root().subtree_sids.end(), sid);
}

TokenTrie BuildTrie(std::span<const ServiceEntry> entries) {
  TokenTrie trie;
  auto& nodes = trie.nodes_;
  std::vector<TokenTrie::NodeId> parent{-1};
  std::set<ServiceId> sids;
  for (const ServiceEntry& e : entries) {
    if (!sids.insert(e.sid).second) {
      throw Error("duplicate_sid", "duplicate service id " + std::to_string(e.sid));
    }
    if (e.tokens.empty()) {
      throw Error("empty_tokens", "service " + std::to_string(e.sid) + " has no tokens");
    }
    TokenTrie::NodeId current = TokenTrie::kRoot;
    for (TokenId t : e.tokens) {
      auto& children = nodes[current].children;
      auto it = children.find(t);
      if (it != children.end()) {
        current = it->second;
        continue;
      }
      const auto fresh = static_cast<TokenTrie::NodeId>(nodes.size());
      children.emplace(t, fresh);
      nodes.emplace_back();
      parent.push_back(current);
      current = fresh;
    }
    if (nodes[current].terminal_sid) {
      throw Error("lexical_collision",
                  "services " + std::to_string(*nodes[current].terminal_sid) + " and " +
                      std::to_string(e.sid) + " share one token sequence");
    }
    nodes[current].terminal_sid = e.sid;
  }
  // Children always carry larger ids than their parent, so a reverse sweep
  // visits every subtree before its root.
  for (auto id = static_cast<TokenTrie::NodeId>(nodes.size()) - 1; id >= 0; --id) {
    auto& own = nodes[id].subtree_sids;
    if (nodes[id].terminal_sid) own.push_back(*nodes[id].terminal_sid);
    std::sort(own.begin(), own.end());
    if (parent[id] >= 0) {
      auto& up = nodes[parent[id]].subtree_sids;
      up.insert(up.end(), own.begin(), own.end());
    }
  }
  return trie;
}

Lexicon::Lexicon(Tokenizer tokenizer, std::vector<ServiceEntry> entries)
    : tokenizer_(std::move(tokenizer)), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const ServiceEntry& a, const ServiceEntry& b) { return a.sid < b.sid; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const ServiceEntry& e = entries_[i];
    if (e.sid < 0) throw Error("bad_sid", "service ids must be non-negative");
    if (!by_sid_.emplace(e.sid, i).second) {
      throw Error("duplicate_sid", "duplicate service id " + std::to_string(e.sid));
    }
    for (TokenId t : e.tokens) {
      if (tokenizer_.is_reserved(t)) {
        throw Error("reserved_token", "service " + e.name + " contains a reserved token");
      }
    }
    const std::string key =
        tokenizer_.casing() == Casing::kFold ? FoldCase(e.name) : e.name;
    if (!by_name_.emplace(key, e.sid).second) {
      throw Error("duplicate_name", "duplicate service name " + e.name);
    }
  }
  // Surfaces lexical collisions at construction time.
  (void)svcrec::BuildTrie(entries_);
}

Lexicon Lexicon::FromNames(const std::map<ServiceId, std::string>& names,
                           std::span<const std::string> texts, Casing casing) {
  std::vector<std::string> all;
  all.reserve(names.size());
  for (const auto& [sid, name] : names) all.push_back(name);
  Tokenizer tokenizer = BuildTokenizer(all, texts, casing);
  std::vector<ServiceEntry> entries;
  for (const auto& [sid, name] : names) {
    entries.push_back({sid, name, tokenizer.Encode(name)});
  }
  return Lexicon(std::move(tokenizer), std::move(entries));
}

const ServiceEntry& Lexicon::entry(ServiceId sid) const {
  auto it = by_sid_.find(sid);
  if (it == by_sid_.end()) {
    throw Error("unknown_sid", "unknown service id " + std::to_string(sid));
  }
  return entries_[it->second];
}

std::optional<ServiceId> Lexicon::FindByName(std::string_view name) const {
  const std::string key =
      tokenizer_.casing() == Casing::kFold ? FoldCase(name) : std::string(name);
  auto it = by_name_.find(key);
  if (it == by_name_.end()) return std::nullopt;
  return it->second;
}

TokenTrie Lexicon::BuildTrie(std::span<const ServiceId> excluded) const {
  std::vector<ServiceEntry> kept;
  for (const ServiceEntry& e : entries_) {
    if (std::find(excluded.begin(), excluded.end(), e.sid) == excluded.end()) kept.push_back(e);
  }
  return svcrec::BuildTrie(kept);
}

}  // namespace svcrec
