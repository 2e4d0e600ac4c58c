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

#include <gtest/gtest.h>

#include <random>

#include "support/expect_error.h"
#include "support/oracles.h"

namespace svcrec {
namespace {

using testing::RandomEntries;
using testing::WalkSubtree;

TEST(Tokenizer, SingleNameVocabulary) {
  const std::vector<std::string> names = {"maps"};
  const Tokenizer tok = BuildTokenizer(names);
  EXPECT_TRUE(tok.Find("maps").has_value());
  EXPECT_EQ(tok.sep_id(), 0);
  EXPECT_EQ(tok.eos_id(), 1);
  EXPECT_EQ(tok.bos_id(), 2);
  EXPECT_EQ(tok.unk_id(), 3);
  EXPECT_EQ(tok.size(), 5u);
  EXPECT_EQ(tok.token(tok.sep_id()), "<|SEP|>");
  EXPECT_EQ(tok.token(tok.eos_id()), "<eos>");
}

TEST(Tokenizer, SharedPrefixToken) {
  const std::vector<std::string> names = {"google-maps", "google-api"};
  const Tokenizer tok = BuildTokenizer(names);
  const auto a = tok.Encode("google-maps");
  const auto b = tok.Encode("google-api");
  ASSERT_EQ(a.size(), 2u);
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(tok.token(a[0]), "google-");
  EXPECT_NE(a[1], b[1]);
}

TEST(Tokenizer, DeterministicIds) {
  const std::vector<std::string> names = {"twitter-api", "google-maps", "google-api", "yelp"};
  std::vector<std::string> shuffled = {"yelp", "google-api", "twitter-api", "google-maps"};
  EXPECT_EQ(BuildTokenizer(names), BuildTokenizer(names));
  EXPECT_EQ(BuildTokenizer(names).vocab(), BuildTokenizer(shuffled).vocab());
}

TEST(Tokenizer, IdsFollowByteOrderAfterReserved) {
  const std::vector<std::string> names = {"b-a", "a"};
  const Tokenizer tok = BuildTokenizer(names);
  EXPECT_EQ(*tok.Find("a"), 4);
  EXPECT_EQ(*tok.Find("b-"), 5);
}

TEST(Tokenizer, RejectsBadNames) {
  for (const std::string bad : {"", "a,b", "<x>", "a|b", "caf\xc3\xa9", "tab\x01"}) {
    const std::vector<std::string> names = {"ok", bad};
    EXPECT_THROW(BuildTokenizer(names), Error) << bad;
  }
  const std::vector<std::string> empty_name = {""};
  EXPECT_ERROR_CODE(BuildTokenizer(empty_name), "empty_name");
  const std::vector<std::string> comma = {"a,b"};
  EXPECT_ERROR_CODE(BuildTokenizer(comma), "invalid_name_char");
  EXPECT_ERROR_CODE(BuildTokenizer({}), "empty_catalog");
}

TEST(Tokenizer, UnencodableName) {
  const std::vector<std::string> names = {"maps"};
  const Tokenizer tok = BuildTokenizer(names);
  EXPECT_ERROR_CODE(tok.Encode("zzz"), "unencodable");
}

TEST(Tokenizer, RoundTripAndNoReservedIds) {
  std::mt19937_64 rng(5);
  const std::string alphabet = "abcXYZ019-_ .";
  std::vector<std::string> names;
  for (int i = 0; i < 200; ++i) {
    std::string n(1, 'a' + static_cast<char>(rng() % 26));
    const int len = static_cast<int>(rng() % 12);
    for (int j = 0; j < len; ++j) n.push_back(alphabet[rng() % alphabet.size()]);
    names.push_back(n);
  }
  const Tokenizer tok = BuildTokenizer(names);
  for (const std::string& n : names) {
    const auto ids = tok.Encode(n);
    EXPECT_EQ(tok.Decode(ids), n);
    for (TokenId id : ids) EXPECT_FALSE(tok.is_reserved(id));
    EXPECT_EQ(tok.Encode(n), ids);
  }
}

TEST(Tokenizer, CaseFolding) {
  const std::vector<std::string> names = {"Google-Maps"};
  const Tokenizer fold = BuildTokenizer(names, {}, Casing::kFold);
  EXPECT_EQ(fold.Encode("GOOGLE-maps"), fold.Encode("google-MAPS"));
  const Tokenizer keep = BuildTokenizer(names);
  EXPECT_ERROR_CODE(keep.Encode("google-maps"), "unencodable");
}

TEST(Tokenizer, TextWordsAndUnknowns) {
  const std::vector<std::string> names = {"maps"};
  const std::vector<std::string> texts = {"Find nearby cafes"};
  const Tokenizer tok = BuildTokenizer(names, texts);
  const auto ids = tok.EncodeText("find, NEARBY bars!");
  ASSERT_EQ(ids.size(), 3u);
  EXPECT_EQ(ids[0], *tok.Find("find"));
  EXPECT_EQ(ids[1], *tok.Find("nearby"));
  EXPECT_EQ(ids[2], tok.unk_id());
  EXPECT_TRUE(tok.EncodeText("  ...  ").empty());
}

TEST(Tokenizer, RejectsSparseVocabulary) {
  std::map<std::string, TokenId> vocab = {
      {"<|SEP|>", 0}, {"<eos>", 1}, {"<bos>", 2}, {"<unk>", 3}, {"a", 5}};
  EXPECT_ERROR_CODE(Tokenizer(vocab, Casing::kPreserve), "bad_vocab");
  vocab = {{"<|SEP|>", 0}, {"<eos>", 1}, {"<bos>", 2}};
  EXPECT_ERROR_CODE(Tokenizer(vocab, Casing::kPreserve), "bad_vocab");
}

TEST(SplitNameFragments, KeepsDelimitersWithFragment) {
  EXPECT_EQ(SplitNameFragments("google-maps api"),
            (std::vector<std::string>{"google-", "maps ", "api"}));
  EXPECT_EQ(SplitNameFragments("a__b"), (std::vector<std::string>{"a__", "b"}));
  EXPECT_EQ(SplitNameFragments("-x"), (std::vector<std::string>{"-", "x"}));
}

// Token ids standing in for a, b, c, x, y, z.
constexpr TokenId kA = 4, kB = 5, kC = 6, kX = 7, kY = 8, kZ = 9;

TEST(TokenTrie, SharedPrefixExample) {
  const std::vector<ServiceEntry> entries = {
      {7, "abc", {kA, kB, kC}}, {3, "x", {kX}}, {12, "xyz", {kX, kY, kZ}}};
  const TokenTrie trie = BuildTrie(entries);
  const auto& root = trie.root();
  ASSERT_EQ(root.children.size(), 2u);
  EXPECT_TRUE(root.children.contains(kA));
  EXPECT_TRUE(root.children.contains(kX));
  EXPECT_FALSE(root.terminal_sid.has_value());
  const auto& x = trie.node(*trie.Walk(std::vector<TokenId>{kX}));
  EXPECT_EQ(x.terminal_sid, 3);
  EXPECT_EQ(x.subtree_sids, (std::vector<ServiceId>{3, 12}));
  EXPECT_EQ(root.subtree_sids, (std::vector<ServiceId>{3, 7, 12}));
  EXPECT_EQ(trie.node(*trie.Walk(std::vector<TokenId>{kX, kY})).subtree_sids,
            (std::vector<ServiceId>{12}));
  EXPECT_EQ(trie.num_services(), 3u);
}

TEST(TokenTrie, SingleEntry) {
  const std::vector<ServiceEntry> entries = {{0, "t", {kA}}};
  const TokenTrie trie = BuildTrie(entries);
  EXPECT_EQ(trie.root().children.size(), 1u);
  const auto& leaf = trie.node(*trie.Walk(std::vector<TokenId>{kA}));
  EXPECT_EQ(leaf.terminal_sid, 0);
  EXPECT_EQ(leaf.subtree_sids, (std::vector<ServiceId>{0}));
  EXPECT_EQ(trie.root().subtree_sids, (std::vector<ServiceId>{0}));
}

TEST(TokenTrie, Errors) {
  const std::vector<ServiceEntry> dup_sid = {{1, "a", {kA}}, {1, "b", {kB}}};
  EXPECT_ERROR_CODE(BuildTrie(dup_sid), "duplicate_sid");
  const std::vector<ServiceEntry> collide = {{1, "a", {kA, kB}}, {2, "b", {kA, kB}}};
  EXPECT_ERROR_CODE(BuildTrie(collide), "lexical_collision");
  const std::vector<ServiceEntry> empty = {{1, "a", {}}};
  EXPECT_ERROR_CODE(BuildTrie(empty), "empty_tokens");
}

TEST(TokenTrie, RandomSubtreesMatchRecursiveWalk) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const auto entries = RandomEntries(rng, 50);
    const TokenTrie trie = BuildTrie(entries);
    std::size_t terminals = 0;
    for (std::size_t i = 0; i < trie.num_nodes(); ++i) {
      const auto id = static_cast<TokenTrie::NodeId>(i);
      const auto& node = trie.node(id);
      const auto walked = WalkSubtree(trie, id);
      EXPECT_EQ(std::vector<ServiceId>(walked.begin(), walked.end()), node.subtree_sids);
      for (const auto& [token, child] : node.children) {
        for (ServiceId s : trie.node(child).subtree_sids) EXPECT_TRUE(walked.contains(s));
      }
      terminals += node.terminal_sid ? 1 : 0;
    }
    EXPECT_EQ(terminals, entries.size());
    EXPECT_FALSE(trie.root().terminal_sid.has_value());
    for (const ServiceEntry& e : entries) {
      const auto node = trie.Walk(e.tokens);
      ASSERT_TRUE(node.has_value());
      EXPECT_EQ(trie.node(*node).terminal_sid, e.sid);
      EXPECT_TRUE(trie.Contains(e.sid));
    }
  }
}

TEST(Lexicon, FromNamesAndLookup) {
  const Lexicon lex = Lexicon::FromNames({{2, "google-maps"}, {0, "google-api"}, {5, "yelp"}});
  EXPECT_EQ(lex.entries().size(), 3u);
  EXPECT_EQ(lex.entries().front().sid, 0);
  EXPECT_EQ(lex.FindByName("yelp"), 5);
  EXPECT_FALSE(lex.FindByName("nope").has_value());
  EXPECT_EQ(lex.tokenizer().Decode(lex.entry(2).tokens), "google-maps");
  EXPECT_ERROR_CODE(lex.entry(9), "unknown_sid");

  const std::vector<ServiceId> excluded = {2};
  const TokenTrie trie = lex.BuildTrie(excluded);
  EXPECT_FALSE(trie.Contains(2));
  EXPECT_TRUE(trie.Contains(0));
  EXPECT_EQ(trie.num_services(), 2u);
}

TEST(Lexicon, RejectsReservedTokensAndDuplicateNames) {
  const Lexicon base = Lexicon::FromNames({{0, "a"}, {1, "b"}});
  const Tokenizer& tok = base.tokenizer();
  std::vector<ServiceEntry> bad = {{0, "a", {tok.sep_id()}}};
  EXPECT_ERROR_CODE(Lexicon(tok, bad), "reserved_token");
  std::vector<ServiceEntry> dup = {{0, "a", tok.Encode("a")}, {1, "a", tok.Encode("a")}};
  EXPECT_ERROR_CODE(Lexicon(tok, dup), "duplicate_name");
}

}  // namespace
}  // namespace svcrec
