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

#include "svcrec/retrieval.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "support/expect_error.h"

namespace svcrec {
namespace {

TEST(CosineSim, HandValues) {
  const std::vector<double> e1 = {1, 0}, e2 = {0, 1};
  EXPECT_EQ(CosineSim(e1, e1), 1.0);
  EXPECT_EQ(CosineSim(e1, e2), 0.0);
  const std::vector<double> a = {1, 2, 3}, b = {4, 5, 6};
  EXPECT_NEAR(CosineSim(a, b), 32.0 / (std::sqrt(14.0) * std::sqrt(77.0)), 1e-15);
  EXPECT_NEAR(CosineSim(a, b), 0.97463, 5e-6);
  EXPECT_ERROR_CODE(CosineSim(a, e1), "shape_mismatch");
  EXPECT_ERROR_CODE(CosineSim(std::vector<double>{0, 0}, e1), "zero_norm");
}

TEST(TfIdf, IdfAndNormalization) {
  const std::vector<std::string> docs = {"map route", "map photo", "photo album"};
  const TfIdfEmbedder emb(docs);
  EXPECT_EQ(emb.dimension(), 4u);  // album map photo route
  const std::vector<double> v = emb.Embed("Map ROUTE unknown");
  const double idf_map = std::log(4.0 / 3.0) + 1.0, idf_route = std::log(2.0) + 1.0;
  const double norm = std::hypot(idf_map, idf_route);
  EXPECT_NEAR(v[0], 0.0, 0.0);
  EXPECT_NEAR(v[1], idf_map / norm, 1e-15);
  EXPECT_NEAR(v[3], idf_route / norm, 1e-15);
  EXPECT_EQ(emb.Embed("nothing known"), std::vector<double>(4, 0.0));
  EXPECT_EQ(emb.Embed("map route"), emb.Embed("map route"));
}

std::vector<CorpusRecord> RandomCorpus(std::mt19937_64& rng, int n) {
  static const std::vector<std::string> kWords = {"map", "photo", "music", "chat", "route",
                                                  "album", "email", "travel", "news", "video"};
  std::vector<CorpusRecord> out;
  for (int i = 0; i < n; ++i) {
    CorpusRecord r;
    r.id = "r" + std::to_string(100 + i);
    for (int w = 0; w < 1 + static_cast<int>(rng() % 4); ++w) {
      r.description += (w ? " " : "") + kWords[rng() % kWords.size()];
    }
    r.apis = {"api" + std::to_string(i)};
    out.push_back(r);
  }
  return out;
}

TEST(TopK, SkipsTheQueryItself) {
  const std::vector<CorpusRecord> corpus = {{"a", "map route planner", {}, {"x"}, ""},
                                            {"b", "map route", {}, {"y"}, ""},
                                            {"c", "photo album", {}, {"z"}, ""}};
  std::vector<std::string> docs;
  for (const auto& r : corpus) docs.push_back(r.description);
  const TfIdfEmbedder emb(docs);
  const auto top = TopK("map route planner", corpus, 5, emb);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].id, "b");
  EXPECT_EQ(top[1].id, "c");
  EXPECT_TRUE(TopK("map", {}, 3, emb).empty());
}

TEST(TopK, MatchesFullSortOracle) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<CorpusRecord> corpus = RandomCorpus(rng, 30);
    std::vector<std::string> docs;
    for (const auto& r : corpus) docs.push_back(r.description);
    const TfIdfEmbedder emb(docs);
    const std::string query = corpus[rng() % corpus.size()].description;
    const std::vector<double> q = emb.Embed(query);

    std::vector<std::pair<double, std::string>> scored;
    for (const auto& r : corpus) {
      if (r.description == query) continue;
      const std::vector<double> e = emb.Embed(r.description);
      double dot = 0, nq = 0, ne = 0;
      for (std::size_t i = 0; i < q.size(); ++i) {
        dot += q[i] * e[i];
        nq += q[i] * q[i];
        ne += e[i] * e[i];
      }
      scored.push_back({nq > 0 && ne > 0 ? dot / std::sqrt(nq * ne) : 0.0, r.id});
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (std::abs(a.first - b.first) > 1e-12) return a.first > b.first;
      return a.second < b.second;
    });
    const auto top = TopK(query, corpus, 5, emb);
    ASSERT_EQ(top.size(), std::min<std::size_t>(5, scored.size()));
    for (std::size_t i = 0; i < top.size(); ++i) {
      EXPECT_EQ(top[i].id, scored[i].second) << "trial " << trial << " rank " << i;
      EXPECT_NE(top[i].description, query);
    }
    EXPECT_EQ(TopK(query, corpus, 100, emb).size(), scored.size());
  }
}

TEST(TopK, RerankerHookReordersCandidates) {
  std::mt19937_64 rng(9);
  const std::vector<CorpusRecord> corpus = RandomCorpus(rng, 10);
  std::vector<std::string> docs;
  for (const auto& r : corpus) docs.push_back(r.description);
  const TfIdfEmbedder emb(docs);
  const auto plain = TopK("map photo", corpus, 4, emb);
  const auto reversed = TopK("map photo", corpus, 4, emb,
                             [](const std::string&, std::vector<CorpusRecord> c) {
                               std::reverse(c.begin(), c.end());
                               return c;
                             });
  ASSERT_EQ(plain.size(), reversed.size());
  for (std::size_t i = 0; i < plain.size(); ++i) {
    EXPECT_EQ(plain[i].id, reversed[plain.size() - 1 - i].id);
  }
}

TEST(BuildPrompt, GoldenRendering) {
  const std::vector<CorpusRecord> neighbors = {
      {"r1", "Plan bike routes on a map", {"Mapping", "Travel"}, {"google-maps", "strava"}, ""},
      {"r2", "Share trip photos", {"Photos"}, {"flickr"}, ""}};
  const PromptBundle b = BuildPrompt("Find scenic rides", {"Travel"}, neighbors, 5, "cycling");
  const std::string golden =
      "You are an expert in cycling API and service recommendation for mashup applications.\n"
      "Your task is to read a short description of an application idea and output a list of the "
      "most relevant APIs that can support its implementation.\n"
      "\n"
      "Input description: Find scenic rides\n"
      "Categories: Travel\n"
      "\n"
      "Similar examples:\n"
      "  1. Description: Plan bike routes on a map\n"
      "     Categories: Mapping, Travel\n"
      "     Related APIs: google-maps, strava\n"
      "  2. Description: Share trip photos\n"
      "     Categories: Photos\n"
      "     Related APIs: flickr\n"
      "\n"
      "Output:\n";
  EXPECT_EQ(b.Render(), golden);
  EXPECT_EQ(b.Render(), BuildPrompt("Find scenic rides", {"Travel"}, neighbors, 5, "cycling").Render());
}

TEST(BuildPrompt, NeighborCounts) {
  const PromptBundle empty = BuildPrompt("q", {}, {}, 5);
  const std::string text = empty.Render();
  EXPECT_NE(text.find("Similar examples:\n\nOutput:\n"), std::string::npos);
  EXPECT_EQ(text.find("1. "), std::string::npos);

  const std::vector<CorpusRecord> three = {{"a", "q", {}, {"x"}, ""},
                                           {"b", "one", {}, {"y"}, ""},
                                           {"c", "two", {}, {"z"}, ""}};
  const PromptBundle one = BuildPrompt("q", {}, three, 1);
  ASSERT_EQ(one.neighbors.size(), 1u);
  EXPECT_EQ(one.neighbors[0].id, "b");
  EXPECT_EQ(one.Render().find("2. "), std::string::npos);
}

}  // namespace
}  // namespace svcrec
