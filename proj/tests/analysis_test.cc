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

#include "svcrec/analysis.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/expect_error.h"
#include "support/oracles.h"
#include "svcrec/decoder.h"

namespace svcrec {
namespace {

using testing::BruteValid;
using testing::HashLogitProvider;
using testing::kSpecial;

TraceStep StepWith(double logp_raw, double logp_fa, TokenId raw, TokenId fa, double h_raw = 0.0,
                   double h_masked = 0.0) {
  TraceStep s;
  s.raw_logp_raw_token = logp_raw;
  s.raw_logp_fa_token = logp_fa;
  s.raw_token = raw;
  s.fa_token = fa;
  s.raw_entropy = h_raw;
  s.masked_entropy = h_masked;
  s.allowed_size = 1;
  return s;
}

TEST(ProbabilityCost, HandValues) {
  DecodeTrace one{"q", {StepWith(std::log(0.5), std::log(0.25), 4, 5)}};
  EXPECT_NEAR(ProbabilityCost(one), std::log(0.5), 1e-15);
  DecodeTrace agree{"q", {StepWith(-0.1, -0.1, 4, 4), StepWith(-2.0, -2.0, 7, 7)}};
  EXPECT_EQ(ProbabilityCost(agree), 0.0);
  EXPECT_ERROR_CODE(ProbabilityCost(DecodeTrace{}), "empty_trace");
}

TEST(ProbabilityCost, NonPositiveOnDecoderTraces) {
  std::mt19937_64 rng(14);
  int overridden = 0, clean = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto entries = testing::RandomEntries(rng, 3 + static_cast<int>(rng() % 10));
    const TokenTrie trie = BuildTrie(entries);
    const DecodeResult r = Decode(HashLogitProvider(16, rng()), trie, kSpecial, {}, {});
    const double cost = ProbabilityCost(r.trace);
    EXPECT_LE(cost, 0.0);
    bool any = false;
    for (const TraceStep& s : r.trace.steps) any = any || s.overridden();
    if (any) {
      EXPECT_LT(cost, 0.0);
      ++overridden;
    } else {
      EXPECT_EQ(cost, 0.0);
      EXPECT_EQ(RawTokenValidity(r.trace), 1.0);
      ++clean;
    }
  }
  EXPECT_GT(overridden, 0);
}

TEST(StepEntropy, HandValues) {
  EXPECT_NEAR(StepEntropy(std::vector<double>(4, 0.25)), std::log(4.0), 1e-15);
  EXPECT_EQ(StepEntropy(std::vector<double>{0.0, 1.0, 0.0}), 0.0);
  EXPECT_NEAR(StepEntropy(std::vector<double>{0.5, 0.25, 0.25}), 1.5 * std::log(2.0), 1e-15);
  EXPECT_ERROR_CODE(StepEntropy(std::vector<double>{1.5, -0.5}), "bad_distribution");
  EXPECT_ERROR_CODE(StepEntropy(std::vector<double>{0.5, 0.4}), "bad_distribution");
}

TEST(StepEntropy, MaskedEntropyBoundedByAllowedSet) {
  std::mt19937_64 rng(15);
  DecoderConfig cfg;
  cfg.record_distributions = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto entries = testing::RandomEntries(rng, 3 + static_cast<int>(rng() % 10));
    const TokenTrie trie = BuildTrie(entries);
    const DecodeResult r = Decode(HashLogitProvider(16, rng()), trie, kSpecial, cfg, {});
    for (const TraceStep& s : r.trace.steps) {
      EXPECT_GE(s.masked_entropy, 0.0);
      EXPECT_LE(s.masked_entropy, std::log(static_cast<double>(s.allowed_size)) + 1e-12);
      EXPECT_NEAR(s.raw_entropy, StepEntropy(s.raw_probs), 1e-12);
    }
  }
}

// Services a=4, ab=(4,5), c=6.
std::vector<ServiceEntry> ThreeServices() { return {{0, "a", {4}}, {1, "ab", {4, 5}}, {2, "c", {6}}}; }

TEST(Validity, HandCases) {
  const TokenTrie trie = BuildTrie(ThreeServices());
  auto valid = [&](std::vector<TokenId> t) { return IsValidServiceSequence(t, trie, 0, 1); };
  EXPECT_TRUE(valid({4, 5, 0, 6, 1}));
  EXPECT_TRUE(valid({4, 0, 4, 5, 1}));
  EXPECT_TRUE(valid({1}));
  EXPECT_TRUE(valid({6, 0, 1}));
  EXPECT_FALSE(valid({4, 0, 4, 1}));  // duplicate
  EXPECT_FALSE(valid({4, 9, 1}));     // out-of-lexicon token
  EXPECT_FALSE(valid({4, 5}));        // no eos
  EXPECT_FALSE(valid({5, 1}));        // not a service
  EXPECT_FALSE(valid({0, 4, 1}));
  EXPECT_FALSE(valid({4, 0, 0, 6, 1}));
  EXPECT_FALSE(valid({4, 1, 1}));
  EXPECT_FALSE(valid({}));
  const std::vector<std::vector<TokenId>> seqs = {{4, 1}, {9, 1}, {6, 0, 4, 5, 1}, {5}};
  EXPECT_EQ(ValidityRate(seqs, trie, 0, 1), 0.5);
}

TEST(Validity, MatchesBruteForceParser) {
  const auto entries = ThreeServices();
  const TokenTrie trie = BuildTrie(entries);
  std::mt19937_64 rng(16);
  int accepted = 0;
  for (int trial = 0; trial < 5000; ++trial) {
    std::vector<TokenId> t;
    const int len = static_cast<int>(rng() % 7);
    for (int i = 0; i < len; ++i) {
      // Mostly name tokens and separators, sometimes eos or a stray id.
      static const TokenId kPool[] = {4, 4, 5, 6, 0, 0, 1, 7};
      t.push_back(kPool[rng() % 8]);
    }
    if (rng() % 4) t.push_back(1);
    const bool want = BruteValid(t, entries, kSpecial);
    EXPECT_EQ(IsValidServiceSequence(t, trie, 0, 1), want);
    accepted += want ? 1 : 0;
  }
  EXPECT_GT(accepted, 100);
}

TEST(Tradeoff, HandComputedRows) {
  auto q = [](double validity, std::vector<TraceStep> steps) {
    return QueryDiagnostics{DecodeTrace{"q", std::move(steps)}, validity};
  };
  std::vector<QueryDiagnostics> qs = {
      q(1.0, {StepWith(-0.1, -0.1, 4, 4, 1.0, 0.5)}),
      q(1.0, {StepWith(-0.2, -0.2, 4, 4, 2.0, 1.5), StepWith(-0.3, -0.3, 5, 5, 4.0, 0.5)}),
      q(0.5, {StepWith(-0.5, -1.5, 4, 6, 3.0, 1.0), StepWith(-0.5, -0.5, 4, 4, 1.0, 1.0)}),
      q(0.45, {StepWith(-1.0, -3.0, 4, 6, 2.0, 0.0)}),
      q(0.0, {}),  // skipped: no steps
  };
  const std::vector<TradeoffRow> rows = TradeoffReport(qs, 5);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].bucket, "[0.400000,0.600000)");
  EXPECT_EQ(rows[0].num_queries, 2u);
  EXPECT_NEAR(rows[0].mean_abs_cost, (0.5 + 2.0) / 2.0, 1e-15);
  EXPECT_NEAR(rows[0].mean_raw_entropy, (2.0 + 2.0) / 2.0, 1e-15);
  EXPECT_NEAR(rows[0].mean_masked_entropy, (1.0 + 0.0) / 2.0, 1e-15);
  EXPECT_EQ(rows[1].bucket, "1.0");
  EXPECT_EQ(rows[1].num_queries, 2u);
  EXPECT_EQ(rows[1].mean_abs_cost, 0.0);
  EXPECT_NEAR(rows[1].mean_raw_entropy, (1.0 + 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(rows[1].mean_masked_entropy, (0.5 + 1.0) / 2.0, 1e-15);

  const std::string csv = TradeoffCsv(rows);
  EXPECT_EQ(csv,
            "validity_bucket,num_queries,mean_abs_cost,mean_raw_entropy,mean_masked_entropy\n"
            "\"[0.400000,0.600000)\",2,1.250000,2.000000,0.500000\n"
            "\"1.0\",2,0.000000,2.000000,0.750000\n");
  qs[0].raw_validity = 1.5;
  EXPECT_ERROR_CODE(TradeoffReport(qs), "bad_validity");
}

}  // namespace
}  // namespace svcrec
