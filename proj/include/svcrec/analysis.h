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

// Diagnostics of constrained decoding: probability cost, per-step entropy,
// validity of unconstrained outputs and the validity/probability tradeoff.

#ifndef SVCREC_ANALYSIS_H_
#define SVCREC_ANALYSIS_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svcrec/error.h"
#include "svcrec/lexicon.h"

namespace svcrec {

// One decoding step. Both log-probabilities are read from the raw softmax.
struct TraceStep {
  int step = 0;
  double raw_entropy = 0.0;
  // Entropy of the raw distribution renormalized over the allowed set.
  double masked_entropy = 0.0;
  TokenId raw_token = -1;
  TokenId fa_token = -1;
  double raw_logp_raw_token = 0.0;
  double raw_logp_fa_token = 0.0;
  std::size_t allowed_size = 0;
  // Filled only when DecoderConfig::record_distributions is set.
  std::vector<double> raw_probs;
  std::vector<double> masked_probs;

  bool overridden() const { return raw_token != fa_token; }
};

struct DecodeTrace {
  std::string query_id;
  std::vector<TraceStep> steps;
};

// Mean over steps of log p_raw(fa token) - log p_raw(raw argmax). Always <= 0.
double ProbabilityCost(const DecodeTrace& trace);

// Shannon entropy in nats with 0 log 0 = 0. `probs` must sum to 1 (1e-9).
double StepEntropy(std::span<const double> probs);

// Fraction of steps whose raw argmax was inside the allowed set.
double RawTokenValidity(const DecodeTrace& trace);

// True iff `tokens` is a list of distinct catalog services separated by `sep`
// and closed by a single trailing `eos`. An empty list, and a separator
// directly before `eos`, are accepted since the decoding automaton permits
// both.
bool IsValidServiceSequence(std::span<const TokenId> tokens, const TokenTrie& trie,
                            TokenId sep, TokenId eos);

double ValidityRate(std::span<const std::vector<TokenId>> sequences, const TokenTrie& trie,
                    TokenId sep, TokenId eos);

struct QueryDiagnostics {
  DecodeTrace trace;
  double raw_validity = 1.0;
};

struct TradeoffRow {
  std::string bucket;  // "[lo,hi)" or "1.0" for the all-valid bucket
  std::size_t num_queries = 0;
  double mean_abs_cost = 0.0;
  double mean_raw_entropy = 0.0;
  double mean_masked_entropy = 0.0;
};

// Buckets queries by raw validity into `num_buckets` equal-width bins over
// [0,1) plus a separate bin for exactly 1.0. Entropies are averaged per trace
// first, then over the queries of a bucket. Empty buckets are omitted.
std::vector<TradeoffRow> TradeoffReport(std::span<const QueryDiagnostics> queries,
                                        int num_buckets = 5);

std::string TradeoffCsv(std::span<const TradeoffRow> rows);

}  // namespace svcrec

#endif  // SVCREC_ANALYSIS_H_
