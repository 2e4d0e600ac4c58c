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

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

namespace svcrec {

double ProbabilityCost(const DecodeTrace& trace) {
  if (trace.steps.empty()) throw Error("empty_trace", "probability cost of an empty trace");
  double sum = 0.0;
  for (const TraceStep& s : trace.steps) sum += s.raw_logp_fa_token - s.raw_logp_raw_token;
  return sum / static_cast<double>(trace.steps.size());
}

double StepEntropy(std::span<const double> probs) {
  double total = 0.0;
  double h = 0.0;
  for (double p : probs) {
    if (p < 0.0 || !std::isfinite(p)) throw Error("bad_distribution", "negative probability mass");
    total += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw Error("bad_distribution", "distribution does not sum to one");
  }
  return h;
}

double RawTokenValidity(const DecodeTrace& trace) {
  if (trace.steps.empty()) return 1.0;
  std::size_t kept = 0;
  for (const TraceStep& s : trace.steps) kept += s.overridden() ? 0 : 1;
  return static_cast<double>(kept) / static_cast<double>(trace.steps.size());
}

bool IsValidServiceSequence(std::span<const TokenId> tokens, const TokenTrie& trie,
                            TokenId sep, TokenId eos) {
  if (tokens.empty() || tokens.back() != eos) return false;
  std::set<ServiceId> seen;
  std::vector<TokenId> span;
  bool after_sep = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    const bool closes = t == sep || t == eos;
    if (!closes) {
      span.push_back(t);
      continue;
    }
    if (t == eos && i + 1 != tokens.size()) return false;
    if (span.empty()) {
      // Only "sep eos" or a bare "eos" may close an empty span.
      if (t == sep) return false;
      if (t == eos && !after_sep && i != 0) return false;
    } else {
      auto node = trie.Walk(span);
      if (!node) return false;
      const auto& terminal = trie.node(*node).terminal_sid;
      if (!terminal || !seen.insert(*terminal).second) return false;
    }
    span.clear();
    after_sep = t == sep;
  }
  return true;
}

double ValidityRate(std::span<const std::vector<TokenId>> sequences, const TokenTrie& trie,
                    TokenId sep, TokenId eos) {
  if (sequences.empty()) return 0.0;
  std::size_t valid = 0;
  for (const auto& seq : sequences) valid += IsValidServiceSequence(seq, trie, sep, eos) ? 1 : 0;
  return static_cast<double>(valid) / static_cast<double>(sequences.size());
}

namespace {

double MeanOver(const DecodeTrace& trace, double TraceStep::*field) {
  if (trace.steps.empty()) return 0.0;
  double sum = 0.0;
  for (const TraceStep& s : trace.steps) sum += s.*field;
  return sum / static_cast<double>(trace.steps.size());
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<TradeoffRow> TradeoffReport(std::span<const QueryDiagnostics> queries,
                                        int num_buckets) {
  if (num_buckets < 1) throw Error("bad_config", "num_buckets must be positive");
  // Index num_buckets holds the all-valid queries.
  std::vector<TradeoffRow> rows(num_buckets + 1);
  for (int b = 0; b < num_buckets; ++b) {
    rows[b].bucket = "[" + FormatDouble(static_cast<double>(b) / num_buckets) + "," +
                     FormatDouble(static_cast<double>(b + 1) / num_buckets) + ")";
  }
  rows[num_buckets].bucket = "1.0";
  for (const QueryDiagnostics& q : queries) {
    if (q.trace.steps.empty()) continue;
    const double v = q.raw_validity;
    if (v < 0.0 || v > 1.0) throw Error("bad_validity", "raw validity outside [0,1]");
    int b = v >= 1.0 ? num_buckets : static_cast<int>(std::floor(v * num_buckets));
    if (b >= num_buckets && v < 1.0) b = num_buckets - 1;
    TradeoffRow& row = rows[b];
    row.num_queries += 1;
    row.mean_abs_cost += std::abs(ProbabilityCost(q.trace));
    row.mean_raw_entropy += MeanOver(q.trace, &TraceStep::raw_entropy);
    row.mean_masked_entropy += MeanOver(q.trace, &TraceStep::masked_entropy);
  }
  std::vector<TradeoffRow> out;
  for (TradeoffRow& row : rows) {
    if (row.num_queries == 0) continue;
    const auto n = static_cast<double>(row.num_queries);
    row.mean_abs_cost /= n;
    row.mean_raw_entropy /= n;
    row.mean_masked_entropy /= n;
    out.push_back(row);
  }
  return out;
}

std::string TradeoffCsv(std::span<const TradeoffRow> rows) {
  std::ostringstream os;
  os << "validity_bucket,num_queries,mean_abs_cost,mean_raw_entropy,mean_masked_entropy\n";
  for (const TradeoffRow& r : rows) {
    os << '"' << r.bucket << '"' << ',' << r.num_queries << ',' << FormatDouble(r.mean_abs_cost)
       << ',' << FormatDouble(r.mean_raw_entropy) << ',' << FormatDouble(r.mean_masked_entropy)
       << '\n';
  }
  return os.str();
}

}  // namespace svcrec
