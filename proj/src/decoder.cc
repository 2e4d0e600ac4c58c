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

#include "svcrec/decoder.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace svcrec {
namespace {

bool HasUnused(const TokenTrie::Node& node, const std::set<ServiceId>& used) {
  return std::any_of(node.subtree_sids.begin(), node.subtree_sids.end(),
                     [&](ServiceId sid) { return !used.contains(sid); });
}

double LogSumExp(std::span<const double> z) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : z) hi = std::max(hi, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

TokenId Argmax(std::span<const double> logits) {
  TokenId best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = static_cast<TokenId>(i);
  }
  return best;
}

void CheckLogits(std::span<const double> logits, std::size_t vocab_size) {
  if (logits.size() != vocab_size) {
    throw Error("logit_size", "provider returned " + std::to_string(logits.size()) +
                                  " scores for a vocabulary of " + std::to_string(vocab_size));
  }
  for (double v : logits) {
    if (!std::isfinite(v)) throw Error("logit_nan", "provider returned a non-finite score");
  }
}

// Entropy from log-probabilities, skipping zero-mass entries.
double EntropyFromLog(std::span<const double> logp) {
  double h = 0.0;
  for (double lp : logp) {
    const double p = std::exp(lp);
    if (p > 0.0) h -= p * lp;
  }
  return h;
}

}  // namespace

void DecoderConfig::Validate() const {
  if (max_tokens < 1) throw Error("bad_config", "max_tokens must be at least 1");
}

std::vector<TokenId> AllowedSet(const TokenTrie& trie, TokenTrie::NodeId node,
                                const std::set<ServiceId>& used, SpecialTokens special) {
  std::vector<TokenId> allowed;
  const TokenTrie::Node& u = trie.node(node);
  for (const auto& [token, child] : u.children) {
    if (HasUnused(trie.node(child), used)) allowed.push_back(token);
  }
  if (node == TokenTrie::kRoot) {
    allowed.push_back(special.eos);
  } else if (u.terminal_sid && !used.contains(*u.terminal_sid)) {
    allowed.push_back(special.sep);
    allowed.push_back(special.eos);
  }
  std::sort(allowed.begin(), allowed.end());
  allowed.erase(std::unique(allowed.begin(), allowed.end()), allowed.end());
  return allowed;
}

StepResult Step(const DecoderState& state, std::span<const double> logits,
                const TokenTrie& trie, SpecialTokens special, const DecoderConfig& config) {
  const std::vector<TokenId> allowed = AllowedSet(trie, state.node, state.used, special);
  if (allowed.empty()) {
    throw Error("stuck", "empty allowed set at trie node " + std::to_string(state.node));
  }
  for (TokenId t : allowed) {
    if (t < 0 || static_cast<std::size_t>(t) >= logits.size()) {
      throw Error("logit_size", "allowed token " + std::to_string(t) +
                                    " outside the score vector");
    }
  }

  StepResult out;
  out.state = state;
  TraceStep& tr = out.trace;
  tr.step = static_cast<int>(state.emitted.size());
  tr.allowed_size = allowed.size();

  const double lse = LogSumExp(logits);
  std::vector<double> logp(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) logp[i] = logits[i] - lse;

  TokenId chosen = allowed.front();
  for (TokenId t : allowed) {
    if (logits[t] > logits[chosen]) chosen = t;
  }
  tr.fa_token = chosen;
  tr.raw_token = Argmax(logits);
  tr.raw_logp_fa_token = logp[chosen];
  tr.raw_logp_raw_token = logp[tr.raw_token];
  tr.raw_entropy = EntropyFromLog(logp);

  std::vector<double> allowed_scores;
  allowed_scores.reserve(allowed.size());
  for (TokenId t : allowed) allowed_scores.push_back(logits[t]);
  const double lse_allowed = LogSumExp(allowed_scores);
  std::vector<double> masked_logp;
  masked_logp.reserve(allowed.size());
  for (double s : allowed_scores) masked_logp.push_back(s - lse_allowed);
  tr.masked_entropy = EntropyFromLog(masked_logp);

  if (config.record_distributions) {
    tr.raw_probs.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) tr.raw_probs[i] = std::exp(logp[i]);
    tr.masked_probs.assign(logits.size(), 0.0);
    for (std::size_t j = 0; j < allowed.size(); ++j) {
      tr.masked_probs[allowed[j]] = config.renormalize_masked ? std::exp(masked_logp[j])
                                                              : std::exp(logp[allowed[j]]);
    }
  }

  out.token = chosen;
  DecoderState& next = out.state;
  next.emitted.push_back(chosen);
  if (chosen == special.sep || chosen == special.eos) {
    const auto& terminal = trie.node(state.node).terminal_sid;
    if (terminal && !state.used.contains(*terminal)) next.used.insert(*terminal);
    if (chosen == special.sep) next.node = TokenTrie::kRoot;
  } else if (auto child = trie.Child(state.node, chosen)) {
    next.node = *child;
  }
  return out;
}

DecodeResult Decode(const LogitProvider& provider, const TokenTrie& trie,
                    SpecialTokens special, const DecoderConfig& config,
                    std::span<const TokenId> prompt) {
  config.Validate();
  if (trie.empty()) throw Error("empty_trie", "cannot decode over an empty trie");

  DecodeResult result;
  DecoderState state;
  std::vector<TokenId> prefix(prompt.begin(), prompt.end());
  std::vector<ServiceId> order;
  bool finished = false;
  for (int i = 0; i < config.max_tokens; ++i) {
    const std::vector<double> logits = provider.Logits(prefix);
    CheckLogits(logits, provider.vocab_size());
    const std::size_t used_before = state.used.size();
    StepResult r = Step(state, logits, trie, special, config);
    if (r.state.used.size() > used_before) {
      order.push_back(*trie.node(state.node).terminal_sid);
    }
    result.trace.steps.push_back(std::move(r.trace));
    state = std::move(r.state);
    prefix.push_back(r.token);
    if (r.token == special.eos) {
      finished = true;
      break;
    }
  }

  result.tokens = state.emitted;
  result.sids = std::move(order);
  if (!finished) {
    result.truncated = true;
    auto last_sep = std::find(result.tokens.rbegin(), result.tokens.rend(), special.sep);
    result.tokens.erase(last_sep.base(), result.tokens.end());
  }
  return result;
}

DecodeResult DecodeUnconstrained(const LogitProvider& provider, SpecialTokens special,
                                 const DecoderConfig& config,
                                 std::span<const TokenId> prompt) {
  config.Validate();
  DecodeResult result;
  result.truncated = true;
  std::vector<TokenId> prefix(prompt.begin(), prompt.end());
  for (int i = 0; i < config.max_tokens; ++i) {
    const std::vector<double> logits = provider.Logits(prefix);
    CheckLogits(logits, provider.vocab_size());
    const std::vector<double> raw(logits.begin(), logits.end());
    const TokenId w = Argmax(raw);
    const double lse = LogSumExp(raw);
    std::vector<double> logp(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) logp[j] = raw[j] - lse;
    TraceStep tr;
    tr.step = i;
    tr.raw_token = tr.fa_token = w;
    tr.raw_logp_raw_token = tr.raw_logp_fa_token = logp[w];
    tr.raw_entropy = tr.masked_entropy = EntropyFromLog(logp);
    tr.allowed_size = raw.size();
    result.trace.steps.push_back(std::move(tr));
    result.tokens.push_back(w);
    prefix.push_back(w);
    if (w == special.eos) {
      result.truncated = false;
      break;
    }
  }
  return result;
}

std::vector<ServiceId> ParseServiceSequence(std::span<const TokenId> tokens,
                                            const TokenTrie& trie, SpecialTokens special) {
  std::vector<ServiceId> sids;
  std::set<ServiceId> seen;
  std::vector<TokenId> span;
  auto flush = [&] {
    if (auto node = trie.Walk(span)) {
      const auto& terminal = trie.node(*node).terminal_sid;
      if (!span.empty() && terminal && seen.insert(*terminal).second) sids.push_back(*terminal);
    }
    span.clear();
  };
  for (TokenId t : tokens) {
    if (t == special.eos) break;
    if (t == special.sep) {
      flush();
    } else {
      span.push_back(t);
    }
  }
  flush();
  return sids;
}

}  // namespace svcrec
