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

// Trie-guided finite-automaton constrained greedy decoding with service-level
// deduplication.
//
// The automaton is implicit: a state is the current trie node (the root being
// the START phase) together with the set of services already emitted. Tokens
// outside the allowed set get zero mass; the decoder then takes the argmax of
// what remains.

#ifndef SVCREC_DECODER_H_
#define SVCREC_DECODER_H_

#include <cstddef>
#include <set>
#include <span>
#include <vector>

#include "svcrec/analysis.h"
#include "svcrec/error.h"
#include "svcrec/lexicon.h"

namespace svcrec {

struct DecoderConfig {
  int max_tokens = 64;
  // Affects the recorded masked distribution only, never the chosen token.
  bool renormalize_masked = true;
  bool record_distributions = false;

  void Validate() const;
};

struct SpecialTokens {
  TokenId sep = 0;
  TokenId eos = 1;
};

// Scores for the next token given a token prefix.
class LogitProvider {
 public:
  virtual ~LogitProvider() = default;
  virtual std::size_t vocab_size() const = 0;
  virtual std::vector<double> Logits(std::span<const TokenId> prefix) const = 0;
};

enum class Phase { kStart, kInService };

struct DecoderState {
  TokenTrie::NodeId node = TokenTrie::kRoot;
  std::set<ServiceId> used;
  std::vector<TokenId> emitted;

  Phase phase() const { return node == TokenTrie::kRoot ? Phase::kStart : Phase::kInService; }
};

// Sorted allowed tokens at `node` given the used set.
std::vector<TokenId> AllowedSet(const TokenTrie& trie, TokenTrie::NodeId node,
                                const std::set<ServiceId>& used, SpecialTokens special);

struct StepResult {
  TokenId token = -1;
  DecoderState state;
  TraceStep trace;
};

// One masked argmax step; ties go to the lowest token id.
StepResult Step(const DecoderState& state, std::span<const double> logits,
                const TokenTrie& trie, SpecialTokens special, const DecoderConfig& config);

struct DecodeResult {
  std::vector<TokenId> tokens;
  std::vector<ServiceId> sids;
  DecodeTrace trace;
  bool truncated = false;
};

// Runs Step until eos or config.max_tokens. The provider sees prompt followed
// by everything emitted so far. On truncation the trailing partial service is
// dropped from `tokens` and never enters `sids`.
DecodeResult Decode(const LogitProvider& provider, const TokenTrie& trie,
                    SpecialTokens special, const DecoderConfig& config,
                    std::span<const TokenId> prompt);

// Plain greedy decoding without any mask, for comparison. `sids` is left
// empty; `truncated` is set when eos was never produced.
DecodeResult DecodeUnconstrained(const LogitProvider& provider, SpecialTokens special,
                                 const DecoderConfig& config,
                                 std::span<const TokenId> prompt);

// Service ids of a sequence accepted by IsValidServiceSequence, in order.
std::vector<ServiceId> ParseServiceSequence(std::span<const TokenId> tokens,
                                            const TokenTrie& trie, SpecialTokens special);

}  // namespace svcrec

#endif  // SVCREC_DECODER_H_
