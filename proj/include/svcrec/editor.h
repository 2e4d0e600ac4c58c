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

// Locate-then-edit knowledge updating of one MLP projection.
//
// The projection W (d_model x d_hidden) of the edited block is treated as a
// linear key-value memory. An edit averages the key k* of the requirement's
// final token over several sampled prefixes, optimizes the value v* that makes
// the model produce the target service, and writes the pair back with the
// minimal-disturbance rank-one update
//
//   W' = W + (v* - W k*) (C^-1 k*)^T / ((C^-1 k*)^T k*)
//
// where C is the (regularized) second-moment matrix of keys.

#ifndef SVCREC_EDITOR_H_
#define SVCREC_EDITOR_H_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svcrec/decoder.h"
#include "svcrec/lexicon.h"
#include "svcrec/model.h"

namespace svcrec {

struct EditRequest {
  std::string query;
  std::string context_prompt;
  ServiceId target = 0;
  // x_1..x_N; an empty string means the bare query.
  std::vector<std::string> prefixes;
  // Unrelated prompts whose next-token distribution the edit should preserve.
  std::vector<std::string> holdout;

  void Validate(const Lexicon& lexicon) const;
};

struct EditConfig {
  int num_grad_steps = 40;
  double v_lr = 1e-2;
  double weight_decay = 1e-3;
  double clamp_factor = 4.0;
  double kl_factor = 0.06;
  // Optimization stops once the target loss drops below this value.
  double early_stop_loss = 5e-2;
  int layer = -1;  // < 0: the model's editable layer

  void Validate() const;
  int ResolveLayer(const ToyLM& model) const;
};

struct KeyCovariance {
  Eigen::MatrixXd c;  // d_hidden x d_hidden, regularization included
  std::size_t sample_count = 0;
  double epsilon = 0.0;
};

// 1e-4 * trace(C) / dim.
double DefaultRegularization(const Eigen::MatrixXd& c);

// Draws `count` word windows of [min_words, max_words] words from `texts`.
std::vector<std::string> SamplePrefixes(std::span<const std::string> texts, int count,
                                        int min_words, int max_words, std::mt19937_64& rng);

// The usual prefix set: the bare query plus `count - 1` sampled windows of
// 5-8 words.
std::vector<std::string> DefaultPrefixes(std::span<const std::string> texts, int count,
                                         std::mt19937_64& rng);

// Mean over prefixes x_j of the `layer` key at the last token of x_j + query.
Eigen::VectorXd ComputeKey(const ToyLM& model, const Tokenizer& tokenizer,
                           const EditRequest& request, int layer);

// sum_i k_i k_i^T over last-token keys of `texts`, plus epsilon * I. Without
// an explicit epsilon DefaultRegularization is used. Throws if the result is
// not positive definite.
KeyCovariance EstimateCovariance(const ToyLM& model, const Tokenizer& tokenizer,
                                 std::span<const std::string> texts, int layer,
                                 std::optional<double> epsilon = std::nullopt);

// Same over the keys at every position of each token sequence.
KeyCovariance EstimateCovariance(const ToyLM& model,
                                 std::span<const std::vector<TokenId>> sequences, int layer,
                                 std::optional<double> epsilon = std::nullopt);

Eigen::MatrixXd RankOneUpdate(const Eigen::MatrixXd& w, const KeyCovariance& cov,
                              const Eigen::VectorXd& key, const Eigen::VectorXd& value);

// Objective over the candidate value v of an edit.
//
//   L(v) = L1(v) + kl_factor * L2(v) + decay(v)
//
// L1 averages, over the prefixed prompts, the negative log-likelihood of the
// target tokens followed by the separator, with the edited block's value at
// the last query token replaced by v. L2 averages KL(P'(.|q') || P(.|q')) at
// the final position of each holdout prompt, where P' is the model after the
// rank-one update that maps k* to v. decay is
// weight_decay * |v - v0|^2 / |v0|^2 with v0 = W k*.
class ValueObjective {
 public:
  struct Terms {
    double total = 0.0;
    double target_loss = 0.0;
    double kl = 0.0;
    double decay = 0.0;
    Eigen::VectorXd gradient;
  };

  ValueObjective(const ToyLM& model, const Lexicon& lexicon, const EditRequest& request,
                 const EditConfig& config, const Eigen::VectorXd& key, const KeyCovariance& cov);

  Terms Evaluate(const Eigen::VectorXd& v) const;
  const Eigen::VectorXd& initial_value() const { return v0_; }
  int layer() const { return layer_; }

 private:
  struct Prompt {
    std::vector<TokenId> input;
    int subject_position = 0;
    int first_prediction = 0;
    std::vector<TokenId> expected;
  };
  struct Holdout {
    std::vector<TokenId> input;
    Eigen::VectorXd reference_logp;
  };

  const ToyLM& model_;
  EditConfig config_;
  int layer_ = 0;
  Eigen::VectorXd key_;
  Eigen::VectorXd v0_;
  Eigen::VectorXd direction_;  // C^-1 k* / (k*^T C^-1 k*)
  std::vector<Prompt> prompts_;
  std::vector<Holdout> holdouts_;
};

struct ValueTrace {
  std::vector<double> losses;
  std::vector<double> target_losses;
};

// Adam on ValueObjective for config.num_grad_steps steps. After each step
// |v - v0| is clamped to clamp_factor * |v0|.
Eigen::VectorXd OptimizeValue(const ToyLM& model, const Lexicon& lexicon,
                              const EditRequest& request, const EditConfig& config,
                              const Eigen::VectorXd& key, const KeyCovariance& cov,
                              ValueTrace* trace = nullptr);

struct EditReport {
  ServiceId target = 0;
  bool efficacy = false;
  std::vector<ServiceId> decoded;
  // Share of holdout prompts whose unconstrained argmax is unchanged.
  double locality = 1.0;
  double constraint_residual = 0.0;
  // |W' K_s - W K_s|_F over the holdout prompts' last-token keys.
  double drift = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int steps = 0;
};

struct EditOutcome {
  ToyLM model;
  EditReport report;
};

// compute key -> optimize value -> rank-one update of the edited block. The
// input model is left untouched. Efficacy decodes the query over `trie`.
EditOutcome ApplyEdit(const ToyLM& model, const Lexicon& lexicon, const TokenTrie& trie,
                      const EditRequest& request, const EditConfig& config,
                      const KeyCovariance& cov, const DecoderConfig& decoder = {});

}  // namespace svcrec

#endif  // SVCREC_EDITOR_H_
