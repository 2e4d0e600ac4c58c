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

// Small deterministic autoregressive network whose MLP output projections act
// as linear key-value memories.
//
// Every position starts from its token embedding. Each block computes a key
// a_t = tanh(W_in x_t) and a value m_t = W_proj a_t, then adds to the
// residual stream both m_t and the mean of the values at earlier positions:
//
//   x'_t = x_t + m_t + (1/t) * sum_{j<t} m_j        (second term absent at t=0)
//
// The causal mean is the only cross-position path, so a value written at one
// position reaches every later prediction. A reserved begin marker is always
// prepended to the prefix.

#ifndef SVCREC_MODEL_H_
#define SVCREC_MODEL_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svcrec/decoder.h"
#include "svcrec/error.h"

namespace svcrec {

struct ModelShape {
  int vocab_size = 0;
  int d_model = 32;
  int d_hidden = 64;
  int num_layers = 2;

  void Validate() const;
  bool operator==(const ModelShape&) const = default;
};

struct Block {
  Eigen::MatrixXd w_in;    // d_hidden x d_model
  Eigen::MatrixXd w_proj;  // d_model x d_hidden
};

class ToyLM {
 public:
  // Seeded uniform initialization in [-0.1, 0.1]. `editable_layer` < 0 picks
  // the last block.
  ToyLM(ModelShape shape, std::uint64_t seed, TokenId bos_id, int editable_layer = -1);

  static ToyLM Zeros(ModelShape shape, TokenId bos_id);

  const ModelShape& shape() const { return shape_; }
  std::uint64_t seed() const { return seed_; }
  TokenId bos_id() const { return bos_id_; }
  int editable_layer() const { return editable_layer_; }
  void set_editable_layer(int layer);

  const Eigen::MatrixXd& embedding() const { return embedding_; }  // vocab x d
  const Eigen::MatrixXd& lm_head() const { return lm_head_; }      // vocab x d
  const std::vector<Block>& blocks() const { return blocks_; }
  Eigen::MatrixXd& mutable_embedding() { return embedding_; }
  Eigen::MatrixXd& mutable_lm_head() { return lm_head_; }
  Block& mutable_block(int layer) { return blocks_.at(layer); }

  // Unnormalized next-token scores after `prefix`.
  Eigen::VectorXd Forward(std::span<const TokenId> prefix) const;

  // Key feeding W_proj of `layer` at the final prefix position.
  Eigen::VectorXd HiddenKey(std::span<const TokenId> prefix, int layer) const;

  bool operator==(const ToyLM& other) const;

 private:
  ModelShape shape_;
  std::uint64_t seed_ = 0;
  TokenId bos_id_ = 0;
  int editable_layer_ = 0;
  Eigen::MatrixXd embedding_;
  std::vector<Block> blocks_;
  Eigen::MatrixXd lm_head_;
};

// Changes one block's values during a forward pass. Either the value at
// `position` is replaced by `value`, or `w_proj` stands in for the block's
// projection at every position (or both).
struct Intervention {
  int layer = -1;
  std::optional<int> position;
  Eigen::VectorXd value;
  const Eigen::MatrixXd* w_proj = nullptr;
};

// Row t of each matrix belongs to sequence position t (position 0 is the begin
// marker).
struct ForwardCache {
  std::vector<TokenId> sequence;
  std::vector<Eigen::MatrixXd> inputs;  // num_layers + 1 entries, T x d
  std::vector<Eigen::MatrixXd> keys;    // num_layers entries, T x h
  std::vector<Eigen::MatrixXd> values;  // num_layers entries, T x d
  Eigen::MatrixXd logits;               // T x vocab
};

ForwardCache RunForward(const ToyLM& model, std::span<const TokenId> prefix,
                        const Intervention* intervention = nullptr);

// Runs blocks `layer`.. and the head on precomputed block inputs.
Eigen::MatrixXd ForwardFromLayer(const ToyLM& model, const Eigen::MatrixXd& inputs, int layer);

struct ModelGradients {
  Eigen::MatrixXd embedding;
  std::vector<Block> blocks;
  Eigen::MatrixXd lm_head;

  static ModelGradients ZerosLike(const ToyLM& model);
  void Add(const ModelGradients& other);
};

// Backpropagates `d_logits` (T x vocab). Parameter gradients are accumulated
// into `grads` when given. When `d_values` is given it receives dLoss/dm_t for
// `capture_layer`; without `grads` the pass stops at that layer.
void Backward(const ToyLM& model, const ForwardCache& cache, const Eigen::MatrixXd& d_logits,
              ModelGradients* grads, int capture_layer = -1,
              Eigen::MatrixXd* d_values = nullptr, const Intervention* intervention = nullptr);

Eigen::VectorXd Softmax(const Eigen::VectorXd& logits);
Eigen::VectorXd LogSoftmax(const Eigen::VectorXd& logits);

struct TrainExample {
  std::vector<TokenId> prompt;
  std::vector<TokenId> target;
};

struct TrainCorpus {
  int vocab_size = 0;
  TokenId bos_id = 0;
  std::vector<TrainExample> examples;
};

// Mean next-token cross-entropy over target tokens. Accumulates gradients into
// `grads` when given.
double CorpusLoss(const ToyLM& model, const TrainCorpus& corpus, ModelGradients* grads);

struct TrainHyper {
  int d_model = 32;
  int d_hidden = 64;
  int num_layers = 2;
  double learning_rate = 1e-2;
  int steps = 1500;
  int eval_every = 50;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> checkpoint_losses;
  int rollbacks = 0;
  double final_loss = 0.0;
};

// Full-batch Adam. A checkpoint whose loss exceeds the previous one is rolled
// back and the step size halved, so recorded losses never increase.
ToyLM TrainToy(const TrainCorpus& corpus, const TrainHyper& hyper, TrainReport* report = nullptr);

class ModelLogitProvider : public LogitProvider {
 public:
  explicit ModelLogitProvider(const ToyLM& model) : model_(model) {}
  std::size_t vocab_size() const override { return model_.shape().vocab_size; }
  std::vector<double> Logits(std::span<const TokenId> prefix) const override;

 private:
  const ToyLM& model_;
};

std::string SerializeModel(const ToyLM& model);
ToyLM DeserializeModel(const std::string& text);

}  // namespace svcrec

#endif  // SVCREC_MODEL_H_
