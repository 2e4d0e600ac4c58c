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

#include "svcrec/model.h"

#include <cmath>
#include <random>
#include <utility>

#include "json.hpp"

namespace svcrec {
namespace {

constexpr int kModelFormatVersion = 1;

double UniformSymmetric(std::mt19937_64& rng, double scale) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * u - 1.0) * scale;
}

Eigen::MatrixXd RandomMatrix(int rows, int cols, std::mt19937_64& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = UniformSymmetric(rng, 0.1);
  return m;
}

// Adds the causal mean of earlier rows of `values` to `out`.
void AddCausalMean(const Eigen::MatrixXd& values, Eigen::MatrixXd& out) {
  Eigen::RowVectorXd running = Eigen::RowVectorXd::Zero(values.cols());
  for (Eigen::Index t = 0; t < values.rows(); ++t) {
    if (t > 0) out.row(t) += running / static_cast<double>(t);
    running += values.row(t);
  }
}

// Transposed action of AddCausalMean: d_values_j += sum_{t>j} d_out_t / t.
void AddCausalMeanAdjoint(const Eigen::MatrixXd& d_out, Eigen::MatrixXd& d_values) {
  Eigen::RowVectorXd suffix = Eigen::RowVectorXd::Zero(d_out.cols());
  for (Eigen::Index t = d_out.rows() - 1; t >= 0; --t) {
    d_values.row(t) += suffix;
    if (t > 0) suffix += d_out.row(t) / static_cast<double>(t);
  }
}

const Eigen::MatrixXd& ProjFor(const ToyLM& model, int layer, const Intervention* iv) {
  if (iv && iv->layer == layer && iv->w_proj) return *iv->w_proj;
  return model.blocks()[layer].w_proj;
}

// One block on `x`; fills key/value matrices and returns the block output.
Eigen::MatrixXd BlockForward(const ToyLM& model, int layer, const Eigen::MatrixXd& x,
                             const Intervention* iv, Eigen::MatrixXd* keys_out,
                             Eigen::MatrixXd* values_out) {
  const Block& b = model.blocks()[layer];
  Eigen::MatrixXd keys = (x * b.w_in.transpose()).array().tanh().matrix();
  Eigen::MatrixXd values = keys * ProjFor(model, layer, iv).transpose();
  if (iv && iv->layer == layer && iv->position) {
    const int p = *iv->position;
    if (p < 0 || p >= values.rows()) throw Error("bad_position", "intervention position out of range");
    if (iv->value.size() != values.cols()) throw Error("bad_value", "intervention value has wrong size");
    values.row(p) = iv->value.transpose();
  }
  Eigen::MatrixXd out = x + values;
  AddCausalMean(values, out);
  if (keys_out) *keys_out = std::move(keys);
  if (values_out) *values_out = std::move(values);
  return out;
}

void CheckTokens(const ToyLM& model, std::span<const TokenId> prefix) {
  for (TokenId t : prefix) {
    if (t < 0 || t >= model.shape().vocab_size) {
      throw Error("bad_token", "token id " + std::to_string(t) + " outside the model vocabulary");
    }
  }
}

std::vector<Eigen::MatrixXd*> Params(ToyLM& model) {
  std::vector<Eigen::MatrixXd*> out{&model.mutable_embedding()};
  for (int l = 0; l < model.shape().num_layers; ++l) {
    out.push_back(&model.mutable_block(l).w_in);
    out.push_back(&model.mutable_block(l).w_proj);
  }
  out.push_back(&model.mutable_lm_head());
  return out;
}

std::vector<Eigen::MatrixXd*> Params(ModelGradients& g) {
  std::vector<Eigen::MatrixXd*> out{&g.embedding};
  for (Block& b : g.blocks) {
    out.push_back(&b.w_in);
    out.push_back(&b.w_proj);
  }
  out.push_back(&g.lm_head);
  return out;
}

}  // namespace

void ModelShape::Validate() const {
  if (vocab_size < 1) throw Error("bad_shape", "vocab_size must be positive");
  if (d_model < 2 || d_hidden < 2) throw Error("bad_shape", "d_model and d_hidden must be >= 2");
  if (num_layers < 1) throw Error("bad_shape", "num_layers must be positive");
}

ToyLM::ToyLM(ModelShape shape, std::uint64_t seed, TokenId bos_id, int editable_layer)
    : shape_(shape), seed_(seed), bos_id_(bos_id) {
  shape_.Validate();
  if (bos_id < 0 || bos_id >= shape_.vocab_size) throw Error("bad_token", "bos id out of range");
  std::mt19937_64 rng(seed);
  embedding_ = RandomMatrix(shape_.vocab_size, shape_.d_model, rng);
  for (int l = 0; l < shape_.num_layers; ++l) {
    Block b;
    b.w_in = RandomMatrix(shape_.d_hidden, shape_.d_model, rng);
    b.w_proj = RandomMatrix(shape_.d_model, shape_.d_hidden, rng);
    blocks_.push_back(std::move(b));
  }
  lm_head_ = RandomMatrix(shape_.vocab_size, shape_.d_model, rng);
  set_editable_layer(editable_layer < 0 ? shape_.num_layers - 1 : editable_layer);
}

ToyLM ToyLM::Zeros(ModelShape shape, TokenId bos_id) {
  ToyLM m(shape, 0, bos_id);
  m.embedding_.setZero();
  for (Block& b : m.blocks_) {
    b.w_in.setZero();
    b.w_proj.setZero();
  }
  m.lm_head_.setZero();
  return m;
}

void ToyLM::set_editable_layer(int layer) {
  if (layer < 0 || layer >= shape_.num_layers) throw Error("bad_layer", "editable layer out of range");
  editable_layer_ = layer;
}

Eigen::VectorXd ToyLM::Forward(std::span<const TokenId> prefix) const {
  const ForwardCache cache = RunForward(*this, prefix);
  return cache.logits.row(cache.logits.rows() - 1).transpose();
}

Eigen::VectorXd ToyLM::HiddenKey(std::span<const TokenId> prefix, int layer) const {
  if (layer < 0 || layer >= shape_.num_layers) {
    throw Error("bad_layer", "layer " + std::to_string(layer) + " out of range");
  }
  const ForwardCache cache = RunForward(*this, prefix);
  const Eigen::MatrixXd& keys = cache.keys[layer];
  return keys.row(keys.rows() - 1).transpose();
}

bool ToyLM::operator==(const ToyLM& other) const {
  if (!(shape_ == other.shape_) || seed_ != other.seed_ || bos_id_ != other.bos_id_ ||
      editable_layer_ != other.editable_layer_ || embedding_ != other.embedding_ ||
      lm_head_ != other.lm_head_) {
    return false;
  }
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    if (blocks_[l].w_in != other.blocks_[l].w_in || blocks_[l].w_proj != other.blocks_[l].w_proj) {
      return false;
    }
  }
  return true;
}

ForwardCache RunForward(const ToyLM& model, std::span<const TokenId> prefix,
                        const Intervention* intervention) {
  CheckTokens(model, prefix);
  ForwardCache cache;
  cache.sequence.reserve(prefix.size() + 1);
  cache.sequence.push_back(model.bos_id());
  cache.sequence.insert(cache.sequence.end(), prefix.begin(), prefix.end());
  const auto T = static_cast<Eigen::Index>(cache.sequence.size());
  const int L = model.shape().num_layers;

  Eigen::MatrixXd x(T, model.shape().d_model);
  for (Eigen::Index t = 0; t < T; ++t) x.row(t) = model.embedding().row(cache.sequence[t]);
  cache.inputs.reserve(L + 1);
  cache.keys.resize(L);
  cache.values.resize(L);
  cache.inputs.push_back(x);
  for (int l = 0; l < L; ++l) {
    cache.inputs.push_back(
        BlockForward(model, l, cache.inputs.back(), intervention, &cache.keys[l], &cache.values[l]));
  }
  cache.logits = cache.inputs.back() * model.lm_head().transpose();
  return cache;
}

Eigen::MatrixXd ForwardFromLayer(const ToyLM& model, const Eigen::MatrixXd& inputs, int layer) {
  if (layer < 0 || layer > model.shape().num_layers) throw Error("bad_layer", "layer out of range");
  Eigen::MatrixXd x = inputs;
  for (int l = layer; l < model.shape().num_layers; ++l) {
    x = BlockForward(model, l, x, nullptr, nullptr, nullptr);
  }
  return x * model.lm_head().transpose();
}

ModelGradients ModelGradients::ZerosLike(const ToyLM& model) {
  ModelGradients g;
  g.embedding = Eigen::MatrixXd::Zero(model.embedding().rows(), model.embedding().cols());
  for (const Block& b : model.blocks()) {
    g.blocks.push_back({Eigen::MatrixXd::Zero(b.w_in.rows(), b.w_in.cols()),
                        Eigen::MatrixXd::Zero(b.w_proj.rows(), b.w_proj.cols())});
  }
  g.lm_head = Eigen::MatrixXd::Zero(model.lm_head().rows(), model.lm_head().cols());
  return g;
}

void ModelGradients::Add(const ModelGradients& other) {
  embedding += other.embedding;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    blocks[l].w_in += other.blocks[l].w_in;
    blocks[l].w_proj += other.blocks[l].w_proj;
  }
  lm_head += other.lm_head;
}

void Backward(const ToyLM& model, const ForwardCache& cache, const Eigen::MatrixXd& d_logits,
              ModelGradients* grads, int capture_layer, Eigen::MatrixXd* d_values,
              const Intervention* intervention) {
  const int L = model.shape().num_layers;
  if (d_values && (capture_layer < 0 || capture_layer >= L)) {
    throw Error("bad_layer", "capture layer out of range");
  }
  if (grads) grads->lm_head.noalias() += d_logits.transpose() * cache.inputs[L];
  Eigen::MatrixXd dx = d_logits * model.lm_head();
  const int lowest = grads ? 0 : (d_values ? capture_layer : L);
  for (int l = L - 1; l >= lowest; --l) {
    // dx holds dLoss/d(block output); the residual passes it straight through.
    Eigen::MatrixXd dm = dx;
    AddCausalMeanAdjoint(dx, dm);
    if (d_values && l == capture_layer) *d_values = dm;
    if (!grads && l == lowest) break;
    if (intervention && intervention->layer == l && intervention->position) {
      dm.row(*intervention->position).setZero();
    }
    const Eigen::MatrixXd& keys = cache.keys[l];
    const Eigen::MatrixXd& proj = ProjFor(model, l, intervention);
    Eigen::MatrixXd dpre = ((dm * proj).array() * (1.0 - keys.array().square())).matrix();
    if (grads) {
      grads->blocks[l].w_proj.noalias() += dm.transpose() * keys;
      grads->blocks[l].w_in.noalias() += dpre.transpose() * cache.inputs[l];
    }
    dx.noalias() += dpre * model.blocks()[l].w_in;
  }
  if (grads) {
    for (std::size_t t = 0; t < cache.sequence.size(); ++t) {
      grads->embedding.row(cache.sequence[t]) += dx.row(static_cast<Eigen::Index>(t));
    }
  }
}

Eigen::VectorXd LogSoftmax(const Eigen::VectorXd& logits) {
  const double hi = logits.maxCoeff();
  const double lse = hi + std::log((logits.array() - hi).exp().sum());
  return (logits.array() - lse).matrix();
}

Eigen::VectorXd Softmax(const Eigen::VectorXd& logits) {
  const Eigen::ArrayXd e = (logits.array() - logits.maxCoeff()).exp();
  return (e / e.sum()).matrix();
}

double CorpusLoss(const ToyLM& model, const TrainCorpus& corpus, ModelGradients* grads) {
  std::size_t total = 0;
  for (const TrainExample& ex : corpus.examples) total += ex.target.size();
  if (total == 0) throw Error("empty_corpus", "training corpus has no target tokens");
  const double scale = 1.0 / static_cast<double>(total);
  double loss = 0.0;
  for (const TrainExample& ex : corpus.examples) {
    if (ex.target.empty()) continue;
    std::vector<TokenId> seq = ex.prompt;
    seq.insert(seq.end(), ex.target.begin(), ex.target.end() - 1);
    const ForwardCache cache = RunForward(model, seq);
    Eigen::MatrixXd d_logits;
    if (grads) d_logits = Eigen::MatrixXd::Zero(cache.logits.rows(), cache.logits.cols());
    const auto first = static_cast<Eigen::Index>(ex.prompt.size());
    for (std::size_t i = 0; i < ex.target.size(); ++i) {
      const Eigen::Index pos = first + static_cast<Eigen::Index>(i);
      const Eigen::VectorXd logp = LogSoftmax(cache.logits.row(pos).transpose());
      loss -= logp(ex.target[i]) * scale;
      if (grads) {
        d_logits.row(pos) = (logp.array().exp() * scale).matrix().transpose();
        d_logits(pos, ex.target[i]) -= scale;
      }
    }
    if (grads) Backward(model, cache, d_logits, grads);
  }
  return loss;
}

ToyLM TrainToy(const TrainCorpus& corpus, const TrainHyper& hyper, TrainReport* report) {
  if (corpus.examples.empty()) throw Error("empty_corpus", "training corpus is empty");
  if (hyper.steps < 0 || hyper.eval_every < 1 || !(hyper.learning_rate > 0.0)) {
    throw Error("bad_config", "invalid training hyperparameters");
  }
  ModelShape shape{corpus.vocab_size, hyper.d_model, hyper.d_hidden, hyper.num_layers};
  ToyLM model(shape, hyper.seed, corpus.bos_id);

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ModelGradients m = ModelGradients::ZerosLike(model);
  ModelGradients v = ModelGradients::ZerosLike(model);
  double lr = hyper.learning_rate;
  int t = 0;

  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};
  double best = CorpusLoss(model, corpus, nullptr);
  rep.checkpoint_losses.push_back(best);
  ToyLM checkpoint = model;

  for (int step = 1; step <= hyper.steps; ++step) {
    ModelGradients g = ModelGradients::ZerosLike(model);
    const double loss = CorpusLoss(model, corpus, &g);
    if (!std::isfinite(loss)) {
      throw Error("diverged", "training loss became non-finite at step " + std::to_string(step));
    }
    ++t;
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    const auto params = Params(model);
    const auto grads = Params(g);
    const auto first = Params(m);
    const auto second = Params(v);
    for (std::size_t i = 0; i < params.size(); ++i) {
      *first[i] = kBeta1 * *first[i] + (1.0 - kBeta1) * *grads[i];
      *second[i] = kBeta2 * *second[i] + (1.0 - kBeta2) * grads[i]->cwiseProduct(*grads[i]);
      params[i]->array() -=
          lr * (first[i]->array() / c1) / ((second[i]->array() / c2).sqrt() + kEps);
    }

    if (step % hyper.eval_every == 0 || step == hyper.steps) {
      const double eval = CorpusLoss(model, corpus, nullptr);
      if (!std::isfinite(eval)) {
        throw Error("diverged", "evaluation loss became non-finite at step " + std::to_string(step));
      }
      if (eval > best) {
        model = checkpoint;
        lr *= 0.5;
        m = ModelGradients::ZerosLike(model);
        v = ModelGradients::ZerosLike(model);
        t = 0;
        ++rep.rollbacks;
      } else {
        best = eval;
        checkpoint = model;
        rep.checkpoint_losses.push_back(eval);
      }
    }
  }
  rep.final_loss = best;
  return checkpoint;
}

std::vector<double> ModelLogitProvider::Logits(std::span<const TokenId> prefix) const {
  const Eigen::VectorXd z = model_.Forward(prefix);
  return std::vector<double>(z.data(), z.data() + z.size());
}

namespace {

nlohmann::json MatrixToJson(const Eigen::MatrixXd& m) {
  std::vector<double> flat;
  flat.reserve(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Eigen::MatrixXd MatrixFromJson(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  if (j.at("rows").get<Eigen::Index>() != rows || j.at("cols").get<Eigen::Index>() != cols) {
    throw Error("schema", "matrix shape does not match the model shape");
  }
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw Error("schema", "matrix data has the wrong length");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[r * cols + c];
  return m;
}

}  // namespace

std::string SerializeModel(const ToyLM& model) {
  const ModelShape& s = model.shape();
  nlohmann::json j;
  j["format"] = "svcrec-toylm";
  j["version"] = kModelFormatVersion;
  j["shape"] = {{"vocab_size", s.vocab_size},
                {"d_model", s.d_model},
                {"d_hidden", s.d_hidden},
                {"num_layers", s.num_layers}};
  j["seed"] = model.seed();
  j["bos_id"] = model.bos_id();
  j["editable_layer"] = model.editable_layer();
  j["embedding"] = MatrixToJson(model.embedding());
  j["blocks"] = nlohmann::json::array();
  for (const Block& b : model.blocks()) {
    j["blocks"].push_back({{"w_in", MatrixToJson(b.w_in)}, {"w_proj", MatrixToJson(b.w_proj)}});
  }
  j["lm_head"] = MatrixToJson(model.lm_head());
  return j.dump();
}

ToyLM DeserializeModel(const std::string& text) {
  try {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format") != "svcrec-toylm") throw Error("schema", "not a model file");
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error("schema", "unsupported model file version");
    }
    const auto& js = j.at("shape");
    ModelShape s{js.at("vocab_size").get<int>(), js.at("d_model").get<int>(),
                 js.at("d_hidden").get<int>(), js.at("num_layers").get<int>()};
    ToyLM model(s, j.at("seed").get<std::uint64_t>(), j.at("bos_id").get<TokenId>(),
                j.at("editable_layer").get<int>());
    model.mutable_embedding() = MatrixFromJson(j.at("embedding"), s.vocab_size, s.d_model);
    const auto& blocks = j.at("blocks");
    if (static_cast<int>(blocks.size()) != s.num_layers) throw Error("schema", "block count mismatch");
    for (int l = 0; l < s.num_layers; ++l) {
      model.mutable_block(l).w_in = MatrixFromJson(blocks[l].at("w_in"), s.d_hidden, s.d_model);
      model.mutable_block(l).w_proj = MatrixFromJson(blocks[l].at("w_proj"), s.d_model, s.d_hidden);
    }
    model.mutable_lm_head() = MatrixFromJson(j.at("lm_head"), s.vocab_size, s.d_model);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error("schema", std::string("malformed model file: ") + e.what());
  }
}

}  // namespace svcrec
