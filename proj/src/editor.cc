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

#include "svcrec/editor.h"

#include <algorithm>
#include <cmath>

namespace svcrec {
namespace {

std::vector<TokenId> EncodeOrThrow(const Tokenizer& tokenizer, const std::string& text) {
  std::vector<TokenId> ids = tokenizer.EncodeText(text);
  if (ids.empty()) throw Error("empty_prompt", "prompt '" + text + "' encodes to no tokens");
  return ids;
}

std::vector<TokenId> Concat(std::vector<TokenId> a, const std::vector<TokenId>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Eigen::VectorXd LastRow(const Eigen::MatrixXd& m) { return m.row(m.rows() - 1).transpose(); }

std::vector<TokenId> EditPrompt(const Tokenizer& tokenizer, const EditRequest& request) {
  std::vector<TokenId> prompt = EncodeOrThrow(tokenizer, request.query);
  if (!request.context_prompt.empty()) {
    prompt = Concat(std::move(prompt), tokenizer.EncodeText(request.context_prompt));
  }
  return prompt;
}

void Regularize(KeyCovariance& cov, std::optional<double> epsilon) {
  cov.epsilon = epsilon ? *epsilon : DefaultRegularization(cov.c);
  if (cov.epsilon < 0.0) throw Error("bad_config", "covariance regularization must be >= 0");
  cov.c.diagonal().array() += cov.epsilon;
  Eigen::LLT<Eigen::MatrixXd> llt(cov.c);
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0) {
    throw Error("singular_covariance",
                "key covariance is not positive definite; use a nonzero regularization epsilon");
  }
}

}  // namespace

void EditRequest::Validate(const Lexicon& lexicon) const {
  if (prefixes.empty()) throw Error("bad_request", "an edit needs at least one prefix");
  if (!lexicon.Contains(target)) {
    throw Error("unknown_sid", "edit target " + std::to_string(target) + " is not in the lexicon");
  }
  if (lexicon.tokenizer().EncodeText(query).empty()) {
    throw Error("empty_prompt", "edit query encodes to no tokens");
  }
}

void EditConfig::Validate() const {
  if (num_grad_steps < 0 || !(v_lr > 0.0) || weight_decay < 0.0 || !(clamp_factor > 0.0) ||
      kl_factor < 0.0 || early_stop_loss < 0.0) {
    throw Error("bad_config", "invalid edit hyperparameters");
  }
}

int EditConfig::ResolveLayer(const ToyLM& model) const {
  const int l = layer < 0 ? model.editable_layer() : layer;
  if (l >= model.shape().num_layers) throw Error("bad_layer", "edit layer out of range");
  return l;
}

double DefaultRegularization(const Eigen::MatrixXd& c) {
  return 1e-4 * c.trace() / static_cast<double>(c.rows());
}

std::vector<std::string> SamplePrefixes(std::span<const std::string> texts, int count,
                                        int min_words, int max_words, std::mt19937_64& rng) {
  if (min_words < 1 || max_words < min_words) throw Error("bad_config", "bad prefix lengths");
  std::vector<std::vector<std::string>> pool;
  for (const std::string& t : texts) {
    auto words = SplitTextWords(t);
    if (!words.empty()) pool.push_back(std::move(words));
  }
  if (pool.empty()) throw Error("empty_corpus", "no text to sample prefixes from");
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) {
    const auto& words = pool[rng() % pool.size()];
    const auto span = static_cast<std::size_t>(max_words - min_words + 1);
    const std::size_t len = std::min(words.size(), min_words + rng() % span);
    const std::size_t start = rng() % (words.size() - len + 1);
    std::string prefix;
    for (std::size_t w = start; w < start + len; ++w) {
      if (!prefix.empty()) prefix += ' ';
      prefix += words[w];
    }
    out.push_back(std::move(prefix));
  }
  return out;
}

std::vector<std::string> DefaultPrefixes(std::span<const std::string> texts, int count,
                                         std::mt19937_64& rng) {
  std::vector<std::string> out{""};
  if (count > 1) {
    auto sampled = SamplePrefixes(texts, count - 1, 5, 8, rng);
    out.insert(out.end(), sampled.begin(), sampled.end());
  }
  return out;
}

Eigen::VectorXd ComputeKey(const ToyLM& model, const Tokenizer& tokenizer,
                           const EditRequest& request, int layer) {
  if (request.prefixes.empty()) throw Error("bad_request", "an edit needs at least one prefix");
  const std::vector<TokenId> subject = EncodeOrThrow(tokenizer, request.query);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.shape().d_hidden);
  for (const std::string& prefix : request.prefixes) {
    sum += model.HiddenKey(Concat(tokenizer.EncodeText(prefix), subject), layer);
  }
  return sum / static_cast<double>(request.prefixes.size());
}

KeyCovariance EstimateCovariance(const ToyLM& model, const Tokenizer& tokenizer,
                                 std::span<const std::string> texts, int layer,
                                 std::optional<double> epsilon) {
  if (texts.empty()) throw Error("empty_corpus", "covariance needs at least one text");
  const int h = model.shape().d_hidden;
  KeyCovariance cov;
  cov.c = Eigen::MatrixXd::Zero(h, h);
  for (const std::string& text : texts) {
    const Eigen::VectorXd k = model.HiddenKey(tokenizer.EncodeText(text), layer);
    cov.c.noalias() += k * k.transpose();
    ++cov.sample_count;
  }
  Regularize(cov, epsilon);
  return cov;
}

KeyCovariance EstimateCovariance(const ToyLM& model,
                                 std::span<const std::vector<TokenId>> sequences, int layer,
                                 std::optional<double> epsilon) {
  if (sequences.empty()) throw Error("empty_corpus", "covariance needs at least one sequence");
  if (layer < 0 || layer >= model.shape().num_layers) throw Error("bad_layer", "layer out of range");
  const int h = model.shape().d_hidden;
  KeyCovariance cov;
  cov.c = Eigen::MatrixXd::Zero(h, h);
  for (const std::vector<TokenId>& seq : sequences) {
    const ForwardCache cache = RunForward(model, seq);
    const Eigen::MatrixXd& keys = cache.keys[layer];
    cov.c.noalias() += keys.transpose() * keys;
    cov.sample_count += static_cast<std::size_t>(keys.rows());
  }
  Regularize(cov, epsilon);
  return cov;
}

Eigen::MatrixXd RankOneUpdate(const Eigen::MatrixXd& w, const KeyCovariance& cov,
                              const Eigen::VectorXd& key, const Eigen::VectorXd& value) {
  if (w.cols() != key.size() || w.rows() != value.size() || cov.c.rows() != key.size() ||
      cov.c.cols() != key.size()) {
    throw Error("shape_mismatch", "rank-one update operands have inconsistent shapes");
  }
  if (key.squaredNorm() == 0.0) throw Error("degenerate_key", "cannot insert a zero key");
  Eigen::LLT<Eigen::MatrixXd> llt(cov.c);
  if (llt.info() != Eigen::Success) {
    throw Error("singular_covariance", "key covariance is not positive definite");
  }
  const Eigen::VectorXd left = llt.solve(key);  // C^-1 k*
  const double denom = left.dot(key);
  if (!(denom > 0.0)) throw Error("degenerate_key", "(C^-1 k)^T k is not positive");
  const Eigen::VectorXd lambda = (value - w * key) / denom;
  return w + lambda * left.transpose();
}

ValueObjective::ValueObjective(const ToyLM& model, const Lexicon& lexicon,
                               const EditRequest& request, const EditConfig& config,
                               const Eigen::VectorXd& key, const KeyCovariance& cov)
    : model_(model), config_(config), layer_(config.ResolveLayer(model)), key_(key) {
  request.Validate(lexicon);
  config.Validate();
  const Tokenizer& tok = lexicon.tokenizer();
  const Eigen::MatrixXd& w = model.blocks()[layer_].w_proj;
  if (key.size() != w.cols()) throw Error("shape_mismatch", "key has the wrong dimension");
  v0_ = w * key;
  Eigen::LLT<Eigen::MatrixXd> llt(cov.c);
  if (llt.info() != Eigen::Success) {
    throw Error("singular_covariance", "key covariance is not positive definite");
  }
  const Eigen::VectorXd left = llt.solve(key);
  const double denom = left.dot(key);
  if (!(denom > 0.0)) throw Error("degenerate_key", "(C^-1 k)^T k is not positive");
  direction_ = left / denom;

  std::vector<TokenId> expected = lexicon.entry(request.target).tokens;
  expected.push_back(tok.sep_id());
  const std::vector<TokenId> subject = EncodeOrThrow(tok, request.query);
  const std::vector<TokenId> context = tok.EncodeText(request.context_prompt);
  for (const std::string& prefix : request.prefixes) {
    Prompt p;
    p.input = Concat(tok.EncodeText(prefix), subject);
    // Position 0 is the begin marker.
    p.subject_position = static_cast<int>(p.input.size());
    p.input = Concat(std::move(p.input), context);
    p.first_prediction = static_cast<int>(p.input.size());
    p.input.insert(p.input.end(), expected.begin(), expected.end() - 1);
    p.expected = expected;
    prompts_.push_back(std::move(p));
  }
  if (config.kl_factor > 0.0) {
    for (const std::string& text : request.holdout) {
      Holdout h;
      h.input = tok.EncodeText(text);
      h.reference_logp = LogSoftmax(model.Forward(h.input));
      holdouts_.push_back(std::move(h));
    }
  }
}

ValueObjective::Terms ValueObjective::Evaluate(const Eigen::VectorXd& v) const {
  if (v.size() != v0_.size()) throw Error("shape_mismatch", "value has the wrong dimension");
  Terms terms;
  terms.gradient = Eigen::VectorXd::Zero(v.size());

  const double inv_n = 1.0 / static_cast<double>(prompts_.size());
  for (const Prompt& p : prompts_) {
    Intervention iv;
    iv.layer = layer_;
    iv.position = p.subject_position;
    iv.value = v;
    const ForwardCache cache = RunForward(model_, p.input, &iv);
    Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(cache.logits.rows(), cache.logits.cols());
    for (std::size_t i = 0; i < p.expected.size(); ++i) {
      const Eigen::Index pos = p.first_prediction + static_cast<Eigen::Index>(i);
      const Eigen::VectorXd logp = LogSoftmax(cache.logits.row(pos).transpose());
      terms.target_loss -= logp(p.expected[i]) * inv_n;
      d_logits.row(pos) = (logp.array().exp() * inv_n).matrix().transpose();
      d_logits(pos, p.expected[i]) -= inv_n;
    }
    Eigen::MatrixXd d_values;
    Backward(model_, cache, d_logits, nullptr, layer_, &d_values, &iv);
    terms.gradient += d_values.row(p.subject_position).transpose();
  }

  if (!holdouts_.empty()) {
    const Eigen::MatrixXd& w = model_.blocks()[layer_].w_proj;
    const Eigen::MatrixXd w_edit = w + (v - v0_) * direction_.transpose();
    const double inv_h = 1.0 / static_cast<double>(holdouts_.size());
    Intervention iv;
    iv.layer = layer_;
    iv.w_proj = &w_edit;
    for (const Holdout& h : holdouts_) {
      const ForwardCache cache = RunForward(model_, h.input, &iv);
      const Eigen::VectorXd logp = LogSoftmax(LastRow(cache.logits));
      const Eigen::VectorXd p = logp.array().exp();
      const double kl = p.dot(logp - h.reference_logp);
      terms.kl += kl * inv_h;
      Eigen::MatrixXd d_logits = Eigen::MatrixXd::Zero(cache.logits.rows(), cache.logits.cols());
      d_logits.row(d_logits.rows() - 1) =
          (p.array() * (logp - h.reference_logp).array() - p.array() * kl).matrix().transpose() *
          (inv_h * config_.kl_factor);
      Eigen::MatrixXd d_values;
      Backward(model_, cache, d_logits, nullptr, layer_, &d_values, &iv);
      // m_t = W a_t + (v - v0) (direction . a_t)
      const Eigen::VectorXd weights = cache.keys[layer_] * direction_;
      terms.gradient += d_values.transpose() * weights;
    }
  }

  const double scale = v0_.squaredNorm() > 0.0 ? 1.0 / v0_.squaredNorm() : 1.0;
  const Eigen::VectorXd delta = v - v0_;
  terms.decay = config_.weight_decay * delta.squaredNorm() * scale;
  terms.gradient += 2.0 * config_.weight_decay * scale * delta;
  terms.total = terms.target_loss + config_.kl_factor * terms.kl + terms.decay;
  if (!std::isfinite(terms.total)) throw Error("diverged", "edit objective became non-finite");
  return terms;
}

Eigen::VectorXd OptimizeValue(const ToyLM& model, const Lexicon& lexicon,
                              const EditRequest& request, const EditConfig& config,
                              const Eigen::VectorXd& key, const KeyCovariance& cov,
                              ValueTrace* trace) {
  const ValueObjective objective(model, lexicon, request, config, key, cov);
  const Eigen::VectorXd& v0 = objective.initial_value();
  const double radius = config.clamp_factor * v0.norm();
  Eigen::VectorXd v = v0;
  Eigen::VectorXd m = Eigen::VectorXd::Zero(v.size());
  Eigen::VectorXd s = Eigen::VectorXd::Zero(v.size());
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  for (int step = 0; step <= config.num_grad_steps; ++step) {
    const ValueObjective::Terms terms = objective.Evaluate(v);
    if (trace) {
      trace->losses.push_back(terms.total);
      trace->target_losses.push_back(terms.target_loss);
    }
    if (step == config.num_grad_steps || terms.target_loss < config.early_stop_loss) break;
    const Eigen::VectorXd& g = terms.gradient;
    m = kBeta1 * m + (1.0 - kBeta1) * g;
    s = kBeta2 * s + (1.0 - kBeta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(kBeta1, step + 1);
    const double c2 = 1.0 - std::pow(kBeta2, step + 1);
    v.array() -= config.v_lr * (m.array() / c1) / ((s.array() / c2).sqrt() + kEps);
    const Eigen::VectorXd delta = v - v0;
    if (radius > 0.0 && delta.norm() > radius) v = v0 + delta * (radius / delta.norm());
  }
  return v;
}

EditOutcome ApplyEdit(const ToyLM& model, const Lexicon& lexicon, const TokenTrie& trie,
                      const EditRequest& request, const EditConfig& config,
                      const KeyCovariance& cov, const DecoderConfig& decoder) {
  const int layer = config.ResolveLayer(model);
  const Tokenizer& tok = lexicon.tokenizer();
  const Eigen::VectorXd key = ComputeKey(model, tok, request, layer);
  ValueTrace trace;
  const Eigen::VectorXd value = OptimizeValue(model, lexicon, request, config, key, cov, &trace);
  const Eigen::MatrixXd& w = model.blocks()[layer].w_proj;
  const Eigen::MatrixXd w_edit = RankOneUpdate(w, cov, key, value);

  EditOutcome out{model, {}};
  out.model.mutable_block(layer).w_proj = w_edit;
  EditReport& rep = out.report;
  rep.target = request.target;
  rep.constraint_residual = (w_edit * key - value).norm();
  rep.initial_loss = trace.target_losses.front();
  rep.final_loss = trace.target_losses.back();
  rep.steps = static_cast<int>(trace.losses.size()) - 1;

  const ModelLogitProvider provider(out.model);
  const DecodeResult decoded = Decode(provider, trie, {tok.sep_id(), tok.eos_id()}, decoder,
                                      EditPrompt(tok, request));
  rep.decoded = decoded.sids;
  rep.efficacy = !decoded.sids.empty() && decoded.sids.front() == request.target;

  if (!request.holdout.empty()) {
    std::size_t unchanged = 0;
    double drift_sq = 0.0;
    for (const std::string& text : request.holdout) {
      const std::vector<TokenId> ids = tok.EncodeText(text);
      Eigen::Index before;
      Eigen::Index after;
      model.Forward(ids).maxCoeff(&before);
      out.model.Forward(ids).maxCoeff(&after);
      unchanged += before == after ? 1 : 0;
      const Eigen::VectorXd k = model.HiddenKey(ids, layer);
      drift_sq += (w_edit * k - w * k).squaredNorm();
    }
    rep.locality = static_cast<double>(unchanged) / static_cast<double>(request.holdout.size());
    rep.drift = std::sqrt(drift_sq);
  }
  return out;
}

}  // namespace svcrec
