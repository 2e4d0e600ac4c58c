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

#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <random>

#include "support/expect_error.h"
#include "support/synthetic.h"
#include "svcrec/pipeline.h"

namespace svcrec {
namespace {

Eigen::MatrixXd RandomMatrix(std::mt19937_64& rng, int rows, int cols) {
  std::normal_distribution<double> n;
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = n(rng);
  return m;
}

KeyCovariance RandomCovariance(std::mt19937_64& rng, int h) {
  const Eigen::MatrixXd a = RandomMatrix(rng, h, h + 3);
  KeyCovariance cov;
  cov.c = a * a.transpose() + 0.1 * Eigen::MatrixXd::Identity(h, h);
  return cov;
}

int NumericalRank(const Eigen::MatrixXd& m) {
  const Eigen::VectorXd s = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues();
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) rank += s(i) > 1e-9 * s(0) ? 1 : 0;
  return rank;
}

TEST(RankOneUpdate, WorkedTwoByTwo) {
  KeyCovariance cov;
  cov.c = Eigen::Matrix2d::Identity();
  const Eigen::Vector2d k(0, 1), v(3, 0);
  const Eigen::MatrixXd w_hat = RankOneUpdate(Eigen::Matrix2d::Identity(), cov, k, v);
  Eigen::Matrix2d want;
  want << 1, 3, 0, 0;
  EXPECT_LT((w_hat - want).norm(), 1e-15);
  EXPECT_LT((w_hat * k - v).norm(), 1e-15);
}

TEST(RankOneUpdate, SatisfiedConstraintIsNoOp) {
  std::mt19937_64 rng(2);
  const Eigen::MatrixXd w = RandomMatrix(rng, 5, 4);
  const Eigen::VectorXd k = RandomMatrix(rng, 4, 1);
  EXPECT_LT((RankOneUpdate(w, RandomCovariance(rng, 4), k, w * k) - w).norm(), 1e-14);
}

TEST(RankOneUpdate, ExactAndRankOneOnRandomInstances) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 2 + static_cast<int>(rng() % 7), d = 2 + static_cast<int>(rng() % 7);
    const Eigen::MatrixXd w = RandomMatrix(rng, d, h);
    const KeyCovariance cov = RandomCovariance(rng, h);
    const Eigen::VectorXd k = RandomMatrix(rng, h, 1), v = RandomMatrix(rng, d, 1);
    const Eigen::MatrixXd w_hat = RankOneUpdate(w, cov, k, v);
    EXPECT_LE((w_hat * k - v).norm(), 1e-9 * (1.0 + v.norm()));
    EXPECT_EQ(NumericalRank(w_hat - w), 1);

    // Keys with (C^-1 k)^T k_perp = 0 keep their outputs.
    const Eigen::VectorXd u = cov.c.llt().solve(k);
    Eigen::VectorXd probe = RandomMatrix(rng, h, 1);
    probe -= (u.dot(probe) / u.squaredNorm()) * u;
    EXPECT_LE((w_hat * probe - w * probe).norm(), 1e-9 * (1.0 + probe.norm()));
  }
}

TEST(RankOneUpdate, Errors) {
  KeyCovariance cov;
  cov.c = Eigen::Matrix2d::Identity();
  EXPECT_ERROR_CODE(RankOneUpdate(Eigen::Matrix2d::Identity(), cov, Eigen::Vector2d::Zero(),
                                  Eigen::Vector2d(1, 0)),
                    "degenerate_key");
  EXPECT_ERROR_CODE(RankOneUpdate(Eigen::Matrix2d::Identity(), cov, Eigen::Vector3d(1, 0, 0),
                                  Eigen::Vector2d(1, 0)),
                    "shape_mismatch");
  cov.c.setZero();
  EXPECT_ERROR_CODE(RankOneUpdate(Eigen::Matrix2d::Identity(), cov, Eigen::Vector2d(1, 0),
                                  Eigen::Vector2d(1, 0)),
                    "singular_covariance");
}

// A random model over a small tokenizer, for key statistics.
struct SmallFixture {
  Lexicon lexicon;
  ToyLM model;
  std::vector<std::string> texts;

  static SmallFixture Make() {
    std::vector<std::string> texts = {"the map app for travel",
                                      "a photo tool with tags",
                                      "send email and chat",
                                      "music playlist for the road",
                                      "weather forecast map",
                                      "travel photo blog"};
    Lexicon lex = Lexicon::FromNames({{0, "google-maps"}, {1, "flickr"}, {2, "gmail"}}, texts);
    ToyLM model(ModelShape{static_cast<int>(lex.tokenizer().size()), 6, 5, 2}, 17,
                lex.tokenizer().bos_id());
    return {std::move(lex), std::move(model), std::move(texts)};
  }
};

TEST(ComputeKey, MeansOverPrefixes) {
  const SmallFixture f = SmallFixture::Make();
  const Tokenizer& tok = f.lexicon.tokenizer();
  EditRequest req;
  req.query = "map app";
  req.target = 0;
  auto key_of = [&](const std::string& prefix) {
    std::vector<TokenId> ids = tok.EncodeText(prefix);
    for (TokenId t : tok.EncodeText(req.query)) ids.push_back(t);
    return f.model.HiddenKey(ids, 1);
  };
  req.prefixes = {"travel photo"};
  EXPECT_LT((ComputeKey(f.model, tok, req, 1) - key_of("travel photo")).norm(), 1e-15);
  const Eigen::VectorXd single = ComputeKey(f.model, tok, req, 1);
  req.prefixes = {"travel photo", "travel photo"};
  EXPECT_LT((ComputeKey(f.model, tok, req, 1) - single).norm(), 1e-15);

  req.prefixes = {"", "the music", "send email and chat", "weather", "a photo tool with tags"};
  std::vector<double> mean(5, 0.0);
  for (const std::string& p : req.prefixes) {
    const Eigen::VectorXd k = key_of(p);
    for (int i = 0; i < 5; ++i) mean[i] += k(i) / 5.0;
  }
  const Eigen::VectorXd got = ComputeKey(f.model, tok, req, 1);
  for (int i = 0; i < 5; ++i) EXPECT_NEAR(got(i), mean[i], 1e-15);
  req.prefixes.clear();
  EXPECT_ERROR_CODE(ComputeKey(f.model, tok, req, 1), "bad_request");
}

TEST(EstimateCovariance, SingleText) {
  const SmallFixture f = SmallFixture::Make();
  const std::vector<std::string> one = {"the map app"};
  const KeyCovariance cov = EstimateCovariance(f.model, f.lexicon.tokenizer(), one, 0, 0.5);
  const Eigen::VectorXd k = f.model.HiddenKey(f.lexicon.tokenizer().EncodeText(one[0]), 0);
  EXPECT_LT((cov.c - (k * k.transpose() + 0.5 * Eigen::MatrixXd::Identity(5, 5))).norm(), 1e-15);
  EXPECT_EQ(cov.sample_count, 1u);
  EXPECT_EQ(cov.epsilon, 0.5);
}

TEST(EstimateCovariance, OrthogonalKeysAndSingularity) {
  Lexicon lex = Lexicon::FromNames({{0, "x"}}, std::vector<std::string>{"foo bar"});
  const Tokenizer& tok = lex.tokenizer();
  ToyLM m = ToyLM::Zeros(ModelShape{static_cast<int>(tok.size()), 2, 2, 1}, tok.bos_id());
  m.mutable_block(0).w_in = Eigen::Matrix2d::Identity();
  m.mutable_embedding().row(*tok.Find("foo")) << 0.5, 0.0;
  m.mutable_embedding().row(*tok.Find("bar")) << 0.0, 0.5;
  const std::vector<std::string> texts = {"foo", "bar"};
  const KeyCovariance cov = EstimateCovariance(m, tok, texts, 0, 0.0);
  const double s = std::tanh(0.5) * std::tanh(0.5);
  EXPECT_LT((cov.c - s * Eigen::MatrixXd::Identity(2, 2)).norm(), 1e-15);
  const std::vector<std::string> only_foo = {"foo", "foo"};
  EXPECT_ERROR_CODE(EstimateCovariance(m, tok, only_foo, 0, 0.0), "singular_covariance");
  EXPECT_NO_THROW(EstimateCovariance(m, tok, only_foo, 0));
  EXPECT_ERROR_CODE(EstimateCovariance(m, tok, std::vector<std::string>{}, 0), "empty_corpus");
}

TEST(EstimateCovariance, MatchesNaiveAccumulation) {
  const SmallFixture f = SmallFixture::Make();
  const Tokenizer& tok = f.lexicon.tokenizer();
  std::mt19937_64 rng(4);
  std::vector<std::string> texts;
  for (int i = 0; i < 100; ++i) {
    std::string t;
    for (int w = 0; w < 1 + static_cast<int>(rng() % 5); ++w) {
      const std::string& src = f.texts[rng() % f.texts.size()];
      t += (t.empty() ? "" : " ") + src.substr(0, src.find(' '));
    }
    texts.push_back(t);
  }
  const KeyCovariance cov = EstimateCovariance(f.model, tok, texts, 1);
  double naive[5][5] = {};
  for (const std::string& t : texts) {
    const Eigen::VectorXd k = f.model.HiddenKey(tok.EncodeText(t), 1);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) naive[i][j] += k(i) * k(j);
  }
  double trace = 0.0;
  for (int i = 0; i < 5; ++i) trace += naive[i][i];
  const double eps = 1e-4 * trace / 5.0;
  EXPECT_NEAR(cov.epsilon, eps, 1e-15);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      EXPECT_NEAR(cov.c(i, j), naive[i][j] + (i == j ? eps : 0.0), 1e-12);
      EXPECT_NEAR(cov.c(i, j), cov.c(j, i), 1e-12);
    }
  }

  // The sequence form sums over every position.
  std::vector<std::vector<TokenId>> seqs;
  for (int i = 0; i < 10; ++i) seqs.push_back(tok.EncodeText(texts[i]));
  const KeyCovariance all = EstimateCovariance(f.model, seqs, 0, 0.0);
  Eigen::MatrixXd want = Eigen::MatrixXd::Zero(5, 5);
  std::size_t rows = 0;
  for (const auto& s : seqs) {
    for (std::size_t t = 0; t <= s.size(); ++t) {
      const Eigen::VectorXd k = f.model.HiddenKey(std::span(s).first(t), 0);
      want += k * k.transpose();
      ++rows;
    }
  }
  EXPECT_LT((all.c - want).norm(), 1e-12);
  EXPECT_EQ(all.sample_count, rows);
}

// A toy model trained on planted facts, shared by the tests below.
class TrainedEditorTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    facts_ = new testing::PlantedFacts(testing::PlantedFactCorpus(30, 11));
    lexicon_ = new Lexicon(BuildCorpusLexicon(facts_->corpus, Casing::kPreserve));
    const TrainCorpus tc = MakeTrainCorpus(facts_->corpus, *lexicon_);
    const RunConfig rc;
    TrainHyper hyper = rc.train;
    hyper.steps = 300;
    hyper.seed = 3;
    model_ = new ToyLM(TrainToy(tc, hyper));
    config_ = rc.edit;
    cov_ = new KeyCovariance(EstimateCovariance(*model_, FullSequences(tc), config_.layer));
    trie_ = new TokenTrie(lexicon_->BuildTrie());
    for (const CorpusRecord& r : facts_->corpus) texts_.push_back(r.description);
  }
  static void TearDownTestSuite() {
    delete facts_;
    delete lexicon_;
    delete model_;
    delete cov_;
    delete trie_;
    texts_.clear();
  }

  // Edit record 2 * subject toward a sid other than its trained first api.
  EditRequest Request(int subject, std::mt19937_64& rng, int holdout = 50) const {
    const ServiceId original = *lexicon_->FindByName(facts_->first_api[subject]);
    ServiceId target;
    do target = static_cast<ServiceId>(rng() % lexicon_->entries().size());
    while (target == original);
    std::vector<std::string> hold;
    for (int k = 0; k < holdout; ++k) {
      hold.push_back(texts_[(2 * subject + 2 * (k + 1) + 1) % texts_.size()]);
    }
    return MakeEditRequest(facts_->corpus[2 * subject], target, texts_, hold, 8, rng);
  }

  static testing::PlantedFacts* facts_;
  static Lexicon* lexicon_;
  static ToyLM* model_;
  static KeyCovariance* cov_;
  static TokenTrie* trie_;
  static EditConfig config_;
  static std::vector<std::string> texts_;
};

testing::PlantedFacts* TrainedEditorTest::facts_ = nullptr;
Lexicon* TrainedEditorTest::lexicon_ = nullptr;
ToyLM* TrainedEditorTest::model_ = nullptr;
KeyCovariance* TrainedEditorTest::cov_ = nullptr;
TokenTrie* TrainedEditorTest::trie_ = nullptr;
EditConfig TrainedEditorTest::config_;
std::vector<std::string> TrainedEditorTest::texts_;

TEST_F(TrainedEditorTest, ObjectiveGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  const EditRequest req = Request(3, rng, 5);
  const Eigen::VectorXd key = ComputeKey(*model_, lexicon_->tokenizer(), req, config_.layer);
  EditConfig cfg = config_;
  cfg.kl_factor = 0.5;
  const ValueObjective obj(*model_, *lexicon_, req, cfg, key, *cov_);
  for (const Eigen::VectorXd& v :
       {obj.initial_value(), Eigen::VectorXd(obj.initial_value() * 1.3 + Eigen::VectorXd::Constant(
                                                                       obj.initial_value().size(), 0.05))}) {
    const ValueObjective::Terms t = obj.Evaluate(v);
    EXPECT_NEAR(t.total, t.target_loss + cfg.kl_factor * t.kl + t.decay, 1e-12);
    for (int i = 0; i < v.size(); ++i) {
      Eigen::VectorXd up = v, down = v;
      const double h = 1e-5;
      up(i) += h;
      down(i) -= h;
      const double fd = (obj.Evaluate(up).total - obj.Evaluate(down).total) / (2 * h);
      EXPECT_LE(std::abs(fd - t.gradient(i)), 1e-4 * std::max(1.0, std::abs(fd))) << i;
    }
  }
  const ValueObjective::Terms at0 = obj.Evaluate(obj.initial_value());
  EXPECT_EQ(at0.decay, 0.0);
  EXPECT_NEAR(at0.kl, 0.0, 1e-12);
}

TEST_F(TrainedEditorTest, OptimizationLowersTargetLossWithinClamp) {
  std::mt19937_64 rng(2);
  const EditRequest req = Request(5, rng);
  const Eigen::VectorXd key = ComputeKey(*model_, lexicon_->tokenizer(), req, config_.layer);
  EditConfig cfg = config_;
  cfg.num_grad_steps = 40;
  cfg.early_stop_loss = 0.0;
  cfg.clamp_factor = 0.5;
  ValueTrace trace;
  const Eigen::VectorXd v = OptimizeValue(*model_, *lexicon_, req, cfg, key, *cov_, &trace);
  ASSERT_EQ(trace.target_losses.size(), 41u);
  EXPECT_LT(trace.target_losses.back(), trace.target_losses.front());
  const Eigen::VectorXd v0 = model_->blocks()[cfg.layer].w_proj * key;
  EXPECT_LE((v - v0).norm(), cfg.clamp_factor * v0.norm() * (1 + 1e-12));
}

TEST_F(TrainedEditorTest, ZeroKlWeightIgnoresHoldouts) {
  std::mt19937_64 rng(3);
  EditRequest with = Request(6, rng, 1);
  EditRequest without = with;
  without.holdout.clear();
  EditConfig cfg = config_;
  cfg.kl_factor = 0.0;
  cfg.num_grad_steps = 15;
  const Eigen::VectorXd key = ComputeKey(*model_, lexicon_->tokenizer(), with, cfg.layer);
  ValueTrace a, b;
  const Eigen::VectorXd va = OptimizeValue(*model_, *lexicon_, with, cfg, key, *cov_, &a);
  const Eigen::VectorXd vb = OptimizeValue(*model_, *lexicon_, without, cfg, key, *cov_, &b);
  EXPECT_EQ(a.losses, b.losses);
  EXPECT_EQ(va, vb);
}

TEST_F(TrainedEditorTest, AlreadyPredictedTargetIsNearNoOp) {
  std::mt19937_64 rng(4);
  EditRequest req = Request(7, rng);
  req.target = *lexicon_->FindByName(facts_->first_api[7]);
  const Eigen::VectorXd key = ComputeKey(*model_, lexicon_->tokenizer(), req, config_.layer);
  ValueTrace trace;
  const Eigen::VectorXd v = OptimizeValue(*model_, *lexicon_, req, config_, key, *cov_, &trace);
  EXPECT_LT(trace.target_losses.front(), 0.5);
  const Eigen::VectorXd v0 = model_->blocks()[config_.layer].w_proj * key;
  EXPECT_LE((v - v0).norm(), config_.clamp_factor * v0.norm());
}

TEST_F(TrainedEditorTest, EditIsEffective) {
  std::mt19937_64 rng(5);
  const EditRequest req = Request(8, rng);
  const ToyLM before = *model_;
  const EditOutcome out = ApplyEdit(*model_, *lexicon_, *trie_, req, config_, *cov_);
  EXPECT_TRUE(*model_ == before);
  EXPECT_TRUE(out.report.efficacy);
  ASSERT_FALSE(out.report.decoded.empty());
  EXPECT_EQ(out.report.decoded.front(), req.target);
  EXPECT_LE(out.report.constraint_residual, 1e-9);
  EXPECT_GE(out.report.locality, 0.0);
  EXPECT_LE(out.report.locality, 1.0);
  EXPECT_GE(out.report.drift, 0.0);
}

TEST_F(TrainedEditorTest, SatisfiedEditIsIdempotent) {
  // Repeating an edit whose objective already met the stopping threshold
  // must leave the weights alone.
  std::mt19937_64 rng(5);
  std::optional<EditOutcome> first;
  EditRequest req;
  for (int s = 0; s < 10 && !first; ++s) {
    req = Request(s, rng);
    EditOutcome out = ApplyEdit(*model_, *lexicon_, *trie_, req, config_, *cov_);
    if (out.report.final_loss < config_.early_stop_loss) first = std::move(out);
  }
  ASSERT_TRUE(first.has_value()) << "no edit among 10 subjects reached the stopping threshold";
  const EditOutcome second = ApplyEdit(first->model, *lexicon_, *trie_, req, config_, *cov_);
  EXPECT_LE(second.report.constraint_residual, 1e-9);
  EXPECT_EQ(second.report.steps, 0);
  const int l = config_.layer;
  EXPECT_LE((second.model.blocks()[l].w_proj - first->model.blocks()[l].w_proj).norm(),
            1e-9 * first->model.blocks()[l].w_proj.norm());
  EXPECT_TRUE(second.report.efficacy);
}

TEST_F(TrainedEditorTest, TwentySequentialEdits) {
  std::mt19937_64 rng(6);
  ToyLM current = *model_;
  int hits = 0;
  double locality = 0.0;
  for (int s = 0; s < 20; ++s) {
    const EditRequest req = Request(s, rng);
    EditOutcome out = ApplyEdit(current, *lexicon_, *trie_, req, config_, *cov_);
    hits += out.report.efficacy ? 1 : 0;
    locality += out.report.locality;
    current = std::move(out.model);
  }
  EXPECT_EQ(hits, 20);
  EXPECT_GE(locality / 20.0, 0.9);
}

TEST_F(TrainedEditorTest, RejectsBadRequests) {
  std::mt19937_64 rng(7);
  EditRequest req = Request(1, rng, 0);
  req.target = 999;
  EXPECT_ERROR_CODE(req.Validate(*lexicon_), "unknown_sid");
  req.target = 0;
  req.query = "!!";
  EXPECT_ERROR_CODE(req.Validate(*lexicon_), "empty_prompt");
  req.query = facts_->corpus[0].description;
  req.prefixes.clear();
  EXPECT_ERROR_CODE(req.Validate(*lexicon_), "bad_request");
  EditConfig cfg;
  cfg.v_lr = 0.0;
  EXPECT_ERROR_CODE(cfg.Validate(), "bad_config");
}

}  // namespace
}  // namespace svcrec
