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

// Ranking metrics, chronological splits and the service-evolution scenario.

#ifndef SVCREC_EVAL_H_
#define SVCREC_EVAL_H_

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svcrec/error.h"
#include "svcrec/lexicon.h"
#include "svcrec/retrieval.h"

namespace svcrec {

struct EvalRecord {
  std::string query_id;
  std::set<ServiceId> gold;
  std::vector<ServiceId> predicted;  // ranked, duplicate-free

  void Validate() const;
};

enum class PrecisionDenominator {
  kReturned,  // min(K, |predicted|)
  kK,
};

double RecallAtK(const EvalRecord& rec, int k);
double PrecisionAtK(const EvalRecord& rec, int k,
                    PrecisionDenominator denom = PrecisionDenominator::kReturned);
// (1/min(|gold|, K)) * sum_{i<=K} P(i) rel(i).
double ApAtK(const EvalRecord& rec, int k);
double MapAtK(std::span<const EvalRecord> records, int k);

struct MetricsSummary {
  int k = 0;
  double recall = 0.0;
  double precision = 0.0;
  double map = 0.0;
  std::size_t n_records = 0;
};

// Means over records; all zero for an empty set.
MetricsSummary Summarize(std::span<const EvalRecord> records, int k,
                         PrecisionDenominator denom = PrecisionDenominator::kReturned);

// Throws unless `date` is YYYY-MM-DD.
void ValidateDate(const std::string& date);

struct Segment {
  std::vector<CorpusRecord> train;
  std::vector<CorpusRecord> test;
};

struct SplitPlan {
  std::vector<Segment> segments;
};

// Sorts by (date, id), cuts into `n` equal-count segments and splits each in
// date order, the first round(train_frac * size) records going to train.
SplitPlan ChronologicalSplit(std::span<const CorpusRecord> corpus, int n = 3,
                             double train_frac = 0.7);

struct ScenarioEdit {
  ServiceId target = 0;
  CorpusRecord record;
};

// Earlier data is every record of segments 0..n-2, later data the last
// segment. Newborn services are absent earlier and used by more than two later
// records; dying services are used earlier and never later; volatile services
// occur in both and their usage share changed by at least the threshold,
// relative to the earlier share.
struct EvolutionScenario {
  std::vector<ServiceId> newborn;
  std::vector<ServiceId> dying;
  std::vector<ServiceId> volatile_services;
  std::vector<CorpusRecord> base_train;  // train partitions of earlier segments
  std::vector<ScenarioEdit> edits;       // one sampled record per newborn service
  std::vector<CorpusRecord> test_new;       // condition 2
  std::vector<CorpusRecord> test_preserve;  // later records without newborn services
  std::vector<CorpusRecord> condition1;     // every later record not used for editing
  std::vector<std::string> warnings;
};

EvolutionScenario BuildEvolutionScenario(const SplitPlan& split, const Lexicon& lexicon,
                                         double volatility_threshold = 0.5,
                                         std::uint64_t seed = 0);

// Gold service ids of a record's api names. Throws on unknown names.
std::set<ServiceId> GoldSids(const CorpusRecord& record, const Lexicon& lexicon);

}  // namespace svcrec

#endif  // SVCREC_EVAL_H_
