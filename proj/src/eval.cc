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

#include "svcrec/eval.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>

namespace svcrec {
namespace {

std::size_t HitsInTopK(const EvalRecord& rec, int k) {
  std::size_t hits = 0;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), rec.predicted.size());
  for (std::size_t i = 0; i < n; ++i) hits += rec.gold.contains(rec.predicted[i]) ? 1 : 0;
  return hits;
}

void CheckK(int k) {
  if (k < 1) throw Error("bad_config", "K must be at least 1");
}

bool UsesAny(const CorpusRecord& r, const Lexicon& lexicon, const std::set<ServiceId>& sids) {
  for (ServiceId s : GoldSids(r, lexicon)) {
    if (sids.contains(s)) return true;
  }
  return false;
}

}  // namespace

void EvalRecord::Validate() const {
  if (gold.empty()) throw Error("bad_record", "record " + query_id + " has an empty gold set");
  std::set<ServiceId> seen;
  for (ServiceId s : predicted) {
    if (!seen.insert(s).second) {
      throw Error("bad_record", "record " + query_id + " predicts a service twice");
    }
  }
}

double RecallAtK(const EvalRecord& rec, int k) {
  CheckK(k);
  rec.Validate();
  return static_cast<double>(HitsInTopK(rec, k)) / static_cast<double>(rec.gold.size());
}

double PrecisionAtK(const EvalRecord& rec, int k, PrecisionDenominator denom) {
  CheckK(k);
  rec.Validate();
  const std::size_t d = denom == PrecisionDenominator::kK
                            ? static_cast<std::size_t>(k)
                            : std::min<std::size_t>(static_cast<std::size_t>(k), rec.predicted.size());
  if (d == 0) return 0.0;
  return static_cast<double>(HitsInTopK(rec, k)) / static_cast<double>(d);
}

double ApAtK(const EvalRecord& rec, int k) {
  CheckK(k);
  rec.Validate();
  const std::size_t m = std::min<std::size_t>(rec.gold.size(), static_cast<std::size_t>(k));
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(k), rec.predicted.size());
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (rec.gold.contains(rec.predicted[i])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(m);
}

double MapAtK(std::span<const EvalRecord> records, int k) {
  if (records.empty()) return 0.0;
  double sum = 0.0;
  for (const EvalRecord& r : records) sum += ApAtK(r, k);
  return sum / static_cast<double>(records.size());
}

MetricsSummary Summarize(std::span<const EvalRecord> records, int k, PrecisionDenominator denom) {
  CheckK(k);
  MetricsSummary s;
  s.k = k;
  s.n_records = records.size();
  if (records.empty()) return s;
  for (const EvalRecord& r : records) {
    s.recall += RecallAtK(r, k);
    s.precision += PrecisionAtK(r, k, denom);
  }
  const auto n = static_cast<double>(records.size());
  s.recall /= n;
  s.precision /= n;
  s.map = MapAtK(records, k);
  return s;
}

void ValidateDate(const std::string& date) {
  auto digits = [&](std::size_t from, std::size_t to) {
    for (std::size_t i = from; i < to; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(date[i]))) return false;
    }
    return true;
  };
  const bool ok = date.size() == 10 && date[4] == '-' && date[7] == '-' && digits(0, 4) &&
                  digits(5, 7) && digits(8, 10);
  if (!ok) throw Error("bad_date", "date '" + date + "' is not YYYY-MM-DD");
  const int month = std::stoi(date.substr(5, 2));
  const int day = std::stoi(date.substr(8, 2));
  if (month < 1 || month > 12 || day < 1 || day > 31) {
    throw Error("bad_date", "date '" + date + "' is out of range");
  }
}

SplitPlan ChronologicalSplit(std::span<const CorpusRecord> corpus, int n, double train_frac) {
  if (n < 1) throw Error("bad_config", "need at least one segment");
  if (!(train_frac >= 0.0 && train_frac <= 1.0)) throw Error("bad_config", "train_frac outside [0,1]");
  std::vector<CorpusRecord> sorted(corpus.begin(), corpus.end());
  for (const CorpusRecord& r : sorted) {
    if (r.date.empty()) throw Error("missing_date", "record " + r.id + " has no date");
    ValidateDate(r.date);
  }
  std::sort(sorted.begin(), sorted.end(), [](const CorpusRecord& a, const CorpusRecord& b) {
    return a.date != b.date ? a.date < b.date : a.id < b.id;
  });
  SplitPlan plan;
  const std::size_t total = sorted.size();
  for (int i = 0; i < n; ++i) {
    const std::size_t lo = total * static_cast<std::size_t>(i) / static_cast<std::size_t>(n);
    const std::size_t hi = total * static_cast<std::size_t>(i + 1) / static_cast<std::size_t>(n);
    const auto len = static_cast<double>(hi - lo);
    const std::size_t cut = lo + static_cast<std::size_t>(std::llround(train_frac * len));
    Segment seg;
    seg.train.assign(sorted.begin() + lo, sorted.begin() + cut);
    seg.test.assign(sorted.begin() + cut, sorted.begin() + hi);
    plan.segments.push_back(std::move(seg));
  }
  return plan;
}

std::set<ServiceId> GoldSids(const CorpusRecord& record, const Lexicon& lexicon) {
  std::set<ServiceId> out;
  for (const std::string& api : record.apis) {
    auto sid = lexicon.FindByName(api);
    if (!sid) throw Error("unknown_api", "record " + record.id + " uses unknown api '" + api + "'");
    out.insert(*sid);
  }
  return out;
}

EvolutionScenario BuildEvolutionScenario(const SplitPlan& split, const Lexicon& lexicon,
                                         double volatility_threshold, std::uint64_t seed) {
  if (split.segments.size() < 2) throw Error("bad_config", "evolution scenario needs >= 2 segments");
  EvolutionScenario sc;
  std::vector<CorpusRecord> earlier;
  for (std::size_t i = 0; i + 1 < split.segments.size(); ++i) {
    const Segment& s = split.segments[i];
    sc.base_train.insert(sc.base_train.end(), s.train.begin(), s.train.end());
    earlier.insert(earlier.end(), s.train.begin(), s.train.end());
    earlier.insert(earlier.end(), s.test.begin(), s.test.end());
  }
  std::vector<CorpusRecord> later = split.segments.back().train;
  later.insert(later.end(), split.segments.back().test.begin(), split.segments.back().test.end());

  std::map<ServiceId, std::size_t> early_count;
  std::map<ServiceId, std::size_t> late_count;
  for (const CorpusRecord& r : earlier)
    for (ServiceId s : GoldSids(r, lexicon)) ++early_count[s];
  for (const CorpusRecord& r : later)
    for (ServiceId s : GoldSids(r, lexicon)) ++late_count[s];

  for (const auto& [sid, count] : late_count) {
    if (!early_count.contains(sid) && count > 2) sc.newborn.push_back(sid);
  }
  for (const auto& [sid, count] : early_count) {
    if (!late_count.contains(sid)) {
      sc.dying.push_back(sid);
      continue;
    }
    const double before = static_cast<double>(count) / static_cast<double>(earlier.size());
    const double after = static_cast<double>(late_count[sid]) / static_cast<double>(later.size());
    if (std::abs(after - before) / before >= volatility_threshold) {
      sc.volatile_services.push_back(sid);
    }
  }

  std::mt19937_64 rng(seed);
  std::set<std::string> chosen;
  for (ServiceId sid : sc.newborn) {
    std::vector<const CorpusRecord*> fresh;
    std::vector<const CorpusRecord*> all;
    for (const CorpusRecord& r : later) {
      if (!GoldSids(r, lexicon).contains(sid)) continue;
      all.push_back(&r);
      if (!chosen.contains(r.id)) fresh.push_back(&r);
    }
    const auto& pool = fresh.empty() ? all : fresh;
    const CorpusRecord* pick = pool[rng() % pool.size()];
    chosen.insert(pick->id);
    sc.edits.push_back({sid, *pick});
  }
  if (sc.newborn.empty()) sc.warnings.push_back("no newborn services; the edit set is empty");

  const std::set<ServiceId> newborn(sc.newborn.begin(), sc.newborn.end());
  for (const CorpusRecord& r : later) {
    if (chosen.contains(r.id)) continue;
    sc.condition1.push_back(r);
    (UsesAny(r, lexicon, newborn) ? sc.test_new : sc.test_preserve).push_back(r);
  }
  return sc;
}

}  // namespace svcrec
