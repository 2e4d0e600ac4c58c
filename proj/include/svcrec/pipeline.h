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

// Corpus-level glue and the file-based commands behind the CLI.

#ifndef SVCREC_PIPELINE_H_
#define SVCREC_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "svcrec/decoder.h"
#include "svcrec/editor.h"
#include "svcrec/eval.h"
#include "svcrec/io.h"
#include "svcrec/lexicon.h"
#include "svcrec/model.h"
#include "svcrec/retrieval.h"

namespace svcrec {

inline constexpr std::string_view kVersion = "0.1.0";

// Library defaults, except where the toy model needs its own: the first
// block is edited, keys are 128 wide and the value step is larger.
struct RunConfig {
  RunConfig();

  std::optional<std::uint64_t> seed;
  Casing casing = Casing::kPreserve;
  int num_segments = 3;
  double train_frac = 0.7;
  double volatility_threshold = 0.5;
  TrainHyper train;
  DecoderConfig decoder;
  EditConfig edit;
  int num_prefixes = 8;
  int num_holdout = 20;
  std::size_t retrieval_k = 5;
  std::string domain;
  std::vector<int> eval_k = {1, 3, 5};
  PrecisionDenominator precision_denominator = PrecisionDenominator::kReturned;

  void Validate() const;
  std::uint64_t RequireSeed() const;
};

// Unknown keys are rejected.
RunConfig RunConfigFromJson(const Json& j);
Json ToJson(const RunConfig& c);

std::uint64_t Fnv1a64(std::string_view data);

// One sid per distinct api name, numbered in name order; the tokenizer sees
// every name and every description.
Lexicon BuildCorpusLexicon(std::span<const CorpusRecord> corpus, Casing casing);

// Prompt: the description's words. Target: the record's services joined by
// sep, then eos.
TrainCorpus MakeTrainCorpus(std::span<const CorpusRecord> records, const Lexicon& lexicon);

// prompt + target of every example, for key statistics.
std::vector<std::vector<TokenId>> FullSequences(const TrainCorpus& corpus);

DecodeRecord DecodeQuery(const ToyLM& model, const Lexicon& lexicon, const TokenTrie& trie,
                         const DecoderConfig& config, const CorpusRecord& query,
                         DecodeTrace* trace = nullptr);

// Pairs decodes with gold records by query id. Records without a decode
// count as empty predictions.
std::vector<EvalRecord> MakeEvalRecords(std::span<const CorpusRecord> gold,
                                        std::span<const DecodeRecord> decodes,
                                        const Lexicon& lexicon);

EditRequest MakeEditRequest(const CorpusRecord& record, ServiceId target,
                            std::span<const std::string> prefix_texts,
                            std::vector<std::string> holdout, int num_prefixes,
                            std::mt19937_64& rng);

// Applies the edits one after another on the running model. The key
// covariance is taken once from `model`: only the edited projection changes,
// so keys at that layer stay put.
ToyLM ApplyEdits(const ToyLM& model, const Lexicon& lexicon, const TokenTrie& trie,
                 std::span<const EditRequest> requests, const EditConfig& config,
                 const KeyCovariance& cov, const DecoderConfig& decoder,
                 std::vector<EditReport>* reports = nullptr);

namespace fs = std::filesystem;

// Each command writes its outputs plus `<command>.manifest.json` into `out`.
void RunBuild(const RunConfig& config, const fs::path& corpus, const fs::path& out);
void RunSplit(const RunConfig& config, const fs::path& corpus, const fs::path& artifacts,
              const fs::path& out);
void RunPrompt(const RunConfig& config, const fs::path& corpus, const fs::path& queries,
               const fs::path& out);
void RunTrain(const RunConfig& config, const fs::path& corpus, const fs::path& artifacts,
              const fs::path& out);
void RunEdit(const RunConfig& config, const fs::path& model, const fs::path& edits,
             const fs::path& corpus, const fs::path& artifacts, const fs::path& out);
void RunDecode(const RunConfig& config, const fs::path& model, const fs::path& queries,
               const fs::path& artifacts, const std::optional<fs::path>& scenario,
               const fs::path& out);
void RunEvaluate(const RunConfig& config, const fs::path& predictions, const fs::path& gold,
                 const fs::path& artifacts, const fs::path& out);
void RunAnalyze(const RunConfig& config, const fs::path& traces, const fs::path& raw_decodes,
                const fs::path& artifacts, const fs::path& out);
// build -> split -> train -> decode/evaluate before and after editing -> analyze.
void RunPipeline(const RunConfig& config, const fs::path& corpus, const fs::path& out);

}  // namespace svcrec

#endif  // SVCREC_PIPELINE_H_
