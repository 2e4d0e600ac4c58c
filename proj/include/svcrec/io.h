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

// File formats: line-delimited JSON records and the tokenizer/model files.

#ifndef SVCREC_IO_H_
#define SVCREC_IO_H_

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "svcrec/analysis.h"
#include "svcrec/decoder.h"
#include "svcrec/editor.h"
#include "svcrec/eval.h"
#include "svcrec/lexicon.h"
#include "svcrec/retrieval.h"

namespace svcrec {

using Json = nlohmann::json;

std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, const std::string& content);

// Parses one JSON object per non-blank line. Errors carry the line number.
std::vector<Json> ReadJsonLines(const std::filesystem::path& path);
std::string ToJsonLines(const std::vector<Json>& records);

CorpusRecord CorpusRecordFromJson(const Json& j);
Json ToJson(const CorpusRecord& r);
std::vector<CorpusRecord> ReadCorpus(const std::filesystem::path& path);

Json TokenizerToJson(const Tokenizer& tokenizer);
Tokenizer TokenizerFromJson(const Json& j);

// {"sid": int, "name": string} per line.
std::vector<Json> LexiconToJsonLines(const Lexicon& lexicon);
Lexicon LexiconFromFiles(const std::filesystem::path& lexicon_path,
                         const std::filesystem::path& tokenizer_path);

Json TrieToJson(const TokenTrie& trie);

struct DecodeRecord {
  std::string query_id;
  std::vector<ServiceId> sids;
  std::vector<TokenId> tokens;
  bool truncated = false;
};
Json ToJson(const DecodeRecord& r);
DecodeRecord DecodeRecordFromJson(const Json& j);

// One line per step, keyed by query id and step index.
std::vector<Json> TraceToJsonLines(const DecodeTrace& trace);
// Groups step records back into traces, in first-seen query order.
std::vector<DecodeTrace> TracesFromJsonLines(const std::vector<Json>& lines);

// {"query", "target_sid", "prompts": [...], optional "holdout", "context"}.
EditRequest EditRequestFromJson(const Json& j);
Json ToJson(const EditRequest& r);
Json ToJson(const EditReport& r);

Json ToJson(const MetricsSummary& m);
Json ToJson(const EvolutionScenario& s);

}  // namespace svcrec

#endif  // SVCREC_IO_H_
