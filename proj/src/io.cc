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

#include "svcrec/io.h"

#include <fstream>
#include <map>
#include <sstream>

namespace svcrec {

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_input", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << content;
  if (!out) throw Error("io", "failed writing " + path.string());
}

std::vector<Json> ReadJsonLines(const std::filesystem::path& path) {
  std::istringstream in(ReadFile(path));
  std::vector<Json> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      Json j = Json::parse(line);
      if (!j.is_object()) throw Error("schema", "record is not a JSON object");
      out.push_back(std::move(j));
    } catch (const Json::exception& e) {
      throw Error("malformed_line", path.string() + ":" + std::to_string(number) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
  return out;
}

std::string ToJsonLines(const std::vector<Json>& records) {
  std::string out;
  for (const Json& j : records) out += j.dump() + "\n";
  return out;
}

CorpusRecord CorpusRecordFromJson(const Json& j) {
  try {
    CorpusRecord r;
    const Json& id = j.at("id");
    r.id = id.is_string() ? id.get<std::string>() : id.dump();
    r.description = j.at("description").get<std::string>();
    if (r.description.empty()) throw Error("schema", "record " + r.id + " has an empty description");
    if (j.contains("categories")) r.categories = j.at("categories").get<std::vector<std::string>>();
    r.apis = j.at("apis").get<std::vector<std::string>>();
    if (j.contains("date")) r.date = j.at("date").get<std::string>();
    return r;
  } catch (const Json::exception& e) {
    throw Error("schema", std::string("bad corpus record: ") + e.what());
  }
}

Json ToJson(const CorpusRecord& r) {
  return {{"id", r.id},
          {"description", r.description},
          {"categories", r.categories},
          {"apis", r.apis},
          {"date", r.date}};
}

std::vector<CorpusRecord> ReadCorpus(const std::filesystem::path& path) {
  std::vector<CorpusRecord> out;
  int index = 0;
  for (const Json& j : ReadJsonLines(path)) {
    ++index;
    try {
      out.push_back(CorpusRecordFromJson(j));
    } catch (const Error& e) {
      throw Error(e.code(), path.string() + ": record " + std::to_string(index) + ": " + e.what());
    }
  }
  return out;
}

Json TokenizerToJson(const Tokenizer& tokenizer) {
  Json vocab = Json::object();
  for (const auto& [token, id] : tokenizer.vocab()) vocab[token] = id;
  return {{"vocab", vocab},
          {"sep", tokenizer.sep_id()},
          {"eos", tokenizer.eos_id()},
          {"bos", tokenizer.bos_id()},
          {"unk", tokenizer.unk_id()},
          {"casing", tokenizer.casing() == Casing::kFold ? "fold" : "preserve"}};
}

Tokenizer TokenizerFromJson(const Json& j) {
  try {
    std::map<std::string, TokenId> vocab;
    for (const auto& [token, id] : j.at("vocab").items()) vocab.emplace(token, id.get<TokenId>());
    const Casing casing = j.value("casing", "preserve") == "fold" ? Casing::kFold : Casing::kPreserve;
    Tokenizer t(std::move(vocab), casing);
    if (t.sep_id() != j.at("sep").get<TokenId>() || t.eos_id() != j.at("eos").get<TokenId>()) {
      throw Error("schema", "tokenizer sep/eos ids disagree with the vocabulary");
    }
    return t;
  } catch (const Json::exception& e) {
    throw Error("schema", std::string("bad tokenizer file: ") + e.what());
  }
}

std::vector<Json> LexiconToJsonLines(const Lexicon& lexicon) {
  std::vector<Json> out;
  for (const ServiceEntry& e : lexicon.entries()) out.push_back({{"sid", e.sid}, {"name", e.name}});
  return out;
}

Lexicon LexiconFromFiles(const std::filesystem::path& lexicon_path,
                         const std::filesystem::path& tokenizer_path) {
  Tokenizer tokenizer = TokenizerFromJson(Json::parse(ReadFile(tokenizer_path)));
  std::vector<ServiceEntry> entries;
  for (const Json& j : ReadJsonLines(lexicon_path)) {
    ServiceEntry e;
    try {
      e.sid = j.at("sid").get<ServiceId>();
      e.name = j.at("name").get<std::string>();
    } catch (const Json::exception& ex) {
      throw Error("schema", std::string("bad lexicon record: ") + ex.what());
    }
    e.tokens = tokenizer.Encode(e.name);
    entries.push_back(std::move(e));
  }
  return Lexicon(std::move(tokenizer), std::move(entries));
}

Json TrieToJson(const TokenTrie& trie) {
  Json nodes = Json::array();
  for (std::size_t i = 0; i < trie.num_nodes(); ++i) {
    const TokenTrie::Node& n = trie.node(static_cast<TokenTrie::NodeId>(i));
    Json children = Json::array();
    for (const auto& [token, child] : n.children) children.push_back({token, child});
    Json node = {{"id", i}, {"children", children}, {"subtree_sids", n.subtree_sids}};
    node["terminal_sid"] = n.terminal_sid ? Json(*n.terminal_sid) : Json(nullptr);
    nodes.push_back(std::move(node));
  }
  return {{"nodes", nodes}};
}

Json ToJson(const DecodeRecord& r) {
  return {{"query_id", r.query_id}, {"sids", r.sids}, {"tokens", r.tokens}, {"truncated", r.truncated}};
}

DecodeRecord DecodeRecordFromJson(const Json& j) {
  try {
    DecodeRecord r;
    r.query_id = j.at("query_id").get<std::string>();
    r.sids = j.at("sids").get<std::vector<ServiceId>>();
    r.tokens = j.at("tokens").get<std::vector<TokenId>>();
    r.truncated = j.at("truncated").get<bool>();
    return r;
  } catch (const Json::exception& e) {
    throw Error("schema", std::string("bad decode record: ") + e.what());
  }
}

std::vector<Json> TraceToJsonLines(const DecodeTrace& trace) {
  std::vector<Json> out;
  for (const TraceStep& s : trace.steps) {
    out.push_back({{"query_id", trace.query_id},
                   {"step", s.step},
                   {"raw_entropy", s.raw_entropy},
                   {"masked_entropy", s.masked_entropy},
                   {"raw_token", s.raw_token},
                   {"fa_token", s.fa_token},
                   {"raw_logp_raw_token", s.raw_logp_raw_token},
                   {"raw_logp_fa_token", s.raw_logp_fa_token},
                   {"allowed_size", s.allowed_size}});
  }
  return out;
}

std::vector<DecodeTrace> TracesFromJsonLines(const std::vector<Json>& lines) {
  std::vector<DecodeTrace> traces;
  std::map<std::string, std::size_t> index;
  try {
    for (const Json& j : lines) {
      const std::string id = j.at("query_id").get<std::string>();
      auto [it, fresh] = index.emplace(id, traces.size());
      if (fresh) traces.push_back({id, {}});
      TraceStep s;
      s.step = j.at("step").get<int>();
      s.raw_entropy = j.at("raw_entropy").get<double>();
      s.masked_entropy = j.at("masked_entropy").get<double>();
      s.raw_token = j.at("raw_token").get<TokenId>();
      s.fa_token = j.at("fa_token").get<TokenId>();
      s.raw_logp_raw_token = j.at("raw_logp_raw_token").get<double>();
      s.raw_logp_fa_token = j.at("raw_logp_fa_token").get<double>();
      s.allowed_size = j.at("allowed_size").get<std::size_t>();
      traces[it->second].steps.push_back(std::move(s));
    }
  } catch (const Json::exception& e) {
    throw Error("schema", std::string("bad trace record: ") + e.what());
  }
  return traces;
}

EditRequest EditRequestFromJson(const Json& j) {
  try {
    EditRequest r;
    r.query = j.at("query").get<std::string>();
    r.target = j.at("target_sid").get<ServiceId>();
    r.prefixes = j.at("prompts").get<std::vector<std::string>>();
    if (j.contains("holdout")) r.holdout = j.at("holdout").get<std::vector<std::string>>();
    if (j.contains("context")) r.context_prompt = j.at("context").get<std::string>();
    return r;
  } catch (const Json::exception& e) {
    throw Error("schema", std::string("bad edit record: ") + e.what());
  }
}

Json ToJson(const EditRequest& r) {
  Json j = {{"query", r.query}, {"target_sid", r.target}, {"prompts", r.prefixes}};
  if (!r.holdout.empty()) j["holdout"] = r.holdout;
  if (!r.context_prompt.empty()) j["context"] = r.context_prompt;
  return j;
}

Json ToJson(const EditReport& r) {
  return {{"target_sid", r.target},
          {"efficacy", r.efficacy},
          {"decoded_sids", r.decoded},
          {"locality", r.locality},
          {"constraint_residual", r.constraint_residual},
          {"drift", r.drift},
          {"initial_loss", r.initial_loss},
          {"final_loss", r.final_loss},
          {"steps", r.steps}};
}

Json ToJson(const MetricsSummary& m) {
  return {{"K", m.k},
          {"recall", m.recall},
          {"precision", m.precision},
          {"map", m.map},
          {"n_records", m.n_records}};
}

Json ToJson(const EvolutionScenario& s) {
  auto ids = [](const std::vector<CorpusRecord>& rs) {
    Json a = Json::array();
    for (const CorpusRecord& r : rs) a.push_back(r.id);
    return a;
  };
  Json edits = Json::array();
  for (const ScenarioEdit& e : s.edits) edits.push_back({{"target_sid", e.target}, {"record", e.record.id}});
  return {{"newborn", s.newborn},
          {"dying", s.dying},
          {"volatile", s.volatile_services},
          {"base_train", ids(s.base_train)},
          {"edits", edits},
          {"condition1", ids(s.condition1)},
          {"condition2", ids(s.test_new)},
          {"test_preserve", ids(s.test_preserve)},
          {"warnings", s.warnings}};
}

}  // namespace svcrec
