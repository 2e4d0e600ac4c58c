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

#include "svcrec/pipeline.h"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>

#include "svcrec/analysis.h"

namespace svcrec {
namespace {

template <typename T>
void Take(const Json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void CheckKeys(const Json& j, std::initializer_list<std::string_view> allowed,
               const std::string& where) {
  if (!j.is_object()) throw Error("config", where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error("config", "unknown key " + where + "." + key);
    }
  }
}

std::string Hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void WriteJson(const fs::path& path, const Json& j) { WriteFile(path, j.dump(2) + "\n"); }

void WriteManifest(const RunConfig& config, const std::string& command,
                   const std::map<std::string, std::string>& inputs,
                   const std::vector<std::string>& outputs, const fs::path& out) {
  const Json cfg = ToJson(config);
  Json in = Json::object();
  for (const auto& [name, path] : inputs) {
    in[name] = {{"path", path}, {"fnv1a64", Hex64(Fnv1a64(ReadFile(path)))}};
  }
  Json m = {{"command", command},
            {"version", kVersion},
            {"seed", config.RequireSeed()},
            {"config", cfg},
            {"config_hash", Hex64(Fnv1a64(cfg.dump()))},
            {"inputs", in},
            {"outputs", outputs}};
  WriteJson(out / (command + ".manifest.json"), m);
}

Lexicon LoadLexicon(const fs::path& artifacts) {
  return LexiconFromFiles(artifacts / "lexicon.jsonl", artifacts / "tokenizer.json");
}

std::vector<CorpusRecord> RequireNonEmpty(std::vector<CorpusRecord> records, const fs::path& p) {
  if (records.empty()) throw Error("empty_corpus", p.string() + " holds no records");
  return records;
}

void WriteRecords(const fs::path& path, std::span<const CorpusRecord> records) {
  std::vector<Json> lines;
  for (const CorpusRecord& r : records) lines.push_back(ToJson(r));
  WriteFile(path, ToJsonLines(lines));
}

std::vector<std::string> Descriptions(std::span<const CorpusRecord> records) {
  std::vector<std::string> out;
  for (const CorpusRecord& r : records) out.push_back(r.description);
  return out;
}

}  // namespace

RunConfig::RunConfig() {
  train.d_hidden = 128;
  edit.layer = 0;
  edit.v_lr = 0.5;
  edit.num_grad_steps = 100;
}

void RunConfig::Validate() const {
  if (num_segments < 2) throw Error("config", "num_segments must be at least 2");
  if (!(train_frac > 0.0 && train_frac <= 1.0)) throw Error("config", "train_frac must be in (0,1]");
  if (!(volatility_threshold >= 0.0)) throw Error("config", "volatility_threshold must be >= 0");
  if (num_prefixes < 1) throw Error("config", "num_prefixes must be positive");
  if (num_holdout < 0) throw Error("config", "num_holdout must be >= 0");
  if (retrieval_k == 0) throw Error("config", "retrieval_k must be positive");
  if (eval_k.empty()) throw Error("config", "eval_k must not be empty");
  for (int k : eval_k) {
    if (k < 1) throw Error("config", "eval_k entries must be positive");
  }
  if (train.steps < 0 || train.eval_every < 1 || !(train.learning_rate > 0.0)) {
    throw Error("config", "bad training hyperparameters");
  }
  decoder.Validate();
  edit.Validate();
}

std::uint64_t RunConfig::RequireSeed() const {
  if (!seed) throw Error("config", "a seed is required (--seed or config \"seed\")");
  return *seed;
}

RunConfig RunConfigFromJson(const Json& j) {
  CheckKeys(j,
            {"seed", "casing", "num_segments", "train_frac", "volatility_threshold", "train",
             "decoder", "edit", "num_prefixes", "num_holdout", "retrieval_k", "domain", "eval_k",
             "precision_denominator"},
            "config");
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("casing")) {
      const std::string s = j.at("casing").get<std::string>();
      if (s != "preserve" && s != "fold") throw Error("config", "casing must be preserve or fold");
      c.casing = s == "fold" ? Casing::kFold : Casing::kPreserve;
    }
    Take(j, "num_segments", c.num_segments);
    Take(j, "train_frac", c.train_frac);
    Take(j, "volatility_threshold", c.volatility_threshold);
    Take(j, "num_prefixes", c.num_prefixes);
    Take(j, "num_holdout", c.num_holdout);
    Take(j, "retrieval_k", c.retrieval_k);
    Take(j, "domain", c.domain);
    Take(j, "eval_k", c.eval_k);
    if (j.contains("precision_denominator")) {
      const std::string s = j.at("precision_denominator").get<std::string>();
      if (s != "returned" && s != "k") throw Error("config", "precision_denominator must be returned or k");
      c.precision_denominator = s == "k" ? PrecisionDenominator::kK : PrecisionDenominator::kReturned;
    }
    if (j.contains("train")) {
      const Json& t = j.at("train");
      CheckKeys(t, {"d_model", "d_hidden", "num_layers", "learning_rate", "steps", "eval_every"},
                "train");
      Take(t, "d_model", c.train.d_model);
      Take(t, "d_hidden", c.train.d_hidden);
      Take(t, "num_layers", c.train.num_layers);
      Take(t, "learning_rate", c.train.learning_rate);
      Take(t, "steps", c.train.steps);
      Take(t, "eval_every", c.train.eval_every);
    }
    if (j.contains("decoder")) {
      const Json& d = j.at("decoder");
      CheckKeys(d, {"max_tokens", "renormalize_masked"}, "decoder");
      Take(d, "max_tokens", c.decoder.max_tokens);
      Take(d, "renormalize_masked", c.decoder.renormalize_masked);
    }
    if (j.contains("edit")) {
      const Json& e = j.at("edit");
      CheckKeys(e,
                {"num_grad_steps", "v_lr", "weight_decay", "clamp_factor", "kl_factor",
                 "early_stop_loss", "layer"},
                "edit");
      Take(e, "num_grad_steps", c.edit.num_grad_steps);
      Take(e, "v_lr", c.edit.v_lr);
      Take(e, "weight_decay", c.edit.weight_decay);
      Take(e, "clamp_factor", c.edit.clamp_factor);
      Take(e, "kl_factor", c.edit.kl_factor);
      Take(e, "early_stop_loss", c.edit.early_stop_loss);
      Take(e, "layer", c.edit.layer);
    }
  } catch (const Json::exception& e) {
    throw Error("config", std::string("bad config value: ") + e.what());
  }
  if (c.seed) c.train.seed = *c.seed;
  c.Validate();
  return c;
}

Json ToJson(const RunConfig& c) {
  Json j = {
      {"casing", c.casing == Casing::kFold ? "fold" : "preserve"},
      {"num_segments", c.num_segments},
      {"train_frac", c.train_frac},
      {"volatility_threshold", c.volatility_threshold},
      {"train",
       {{"d_model", c.train.d_model},
        {"d_hidden", c.train.d_hidden},
        {"num_layers", c.train.num_layers},
        {"learning_rate", c.train.learning_rate},
        {"steps", c.train.steps},
        {"eval_every", c.train.eval_every}}},
      {"decoder",
       {{"max_tokens", c.decoder.max_tokens}, {"renormalize_masked", c.decoder.renormalize_masked}}},
      {"edit",
       {{"num_grad_steps", c.edit.num_grad_steps},
        {"v_lr", c.edit.v_lr},
        {"weight_decay", c.edit.weight_decay},
        {"clamp_factor", c.edit.clamp_factor},
        {"kl_factor", c.edit.kl_factor},
        {"early_stop_loss", c.edit.early_stop_loss},
        {"layer", c.edit.layer}}},
      {"num_prefixes", c.num_prefixes},
      {"num_holdout", c.num_holdout},
      {"retrieval_k", c.retrieval_k},
      {"domain", c.domain},
      {"eval_k", c.eval_k},
      {"precision_denominator",
       c.precision_denominator == PrecisionDenominator::kK ? "k" : "returned"}};
  j["seed"] = c.seed ? Json(*c.seed) : Json(nullptr);
  return j;
}

std::uint64_t Fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Lexicon BuildCorpusLexicon(std::span<const CorpusRecord> corpus, Casing casing) {
  if (corpus.empty()) throw Error("empty_corpus", "corpus holds no records");
  std::set<std::string> names;
  std::vector<std::string> texts;
  for (const CorpusRecord& r : corpus) {
    names.insert(r.apis.begin(), r.apis.end());
    texts.push_back(r.description);
  }
  std::map<ServiceId, std::string> by_sid;
  ServiceId next = 0;
  for (const std::string& name : names) by_sid.emplace(next++, name);
  return Lexicon::FromNames(by_sid, texts, casing);
}

TrainCorpus MakeTrainCorpus(std::span<const CorpusRecord> records, const Lexicon& lexicon) {
  const Tokenizer& tok = lexicon.tokenizer();
  TrainCorpus corpus;
  corpus.vocab_size = static_cast<int>(tok.size());
  corpus.bos_id = tok.bos_id();
  for (const CorpusRecord& r : records) {
    TrainExample ex;
    ex.prompt = tok.EncodeText(r.description);
    std::set<ServiceId> seen;
    for (const std::string& api : r.apis) {
      const auto sid = lexicon.FindByName(api);
      if (!sid) throw Error("unknown_service", "record " + r.id + " uses unknown api " + api);
      if (!seen.insert(*sid).second) continue;
      if (!ex.target.empty()) ex.target.push_back(tok.sep_id());
      const auto& tokens = lexicon.entry(*sid).tokens;
      ex.target.insert(ex.target.end(), tokens.begin(), tokens.end());
    }
    ex.target.push_back(tok.eos_id());
    corpus.examples.push_back(std::move(ex));
  }
  return corpus;
}

std::vector<std::vector<TokenId>> FullSequences(const TrainCorpus& corpus) {
  std::vector<std::vector<TokenId>> out;
  for (const TrainExample& ex : corpus.examples) {
    std::vector<TokenId> seq = ex.prompt;
    seq.insert(seq.end(), ex.target.begin(), ex.target.end());
    out.push_back(std::move(seq));
  }
  return out;
}

DecodeRecord DecodeQuery(const ToyLM& model, const Lexicon& lexicon, const TokenTrie& trie,
                         const DecoderConfig& config, const CorpusRecord& query,
                         DecodeTrace* trace) {
  const Tokenizer& tok = lexicon.tokenizer();
  const std::vector<TokenId> prompt = tok.EncodeText(query.description);
  ModelLogitProvider provider(model);
  DecodeResult res = Decode(provider, trie, {tok.sep_id(), tok.eos_id()}, config, prompt);
  if (trace) {
    *trace = std::move(res.trace);
    trace->query_id = query.id;
  }
  return {query.id, std::move(res.sids), std::move(res.tokens), res.truncated};
}

std::vector<EvalRecord> MakeEvalRecords(std::span<const CorpusRecord> gold,
                                        std::span<const DecodeRecord> decodes,
                                        const Lexicon& lexicon) {
  std::map<std::string, const DecodeRecord*> by_id;
  for (const DecodeRecord& d : decodes) {
    if (!by_id.emplace(d.query_id, &d).second) {
      throw Error("duplicate_query", "two decodes for query " + d.query_id);
    }
  }
  std::vector<EvalRecord> out;
  for (const CorpusRecord& r : gold) {
    EvalRecord e;
    e.query_id = r.id;
    e.gold = GoldSids(r, lexicon);
    if (auto it = by_id.find(r.id); it != by_id.end()) e.predicted = it->second->sids;
    e.Validate();
    out.push_back(std::move(e));
  }
  return out;
}

EditRequest MakeEditRequest(const CorpusRecord& record, ServiceId target,
                            std::span<const std::string> prefix_texts,
                            std::vector<std::string> holdout, int num_prefixes,
                            std::mt19937_64& rng) {
  EditRequest r;
  r.query = record.description;
  r.target = target;
  r.prefixes = DefaultPrefixes(prefix_texts, num_prefixes, rng);
  r.holdout = std::move(holdout);
  return r;
}

ToyLM ApplyEdits(const ToyLM& model, const Lexicon& lexicon, const TokenTrie& trie,
                 std::span<const EditRequest> requests, const EditConfig& config,
                 const KeyCovariance& cov, const DecoderConfig& decoder,
                 std::vector<EditReport>* reports) {
  ToyLM current = model;
  for (const EditRequest& req : requests) {
    EditOutcome outcome = ApplyEdit(current, lexicon, trie, req, config, cov, decoder);
    current = std::move(outcome.model);
    if (reports) reports->push_back(std::move(outcome.report));
  }
  return current;
}

void RunBuild(const RunConfig& config, const fs::path& corpus, const fs::path& out) {
  const auto records = RequireNonEmpty(ReadCorpus(corpus), corpus);
  const Lexicon lexicon = BuildCorpusLexicon(records, config.casing);
  WriteFile(out / "lexicon.jsonl", ToJsonLines(LexiconToJsonLines(lexicon)));
  WriteJson(out / "tokenizer.json", TokenizerToJson(lexicon.tokenizer()));
  WriteJson(out / "trie.json", TrieToJson(lexicon.BuildTrie()));
  WriteManifest(config, "build", {{"corpus", corpus.string()}},
                {"lexicon.jsonl", "tokenizer.json", "trie.json"}, out);
}

void RunSplit(const RunConfig& config, const fs::path& corpus, const fs::path& artifacts,
              const fs::path& out) {
  const auto records = RequireNonEmpty(ReadCorpus(corpus), corpus);
  const Lexicon lexicon = LoadLexicon(artifacts);
  const std::uint64_t seed = config.RequireSeed();
  const SplitPlan plan = ChronologicalSplit(records, config.num_segments, config.train_frac);
  const EvolutionScenario s =
      BuildEvolutionScenario(plan, lexicon, config.volatility_threshold, seed);

  std::mt19937_64 rng(seed);
  const std::vector<std::string> texts = Descriptions(s.base_train);
  std::vector<std::string> holdout = texts;
  std::shuffle(holdout.begin(), holdout.end(), rng);
  if (holdout.size() > static_cast<std::size_t>(config.num_holdout)) {
    holdout.resize(config.num_holdout);
  }
  std::vector<Json> edits;
  for (const ScenarioEdit& e : s.edits) {
    edits.push_back(
        ToJson(MakeEditRequest(e.record, e.target, texts, holdout, config.num_prefixes, rng)));
  }
  WriteJson(out / "scenario.json", ToJson(s));
  WriteRecords(out / "base_train.jsonl", s.base_train);
  WriteRecords(out / "condition1.jsonl", s.condition1);
  WriteRecords(out / "condition2.jsonl", s.test_new);
  WriteRecords(out / "test_preserve.jsonl", s.test_preserve);
  WriteFile(out / "edits.jsonl", ToJsonLines(edits));
  WriteManifest(config, "split",
                {{"corpus", corpus.string()},
                 {"lexicon", (artifacts / "lexicon.jsonl").string()},
                 {"tokenizer", (artifacts / "tokenizer.json").string()}},
                {"scenario.json", "base_train.jsonl", "condition1.jsonl", "condition2.jsonl",
                 "test_preserve.jsonl", "edits.jsonl"},
                out);
}

void RunPrompt(const RunConfig& config, const fs::path& corpus, const fs::path& queries,
               const fs::path& out) {
  const auto pool = RequireNonEmpty(ReadCorpus(corpus), corpus);
  const auto asks = ReadCorpus(queries);
  const std::vector<std::string> docs = Descriptions(pool);
  const TfIdfEmbedder embedder(docs);
  std::vector<Json> lines;
  for (const CorpusRecord& q : asks) {
    const auto neighbors = TopK(q.description, pool, config.retrieval_k, embedder);
    Json ids = Json::array();
    for (const CorpusRecord& n : neighbors) ids.push_back(n.id);
    const PromptBundle bundle =
        BuildPrompt(q.description, q.categories, neighbors, config.retrieval_k, config.domain);
    lines.push_back({{"query_id", q.id}, {"neighbors", ids}, {"prompt", bundle.Render()}});
  }
  WriteFile(out / "prompts.jsonl", ToJsonLines(lines));
  WriteManifest(config, "prompt", {{"corpus", corpus.string()}, {"queries", queries.string()}},
                {"prompts.jsonl"}, out);
}

void RunTrain(const RunConfig& config, const fs::path& corpus, const fs::path& artifacts,
              const fs::path& out) {
  const auto records = RequireNonEmpty(ReadCorpus(corpus), corpus);
  const Lexicon lexicon = LoadLexicon(artifacts);
  TrainHyper hyper = config.train;
  hyper.seed = config.RequireSeed();
  TrainReport report;
  const ToyLM model = TrainToy(MakeTrainCorpus(records, lexicon), hyper, &report);
  WriteFile(out / "model.json", SerializeModel(model));
  WriteJson(out / "train_report.json", {{"checkpoint_losses", report.checkpoint_losses},
                                        {"rollbacks", report.rollbacks},
                                        {"final_loss", report.final_loss}});
  WriteManifest(config, "train",
                {{"corpus", corpus.string()},
                 {"lexicon", (artifacts / "lexicon.jsonl").string()},
                 {"tokenizer", (artifacts / "tokenizer.json").string()}},
                {"model.json", "train_report.json"}, out);
}

void RunEdit(const RunConfig& config, const fs::path& model_path, const fs::path& edits,
             const fs::path& corpus, const fs::path& artifacts, const fs::path& out) {
  config.RequireSeed();
  const Lexicon lexicon = LoadLexicon(artifacts);
  const ToyLM model = DeserializeModel(ReadFile(model_path));
  const auto records = RequireNonEmpty(ReadCorpus(corpus), corpus);
  std::vector<EditRequest> requests;
  for (const Json& j : ReadJsonLines(edits)) requests.push_back(EditRequestFromJson(j));
  for (const EditRequest& r : requests) r.Validate(lexicon);

  const int layer = config.edit.ResolveLayer(model);
  const KeyCovariance cov =
      EstimateCovariance(model, FullSequences(MakeTrainCorpus(records, lexicon)), layer);
  const TokenTrie trie = lexicon.BuildTrie();
  std::vector<EditReport> reports;
  const ToyLM edited =
      ApplyEdits(model, lexicon, trie, requests, config.edit, cov, config.decoder, &reports);

  std::vector<Json> lines;
  int hits = 0;
  double locality = 0.0;
  for (const EditReport& r : reports) {
    lines.push_back(ToJson(r));
    hits += r.efficacy ? 1 : 0;
    locality += r.locality;
  }
  WriteFile(out / "model.json", SerializeModel(edited));
  WriteFile(out / "edit_report.jsonl", ToJsonLines(lines));
  WriteJson(out / "edit_summary.json",
            {{"num_edits", reports.size()},
             {"efficacy_hits", hits},
             {"mean_locality", reports.empty() ? 1.0 : locality / reports.size()},
             {"layer", layer},
             {"covariance_samples", cov.sample_count},
             {"covariance_epsilon", cov.epsilon}});
  WriteManifest(config, "edit",
                {{"model", model_path.string()},
                 {"edits", edits.string()},
                 {"corpus", corpus.string()},
                 {"lexicon", (artifacts / "lexicon.jsonl").string()},
                 {"tokenizer", (artifacts / "tokenizer.json").string()}},
                {"model.json", "edit_report.jsonl", "edit_summary.json"}, out);
}

void RunDecode(const RunConfig& config, const fs::path& model_path, const fs::path& queries,
               const fs::path& artifacts, const std::optional<fs::path>& scenario,
               const fs::path& out) {
  config.RequireSeed();
  const Lexicon lexicon = LoadLexicon(artifacts);
  const ToyLM model = DeserializeModel(ReadFile(model_path));
  const auto asks = ReadCorpus(queries);
  std::vector<ServiceId> excluded;
  std::map<std::string, std::string> inputs = {
      {"model", model_path.string()},
      {"queries", queries.string()},
      {"lexicon", (artifacts / "lexicon.jsonl").string()},
      {"tokenizer", (artifacts / "tokenizer.json").string()}};
  if (scenario) {
    try {
      excluded = Json::parse(ReadFile(*scenario)).at("dying").get<std::vector<ServiceId>>();
    } catch (const Json::exception& e) {
      throw Error("schema", std::string("bad scenario file: ") + e.what());
    }
    inputs["scenario"] = scenario->string();
  }
  const TokenTrie trie = lexicon.BuildTrie(excluded);
  const Tokenizer& tok = lexicon.tokenizer();
  const SpecialTokens special{tok.sep_id(), tok.eos_id()};
  const std::set<ServiceId> excluded_set(excluded.begin(), excluded.end());

  std::vector<Json> decodes, traces, raws;
  std::vector<std::vector<TokenId>> complete, raw_sequences;
  std::size_t excluded_emissions = 0;
  for (const CorpusRecord& q : asks) {
    DecodeTrace trace;
    const DecodeRecord d = DecodeQuery(model, lexicon, trie, config.decoder, q, &trace);
    for (ServiceId s : d.sids) excluded_emissions += excluded_set.count(s);
    decodes.push_back(ToJson(d));
    for (Json& line : TraceToJsonLines(trace)) traces.push_back(std::move(line));
    if (!d.truncated) complete.push_back(d.tokens);

    ModelLogitProvider provider(model);
    const DecodeResult raw =
        DecodeUnconstrained(provider, special, config.decoder, tok.EncodeText(q.description));
    const bool valid = IsValidServiceSequence(raw.tokens, trie, special.sep, special.eos);
    raws.push_back(
        {{"query_id", q.id}, {"tokens", raw.tokens}, {"truncated", raw.truncated}, {"valid", valid}});
    raw_sequences.push_back(raw.tokens);
  }
  WriteFile(out / "decodes.jsonl", ToJsonLines(decodes));
  WriteFile(out / "traces.jsonl", ToJsonLines(traces));
  WriteFile(out / "raw_decodes.jsonl", ToJsonLines(raws));
  WriteJson(out / "decode_summary.json",
            {{"n_queries", asks.size()},
             {"n_truncated", asks.size() - complete.size()},
             {"constrained_validity_rate",
              complete.empty() ? 1.0 : ValidityRate(complete, trie, special.sep, special.eos)},
             {"raw_validity_rate",
              raw_sequences.empty() ? 1.0
                                    : ValidityRate(raw_sequences, trie, special.sep, special.eos)},
             {"excluded_sids", excluded},
             {"excluded_emissions", excluded_emissions}});
  WriteManifest(config, "decode", inputs,
                {"decodes.jsonl", "traces.jsonl", "raw_decodes.jsonl", "decode_summary.json"}, out);
}

void RunEvaluate(const RunConfig& config, const fs::path& predictions, const fs::path& gold,
                 const fs::path& artifacts, const fs::path& out) {
  config.RequireSeed();
  const Lexicon lexicon = LoadLexicon(artifacts);
  const auto records = ReadCorpus(gold);
  std::vector<DecodeRecord> decodes;
  for (const Json& j : ReadJsonLines(predictions)) decodes.push_back(DecodeRecordFromJson(j));
  const std::vector<EvalRecord> evals = MakeEvalRecords(records, decodes, lexicon);

  Json metrics = Json::array();
  for (int k : config.eval_k) {
    metrics.push_back(ToJson(Summarize(evals, k, config.precision_denominator)));
  }
  double returned = 0.0, golds = 0.0;
  for (const EvalRecord& e : evals) {
    returned += static_cast<double>(e.predicted.size());
    golds += static_cast<double>(e.gold.size());
  }
  const double n = evals.empty() ? 1.0 : static_cast<double>(evals.size());
  WriteJson(out / "metrics.json",
            {{"metrics", metrics},
             {"n_records", evals.size()},
             {"mean_returned", returned / n},
             {"mean_gold", golds / n},
             {"precision_denominator",
              config.precision_denominator == PrecisionDenominator::kK ? "k" : "returned"}});
  WriteManifest(config, "evaluate",
                {{"predictions", predictions.string()},
                 {"gold", gold.string()},
                 {"lexicon", (artifacts / "lexicon.jsonl").string()},
                 {"tokenizer", (artifacts / "tokenizer.json").string()}},
                {"metrics.json"}, out);
}

void RunAnalyze(const RunConfig& config, const fs::path& traces_path,
                const fs::path& raw_decodes, const fs::path& artifacts, const fs::path& out) {
  config.RequireSeed();
  const Lexicon lexicon = LoadLexicon(artifacts);
  const std::vector<DecodeTrace> traces = TracesFromJsonLines(ReadJsonLines(traces_path));
  if (traces.empty()) throw Error("empty_input", traces_path.string() + " holds no steps");

  std::vector<bool> raw_valid;
  for (const Json& j : ReadJsonLines(raw_decodes)) {
    try {
      raw_valid.push_back(j.at("valid").get<bool>());
    } catch (const Json::exception& e) {
      throw Error("schema", std::string("bad raw decode record: ") + e.what());
    }
  }
  std::vector<QueryDiagnostics> diags;
  double cost = 0.0, h_raw = 0.0, h_masked = 0.0;
  std::size_t steps = 0, overridden = 0;
  for (const DecodeTrace& t : traces) {
    cost += ProbabilityCost(t);
    for (const TraceStep& s : t.steps) {
      h_raw += s.raw_entropy;
      h_masked += s.masked_entropy;
      overridden += s.overridden() ? 1 : 0;
      ++steps;
    }
    diags.push_back({t, RawTokenValidity(t)});
  }
  const std::size_t valid_count = std::count(raw_valid.begin(), raw_valid.end(), true);
  WriteJson(out / "analysis.json",
            {{"n_traces", traces.size()},
             {"n_steps", steps},
             {"mean_probability_cost", cost / static_cast<double>(traces.size())},
             {"mean_raw_entropy", h_raw / static_cast<double>(steps)},
             {"mean_masked_entropy", h_masked / static_cast<double>(steps)},
             {"override_rate", static_cast<double>(overridden) / static_cast<double>(steps)},
             {"raw_validity_rate",
              raw_valid.empty() ? 1.0
                                : static_cast<double>(valid_count) / raw_valid.size()}});
  WriteFile(out / "tradeoff.csv", TradeoffCsv(TradeoffReport(diags)));
  WriteManifest(config, "analyze",
                {{"traces", traces_path.string()},
                 {"raw_decodes", raw_decodes.string()},
                 {"lexicon", (artifacts / "lexicon.jsonl").string()},
                 {"tokenizer", (artifacts / "tokenizer.json").string()}},
                {"analysis.json", "tradeoff.csv"}, out);
}

void RunPipeline(const RunConfig& config, const fs::path& corpus, const fs::path& out) {
  config.RequireSeed();
  const fs::path build = out / "build", split = out / "split", train = out / "train",
                 edit = out / "edit";
  RunBuild(config, corpus, build);
  RunSplit(config, corpus, build, split);
  RunPrompt(config, split / "base_train.jsonl", split / "condition2.jsonl", out / "prompt");
  RunTrain(config, split / "base_train.jsonl", build, train);
  RunEdit(config, train / "model.json", split / "edits.jsonl", split / "base_train.jsonl", build,
          edit);
  Json summary = Json::object();
  for (const auto& [tag, model] :
       std::vector<std::pair<std::string, fs::path>>{{"base", train / "model.json"},
                                                     {"edited", edit / "model.json"}}) {
    for (const std::string condition : {"condition1", "condition2"}) {
      const fs::path dec = out / ("decode_" + tag + "_" + condition);
      const fs::path ev = out / ("eval_" + tag + "_" + condition);
      const fs::path queries = split / (condition + ".jsonl");
      RunDecode(config, model, queries, build, split / "scenario.json", dec);
      RunEvaluate(config, dec / "decodes.jsonl", queries, build, ev);
      summary[tag][condition] = Json::parse(ReadFile(ev / "metrics.json"));
    }
  }
  RunAnalyze(config, out / "decode_edited_condition1" / "traces.jsonl",
             out / "decode_edited_condition1" / "raw_decodes.jsonl", build, out / "analyze");
  WriteJson(out / "summary.json", summary);
  WriteManifest(config, "pipeline", {{"corpus", corpus.string()}}, {"summary.json"}, out);
}

}  // namespace svcrec
