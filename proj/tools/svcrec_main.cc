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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "svcrec/io.h"
#include "svcrec/pipeline.h"

namespace fs = std::filesystem;

namespace {

void PrintError(const std::string& code, const std::string& message) {
  std::cerr << svcrec::Json{{"error", code}, {"message", message}}.dump() << "\n";
}

void RequireFile(const fs::path& p) {
  if (!fs::exists(p)) throw svcrec::Error("missing_input", "no such file: " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"svcrec: constrained generative service recommendation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  app.add_option("--config", config_path, "JSON run configuration");
  app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--out", out, "Output directory");

  std::string corpus, artifacts, model, edits, queries, predictions, gold, traces, raw, scenario;

  auto* build = app.add_subcommand("build", "Tokenizer, lexicon and trie from a corpus");
  build->add_option("--corpus", corpus)->required();

  auto* split = app.add_subcommand("split", "Chronological split and evolution scenario");
  split->add_option("--corpus", corpus)->required();
  split->add_option("--artifacts", artifacts)->required();

  auto* prompt = app.add_subcommand("prompt", "Retrieval-augmented prompts");
  prompt->add_option("--corpus", corpus, "Retrieval pool")->required();
  prompt->add_option("--queries", queries)->required();

  auto* train = app.add_subcommand("train", "Train the toy model");
  train->add_option("--corpus", corpus)->required();
  train->add_option("--artifacts", artifacts)->required();

  auto* edit = app.add_subcommand("edit", "Apply a batch of edits");
  edit->add_option("--model", model)->required();
  edit->add_option("--edits", edits)->required();
  edit->add_option("--corpus", corpus, "Texts for the key covariance")->required();
  edit->add_option("--artifacts", artifacts)->required();

  auto* decode = app.add_subcommand("decode", "Constrained decoding of queries");
  decode->add_option("--model", model)->required();
  decode->add_option("--queries", queries)->required();
  decode->add_option("--artifacts", artifacts)->required();
  decode->add_option("--scenario", scenario, "Exclude the scenario's dying services");

  auto* evaluate = app.add_subcommand("evaluate", "Recall, precision and MAP at K");
  evaluate->add_option("--predictions", predictions)->required();
  evaluate->add_option("--gold", gold)->required();
  evaluate->add_option("--artifacts", artifacts)->required();

  auto* analyze = app.add_subcommand("analyze", "Probability cost, entropy and validity");
  analyze->add_option("--traces", traces)->required();
  analyze->add_option("--raw", raw)->required();
  analyze->add_option("--artifacts", artifacts)->required();

  auto* run = app.add_subcommand("run", "Whole pipeline on one corpus");
  run->add_option("--corpus", corpus)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    PrintError("usage", e.what());
    return 2;
  }

  try {
    svcrec::Json cfg = svcrec::Json::object();
    if (!config_path.empty()) {
      RequireFile(config_path);
      try {
        cfg = svcrec::Json::parse(svcrec::ReadFile(config_path));
      } catch (const svcrec::Json::exception& e) {
        throw svcrec::Error("config", config_path + ": " + e.what());
      }
    }
    if (seed) cfg["seed"] = *seed;
    const svcrec::RunConfig config = svcrec::RunConfigFromJson(cfg);
    config.RequireSeed();

    for (const std::string* p : {&corpus, &artifacts, &model, &edits, &queries, &predictions,
                                 &gold, &traces, &raw, &scenario}) {
      if (!p->empty()) RequireFile(*p);
    }
    const fs::path o(out);
    if (*build) {
      svcrec::RunBuild(config, corpus, o);
    } else if (*split) {
      svcrec::RunSplit(config, corpus, artifacts, o);
    } else if (*prompt) {
      svcrec::RunPrompt(config, corpus, queries, o);
    } else if (*train) {
      svcrec::RunTrain(config, corpus, artifacts, o);
    } else if (*edit) {
      svcrec::RunEdit(config, model, edits, corpus, artifacts, o);
    } else if (*decode) {
      std::optional<fs::path> sc;
      if (!scenario.empty()) sc = scenario;
      svcrec::RunDecode(config, model, queries, artifacts, sc, o);
    } else if (*evaluate) {
      svcrec::RunEvaluate(config, predictions, gold, artifacts, o);
    } else if (*analyze) {
      svcrec::RunAnalyze(config, traces, raw, artifacts, o);
    } else if (*run) {
      svcrec::RunPipeline(config, corpus, o);
    }
  } catch (const svcrec::Error& e) {
    PrintError(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    PrintError("internal", e.what());
    return 1;
  }
  return 0;
}
