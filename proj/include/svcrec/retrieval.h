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

// Top-k example retrieval over a record corpus and prompt rendering.

#ifndef SVCREC_RETRIEVAL_H_
#define SVCREC_RETRIEVAL_H_

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "svcrec/error.h"

namespace svcrec {

struct CorpusRecord {
  std::string id;
  std::string description;
  std::vector<std::string> categories;
  std::vector<std::string> apis;
  std::string date;  // YYYY-MM-DD
};

// Text -> fixed-dimension dense vector. Must be deterministic.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> Embed(const std::string& text) const = 0;
};

// L2-normalized tf-idf over lower-cased unigrams, with
// idf(w) = ln((1 + n) / (1 + df(w))) + 1. Unknown words are ignored.
class TfIdfEmbedder : public EmbeddingProvider {
 public:
  explicit TfIdfEmbedder(std::span<const std::string> documents);

  std::size_t dimension() const override { return idf_.size(); }
  std::vector<double> Embed(const std::string& text) const override;

 private:
  std::map<std::string, std::size_t> index_;
  std::vector<double> idf_;
};

// a.b / (|a| |b|). Throws on size mismatch or a zero-norm input.
double CosineSim(std::span<const double> a, std::span<const double> b);

// Reorders candidates already sorted by similarity; identity by default.
using Reranker =
    std::function<std::vector<CorpusRecord>(const std::string& query, std::vector<CorpusRecord>)>;

// The `k` records most similar to `query`, best first. Records whose
// description equals the query are skipped; ties go to the smaller id.
// Zero-norm embeddings score 0.
std::vector<CorpusRecord> TopK(const std::string& query, std::span<const CorpusRecord> corpus,
                               std::size_t k, const EmbeddingProvider& provider,
                               const Reranker& reranker = {});

struct PromptBundle {
  std::string domain;
  std::string description;
  std::vector<std::string> categories;
  std::vector<CorpusRecord> neighbors;

  std::string Render() const;
};

PromptBundle BuildPrompt(const std::string& query, std::vector<std::string> categories,
                         std::span<const CorpusRecord> neighbors, std::size_t k = 5,
                         std::string domain = "");

}  // namespace svcrec

#endif  // SVCREC_RETRIEVAL_H_
