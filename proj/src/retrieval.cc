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

#include "svcrec/retrieval.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "svcrec/lexicon.h"

namespace svcrec {
namespace {

std::string Join(const std::vector<std::string>& items) {
  std::string out;
  for (const std::string& s : items) {
    if (!out.empty()) out += ", ";
    out += s;
  }
  return out;
}

}  // namespace

TfIdfEmbedder::TfIdfEmbedder(std::span<const std::string> documents) {
  std::map<std::string, std::size_t> df;
  for (const std::string& doc : documents) {
    const auto words = SplitTextWords(doc);
    for (const std::string& w : std::set<std::string>(words.begin(), words.end())) ++df[w];
  }
  const auto n = static_cast<double>(documents.size());
  for (const auto& [word, count] : df) {
    index_.emplace(word, idf_.size());
    idf_.push_back(std::log((1.0 + n) / (1.0 + static_cast<double>(count))) + 1.0);
  }
}

std::vector<double> TfIdfEmbedder::Embed(const std::string& text) const {
  std::vector<double> v(idf_.size(), 0.0);
  for (const std::string& w : SplitTextWords(text)) {
    auto it = index_.find(w);
    if (it != index_.end()) v[it->second] += idf_[it->second];
  }
  const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

double CosineSim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("shape_mismatch", "cosine of vectors of unequal size");
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("zero_norm", "cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<CorpusRecord> TopK(const std::string& query, std::span<const CorpusRecord> corpus,
                               std::size_t k, const EmbeddingProvider& provider,
                               const Reranker& reranker) {
  if (k < 1) throw Error("bad_config", "top-k needs k >= 1");
  const std::vector<double> q = provider.Embed(query);
  auto is_zero = [](const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
  };
  struct Scored {
    double sim;
    const CorpusRecord* record;
  };
  std::vector<Scored> scored;
  for (const CorpusRecord& r : corpus) {
    if (r.description == query) continue;
    const std::vector<double> e = provider.Embed(r.description);
    const double sim = is_zero(q) || is_zero(e) ? 0.0 : CosineSim(q, e);
    scored.push_back({sim, &r});
  }
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.sim != b.sim) return a.sim > b.sim;
    return a.record->id < b.record->id;
  });
  std::vector<CorpusRecord> out;
  for (std::size_t i = 0; i < scored.size() && i < k; ++i) out.push_back(*scored[i].record);
  if (reranker) out = reranker(query, std::move(out));
  return out;
}

std::string PromptBundle::Render() const {
  std::ostringstream os;
  os << "You are an expert in " << (domain.empty() ? "" : domain + " ")
     << "API and service recommendation for mashup applications.\n"
     << "Your task is to read a short description of an application idea and output a list "
        "of the most relevant APIs that can support its implementation.\n\n"
     << "Input description: " << description << "\n"
     << "Categories: " << Join(categories) << "\n\n"
     << "Similar examples:\n";
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const CorpusRecord& n = neighbors[i];
    os << "  " << (i + 1) << ". Description: " << n.description << "\n"
       << "     Categories: " << Join(n.categories) << "\n"
       << "     Related APIs: " << Join(n.apis) << "\n";
  }
  os << "\nOutput:\n";
  return os.str();
}

PromptBundle BuildPrompt(const std::string& query, std::vector<std::string> categories,
                         std::span<const CorpusRecord> neighbors, std::size_t k,
                         std::string domain) {
  PromptBundle bundle;
  bundle.domain = std::move(domain);
  bundle.description = query;
  bundle.categories = std::move(categories);
  for (const CorpusRecord& r : neighbors) {
    if (bundle.neighbors.size() == k) break;
    if (r.description == query) continue;
    bundle.neighbors.push_back(r);
  }
  return bundle;
}

}  // namespace svcrec
