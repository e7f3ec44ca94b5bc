/*
 * Copyright 2026 The EDS Workbench Authors.
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

// Seeded synthetic corpora with planted positives, for demos and for tests
// that need a known ground truth.
//
// Every item gets a Gaussian latent vector. Each query is assigned a few
// distinct positive items and its latent is their mean. A model sees every
// latent through its own independent Gaussian noise, so a larger noise level
// makes a strictly weaker scorer.

#ifndef EDS_SYNTHETIC_HPP_
#define EDS_SYNTHETIC_HPP_

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "eds/corpus.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"

namespace eds {

struct SyntheticSpec {
  std::size_t num_items = 5000;
  std::size_t num_queries = 200;
  std::size_t positives_per_query = 5;
  std::size_t dim = 256;
  std::vector<double> model_noise = {0.5, 0.5, 0.5};
  std::uint64_t seed = 7;
};

struct SyntheticCorpus {
  Corpus corpus;
  std::vector<ModelHandle> models;  // "model0", "model1", ...
  std::set<PairKey> positives;      // planted
};

inline std::string SyntheticItemId(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "item%06zu", i);
  return buf;
}

inline std::string SyntheticQueryId(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "query%05zu", i);
  return buf;
}

// Queries are disjoint from items, so |A| = |Q| |D| and the planted base
// rate is positives_per_query / num_items.
inline SyntheticCorpus MakeSyntheticCorpus(const SyntheticSpec& spec) {
  if (spec.num_items == 0 || spec.num_queries == 0 || spec.dim == 0) {
    throw InvalidArgument("synthetic corpus needs items, queries and a dimension");
  }
  if (spec.positives_per_query == 0 || spec.positives_per_query > spec.num_items) {
    throw InvalidArgument("positives_per_query must be in [1, num_items]");
  }
  if (spec.model_noise.empty()) throw InvalidArgument("need at least one model");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<ItemId> items(spec.num_items);
  std::vector<ItemId> queries(spec.num_queries);
  for (std::size_t i = 0; i < spec.num_items; ++i) items[i] = SyntheticItemId(i);
  for (std::size_t i = 0; i < spec.num_queries; ++i) queries[i] = SyntheticQueryId(i);

  std::vector<std::vector<double>> item_latent(spec.num_items, std::vector<double>(spec.dim));
  for (auto& v : item_latent) {
    for (auto& x : v) x = gauss(rng);
  }

  SyntheticCorpus out;
  std::vector<std::vector<double>> query_latent(spec.num_queries,
                                                std::vector<double>(spec.dim, 0.0));
  std::uniform_int_distribution<std::size_t> pick(0, spec.num_items - 1);
  for (std::size_t q = 0; q < spec.num_queries; ++q) {
    std::set<std::size_t> chosen;
    while (chosen.size() < spec.positives_per_query) chosen.insert(pick(rng));
    for (const std::size_t i : chosen) {
      out.positives.insert(PairKey{queries[q], items[i]});
      for (std::size_t d = 0; d < spec.dim; ++d) query_latent[q][d] += item_latent[i][d];
    }
    for (auto& x : query_latent[q]) x /= static_cast<double>(spec.positives_per_query);
  }

  for (std::size_t m = 0; m < spec.model_noise.size(); ++m) {
    const double sigma = spec.model_noise[m];
    EmbeddingTable table(spec.dim);
    auto noisy = [&](const std::vector<double>& latent) {
      std::vector<double> v(latent);
      for (auto& x : v) x += sigma * gauss(rng);
      return v;
    };
    for (std::size_t i = 0; i < spec.num_items; ++i) table.Add(items[i], noisy(item_latent[i]));
    for (std::size_t q = 0; q < spec.num_queries; ++q) {
      table.Add(queries[q], noisy(query_latent[q]));
    }
    out.models.push_back(ModelHandle::FromEmbeddings("model" + std::to_string(m), std::move(table)));
  }
  out.corpus = Corpus(std::move(items), std::move(queries));
  return out;
}

// Planted truth restricted to `pairs`: the labels an ideal expert panel would
// give.
inline GroundTruth PlantedLabels(const SyntheticCorpus& synth, const std::set<PairKey>& pairs) {
  GroundTruth gt;
  gt.source = GroundTruthSource::kSynthetic;
  for (const auto& key : pairs) {
    gt.Set(key, synth.positives.count(key) ? Label::kPositive : Label::kNegative);
  }
  return gt;
}

// Writes manifest.tsv, <model>.emb.tsv per model and truth.tsv (planted
// positives) into `dir`.
inline void WriteSyntheticDataset(const SyntheticCorpus& synth, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    auto out = text::OpenForWrite((dir / "manifest.tsv").string());
    WriteManifest(out, synth.corpus);
  }
  for (const auto& m : synth.models) {
    auto out = text::OpenForWrite((dir / (m.name() + ".emb.tsv")).string());
    WriteEmbeddings(out, m);
  }
  GroundTruth truth;
  truth.source = GroundTruthSource::kSynthetic;
  for (const auto& key : synth.positives) truth.Set(key, Label::kPositive);
  WriteLabelsTsv((dir / "truth.tsv").string(), truth);
}

}  // namespace eds

#endif  // EDS_SYNTHETIC_HPP_
