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

// Leave-one-out robustness of ROC-AUC with respect to which generators
// built the ground truth, summarized by Spearman correlation between model
// rankings and a permutation test against zero correlation.

#ifndef EDS_ROBUSTNESS_HPP_
#define EDS_ROBUSTNESS_HPP_

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eds/corpus.hpp"
#include "eds/discovery.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/metrics.hpp"
#include "eds/parallel.hpp"

namespace eds {

struct LooSubset {
  ModelName excluded_model;
  GroundTruth labels;
};

// One subset per generator. A labeled pair stays in the subset of generator
// m iff some generator other than m proposed it, so only pairs proposed by m
// alone are dropped.
inline std::vector<LooSubset> LeaveOneOutSubsets(const SuspectSet& s, const GroundTruth& gt) {
  std::vector<const SuspectPair*> provenance;
  provenance.reserve(gt.labels.size());
  for (const auto& [key, value] : gt.labels) {
    const SuspectPair* p = s.Find(key);
    if (p == nullptr) {
      throw NotFound("labeled pair " + key.query + " " + key.candidate +
                     " is missing from the suspect set");
    }
    provenance.push_back(p);
  }
  std::vector<LooSubset> out;
  out.reserve(s.models.size());
  for (const auto& excluded : s.models) {
    LooSubset subset;
    subset.excluded_model = excluded;
    subset.labels.num_experts = gt.num_experts;
    subset.labels.source = gt.source;
    std::size_t i = 0;
    for (const auto& [key, value] : gt.labels) {
      const auto& proposers = provenance[i++]->proposers;
      const bool kept = std::any_of(proposers.begin(), proposers.end(),
                                    [&](const Proposal& p) { return p.model != excluded; });
      if (kept) subset.labels.labels.emplace_hint(subset.labels.labels.end(), key, value);
    }
    out.push_back(std::move(subset));
  }
  return out;
}

// 1-based ranks in ascending value order; tied values share the mean rank.
inline std::vector<double> AverageRanks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double mean_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = mean_rank;
    i = j + 1;
  }
  return ranks;
}

namespace detail {

inline double Pearson(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw InvalidArgument("Spearman correlation needs non-constant inputs");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline void CheckSpearmanInputs(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("Spearman inputs differ in length");
  if (a.size() < 2) throw InvalidArgument("Spearman correlation needs at least two values");
}

}  // namespace detail

// Spearman rank correlation: Pearson correlation of the average ranks.
inline double Spearman(std::span<const double> a, std::span<const double> b) {
  detail::CheckSpearmanInputs(a, b);
  const auto ra = AverageRanks(a);
  const auto rb = AverageRanks(b);
  return detail::Pearson(ra, rb);
}

struct PermutationOptions {
  enum class Mode { kAuto, kExact, kMonteCarlo };
  Mode mode = Mode::kAuto;
  std::size_t exact_max_n = 10;  // kAuto enumerates up to this size
  std::size_t draws = 10000;
  std::uint64_t seed = 42;
};

struct PermutationResult {
  double sc = 0.0;
  double p_value = 1.0;
  bool exact = true;
  std::uint64_t permutations = 0;  // enumerated or drawn, identity included
};

// One-sided test of zero correlation: the share of permutations of `b`
// whose correlation with `a` is at least the observed one. Exact enumeration
// counts the identity among the n! orderings; Monte-Carlo reports
// (1 + hits) / (1 + draws).
inline PermutationResult PermutationPValue(std::span<const double> a, std::span<const double> b,
                                           const PermutationOptions& options = {}) {
  detail::CheckSpearmanInputs(a, b);
  const auto ra = AverageRanks(a);
  const auto rb = AverageRanks(b);
  PermutationResult r;
  r.sc = detail::Pearson(ra, rb);
  const double threshold = r.sc - 1e-12;
  const std::size_t n = ra.size();
  std::vector<double> permuted(n);
  bool exact = options.mode == PermutationOptions::Mode::kExact ||
               (options.mode == PermutationOptions::Mode::kAuto && n <= options.exact_max_n);
  if (exact && n > 12) throw InvalidArgument("exact enumeration is limited to n <= 12");
  std::uint64_t hits = 0;
  if (exact) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::uint64_t total = 0;
    do {
      for (std::size_t i = 0; i < n; ++i) permuted[i] = rb[perm[i]];
      hits += detail::Pearson(ra, permuted) >= threshold;
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    r.exact = true;
    r.permutations = total;
    r.p_value = static_cast<double>(hits) / static_cast<double>(total);
    return r;
  }
  if (options.draws < 10000) throw InvalidArgument("Monte-Carlo mode needs at least 10000 draws");
  std::mt19937_64 rng(options.seed);
  permuted.assign(rb.begin(), rb.end());
  for (std::size_t d = 0; d < options.draws; ++d) {
    std::shuffle(permuted.begin(), permuted.end(), rng);
    hits += detail::Pearson(ra, permuted) >= threshold;
  }
  r.exact = false;
  r.permutations = options.draws + 1;
  r.p_value = static_cast<double>(hits + 1) / static_cast<double>(options.draws + 1);
  return r;
}

// --- report --------------------------------------------------------------

enum class RankingMetric { kMacro, kMicro };

struct LooConfig {
  RankingMetric ranking_metric = RankingMetric::kMacro;
  PermutationOptions permutation;
  std::size_t workers = 0;
};

struct AucCell {
  std::optional<double> micro;
  std::optional<double> macro;
};

struct AucSummary {
  // Population standard deviation (divides by the number of subsets).
  std::optional<double> micro_mean, micro_std, macro_mean, macro_std;
  std::size_t subsets = 0;
};

struct SpearmanCell {
  std::optional<double> sc;
  std::optional<double> p_value;
  std::size_t models_compared = 0;
  // Both rankings were constant; sc is reported as 1 and p as 1.
  bool constant_rankings = false;
  // Models left without an evaluable query on this subset.
  std::vector<ModelName> flagged;
};

struct RobustnessReport {
  std::vector<ModelName> models;   // evaluated models, input order
  std::vector<ModelName> subsets;  // excluded generator per subset
  std::map<ModelName, AucCell> full;
  std::map<ModelName, std::map<ModelName, AucCell>> per_subset;  // excluded -> model
  std::map<ModelName, AucSummary> mean_and_std;
  std::map<ModelName, SpearmanCell> spearman;  // excluded -> correlation with full GT
  LooConfig config;
};

namespace detail {

inline AucCell EvaluateAuc(const ModelRankings& rankings, const GroundTruth& gt) {
  const auto sets = BuildEvalSets(gt, NegativeSource::Annotated(), &rankings);
  const MacroResult macro = MacroAverages(rankings, sets, 1);
  const MicroResult micro = MicroAverages(rankings, sets);
  return AucCell{micro.roc_auc, macro.roc_auc};
}

inline const std::optional<double>& Pick(const AucCell& c, RankingMetric m) {
  return m == RankingMetric::kMacro ? c.macro : c.micro;
}

inline void MeanStd(const std::vector<double>& v, std::optional<double>& mean,
                    std::optional<double>& sd) {
  if (v.empty()) return;
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  mean = m;
  sd = std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace detail

// Evaluates every model on the full ground truth and on each leave-one-out
// subset, then correlates each subset's model ranking with the full one.
inline RobustnessReport LooReport(const Corpus& corpus, const std::vector<ModelHandle>& models,
                                  const SuspectSet& s, const GroundTruth& gt,
                                  const LooConfig& config = {}) {
  if (models.size() < 2) throw InvalidArgument("robustness needs at least two models");
  RobustnessReport r;
  r.config = config;
  const auto subsets = LeaveOneOutSubsets(s, gt);
  const auto queries = gt.Queries();
  std::vector<std::optional<ModelRankings>> rankings(models.size());
  ParallelFor(
      models.size(),
      [&](std::size_t i) { rankings[i].emplace(models[i], corpus, queries, 1); },
      config.workers);
  for (const auto& m : models) r.models.push_back(m.name());
  for (const auto& sub : subsets) r.subsets.push_back(sub.excluded_model);

  // Cell (subset j, model i) lives at j * |models| + i; the full GT is row 0.
  const std::size_t rows = subsets.size() + 1;
  std::vector<AucCell> cells(rows * models.size());
  ParallelFor(
      cells.size(),
      [&](std::size_t idx) {
        const std::size_t row = idx / models.size();
        const std::size_t col = idx % models.size();
        const GroundTruth& labels = row == 0 ? gt : subsets[row - 1].labels;
        cells[idx] = detail::EvaluateAuc(*rankings[col], labels);
      },
      config.workers);

  for (std::size_t i = 0; i < models.size(); ++i) r.full[r.models[i]] = cells[i];
  for (std::size_t j = 0; j < subsets.size(); ++j) {
    auto& row = r.per_subset[r.subsets[j]];
    for (std::size_t i = 0; i < models.size(); ++i) {
      row[r.models[i]] = cells[(j + 1) * models.size() + i];
    }
  }

  for (const auto& name : r.models) {
    std::vector<double> micro, macro;
    for (const auto& excluded : r.subsets) {
      const AucCell& c = r.per_subset[excluded][name];
      if (c.micro) micro.push_back(*c.micro);
      if (c.macro) macro.push_back(*c.macro);
    }
    AucSummary& sum = r.mean_and_std[name];
    sum.subsets = r.subsets.size();
    detail::MeanStd(micro, sum.micro_mean, sum.micro_std);
    detail::MeanStd(macro, sum.macro_mean, sum.macro_std);
  }

  for (const auto& excluded : r.subsets) {
    SpearmanCell& cell = r.spearman[excluded];
    std::vector<double> full_values, subset_values;
    for (const auto& name : r.models) {
      const auto& f = detail::Pick(r.full[name], config.ranking_metric);
      const auto& v = detail::Pick(r.per_subset[excluded][name], config.ranking_metric);
      if (!v) {
        cell.flagged.push_back(name);
        continue;
      }
      if (!f) continue;
      full_values.push_back(*f);
      subset_values.push_back(*v);
    }
    cell.models_compared = full_values.size();
    if (full_values.size() < 2) continue;
    const auto ra = AverageRanks(full_values);
    const auto rb = AverageRanks(subset_values);
    const bool const_a = std::adjacent_find(ra.begin(), ra.end(), std::not_equal_to<>()) == ra.end();
    const bool const_b = std::adjacent_find(rb.begin(), rb.end(), std::not_equal_to<>()) == rb.end();
    if (const_a && const_b) {
      cell.constant_rankings = true;
      cell.sc = 1.0;
      cell.p_value = 1.0;
      continue;
    }
    if (const_a || const_b) continue;
    const PermutationResult pr = PermutationPValue(full_values, subset_values, config.permutation);
    cell.sc = pr.sc;
    cell.p_value = pr.p_value;
  }
  return r;
}

inline nlohmann::ordered_json ToJson(const RobustnessReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  auto cell_json = [&](const AucCell& c) {
    return nlohmann::ordered_json{{"micro", opt(c.micro)}, {"macro", opt(c.macro)}};
  };
  nlohmann::ordered_json j;
  j["models"] = r.models;
  j["subsets"] = r.subsets;
  nlohmann::ordered_json full = nlohmann::ordered_json::object();
  for (const auto& name : r.models) full[name] = cell_json(r.full.at(name));
  j["full"] = full;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& excluded : r.subsets) {
    nlohmann::ordered_json row = nlohmann::ordered_json::object();
    for (const auto& name : r.models) row[name] = cell_json(r.per_subset.at(excluded).at(name));
    per[excluded] = row;
  }
  j["per_subset"] = per;
  nlohmann::ordered_json ms = nlohmann::ordered_json::object();
  for (const auto& name : r.models) {
    const auto& s = r.mean_and_std.at(name);
    ms[name] = {{"micro_mean", opt(s.micro_mean)}, {"micro_std", opt(s.micro_std)},
                {"macro_mean", opt(s.macro_mean)}, {"macro_std", opt(s.macro_std)},
                {"subsets", s.subsets}};
  }
  j["mean_and_std"] = ms;
  j["spread"] = "population standard deviation across subsets";
  nlohmann::ordered_json sp = nlohmann::ordered_json::object();
  for (const auto& excluded : r.subsets) {
    const auto& c = r.spearman.at(excluded);
    sp[excluded] = {{"sc", opt(c.sc)},
                    {"p_value", opt(c.p_value)},
                    {"models_compared", c.models_compared},
                    {"constant_rankings", c.constant_rankings},
                    {"flagged", c.flagged}};
  }
  j["spearman"] = sp;
  const auto& perm = r.config.permutation;
  j["config"] = {
      {"ranking_metric", r.config.ranking_metric == RankingMetric::kMacro ? "macro" : "micro"},
      {"negatives", "annotated"},
      {"permutation_mode", perm.mode == PermutationOptions::Mode::kExact        ? "exact"
                           : perm.mode == PermutationOptions::Mode::kMonteCarlo ? "monte-carlo"
                                                                                : "auto"},
      {"exact_max_n", perm.exact_max_n},
      {"draws", perm.draws},
      {"seed", perm.seed}};
  return j;
}

}  // namespace eds

#endif  // EDS_ROBUSTNESS_HPP_
