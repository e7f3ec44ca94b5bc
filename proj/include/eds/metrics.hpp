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

// Ranking metrics over a labeled pair set: HR@k, MRR@k, per-query and
// pooled ROC-AUC, and average precision. ROC-AUC only compares labeled
// positives against labeled (or sampled) negatives of the same query, which
// keeps it fair to models that did not help build the ground truth.

#ifndef EDS_METRICS_HPP_
#define EDS_METRICS_HPP_

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "eds/corpus.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/parallel.hpp"

namespace eds {

// --- primitive metrics ---------------------------------------------------

// Fraction of (positive, negative) rank pairs with the positive ranked
// strictly better (smaller rank). Equal ranks count as misses.
inline double RocAucFromRanks(std::span<const std::size_t> positive_ranks,
                              std::span<const std::size_t> negative_ranks) {
  if (positive_ranks.empty() || negative_ranks.empty()) {
    throw InvalidArgument("ROC-AUC needs at least one positive and one negative");
  }
  std::vector<std::size_t> neg(negative_ranks.begin(), negative_ranks.end());
  std::sort(neg.begin(), neg.end());
  std::uint64_t wins = 0;
  for (const std::size_t r : positive_ranks) {
    wins += static_cast<std::uint64_t>(neg.end() - std::upper_bound(neg.begin(), neg.end(), r));
  }
  return static_cast<double>(wins) /
         (static_cast<double>(positive_ranks.size()) * static_cast<double>(negative_ranks.size()));
}

// P(score of a random positive > score of a random negative), ties count 1/2.
inline double RocAucFromScores(std::span<const double> positive_scores,
                               std::span<const double> negative_scores) {
  if (positive_scores.empty() || negative_scores.empty()) {
    throw InvalidArgument("ROC-AUC needs at least one positive and one negative");
  }
  std::vector<double> neg(negative_scores.begin(), negative_scores.end());
  std::sort(neg.begin(), neg.end());
  // Twice the win count keeps the half credit for ties integral.
  std::uint64_t twice_wins = 0;
  for (const double s : positive_scores) {
    const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
    const auto hi = std::upper_bound(lo, neg.end(), s);
    twice_wins += 2 * static_cast<std::uint64_t>(lo - neg.begin()) +
                  static_cast<std::uint64_t>(hi - lo);
  }
  return static_cast<double>(twice_wins) /
         (2.0 * static_cast<double>(positive_scores.size()) *
          static_cast<double>(negative_scores.size()));
}

// Average precision of labels already sorted best-first: the mean over
// positives of the precision at the cut where each positive appears.
inline double AveragePrecision(std::span<const Label> ordered_labels) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < ordered_labels.size(); ++i) {
    if (ordered_labels[i] == Label::kPositive) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) throw InvalidArgument("average precision needs at least one positive");
  return sum / static_cast<double>(hits);
}

// --- model rankings ------------------------------------------------------

// The full ranking of one query's candidates with O(1) lookup by id.
class QueryRanking {
 public:
  QueryRanking() = default;
  explicit QueryRanking(RankList list) : list_(std::move(list)) {
    index_.reserve(list_.entries.size());
    for (std::size_t i = 0; i < list_.entries.size(); ++i) {
      index_.emplace(list_.entries[i].candidate, i);
    }
  }

  const RankList& list() const { return list_; }
  const ItemId& query() const { return list_.query; }

  const RankEntry* Find(const ItemId& candidate) const {
    const auto it = index_.find(candidate);
    return it == index_.end() ? nullptr : &list_.entries[it->second];
  }

  const RankEntry& At(const ItemId& candidate) const {
    const auto* e = Find(candidate);
    if (e == nullptr) {
      throw NotFound("candidate '" + candidate + "' is not ranked for query '" +
                     list_.query + "'");
    }
    return *e;
  }

 private:
  RankList list_;
  std::unordered_map<ItemId, std::size_t> index_;
};

// Full rankings of one model for a fixed set of queries.
class ModelRankings {
 public:
  ModelRankings(const ModelHandle& model, const Corpus& corpus,
                const std::vector<ItemId>& queries, std::size_t workers = 0)
      : model_name_(model.name()) {
    std::vector<QueryRanking> rankings(queries.size());
    ParallelFor(
        queries.size(),
        [&](std::size_t i) { rankings[i] = QueryRanking(RankAll(model, queries[i], corpus)); },
        workers);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      by_query_.emplace(queries[i], std::move(rankings[i]));
    }
  }

  const ModelName& model() const { return model_name_; }

  const QueryRanking& For(const ItemId& query) const {
    const auto it = by_query_.find(query);
    if (it == by_query_.end()) {
      throw NotFound(model_name_ + ": no ranking for query '" + query + "'");
    }
    return it->second;
  }

 private:
  ModelName model_name_;
  std::unordered_map<ItemId, QueryRanking> by_query_;
};

// --- negatives -----------------------------------------------------------

struct RankWindow {
  std::size_t lo = 100;
  std::size_t hi = 500;  // exclusive
};

enum class WindowOrigin {
  kEvaluatedModel,  // the window is taken from the evaluated model's ranking
  kGeneratorUnion,  // union of the windows of the supplied generator rankings
};

struct NegativeSource {
  enum class Kind { kAnnotated, kSampled };
  Kind kind = Kind::kAnnotated;
  RankWindow window;
  std::uint64_t seed = 42;
  std::size_t count = 5;
  WindowOrigin origin = WindowOrigin::kEvaluatedModel;

  static NegativeSource Annotated() { return {}; }
  static NegativeSource Sampled(RankWindow window, std::size_t count, std::uint64_t seed,
                                WindowOrigin origin = WindowOrigin::kEvaluatedModel) {
    return NegativeSource{Kind::kSampled, window, seed, count, origin};
  }
};

inline std::string_view ToString(NegativeSource::Kind k) {
  return k == NegativeSource::Kind::kAnnotated ? "annotated" : "sampled";
}

struct SampledNegatives {
  std::vector<ItemId> candidates;  // ascending
  bool shortfall = false;          // fewer than `count` were available
};

namespace detail {

// FNV-1a, stable across platforms, used to derive per-query seeds.
inline std::uint64_t Fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (const unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

// Uniformly samples `count` candidates without replacement from rank
// positions [lo, hi) of the given lists, skipping anything already labeled
// for `query` in `gt`. The draw depends only on (seed, query) and the pool.
inline SampledNegatives SampleNegatives(std::span<const RankList* const> lists,
                                        const GroundTruth& gt, const ItemId& query,
                                        RankWindow window, std::size_t count,
                                        std::uint64_t seed) {
  if (window.lo >= window.hi) throw InvalidArgument("sampling window must satisfy lo < hi");
  if (count == 0) throw InvalidArgument("sample count must be at least 1");
  std::set<ItemId> pool;
  for (const RankList* list : lists) {
    for (const auto& e : list->entries) {
      if (e.rank < window.lo || e.rank >= window.hi) continue;
      if (e.candidate == query || gt.Contains(query, e.candidate)) continue;
      pool.insert(e.candidate);
    }
  }
  std::vector<ItemId> candidates(pool.begin(), pool.end());
  SampledNegatives out;
  if (candidates.size() <= count) {
    out.shortfall = candidates.size() < count;
    out.candidates = std::move(candidates);
    return out;
  }
  std::mt19937_64 rng(detail::Fnv1a(query, seed ^ 0x9e3779b97f4a7c15ull));
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
  }
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end());
  out.candidates = std::move(candidates);
  return out;
}

struct QueryEvalSet {
  ItemId query;
  std::vector<ItemId> positives;  // ascending
  std::vector<ItemId> negatives;  // ascending
  bool shortfall = false;         // sampled negatives ran short

  bool Evaluable() const { return !positives.empty() && !negatives.empty(); }
};

// Positives are the pairs labeled 1. Negatives are either the pairs labeled
// 0 (hard negatives) or sampled from a rank window.
inline std::vector<QueryEvalSet> BuildEvalSets(
    const GroundTruth& gt, const NegativeSource& source, const ModelRankings* evaluated,
    std::span<const ModelRankings* const> generators = {}) {
  std::vector<QueryEvalSet> sets;
  for (const auto& q : gt.Queries()) {
    QueryEvalSet set;
    set.query = q;
    for (const auto& [c, label] : gt.LabelsFor(q)) {
      if (c == q) continue;
      if (label == Label::kPositive) {
        set.positives.push_back(c);
      } else if (source.kind == NegativeSource::Kind::kAnnotated) {
        set.negatives.push_back(c);
      }
    }
    if (source.kind == NegativeSource::Kind::kSampled) {
      std::vector<const RankList*> lists;
      if (source.origin == WindowOrigin::kEvaluatedModel) {
        if (evaluated == nullptr) throw InvalidArgument("sampling needs the evaluated ranking");
        lists.push_back(&evaluated->For(q).list());
      } else {
        if (generators.empty()) throw InvalidArgument("sampling needs generator rankings");
        for (const auto* g : generators) lists.push_back(&g->For(q).list());
      }
      auto sampled =
          SampleNegatives(lists, gt, q, source.window, source.count, source.seed);
      set.negatives = std::move(sampled.candidates);
      set.shortfall = sampled.shortfall;
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

// --- query-level metrics -------------------------------------------------

// Per-query ROC-AUC: the fraction of (positive, negative) pairs the ranking
// orders correctly. Requires both sets non-empty.
inline double RocAucQuery(const QueryRanking& ranking, const QueryEvalSet& set) {
  std::vector<std::size_t> pos;
  std::vector<std::size_t> neg;
  for (const auto& c : set.positives) pos.push_back(ranking.At(c).rank);
  for (const auto& c : set.negatives) neg.push_back(ranking.At(c).rank);
  return RocAucFromRanks(pos, neg);
}

// Average precision of one query, candidates ordered by the model's rank.
inline double AveragePrecisionQuery(const QueryRanking& ranking, const QueryEvalSet& set) {
  std::vector<std::pair<std::size_t, Label>> ordered;
  for (const auto& c : set.positives) ordered.emplace_back(ranking.At(c).rank, Label::kPositive);
  for (const auto& c : set.negatives) ordered.emplace_back(ranking.At(c).rank, Label::kNegative);
  std::sort(ordered.begin(), ordered.end());
  std::vector<Label> labels;
  labels.reserve(ordered.size());
  for (const auto& [r, l] : ordered) labels.push_back(l);
  return AveragePrecision(labels);
}

// --- aggregate metrics ---------------------------------------------------

enum class HitAveraging {
  kPerPair,   // mean over every positive pair
  kPerQuery,  // mean within each query, then over queries
};

namespace detail {

template <typename Contribution>
std::optional<double> AveragePositives(const ModelRankings& rankings, const GroundTruth& gt,
                                       HitAveraging averaging, Contribution&& contrib) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& q : gt.Queries()) {
    double query_sum = 0.0;
    std::size_t query_n = 0;
    for (const auto& [c, label] : gt.LabelsFor(q)) {
      if (label != Label::kPositive || c == q) continue;
      query_sum += contrib(rankings.For(q).At(c).rank);
      ++query_n;
    }
    if (query_n == 0) continue;
    if (averaging == HitAveraging::kPerPair) {
      total += query_sum;
      n += query_n;
    } else {
      total += query_sum / static_cast<double>(query_n);
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return total / static_cast<double>(n);
}

}  // namespace detail

// Fraction of positive pairs whose zero-based rank is < k. Empty when the
// ground truth has no positives.
inline std::optional<double> HitRateAtK(const ModelRankings& rankings, const GroundTruth& gt,
                                        std::size_t k,
                                        HitAveraging averaging = HitAveraging::kPerPair) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  return detail::AveragePositives(rankings, gt, averaging,
                                  [k](std::size_t r) { return r < k ? 1.0 : 0.0; });
}

// Mean of 1 / (rank + 1) over positive pairs, counting 0 beyond rank k.
inline std::optional<double> MrrAtK(const ModelRankings& rankings, const GroundTruth& gt,
                                    std::size_t k,
                                    HitAveraging averaging = HitAveraging::kPerPair) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  return detail::AveragePositives(rankings, gt, averaging, [k](std::size_t r) {
    return r < k ? 1.0 / static_cast<double>(r + 1) : 0.0;
  });
}

struct MacroResult {
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

// Mean of per-query ROC-AUC and AP over queries with both positives and
// negatives; the rest are counted as skipped. The reduction runs in the
// order of `sets`, so the result does not depend on the worker count.
inline MacroResult MacroAverages(const ModelRankings& rankings,
                                 const std::vector<QueryEvalSet>& sets,
                                 std::size_t workers = 0) {
  std::vector<std::optional<std::pair<double, double>>> per_query(sets.size());
  ParallelFor(
      sets.size(),
      [&](std::size_t i) {
        if (!sets[i].Evaluable()) return;
        const auto& ranking = rankings.For(sets[i].query);
        per_query[i] = std::make_pair(RocAucQuery(ranking, sets[i]),
                                      AveragePrecisionQuery(ranking, sets[i]));
      },
      workers);
  MacroResult r;
  double roc = 0.0;
  double ap = 0.0;
  for (const auto& v : per_query) {
    if (!v) {
      ++r.skipped;
      continue;
    }
    roc += v->first;
    ap += v->second;
    ++r.evaluated;
  }
  if (r.evaluated > 0) {
    r.roc_auc = roc / static_cast<double>(r.evaluated);
    r.pr_auc = ap / static_cast<double>(r.evaluated);
  }
  return r;
}

struct MicroResult {
  std::optional<double> roc_auc;
  std::optional<double> pr_auc;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

// Pools (similarity, label) over every query. Pooled AP orders by descending
// score, then by (query, candidate).
inline MicroResult MicroAverages(const ModelRankings& rankings,
                                 const std::vector<QueryEvalSet>& sets) {
  struct Scored {
    double score;
    const ItemId* query;
    const ItemId* candidate;
    Label label;
  };
  std::vector<Scored> pooled;
  std::vector<double> pos;
  std::vector<double> neg;
  for (const auto& set : sets) {
    const auto& ranking = rankings.For(set.query);
    for (const auto& c : set.positives) {
      const double s = ranking.At(c).score;
      pos.push_back(s);
      pooled.push_back({s, &set.query, &c, Label::kPositive});
    }
    for (const auto& c : set.negatives) {
      const double s = ranking.At(c).score;
      neg.push_back(s);
      pooled.push_back({s, &set.query, &c, Label::kNegative});
    }
  }
  MicroResult r;
  r.positives = pos.size();
  r.negatives = neg.size();
  if (pos.empty() || neg.empty()) return r;
  r.roc_auc = RocAucFromScores(pos, neg);
  std::sort(pooled.begin(), pooled.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    if (*a.query != *b.query) return *a.query < *b.query;
    return *a.candidate < *b.candidate;
  });
  std::vector<Label> labels;
  labels.reserve(pooled.size());
  for (const auto& p : pooled) labels.push_back(p.label);
  r.pr_auc = AveragePrecision(labels);
  return r;
}

// --- full report ---------------------------------------------------------

struct EvalConfig {
  std::vector<std::size_t> ks = {5, 9};
  NegativeSource negatives;
  HitAveraging hit_averaging = HitAveraging::kPerPair;
  std::size_t workers = 0;
};

struct MetricReport {
  ModelName model;
  std::map<std::size_t, std::optional<double>> hr;
  std::map<std::size_t, std::optional<double>> mrr;
  std::optional<double> roc_auc_micro;
  std::optional<double> roc_auc_macro;
  std::optional<double> pr_auc_micro;
  std::optional<double> pr_auc_macro;
  NegativeSource negative_source;
  std::size_t queries_evaluated = 0;
  std::size_t queries_skipped = 0;
  std::size_t positive_pairs = 0;
  std::size_t negative_pairs = 0;
  std::size_t sampling_shortfalls = 0;
};

// Evaluates precomputed rankings. `generators` are only consulted when the
// negative source samples from the generator union.
inline MetricReport Evaluate(const ModelRankings& rankings, const GroundTruth& gt,
                             const EvalConfig& config,
                             std::span<const ModelRankings* const> generators = {}) {
  MetricReport r;
  r.model = rankings.model();
  r.negative_source = config.negatives;
  for (const std::size_t k : config.ks) {
    r.hr[k] = HitRateAtK(rankings, gt, k, config.hit_averaging);
    r.mrr[k] = MrrAtK(rankings, gt, k, config.hit_averaging);
  }
  const auto sets = BuildEvalSets(gt, config.negatives, &rankings, generators);
  for (const auto& s : sets) r.sampling_shortfalls += s.shortfall;
  const MacroResult macro = MacroAverages(rankings, sets, config.workers);
  r.roc_auc_macro = macro.roc_auc;
  r.pr_auc_macro = macro.pr_auc;
  r.queries_evaluated = macro.evaluated;
  r.queries_skipped = macro.skipped;
  const MicroResult micro = MicroAverages(rankings, sets);
  r.roc_auc_micro = micro.roc_auc;
  r.pr_auc_micro = micro.pr_auc;
  r.positive_pairs = micro.positives;
  r.negative_pairs = micro.negatives;
  return r;
}

inline MetricReport Evaluate(const ModelHandle& model, const Corpus& corpus,
                             const GroundTruth& gt, const EvalConfig& config) {
  const ModelRankings rankings(model, corpus, gt.Queries(), config.workers);
  return Evaluate(rankings, gt, config);
}

inline nlohmann::ordered_json ToJson(const NegativeSource& s) {
  nlohmann::ordered_json j;
  j["kind"] = ToString(s.kind);
  if (s.kind == NegativeSource::Kind::kSampled) {
    j["window"] = {s.window.lo, s.window.hi};
    j["count"] = s.count;
    j["seed"] = s.seed;
    j["origin"] = s.origin == WindowOrigin::kEvaluatedModel ? "model" : "generators";
  }
  return j;
}

inline nlohmann::ordered_json ToJson(const MetricReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
  };
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["negative_source"] = ToJson(r.negative_source);
  nlohmann::ordered_json hr = nlohmann::ordered_json::object();
  nlohmann::ordered_json mrr = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.hr) hr[std::to_string(k)] = opt(v);
  for (const auto& [k, v] : r.mrr) mrr[std::to_string(k)] = opt(v);
  j["hr"] = hr;
  j["mrr"] = mrr;
  j["roc_auc_micro"] = opt(r.roc_auc_micro);
  j["roc_auc_macro"] = opt(r.roc_auc_macro);
  j["pr_auc_micro"] = opt(r.pr_auc_micro);
  j["pr_auc_macro"] = opt(r.pr_auc_macro);
  j["queries_evaluated"] = r.queries_evaluated;
  j["queries_skipped"] = r.queries_skipped;
  j["positive_pairs"] = r.positive_pairs;
  j["negative_pairs"] = r.negative_pairs;
  j["sampling_shortfalls"] = r.sampling_shortfalls;
  return j;
}

}  // namespace eds

#endif  // EDS_METRICS_HPP_
