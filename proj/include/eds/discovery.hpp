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

// Ensemble candidate discovery: each model proposes its top-k candidates per
// query, the proposals are merged into one deduplicated suspect set with full
// provenance, and the set is summarized by overlap, duplication and labeling
// cost statistics.

#ifndef EDS_DISCOVERY_HPP_
#define EDS_DISCOVERY_HPP_

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "eds/corpus.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/parallel.hpp"
#include "eds/text.hpp"

namespace eds {

struct RankedPair {
  ItemId query;
  ItemId candidate;
  std::size_t rank = 0;

  bool operator==(const RankedPair&) const = default;
};

// The top-k proposals of a single model, ordered by (query order in the
// corpus, rank).
struct ModelSuspects {
  ModelName model;
  std::size_t k = 0;
  std::vector<RankedPair> pairs;
};

struct Proposal {
  ModelName model;
  std::size_t rank = 0;

  bool operator==(const Proposal&) const = default;
};

struct SuspectPair {
  ItemId query;
  ItemId candidate;
  // Sorted by model name; each model appears once.
  std::vector<Proposal> proposers;

  PairKey key() const { return PairKey{query, candidate}; }
  bool ProposedBy(const ModelName& m) const {
    return std::any_of(proposers.begin(), proposers.end(),
                       [&](const Proposal& p) { return p.model == m; });
  }
  bool operator==(const SuspectPair&) const = default;
};

struct SuspectSet {
  std::size_t k = 0;
  std::vector<ModelName> models;  // ascending
  std::vector<ItemId> queries;    // ascending, every query with a proposal
  std::vector<SuspectPair> pairs;  // ascending by (query, candidate)
  std::map<ModelName, std::set<PairKey>> per_model_sets;

  const SuspectPair* Find(const PairKey& key) const {
    const auto it = std::lower_bound(
        pairs.begin(), pairs.end(), key,
        [](const SuspectPair& p, const PairKey& k) { return p.key() < k; });
    if (it == pairs.end() || it->key() != key) return nullptr;
    return &*it;
  }

  std::set<PairKey> Keys() const {
    std::set<PairKey> keys;
    for (const auto& p : pairs) keys.insert(keys.end(), p.key());
    return keys;
  }

  bool operator==(const SuspectSet&) const = default;
};

// S_k^m: for every corpus query the min(k, |D_{-q}|) top-ranked candidates.
// Queries are ranked independently on up to `workers` threads.
inline ModelSuspects BuildSuspectsPerModel(const ModelHandle& model,
                                           const Corpus& corpus, std::size_t k,
                                           std::size_t workers = 0) {
  if (k == 0) throw InvalidArgument("k must be at least 1");
  model.Validate(corpus, k);
  const auto& queries = corpus.queries();
  std::vector<std::vector<RankedPair>> per_query(queries.size());
  ParallelFor(
      queries.size(),
      [&](std::size_t i) {
        const auto& q = queries[i];
        if (corpus.CandidateCount(q) == 0) return;
        const RankList list = RankCandidates(model, q, corpus, k);
        for (const auto& e : list.entries) {
          per_query[i].push_back(RankedPair{q, e.candidate, e.rank});
        }
      },
      workers);
  ModelSuspects out{model.name(), k, {}};
  for (auto& chunk : per_query) {
    out.pairs.insert(out.pairs.end(), std::make_move_iterator(chunk.begin()),
                     std::make_move_iterator(chunk.end()));
  }
  return out;
}

namespace detail {

inline SuspectSet Assemble(std::size_t k, std::map<PairKey, std::vector<Proposal>> merged) {
  SuspectSet s;
  s.k = k;
  std::set<ModelName> models;
  for (auto& [key, proposers] : merged) {
    std::sort(proposers.begin(), proposers.end(),
              [](const Proposal& a, const Proposal& b) { return a.model < b.model; });
    for (std::size_t i = 1; i < proposers.size(); ++i) {
      if (proposers[i].model == proposers[i - 1].model) {
        throw InvalidArgument("model '" + proposers[i].model +
                              "' proposes pair twice: " + key.query + " " +
                              key.candidate);
      }
    }
    for (const auto& p : proposers) {
      models.insert(p.model);
      s.per_model_sets[p.model].insert(key);
    }
    if (s.queries.empty() || s.queries.back() != key.query) s.queries.push_back(key.query);
    s.pairs.push_back(SuspectPair{key.query, key.candidate, std::move(proposers)});
  }
  s.models.assign(models.begin(), models.end());
  return s;
}

}  // namespace detail

// S_k = union of the per-model sets. One entry per distinct (query,
// candidate); proposer lists accumulate every (model, rank). The result does
// not depend on the order of `per_model`.
inline SuspectSet UnionDedupe(const std::vector<ModelSuspects>& per_model) {
  if (per_model.empty()) throw InvalidArgument("no per-model suspect sets");
  const std::size_t k = per_model.front().k;
  std::set<ModelName> names;
  std::map<PairKey, std::vector<Proposal>> merged;
  for (const auto& ms : per_model) {
    if (ms.k != k) {
      throw InvalidArgument("mismatched k: '" + ms.model + "' built with k=" +
                            std::to_string(ms.k) + ", expected " + std::to_string(k));
    }
    if (!names.insert(ms.model).second) {
      throw InvalidArgument("model '" + ms.model + "' listed twice");
    }
    for (const auto& p : ms.pairs) {
      if (p.rank >= k) throw InvalidArgument("rank exceeds k for model '" + ms.model + "'");
      if (p.query == p.candidate) throw InvalidArgument("self pair for '" + p.query + "'");
      merged[PairKey{p.query, p.candidate}].push_back(Proposal{ms.model, p.rank});
    }
  }
  SuspectSet s = detail::Assemble(k, std::move(merged));
  // Models that proposed nothing still belong to the ensemble.
  s.models.assign(names.begin(), names.end());
  return s;
}

// Rebuilds a suspect set from its pairs, e.g. after reading a suspects file.
// k is recovered as 1 + the largest recorded rank.
inline SuspectSet SuspectSetFromPairs(const std::vector<SuspectPair>& pairs) {
  std::map<PairKey, std::vector<Proposal>> merged;
  std::size_t k = 0;
  for (const auto& p : pairs) {
    if (p.proposers.empty()) {
      throw InvalidArgument("pair " + p.query + " " + p.candidate + " has no proposers");
    }
    if (p.query == p.candidate) throw InvalidArgument("self pair for '" + p.query + "'");
    auto [it, inserted] = merged.emplace(p.key(), p.proposers);
    if (!inserted) {
      throw InvalidArgument("duplicate pair " + p.query + " " + p.candidate);
    }
    for (const auto& pr : p.proposers) k = std::max(k, pr.rank + 1);
  }
  return detail::Assemble(k, std::move(merged));
}

// --- statistics ----------------------------------------------------------

struct OverlapMatrix {
  std::vector<ModelName> models;
  // percent[i][j] = 100 * |S^i ∩ S^j| / (|Q| k); the diagonal is empty.
  std::vector<std::vector<std::optional<double>>> percent;

  double MeanOffDiagonal() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& row : percent) {
      for (const auto& v : row) {
        if (v) {
          sum += *v;
          ++n;
        }
      }
    }
    return n ? sum / static_cast<double>(n) : 0.0;
  }
};

inline OverlapMatrix ComputeOverlapMatrix(const SuspectSet& s) {
  if (s.models.size() < 2) throw InvalidArgument("overlap needs at least two models");
  const double nominal = static_cast<double>(s.queries.size()) * static_cast<double>(s.k);
  OverlapMatrix out;
  out.models = s.models;
  const std::size_t m = s.models.size();
  out.percent.assign(m, std::vector<std::optional<double>>(m));
  static const std::set<PairKey> kEmpty;
  auto set_of = [&](const ModelName& name) -> const std::set<PairKey>& {
    const auto it = s.per_model_sets.find(name);
    return it == s.per_model_sets.end() ? kEmpty : it->second;
  };
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto& a = set_of(s.models[i]);
      const auto& b = set_of(s.models[j]);
      std::size_t common = 0;
      for (const auto& key : a) common += b.count(key);
      const double pct = nominal > 0 ? 100.0 * static_cast<double>(common) / nominal : 0.0;
      out.percent[i][j] = pct;
      out.percent[j][i] = pct;
    }
  }
  return out;
}

struct DuplicationStats {
  double avg_candidates_per_query = 0.0;
  std::size_t max_per_query = 0;
  // Largest number of proposals one model made for one query.
  std::size_t per_model_cap = 0;
  double duplication_rate = 0.0;
};

// duplication_rate = 1 - avg / (|models| * per_model_cap).
inline DuplicationStats ComputeDuplicationStats(const SuspectSet& s) {
  if (s.pairs.empty()) throw InvalidArgument("empty suspect set");
  DuplicationStats st;
  std::map<ItemId, std::size_t> per_query;
  for (const auto& p : s.pairs) ++per_query[p.query];
  std::size_t total = 0;
  for (const auto& [q, n] : per_query) {
    total += n;
    st.max_per_query = std::max(st.max_per_query, n);
  }
  st.avg_candidates_per_query =
      static_cast<double>(total) / static_cast<double>(per_query.size());
  for (const auto& [model, keys] : s.per_model_sets) {
    std::map<ItemId, std::size_t> counts;
    for (const auto& key : keys) {
      st.per_model_cap = std::max(st.per_model_cap, ++counts[key.query]);
    }
  }
  const double nominal =
      static_cast<double>(s.models.size()) * static_cast<double>(st.per_model_cap);
  st.duplication_rate = 1.0 - st.avg_candidates_per_query / nominal;
  return st;
}

struct CostInputs {
  std::uint64_t num_items = 0;
  std::uint64_t num_queries = 0;
  std::uint64_t queries_in_items = 0;
  std::uint64_t num_models = 0;
  std::uint64_t k = 0;
  std::uint64_t num_pairs = 0;  // |S_k| after deduplication
};

struct CostReport {
  std::uint64_t brute_force_ops = 0;  // |A|
  std::uint64_t eds_ops = 0;          // |S_k|
  std::uint64_t eds_upper_bound = 0;  // |M| |Q| k
  double speedup = 0.0;               // brute_force_ops / eds_ops
  // |A| / (|M| |Q| k) as a reduced fraction; equals |D_{-q}| / (|M| k) when
  // every query is an item.
  std::uint64_t nominal_ratio_num = 0;
  std::uint64_t nominal_ratio_den = 1;
  double nominal_ratio = 0.0;
  double p_hat = 0.0;
  double random_expected_trials_per_positive = 0.0;  // 1 / p_hat
};

inline CostReport ComputeCostReport(const CostInputs& in, double p_hat) {
  if (!(p_hat > 0.0 && p_hat <= 1.0)) throw InvalidArgument("p_hat must be in (0, 1]");
  if (in.num_queries == 0 || in.num_items == 0) throw InvalidArgument("empty corpus");
  if (in.num_models == 0 || in.k == 0) throw InvalidArgument("need at least one model and k >= 1");
  if (in.num_pairs == 0) throw InvalidArgument("empty suspect set");
  if (in.queries_in_items > in.num_queries) {
    throw InvalidArgument("queries_in_items exceeds num_queries");
  }
  CostReport r;
  r.brute_force_ops = in.num_queries * in.num_items - in.queries_in_items;
  r.eds_ops = in.num_pairs;
  r.eds_upper_bound = in.num_models * in.num_queries * in.k;
  r.speedup = static_cast<double>(r.brute_force_ops) / static_cast<double>(r.eds_ops);
  const std::uint64_t g = std::gcd(r.brute_force_ops, r.eds_upper_bound);
  r.nominal_ratio_num = r.brute_force_ops / g;
  r.nominal_ratio_den = r.eds_upper_bound / g;
  r.nominal_ratio =
      static_cast<double>(r.nominal_ratio_num) / static_cast<double>(r.nominal_ratio_den);
  r.p_hat = p_hat;
  r.random_expected_trials_per_positive = 1.0 / p_hat;
  return r;
}

inline CostReport ComputeCostReport(const Corpus& corpus, const SuspectSet& s,
                                    double p_hat) {
  return ComputeCostReport(
      CostInputs{corpus.items().size(), corpus.queries().size(), corpus.QueriesInItems(),
                 s.models.size(), s.k, s.pairs.size()},
      p_hat);
}

// --- suspects file -------------------------------------------------------

// One JSON object per line: {"q":..,"c":..,"proposers":[{"m":..,"r":..}]},
// sorted by (q, c).
inline void WriteSuspects(std::ostream& out, const SuspectSet& s) {
  for (const auto& p : s.pairs) {
    nlohmann::ordered_json j;
    j["q"] = p.query;
    j["c"] = p.candidate;
    j["proposers"] = nlohmann::ordered_json::array();
    for (const auto& pr : p.proposers) {
      j["proposers"].push_back({{"m", pr.model}, {"r", pr.rank}});
    }
    out << j.dump() << '\n';
  }
}

inline void WriteSuspects(const std::string& path, const SuspectSet& s) {
  auto out = text::OpenForWrite(path);
  WriteSuspects(out, s);
  if (!out) throw IoError("failed writing '" + path + "'");
}

inline SuspectSet ReadSuspects(std::istream& in, const std::string& name) {
  std::vector<SuspectPair> pairs;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (text::IsBlank(raw)) continue;
    const auto where = text::Location(name, line_no);
    try {
      const auto j = nlohmann::json::parse(raw);
      SuspectPair p;
      p.query = j.at("q").get<std::string>();
      p.candidate = j.at("c").get<std::string>();
      if (!text::IsValidId(p.query) || !text::IsValidId(p.candidate)) {
        throw ParseError("invalid item id");
      }
      for (const auto& pr : j.at("proposers")) {
        p.proposers.push_back(
            Proposal{pr.at("m").get<std::string>(), pr.at("r").get<std::size_t>()});
      }
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  try {
    return SuspectSetFromPairs(pairs);
  } catch (const Error& e) {
    throw ParseError(name + ": " + e.what());
  }
}

inline SuspectSet LoadSuspects(const std::string& path) {
  auto in = text::OpenForRead(path);
  return ReadSuspects(in, path);
}

}  // namespace eds

#endif  // EDS_DISCOVERY_HPP_
