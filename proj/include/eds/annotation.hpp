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

// Expert votes, majority-vote label resolution and estimation of the base
// positive rate of the full pair universe.

#ifndef EDS_ANNOTATION_HPP_
#define EDS_ANNOTATION_HPP_

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "eds/corpus.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/text.hpp"

namespace eds {

// --- timestamps ----------------------------------------------------------

// UTC with millisecond precision, e.g. 2026-10-19T08:30:00.125Z.
inline std::string FormatRfc3339(Timestamp ts) {
  using namespace std::chrono;
  const auto day = floor<days>(ts);
  const year_month_day ymd{day};
  const hh_mm_ss<milliseconds> tod{ts - day};
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02d.%03dZ",
                static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()), static_cast<int>(tod.hours().count()),
                static_cast<int>(tod.minutes().count()),
                static_cast<int>(tod.seconds().count()),
                static_cast<int>(tod.subseconds().count()));
  return buf;
}

// Accepts "YYYY-MM-DDTHH:MM:SS[.frac](Z|+HH:MM|-HH:MM)"; fractions beyond
// milliseconds are truncated.
inline Timestamp ParseRfc3339(std::string_view s) {
  using namespace std::chrono;
  auto fail = [&]() { return ParseError("bad RFC3339 timestamp '" + std::string(s) + "'"); };
  auto num = [&](std::size_t pos, std::size_t len) {
    int v = 0;
    if (pos + len > s.size() || !text::ParseInt(s.substr(pos, len), v)) throw fail();
    return v;
  };
  auto expect = [&](std::size_t pos, char a, char b = '\0') {
    if (pos >= s.size() || (s[pos] != a && (b == '\0' || s[pos] != b))) throw fail();
  };
  const int y = num(0, 4);
  expect(4, '-');
  const int mo = num(5, 2);
  expect(7, '-');
  const int d = num(8, 2);
  expect(10, 'T', 't');
  const int h = num(11, 2);
  expect(13, ':');
  const int mi = num(14, 2);
  expect(16, ':');
  const int sec = num(17, 2);
  std::size_t pos = 19;
  int millis = 0;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      if (digits < 3) millis = millis * 10 + (s[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) throw fail();
    for (int i = digits; i < 3; ++i) millis *= 10;
  }
  minutes offset{0};
  if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
    ++pos;
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    const int sign = s[pos] == '+' ? 1 : -1;
    const int oh = num(pos + 1, 2);
    expect(pos + 3, ':');
    const int om = num(pos + 4, 2);
    offset = minutes{sign * (oh * 60 + om)};
    pos += 6;
  } else {
    throw fail();
  }
  if (pos != s.size()) throw fail();
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) throw fail();
  return time_point_cast<milliseconds>(sys_days{ymd}) + hours{h} + minutes{mi} +
         seconds{sec} + milliseconds{millis} - offset;
}

inline Timestamp NowUtc() {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(
      std::chrono::system_clock::now());
}

// --- effective votes -----------------------------------------------------

struct EffectiveVote {
  Label label = Label::kNegative;
  Timestamp ts{};
  std::size_t seq = 0;  // position in the log

  bool operator==(const EffectiveVote&) const = default;
};

// pair -> expert -> the vote that currently counts.
using EffectiveVotes = std::map<PairKey, std::map<ExpertId, EffectiveVote>>;

// A vote supersedes the current one when its timestamp is later, or equal and
// later in the log. Returns true if `incoming` became effective.
inline bool Supersedes(const EffectiveVote& incoming, const EffectiveVote& current) {
  if (incoming.ts != current.ts) return incoming.ts > current.ts;
  return incoming.seq > current.seq;
}

inline EffectiveVotes BuildEffectiveVotes(const std::vector<Vote>& log) {
  EffectiveVotes eff;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const Vote& v = log[i];
    const EffectiveVote ev{v.label, v.ts, i};
    auto& slot = eff[v.pair];
    const auto it = slot.find(v.expert);
    if (it == slot.end()) {
      slot.emplace(v.expert, ev);
    } else if (Supersedes(ev, it->second)) {
      it->second = ev;
    }
  }
  return eff;
}

// Strict majority of positive votes; ties and minorities resolve negative.
inline Label MajorityLabel(std::size_t positive_votes, std::size_t total_votes) {
  return 2 * positive_votes > total_votes ? Label::kPositive : Label::kNegative;
}

struct ResolveReport {
  GroundTruth gt;
  // Pairs resolved from fewer than num_experts effective votes.
  std::vector<PairKey> incomplete;
};

inline ResolveReport ResolveEffective(const EffectiveVotes& eff, std::size_t num_experts) {
  ResolveReport r;
  r.gt.source = GroundTruthSource::kExpertResolved;
  r.gt.num_experts = num_experts;
  for (const auto& [key, by_expert] : eff) {
    if (by_expert.empty()) continue;
    std::size_t pos = 0;
    for (const auto& [expert, ev] : by_expert) pos += ev.label == Label::kPositive;
    r.gt.Set(key, MajorityLabel(pos, by_expert.size()), by_expert.size());
    if (by_expert.size() < num_experts) r.incomplete.push_back(key);
  }
  return r;
}

// Pairs with no votes are omitted. Independent of the order of `log` as long
// as each expert's votes on a pair carry distinct timestamps.
inline ResolveReport ResolveLabels(const std::vector<Vote>& log, std::size_t num_experts) {
  ResolveReport r = ResolveEffective(BuildEffectiveVotes(log), num_experts);
  r.gt.vote_log = log;
  return r;
}

struct RecordOutcome {
  bool superseded = false;  // the expert had already voted on this pair
  bool label_changed = false;
};

// The vote log of one annotation campaign plus the effective-vote view.
// Votes must target a pair of the active suspect set and come from a
// registered expert.
class VoteBook {
 public:
  VoteBook(std::set<PairKey> active_pairs, std::vector<ExpertId> experts)
      : active_(std::move(active_pairs)), experts_(experts.begin(), experts.end()) {
    if (experts_.empty()) throw InvalidArgument("at least one expert is required");
    for (const auto& e : experts_) {
      if (!text::IsValidId(e)) throw InvalidArgument("invalid expert id '" + e + "'");
    }
    if (experts_.size() != experts.size()) throw InvalidArgument("duplicate expert id");
  }

  RecordOutcome Record(const Vote& v) {
    if (!active_.count(v.pair)) {
      throw NotFound("pair " + v.pair.query + " " + v.pair.candidate +
                     " is not in the suspect set");
    }
    if (!experts_.count(v.expert)) throw NotFound("unknown expert '" + v.expert + "'");
    const EffectiveVote ev{v.label, v.ts, log_.size()};
    log_.push_back(v);
    auto& slot = effective_[v.pair];
    RecordOutcome out;
    const auto it = slot.find(v.expert);
    if (it == slot.end()) {
      slot.emplace(v.expert, ev);
      ++effective_count_;
      return out;
    }
    out.superseded = true;
    if (Supersedes(ev, it->second)) {
      out.label_changed = it->second.label != ev.label;
      it->second = ev;
    }
    return out;
  }

  const std::vector<Vote>& log() const { return log_; }
  const EffectiveVotes& effective() const { return effective_; }
  std::size_t num_experts() const { return experts_.size(); }
  const std::set<ExpertId>& experts() const { return experts_; }
  const std::set<PairKey>& active_pairs() const { return active_; }
  bool IsExpert(const ExpertId& e) const { return experts_.count(e) > 0; }
  std::size_t EffectiveVoteCount() const { return effective_count_; }

  const std::map<ExpertId, EffectiveVote>* VotesFor(const PairKey& key) const {
    const auto it = effective_.find(key);
    return it == effective_.end() ? nullptr : &it->second;
  }

  ResolveReport Resolve() const {
    ResolveReport r = ResolveEffective(effective_, experts_.size());
    r.gt.vote_log = log_;
    return r;
  }

 private:
  std::set<PairKey> active_;
  std::set<ExpertId> experts_;
  std::vector<Vote> log_;
  EffectiveVotes effective_;
  std::size_t effective_count_ = 0;
};

// --- vote log file -------------------------------------------------------

inline std::string VoteToJson(const Vote& v) {
  nlohmann::ordered_json j;
  j["q"] = v.pair.query;
  j["c"] = v.pair.candidate;
  j["expert"] = v.expert;
  j["label"] = ToInt(v.label);
  j["ts"] = FormatRfc3339(v.ts);
  return j.dump();
}

inline Vote VoteFromJson(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  Vote v;
  v.pair.query = j.at("q").get<std::string>();
  v.pair.candidate = j.at("c").get<std::string>();
  v.expert = j.at("expert").get<std::string>();
  const auto label = LabelFromInt(j.at("label").get<long long>());
  if (!label) throw ParseError("label must be 0 or 1");
  v.label = *label;
  v.ts = ParseRfc3339(j.at("ts").get<std::string>());
  return v;
}

inline std::vector<Vote> ReadVotes(std::istream& in, const std::string& name) {
  std::vector<Vote> votes;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (text::IsBlank(raw)) continue;
    try {
      votes.push_back(VoteFromJson(raw));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(text::Location(name, line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(text::Location(name, line_no) + ": " + e.what());
    }
  }
  return votes;
}

inline std::vector<Vote> LoadVotes(const std::string& path) {
  auto in = text::OpenForRead(path);
  return ReadVotes(in, path);
}

// --- base rate estimation ------------------------------------------------

// p_LB = positives found / |A|.
inline double LowerBoundP(std::uint64_t num_positives, std::uint64_t universe_size) {
  if (universe_size == 0) throw InvalidArgument("empty pair universe");
  if (num_positives > universe_size) {
    throw InvalidArgument("more positives than pairs in the universe");
  }
  return static_cast<double>(num_positives) / static_cast<double>(universe_size);
}

inline double LowerBoundP(std::uint64_t num_positives, const Corpus& corpus) {
  return LowerBoundP(num_positives, corpus.PairUniverseSize());
}

struct PEstimate {
  std::uint64_t a = 0;  // positives among the sampled pairs
  std::uint64_t b = 0;  // sample size
  double p_lb = 0.0;
  double p_hat = 0.0;
};

// MAP estimate under a uniform prior on [p_lb, 1] and a binomial likelihood:
// p_hat = max(p_lb, a / b).
inline PEstimate EstimateP(std::uint64_t a, std::uint64_t b, double p_lb) {
  if (b == 0) throw InvalidArgument("sample size b must be at least 1");
  if (a > b) throw InvalidArgument("a must not exceed b");
  if (!(p_lb >= 0.0 && p_lb <= 1.0)) throw InvalidArgument("p_lb must be in [0, 1]");
  const double ratio = static_cast<double>(a) / static_cast<double>(b);
  return PEstimate{a, b, p_lb, std::max(p_lb, ratio)};
}

// Right-hand side of P(|p_hat - p| >= eps) <= p / (b eps^2).
inline double ChebyshevBound(double p, std::uint64_t b, double epsilon) {
  if (b == 0) throw InvalidArgument("b must be at least 1");
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p must be in [0, 1]");
  return p / (static_cast<double>(b) * epsilon * epsilon);
}

struct BudgetReport {
  double epsilon = 0.0;
  double q_prob = 0.0;
  std::uint64_t b = 0;  // ceil(1 / (epsilon q_prob))
  std::optional<double> p;
  std::optional<double> bound;  // p / (b epsilon^2), when p is supplied
  bool vacuous = false;         // bound >= 1 says nothing
};

// Sample size that bounds the estimation error by epsilon with failure
// probability q_prob.
inline BudgetReport ChebyshevBudget(double epsilon, double q_prob,
                                    std::optional<double> p = std::nullopt) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("epsilon must be in (0, 1)");
  if (!(q_prob > 0.0 && q_prob < 1.0)) throw InvalidArgument("q must be in (0, 1)");
  BudgetReport r;
  r.epsilon = epsilon;
  r.q_prob = q_prob;
  const double raw = 1.0 / (epsilon * q_prob);
  // 1/(0.01*0.05) evaluates a hair off 2000; snap values within rounding
  // noise of an integer before taking the ceiling.
  const double nearest = std::round(raw);
  const double exactish = std::abs(raw - nearest) <= 1e-9 * raw ? nearest : std::ceil(raw);
  r.b = static_cast<std::uint64_t>(exactish);
  if (p) {
    r.p = p;
    r.bound = ChebyshevBound(*p, r.b, epsilon);
    r.vacuous = *r.bound >= 1.0;
  }
  return r;
}

struct RandomPairSample {
  std::vector<PairKey> pairs;  // in draw order
  std::uint64_t seed = 0;
  std::size_t excluded = 0;  // size of the excluded set
};

// Draws `count` distinct pairs uniformly from A minus `exclude` with a
// seeded generator.
inline RandomPairSample SampleRandomPairs(const Corpus& corpus,
                                          const std::set<PairKey>& exclude,
                                          std::size_t count, std::uint64_t seed) {
  std::size_t excluded_in_universe = 0;
  for (const auto& key : exclude) {
    excluded_in_universe += key.query != key.candidate && corpus.IsQuery(key.query) &&
                            corpus.IsItem(key.candidate);
  }
  const std::uint64_t universe = corpus.PairUniverseSize();
  if (universe < excluded_in_universe + count) {
    throw InvalidArgument("requested " + std::to_string(count) +
                          " pairs but only " +
                          std::to_string(universe - excluded_in_universe) + " are available");
  }
  RandomPairSample out;
  out.seed = seed;
  out.excluded = exclude.size();
  std::mt19937_64 rng(seed);
  const auto& items = corpus.items();
  const auto& queries = corpus.queries();
  const std::uint64_t available = universe - excluded_in_universe;
  if (available <= 4 * static_cast<std::uint64_t>(count)) {
    // Dense request: enumerate and take a seeded partial shuffle.
    std::vector<PairKey> pool;
    for (const auto& q : queries) {
      for (const auto& c : items) {
        PairKey key{q, c};
        if (c != q && !exclude.count(key)) pool.push_back(std::move(key));
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(count);
    out.pairs = std::move(pool);
    return out;
  }
  // Uniform query then uniform item, rejecting self pairs, exclusions and
  // repeats, is uniform over the remaining pairs.
  std::uniform_int_distribution<std::size_t> pick_q(0, queries.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_c(0, items.size() - 1);
  std::set<PairKey> taken;
  while (out.pairs.size() < count) {
    PairKey key{queries[pick_q(rng)], items[pick_c(rng)]};
    if (key.query == key.candidate || exclude.count(key) || taken.count(key)) continue;
    taken.insert(key);
    out.pairs.push_back(std::move(key));
  }
  return out;
}

}  // namespace eds

#endif  // EDS_ANNOTATION_HPP_
