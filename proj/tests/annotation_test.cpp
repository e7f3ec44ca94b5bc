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

#include "eds/annotation.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "gtest/gtest.h"

namespace eds {
namespace {

Timestamp At(long long ms) { return Timestamp(std::chrono::milliseconds(ms)); }

Vote V(const std::string& q, const std::string& c, const std::string& expert, int label,
       long long ms) {
  return Vote{PairKey{q, c}, expert, *LabelFromInt(label), At(ms)};
}

VoteBook Book(std::vector<ExpertId> experts = {"alice", "bob", "carol"}) {
  return VoteBook({{"q", "a"}, {"q", "b"}, {"r", "a"}}, std::move(experts));
}

TEST(RecordVote, AppendsAndSupersedes) {
  VoteBook book = Book();
  EXPECT_FALSE(book.Record(V("q", "a", "alice", 1, 1)).superseded);
  EXPECT_EQ(book.log().size(), 1u);
  EXPECT_EQ(book.EffectiveVoteCount(), 1u);
  const auto out = book.Record(V("q", "a", "alice", 0, 2));
  EXPECT_TRUE(out.superseded);
  EXPECT_TRUE(out.label_changed);
  EXPECT_EQ(book.log().size(), 2u);
  EXPECT_EQ(book.EffectiveVoteCount(), 1u);
  EXPECT_EQ(book.VotesFor({"q", "a"})->at("alice").label, Label::kNegative);
}

TEST(RecordVote, OlderTimestampDoesNotWin) {
  VoteBook book = Book();
  book.Record(V("q", "a", "alice", 1, 10));
  const auto out = book.Record(V("q", "a", "alice", 0, 5));
  EXPECT_TRUE(out.superseded);
  EXPECT_FALSE(out.label_changed);
  EXPECT_EQ(book.VotesFor({"q", "a"})->at("alice").label, Label::kPositive);
}

TEST(RecordVote, Rejections) {
  VoteBook book = Book();
  EXPECT_THROW(book.Record(V("q", "zzz", "alice", 1, 1)), Error);
  EXPECT_THROW(book.Record(V("q", "a", "mallory", 1, 1)), Error);
  EXPECT_TRUE(book.log().empty());
  EXPECT_THROW(VoteBook({}, {}), Error);
  EXPECT_THROW(VoteBook({}, {"a", "a"}), Error);
}

TEST(ResolveLabels, MajorityExamples) {
  VoteBook book = Book();
  book.Record(V("q", "a", "alice", 1, 1));
  book.Record(V("q", "a", "bob", 1, 1));
  book.Record(V("q", "a", "carol", 0, 1));
  book.Record(V("q", "b", "alice", 1, 1));
  book.Record(V("q", "b", "bob", 0, 1));
  book.Record(V("r", "a", "alice", 0, 1));
  book.Record(V("r", "a", "bob", 0, 1));
  book.Record(V("r", "a", "carol", 1, 1));
  const ResolveReport r = book.Resolve();
  EXPECT_EQ(r.gt.Find({"q", "a"}), Label::kPositive);
  EXPECT_EQ(r.gt.Find({"q", "b"}), Label::kNegative);  // tie
  EXPECT_EQ(r.gt.Find({"r", "a"}), Label::kNegative);
  EXPECT_EQ(r.gt.labels.at({"q", "b"}).num_votes, 2u);
  EXPECT_EQ(r.incomplete, (std::vector<PairKey>{{"q", "b"}}));
  EXPECT_EQ(r.gt.num_experts, 3u);
  EXPECT_EQ(r.gt.vote_log.size(), 8u);
}

TEST(ResolveLabels, UnvotedPairsOmitted) {
  VoteBook book = Book();
  book.Record(V("q", "a", "alice", 1, 1));
  const ResolveReport r = book.Resolve();
  EXPECT_EQ(r.gt.labels.size(), 1u);
  EXPECT_FALSE(r.gt.Find({"q", "b"}));
}

TEST(ResolveLabels, ThresholdIsFloorHalfPlusOne) {
  for (std::size_t e = 1; e <= 9; ++e) {
    for (std::size_t pos = 0; pos <= e; ++pos) {
      EXPECT_EQ(MajorityLabel(pos, e) == Label::kPositive, pos >= e / 2 + 1)
          << pos << " of " << e;
    }
  }
}

TEST(ResolveLabels, PermutationInvariant) {
  std::mt19937_64 rng(17);
  const std::vector<ExpertId> experts = {"e0", "e1", "e2", "e3"};
  std::vector<Vote> log;
  std::uniform_int_distribution<int> bit(0, 1);
  std::uniform_int_distribution<int> pick_pair(0, 9);
  std::uniform_int_distribution<int> pick_expert(0, 3);
  for (int i = 0; i < 300; ++i) {
    const int p = pick_pair(rng);
    log.push_back(V("q" + std::to_string(p / 3), "c" + std::to_string(p), experts[pick_expert(rng)],
                    bit(rng), i));
  }
  const auto ref = ResolveLabels(log, experts.size()).gt.labels;
  for (int t = 0; t < 20; ++t) {
    std::shuffle(log.begin(), log.end(), rng);
    EXPECT_EQ(ResolveLabels(log, experts.size()).gt.labels, ref);
  }
}

TEST(ResolveLabels, FlippingAVoteUpNeverFlipsLabelDown) {
  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> bit(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t e = 1 + trial % 6;
    std::vector<Vote> log;
    for (std::size_t x = 0; x < e; ++x) log.push_back(V("q", "c", "e" + std::to_string(x), bit(rng), 0));
    const Label before = ResolveLabels(log, e).gt.Find({"q", "c"}).value();
    for (std::size_t x = 0; x < e; ++x) {
      if (log[x].label == Label::kPositive) continue;
      auto flipped = log;
      flipped[x].label = Label::kPositive;
      const Label after = ResolveLabels(flipped, e).gt.Find({"q", "c"}).value();
      if (before == Label::kPositive) {
        EXPECT_EQ(after, Label::kPositive);
      }
    }
  }
}

TEST(LowerBoundP, Examples) {
  const double p_lb = LowerBoundP(45920, std::uint64_t{2000} * 52711);
  EXPECT_NEAR(p_lb, 0.00044, 0.000005);
  EXPECT_DOUBLE_EQ(LowerBoundP(0, Corpus({"a", "b"}, {"a"})), 0.0);
  EXPECT_DOUBLE_EQ(LowerBoundP(1, Corpus({"a", "b", "c"}, {"a"})), 0.5);
  // Disjoint queries: |A| = |Q| |D|.
  EXPECT_DOUBLE_EQ(LowerBoundP(1, Corpus({"a", "b"}, {"q"})), 0.5);
  EXPECT_THROW(LowerBoundP(1, std::uint64_t{0}), Error);
}

TEST(EstimateP, Examples) {
  EXPECT_DOUBLE_EQ(EstimateP(2, 2000, 0.00045).p_hat, 0.001);
  EXPECT_DOUBLE_EQ(EstimateP(0, 100, 0.01).p_hat, 0.01);
  EXPECT_DOUBLE_EQ(EstimateP(50, 100, 0.001).p_hat, 0.5);
  EXPECT_THROW(EstimateP(3, 2, 0.0), Error);
  EXPECT_THROW(EstimateP(0, 0, 0.0), Error);
  EXPECT_THROW(EstimateP(0, 1, 1.5), Error);
}

TEST(EstimateP, MonotoneAndClamped) {
  for (std::uint64_t b : {1u, 7u, 100u}) {
    for (std::uint64_t a = 0; a <= b; ++a) {
      EXPECT_EQ(EstimateP(a, b, 0.0).p_hat, static_cast<double>(a) / static_cast<double>(b));
      for (double lb : {0.0, 0.01, 0.3, 1.0}) {
        const double p = EstimateP(a, b, lb).p_hat;
        EXPECT_GE(p, lb);
        EXPECT_LE(p, 1.0);
        if (a < b) {
          EXPECT_LE(p, EstimateP(a + 1, b, lb).p_hat);
        }
        if (lb < 1.0) {
          EXPECT_LE(p, EstimateP(a, b, std::min(1.0, lb + 0.05)).p_hat);
        }
      }
    }
  }
}

TEST(ChebyshevBudget, Examples) {
  EXPECT_EQ(ChebyshevBudget(0.01, 0.05).b, 2000u);
  EXPECT_EQ(ChebyshevBudget(0.1, 0.1).b, 100u);
  EXPECT_EQ(ChebyshevBudget(0.3, 0.3).b, 12u);  // 1/0.09 = 11.1
  EXPECT_THROW(ChebyshevBudget(0.0, 0.1), Error);
  EXPECT_THROW(ChebyshevBudget(0.1, 1.0), Error);
}

TEST(ChebyshevBudget, BoundValue) {
  // 0.001 / (2000 * 0.01^2) = 0.001 / 0.2
  EXPECT_DOUBLE_EQ(ChebyshevBound(0.001, 2000, 0.01), 0.005);
  const BudgetReport r = ChebyshevBudget(0.01, 0.05, 0.001);
  ASSERT_TRUE(r.bound);
  EXPECT_NEAR(*r.bound, 0.005, 1e-15);
  EXPECT_FALSE(r.vacuous);
  // With p above epsilon the bound stops being informative.
  const BudgetReport loose = ChebyshevBudget(0.01, 0.5, 0.5);
  EXPECT_TRUE(loose.vacuous);
}

TEST(Rfc3339, FormatAndParse) {
  const Timestamp t = ParseRfc3339("2026-10-19T08:30:00.125Z");
  EXPECT_EQ(FormatRfc3339(t), "2026-10-19T08:30:00.125Z");
  EXPECT_EQ(ParseRfc3339("2026-10-19T10:30:00.125+02:00"), t);
  EXPECT_EQ(ParseRfc3339("2026-10-19T08:30:00.1259Z"), t);
  EXPECT_EQ(FormatRfc3339(ParseRfc3339("1970-01-01T00:00:00Z")), "1970-01-01T00:00:00.000Z");
  EXPECT_THROW(ParseRfc3339("2026-13-01T00:00:00Z"), Error);
  EXPECT_THROW(ParseRfc3339("2026-10-19 08:30:00Z"), Error);
  EXPECT_THROW(ParseRfc3339("2026-10-19T08:30:00"), Error);
}

TEST(VoteLog, RoundTrip) {
  const std::vector<Vote> votes = {V("q", "a", "alice", 1, 1700000000123),
                                   V("q", "b", "bob", 0, 1700000000999)};
  std::stringstream buf;
  for (const auto& v : votes) buf << VoteToJson(v) << '\n';
  EXPECT_EQ(ReadVotes(buf, "buf"), votes);
  std::istringstream bad(R"({"q":"a","c":"b","expert":"e","label":2,"ts":"2026-01-01T00:00:00Z"})");
  EXPECT_THROW(ReadVotes(bad, "bad"), Error);
}

TEST(SampleRandomPairs, DistinctExcludedAndSeeded) {
  std::vector<ItemId> items;
  for (int i = 0; i < 50; ++i) items.push_back("i" + std::to_string(i));
  const Corpus corpus(items, {"i0", "i1", "q"});
  const std::set<PairKey> exclude = {{"i0", "i1"}, {"q", "i5"}};
  const auto a = SampleRandomPairs(corpus, exclude, 40, 9);
  const auto b = SampleRandomPairs(corpus, exclude, 40, 9);
  EXPECT_EQ(a.pairs, b.pairs);
  std::set<PairKey> seen(a.pairs.begin(), a.pairs.end());
  EXPECT_EQ(seen.size(), 40u);
  for (const auto& p : a.pairs) {
    EXPECT_FALSE(exclude.count(p));
    EXPECT_NE(p.query, p.candidate);
  }
  // Dense path: every remaining pair.
  const auto all = SampleRandomPairs(corpus, exclude, corpus.PairUniverseSize() - 2, 1);
  EXPECT_EQ(std::set<PairKey>(all.pairs.begin(), all.pairs.end()).size(), all.pairs.size());
  EXPECT_THROW(SampleRandomPairs(corpus, exclude, corpus.PairUniverseSize() - 1, 1), Error);
}

}  // namespace
}  // namespace eds
