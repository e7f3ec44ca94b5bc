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

// Acceptance suite: one PASS/FAIL line per criterion.

#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <random>

#include "eds/eds.hpp"
#include "gtest/gtest.h"
#include "test_util.hpp"

namespace eds {
namespace {

using testing::ScoreModel;
using testing::TempDir;
using Clock = std::chrono::steady_clock;

double Seconds(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string C(std::size_t i) { return "c" + std::to_string(i); }

TEST(Acceptance, RocAucMatchesBruteForceOracle) {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> size(1, 20);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::size_t mismatches = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t np = size(rng), nn = size(rng);
    std::vector<ItemId> items;
    std::map<ItemId, std::map<ItemId, double>> rows;
    std::vector<double> pos_scores, neg_scores;
    QueryEvalSet set{"q", {}, {}, false};
    for (std::size_t i = 0; i < np + nn; ++i) {
      items.push_back(C(i));
      const double s = score(rng);
      rows["q"][C(i)] = s;
      if (i < np) {
        set.positives.push_back(C(i));
        pos_scores.push_back(s);
      } else {
        set.negatives.push_back(C(i));
        neg_scores.push_back(s);
      }
    }
    const Corpus corpus(items, {"q"});
    const ModelRankings r(ScoreModel("m", rows), corpus, {"q"});
    // Double loop over (positive, negative) pairs.
    std::size_t wins = 0;
    for (const double p : pos_scores) {
      for (const double n : neg_scores) wins += p > n;
    }
    const double oracle = static_cast<double>(wins) / static_cast<double>(np * nn);
    const double got = RocAucQuery(r.For("q"), set);
    mismatches += got != oracle;
    EXPECT_EQ(got, oracle) << "instance " << inst;
  }
  EXPECT_EQ(mismatches, 0u);
  EXPECT_LT(Seconds(start), 5.0);
}

TEST(Acceptance, EstimatorArithmetic) {
  EXPECT_EQ(EstimateP(2, 2000, 0.00045).p_hat, 0.001);
  EXPECT_EQ(ChebyshevBudget(0.01, 0.05).b, 2000u);
  std::vector<ItemId> items;
  for (std::size_t i = 0; i < 52712; ++i) items.push_back(C(i));
  const std::vector<ItemId> queries(items.begin(), items.begin() + 2000);
  const Corpus corpus(items, queries);
  const double lb = LowerBoundP(45920, corpus);
  EXPECT_GE(lb, 0.00043);
  EXPECT_LE(lb, 0.00045);
}

TEST(Acceptance, NominalCostRatio) {
  const CostReport r = ComputeCostReport(CostInputs{52712, 2000, 2000, 6, 6, 54170}, 0.001);
  EXPECT_EQ(r.nominal_ratio_num, 52711u);
  EXPECT_EQ(r.nominal_ratio_den, 36u);
  EXPECT_EQ(r.brute_force_ops, 2000u * 52711u);
  EXPECT_EQ(r.eds_upper_bound, 72000u);
  EXPECT_NEAR(r.nominal_ratio, 1464.19, 0.01);
}

TEST(Acceptance, DiscoveryBeatsRandomSampling) {
  const auto start = Clock::now();
  SyntheticSpec spec;  // 5000 items, 200 queries, 5 planted positives each, 3 scorers
  const SyntheticCorpus data = MakeSyntheticCorpus(spec);
  const std::size_t k = 6;
  const double planted_p = static_cast<double>(data.positives.size()) /
                           static_cast<double>(data.corpus.PairUniverseSize());
  EXPECT_NEAR(planted_p, 0.001, 1e-12);

  std::vector<ModelSuspects> per_model;
  for (const auto& m : data.models) {
    per_model.push_back(BuildSuspectsPerModel(m, data.corpus, k));
    // Each scorer must place at least 60% of a query's planted positives
    // in its top-k.
    std::map<ItemId, std::size_t> found;
    for (const auto& rp : per_model.back().pairs) {
      found[rp.query] += data.positives.count(PairKey{rp.query, rp.candidate});
    }
    double recall = 0.0;
    for (const auto& q : data.corpus.queries()) {
      recall += static_cast<double>(found[q]) / static_cast<double>(spec.positives_per_query);
    }
    recall /= static_cast<double>(data.corpus.queries().size());
    std::printf("  %s top-%zu recall of planted positives: %.3f\n", m.name().c_str(), k, recall);
    EXPECT_GE(recall, 0.6) << m.name();
  }
  const SuspectSet s = UnionDedupe(per_model);
  const auto keys = s.Keys();
  const GroundTruth gt = PlantedLabels(data, std::set<PairKey>(keys.begin(), keys.end()));
  const double p_k = static_cast<double>(gt.NumPositives()) / static_cast<double>(s.pairs.size());

  const auto sample = SampleRandomPairs(data.corpus, {}, 2000, 99);
  std::size_t hits = 0;
  for (const auto& key : sample.pairs) hits += data.positives.count(key);
  const double p_lb = LowerBoundP(gt.NumPositives(), data.corpus);
  const double random_rate = EstimateP(hits, sample.pairs.size(), p_lb).p_hat;
  std::printf("  |S_k| = %zu, positives = %zu, p_k = %.4f, random hits = %zu/2000, p_hat = %.5f, "
              "ratio = %.1f\n",
              s.pairs.size(), gt.NumPositives(), p_k, hits, random_rate, p_k / random_rate);
  EXPECT_GE(p_k, 50.0 * random_rate);
  EXPECT_LT(Seconds(start), 30.0);
}

// Random multi-query instance through the ranking pipeline.
struct Instance {
  Corpus corpus;
  std::map<ItemId, std::map<ItemId, double>> scores;
  GroundTruth gt;
};

Instance RandomInstance(std::mt19937_64& rng) {
  Instance inst;
  std::uniform_int_distribution<std::size_t> nq(1, 8), ni(4, 40);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::uniform_int_distribution<int> lab(0, 2);
  std::vector<ItemId> items, queries;
  for (std::size_t i = 0, n = ni(rng); i < n; ++i) items.push_back(C(i));
  for (std::size_t q = 0, n = nq(rng); q < n; ++q) queries.push_back("q" + std::to_string(q));
  for (const auto& q : queries) {
    for (const auto& c : items) {
      inst.scores[q][c] = u(rng);
      const int l = lab(rng);
      if (l == 0) inst.gt.Set({q, c}, Label::kPositive);
      if (l == 1) inst.gt.Set({q, c}, Label::kNegative);
    }
  }
  inst.corpus = Corpus(items, queries);
  return inst;
}

TEST(Acceptance, MetricInvariance) {
  std::mt19937_64 rng(77);
  // Macro ROC-AUC is unchanged by per-query strictly increasing transforms.
  for (int t = 0; t < 100; ++t) {
    Instance inst = RandomInstance(rng);
    const ModelRankings before(ScoreModel("m", inst.scores), inst.corpus, inst.corpus.queries());
    std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
    for (auto& [q, row] : inst.scores) {
      const double a = scale(rng), b = shift(rng);
      const bool exponential = rng() % 2 == 0;
      for (auto& [c, s] : row) s = exponential ? std::exp(s) * a + b : std::pow(s + 3.0, 3) * a + b;
    }
    const ModelRankings after(ScoreModel("m", inst.scores), inst.corpus, inst.corpus.queries());
    const auto sets = BuildEvalSets(inst.gt, NegativeSource::Annotated(), &before);
    EXPECT_EQ(MacroAverages(before, sets).roc_auc, MacroAverages(after, sets).roc_auc);
  }

  // A per-query shift moves micro ROC-AUC but leaves macro alone.
  {
    const Corpus corpus({"p", "n"}, {"q1", "q2"});
    GroundTruth gt;
    for (const char* q : {"q1", "q2"}) {
      gt.Set({q, "p"}, Label::kPositive);
      gt.Set({q, "n"}, Label::kNegative);
    }
    const auto base = ScoreModel("m", {{"q1", {{"p", 0.9}, {"n", 0.1}}}, {"q2", {{"p", 0.6}, {"n", 0.5}}}});
    const auto moved = ScoreModel("m", {{"q1", {{"p", 0.9}, {"n", 0.1}}}, {"q2", {{"p", 1.1}, {"n", 1.0}}}});
    EvalConfig config;
    const MetricReport a = Evaluate(base, corpus, gt, config);
    const MetricReport b = Evaluate(moved, corpus, gt, config);
    EXPECT_EQ(*a.roc_auc_macro, *b.roc_auc_macro);
    EXPECT_GE(std::abs(*a.roc_auc_micro - *b.roc_auc_micro), 0.01);
    std::printf("  micro %.4f -> %.4f, macro %.4f -> %.4f\n", *a.roc_auc_micro, *b.roc_auc_micro,
                *a.roc_auc_macro, *b.roc_auc_macro);
  }

  // MRR@k <= HR@k, and both are non-decreasing in k.
  for (int t = 0; t < 100; ++t) {
    const Instance inst = RandomInstance(rng);
    const ModelRankings r(ScoreModel("m", inst.scores), inst.corpus, inst.corpus.queries());
    std::optional<double> prev_hr, prev_mrr;
    for (std::size_t k = 1; k <= inst.corpus.items().size(); ++k) {
      const auto hr = HitRateAtK(r, inst.gt, k);
      const auto mrr = MrrAtK(r, inst.gt, k);
      if (!hr) break;
      EXPECT_LE(*mrr, *hr);
      if (prev_hr) {
        EXPECT_GE(*hr, *prev_hr);
        EXPECT_GE(*mrr, *prev_mrr);
      }
      prev_hr = hr;
      prev_mrr = mrr;
    }
  }
}

TEST(Acceptance, MajorityTruthTable) {
  for (std::size_t e = 1; e <= 5; ++e) {
    for (std::size_t mask = 0; mask < (1u << e); ++mask) {
      std::vector<Vote> log;
      std::size_t positives = 0;
      for (std::size_t x = 0; x < e; ++x) {
        const bool pos = (mask >> x) & 1u;
        positives += pos;
        log.push_back(Vote{{"q", "c"}, "expert" + std::to_string(x),
                           pos ? Label::kPositive : Label::kNegative,
                           Timestamp(std::chrono::milliseconds(1000 + x))});
      }
      const Label expected = 2 * positives > e ? Label::kPositive : Label::kNegative;
      EXPECT_EQ(ResolveLabels(log, e).gt.Find({"q", "c"}), expected) << "E=" << e << " mask=" << mask;
      EXPECT_EQ(MajorityLabel(positives, e), expected);
    }
  }
}

// Four score-list models with a designed quality order. Per query, model j
// ranks the shared negative n above exactly j of the four positives, then
// its own negative u_j, then the other models' negatives. Every model's top
// 6 therefore holds the positives, n and u_j, so each leave-one-out subset
// drops exactly u_j per query while n keeps model j's j inversions.
struct DesignedEnsemble {
  Corpus corpus;
  std::vector<ModelHandle> models;
  SuspectSet s;
  GroundTruth gt;
};

DesignedEnsemble MakeDesignedEnsemble(std::size_t num_queries) {
  constexpr std::size_t kModels = 4, kPositives = 4;
  std::vector<ItemId> items, queries;
  auto id = [](std::size_t q, const std::string& name) { return "x" + std::to_string(q) + "_" + name; };
  for (std::size_t q = 0; q < num_queries; ++q) {
    queries.push_back("query" + std::to_string(q));
    for (std::size_t i = 0; i < kPositives; ++i) items.push_back(id(q, "p" + std::to_string(i)));
    items.push_back(id(q, "n"));
    for (std::size_t j = 0; j < kModels; ++j) items.push_back(id(q, "u" + std::to_string(j)));
  }
  DesignedEnsemble out;
  std::vector<ModelSuspects> per_model;
  out.corpus = Corpus(items, queries);
  for (std::size_t j = 0; j < kModels; ++j) {
    std::map<ItemId, std::map<ItemId, double>> rows;
    for (std::size_t q = 0; q < num_queries; ++q) {
      std::vector<ItemId> order;
      for (std::size_t i = 0; i < kPositives; ++i) {
        if (i == kPositives - j) order.push_back(id(q, "n"));
        order.push_back(id(q, "p" + std::to_string(i)));
      }
      if (j == 0) order.push_back(id(q, "n"));
      order.push_back(id(q, "u" + std::to_string(j)));
      for (std::size_t o = 0; o < kModels; ++o) {
        if (o != j) order.push_back(id(q, "u" + std::to_string(o)));
      }
      auto& row = rows[queries[q]];
      for (std::size_t r = 0; r < order.size(); ++r) row[order[r]] = 100.0 - static_cast<double>(r);
      for (const auto& item : items) row.emplace(item, -1.0);
    }
    out.models.push_back(ScoreModel("model" + std::to_string(j), rows));
    per_model.push_back(BuildSuspectsPerModel(out.models.back(), out.corpus, 6));
  }
  out.s = UnionDedupe(per_model);
  for (const auto& key : out.s.Keys()) {
    const bool positive = key.candidate.find("_p") != std::string::npos;
    out.gt.Set(key, positive ? Label::kPositive : Label::kNegative);
  }
  return out;
}

TEST(Acceptance, LeaveOneOutConsistency) {
  const DesignedEnsemble d = MakeDesignedEnsemble(25);
  const SuspectSet& s = d.s;
  ASSERT_EQ(s.pairs.size(), 25u * 9u);
  for (const auto& sub : LeaveOneOutSubsets(s, d.gt)) ASSERT_EQ(sub.labels.labels.size(), 25u * 8u);
  const RobustnessReport r = LooReport(d.corpus, d.models, s, d.gt);
  auto order = [&](auto auc_of) {
    std::vector<std::string> names = r.models;
    std::stable_sort(names.begin(), names.end(),
                     [&](const auto& a, const auto& b) { return auc_of(a) > auc_of(b); });
    return names;
  };
  const std::vector<std::string> designed = {"model0", "model1", "model2", "model3"};
  EXPECT_EQ(order([&](const std::string& m) { return *r.full.at(m).macro; }), designed);
  for (const auto& excluded : r.subsets) {
    EXPECT_EQ(order([&](const std::string& m) { return *r.per_subset.at(excluded).at(m).macro; }),
              designed)
        << "without " << excluded;
    const SpearmanCell& cell = r.spearman.at(excluded);
    ASSERT_TRUE(cell.sc);
    EXPECT_EQ(*cell.sc, 1.0);
    EXPECT_EQ(*cell.p_value, 1.0 / 24.0);
    std::printf("  without %s: SC = %.4f, p = %.6f\n", excluded.c_str(), *cell.sc, *cell.p_value);
  }

  LooConfig mc;
  mc.permutation.mode = PermutationOptions::Mode::kMonteCarlo;
  mc.permutation.seed = 2026;
  const RobustnessReport a = LooReport(d.corpus, d.models, s, d.gt, mc);
  const RobustnessReport b = LooReport(d.corpus, d.models, s, d.gt, mc);
  for (const auto& excluded : a.subsets) {
    char pa[32], pb[32];
    std::snprintf(pa, sizeof(pa), "%.4f", *a.spearman.at(excluded).p_value);
    std::snprintf(pb, sizeof(pb), "%.4f", *b.spearman.at(excluded).p_value);
    EXPECT_STREQ(pa, pb);
  }
}

TEST(Acceptance, VoteLogReplayAfterKill) {
  TempDir dir;
  const auto votes = dir.File("votes.jsonl");
  const auto expected_path = dir.File("expected.json");
  std::vector<SuspectPair> pairs;
  for (std::size_t i = 0; i < 60; ++i) {
    pairs.push_back(SuspectPair{"q" + std::to_string(i % 7), C(i), {Proposal{"A", 0}}});
  }
  const SuspectSet s = SuspectSetFromPairs(pairs);
  const std::vector<ExpertId> experts = {"alice", "bob", "carol"};

  std::fflush(stdout);
  const pid_t child = ::fork();
  ASSERT_GE(child, 0);
  if (child == 0) {
    // Child: 1000 random votes (many of them superseding), then die hard.
    AnnotationStore store(s, experts, votes);
    std::mt19937_64 rng(8);
    ProgressSnapshot last;
    for (int op = 0; op < 1000; ++op) {
      const auto& e = experts[rng() % experts.size()];
      last = store.SubmitVote(e, std::to_string(rng() % s.pairs.size()), static_cast<long long>(rng() % 2))
                 .progress;
    }
    WriteFileAtomically(expected_path, AnnotationStore::ToJson(last).dump());
    ::kill(::getpid(), SIGKILL);
    ::_exit(1);
  }
  int status = 0;
  ASSERT_EQ(::waitpid(child, &status, 0), child);
  ASSERT_TRUE(WIFSIGNALED(status));
  EXPECT_EQ(WTERMSIG(status), SIGKILL);

  std::ifstream in(expected_path);
  const auto expected = nlohmann::ordered_json::parse(in);
  const AnnotationStore replayed(s, experts, votes);
  const ProgressSnapshot got = replayed.Progress();
  EXPECT_EQ(AnnotationStore::ToJson(got), expected);
  EXPECT_EQ(got.log_length, 1000u);
  EXPECT_EQ(got.total_pairs, expected["total_pairs"].get<std::size_t>());
  EXPECT_EQ(got.fully_reviewed, expected["fully_reviewed"].get<std::size_t>());
  EXPECT_EQ(got.positives_so_far, expected["positives_so_far"].get<std::size_t>());
  EXPECT_EQ(got.running_p_k, expected["running_p_k"].get<double>());
  EXPECT_EQ(got.p_k_defined, expected["p_k_defined"].get<bool>());
  EXPECT_EQ(got.per_expert_done,
            (expected["per_expert_done"].get<std::map<ExpertId, std::size_t>>()));
}

TEST(Acceptance, IdentityOracleSanity) {
  ItemMetadata meta;
  std::vector<ItemId> ids;
  for (std::size_t i = 0; i < 60; ++i) {
    ids.push_back(C(i));
    meta.id_labels[C(i)] = "person" + std::to_string(i % 20);
  }
  const Corpus corpus(ids, ids, meta);
  const GroundTruth gt = IdentityGroundTruth(corpus);
  std::map<ItemId, std::map<ItemId, double>> oracle;
  for (const auto& q : ids) {
    for (const auto& c : ids) {
      if (q != c) oracle[q][c] = meta.id_labels.at(q) == meta.id_labels.at(c) ? 1.0 : 0.0;
    }
  }
  EvalConfig config;
  config.ks = {2, 5, 9};
  const MetricReport r = Evaluate(ScoreModel("oracle", oracle), corpus, gt, config);
  for (const std::size_t k : config.ks) EXPECT_EQ(*r.hr.at(k), 1.0) << "k=" << k;
}

class CriterionPrinter : public ::testing::EmptyTestEventListener {
  void OnTestEnd(const ::testing::TestInfo& info) override {
    std::printf("CRITERION %-34s %s\n", info.name(), info.result()->Passed() ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
};

}  // namespace
}  // namespace eds

int main(int argc, char** argv) {
  ::testing::InitGoogleTest(&argc, argv);
  ::testing::UnitTest::GetInstance()->listeners().Append(new eds::CriterionPrinter);
  return RUN_ALL_TESTS();
}
