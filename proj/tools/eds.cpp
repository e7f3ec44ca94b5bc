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

// eds: command-line front end for the workbench.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "eds/eds.hpp"
#include "eds/http_server.hpp"

namespace {

using Json = nlohmann::ordered_json;

// "name=path", or a bare path whose file name up to the first dot is the name.
eds::ModelHandle LoadModelSpec(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq != std::string::npos) {
    const std::string name = spec.substr(0, eq);
    if (!eds::text::IsValidId(name)) throw eds::InvalidArgument("bad model name in '" + spec + "'");
    return eds::LoadModel(spec.substr(eq + 1), name);
  }
  std::string name = std::filesystem::path(spec).filename().string();
  name = name.substr(0, name.find('.'));
  return eds::LoadModel(spec, name);
}

std::vector<eds::ModelHandle> LoadModels(const std::vector<std::string>& specs) {
  std::vector<eds::ModelHandle> out;
  for (const auto& s : specs) out.push_back(LoadModelSpec(s));
  return out;
}

void Emit(const Json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  auto f = eds::text::OpenForWrite(out);
  f << j.dump(2) << "\n";
}

Json Opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::vector<std::size_t> ParseKs(const std::string& s) {
  std::vector<std::size_t> ks;
  for (const auto tok : eds::text::Split(s, ',')) {
    std::size_t k = 0;
    if (!eds::text::ParseInt(tok, k) || k == 0) throw eds::InvalidArgument("bad k list '" + s + "'");
    ks.push_back(k);
  }
  return ks;
}

eds::RankWindow ParseWindow(const std::string& s) {
  const auto parts = eds::text::Split(s, ':');
  eds::RankWindow w;
  if (parts.size() != 2 || !eds::text::ParseInt(parts[0], w.lo) ||
      !eds::text::ParseInt(parts[1], w.hi) || w.lo >= w.hi) {
    throw eds::InvalidArgument("window must be LO:HI with LO < HI, got '" + s + "'");
  }
  return w;
}

std::vector<eds::ExpertId> ParseExperts(const std::string& s) {
  std::vector<eds::ExpertId> out;
  for (const auto tok : eds::text::Split(s, ',')) {
    if (!eds::text::IsValidId(tok)) throw eds::InvalidArgument("bad expert list '" + s + "'");
    out.emplace_back(tok);
  }
  return out;
}

eds::AnnotationServer* g_server = nullptr;

void OnSignal(int) {
  if (g_server != nullptr) g_server->Stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ensemble discovery of perceptual-similarity ground truth"};
  app.require_subcommand(1);
  std::size_t workers = 0;
  app.add_option("--workers", workers, "Worker threads (0 = hardware concurrency)");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic dataset");
  eds::SyntheticSpec sspec;
  std::string synth_out;
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--items", sspec.num_items);
  synth->add_option("--queries", sspec.num_queries);
  synth->add_option("--positives", sspec.positives_per_query, "Planted positives per query");
  synth->add_option("--dim", sspec.dim);
  synth->add_option("--noise", sspec.model_noise, "Noise per model")->delimiter(',');
  synth->add_option("--seed", sspec.seed);

  // discover
  auto* discover = app.add_subcommand("discover", "Build the suspect set S_k");
  std::string corpus_path, out_path;
  std::vector<std::string> model_specs;
  std::size_t k = 6;
  discover->add_option("--corpus", corpus_path, "Manifest TSV")->required();
  discover->add_option("--model", model_specs, "NAME=PATH, repeatable")->required();
  discover->add_option("--k", k, "Per-model suspects per query");
  discover->add_option("--out", out_path, "Suspects JSON-lines file")->required();

  // overlap
  auto* overlap = app.add_subcommand("overlap", "Overlap matrix and duplication statistics");
  std::string suspects_path;
  overlap->add_option("--suspects", suspects_path)->required();
  overlap->add_option("--out", out_path);

  // cost
  auto* cost = app.add_subcommand("cost", "Compare EDS cost against brute force");
  double p_hat = 0.0;
  cost->add_option("--corpus", corpus_path)->required();
  cost->add_option("--suspects", suspects_path)->required();
  cost->add_option("--p-hat", p_hat)->required();
  cost->add_option("--out", out_path);

  // resolve
  auto* resolve = app.add_subcommand("resolve", "Majority-vote a vote log into labels");
  std::string votes_path;
  std::size_t num_experts = 0;
  resolve->add_option("--votes", votes_path)->required();
  resolve->add_option("--num-experts", num_experts, "Panel size E")->required();
  resolve->add_option("--out", out_path, "Labels TSV")->required();

  // identity-gt
  auto* identity = app.add_subcommand("identity-gt", "Labels from shared identity labels");
  identity->add_option("--corpus", corpus_path)->required();
  identity->add_option("--out", out_path, "Labels TSV")->required();

  // sample-pairs
  auto* sample = app.add_subcommand("sample-pairs", "Uniform random pairs for estimating p");
  std::size_t count = 2000;
  std::uint64_t seed = 42;
  sample->add_option("--corpus", corpus_path)->required();
  sample->add_option("--count", count);
  sample->add_option("--seed", seed);
  sample->add_option("--exclude", suspects_path, "Suspects file whose pairs are excluded");
  sample->add_option("--out", out_path, "Pairs TSV")->required();

  // estimate-p
  auto* estimate = app.add_subcommand("estimate-p", "MAP estimate of the positive rate");
  std::uint64_t a = 0, b = 0;
  double p_lb = 0.0;
  estimate->add_option("--a", a, "Positives among sampled pairs")->required();
  estimate->add_option("--b", b, "Sample size")->required();
  estimate->add_option("--p-lb", p_lb, "Lower bound on p")->required();

  // budget
  auto* budget = app.add_subcommand("budget", "Chebyshev sample size");
  double epsilon = 0.0, q_prob = 0.0;
  std::optional<double> budget_p;
  budget->add_option("--epsilon", epsilon)->required();
  budget->add_option("--q", q_prob, "Failure probability")->required();
  budget->add_option("--p", budget_p, "Rate used to evaluate the bound");

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate models against a ground truth");
  std::string labels_path, ks = "5,9", negatives = "annotated", window = "100:500";
  std::string origin = "model", averaging = "per-pair";
  std::size_t neg_count = 5;
  eval->add_option("--corpus", corpus_path)->required();
  eval->add_option("--model", model_specs, "NAME=PATH, repeatable")->required();
  eval->add_option("--labels", labels_path)->required();
  eval->add_option("--k", ks, "Comma-separated cutoffs");
  eval->add_option("--negatives", negatives)->check(CLI::IsMember({"annotated", "sampled"}));
  eval->add_option("--window", window, "Rank window LO:HI for sampled negatives");
  eval->add_option("--window-origin", origin)->check(CLI::IsMember({"model", "generators"}));
  eval->add_option("--count", neg_count, "Sampled negatives per query");
  eval->add_option("--seed", seed);
  eval->add_option("--hit-averaging", averaging)->check(CLI::IsMember({"per-pair", "per-query"}));
  eval->add_option("--out", out_path);

  // loo
  auto* loo = app.add_subcommand("loo", "Leave-one-model-out robustness study");
  std::string metric = "macro", mode = "auto";
  std::size_t draws = 10000;
  loo->add_option("--corpus", corpus_path)->required();
  loo->add_option("--model", model_specs, "NAME=PATH, repeatable")->required();
  loo->add_option("--suspects", suspects_path)->required();
  loo->add_option("--labels", labels_path)->required();
  loo->add_option("--ranking-metric", metric)->check(CLI::IsMember({"macro", "micro"}));
  loo->add_option("--permutation", mode)->check(CLI::IsMember({"auto", "exact", "monte-carlo"}));
  loo->add_option("--draws", draws);
  loo->add_option("--seed", seed);
  loo->add_option("--out", out_path);

  // serve
  auto* serve = app.add_subcommand("serve", "Run the annotation service");
  std::string experts, host = "127.0.0.1", static_ui;
  int port = 8080;
  serve->add_option("--corpus", corpus_path)->required();
  serve->add_option("--suspects", suspects_path)->required();
  serve->add_option("--experts", experts, "Comma-separated expert ids")->required();
  serve->add_option("--votes", votes_path, "Vote log (default: <data dir>/votes.jsonl)");
  serve->add_option("--model", model_specs, "Models for metric previews");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--static-ui", static_ui, "Directory served at /");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const auto data = eds::MakeSyntheticCorpus(sspec);
      eds::WriteSyntheticDataset(data, synth_out);
      std::cout << "wrote " << data.models.size() << " models, " << data.positives.size()
                << " planted positives to " << synth_out << "\n";
    } else if (*discover) {
      const auto corpus = eds::LoadManifest(corpus_path);
      std::vector<eds::ModelSuspects> per_model;
      for (const auto& m : LoadModels(model_specs)) {
        per_model.push_back(eds::BuildSuspectsPerModel(m, corpus, k, workers));
      }
      const auto s = eds::UnionDedupe(per_model);
      eds::WriteSuspects(out_path, s);
      std::cout << "|S_k| = " << s.pairs.size() << " (bound " << s.models.size() * s.queries.size() * k
                << ")\n";
    } else if (*overlap) {
      const auto s = eds::LoadSuspects(suspects_path);
      const auto m = eds::ComputeOverlapMatrix(s);
      const auto d = eds::ComputeDuplicationStats(s);
      Json matrix = Json::object();
      for (std::size_t i = 0; i < m.models.size(); ++i) {
        Json row = Json::object();
        for (std::size_t j = 0; j < m.models.size(); ++j) row[m.models[j]] = Opt(m.percent[i][j]);
        matrix[m.models[i]] = row;
      }
      Json j;
      j["models"] = m.models;
      j["overlap_percent"] = matrix;
      j["mean_off_diagonal"] = m.MeanOffDiagonal();
      j["avg_candidates_per_query"] = d.avg_candidates_per_query;
      j["max_per_query"] = d.max_per_query;
      j["duplication_rate"] = d.duplication_rate;
      Emit(j, out_path);
    } else if (*cost) {
      const auto corpus = eds::LoadManifest(corpus_path);
      const auto s = eds::LoadSuspects(suspects_path);
      const auto r = eds::ComputeCostReport(corpus, s, p_hat);
      Json j;
      j["brute_force_ops"] = r.brute_force_ops;
      j["eds_ops"] = r.eds_ops;
      j["eds_upper_bound"] = r.eds_upper_bound;
      j["speedup"] = r.speedup;
      j["nominal_ratio"] = std::to_string(r.nominal_ratio_num) + "/" + std::to_string(r.nominal_ratio_den);
      j["nominal_ratio_value"] = r.nominal_ratio;
      j["p_hat"] = r.p_hat;
      j["random_expected_trials_per_positive"] = r.random_expected_trials_per_positive;
      Emit(j, out_path);
    } else if (*resolve) {
      const auto report = eds::ResolveLabels(eds::LoadVotes(votes_path), num_experts);
      eds::WriteLabelsTsv(out_path, report.gt);
      std::cout << report.gt.labels.size() << " labels (" << report.gt.NumPositives()
                << " positive), " << report.incomplete.size() << " pairs missing votes\n";
    } else if (*identity) {
      const auto gt = eds::IdentityGroundTruth(eds::LoadManifest(corpus_path));
      eds::WriteLabelsTsv(out_path, gt);
      std::cout << gt.labels.size() << " labels (" << gt.NumPositives() << " positive)\n";
    } else if (*sample) {
      const auto corpus = eds::LoadManifest(corpus_path);
      std::set<eds::PairKey> exclude;
      if (!suspects_path.empty()) {
        for (const auto& key : eds::LoadSuspects(suspects_path).Keys()) exclude.insert(key);
      }
      const auto drawn = eds::SampleRandomPairs(corpus, exclude, count, seed);
      auto f = eds::text::OpenForWrite(out_path);
      f << "# seed " << drawn.seed << ", excluded " << drawn.excluded << "\n";
      for (const auto& p : drawn.pairs) f << p.query << "\t" << p.candidate << "\n";
    } else if (*estimate) {
      const auto e = eds::EstimateP(a, b, p_lb);
      Emit(Json{{"a", e.a}, {"b", e.b}, {"p_lb", e.p_lb}, {"p_hat", e.p_hat}}, "");
    } else if (*budget) {
      const auto r = eds::ChebyshevBudget(epsilon, q_prob, budget_p);
      Json j{{"epsilon", r.epsilon}, {"q", r.q_prob}, {"b", r.b}};
      if (r.p) {
        j["p"] = *r.p;
        j["bound"] = *r.bound;
        j["vacuous"] = r.vacuous;
      }
      Emit(j, "");
    } else if (*eval) {
      const auto corpus = eds::LoadManifest(corpus_path);
      const auto gt = eds::ReadLabelsTsv(labels_path);
      const auto models = LoadModels(model_specs);
      eds::EvalConfig config;
      config.ks = ParseKs(ks);
      config.workers = workers;
      config.hit_averaging =
          averaging == "per-query" ? eds::HitAveraging::kPerQuery : eds::HitAveraging::kPerPair;
      if (negatives == "sampled") {
        config.negatives = eds::NegativeSource::Sampled(
            ParseWindow(window), neg_count, seed,
            origin == "generators" ? eds::WindowOrigin::kGeneratorUnion
                                   : eds::WindowOrigin::kEvaluatedModel);
      }
      const auto queries = gt.Queries();
      std::vector<eds::ModelRankings> rankings;
      for (const auto& m : models) rankings.emplace_back(m, corpus, queries, workers);
      std::vector<const eds::ModelRankings*> generators;
      for (const auto& r : rankings) generators.push_back(&r);
      Json reports = Json::array();
      for (const auto& r : rankings) reports.push_back(eds::ToJson(eds::Evaluate(r, gt, config, generators)));
      Emit(Json{{"ground_truth", labels_path}, {"reports", reports}}, out_path);
    } else if (*loo) {
      const auto corpus = eds::LoadManifest(corpus_path);
      eds::LooConfig config;
      config.workers = workers;
      config.ranking_metric = metric == "micro" ? eds::RankingMetric::kMicro : eds::RankingMetric::kMacro;
      config.permutation.mode = mode == "exact"         ? eds::PermutationOptions::Mode::kExact
                                : mode == "monte-carlo" ? eds::PermutationOptions::Mode::kMonteCarlo
                                                        : eds::PermutationOptions::Mode::kAuto;
      config.permutation.draws = draws;
      config.permutation.seed = seed;
      const auto report = eds::LooReport(corpus, LoadModels(model_specs), eds::LoadSuspects(suspects_path),
                                         eds::ReadLabelsTsv(labels_path), config);
      Emit(eds::ToJson(report), out_path);
    } else if (*serve) {
      const auto corpus = eds::LoadManifest(corpus_path);
      eds::ServerOptions options;
      std::filesystem::create_directories(options.data_dir);
      if (!static_ui.empty()) options.static_ui = static_ui;
      if (votes_path.empty()) votes_path = (options.data_dir / "votes.jsonl").string();
      eds::StoreOptions store_options;
      store_options.snapshot_path = options.data_dir / "progress.json";
      eds::AnnotationStore store(eds::LoadSuspects(suspects_path), ParseExperts(experts), votes_path,
                                 store_options);
      eds::AnnotationServer server(store, corpus, LoadModels(model_specs), options);
      g_server = &server;
      std::signal(SIGINT, OnSignal);
      std::signal(SIGTERM, OnSignal);
      std::cout << "serving " << store.suspects().pairs.size() << " pairs on http://" << host << ":"
                << port << " (votes: " << votes_path << ")" << std::endl;
      if (!server.Listen(host, port)) {
        std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
        return 1;
      }
      store.WriteSnapshot();
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
