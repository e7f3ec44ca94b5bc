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

// HTTP front end of the annotation service.
//
//   GET  /api/tasks?expert=<id>&n=<batch>
//   POST /api/votes            {"pair_id", "expert", "label"}
//   GET  /api/progress
//   GET  /api/pairs/<pair_id>
//   GET  /img/<item_id>
//   POST /api/resolve          writes labels.tsv into the data directory
//   GET  /api/metrics?model=<name>

#ifndef EDS_HTTP_SERVER_HPP_
#define EDS_HTTP_SERVER_HPP_

#include <httplib.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eds/annotation.hpp"
#include "eds/corpus.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/metrics.hpp"
#include "eds/service.hpp"

namespace eds {

struct ServerOptions {
  std::filesystem::path data_dir = DataDir();
  std::optional<std::filesystem::path> static_ui;
  std::vector<std::size_t> preview_ks = {5, 9};
};

class AnnotationServer {
 public:
  AnnotationServer(AnnotationStore& store, const Corpus& corpus,
                   std::vector<ModelHandle> models = {}, ServerOptions options = {})
      : store_(store), corpus_(corpus), options_(std::move(options)) {
    for (auto& m : models) models_.emplace(m.name(), std::move(m));
    Routes();
  }

  bool Listen(const std::string& host, int port) { return server_.listen(host, port); }

  // Binds an ephemeral port; call ListenAfterBind() afterwards.
  int BindToAnyPort(const std::string& host) { return server_.bind_to_any_port(host); }
  bool ListenAfterBind() { return server_.listen_after_bind(); }

  void Stop() { server_.stop(); }
  void WaitUntilReady() { server_.wait_until_ready(); }

 private:
  using Json = nlohmann::ordered_json;

  static void Reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void Fail(httplib::Response& res, int status, const std::string& message) {
    Reply(res, status, Json{{"error", message}});
  }

  static int StatusFor(const Error& e) {
    switch (e.kind()) {
      case Error::Kind::kNotFound:
        return 404;
      case Error::Kind::kIo:
        return 500;
      default:
        return 400;
    }
  }

  template <typename Handler>
  static httplib::Server::Handler Guard(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        Fail(res, StatusFor(e), e.what());
      } catch (const nlohmann::json::exception& e) {
        Fail(res, 400, std::string("malformed JSON: ") + e.what());
      }
    };
  }

  static Json TaskJson(const TaskItem& t) {
    return Json{{"pair_id", t.pair_id},
                {"query", t.query},
                {"candidate", t.candidate},
                {"query_image_url", t.query_image_url},
                {"candidate_image_url", t.candidate_image_url}};
  }

  static std::string ContentType(const std::filesystem::path& p) {
    auto ext = p.extension().string();
    for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    static const std::map<std::string, std::string> kTypes = {
        {".jpg", "image/jpeg"}, {".jpeg", "image/jpeg"}, {".png", "image/png"},
        {".gif", "image/gif"},  {".webp", "image/webp"}, {".bmp", "image/bmp"},
        {".svg", "image/svg+xml"}};
    const auto it = kTypes.find(ext);
    return it == kTypes.end() ? "application/octet-stream" : it->second;
  }

  void Routes() {
    server_.Get("/api/tasks", Guard([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string expert = req.get_param_value("expert");
                  if (expert.empty()) throw InvalidArgument("missing expert parameter");
                  std::size_t n = 10;
                  if (req.has_param("n") && !text::ParseInt(req.get_param_value("n"), n)) {
                    throw InvalidArgument("n must be a non-negative integer");
                  }
                  const TaskBatch batch = store_.NextBatch(expert, n);
                  Json pairs = Json::array();
                  for (const auto& t : batch.pairs) pairs.push_back(TaskJson(t));
                  Reply(res, 200,
                        Json{{"expert", batch.expert},
                             {"batch_size", batch.batch_size},
                             {"pairs", pairs}});
                }));

    server_.Post("/api/votes", Guard([this](const httplib::Request& req, httplib::Response& res) {
                   const auto body = nlohmann::json::parse(req.body);
                   const auto& pid = body.at("pair_id");
                   const std::string pair_id =
                       pid.is_string() ? pid.get<std::string>() : pid.dump();
                   const auto& label = body.at("label");
                   if (!label.is_number_integer()) throw InvalidArgument("label must be 0 or 1");
                   const VoteAck ack = store_.SubmitVote(body.at("expert").get<std::string>(),
                                                         pair_id, label.get<long long>());
                   Reply(res, 200,
                         Json{{"ok", true},
                              {"superseded", ack.superseded},
                              {"progress", AnnotationStore::ToJson(ack.progress)}});
                 }));

    server_.Get("/api/progress", Guard([this](const httplib::Request&, httplib::Response& res) {
                  Reply(res, 200, AnnotationStore::ToJson(store_.Progress()));
                }));

    server_.Get(R"(/api/pairs/([^/]+))",
                Guard([this](const httplib::Request& req, httplib::Response& res) {
                  const auto index = store_.ParsePairId(req.matches[1].str());
                  if (!index) throw NotFound("unknown pair id '" + req.matches[1].str() + "'");
                  const auto& p = store_.PairAt(*index);
                  Json votes = Json::object();
                  for (const auto& [expert, label] : store_.VotesOn(*index)) {
                    votes[expert] = ToInt(label);
                  }
                  Reply(res, 200,
                        Json{{"pair_id", std::to_string(*index)},
                             {"query", p.query},
                             {"candidate", p.candidate},
                             {"query_image_url", ImageUrl(p.query)},
                             {"candidate_image_url", ImageUrl(p.candidate)},
                             {"votes", votes}});
                }));

    server_.Get(R"(/img/(.+))", Guard([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string id = req.matches[1].str();
                  const std::string* path = corpus_.ImagePath(id);
                  if (path == nullptr) throw NotFound("no image for '" + id + "'");
                  std::ifstream in(*path, std::ios::binary);
                  if (!in) throw NotFound("image file for '" + id + "' is unreadable");
                  std::ostringstream bytes;
                  bytes << in.rdbuf();
                  res.status = 200;
                  res.set_content(bytes.str(), ContentType(*path));
                }));

    server_.Post("/api/resolve", Guard([this](const httplib::Request&, httplib::Response& res) {
                   const ResolveReport report = store_.Resolve();
                   std::filesystem::create_directories(options_.data_dir);
                   const auto path = options_.data_dir / "labels.tsv";
                   std::ostringstream tsv;
                   WriteLabelsTsv(tsv, report.gt);
                   WriteFileAtomically(path, tsv.str());
                   Reply(res, 200,
                         Json{{"path", path.string()},
                              {"pairs", report.gt.labels.size()},
                              {"positives", report.gt.NumPositives()},
                              {"incomplete", report.incomplete.size()}});
                 }));

    server_.Get("/api/metrics", Guard([this](const httplib::Request& req, httplib::Response& res) {
                  const std::string name = req.get_param_value("model");
                  const auto it = models_.find(name);
                  if (it == models_.end()) throw NotFound("unknown model '" + name + "'");
                  const ResolveReport report = store_.Resolve();
                  if (report.gt.labels.empty()) {
                    Fail(res, 409, "no resolved labels yet");
                    return;
                  }
                  EvalConfig config;
                  config.ks = options_.preview_ks;
                  Json j = ToJson(Evaluate(it->second, corpus_, report.gt, config));
                  j["labels_resolved"] = report.gt.labels.size();
                  j["labels_incomplete"] = report.incomplete.size();
                  Reply(res, 200, j);
                }));

    if (options_.static_ui) {
      if (!server_.set_mount_point("/", options_.static_ui->string())) {
        throw IoError("static UI directory '" + options_.static_ui->string() + "' not found");
      }
    }
  }

  AnnotationStore& store_;
  const Corpus& corpus_;
  ServerOptions options_;
  std::map<ModelName, ModelHandle> models_;
  httplib::Server server_;
};

}  // namespace eds

#endif  // EDS_HTTP_SERVER_HPP_
