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

// Persistent state behind the annotation service: task dispatch, durable
// vote ingestion and progress. The vote log on disk is the source of truth;
// everything else is rebuilt from it on start.

#ifndef EDS_SERVICE_HPP_
#define EDS_SERVICE_HPP_

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "eds/annotation.hpp"
#include "eds/corpus.hpp"
#include "eds/discovery.hpp"
#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/text.hpp"

namespace eds {

// Artifact directory: $EDS_DATA_DIR when set, else ./eds-data.
inline std::filesystem::path DataDir() {
  const char* env = std::getenv("EDS_DATA_DIR");
  return (env != nullptr && *env != '\0') ? std::filesystem::path(env)
                                          : std::filesystem::path("eds-data");
}

// Append-only file whose Append() returns only after the bytes reach stable
// storage.
class DurableAppendFile {
 public:
  explicit DurableAppendFile(const std::string& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw IoError("cannot open '" + path + "': " + std::strerror(errno));
  }
  DurableAppendFile(const DurableAppendFile&) = delete;
  DurableAppendFile& operator=(const DurableAppendFile&) = delete;
  ~DurableAppendFile() {
    if (fd_ >= 0) ::close(fd_);
  }

  void Append(std::string_view data) {
    while (!data.empty()) {
      const ssize_t n = ::write(fd_, data.data(), data.size());
      if (n < 0) {
        if (errno == EINTR) continue;
        throw IoError("write to '" + path_ + "' failed: " + std::strerror(errno));
      }
      data.remove_prefix(static_cast<std::size_t>(n));
    }
    if (::fsync(fd_) != 0) {
      throw IoError("fsync of '" + path_ + "' failed: " + std::strerror(errno));
    }
  }

 private:
  std::string path_;
  int fd_ = -1;
};

// Replaces `path` atomically with `contents`.
inline void WriteFileAtomically(const std::filesystem::path& path, const std::string& contents) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write '" + tmp + "'");
    out << contents;
    out.flush();
    if (!out) throw IoError("failed writing '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "': " + ec.message());
}

// Reads a vote log, dropping a torn final line (one without a trailing
// newline). Such a line was never acknowledged, so dropping it loses nothing.
// The file is truncated to its last complete line so later appends stay
// well-formed.
inline std::vector<Vote> RecoverVoteLog(const std::string& path) {
  if (!std::filesystem::exists(path)) return {};
  std::string contents;
  {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    contents = ss.str();
  }
  if (!contents.empty() && contents.back() != '\n') {
    const auto last_nl = contents.find_last_of('\n');
    const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
    contents.resize(keep);
    std::filesystem::resize_file(path, keep);
  }
  std::istringstream in(contents);
  return ReadVotes(in, path);
}

struct TaskItem {
  std::string pair_id;
  ItemId query;
  ItemId candidate;
  std::string query_image_url;
  std::string candidate_image_url;
};

struct TaskBatch {
  ExpertId expert;
  std::vector<TaskItem> pairs;
  std::size_t batch_size = 0;
};

struct ProgressSnapshot {
  std::size_t total_pairs = 0;
  std::size_t fully_reviewed = 0;  // pairs with a vote from every expert
  std::map<ExpertId, std::size_t> per_expert_done;
  std::size_t positives_so_far = 0;  // positives among fully reviewed pairs
  double running_p_k = 0.0;
  bool p_k_defined = false;     // false until some pair is fully reviewed
  std::size_t log_length = 0;   // votes in the log, superseded ones included

  bool operator==(const ProgressSnapshot&) const = default;
};

struct VoteAck {
  bool superseded = false;
  ProgressSnapshot progress;
};

inline std::string PercentEncode(std::string_view s) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (const unsigned char ch : s) {
    if (std::isalnum(ch) || ch == '-' || ch == '_' || ch == '.' || ch == '~') {
      out.push_back(static_cast<char>(ch));
    } else {
      out.push_back('%');
      out.push_back(kHex[ch >> 4]);
      out.push_back(kHex[ch & 15]);
    }
  }
  return out;
}

inline std::string ImageUrl(const ItemId& id) { return "/img/" + PercentEncode(id); }

struct StoreOptions {
  // Write a progress snapshot file every this many votes (0 disables).
  std::size_t snapshot_every = 100;
  std::optional<std::filesystem::path> snapshot_path;
  // Clock for vote timestamps; defaults to the system clock.
  std::function<Timestamp()> clock;
};

// Annotation state for one suspect set and a fixed expert panel. Pair ids
// are positions in the (query, candidate)-sorted suspect list. Reads run
// concurrently; votes are serialized through one writer.
class AnnotationStore {
 public:
  AnnotationStore(SuspectSet suspects, std::vector<ExpertId> experts, std::string votes_path,
                  StoreOptions options = {})
      : suspects_(std::move(suspects)),
        book_(suspects_.Keys(), std::move(experts)),
        votes_path_(std::move(votes_path)),
        options_(std::move(options)) {
    if (!options_.clock) options_.clock = NowUtc;
    const auto replayed = RecoverVoteLog(votes_path_);
    for (std::size_t i = 0; i < replayed.size(); ++i) {
      try {
        book_.Record(replayed[i]);
      } catch (const Error& e) {
        throw ParseError(votes_path_ + ": vote " + std::to_string(i + 1) + ": " + e.what());
      }
      last_ts_ = std::max(last_ts_, replayed[i].ts);
    }
    log_.emplace(votes_path_);
  }

  const SuspectSet& suspects() const { return suspects_; }
  std::size_t num_experts() const { return book_.num_experts(); }
  const std::string& votes_path() const { return votes_path_; }

  std::optional<std::size_t> ParsePairId(std::string_view id) const {
    std::size_t index = 0;
    if (!text::ParseInt(id, index) || index >= suspects_.pairs.size()) return std::nullopt;
    return index;
  }

  const SuspectPair& PairAt(std::size_t index) const { return suspects_.pairs.at(index); }

  // Up to batch_size pairs the expert has not voted on, most-voted first,
  // then by pair id. Deterministic for a given log state.
  TaskBatch NextBatch(const ExpertId& expert, std::size_t batch_size) const {
    std::shared_lock lock(mu_);
    if (!book_.IsExpert(expert)) throw NotFound("unknown expert '" + expert + "'");
    std::vector<std::pair<std::size_t, std::size_t>> open;  // (votes by others, index)
    for (std::size_t i = 0; i < suspects_.pairs.size(); ++i) {
      const auto* votes = book_.VotesFor(suspects_.pairs[i].key());
      if (votes == nullptr) {
        open.emplace_back(0, i);
      } else if (!votes->count(expert)) {
        open.emplace_back(votes->size(), i);
      }
    }
    const std::size_t n = std::min(batch_size, open.size());
    std::partial_sort(open.begin(), open.begin() + static_cast<std::ptrdiff_t>(n), open.end(),
                      [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    TaskBatch batch;
    batch.expert = expert;
    batch.batch_size = batch_size;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& p = suspects_.pairs[open[i].second];
      batch.pairs.push_back(TaskItem{std::to_string(open[i].second), p.query, p.candidate,
                                     ImageUrl(p.query), ImageUrl(p.candidate)});
    }
    return batch;
  }

  // The vote is on disk before this returns.
  VoteAck SubmitVote(const ExpertId& expert, std::string_view pair_id, long long label) {
    const auto index = ParsePairId(pair_id);
    if (!index) throw NotFound("unknown pair id '" + std::string(pair_id) + "'");
    const auto parsed = LabelFromInt(label);
    if (!parsed) throw InvalidArgument("label must be 0 or 1");
    std::unique_lock lock(mu_);
    if (!book_.IsExpert(expert)) throw NotFound("unknown expert '" + expert + "'");
    // Timestamps never go backwards, so supersession follows log order.
    last_ts_ = std::max(last_ts_, options_.clock());
    const Vote vote{suspects_.pairs[*index].key(), expert, *parsed, last_ts_};
    log_->Append(VoteToJson(vote) + "\n");
    VoteAck ack;
    ack.superseded = book_.Record(vote).superseded;
    ack.progress = ProgressLocked();
    if (options_.snapshot_every > 0 && options_.snapshot_path &&
        book_.log().size() % options_.snapshot_every == 0) {
      WriteSnapshotLocked(ack.progress);
    }
    return ack;
  }

  ProgressSnapshot Progress() const {
    std::shared_lock lock(mu_);
    return ProgressLocked();
  }

  ResolveReport Resolve() const {
    std::shared_lock lock(mu_);
    return book_.Resolve();
  }

  // Effective votes on one pair, by expert.
  std::map<ExpertId, Label> VotesOn(std::size_t index) const {
    std::shared_lock lock(mu_);
    std::map<ExpertId, Label> out;
    if (const auto* v = book_.VotesFor(suspects_.pairs.at(index).key())) {
      for (const auto& [expert, ev] : *v) out[expert] = ev.label;
    }
    return out;
  }

  void WriteSnapshot() const {
    std::shared_lock lock(mu_);
    WriteSnapshotLocked(ProgressLocked());
  }

 private:
  ProgressSnapshot ProgressLocked() const {
    ProgressSnapshot s;
    s.total_pairs = suspects_.pairs.size();
    s.log_length = book_.log().size();
    for (const auto& e : book_.experts()) s.per_expert_done[e] = 0;
    const std::size_t experts = book_.num_experts();
    for (const auto& [key, by_expert] : book_.effective()) {
      std::size_t pos = 0;
      for (const auto& [expert, ev] : by_expert) {
        ++s.per_expert_done[expert];
        pos += ev.label == Label::kPositive;
      }
      if (by_expert.size() == experts) {
        ++s.fully_reviewed;
        s.positives_so_far += MajorityLabel(pos, by_expert.size()) == Label::kPositive;
      }
    }
    if (s.fully_reviewed > 0) {
      s.p_k_defined = true;
      s.running_p_k =
          static_cast<double>(s.positives_so_far) / static_cast<double>(s.fully_reviewed);
    }
    return s;
  }

  void WriteSnapshotLocked(const ProgressSnapshot& s) const {
    if (!options_.snapshot_path) return;
    nlohmann::ordered_json j;
    j["log_length"] = s.log_length;
    j["progress"] = ToJson(s);
    WriteFileAtomically(*options_.snapshot_path, j.dump(2) + "\n");
  }

 public:
  static nlohmann::ordered_json ToJson(const ProgressSnapshot& s) {
    nlohmann::ordered_json j;
    j["total_pairs"] = s.total_pairs;
    j["fully_reviewed"] = s.fully_reviewed;
    j["per_expert_done"] = s.per_expert_done;
    j["positives_so_far"] = s.positives_so_far;
    j["running_p_k"] = s.running_p_k;
    j["p_k_defined"] = s.p_k_defined;
    j["log_length"] = s.log_length;
    return j;
  }

 private:
  SuspectSet suspects_;
  VoteBook book_;
  std::string votes_path_;
  StoreOptions options_;
  std::optional<DurableAppendFile> log_;
  Timestamp last_ts_{};
  mutable std::shared_mutex mu_;
};

}  // namespace eds

#endif  // EDS_SERVICE_HPP_
