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

// Shared vocabulary: pair keys, binary labels, expert votes and the resolved
// ground truth that every evaluation consumes.

#ifndef EDS_GROUND_TRUTH_HPP_
#define EDS_GROUND_TRUTH_HPP_

#include <chrono>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "eds/error.hpp"
#include "eds/text.hpp"

namespace eds {

using ItemId = std::string;
using ExpertId = std::string;
using ModelName = std::string;

struct PairKey {
  ItemId query;
  ItemId candidate;

  auto operator<=>(const PairKey&) const = default;
};

inline std::ostream& operator<<(std::ostream& os, const PairKey& p) {
  return os << "(" << p.query << ", " << p.candidate << ")";
}

enum class Label : std::uint8_t { kNegative = 0, kPositive = 1 };

inline int ToInt(Label label) { return static_cast<int>(label); }

inline std::optional<Label> LabelFromInt(long long v) {
  if (v == 0) return Label::kNegative;
  if (v == 1) return Label::kPositive;
  return std::nullopt;
}

using Timestamp =
    std::chrono::time_point<std::chrono::system_clock, std::chrono::milliseconds>;

struct Vote {
  PairKey pair;
  ExpertId expert;
  Label label = Label::kNegative;
  Timestamp ts{};

  bool operator==(const Vote&) const = default;
};

enum class GroundTruthSource { kExpertResolved, kIdentityDerived, kSynthetic };

inline std::string_view ToString(GroundTruthSource s) {
  switch (s) {
    case GroundTruthSource::kExpertResolved:
      return "expert-resolved";
    case GroundTruthSource::kIdentityDerived:
      return "identity-derived";
    case GroundTruthSource::kSynthetic:
      return "synthetic";
  }
  return "unknown";
}

struct ResolvedLabel {
  Label label = Label::kNegative;
  std::size_t num_votes = 0;

  bool operator==(const ResolvedLabel&) const = default;
};

// Binary labels over query-candidate pairs. Iteration order is (query,
// candidate) lexicographic.
struct GroundTruth {
  std::map<PairKey, ResolvedLabel> labels;
  std::size_t num_experts = 1;
  std::vector<Vote> vote_log;
  GroundTruthSource source = GroundTruthSource::kExpertResolved;

  void Set(PairKey key, Label label, std::size_t num_votes = 0) {
    labels[std::move(key)] = ResolvedLabel{label, num_votes};
  }

  std::optional<Label> Find(const PairKey& key) const {
    const auto it = labels.find(key);
    if (it == labels.end()) return std::nullopt;
    return it->second.label;
  }

  bool Contains(const ItemId& query, const ItemId& candidate) const {
    return labels.count(PairKey{query, candidate}) > 0;
  }

  std::size_t NumPositives() const {
    std::size_t n = 0;
    for (const auto& [key, value] : labels) n += value.label == Label::kPositive;
    return n;
  }

  // Distinct queries that carry at least one label, ascending.
  std::vector<ItemId> Queries() const {
    std::vector<ItemId> out;
    for (const auto& [key, value] : labels) {
      if (out.empty() || out.back() != key.query) out.push_back(key.query);
    }
    return out;
  }

  // Candidates labeled for `query`, in ascending id order.
  std::vector<std::pair<ItemId, Label>> LabelsFor(const ItemId& query) const {
    std::vector<std::pair<ItemId, Label>> out;
    for (auto it = labels.lower_bound(PairKey{query, ""});
         it != labels.end() && it->first.query == query; ++it) {
      out.emplace_back(it->first.candidate, it->second.label);
    }
    return out;
  }
};

// Resolved labels file: query<TAB>candidate<TAB>label<TAB>num_votes. The
// num_votes column is optional on input. Lines starting with '#' are ignored.
inline GroundTruth ReadLabelsTsv(std::istream& in, const std::string& name,
                                 GroundTruthSource source) {
  GroundTruth gt;
  gt.source = source;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = text::StripCr(raw);
    if (text::IsBlank(line) || line.front() == '#') continue;
    const auto fields = text::Split(line, '\t');
    if (fields.size() != 3 && fields.size() != 4) {
      throw ParseError(text::Location(name, line_no) +
                       ": expected 3 or 4 tab-separated fields");
    }
    if (!text::IsValidId(fields[0]) || !text::IsValidId(fields[1])) {
      throw ParseError(text::Location(name, line_no) + ": invalid item id");
    }
    long long raw_label = -1;
    std::optional<Label> label;
    if (text::ParseInt(fields[2], raw_label)) label = LabelFromInt(raw_label);
    if (!label) {
      throw ParseError(text::Location(name, line_no) + ": label must be 0 or 1");
    }
    std::size_t votes = 0;
    if (fields.size() == 4 && !text::ParseInt(fields[3], votes)) {
      throw ParseError(text::Location(name, line_no) + ": bad num_votes");
    }
    PairKey key{std::string(fields[0]), std::string(fields[1])};
    if (gt.labels.count(key)) {
      throw ParseError(text::Location(name, line_no) + ": duplicate pair");
    }
    gt.Set(std::move(key), *label, votes);
  }
  return gt;
}

inline GroundTruth ReadLabelsTsv(const std::string& path,
                                 GroundTruthSource source =
                                     GroundTruthSource::kExpertResolved) {
  auto in = text::OpenForRead(path);
  return ReadLabelsTsv(in, path, source);
}

inline void WriteLabelsTsv(std::ostream& out, const GroundTruth& gt) {
  for (const auto& [key, value] : gt.labels) {
    out << key.query << '\t' << key.candidate << '\t' << ToInt(value.label)
        << '\t' << value.num_votes << '\n';
  }
}

inline void WriteLabelsTsv(const std::string& path, const GroundTruth& gt) {
  auto out = text::OpenForWrite(path);
  WriteLabelsTsv(out, gt);
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace eds

#endif  // EDS_GROUND_TRUTH_HPP_
