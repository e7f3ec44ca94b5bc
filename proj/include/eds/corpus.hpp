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

// Items, queries and per-model similarity providers. A model is either an
// embedding table (cosine similarity) or a precomputed score list; both yield
// deterministic candidate rankings.

#ifndef EDS_CORPUS_HPP_
#define EDS_CORPUS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <variant>
#include <vector>

#include "eds/error.hpp"
#include "eds/ground_truth.hpp"
#include "eds/text.hpp"

namespace eds {

struct ItemMetadata {
  std::map<ItemId, std::string> image_paths;
  std::map<ItemId, std::string> id_labels;
  std::map<ItemId, std::string> category_labels;
};

class Corpus {
 public:
  Corpus() = default;

  // Items and queries keep the given order. Queries may be disjoint from
  // items; a query that is also an item is never its own candidate.
  Corpus(std::vector<ItemId> items, std::vector<ItemId> queries,
         ItemMetadata metadata = {})
      : items_(std::move(items)),
        queries_(std::move(queries)),
        metadata_(std::move(metadata)) {
    for (const auto& id : items_) {
      if (!text::IsValidId(id)) throw InvalidArgument("invalid item id '" + id + "'");
      if (!item_set_.insert(id).second) {
        throw InvalidArgument("duplicate item id '" + id + "'");
      }
    }
    for (const auto& id : queries_) {
      if (!text::IsValidId(id)) throw InvalidArgument("invalid query id '" + id + "'");
      if (!query_set_.insert(id).second) {
        throw InvalidArgument("duplicate query id '" + id + "'");
      }
      queries_in_items_ += item_set_.count(id);
    }
  }

  const std::vector<ItemId>& items() const { return items_; }
  const std::vector<ItemId>& queries() const { return queries_; }
  const ItemMetadata& metadata() const { return metadata_; }

  bool IsItem(const ItemId& id) const { return item_set_.count(id) > 0; }
  bool IsQuery(const ItemId& id) const { return query_set_.count(id) > 0; }

  // |D_{-q}|: the number of candidates a query is ranked against.
  std::size_t CandidateCount(const ItemId& query) const {
    return items_.size() - (IsItem(query) ? 1 : 0);
  }

  std::size_t QueriesInItems() const { return queries_in_items_; }

  // |A| = sum over queries of |D_{-q}|.
  std::uint64_t PairUniverseSize() const {
    return static_cast<std::uint64_t>(queries_.size()) * items_.size() -
           queries_in_items_;
  }

  const std::string* ImagePath(const ItemId& id) const {
    const auto it = metadata_.image_paths.find(id);
    return it == metadata_.image_paths.end() ? nullptr : &it->second;
  }

 private:
  std::vector<ItemId> items_;
  std::vector<ItemId> queries_;
  ItemMetadata metadata_;
  std::unordered_set<ItemId> item_set_;
  std::unordered_set<ItemId> query_set_;
  std::size_t queries_in_items_ = 0;
};

// Manifest rows: item_id<TAB>role(item|query|both)<TAB>image_path?<TAB>
// identity?<TAB>category?. Trailing fields may be omitted or empty.
inline Corpus ReadManifest(std::istream& in, const std::string& name) {
  std::vector<ItemId> items;
  std::vector<ItemId> queries;
  ItemMetadata meta;
  std::unordered_set<std::string> seen;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = text::StripCr(raw);
    if (text::IsBlank(line) || line.front() == '#') continue;
    const auto fields = text::Split(line, '\t');
    const auto where = text::Location(name, line_no);
    if (fields.size() < 2 || fields.size() > 5) {
      throw ParseError(where + ": expected 2 to 5 tab-separated fields");
    }
    const std::string id(fields[0]);
    if (!text::IsValidId(id)) throw ParseError(where + ": invalid item id");
    if (!seen.insert(id).second) {
      throw ParseError(where + ": duplicate item id '" + id + "'");
    }
    const std::string_view role = fields[1];
    if (role == "item") {
      items.push_back(id);
    } else if (role == "query") {
      queries.push_back(id);
    } else if (role == "both") {
      items.push_back(id);
      queries.push_back(id);
    } else {
      throw ParseError(where + ": role must be item, query or both");
    }
    if (fields.size() > 2 && !fields[2].empty()) meta.image_paths[id] = fields[2];
    if (fields.size() > 3 && !fields[3].empty()) meta.id_labels[id] = fields[3];
    if (fields.size() > 4 && !fields[4].empty()) meta.category_labels[id] = fields[4];
  }
  if (items.empty()) throw ParseError(name + ": manifest lists no items");
  if (queries.empty()) throw ParseError(name + ": manifest lists no queries");
  return Corpus(std::move(items), std::move(queries), std::move(meta));
}

inline Corpus LoadManifest(const std::string& path) {
  auto in = text::OpenForRead(path);
  return ReadManifest(in, path);
}

inline void WriteManifest(std::ostream& out, const Corpus& corpus) {
  std::unordered_set<ItemId> query_set(corpus.queries().begin(),
                                       corpus.queries().end());
  const auto& meta = corpus.metadata();
  auto field = [](const std::map<ItemId, std::string>& m, const ItemId& id) {
    const auto it = m.find(id);
    return it == m.end() ? std::string() : it->second;
  };
  auto row = [&](const ItemId& id, std::string_view role) {
    out << id << '\t' << role << '\t' << field(meta.image_paths, id) << '\t'
        << field(meta.id_labels, id) << '\t' << field(meta.category_labels, id)
        << '\n';
  };
  for (const auto& id : corpus.items()) {
    row(id, query_set.count(id) ? "both" : "item");
  }
  for (const auto& id : corpus.queries()) {
    if (!corpus.IsItem(id)) row(id, "query");
  }
}

// Dense vectors, one per item, all of the same dimension. Zero vectors are
// rejected on insertion so cosine similarity is always defined.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  }

  void Add(const ItemId& id, std::vector<double> values) {
    if (values.size() != dim_) {
      throw InvalidArgument("dimension mismatch for '" + id + "': expected " +
                            std::to_string(dim_) + ", got " +
                            std::to_string(values.size()));
    }
    if (index_.count(id)) throw InvalidArgument("duplicate item id '" + id + "'");
    double sq = 0.0;
    for (const double v : values) {
      if (!std::isfinite(v)) throw InvalidArgument("non-finite value for '" + id + "'");
      sq += v * v;
    }
    if (sq == 0.0) throw InvalidArgument("zero-norm vector for '" + id + "'");
    index_.emplace(id, norms_.size());
    norms_.push_back(std::sqrt(sq));
    data_.insert(data_.end(), values.begin(), values.end());
  }

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return norms_.size(); }
  bool Contains(const ItemId& id) const { return index_.count(id) > 0; }

  std::vector<double> Vector(const ItemId& id) const {
    const std::size_t row = Row(id);
    return {data_.begin() + row * dim_, data_.begin() + (row + 1) * dim_};
  }

  std::size_t Row(const ItemId& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw NotFound("unknown item id '" + id + "'");
    return it->second;
  }

  // Cosine similarity between two rows; symmetric bit-for-bit.
  double Cosine(std::size_t a, std::size_t b) const {
    const double* x = data_.data() + a * dim_;
    const double* y = data_.data() + b * dim_;
    double dot = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) dot += x[i] * y[i];
    return dot / (norms_[a] * norms_[b]);
  }

  // Ids in insertion order.
  std::vector<ItemId> Ids() const {
    std::vector<ItemId> ids(index_.size());
    for (const auto& [id, row] : index_) ids[row] = id;
    return ids;
  }

 private:
  std::size_t dim_;
  std::unordered_map<ItemId, std::size_t> index_;
  std::vector<double> data_;
  std::vector<double> norms_;
};

// Precomputed similarity scores keyed by (query, candidate).
class ScoreTable {
 public:
  void Add(const ItemId& query, const ItemId& candidate, double score) {
    if (!std::isfinite(score)) {
      throw InvalidArgument("non-finite score for (" + query + ", " + candidate + ")");
    }
    if (!scores_[query].emplace(candidate, score).second) {
      throw InvalidArgument("duplicate score for (" + query + ", " + candidate + ")");
    }
  }

  bool HasQuery(const ItemId& query) const { return scores_.count(query) > 0; }

  const std::unordered_map<ItemId, double>* ScoresFor(const ItemId& query) const {
    const auto it = scores_.find(query);
    return it == scores_.end() ? nullptr : &it->second;
  }

  std::size_t NumQueries() const { return scores_.size(); }

  // Queries in ascending order, each with candidates in ascending order.
  std::vector<std::pair<PairKey, double>> Sorted() const {
    std::vector<std::pair<PairKey, double>> rows;
    for (const auto& [q, m] : scores_) {
      for (const auto& [c, s] : m) rows.push_back({PairKey{q, c}, s});
    }
    std::sort(rows.begin(), rows.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return rows;
  }

 private:
  std::unordered_map<ItemId, std::unordered_map<ItemId, double>> scores_;
};

struct RankEntry {
  ItemId candidate;
  double score = 0.0;
  std::size_t rank = 0;

  bool operator==(const RankEntry&) const = default;
};

struct RankList {
  ItemId query;
  std::vector<RankEntry> entries;
  // Set when fewer candidates than requested were available.
  bool truncated = false;

  bool operator==(const RankList&) const = default;
};

// Descending score, ascending id on ties.
inline bool RanksBefore(double score_a, const ItemId& id_a, double score_b,
                        const ItemId& id_b) {
  if (score_a != score_b) return score_a > score_b;
  return id_a < id_b;
}

// A named similarity provider. Cheap to copy; the underlying table is shared
// and immutable.
class ModelHandle {
 public:
  enum class SourceKind { kEmbeddings, kScores };

  static ModelHandle FromEmbeddings(ModelName name, EmbeddingTable table) {
    return ModelHandle(std::move(name),
                       std::make_shared<const Source>(std::move(table)));
  }

  static ModelHandle FromScores(ModelName name, ScoreTable table) {
    return ModelHandle(std::move(name),
                       std::make_shared<const Source>(std::move(table)));
  }

  const ModelName& name() const { return name_; }

  SourceKind kind() const {
    return std::holds_alternative<EmbeddingTable>(*source_) ? SourceKind::kEmbeddings
                                                            : SourceKind::kScores;
  }

  // 0 for score lists.
  std::size_t dimension() const {
    if (const auto* e = std::get_if<EmbeddingTable>(source_.get())) return e->dim();
    return 0;
  }

  const EmbeddingTable* embeddings() const {
    return std::get_if<EmbeddingTable>(source_.get());
  }
  const ScoreTable* scores() const { return std::get_if<ScoreTable>(source_.get()); }

  // Cosine similarity for embeddings; the stored score for score lists.
  double Similarity(const ItemId& query, const ItemId& candidate) const {
    if (const auto* e = embeddings()) return e->Cosine(e->Row(query), e->Row(candidate));
    const auto* row = scores()->ScoresFor(query);
    if (row == nullptr) throw NotFound(name_ + ": no scores for query '" + query + "'");
    const auto it = row->find(candidate);
    if (it == row->end()) {
      throw NotFound(name_ + ": no score for (" + query + ", " + candidate + ")");
    }
    return it->second;
  }

  // Checks that every item and query of the corpus is covered (embeddings), or
  // that every query has at least min(min_candidates, |D_{-q}|) scored
  // candidates drawn from the corpus items (score lists).
  void Validate(const Corpus& corpus, std::size_t min_candidates = 1) const {
    if (const auto* e = embeddings()) {
      for (const auto* ids : {&corpus.items(), &corpus.queries()}) {
        for (const auto& id : *ids) {
          if (!e->Contains(id)) {
            throw NotFound(name_ + ": no embedding for '" + id + "'");
          }
        }
      }
      return;
    }
    for (const auto& q : corpus.queries()) {
      const auto* row = scores()->ScoresFor(q);
      if (row == nullptr) throw NotFound(name_ + ": no scores for query '" + q + "'");
      std::size_t usable = 0;
      for (const auto& [c, s] : *row) {
        if (!corpus.IsItem(c)) {
          throw NotFound(name_ + ": scored candidate '" + c + "' is not a corpus item");
        }
        usable += (c != q);
      }
      const std::size_t need = std::min(min_candidates, corpus.CandidateCount(q));
      if (usable < need) {
        throw InvalidArgument(name_ + ": query '" + q + "' has " +
                              std::to_string(usable) + " scored candidates, need " +
                              std::to_string(need));
      }
    }
  }

  // Scores every candidate of `query` (corpus items minus the query itself).
  // Score-list candidates without a stored score get -infinity and so rank
  // after every scored candidate.
  std::vector<std::pair<ItemId, double>> ScoreCandidates(const ItemId& query,
                                                         const Corpus& corpus) const {
    std::vector<std::pair<ItemId, double>> scored;
    scored.reserve(corpus.items().size());
    if (const auto* e = embeddings()) {
      const std::size_t q_row = e->Row(query);
      for (const auto& c : corpus.items()) {
        if (c == query) continue;
        scored.emplace_back(c, e->Cosine(q_row, e->Row(c)));
      }
      return scored;
    }
    const auto* row = scores()->ScoresFor(query);
    if (row == nullptr) throw NotFound(name_ + ": no scores for query '" + query + "'");
    constexpr double kMissing = -std::numeric_limits<double>::infinity();
    for (const auto& c : corpus.items()) {
      if (c == query) continue;
      const auto it = row->find(c);
      scored.emplace_back(c, it == row->end() ? kMissing : it->second);
    }
    return scored;
  }

 private:
  using Source = std::variant<EmbeddingTable, ScoreTable>;

  ModelHandle(ModelName name, std::shared_ptr<const Source> source)
      : name_(std::move(name)), source_(std::move(source)) {
    if (name_.empty() || !text::IsValidId(name_)) {
      throw InvalidArgument("invalid model name '" + name_ + "'");
    }
  }

  ModelName name_;
  std::shared_ptr<const Source> source_;
};

// Top `top_n` candidates of `query` by descending similarity, ties broken by
// ascending item id. Asking for more candidates than exist returns all of them
// with `truncated` set.
inline RankList RankCandidates(const ModelHandle& model, const ItemId& query,
                               const Corpus& corpus, std::size_t top_n) {
  if (top_n == 0) throw InvalidArgument("top_n must be at least 1");
  auto scored = model.ScoreCandidates(query, corpus);
  RankList out;
  out.query = query;
  out.truncated = top_n > scored.size();
  const std::size_t n = std::min(top_n, scored.size());
  auto before = [](const auto& a, const auto& b) {
    return RanksBefore(a.second, a.first, b.second, b.first);
  };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n),
                    scored.end(), before);
  out.entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.entries.push_back(RankEntry{std::move(scored[i].first), scored[i].second, i});
  }
  return out;
}

// Full ranking of every candidate of `query`.
inline RankList RankAll(const ModelHandle& model, const ItemId& query,
                        const Corpus& corpus) {
  const std::size_t n = corpus.CandidateCount(query);
  if (n == 0) return RankList{query, {}, false};
  return RankCandidates(model, query, corpus, n);
}

// Positive iff both items carry the same identity label. Every (query, item)
// pair with q != c is labeled, so identity retrieval can be scored by the
// same metrics as discovery. Queries without an identity label are skipped;
// candidates without one are negatives.
inline GroundTruth IdentityGroundTruth(const Corpus& corpus) {
  const auto& ids = corpus.metadata().id_labels;
  if (ids.empty()) throw InvalidArgument("corpus has no identity labels");
  GroundTruth gt;
  gt.source = GroundTruthSource::kIdentityDerived;
  gt.num_experts = 0;
  for (const auto& q : corpus.queries()) {
    const auto qit = ids.find(q);
    if (qit == ids.end()) continue;
    for (const auto& c : corpus.items()) {
      if (c == q) continue;
      const auto cit = ids.find(c);
      const bool same = cit != ids.end() && cit->second == qit->second;
      gt.Set(PairKey{q, c}, same ? Label::kPositive : Label::kNegative);
    }
  }
  return gt;
}

// --- file formats --------------------------------------------------------

namespace detail {

inline std::vector<std::string_view> HeaderWords(std::string_view line) {
  std::vector<std::string_view> words;
  for (auto w : text::Split(line, ' ')) {
    if (!w.empty()) words.push_back(w);
  }
  return words;
}

}  // namespace detail

// Embeddings file: "#eds-embeddings v1 <model_name> <dim>" then rows
// "item_id<TAB>v1,v2,...,vdim". The handle takes `model_name`; the name in the
// header is informational.
inline ModelHandle ReadEmbeddings(std::istream& in, const std::string& source_name,
                                  const ModelName& model_name) {
  std::string raw;
  std::size_t line_no = 0;
  std::optional<EmbeddingTable> table;
  std::size_t declared_dim = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = text::StripCr(raw);
    const auto where = text::Location(source_name, line_no);
    if (text::IsBlank(line)) continue;
    if (line_no == 1 && line.front() == '#') {
      const auto words = detail::HeaderWords(line);
      if (words.size() != 4 || words[0] != "#eds-embeddings" || words[1] != "v1" ||
          !text::ParseInt(words[3], declared_dim) || declared_dim == 0) {
        throw ParseError(where + ": expected '#eds-embeddings v1 <model_name> <dim>'");
      }
      continue;
    }
    if (line.front() == '#') continue;
    if (declared_dim == 0) {
      throw ParseError(where + ": missing '#eds-embeddings' header");
    }
    const auto fields = text::Split(line, '\t');
    if (fields.size() != 2) throw ParseError(where + ": expected item_id<TAB>values");
    const std::string id(fields[0]);
    if (!text::IsValidId(id)) throw ParseError(where + ": invalid item id");
    std::vector<double> values;
    for (const auto tok : text::Split(fields[1], ',')) {
      double v = 0.0;
      if (!text::ParseDouble(tok, v)) {
        throw ParseError(where + ": malformed number '" + std::string(tok) + "'");
      }
      values.push_back(v);
    }
    if (!table) table.emplace(declared_dim);
    try {
      table->Add(id, std::move(values));
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  if (!table || table->size() == 0) throw ParseError(source_name + ": no rows");
  return ModelHandle::FromEmbeddings(model_name, std::move(*table));
}

// Score-list file: "#eds-scores v1 <model_name>" then rows
// "query_id<TAB>candidate_id<TAB>score".
inline ModelHandle ReadScores(std::istream& in, const std::string& source_name,
                              const ModelName& model_name) {
  std::string raw;
  std::size_t line_no = 0;
  bool header = false;
  ScoreTable table;
  std::size_t rows = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = text::StripCr(raw);
    const auto where = text::Location(source_name, line_no);
    if (text::IsBlank(line)) continue;
    if (line_no == 1 && line.front() == '#') {
      const auto words = detail::HeaderWords(line);
      if (words.size() != 3 || words[0] != "#eds-scores" || words[1] != "v1") {
        throw ParseError(where + ": expected '#eds-scores v1 <model_name>'");
      }
      header = true;
      continue;
    }
    if (line.front() == '#') continue;
    if (!header) throw ParseError(where + ": missing '#eds-scores' header");
    const auto fields = text::Split(line, '\t');
    if (fields.size() != 3) {
      throw ParseError(where + ": expected query<TAB>candidate<TAB>score");
    }
    if (!text::IsValidId(fields[0]) || !text::IsValidId(fields[1])) {
      throw ParseError(where + ": invalid item id");
    }
    double score = 0.0;
    if (!text::ParseDouble(fields[2], score)) {
      throw ParseError(where + ": malformed score '" + std::string(fields[2]) + "'");
    }
    try {
      table.Add(std::string(fields[0]), std::string(fields[1]), score);
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(source_name + ": no rows");
  return ModelHandle::FromScores(model_name, std::move(table));
}

inline ModelHandle LoadEmbeddings(const std::string& path, const ModelName& model_name) {
  auto in = text::OpenForRead(path);
  return ReadEmbeddings(in, path, model_name);
}

inline ModelHandle LoadScores(const std::string& path, const ModelName& model_name) {
  auto in = text::OpenForRead(path);
  return ReadScores(in, path, model_name);
}

// Dispatches on the header line of the file.
inline ModelHandle LoadModel(const std::string& path, const ModelName& model_name) {
  std::string first;
  {
    auto in = text::OpenForRead(path);
    std::getline(in, first);
  }
  if (first.rfind("#eds-scores", 0) == 0) return LoadScores(path, model_name);
  return LoadEmbeddings(path, model_name);
}

// Writes values with 17 significant digits so a reload is bit-identical.
inline void WriteEmbeddings(std::ostream& out, const ModelHandle& model) {
  const auto* e = model.embeddings();
  if (e == nullptr) throw InvalidArgument(model.name() + " is not an embedding model");
  std::ostringstream row;
  row.precision(17);
  out << "#eds-embeddings v1 " << model.name() << ' ' << e->dim() << '\n';
  for (const auto& id : e->Ids()) {
    row.str("");
    const auto v = e->Vector(id);
    for (std::size_t i = 0; i < v.size(); ++i) row << (i ? "," : "") << v[i];
    out << id << '\t' << row.str() << '\n';
  }
}

inline void WriteScores(std::ostream& out, const ModelHandle& model) {
  const auto* s = model.scores();
  if (s == nullptr) throw InvalidArgument(model.name() + " is not a score-list model");
  std::ostringstream cell;
  cell.precision(17);
  out << "#eds-scores v1 " << model.name() << '\n';
  for (const auto& [key, score] : s->Sorted()) {
    cell.str("");
    cell << score;
    out << key.query << '\t' << key.candidate << '\t' << cell.str() << '\n';
  }
}

}  // namespace eds

#endif  // EDS_CORPUS_HPP_
