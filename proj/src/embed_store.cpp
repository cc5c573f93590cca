#include "rograd/embed_store.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace rograd {

double cosine(const Eigen::VectorXf& u, const Eigen::VectorXf& v) {
  if (u.size() != v.size()) fail(ErrorKind::invalid_argument, "cosine: dimension mismatch");
  double nu = u.cast<double>().norm();
  double nv = v.cast<double>().norm();
  if (nu == 0.0 || nv == 0.0) fail(ErrorKind::invalid_argument, "cosine: zero vector");
  double d = u.cast<double>().dot(v.cast<double>()) / (nu * nv);
  return std::clamp(d, -1.0, 1.0);
}

void EmbeddingStore::add(const std::string& id, std::int32_t cls, const Eigen::VectorXf& vec,
                         EntryKind kind) {
  if (vec.size() != dim_) fail(ErrorKind::invalid_argument, "store add: dimension mismatch");
  if (by_id_.count(id)) fail(ErrorKind::invalid_argument, "store add: duplicate id " + id);
  float norm = vec.norm();
  if (!(norm > 0.0f)) fail(ErrorKind::invalid_argument, "store add: zero-norm vector for " + id);
  StoreEntry e;
  e.id = id;
  e.cls = cls;
  e.vec = vec / norm;
  e.kind = kind;
  by_id_[id] = entries_.size();
  entries_.push_back(std::move(e));
}

void EmbeddingStore::replace(const std::string& id, const Eigen::VectorXf& vec) {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) fail(ErrorKind::invalid_argument, "store replace: unknown id " + id);
  if (vec.size() != dim_) fail(ErrorKind::invalid_argument, "store replace: dimension mismatch");
  float norm = vec.norm();
  if (!(norm > 0.0f)) fail(ErrorKind::invalid_argument, "store replace: zero-norm vector");
  entries_[it->second].vec = vec / norm;
}

bool EmbeddingStore::has_class(std::int32_t cls, EntryKind kind) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const StoreEntry& e) {
    return e.cls == cls && e.kind == kind;
  });
}

namespace {

// Exact scan; descending score, ties by ascending id.
std::vector<RankedEntry> rank_and_trim(const std::vector<StoreEntry>& entries,
                                       std::vector<RankedEntry> hits, std::size_t k) {
  std::stable_sort(hits.begin(), hits.end(), [&](const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return entries[a.index].id < entries[b.index].id;
  });
  if (hits.size() > k) hits.resize(k);
  return hits;
}

}  // namespace

std::vector<RankedEntry> EmbeddingStore::top_k_same_class(const Eigen::VectorXf& query,
                                                          std::int32_t cls,
                                                          std::size_t k) const {
  if (k == 0) fail(ErrorKind::invalid_argument, "top_k: k must be >= 1");
  std::vector<RankedEntry> hits;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.cls != cls || e.kind != EntryKind::original) continue;
    hits.push_back({i, cosine(query, e.vec)});
  }
  return rank_and_trim(entries_, std::move(hits), k);
}

std::vector<RankedEntry> EmbeddingStore::top_k_any(const Eigen::VectorXf& query, std::size_t k,
                                                   const std::vector<std::string>& exclude_ids) const {
  if (k == 0) fail(ErrorKind::invalid_argument, "top_k: k must be >= 1");
  std::set<std::string> excluded(exclude_ids.begin(), exclude_ids.end());
  std::vector<RankedEntry> hits;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (excluded.count(entries_[i].id)) continue;
    hits.push_back({i, cosine(query, entries_[i].vec)});
  }
  return rank_and_trim(entries_, std::move(hits), k);
}

Eigen::VectorXf EmbeddingStore::class_centroid(std::int32_t cls) const {
  Eigen::VectorXf sum = Eigen::VectorXf::Zero(dim_);
  std::int64_t count = 0;
  for (const auto& e : entries_) {
    if (e.cls != cls || e.kind != EntryKind::original) continue;
    sum += e.vec;
    ++count;
  }
  if (count == 0)
    fail(ErrorKind::invalid_argument, "class_centroid: class " + std::to_string(cls) + " absent");
  float norm = sum.norm();
  if (!(norm > 0.0f))
    fail(ErrorKind::runtime, "class_centroid: entries cancel to a zero vector");
  return sum / norm;
}

void EmbeddingStore::save(const std::string& dir, const std::string& name) const {
  fs::create_directories(dir);
  Eigen::MatrixXf m(static_cast<Eigen::Index>(entries_.size()), dim_);
  for (std::size_t i = 0; i < entries_.size(); ++i)
    m.row(static_cast<Eigen::Index>(i)) = entries_[i].vec.transpose();
  write_feature_matrix((fs::path(dir) / (name + ".vectors.bin")).string(), m);
  std::ofstream out(fs::path(dir) / (name + ".index.tsv"));
  if (!out) fail(ErrorKind::io, "cannot write store index");
  for (const auto& e : entries_)
    out << e.id << '\t' << e.cls << '\t'
        << (e.kind == EntryKind::generated ? "generated" : "original") << '\n';
}

EmbeddingStore EmbeddingStore::load(const std::string& dir, const std::string& name) {
  Eigen::MatrixXf m = read_feature_matrix((fs::path(dir) / (name + ".vectors.bin")).string());
  EmbeddingStore store(static_cast<int>(m.cols()));
  std::ifstream in(fs::path(dir) / (name + ".index.tsv"));
  if (!in) fail(ErrorKind::io, "cannot open store index");
  std::string line;
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto tab1 = line.find('\t');
    auto tab2 = line.find('\t', tab1 + 1);
    if (tab1 == std::string::npos || tab2 == std::string::npos)
      fail(ErrorKind::parse, "store index: expected 3 TSV fields");
    if (row >= m.rows()) fail(ErrorKind::parse, "store index has more rows than vectors");
    std::string id = line.substr(0, tab1);
    std::int32_t cls = static_cast<std::int32_t>(std::stol(line.substr(tab1 + 1, tab2 - tab1 - 1)));
    EntryKind kind =
        line.substr(tab2 + 1) == "generated" ? EntryKind::generated : EntryKind::original;
    store.add(id, cls, m.row(row).transpose(), kind);
    ++row;
  }
  if (row != m.rows()) fail(ErrorKind::parse, "store index has fewer rows than vectors");
  return store;
}

EmbeddingStore build_store(const TextAttributedGraph& graph, Encoder& encoder) {
  for (std::int64_t i = 0; i < graph.num_nodes(); ++i)
    if (graph.texts[i].empty())
      fail(ErrorKind::invalid_argument, "build_store: empty text at node " + graph.node_ids[i]);
  EmbeddingStore store(encoder.dimension());
  if (graph.num_nodes() == 0) return store;
  Eigen::MatrixXf m = encoder.encode(graph.texts);
  if (!m.allFinite()) fail(ErrorKind::runtime, "encoder produced non-finite values");
  for (std::int64_t i = 0; i < graph.num_nodes(); ++i) {
    EntryKind kind = graph.node_origin[i] == NodeOrigin::generated ? EntryKind::generated
                                                                   : EntryKind::original;
    store.add(graph.node_ids[i], graph.labels[i], m.row(static_cast<Eigen::Index>(i)).transpose(),
              kind);
  }
  return store;
}

}  // namespace rograd
