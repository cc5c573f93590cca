#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "rograd/encoder.hpp"
#include "rograd/graph.hpp"

namespace rograd {

enum class EntryKind : std::uint8_t { original = 0, generated = 1 };

struct StoreEntry {
  std::string id;
  std::int32_t cls = 0;
  Eigen::VectorXf vec;  // unit norm
  EntryKind kind = EntryKind::original;
};

struct RankedEntry {
  std::size_t index;  // into EmbeddingStore::entries()
  double score;       // cosine against the query
};

// Cosine of two vectors in double precision. Errors on zero input.
double cosine(const Eigen::VectorXf& u, const Eigen::VectorXf& v);

// Unit-norm embedding memory with exact top-k retrieval. Ties in score break
// by ascending id.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(int dim) : dim_(dim) {}

  void add(const std::string& id, std::int32_t cls, const Eigen::VectorXf& vec, EntryKind kind);
  // Replaces the vector of an existing entry (re-normalized).
  void replace(const std::string& id, const Eigen::VectorXf& vec);

  const std::vector<StoreEntry>& entries() const { return entries_; }
  int dimension() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool has_class(std::int32_t cls, EntryKind kind) const;

  // At most k original entries of `cls`, by descending cosine.
  std::vector<RankedEntry> top_k_same_class(const Eigen::VectorXf& query, std::int32_t cls,
                                            std::size_t k) const;
  // As above across all classes and kinds; excluded ids never returned.
  std::vector<RankedEntry> top_k_any(const Eigen::VectorXf& query, std::size_t k,
                                     const std::vector<std::string>& exclude_ids) const;

  // Normalized mean of the original entries of a class.
  Eigen::VectorXf class_centroid(std::int32_t cls) const;

  // Persists as <name>.vectors.bin (feature matrix format) plus
  // <name>.index.tsv (id, class, kind).
  void save(const std::string& dir, const std::string& name) const;
  static EmbeddingStore load(const std::string& dir, const std::string& name);

 private:
  int dim_;
  std::vector<StoreEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// One unit-norm entry per node, built with the given encoder.
EmbeddingStore build_store(const TextAttributedGraph& graph, Encoder& encoder);

}  // namespace rograd
