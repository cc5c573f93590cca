#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rograd/common.hpp"

namespace rograd {

enum class NodeOrigin : std::uint8_t { original = 0, generated = 1 };

// Undirected edge stored once with u < v.
using Edge = std::pair<std::int32_t, std::int32_t>;

struct MaskSet {
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> val;
  std::vector<std::uint8_t> test;
};

// Canonical text-attributed graph. Construction-time validation enforces the
// shape invariants; edit operations return new values.
struct TextAttributedGraph {
  std::string name;
  std::vector<std::string> node_ids;
  std::vector<std::string> texts;
  Eigen::MatrixXf features;  // N x d
  std::vector<std::int32_t> labels;
  std::int32_t num_classes = 0;
  std::vector<std::string> class_names;  // size num_classes; defaults "class_<k>"
  std::vector<Edge> edges;               // sorted, unique, no self-loops
  std::vector<std::uint8_t> train_mask;
  std::vector<std::uint8_t> val_mask;
  std::vector<std::uint8_t> test_mask;
  std::vector<std::uint8_t> feature_missing;
  std::vector<NodeOrigin> node_origin;

  std::int64_t num_nodes() const { return static_cast<std::int64_t>(node_ids.size()); }
  std::int64_t num_edges() const { return static_cast<std::int64_t>(edges.size()); }
  std::int64_t feature_dim() const { return features.cols(); }

  std::int64_t count_mask(const std::vector<std::uint8_t>& mask) const;
  // Index of a node id, or -1.
  std::int32_t index_of(const std::string& id) const;
  // Throws on any broken invariant.
  void validate() const;
  // Per-node sorted neighbor lists (undirected expansion).
  std::vector<std::vector<std::int32_t>> adjacency() const;

  const std::string& class_name(std::int32_t cls) const;

 private:
  mutable std::unordered_map<std::string, std::int32_t> id_index_;
};

struct DatasetManifest {
  std::string name;
  std::int32_t num_classes = 0;
  std::string nodes_path;
  std::string edges_path;
  std::string features_path;
  std::string state_path;  // optional: masks / origin / missing flags
  std::vector<std::string> class_names;
};

struct LoadStats {
  std::int64_t duplicate_edges = 0;
  std::int64_t self_loops = 0;
};

// Sorts, dedupes and drops self-loops; counts what was dropped.
std::vector<Edge> canonicalize_edges(std::vector<Edge> edges, LoadStats* stats = nullptr);

DatasetManifest read_manifest(const std::string& manifest_path);

TextAttributedGraph load_graph(const DatasetManifest& manifest, LoadStats* stats = nullptr);
TextAttributedGraph load_graph(const std::string& manifest_path, LoadStats* stats = nullptr);

// Writes <dir>/<name>.manifest.json plus nodes/edges/features/state files and
// returns the manifest path. Features go to the binary matrix format.
std::string save_graph(const TextAttributedGraph& graph, const std::string& dir,
                       const std::string& name);

// Binary feature matrix format: magic "RGFT0001", little-endian uint64 N and
// d, then N*d row-major float32. CSV files are accepted as a fallback.
void write_feature_matrix(const std::string& path, const Eigen::MatrixXf& m);
Eigen::MatrixXf read_feature_matrix(const std::string& path);

// Fixed 20% val / 20% test, train drawn from the remainder. Class-stratified,
// deterministic per seed. train_fraction in (0, 0.6].
MaskSet split_masks(const TextAttributedGraph& graph, double train_fraction,
                    std::uint64_t seed);

// Redraws only the train mask from the non-val/test pool, sized as
// round(pool * labeled_ratio / 0.6) so labeled_ratio 0.6 keeps the whole
// surviving pool. Stratified over classes present in the pool.
std::vector<std::uint8_t> draw_train_mask(const TextAttributedGraph& graph,
                                          double labeled_ratio, std::uint64_t seed);

TextAttributedGraph with_masks(TextAttributedGraph graph, MaskSet masks);

// New graph without the given ids; incident edges dropped, everything
// re-indexed. Unknown id -> error.
TextAttributedGraph remove_nodes(const TextAttributedGraph& graph,
                                 const std::vector<std::string>& ids);

}  // namespace rograd
