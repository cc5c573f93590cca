#include "rograd/enrichment.hpp"

#include <algorithm>
#include <set>

namespace rograd {

void EnrichmentConfig::validate() const {
  if (!(tau > -1.0 && tau <= 1.0))
    fail(ErrorKind::invalid_argument, "enrichment: tau must lie in (-1, 1]");
}

EnrichedGraph enrich(const TextAttributedGraph& graph,
                     const std::vector<GeneratedSample>& samples,
                     const EnrichmentConfig& config) {
  config.validate();
  graph.validate();

  const std::int64_t n = graph.num_nodes();
  const auto m = static_cast<std::int64_t>(samples.size());
  const Eigen::Index dim = graph.features.cols();

  std::set<std::string> ids(graph.node_ids.begin(), graph.node_ids.end());
  for (const auto& s : samples) {
    if (s.embedding.size() != dim)
      fail(ErrorKind::invalid_argument,
           "enrich: sample " + s.id + " embedding dimension " +
               std::to_string(s.embedding.size()) + " does not match feature dim " +
               std::to_string(dim));
    if (s.cls < 0 || s.cls >= graph.num_classes)
      fail(ErrorKind::invalid_argument, "enrich: sample " + s.id + " class out of range");
    if (!ids.insert(s.id).second)
      fail(ErrorKind::invalid_argument, "enrich: duplicate sample id " + s.id);
  }

  EnrichedGraph out;
  out.stats.nodes_before = n;
  out.stats.edges_before = graph.num_edges();
  out.stats.samples_added = m;

  TextAttributedGraph& g = out.graph;
  g = graph;
  g.features.conservativeResize(n + m, dim);
  for (std::int64_t i = 0; i < m; ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    g.node_ids.push_back(s.id);
    g.texts.push_back(s.sample.title + ". " + s.sample.abstract);
    g.labels.push_back(s.cls);
    g.features.row(n + i) = s.embedding.transpose();
    g.train_mask.push_back(1);
    g.val_mask.push_back(0);
    g.test_mask.push_back(0);
    g.feature_missing.push_back(0);
    g.node_origin.push_back(NodeOrigin::generated);
  }

  // New edges ordered by (sample index, original node index); sim over unit
  // directions, zero rows never link.
  for (std::int64_t i = 0; i < m; ++i) {
    std::int64_t added = 0;
    const auto& emb = samples[static_cast<std::size_t>(i)].embedding;
    for (std::int64_t j = 0; j < n; ++j) {
      if (graph.node_origin[j] != NodeOrigin::original) continue;
      Eigen::VectorXf row = graph.features.row(j).transpose();
      if (!(row.norm() > 0.0f)) continue;
      if (cosine(emb, row) > config.tau) {
        auto a = static_cast<std::int32_t>(std::min(n + i, j));
        auto b = static_cast<std::int32_t>(std::max(n + i, j));
        g.edges.emplace_back(a, b);
        ++added;
      }
    }
    out.stats.neighbor_counts.push_back(added);
    out.stats.edges_added += added;
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.validate();
  return out;
}

EnrichmentStats enrichment_stats(const EnrichedGraph& enriched) {
  const auto& g = enriched.graph;
  const auto& stored = enriched.stats;
  g.validate();

  EnrichmentStats fresh;
  fresh.nodes_before = stored.nodes_before;
  fresh.edges_before = stored.edges_before;
  fresh.samples_added = g.num_nodes() - stored.nodes_before;
  fresh.edges_added = g.num_edges() - stored.edges_before;
  for (std::int64_t i = stored.nodes_before; i < g.num_nodes(); ++i) {
    std::int64_t degree = 0;
    for (auto [u, v] : g.edges) degree += (u == i) + (v == i);
    fresh.neighbor_counts.push_back(degree);
  }

  if (fresh.samples_added != stored.samples_added || fresh.edges_added != stored.edges_added ||
      fresh.neighbor_counts != stored.neighbor_counts)
    fail(ErrorKind::runtime, "enrichment stats recount disagrees with stored stats");
  return fresh;
}

TextAttributedGraph unify_embeddings(const TextAttributedGraph& graph, Encoder& encoder) {
  TextAttributedGraph out = graph;
  if (graph.num_nodes() == 0) {
    out.features.resize(0, encoder.dimension());
    return out;
  }
  Eigen::MatrixXf embedded = encoder.encode(graph.texts);
  out.features.resize(graph.num_nodes(), encoder.dimension());
  for (std::int64_t i = 0; i < graph.num_nodes(); ++i) {
    if (graph.feature_missing[i]) {
      out.features.row(i).setZero();
      continue;
    }
    Eigen::VectorXf row = embedded.row(i).transpose();
    float norm = row.norm();
    if (!(norm > 0.0f))
      fail(ErrorKind::runtime, "unify_embeddings: zero embedding for node " + graph.node_ids[i]);
    out.features.row(i) = (row / norm).transpose();
  }
  out.validate();
  return out;
}

}  // namespace rograd
