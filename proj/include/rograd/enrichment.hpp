#pragma once

#include "rograd/graph.hpp"
#include "rograd/sggm.hpp"

namespace rograd {

struct EnrichmentConfig {
  double tau = 0.7;  // strict cosine threshold for new edges

  void validate() const;
};

struct EnrichmentStats {
  std::int64_t nodes_before = 0;
  std::int64_t edges_before = 0;
  std::int64_t samples_added = 0;
  std::int64_t edges_added = 0;
  std::vector<std::int64_t> neighbor_counts;  // per sample, in batch order
};

struct EnrichedGraph {
  TextAttributedGraph graph;
  EnrichmentStats stats;
};

// Appends the generated samples as train-masked nodes with hard pseudo-labels
// and their embeddings as feature rows, then links each to every original
// node whose feature cosine exceeds tau. Edges never form between generated
// nodes; original rows, labels, edges and val/test masks stay untouched.
// Nodes whose features are missing (zero rows) are never linked.
EnrichedGraph enrich(const TextAttributedGraph& graph,
                     const std::vector<GeneratedSample>& samples,
                     const EnrichmentConfig& config);

// Recounts everything from the enriched graph and errors on any mismatch
// with the stored stats.
EnrichmentStats enrichment_stats(const EnrichedGraph& enriched);

// Replaces every feature row by the unit-normalized encoder embedding of the
// node's text, except rows flagged feature_missing, which stay zero: the
// deficiency hides those features, so re-encoding must not resurrect them.
TextAttributedGraph unify_embeddings(const TextAttributedGraph& graph, Encoder& encoder);

}  // namespace rograd
