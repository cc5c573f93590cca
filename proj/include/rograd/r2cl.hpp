#pragma once

#include <optional>

#include "rograd/backbones.hpp"
#include "rograd/embed_store.hpp"
#include "rograd/llm.hpp"

namespace rograd {

struct R2clConfig {
  int depth = 4;
  int hidden = 256;
  int projection = 128;
  int batch_size = 128;
  double temperature = 0.07;
  double omega = 2.0;  // loss weight of generated-node anchors
  int epochs = 50;
  int refine_period = 5;  // RAG refinement every T epochs
  int anchors = 15;
  int same_k = 3;
  int cross_k = 7;
  double edge_drop = 0.1;
  double feature_mask = 0.1;
  double learning_rate = 1e-3;
  DecodingOptions decoding;
  int attempt_budget = 3;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class ViewKind { stochastic, rag };

struct GraphView {
  Mat features;  // same node ordering as the source graph
  std::vector<Edge> edges;
  ViewKind kind = ViewKind::stochastic;
};

// Drops each edge independently with probability edge_drop and zeroes each
// feature entry independently with probability feature_mask.
GraphView make_stochastic_view(const TextAttributedGraph& graph, double edge_drop,
                               double feature_mask, std::uint64_t seed);

// Uniform sample of n node indices without replacement.
std::vector<std::int32_t> select_anchors(std::int64_t num_nodes, std::int64_t n,
                                         std::uint64_t seed);

struct NeighborSplit {
  std::vector<std::size_t> same;   // positions into the retrieved list
  std::vector<std::size_t> cross;
};

// Partition by label equality with the anchor, retrieval order preserved,
// truncated to same_k / cross_k.
NeighborSplit split_neighbors(std::int32_t anchor_label,
                              const std::vector<std::int32_t>& retrieved_labels, int same_k,
                              int cross_k);

struct RagViewLog {
  int anchors_processed = 0;
  int anchors_failed = 0;  // LLM/parse failures; those anchors stay unmodified
  int edges_connected = 0;
  int edges_removed = 0;
};

// For each anchor: retrieve top-K store neighbors, split same/cross, have the
// LLM rewrite the anchor text (its feature row is re-encoded) and rule on
// each anchor-candidate edge. Non-anchor rows and edges stay untouched.
GraphView make_rag_view(const TextAttributedGraph& graph, const EmbeddingStore& store,
                        LlmGateway& gateway, const PromptLibrary& prompts, Encoder& encoder,
                        const R2clConfig& config, std::uint64_t seed, RagViewLog* log = nullptr);

struct SupconResult {
  double loss = 0.0;
  Mat grad;  // dL/dz, filled when requested
  std::int64_t contributing = 0;
  std::int64_t skipped = 0;  // anchors without any positive
};

// Weighted supervised contrastive loss over the given projection rows:
// mean over contributing anchors of w_i * (-1/|P(i)|) sum_p log softmax_p,
// with w_i = omega for generated-node anchors. Softmax is max-stabilized.
SupconResult supcon_loss(const Mat& z, const std::vector<std::int32_t>& labels,
                         const std::vector<std::uint8_t>& generated_mask, double temperature,
                         double omega, bool want_grad = false);

// GCN encoder plus linear projection head; h is the last (linear) conv
// output, z the row-normalized projection.
struct R2clModel {
  std::vector<Mat> conv_w;
  std::vector<Vec> conv_b;
  Mat proj_w;
  Vec proj_b;

  void init(int in_dim, const R2clConfig& config);
  void save(const std::string& path, std::uint64_t fingerprint) const;
  static R2clModel load(const std::string& path, std::uint64_t expect_fingerprint);
};

std::uint64_t config_fingerprint(const R2clConfig& config);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  bool refined = false;
};

struct R2clResult {
  Mat representations;  // h over the unperturbed enriched graph
  Mat projections;      // z, unit rows
  TextAttributedGraph refined_graph;
  R2clModel model;
  int refinement_events = 0;
  std::vector<EpochLog> epoch_log;
  RagViewLog rag_log;
};

// Contrastive training over a stochastic view and a periodically RAG-refined
// view. Batches are drawn from train-masked nodes (labels elsewhere are
// hidden by the supervision deficiency). The refined graph carries the latest
// RAG edge set and the trained representations as features.
R2clResult train_r2cl(const TextAttributedGraph& enriched, const R2clConfig& config,
                      LlmGateway& gateway, const PromptLibrary& prompts, Encoder& encoder);

}  // namespace rograd
