#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <memory>
#include <string>
#include <vector>

#include "rograd/graph.hpp"

namespace rograd {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

enum class Architecture { gcn, gat, sage };

Architecture architecture_from_string(const std::string& s);
const char* architecture_name(Architecture a);

struct BackboneConfig {
  Architecture arch = Architecture::gcn;
  int hidden = 512;
  double dropout = 0.3;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  int gcn_layers = 3;
  int gat_heads = 8;
  double leaky_slope = 0.2;
  int max_epochs = 500;
  int patience = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  double best_val_acc = 0.0;  // percent
  double test_acc = 0.0;      // percent, at the best-validation epoch
  int epochs_run = 0;
  std::vector<double> loss_curve;
  std::vector<std::string> warnings;
};

// Symmetric normalization D^{-1/2} (A + I) D^{-1/2} over the undirected
// expansion of `edges`.
SpMat normalize_adjacency(const std::vector<Edge>& edges, std::int64_t n);

// Row-normalized adjacency without self-loops (the mean aggregator);
// isolated nodes get an all-zero row.
SpMat mean_adjacency(const std::vector<Edge>& edges, std::int64_t n);

struct ParamRefs {
  std::vector<Mat*> mats;
  std::vector<Vec*> vecs;
};

// Full-graph node classifier with analytic gradients. forward() returns
// row-wise log-probabilities; backward() consumes the gradient with respect
// to the pre-softmax logits of the most recent training forward.
class GnnClassifier {
 public:
  virtual ~GnnClassifier() = default;

  virtual Mat forward(const Mat& features, bool training, Rng* rng) = 0;
  virtual void backward(const Mat& dlogits) = 0;

  virtual ParamRefs param_refs() = 0;
  virtual ParamRefs grad_refs() = 0;

  // Glorot matrices, zero biases, then the architecture hook for anything
  // else (attention vectors).
  void init_params(std::uint64_t seed);
  void zero_grads();

 protected:
  virtual void init_extra(Rng&) {}
};

std::unique_ptr<GnnClassifier> make_classifier(const BackboneConfig& config,
                                               const std::vector<Edge>& edges, std::int64_t n,
                                               int in_dim, int num_classes);

// Per-head attention weights of the most recent forward, indexed
// [layer][node][neighbor-slot]; neighbor order matches the sorted
// neighborhood including the self-loop. Heads of layer 0 are stacked
// sequentially. Only GAT models fill this.
const std::vector<std::vector<std::vector<double>>>* gat_attention(const GnnClassifier& model);

// Adam over every parameter of a model.
class AdamOptimizer {
 public:
  AdamOptimizer(GnnClassifier& model, double lr, double weight_decay);
  void step();

 private:
  GnnClassifier& model_;
  double lr_, weight_decay_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  std::vector<Mat> m_mats_, v_mats_;
  std::vector<Vec> m_vecs_, v_vecs_;
};

// Mean negative log-likelihood over `mask` rows; dlogits (softmax minus
// one-hot, scaled) is written when non-null.
double nll_loss(const Mat& log_probs, const std::vector<std::int32_t>& labels,
                const std::vector<std::uint8_t>& mask, Mat* dlogits);

// Percent of `mask` rows whose argmax row matches the label.
double masked_accuracy(const Mat& log_probs, const std::vector<std::int32_t>& labels,
                       const std::vector<std::uint8_t>& mask);

struct TrainedClassifier {
  std::unique_ptr<GnnClassifier> model;
  TrainReport report;
};

// NLL on the train mask, Adam, early stopping on validation accuracy.
// Deterministic per config.seed.
TrainedClassifier train_classifier(const TextAttributedGraph& graph,
                                   const BackboneConfig& config);

}  // namespace rograd
