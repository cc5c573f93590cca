#include "rograd/r2cl.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace rograd {

void R2clConfig::validate() const {
  if (depth < 1 || hidden < 1 || projection < 1)
    fail(ErrorKind::invalid_argument, "r2cl: encoder dimensions must be positive");
  if (batch_size < 1) fail(ErrorKind::invalid_argument, "r2cl: batch_size must be >= 1");
  if (!(temperature > 0.0)) fail(ErrorKind::invalid_argument, "r2cl: temperature must be positive");
  if (omega < 1.0) fail(ErrorKind::invalid_argument, "r2cl: omega must be >= 1");
  if (epochs < 0) fail(ErrorKind::invalid_argument, "r2cl: epochs must be non-negative");
  if (refine_period < 1) fail(ErrorKind::invalid_argument, "r2cl: refine_period must be >= 1");
  if (edge_drop < 0.0 || edge_drop >= 1.0 || feature_mask < 0.0 || feature_mask >= 1.0)
    fail(ErrorKind::invalid_argument, "r2cl: perturbation rates must lie in [0, 1)");
  if (anchors < 0 || same_k < 0 || cross_k < 0)
    fail(ErrorKind::invalid_argument, "r2cl: anchor plan must be non-negative");
  if (!(learning_rate > 0.0)) fail(ErrorKind::invalid_argument, "r2cl: learning rate must be positive");
}

GraphView make_stochastic_view(const TextAttributedGraph& graph, double edge_drop,
                               double feature_mask, std::uint64_t seed) {
  if (edge_drop < 0.0 || edge_drop >= 1.0 || feature_mask < 0.0 || feature_mask >= 1.0)
    fail(ErrorKind::invalid_argument, "stochastic view: rates must lie in [0, 1)");
  GraphView view;
  view.kind = ViewKind::stochastic;
  Rng rng(mix64(seed, 0x57a3b1c5ULL));
  view.edges.reserve(graph.edges.size());
  for (const auto& e : graph.edges)
    if (!(rng.uniform() < edge_drop)) view.edges.push_back(e);
  view.features = graph.features.cast<double>();
  if (feature_mask > 0.0) {
    for (Eigen::Index i = 0; i < view.features.rows(); ++i)
      for (Eigen::Index j = 0; j < view.features.cols(); ++j)
        if (rng.uniform() < feature_mask) view.features(i, j) = 0.0;
  }
  return view;
}

std::vector<std::int32_t> select_anchors(std::int64_t num_nodes, std::int64_t n,
                                         std::uint64_t seed) {
  if (n < 0 || n > num_nodes)
    fail(ErrorKind::invalid_argument, "select_anchors: n out of range");
  Rng rng(mix64(seed, 0xa2c40a5ULL));
  auto picks = rng.permutation_prefix(static_cast<std::size_t>(num_nodes),
                                      static_cast<std::size_t>(n));
  std::vector<std::int32_t> out;
  out.reserve(picks.size());
  for (auto p : picks) out.push_back(static_cast<std::int32_t>(p));
  return out;
}

NeighborSplit split_neighbors(std::int32_t anchor_label,
                              const std::vector<std::int32_t>& retrieved_labels, int same_k,
                              int cross_k) {
  NeighborSplit split;
  for (std::size_t i = 0; i < retrieved_labels.size(); ++i) {
    if (retrieved_labels[i] == anchor_label) {
      if (static_cast<int>(split.same.size()) < same_k) split.same.push_back(i);
    } else {
      if (static_cast<int>(split.cross.size()) < cross_k) split.cross.push_back(i);
    }
  }
  return split;
}

GraphView make_rag_view(const TextAttributedGraph& graph, const EmbeddingStore& store,
                        LlmGateway& gateway, const PromptLibrary& prompts, Encoder& encoder,
                        const R2clConfig& config, std::uint64_t seed, RagViewLog* log) {
  config.validate();
  GraphView view;
  view.kind = ViewKind::rag;
  view.features = graph.features.cast<double>();
  std::set<Edge> edge_set(graph.edges.begin(), graph.edges.end());

  const std::int64_t n = graph.num_nodes();
  auto anchors = select_anchors(n, std::min<std::int64_t>(config.anchors, n), mix64(seed, 0xa9c402ULL));
  std::sort(anchors.begin(), anchors.end());  // apply in anchor-index order
  const auto k_retrieve = static_cast<std::size_t>(config.same_k + config.cross_k);

  // Store ids mirror node ids.
  std::unordered_map<std::string, std::size_t> store_index;
  for (std::size_t e = 0; e < store.entries().size(); ++e)
    store_index[store.entries()[e].id] = e;

  RagViewLog local;
  for (std::int32_t anchor : anchors) {
    ++local.anchors_processed;
    try {
      if (k_retrieve == 0) continue;
      const std::string& anchor_id = graph.node_ids[static_cast<std::size_t>(anchor)];
      auto it = store_index.find(anchor_id);
      if (it == store_index.end())
        fail(ErrorKind::invalid_argument, "rag view: anchor missing from store");
      auto ranked = store.top_k_any(store.entries()[it->second].vec, k_retrieve, {anchor_id});

      std::vector<std::int32_t> node_idx;
      std::vector<std::int32_t> labels;
      for (const auto& r : ranked) {
        std::int32_t idx = graph.index_of(store.entries()[r.index].id);
        if (idx < 0) fail(ErrorKind::invalid_argument, "rag view: store id not in graph");
        node_idx.push_back(idx);
        labels.push_back(graph.labels[idx]);
      }
      auto split = split_neighbors(graph.labels[anchor], labels, config.same_k, config.cross_k);

      std::vector<std::string> same_texts, cross_texts;
      std::vector<std::int32_t> candidates;
      for (auto pos : split.same) {
        same_texts.push_back(graph.texts[node_idx[pos]]);
        candidates.push_back(node_idx[pos]);
      }
      for (auto pos : split.cross) {
        cross_texts.push_back(graph.texts[node_idx[pos]]);
        candidates.push_back(node_idx[pos]);
      }

      GenerationRequest modify;
      modify.kind = PromptKind::modify_anchor;
      modify.prompt = prompts.render_modify(graph.texts[anchor], same_texts, cross_texts,
                                            graph.class_name(graph.labels[anchor]));
      modify.decoding = config.decoding;
      modify.decoding.seed = mix64(seed, static_cast<std::uint64_t>(anchor), 1);
      modify.attempt_budget = config.attempt_budget;
      ParsedSample rewritten = gateway.complete_sample(modify);

      Eigen::VectorXf vec = encoder.encode_one(rewritten.title + " " + rewritten.abstract);
      float norm = vec.norm();
      if (!(norm > 0.0f)) fail(ErrorKind::runtime, "rag view: rewritten text embeds to zero");
      Eigen::VectorXf unit = vec / norm;

      std::vector<EdgeVerdict> verdicts;
      if (!candidates.empty()) {
        std::vector<std::string> candidate_texts;
        for (auto c : candidates) candidate_texts.push_back(graph.texts[c]);
        GenerationRequest edges_req;
        edges_req.kind = PromptKind::edge_analysis;
        edges_req.prompt = prompts.render_edge(graph.texts[anchor], candidate_texts);
        edges_req.decoding = config.decoding;
        edges_req.decoding.seed = mix64(seed, static_cast<std::uint64_t>(anchor), 2);
        edges_req.attempt_budget = config.attempt_budget;
        verdicts = gateway.complete_edge_verdicts(edges_req, candidates.size());
      }

      // All calls for this anchor succeeded; apply the modifications.
      view.features.row(anchor) = unit.cast<double>().transpose();
      for (std::size_t c = 0; c < candidates.size(); ++c) {
        Edge e{std::min(anchor, candidates[c]), std::max(anchor, candidates[c])};
        if (verdicts[c] == EdgeVerdict::connect) {
          if (edge_set.insert(e).second) ++local.edges_connected;
        } else {
          if (edge_set.erase(e) > 0) ++local.edges_removed;
        }
      }
    } catch (const Error&) {
      ++local.anchors_failed;  // anchor stays unmodified
    }
  }

  view.edges.assign(edge_set.begin(), edge_set.end());
  if (log) *log = local;
  return view;
}

SupconResult supcon_loss(const Mat& z, const std::vector<std::int32_t>& labels,
                         const std::vector<std::uint8_t>& generated_mask, double temperature,
                         double omega, bool want_grad) {
  const Eigen::Index m = z.rows();
  if (static_cast<Eigen::Index>(labels.size()) != m ||
      static_cast<Eigen::Index>(generated_mask.size()) != m)
    fail(ErrorKind::invalid_argument, "supcon: labels/mask size mismatch");
  if (!(temperature > 0.0)) fail(ErrorKind::invalid_argument, "supcon: temperature must be positive");
  if (m < 2) fail(ErrorKind::invalid_argument, "supcon: need at least two rows");

  Mat logits = (z * z.transpose()) / temperature;
  SupconResult res;
  if (want_grad) res.grad = Mat::Zero(m, z.cols());

  // First pass: per-anchor terms.
  std::vector<double> anchor_terms(static_cast<std::size_t>(m), 0.0);
  std::vector<std::uint8_t> contributes(static_cast<std::size_t>(m), 0);
  double weighted_sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    std::int64_t positives = 0;
    for (Eigen::Index a = 0; a < m; ++a)
      if (a != i && labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)])
        ++positives;
    if (positives == 0) {
      ++res.skipped;
      continue;
    }
    contributes[static_cast<std::size_t>(i)] = 1;
    ++res.contributing;

    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < m; ++a)
      if (a != i) mx = std::max(mx, logits(i, a));
    double sum_exp = 0.0;
    for (Eigen::Index a = 0; a < m; ++a)
      if (a != i) sum_exp += std::exp(logits(i, a) - mx);
    double lse = mx + std::log(sum_exp);

    double term = 0.0;
    for (Eigen::Index p = 0; p < m; ++p)
      if (p != i && labels[static_cast<std::size_t>(p)] == labels[static_cast<std::size_t>(i)])
        term += lse - logits(i, p);
    term /= static_cast<double>(positives);
    anchor_terms[static_cast<std::size_t>(i)] = term;
    weighted_sum += (generated_mask[static_cast<std::size_t>(i)] ? omega : 1.0) * term;
  }
  if (res.contributing == 0)
    fail(ErrorKind::invalid_argument, "supcon: no anchor has a positive");
  res.loss = weighted_sum / static_cast<double>(res.contributing);

  if (!want_grad) return res;

  const double scale = 1.0 / (temperature * static_cast<double>(res.contributing));
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!contributes[static_cast<std::size_t>(i)]) continue;
    const double w = generated_mask[static_cast<std::size_t>(i)] ? omega : 1.0;
    std::int64_t positives = 0;
    for (Eigen::Index a = 0; a < m; ++a)
      if (a != i && labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)])
        ++positives;

    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a < m; ++a)
      if (a != i) mx = std::max(mx, logits(i, a));
    double sum_exp = 0.0;
    for (Eigen::Index a = 0; a < m; ++a)
      if (a != i) sum_exp += std::exp(logits(i, a) - mx);

    for (Eigen::Index a = 0; a < m; ++a) {
      if (a == i) continue;
      double softmax = std::exp(logits(i, a) - mx) / sum_exp;
      double indicator =
          labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(i)]
              ? 1.0 / static_cast<double>(positives)
              : 0.0;
      double c = w * scale * (softmax - indicator);
      res.grad.row(i) += c * z.row(a);
      res.grad.row(a) += c * z.row(i);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Model

void R2clModel::init(int in_dim, const R2clConfig& config) {
  conv_w.clear();
  conv_b.clear();
  Rng rng(mix64(config.seed, 0x12c1d07ULL));
  auto glorot = [&](Mat& w) {
    double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
  };
  int prev = in_dim;
  for (int l = 0; l < config.depth; ++l) {
    conv_w.emplace_back(prev, config.hidden);
    glorot(conv_w.back());
    conv_b.emplace_back(Vec::Zero(config.hidden));
    prev = config.hidden;
  }
  proj_w = Mat(prev, config.projection);
  glorot(proj_w);
  proj_b = Vec::Zero(config.projection);
}

std::uint64_t config_fingerprint(const R2clConfig& config) {
  json doc = {{"depth", config.depth},         {"hidden", config.hidden},
              {"projection", config.projection}, {"batch_size", config.batch_size},
              {"temperature", config.temperature}, {"omega", config.omega},
              {"epochs", config.epochs},       {"refine_period", config.refine_period},
              {"anchors", config.anchors},     {"same_k", config.same_k},
              {"cross_k", config.cross_k},     {"edge_drop", config.edge_drop},
              {"feature_mask", config.feature_mask}, {"learning_rate", config.learning_rate},
              {"seed", config.seed}};
  return hash_str(doc.dump());
}

namespace {

void write_mat(std::ofstream& out, const Mat& m) {
  std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = m(i, j);
      out.write(reinterpret_cast<const char*>(&v), 8);
    }
}

Mat read_mat(std::ifstream& in) {
  std::uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  if (!in) fail(ErrorKind::parse, "checkpoint: truncated matrix header");
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      double v = 0;
      in.read(reinterpret_cast<char*>(&v), 8);
      m(i, j) = v;
    }
  if (!in) fail(ErrorKind::parse, "checkpoint: truncated matrix body");
  return m;
}

}  // namespace

void R2clModel::save(const std::string& path, std::uint64_t fingerprint) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint: " + path);
  out.write("RGCK0001", 8);
  out.write(reinterpret_cast<const char*>(&fingerprint), 8);
  std::uint64_t layers = conv_w.size();
  out.write(reinterpret_cast<const char*>(&layers), 8);
  for (std::size_t l = 0; l < conv_w.size(); ++l) {
    write_mat(out, conv_w[l]);
    write_mat(out, conv_b[l]);
  }
  write_mat(out, proj_w);
  write_mat(out, proj_b);
}

R2clModel R2clModel::load(const std::string& path, std::uint64_t expect_fingerprint) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "RGCK0001", 8) != 0)
    fail(ErrorKind::parse, "not a checkpoint file: " + path);
  std::uint64_t fp = 0;
  in.read(reinterpret_cast<char*>(&fp), 8);
  if (fp != expect_fingerprint)
    fail(ErrorKind::invalid_argument, "checkpoint config fingerprint mismatch");
  std::uint64_t layers = 0;
  in.read(reinterpret_cast<char*>(&layers), 8);
  R2clModel model;
  for (std::uint64_t l = 0; l < layers; ++l) {
    model.conv_w.push_back(read_mat(in));
    Mat b = read_mat(in);
    model.conv_b.push_back(b.col(0));
  }
  model.proj_w = read_mat(in);
  Mat pb = read_mat(in);
  model.proj_b = pb.col(0);
  return model;
}

namespace {

// Per-view forward cache for backprop.
struct ViewCache {
  SpMat adj;
  std::vector<Mat> inputs;  // inputs to each conv layer
  std::vector<Mat> pre;     // pre-activation of each conv layer
  Mat h;                    // final conv output (linear)
  Mat u;                    // projection pre-normalization
  Vec u_norm;               // row norms of u
  Mat z;                    // normalized projection
};

void forward_view(const R2clModel& model, const GraphView& view, std::int64_t n, ViewCache& cache) {
  cache.adj = normalize_adjacency(view.edges, n);
  cache.inputs.assign(1, view.features);
  cache.pre.clear();
  Mat h = view.features;
  const int depth = static_cast<int>(model.conv_w.size());
  for (int l = 0; l < depth; ++l) {
    const auto lu = static_cast<std::size_t>(l);
    Mat zpre = cache.adj * (h * model.conv_w[lu]);
    zpre.rowwise() += model.conv_b[lu].transpose();
    cache.pre.push_back(zpre);
    h = (l + 1 < depth) ? zpre.cwiseMax(0.0) : zpre;  // last layer stays linear
    cache.inputs.push_back(h);
  }
  cache.h = h;
  cache.u = h * model.proj_w;
  cache.u.rowwise() += model.proj_b.transpose();
  cache.u_norm = cache.u.rowwise().norm();
  cache.z = cache.u;
  for (Eigen::Index i = 0; i < cache.z.rows(); ++i) {
    double norm = cache.u_norm(i);
    if (norm > 0.0)
      cache.z.row(i) /= norm;
    else
      cache.z.row(i).setZero();
  }
}

struct ModelGrads {
  std::vector<Mat> conv_w;
  std::vector<Vec> conv_b;
  Mat proj_w;
  Vec proj_b;

  explicit ModelGrads(const R2clModel& model) {
    for (const auto& w : model.conv_w) conv_w.push_back(Mat::Zero(w.rows(), w.cols()));
    for (const auto& b : model.conv_b) conv_b.push_back(Vec::Zero(b.size()));
    proj_w = Mat::Zero(model.proj_w.rows(), model.proj_w.cols());
    proj_b = Vec::Zero(model.proj_b.size());
  }
};

// Accumulates parameter gradients for one view given dL/dz.
void backward_view(const R2clModel& model, const ViewCache& cache, const Mat& dz,
                   ModelGrads& grads) {
  // Through row normalization: du = (dz - (dz . z) z) / |u|.
  Mat du(dz.rows(), dz.cols());
  for (Eigen::Index i = 0; i < dz.rows(); ++i) {
    double norm = cache.u_norm(i);
    if (norm > 0.0) {
      double dot = dz.row(i).dot(cache.z.row(i));
      du.row(i) = (dz.row(i) - dot * cache.z.row(i)) / norm;
    } else {
      du.row(i).setZero();
    }
  }
  grads.proj_w += cache.h.transpose() * du;
  grads.proj_b += du.colwise().sum();
  Mat dh = du * model.proj_w.transpose();

  const int depth = static_cast<int>(model.conv_w.size());
  for (int l = depth - 1; l >= 0; --l) {
    const auto lu = static_cast<std::size_t>(l);
    Mat dzpre = (l + 1 < depth)
                    ? dh.cwiseProduct((cache.pre[lu].array() > 0.0).cast<double>().matrix())
                    : dh;
    grads.conv_b[lu] += dzpre.colwise().sum();
    Mat dy = cache.adj * dzpre;  // symmetric operator
    grads.conv_w[lu] += cache.inputs[lu].transpose() * dy;
    dh = dy * model.conv_w[lu].transpose();
  }
}

struct AdamState {
  std::vector<Mat> m_w, v_w;
  std::vector<Vec> m_b, v_b;
  Mat m_pw, v_pw;
  Vec m_pb, v_pb;
  std::int64_t t = 0;

  explicit AdamState(const R2clModel& model) {
    for (const auto& w : model.conv_w) {
      m_w.push_back(Mat::Zero(w.rows(), w.cols()));
      v_w.push_back(Mat::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : model.conv_b) {
      m_b.push_back(Vec::Zero(b.size()));
      v_b.push_back(Vec::Zero(b.size()));
    }
    m_pw = Mat::Zero(model.proj_w.rows(), model.proj_w.cols());
    v_pw = Mat::Zero(model.proj_w.rows(), model.proj_w.cols());
    m_pb = Vec::Zero(model.proj_b.size());
    v_pb = Vec::Zero(model.proj_b.size());
  }

  void step(R2clModel& model, const ModelGrads& grads, double lr) {
    ++t;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto update_mat = [&](Mat& p, const Mat& g, Mat& m, Mat& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p -= lr * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + eps).matrix());
    };
    auto update_vec = [&](Vec& p, const Vec& g, Vec& m, Vec& v) {
      m = b1 * m + (1.0 - b1) * g;
      v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
      p -= lr * (m / c1).cwiseQuotient(((v / c2).cwiseSqrt().array() + eps).matrix());
    };
    for (std::size_t l = 0; l < model.conv_w.size(); ++l) {
      update_mat(model.conv_w[l], grads.conv_w[l], m_w[l], v_w[l]);
      update_vec(model.conv_b[l], grads.conv_b[l], m_b[l], v_b[l]);
    }
    update_mat(model.proj_w, grads.proj_w, m_pw, v_pw);
    update_vec(model.proj_b, grads.proj_b, m_pb, v_pb);
  }
};

GraphView identity_view(const TextAttributedGraph& graph) {
  GraphView v;
  v.features = graph.features.cast<double>();
  v.edges = graph.edges;
  v.kind = ViewKind::stochastic;
  return v;
}

EmbeddingStore store_from_representations(const TextAttributedGraph& graph, const Mat& h) {
  EmbeddingStore store(static_cast<int>(h.cols()));
  for (std::int64_t i = 0; i < graph.num_nodes(); ++i) {
    Eigen::VectorXf v = h.row(i).cast<float>().transpose();
    if (!(v.norm() > 0.0f)) {
      // All-zero representation (conceivable for a zero-feature isolated
      // node); nudge deterministically so the store stays total.
      v = Eigen::VectorXf::Zero(static_cast<Eigen::Index>(h.cols()));
      v(static_cast<Eigen::Index>(i % h.cols())) = 1.0f;
    }
    EntryKind kind = graph.node_origin[i] == NodeOrigin::generated ? EntryKind::generated
                                                                   : EntryKind::original;
    store.add(graph.node_ids[i], graph.labels[i], v, kind);
  }
  return store;
}

}  // namespace

R2clResult train_r2cl(const TextAttributedGraph& enriched, const R2clConfig& config,
                      LlmGateway& gateway, const PromptLibrary& prompts, Encoder& encoder) {
  config.validate();
  enriched.validate();
  const std::int64_t n = enriched.num_nodes();
  if (n == 0) fail(ErrorKind::invalid_argument, "train_r2cl: empty graph");

  R2clResult result;
  result.model.init(static_cast<int>(enriched.features.cols()), config);
  AdamState adam(result.model);

  std::vector<std::int32_t> pool;  // train-masked nodes feed the batches
  for (std::int64_t i = 0; i < n; ++i)
    if (enriched.train_mask[i]) pool.push_back(static_cast<std::int32_t>(i));

  std::vector<std::uint8_t> generated(static_cast<std::size_t>(n), 0);
  for (std::int64_t i = 0; i < n; ++i)
    generated[static_cast<std::size_t>(i)] = enriched.node_origin[i] == NodeOrigin::generated;

  std::optional<GraphView> latest_rag;
  ViewCache cache1, cache2, eval_cache;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    GraphView view1 = make_stochastic_view(enriched, config.edge_drop, config.feature_mask,
                                           mix64(config.seed, static_cast<std::uint64_t>(epoch), 1));
    bool refined = false;
    GraphView view2;
    if (epoch % config.refine_period == 0) {
      // Store refreshed from the current representations of the unperturbed
      // graph, then the LLM refines anchors on top of it.
      forward_view(result.model, identity_view(enriched), n, eval_cache);
      EmbeddingStore store = store_from_representations(enriched, eval_cache.h);
      RagViewLog log;
      view2 = make_rag_view(enriched, store, gateway, prompts, encoder, config,
                            mix64(config.seed, static_cast<std::uint64_t>(epoch), 2), &log);
      result.rag_log.anchors_processed += log.anchors_processed;
      result.rag_log.anchors_failed += log.anchors_failed;
      result.rag_log.edges_connected += log.edges_connected;
      result.rag_log.edges_removed += log.edges_removed;
      latest_rag = view2;
      ++result.refinement_events;
      refined = true;
    } else {
      view2 = make_stochastic_view(enriched, config.edge_drop, config.feature_mask,
                                   mix64(config.seed, static_cast<std::uint64_t>(epoch), 2));
    }

    double epoch_loss = 0.0;
    int batches = 0;
    if (pool.size() >= 1) {
      std::vector<std::int32_t> order = pool;
      Rng shuffle_rng(mix64(config.seed, static_cast<std::uint64_t>(epoch), 3));
      shuffle_rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
        std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
        std::vector<std::int32_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                        order.begin() + static_cast<std::ptrdiff_t>(stop));
        const auto b = static_cast<Eigen::Index>(batch.size());

        forward_view(result.model, view1, n, cache1);
        forward_view(result.model, view2, n, cache2);

        Mat zcat(2 * b, config.projection);
        std::vector<std::int32_t> labels(static_cast<std::size_t>(2 * b));
        std::vector<std::uint8_t> genmask(static_cast<std::size_t>(2 * b));
        for (Eigen::Index r = 0; r < b; ++r) {
          const auto node = batch[static_cast<std::size_t>(r)];
          zcat.row(r) = cache1.z.row(node);
          zcat.row(b + r) = cache2.z.row(node);
          labels[static_cast<std::size_t>(r)] = enriched.labels[node];
          labels[static_cast<std::size_t>(b + r)] = enriched.labels[node];
          genmask[static_cast<std::size_t>(r)] = generated[static_cast<std::size_t>(node)];
          genmask[static_cast<std::size_t>(b + r)] = generated[static_cast<std::size_t>(node)];
        }

        SupconResult sc;
        try {
          sc = supcon_loss(zcat, labels, genmask, config.temperature, config.omega, true);
        } catch (const Error&) {
          continue;  // batch without any positive pair
        }
        if (!std::isfinite(sc.loss))
          fail(ErrorKind::runtime, "train_r2cl: non-finite contrastive loss");
        epoch_loss += sc.loss;
        ++batches;

        Mat dz1 = Mat::Zero(n, config.projection);
        Mat dz2 = Mat::Zero(n, config.projection);
        for (Eigen::Index r = 0; r < b; ++r) {
          const auto node = batch[static_cast<std::size_t>(r)];
          dz1.row(node) += sc.grad.row(r);
          dz2.row(node) += sc.grad.row(b + r);
        }
        ModelGrads grads(result.model);
        backward_view(result.model, cache1, dz1, grads);
        backward_view(result.model, cache2, dz2, grads);
        adam.step(result.model, grads, config.learning_rate);
      }
    }
    result.epoch_log.push_back({epoch, batches > 0 ? epoch_loss / batches : 0.0, refined});
  }

  forward_view(result.model, identity_view(enriched), n, eval_cache);
  result.representations = eval_cache.h;
  result.projections = eval_cache.z;

  result.refined_graph = enriched;
  if (latest_rag) result.refined_graph.edges = latest_rag->edges;
  result.refined_graph.features = eval_cache.h.cast<float>();
  result.refined_graph.validate();
  return result;
}

}  // namespace rograd
