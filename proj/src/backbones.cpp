#include "rograd/backbones.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rograd {

Architecture architecture_from_string(const std::string& s) {
  if (s == "gcn") return Architecture::gcn;
  if (s == "gat") return Architecture::gat;
  if (s == "sage") return Architecture::sage;
  fail(ErrorKind::invalid_argument, "unknown architecture: " + s);
}

const char* architecture_name(Architecture a) {
  switch (a) {
    case Architecture::gcn: return "gcn";
    case Architecture::gat: return "gat";
    case Architecture::sage: return "sage";
  }
  return "unknown";
}

void BackboneConfig::validate() const {
  if (hidden <= 0) fail(ErrorKind::invalid_argument, "backbone: hidden must be positive");
  if (dropout < 0.0 || dropout >= 1.0)
    fail(ErrorKind::invalid_argument, "backbone: dropout must lie in [0, 1)");
  if (gcn_layers < 1) fail(ErrorKind::invalid_argument, "backbone: gcn_layers must be >= 1");
  if (gat_heads < 1) fail(ErrorKind::invalid_argument, "backbone: gat_heads must be >= 1");
  if (arch == Architecture::gat && hidden % gat_heads != 0)
    fail(ErrorKind::invalid_argument, "backbone: hidden must be divisible by gat_heads");
  if (max_epochs < 0 || patience < 0)
    fail(ErrorKind::invalid_argument, "backbone: epochs/patience must be non-negative");
  if (learning_rate <= 0.0) fail(ErrorKind::invalid_argument, "backbone: learning rate must be positive");
}

SpMat normalize_adjacency(const std::vector<Edge>& edges, std::int64_t n) {
  std::vector<double> degree(static_cast<std::size_t>(n), 1.0);  // self-loop
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n)
      fail(ErrorKind::invalid_argument, "normalize_adjacency: edge endpoint out of range");
    degree[static_cast<std::size_t>(u)] += 1.0;
    degree[static_cast<std::size_t>(v)] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(edges.size() * 2 + static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    trips.emplace_back(i, i, 1.0 / degree[static_cast<std::size_t>(i)]);
  for (auto [u, v] : edges) {
    double w = 1.0 / std::sqrt(degree[static_cast<std::size_t>(u)] * degree[static_cast<std::size_t>(v)]);
    trips.emplace_back(u, v, w);
    trips.emplace_back(v, u, w);
  }
  SpMat a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

SpMat mean_adjacency(const std::vector<Edge>& edges, std::int64_t n) {
  std::vector<double> degree(static_cast<std::size_t>(n), 0.0);
  for (auto [u, v] : edges) {
    degree[static_cast<std::size_t>(u)] += 1.0;
    degree[static_cast<std::size_t>(v)] += 1.0;
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(edges.size() * 2);
  for (auto [u, v] : edges) {
    trips.emplace_back(u, v, 1.0 / degree[static_cast<std::size_t>(u)]);
    trips.emplace_back(v, u, 1.0 / degree[static_cast<std::size_t>(v)]);
  }
  SpMat a(n, n);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

namespace {

Mat log_softmax_rows(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    double lse = std::log((logits.row(i).array() - mx).exp().sum()) + mx;
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

// Inverted dropout mask: entries 0 or 1/(1-p).
Mat dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat m(rows, cols);
  const double keep = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = (rng.uniform() < p) ? 0.0 : keep;
  return m;
}

void glorot(Mat& w, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-limit, limit);
}

void glorot(Vec& v, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(v.size() + 1));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-limit, limit);
}

std::vector<std::vector<std::int32_t>> neighborhoods_with_self(const std::vector<Edge>& edges,
                                                               std::int64_t n) {
  std::vector<std::vector<std::int32_t>> nb(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) nb[static_cast<std::size_t>(i)].push_back(static_cast<std::int32_t>(i));
  for (auto [u, v] : edges) {
    nb[static_cast<std::size_t>(u)].push_back(v);
    nb[static_cast<std::size_t>(v)].push_back(u);
  }
  for (auto& lst : nb) std::sort(lst.begin(), lst.end());
  return nb;
}

}  // namespace

void GnnClassifier::init_params(std::uint64_t seed) {
  Rng rng(mix64(seed, 0x1417a9a35ULL));
  auto refs = param_refs();
  for (Mat* w : refs.mats) glorot(*w, rng);
  for (Vec* b : refs.vecs) b->setZero();
  // Architecture-specific extras (attention vectors) re-draw from the same
  // stream via this hook.
  init_extra(rng);
}

void GnnClassifier::zero_grads() {
  auto refs = grad_refs();
  for (Mat* g : refs.mats) g->setZero();
  for (Vec* g : refs.vecs) g->setZero();
}

// ---------------------------------------------------------------------------
// GCN

class GcnModel final : public GnnClassifier {
 public:
  GcnModel(const std::vector<Edge>& edges, std::int64_t n, int in_dim, int num_classes,
           const BackboneConfig& cfg)
      : adj_(normalize_adjacency(edges, n)), layers_(cfg.gcn_layers), dropout_(cfg.dropout) {
    int prev = in_dim;
    for (int l = 0; l < layers_; ++l) {
      w_.emplace_back(prev, cfg.hidden);
      b_.emplace_back(Vec::Zero(cfg.hidden));
      prev = cfg.hidden;
    }
    w_.emplace_back(prev, num_classes);  // classifier
    b_.emplace_back(Vec::Zero(num_classes));
    gw_.resize(w_.size());
    gb_.resize(b_.size());
    for (std::size_t i = 0; i < w_.size(); ++i) gw_[i] = Mat::Zero(w_[i].rows(), w_[i].cols());
    for (std::size_t i = 0; i < b_.size(); ++i) gb_[i] = Vec::Zero(b_[i].size());
  }

  Mat forward(const Mat& x, bool training, Rng* rng) override {
    if (x.cols() != w_[0].rows()) fail(ErrorKind::invalid_argument, "gcn: feature dim mismatch");
    inputs_.assign(1, x);
    pre_.clear();
    masks_.clear();
    Mat h = x;
    for (int l = 0; l < layers_; ++l) {
      Mat z = adj_ * (h * w_[static_cast<std::size_t>(l)]);
      z.rowwise() += b_[static_cast<std::size_t>(l)].transpose();
      pre_.push_back(z);
      h = z.cwiseMax(0.0);
      if (training && dropout_ > 0.0) {
        masks_.push_back(dropout_mask(h.rows(), h.cols(), dropout_, *rng));
        h = h.cwiseProduct(masks_.back());
      } else {
        masks_.push_back(Mat());
      }
      inputs_.push_back(h);
    }
    logits_ = h * w_.back();
    logits_.rowwise() += b_.back().transpose();
    return log_softmax_rows(logits_);
  }

  void backward(const Mat& dlogits) override {
    zero_grads();
    const Mat& last_hidden = inputs_.back();
    gw_.back() = last_hidden.transpose() * dlogits;
    gb_.back() = dlogits.colwise().sum();
    Mat dh = dlogits * w_.back().transpose();
    for (int l = layers_ - 1; l >= 0; --l) {
      const auto lu = static_cast<std::size_t>(l);
      if (masks_[lu].size() > 0) dh = dh.cwiseProduct(masks_[lu]);
      Mat dz = dh.cwiseProduct((pre_[lu].array() > 0.0).cast<double>().matrix());
      gb_[lu] = dz.colwise().sum();
      Mat dy = adj_ * dz;  // adj is symmetric
      gw_[lu] = inputs_[lu].transpose() * dy;
      dh = dy * w_[lu].transpose();
    }
  }

  ParamRefs param_refs() override {
    ParamRefs r;
    for (auto& w : w_) r.mats.push_back(&w);
    for (auto& b : b_) r.vecs.push_back(&b);
    return r;
  }
  ParamRefs grad_refs() override {
    ParamRefs r;
    for (auto& g : gw_) r.mats.push_back(&g);
    for (auto& g : gb_) r.vecs.push_back(&g);
    return r;
  }

 private:
  SpMat adj_;
  int layers_;
  double dropout_;
  std::vector<Mat> w_, gw_;
  std::vector<Vec> b_, gb_;
  // caches
  std::vector<Mat> inputs_, pre_, masks_;
  Mat logits_;
};

// ---------------------------------------------------------------------------
// GAT

class GatModel final : public GnnClassifier {
 public:
  GatModel(const std::vector<Edge>& edges, std::int64_t n, int in_dim, int num_classes,
           const BackboneConfig& cfg)
      : nb_(neighborhoods_with_self(edges, n)),
        heads_(cfg.gat_heads),
        hidden_(cfg.hidden),
        slope_(cfg.leaky_slope),
        dropout_(cfg.dropout) {
    const int head_dim = cfg.hidden / cfg.gat_heads;
    for (int k = 0; k < heads_; ++k) {
      w1_.emplace_back(in_dim, head_dim);
      a1_src_.emplace_back(Vec::Zero(head_dim));
      a1_dst_.emplace_back(Vec::Zero(head_dim));
    }
    b1_ = Vec::Zero(cfg.hidden);
    w2_ = Mat(cfg.hidden, cfg.hidden);
    a2_src_ = Vec::Zero(cfg.hidden);
    a2_dst_ = Vec::Zero(cfg.hidden);
    b2_ = Vec::Zero(cfg.hidden);
    wc_ = Mat(cfg.hidden, num_classes);
    bc_ = Vec::Zero(num_classes);
    allocate_grads();
  }

  Mat forward(const Mat& x, bool training, Rng* rng) override {
    if (x.cols() != w1_[0].rows()) fail(ErrorKind::invalid_argument, "gat: feature dim mismatch");
    x_ = x;
    attention_.assign(2, {});
    attention_[0].assign(nb_.size() * static_cast<std::size_t>(heads_), {});
    attention_[1].assign(nb_.size(), {});

    const auto n = static_cast<Eigen::Index>(nb_.size());
    Mat h1 = Mat::Zero(n, hidden_);
    const int head_dim = hidden_ / heads_;
    u1_.clear();
    s1_.clear();
    for (int k = 0; k < heads_; ++k) {
      HeadCache cache;
      Mat out = head_forward(x, w1_[static_cast<std::size_t>(k)], a1_src_[static_cast<std::size_t>(k)],
                             a1_dst_[static_cast<std::size_t>(k)], cache,
                             &attention_[0][static_cast<std::size_t>(k) * nb_.size()]);
      h1.block(0, k * head_dim, n, head_dim) = out;
      u1_.push_back(std::move(cache.u));
      s1_.push_back(std::move(cache.s));
      alpha1_.resize(static_cast<std::size_t>(heads_));
      alpha1_[static_cast<std::size_t>(k)] = std::move(cache.alpha);
    }
    h1.rowwise() += b1_.transpose();
    pre1_ = h1;
    h1 = h1.cwiseMax(0.0);
    if (training && dropout_ > 0.0) {
      mask1_ = dropout_mask(h1.rows(), h1.cols(), dropout_, *rng);
      h1 = h1.cwiseProduct(mask1_);
    } else {
      mask1_ = Mat();
    }
    d1_ = h1;

    HeadCache cache2;
    Mat h2 = head_forward(h1, w2_, a2_src_, a2_dst_, cache2, attention_[1].data());
    u2_ = std::move(cache2.u);
    s2_ = std::move(cache2.s);
    alpha2_ = std::move(cache2.alpha);
    h2.rowwise() += b2_.transpose();
    pre2_ = h2;
    h2 = h2.cwiseMax(0.0);
    if (training && dropout_ > 0.0) {
      mask2_ = dropout_mask(h2.rows(), h2.cols(), dropout_, *rng);
      h2 = h2.cwiseProduct(mask2_);
    } else {
      mask2_ = Mat();
    }
    d2_ = h2;

    logits_ = h2 * wc_;
    logits_.rowwise() += bc_.transpose();
    return log_softmax_rows(logits_);
  }

  void backward(const Mat& dlogits) override {
    zero_grads();
    gwc_ = d2_.transpose() * dlogits;
    gbc_ = dlogits.colwise().sum();
    Mat dh2 = dlogits * wc_.transpose();
    if (mask2_.size() > 0) dh2 = dh2.cwiseProduct(mask2_);
    Mat dz2 = dh2.cwiseProduct((pre2_.array() > 0.0).cast<double>().matrix());
    gb2_ = dz2.colwise().sum();
    Mat dd1 = Mat::Zero(d1_.rows(), d1_.cols());
    head_backward(d1_, u2_, s2_, alpha2_, w2_, a2_src_, a2_dst_, dz2, gw2_, ga2_src_, ga2_dst_, dd1);

    if (mask1_.size() > 0) dd1 = dd1.cwiseProduct(mask1_);
    Mat dz1 = dd1.cwiseProduct((pre1_.array() > 0.0).cast<double>().matrix());
    gb1_ = dz1.colwise().sum();
    const int head_dim = hidden_ / heads_;
    const auto n = static_cast<Eigen::Index>(nb_.size());
    Mat dx = Mat::Zero(x_.rows(), x_.cols());
    for (int k = 0; k < heads_; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      Mat dz_head = dz1.block(0, k * head_dim, n, head_dim);
      head_backward(x_, u1_[ku], s1_[ku], alpha1_[ku], w1_[ku], a1_src_[ku], a1_dst_[ku], dz_head,
                    gw1_[ku], ga1_src_[ku], ga1_dst_[ku], dx);
    }
  }

  ParamRefs param_refs() override {
    ParamRefs r;
    for (auto& w : w1_) r.mats.push_back(&w);
    r.mats.push_back(&w2_);
    r.mats.push_back(&wc_);
    for (auto& a : a1_src_) r.vecs.push_back(&a);
    for (auto& a : a1_dst_) r.vecs.push_back(&a);
    r.vecs.push_back(&a2_src_);
    r.vecs.push_back(&a2_dst_);
    r.vecs.push_back(&b1_);
    r.vecs.push_back(&b2_);
    r.vecs.push_back(&bc_);
    return r;
  }
  ParamRefs grad_refs() override {
    ParamRefs r;
    for (auto& g : gw1_) r.mats.push_back(&g);
    r.mats.push_back(&gw2_);
    r.mats.push_back(&gwc_);
    for (auto& g : ga1_src_) r.vecs.push_back(&g);
    for (auto& g : ga1_dst_) r.vecs.push_back(&g);
    r.vecs.push_back(&ga2_src_);
    r.vecs.push_back(&ga2_dst_);
    r.vecs.push_back(&gb1_);
    r.vecs.push_back(&gb2_);
    r.vecs.push_back(&gbc_);
    return r;
  }

  const std::vector<std::vector<std::vector<double>>>& attention() const { return attention_; }

 protected:
  void init_extra(Rng& rng) override {
    for (auto& a : a1_src_) glorot(a, rng);
    for (auto& a : a1_dst_) glorot(a, rng);
    glorot(a2_src_, rng);
    glorot(a2_dst_, rng);
  }

 private:
  struct HeadCache {
    Mat u;
    std::vector<std::vector<double>> s;      // pre-activation scores per node
    std::vector<std::vector<double>> alpha;  // softmax weights per node
  };

  Mat head_forward(const Mat& h, const Mat& w, const Vec& a_src, const Vec& a_dst,
                   HeadCache& cache, std::vector<double>* attention_out) {
    const auto n = static_cast<Eigen::Index>(nb_.size());
    cache.u = h * w;
    Vec src_score = cache.u * a_src;
    Vec dst_score = cache.u * a_dst;
    cache.s.assign(nb_.size(), {});
    cache.alpha.assign(nb_.size(), {});
    Mat out = Mat::Zero(n, w.cols());
    for (std::size_t i = 0; i < nb_.size(); ++i) {
      const auto& nbrs = nb_[i];
      auto& s_row = cache.s[i];
      auto& a_row = cache.alpha[i];
      s_row.resize(nbrs.size());
      a_row.resize(nbrs.size());
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t t = 0; t < nbrs.size(); ++t) {
        double raw = src_score(static_cast<Eigen::Index>(i)) + dst_score(nbrs[t]);
        double e = raw > 0.0 ? raw : slope_ * raw;
        s_row[t] = raw;
        a_row[t] = e;
        mx = std::max(mx, e);
      }
      double denom = 0.0;
      for (double& e : a_row) {
        e = std::exp(e - mx);
        denom += e;
      }
      for (std::size_t t = 0; t < nbrs.size(); ++t) {
        a_row[t] /= denom;
        out.row(static_cast<Eigen::Index>(i)) += a_row[t] * cache.u.row(nbrs[t]);
      }
      if (attention_out) attention_out[i] = a_row;
    }
    return out;
  }

  void head_backward(const Mat& h, const Mat& u, const std::vector<std::vector<double>>& s,
                     const std::vector<std::vector<double>>& alpha, const Mat& w,
                     const Vec& a_src, const Vec& a_dst, const Mat& dout, Mat& gw, Vec& ga_src,
                     Vec& ga_dst, Mat& dh_accum) {
    Mat du = Mat::Zero(u.rows(), u.cols());
    for (std::size_t i = 0; i < nb_.size(); ++i) {
      const auto& nbrs = nb_[i];
      const auto& a_row = alpha[i];
      const auto& s_row = s[i];
      const auto ii = static_cast<Eigen::Index>(i);
      // dalpha then softmax and leaky-relu backward
      std::vector<double> g(nbrs.size());
      double dot = 0.0;
      for (std::size_t t = 0; t < nbrs.size(); ++t) {
        g[t] = dout.row(ii).dot(u.row(nbrs[t]));
        dot += a_row[t] * g[t];
      }
      for (std::size_t t = 0; t < nbrs.size(); ++t) {
        double de = a_row[t] * (g[t] - dot);
        double ds = de * (s_row[t] > 0.0 ? 1.0 : slope_);
        du.row(nbrs[t]) += a_row[t] * dout.row(ii);
        ga_src += ds * u.row(ii).transpose();
        ga_dst += ds * u.row(nbrs[t]).transpose();
        du.row(ii) += ds * a_src.transpose();
        du.row(nbrs[t]) += ds * a_dst.transpose();
      }
    }
    gw += h.transpose() * du;
    dh_accum += du * w.transpose();
  }

  std::vector<std::vector<std::int32_t>> nb_;
  int heads_, hidden_;
  double slope_, dropout_;
  std::vector<Mat> w1_, gw1_;
  std::vector<Vec> a1_src_, a1_dst_, ga1_src_, ga1_dst_;
  Vec b1_, gb1_;
  Mat w2_, gw2_;
  Vec a2_src_, a2_dst_, ga2_src_, ga2_dst_, b2_, gb2_;
  Mat wc_, gwc_;
  Vec bc_, gbc_;
  // caches
  Mat x_, pre1_, d1_, pre2_, d2_, mask1_, mask2_, logits_;
  std::vector<Mat> u1_;
  std::vector<std::vector<std::vector<double>>> s1_, alpha1_;
  Mat u2_;
  std::vector<std::vector<double>> s2_, alpha2_;
  std::vector<std::vector<std::vector<double>>> attention_;

  void allocate_grads() {
    for (auto& w : w1_) gw1_.push_back(Mat::Zero(w.rows(), w.cols()));
    for (auto& a : a1_src_) ga1_src_.push_back(Vec::Zero(a.size()));
    for (auto& a : a1_dst_) ga1_dst_.push_back(Vec::Zero(a.size()));
    gw2_ = Mat::Zero(w2_.rows(), w2_.cols());
    ga2_src_ = Vec::Zero(a2_src_.size());
    ga2_dst_ = Vec::Zero(a2_dst_.size());
    gb1_ = Vec::Zero(b1_.size());
    gb2_ = Vec::Zero(b2_.size());
    gwc_ = Mat::Zero(wc_.rows(), wc_.cols());
    gbc_ = Vec::Zero(bc_.size());
  }
};

// ---------------------------------------------------------------------------
// GraphSAGE

class SageModel final : public GnnClassifier {
 public:
  SageModel(const std::vector<Edge>& edges, std::int64_t n, int in_dim, int num_classes,
            const BackboneConfig& cfg)
      : mean_(mean_adjacency(edges, n)), mean_t_(mean_.transpose()), dropout_(cfg.dropout) {
    w_.emplace_back(2 * in_dim, cfg.hidden);
    b_.emplace_back(Vec::Zero(cfg.hidden));
    w_.emplace_back(2 * cfg.hidden, cfg.hidden);
    b_.emplace_back(Vec::Zero(cfg.hidden));
    w_.emplace_back(cfg.hidden, num_classes);
    b_.emplace_back(Vec::Zero(num_classes));
    for (auto& w : w_) gw_.push_back(Mat::Zero(w.rows(), w.cols()));
    for (auto& b : b_) gb_.push_back(Vec::Zero(b.size()));
  }

  Mat forward(const Mat& x, bool training, Rng* rng) override {
    if (2 * x.cols() != w_[0].rows()) fail(ErrorKind::invalid_argument, "sage: feature dim mismatch");
    concat_.clear();
    pre_.clear();
    masks_.clear();
    Mat h = x;
    for (int l = 0; l < 2; ++l) {
      const auto lu = static_cast<std::size_t>(l);
      Mat c(h.rows(), 2 * h.cols());
      c << h, (mean_ * h);
      concat_.push_back(c);
      Mat z = c * w_[lu];
      z.rowwise() += b_[lu].transpose();
      pre_.push_back(z);
      h = z.cwiseMax(0.0);
      if (training && dropout_ > 0.0) {
        masks_.push_back(dropout_mask(h.rows(), h.cols(), dropout_, *rng));
        h = h.cwiseProduct(masks_.back());
      } else {
        masks_.push_back(Mat());
      }
    }
    hidden_ = h;
    logits_ = h * w_[2];
    logits_.rowwise() += b_[2].transpose();
    return log_softmax_rows(logits_);
  }

  void backward(const Mat& dlogits) override {
    zero_grads();
    gw_[2] = hidden_.transpose() * dlogits;
    gb_[2] = dlogits.colwise().sum();
    Mat dh = dlogits * w_[2].transpose();
    for (int l = 1; l >= 0; --l) {
      const auto lu = static_cast<std::size_t>(l);
      if (masks_[lu].size() > 0) dh = dh.cwiseProduct(masks_[lu]);
      Mat dz = dh.cwiseProduct((pre_[lu].array() > 0.0).cast<double>().matrix());
      gb_[lu] = dz.colwise().sum();
      gw_[lu] = concat_[lu].transpose() * dz;
      Mat dc = dz * w_[lu].transpose();
      const Eigen::Index f = dc.cols() / 2;
      dh = dc.leftCols(f) + mean_t_ * dc.rightCols(f);
    }
  }

  ParamRefs param_refs() override {
    ParamRefs r;
    for (auto& w : w_) r.mats.push_back(&w);
    for (auto& b : b_) r.vecs.push_back(&b);
    return r;
  }
  ParamRefs grad_refs() override {
    ParamRefs r;
    for (auto& g : gw_) r.mats.push_back(&g);
    for (auto& g : gb_) r.vecs.push_back(&g);
    return r;
  }

 private:
  SpMat mean_, mean_t_;
  double dropout_;
  std::vector<Mat> w_, gw_;
  std::vector<Vec> b_, gb_;
  std::vector<Mat> concat_, pre_, masks_;
  Mat hidden_, logits_;
};

std::unique_ptr<GnnClassifier> make_classifier(const BackboneConfig& config,
                                               const std::vector<Edge>& edges, std::int64_t n,
                                               int in_dim, int num_classes) {
  config.validate();
  switch (config.arch) {
    case Architecture::gcn:
      return std::make_unique<GcnModel>(edges, n, in_dim, num_classes, config);
    case Architecture::gat:
      return std::make_unique<GatModel>(edges, n, in_dim, num_classes, config);
    case Architecture::sage:
      return std::make_unique<SageModel>(edges, n, in_dim, num_classes, config);
  }
  fail(ErrorKind::invalid_argument, "unknown architecture");
}

const std::vector<std::vector<std::vector<double>>>* gat_attention(const GnnClassifier& model) {
  const auto* gat = dynamic_cast<const GatModel*>(&model);
  return gat ? &gat->attention() : nullptr;
}

// ---------------------------------------------------------------------------
// Optimization and training

AdamOptimizer::AdamOptimizer(GnnClassifier& model, double lr, double weight_decay)
    : model_(model), lr_(lr), weight_decay_(weight_decay) {
  auto refs = model.param_refs();
  for (Mat* w : refs.mats) {
    m_mats_.push_back(Mat::Zero(w->rows(), w->cols()));
    v_mats_.push_back(Mat::Zero(w->rows(), w->cols()));
  }
  for (Vec* b : refs.vecs) {
    m_vecs_.push_back(Vec::Zero(b->size()));
    v_vecs_.push_back(Vec::Zero(b->size()));
  }
}

void AdamOptimizer::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  auto params = model_.param_refs();
  auto grads = model_.grad_refs();
  for (std::size_t i = 0; i < params.mats.size(); ++i) {
    Mat g = *grads.mats[i];
    if (weight_decay_ > 0.0) g += weight_decay_ * (*params.mats[i]);
    m_mats_[i] = beta1_ * m_mats_[i] + (1.0 - beta1_) * g;
    v_mats_[i] = beta2_ * v_mats_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Mat mhat = m_mats_[i] / bc1;
    Mat vhat = v_mats_[i] / bc2;
    *params.mats[i] -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
  }
  for (std::size_t i = 0; i < params.vecs.size(); ++i) {
    Vec g = *grads.vecs[i];
    if (weight_decay_ > 0.0) g += weight_decay_ * (*params.vecs[i]);
    m_vecs_[i] = beta1_ * m_vecs_[i] + (1.0 - beta1_) * g;
    v_vecs_[i] = beta2_ * v_vecs_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    Vec mhat = m_vecs_[i] / bc1;
    Vec vhat = v_vecs_[i] / bc2;
    *params.vecs[i] -= lr_ * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps_).matrix());
  }
}

double nll_loss(const Mat& log_probs, const std::vector<std::int32_t>& labels,
                const std::vector<std::uint8_t>& mask, Mat* dlogits) {
  std::int64_t count = 0;
  for (auto b : mask) count += (b != 0);
  if (count == 0) fail(ErrorKind::invalid_argument, "nll_loss: empty mask");
  double loss = 0.0;
  if (dlogits) *dlogits = Mat::Zero(log_probs.rows(), log_probs.cols());
  for (Eigen::Index i = 0; i < log_probs.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    loss -= log_probs(i, labels[static_cast<std::size_t>(i)]);
    if (dlogits) {
      dlogits->row(i) = log_probs.row(i).array().exp() / static_cast<double>(count);
      (*dlogits)(i, labels[static_cast<std::size_t>(i)]) -= 1.0 / static_cast<double>(count);
    }
  }
  return loss / static_cast<double>(count);
}

double masked_accuracy(const Mat& log_probs, const std::vector<std::int32_t>& labels,
                       const std::vector<std::uint8_t>& mask) {
  std::int64_t count = 0, correct = 0;
  for (Eigen::Index i = 0; i < log_probs.rows(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    ++count;
    Eigen::Index arg;
    log_probs.row(i).maxCoeff(&arg);
    correct += (static_cast<std::int32_t>(arg) == labels[static_cast<std::size_t>(i)]);
  }
  if (count == 0) return 0.0;
  return 100.0 * static_cast<double>(correct) / static_cast<double>(count);
}

TrainedClassifier train_classifier(const TextAttributedGraph& graph,
                                   const BackboneConfig& config) {
  config.validate();
  graph.validate();
  if (graph.count_mask(graph.train_mask) == 0)
    fail(ErrorKind::invalid_argument, "train_classifier: empty train mask");

  TrainedClassifier out;
  std::vector<std::int64_t> per_class(graph.num_classes, 0);
  for (std::int64_t i = 0; i < graph.num_nodes(); ++i)
    if (graph.train_mask[i]) ++per_class[graph.labels[i]];
  for (std::int32_t c = 0; c < graph.num_classes; ++c)
    if (per_class[c] == 0)
      out.report.warnings.push_back("class " + std::to_string(c) + " has no train nodes");

  Mat x = graph.features.cast<double>();
  out.model = make_classifier(config, graph.edges, graph.num_nodes(),
                              static_cast<int>(x.cols()), graph.num_classes);
  out.model->init_params(config.seed);
  AdamOptimizer adam(*out.model, config.learning_rate, config.weight_decay);
  Rng dropout_rng(mix64(config.seed, 0xd20b0d7ULL));

  double best_val = -1.0;
  int since_best = 0;
  const bool have_val = graph.count_mask(graph.val_mask) > 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Mat logp = out.model->forward(x, true, &dropout_rng);
    Mat dlogits;
    double loss = nll_loss(logp, graph.labels, graph.train_mask, &dlogits);
    if (!std::isfinite(loss)) fail(ErrorKind::runtime, "train_classifier: non-finite loss");
    out.report.loss_curve.push_back(loss);
    out.model->backward(dlogits);
    adam.step();
    out.report.epochs_run = epoch;

    Mat eval = out.model->forward(x, false, nullptr);
    double val_acc = masked_accuracy(eval, graph.labels, graph.val_mask);
    if (val_acc > best_val) {
      best_val = val_acc;
      out.report.best_val_acc = val_acc;
      out.report.test_acc = masked_accuracy(eval, graph.labels, graph.test_mask);
      since_best = 0;
    } else if (have_val) {
      if (++since_best >= config.patience) break;
    }
  }
  // Without a validation set the last epoch is the reported one.
  if (!have_val && config.max_epochs > 0) {
    Mat eval = out.model->forward(x, false, nullptr);
    out.report.test_acc = masked_accuracy(eval, graph.labels, graph.test_mask);
  }
  return out;
}

}  // namespace rograd
