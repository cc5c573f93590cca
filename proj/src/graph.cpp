#include "rograd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace rograd {

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_tsv_line(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (out.size() + 1 < max_fields) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) break;
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  out.push_back(line.substr(start));
  return out;
}

std::string resolve(const fs::path& base_dir, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute()) return path.string();
  return (base_dir / path).string();
}

}  // namespace

std::int64_t TextAttributedGraph::count_mask(const std::vector<std::uint8_t>& mask) const {
  std::int64_t n = 0;
  for (auto b : mask) n += (b != 0);
  return n;
}

std::int32_t TextAttributedGraph::index_of(const std::string& id) const {
  if (id_index_.size() != node_ids.size()) {
    id_index_.clear();
    for (std::size_t i = 0; i < node_ids.size(); ++i)
      id_index_[node_ids[i]] = static_cast<std::int32_t>(i);
  }
  auto it = id_index_.find(id);
  return it == id_index_.end() ? -1 : it->second;
}

const std::string& TextAttributedGraph::class_name(std::int32_t cls) const {
  if (cls < 0 || cls >= static_cast<std::int32_t>(class_names.size()))
    fail(ErrorKind::invalid_argument, "class index out of range: " + std::to_string(cls));
  return class_names[cls];
}

void TextAttributedGraph::validate() const {
  const std::int64_t n = num_nodes();
  if (static_cast<std::int64_t>(texts.size()) != n ||
      static_cast<std::int64_t>(labels.size()) != n || features.rows() != n)
    fail(ErrorKind::invalid_argument, "graph row counts disagree across ids/texts/labels/features");
  if (static_cast<std::int64_t>(train_mask.size()) != n ||
      static_cast<std::int64_t>(val_mask.size()) != n ||
      static_cast<std::int64_t>(test_mask.size()) != n ||
      static_cast<std::int64_t>(feature_missing.size()) != n ||
      static_cast<std::int64_t>(node_origin.size()) != n)
    fail(ErrorKind::invalid_argument, "graph mask/flag vectors have wrong length");
  if (num_classes <= 0) fail(ErrorKind::invalid_argument, "num_classes must be positive");
  if (static_cast<std::int32_t>(class_names.size()) != num_classes)
    fail(ErrorKind::invalid_argument, "class_names size does not match num_classes");

  std::set<std::string> seen;
  for (const auto& id : node_ids) {
    if (!seen.insert(id).second) fail(ErrorKind::invalid_argument, "duplicate node id: " + id);
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes)
      fail(ErrorKind::invalid_argument,
           "label out of range for node " + node_ids[i] + ": " + std::to_string(labels[i]));
    int roles = (train_mask[i] != 0) + (val_mask[i] != 0) + (test_mask[i] != 0);
    if (roles > 1)
      fail(ErrorKind::invalid_argument, "masks overlap at node " + node_ids[i]);
  }
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [u, v] = edges[e];
    if (u < 0 || v < 0 || u >= n || v >= n)
      fail(ErrorKind::invalid_argument, "edge endpoint out of range");
    if (u == v) fail(ErrorKind::invalid_argument, "self-loop in stored edge set");
    if (u > v) fail(ErrorKind::invalid_argument, "edge not stored canonically (u < v)");
    if (e > 0 && !(edges[e - 1] < edges[e]))
      fail(ErrorKind::invalid_argument, "edges not sorted/unique");
  }
}

std::vector<std::vector<std::int32_t>> TextAttributedGraph::adjacency() const {
  std::vector<std::vector<std::int32_t>> adj(node_ids.size());
  for (auto [u, v] : edges) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
  return adj;
}

std::vector<Edge> canonicalize_edges(std::vector<Edge> edges, LoadStats* stats) {
  std::int64_t self_loops = 0;
  std::vector<Edge> out;
  out.reserve(edges.size());
  for (auto [u, v] : edges) {
    if (u == v) {
      ++self_loops;
      continue;
    }
    out.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(out.begin(), out.end());
  auto last = std::unique(out.begin(), out.end());
  std::int64_t dups = std::distance(last, out.end());
  out.erase(last, out.end());
  if (stats) {
    stats->duplicate_edges += dups;
    stats->self_loops += self_loops;
  }
  return out;
}

DatasetManifest read_manifest(const std::string& manifest_path) {
  json doc;
  try {
    doc = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("manifest parse error: ") + e.what());
  }
  DatasetManifest m;
  try {
    m.name = doc.at("name").get<std::string>();
    m.num_classes = doc.at("num_classes").get<std::int32_t>();
    fs::path base = fs::path(manifest_path).parent_path();
    m.nodes_path = resolve(base, doc.at("nodes").get<std::string>());
    m.edges_path = resolve(base, doc.at("edges").get<std::string>());
    m.features_path = resolve(base, doc.at("features").get<std::string>());
    if (doc.contains("state")) m.state_path = resolve(base, doc.at("state").get<std::string>());
    if (doc.contains("class_names"))
      m.class_names = doc.at("class_names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("manifest field error: ") + e.what());
  }
  return m;
}

void write_feature_matrix(const std::string& path, const Eigen::MatrixXf& m) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".csv") {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write " + path);
    char buf[64];
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        // 9 significant digits round-trip float32 exactly.
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(m(i, j)));
        out << (j ? "," : "") << buf;
      }
      out << '\n';
    }
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot write " + path);
  out.write("RGFT0001", 8);
  std::uint64_t rows = static_cast<std::uint64_t>(m.rows());
  std::uint64_t cols = static_cast<std::uint64_t>(m.cols());
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  std::vector<float> row(cols);
  for (std::uint64_t i = 0; i < rows; ++i) {
    for (std::uint64_t j = 0; j < cols; ++j) row[j] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(float)));
  }
  if (!out) fail(ErrorKind::io, "short write: " + path);
}

Eigen::MatrixXf read_feature_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open features: " + path);
  char magic[8] = {};
  in.read(magic, 8);
  if (in.gcount() == 8 && std::memcmp(magic, "RGFT0001", 8) == 0) {
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), 8);
    in.read(reinterpret_cast<char*>(&cols), 8);
    if (!in) fail(ErrorKind::parse, "truncated feature header: " + path);
    Eigen::MatrixXf m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::vector<float> row(cols);
    for (std::uint64_t i = 0; i < rows; ++i) {
      in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(cols * sizeof(float)));
      if (!in) fail(ErrorKind::parse, "truncated feature rows: " + path);
      for (std::uint64_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return m;
  }
  // CSV fallback.
  in.close();
  std::ifstream csv(path);
  if (!csv) fail(ErrorKind::io, "cannot open features: " + path);
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::vector<float> vals;
    const char* p = line.c_str();
    char* end = nullptr;
    for (;;) {
      float v = std::strtof(p, &end);
      if (end == p) fail(ErrorKind::parse, "bad feature value in " + path);
      vals.push_back(v);
      p = end;
      while (*p == ' ') ++p;
      if (*p == ',') {
        ++p;
        continue;
      }
      break;
    }
    if (!rows.empty() && rows.front().size() != vals.size())
      fail(ErrorKind::parse, "inconsistent feature dimension in " + path);
    rows.push_back(std::move(vals));
  }
  Eigen::MatrixXf m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

TextAttributedGraph load_graph(const DatasetManifest& manifest, LoadStats* stats) {
  TextAttributedGraph g;
  g.name = manifest.name;
  g.num_classes = manifest.num_classes;
  if (!manifest.class_names.empty()) {
    if (static_cast<std::int32_t>(manifest.class_names.size()) != manifest.num_classes)
      fail(ErrorKind::parse, "manifest class_names size mismatch");
    g.class_names = manifest.class_names;
  } else {
    for (std::int32_t c = 0; c < manifest.num_classes; ++c)
      g.class_names.push_back("class_" + std::to_string(c));
  }

  {
    std::ifstream in(manifest.nodes_path);
    if (!in) fail(ErrorKind::io, "cannot open node table: " + manifest.nodes_path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      auto fields = split_tsv_line(line, 4);
      if (fields.size() < 3)
        fail(ErrorKind::parse, "node table line " + std::to_string(lineno) + ": expected id<TAB>label<TAB>text");
      g.node_ids.push_back(fields[0]);
      try {
        g.labels.push_back(static_cast<std::int32_t>(std::stol(fields[1])));
      } catch (const std::exception&) {
        fail(ErrorKind::parse, "node table line " + std::to_string(lineno) + ": bad label");
      }
      g.texts.push_back(fields[2]);
      if (fields.size() >= 4 && fields[3] == "generated")
        g.node_origin.push_back(NodeOrigin::generated);
      else
        g.node_origin.push_back(NodeOrigin::original);
    }
  }
  const std::int64_t n = g.num_nodes();

  g.features = read_feature_matrix(manifest.features_path);
  if (g.features.rows() != n)
    fail(ErrorKind::parse, "feature row count " + std::to_string(g.features.rows()) +
                               " does not match node count " + std::to_string(n));

  {
    std::ifstream in(manifest.edges_path);
    if (!in) fail(ErrorKind::io, "cannot open edge list: " + manifest.edges_path);
    std::vector<Edge> raw;
    std::string a, b;
    while (in >> a >> b) {
      std::int32_t ia = g.index_of(a);
      std::int32_t ib = g.index_of(b);
      if (ia < 0 || ib < 0)
        fail(ErrorKind::parse, "edge references unknown node: " + a + " " + b);
      raw.emplace_back(ia, ib);
    }
    g.edges = canonicalize_edges(std::move(raw), stats);
  }

  g.train_mask.assign(n, 0);
  g.val_mask.assign(n, 0);
  g.test_mask.assign(n, 0);
  g.feature_missing.assign(n, 0);

  if (!manifest.state_path.empty()) {
    std::ifstream in(manifest.state_path);
    if (!in) fail(ErrorKind::io, "cannot open state file: " + manifest.state_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto fields = split_tsv_line(line, 4);
      if (fields.size() != 4) fail(ErrorKind::parse, "state file: expected 4 TSV fields");
      std::int32_t i = g.index_of(fields[0]);
      if (i < 0) fail(ErrorKind::parse, "state file references unknown node: " + fields[0]);
      if (fields[1] == "train") g.train_mask[i] = 1;
      else if (fields[1] == "val") g.val_mask[i] = 1;
      else if (fields[1] == "test") g.test_mask[i] = 1;
      else if (fields[1] != "none") fail(ErrorKind::parse, "state file: bad split " + fields[1]);
      g.node_origin[i] = (fields[2] == "generated") ? NodeOrigin::generated : NodeOrigin::original;
      g.feature_missing[i] = (fields[3] == "1") ? 1 : 0;
    }
  }

  g.validate();
  return g;
}

TextAttributedGraph load_graph(const std::string& manifest_path, LoadStats* stats) {
  return load_graph(read_manifest(manifest_path), stats);
}

std::string save_graph(const TextAttributedGraph& graph, const std::string& dir,
                       const std::string& name) {
  graph.validate();
  fs::create_directories(dir);
  fs::path base(dir);
  std::string nodes_file = name + ".nodes.tsv";
  std::string edges_file = name + ".edges.txt";
  std::string feats_file = name + ".features.bin";
  std::string state_file = name + ".state.tsv";

  {
    std::ofstream out(base / nodes_file);
    if (!out) fail(ErrorKind::io, "cannot write node table");
    for (std::int64_t i = 0; i < graph.num_nodes(); ++i) {
      out << graph.node_ids[i] << '\t' << graph.labels[i] << '\t' << graph.texts[i] << '\t'
          << (graph.node_origin[i] == NodeOrigin::generated ? "generated" : "original") << '\n';
    }
  }
  {
    std::ofstream out(base / edges_file);
    if (!out) fail(ErrorKind::io, "cannot write edge list");
    for (auto [u, v] : graph.edges) out << graph.node_ids[u] << ' ' << graph.node_ids[v] << '\n';
  }
  write_feature_matrix((base / feats_file).string(), graph.features);
  {
    std::ofstream out(base / state_file);
    if (!out) fail(ErrorKind::io, "cannot write state file");
    for (std::int64_t i = 0; i < graph.num_nodes(); ++i) {
      const char* split = graph.train_mask[i] ? "train"
                          : graph.val_mask[i] ? "val"
                          : graph.test_mask[i] ? "test"
                                               : "none";
      out << graph.node_ids[i] << '\t' << split << '\t'
          << (graph.node_origin[i] == NodeOrigin::generated ? "generated" : "original") << '\t'
          << int(graph.feature_missing[i]) << '\n';
    }
  }

  json doc = {{"name", graph.name.empty() ? name : graph.name},
              {"num_classes", graph.num_classes},
              {"nodes", nodes_file},
              {"edges", edges_file},
              {"features", feats_file},
              {"state", state_file},
              {"class_names", graph.class_names}};
  std::string manifest_path = (base / (name + ".manifest.json")).string();
  std::ofstream out(manifest_path);
  if (!out) fail(ErrorKind::io, "cannot write manifest");
  out << doc.dump(2) << '\n';
  return manifest_path;
}

namespace {

// Largest-remainder apportionment of `total` slots over per-class pools.
// Classes with empty pools get nothing. When total covers all classes that
// have members, every such class receives at least one slot.
std::vector<std::int64_t> apportion(const std::vector<std::int64_t>& pool_sizes,
                                    std::int64_t total) {
  const std::size_t c = pool_sizes.size();
  std::vector<std::int64_t> alloc(c, 0);
  std::int64_t pool_total = 0;
  std::size_t present = 0;
  for (auto s : pool_sizes) {
    pool_total += s;
    present += (s > 0);
  }
  if (pool_total == 0 || total <= 0) return alloc;
  if (total > pool_total) total = pool_total;

  std::vector<double> remainder(c, 0.0);
  std::int64_t assigned = 0;
  for (std::size_t k = 0; k < c; ++k) {
    if (pool_sizes[k] == 0) continue;
    double quota = static_cast<double>(total) * static_cast<double>(pool_sizes[k]) /
                   static_cast<double>(pool_total);
    alloc[k] = static_cast<std::int64_t>(quota);
    remainder[k] = quota - static_cast<double>(alloc[k]);
    assigned += alloc[k];
  }
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < c; ++k)
    if (pool_sizes[k] > 0) order.push_back(k);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainder[a] > remainder[b];
  });
  for (std::size_t i = 0; assigned < total; i = (i + 1) % order.size()) {
    std::size_t k = order[i];
    if (alloc[k] < pool_sizes[k]) {
      ++alloc[k];
      ++assigned;
    }
  }
  // Minimum one per present class when the budget allows it.
  if (total >= static_cast<std::int64_t>(present)) {
    for (std::size_t k = 0; k < c; ++k) {
      if (pool_sizes[k] == 0 || alloc[k] > 0) continue;
      // Take one slot from the largest allocation that can spare it.
      std::size_t donor = c;
      for (std::size_t j = 0; j < c; ++j)
        if (alloc[j] > 1 && (donor == c || alloc[j] > alloc[donor])) donor = j;
      if (donor == c) break;
      --alloc[donor];
      ++alloc[k];
    }
  }
  return alloc;
}

// Stratified draw of `total` nodes from `pool` (indices into the graph),
// deterministic per rng state. Returns selected node indices.
std::vector<std::int32_t> stratified_draw(const TextAttributedGraph& graph,
                                          const std::vector<std::int32_t>& pool,
                                          std::int64_t total, Rng& rng) {
  std::vector<std::vector<std::int32_t>> by_class(graph.num_classes);
  for (auto i : pool) by_class[graph.labels[i]].push_back(i);
  std::vector<std::int64_t> pool_sizes(graph.num_classes);
  for (std::int32_t c = 0; c < graph.num_classes; ++c)
    pool_sizes[c] = static_cast<std::int64_t>(by_class[c].size());
  auto alloc = apportion(pool_sizes, total);

  std::vector<std::int32_t> selected;
  for (std::int32_t c = 0; c < graph.num_classes; ++c) {
    auto take = rng.permutation_prefix(by_class[c].size(), static_cast<std::size_t>(alloc[c]));
    for (auto idx : take) selected.push_back(by_class[c][idx]);
  }
  std::sort(selected.begin(), selected.end());
  return selected;
}

}  // namespace

MaskSet split_masks(const TextAttributedGraph& graph, double train_fraction,
                    std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 0.6))
    fail(ErrorKind::invalid_argument, "train_fraction must be in (0, 0.6]");
  const std::int64_t n = graph.num_nodes();
  const auto target_val = static_cast<std::int64_t>(std::llround(0.2 * static_cast<double>(n)));
  const auto target_train =
      static_cast<std::int64_t>(std::llround(train_fraction * static_cast<double>(n)));

  Rng rng(mix64(seed, 0x5eedc0defULL));
  std::vector<std::int32_t> pool(n);
  for (std::int64_t i = 0; i < n; ++i) pool[i] = static_cast<std::int32_t>(i);

  MaskSet m;
  m.train.assign(n, 0);
  m.val.assign(n, 0);
  m.test.assign(n, 0);

  auto take = [&](std::int64_t count, std::vector<std::uint8_t>& mask) {
    auto chosen = stratified_draw(graph, pool, count, rng);
    for (auto i : chosen) mask[i] = 1;
    std::vector<std::int32_t> rest;
    rest.reserve(pool.size());
    for (auto i : pool)
      if (!mask[i]) rest.push_back(i);
    pool = std::move(rest);
  };
  take(target_val, m.val);
  take(target_val, m.test);
  if (target_train > static_cast<std::int64_t>(pool.size()))
    fail(ErrorKind::invalid_argument,
         "train_fraction exceeds the pool left after val/test reservation");
  take(target_train, m.train);
  return m;
}

std::vector<std::uint8_t> draw_train_mask(const TextAttributedGraph& graph,
                                          double labeled_ratio, std::uint64_t seed) {
  if (!(labeled_ratio > 0.0 && labeled_ratio <= 0.6))
    fail(ErrorKind::invalid_argument, "labeled_ratio must be in (0, 0.6]");
  const std::int64_t n = graph.num_nodes();
  std::vector<std::int32_t> pool;
  for (std::int64_t i = 0; i < n; ++i)
    if (!graph.val_mask[i] && !graph.test_mask[i]) pool.push_back(static_cast<std::int32_t>(i));
  if (pool.empty())
    fail(ErrorKind::invalid_argument, "no nodes left outside val/test to label");
  // labeled_ratio 0.6 is the clean reference: it labels the whole pool.
  const auto target = static_cast<std::int64_t>(
      std::llround(static_cast<double>(pool.size()) * labeled_ratio / 0.6));
  Rng rng(mix64(seed, 0x7a61b3a5e11ULL));
  std::vector<std::uint8_t> mask(n, 0);
  auto chosen = stratified_draw(graph, pool, target, rng);
  for (auto i : chosen) mask[i] = 1;
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t b) { return b != 0; }))
    fail(ErrorKind::invalid_argument, "labeled ratio leaves the train mask empty");
  return mask;
}

TextAttributedGraph with_masks(TextAttributedGraph graph, MaskSet masks) {
  graph.train_mask = std::move(masks.train);
  graph.val_mask = std::move(masks.val);
  graph.test_mask = std::move(masks.test);
  graph.validate();
  return graph;
}

TextAttributedGraph remove_nodes(const TextAttributedGraph& graph,
                                 const std::vector<std::string>& ids) {
  const std::int64_t n = graph.num_nodes();
  std::vector<std::uint8_t> drop(n, 0);
  for (const auto& id : ids) {
    std::int32_t i = graph.index_of(id);
    if (i < 0) fail(ErrorKind::invalid_argument, "remove_nodes: unknown id " + id);
    drop[i] = 1;
  }

  TextAttributedGraph out;
  out.name = graph.name;
  out.num_classes = graph.num_classes;
  out.class_names = graph.class_names;
  std::vector<std::int32_t> remap(n, -1);
  std::int64_t kept = 0;
  for (std::int64_t i = 0; i < n; ++i)
    if (!drop[i]) remap[i] = static_cast<std::int32_t>(kept++);

  out.features.resize(kept, graph.features.cols());
  for (std::int64_t i = 0; i < n; ++i) {
    if (drop[i]) continue;
    out.node_ids.push_back(graph.node_ids[i]);
    out.texts.push_back(graph.texts[i]);
    out.labels.push_back(graph.labels[i]);
    out.train_mask.push_back(graph.train_mask[i]);
    out.val_mask.push_back(graph.val_mask[i]);
    out.test_mask.push_back(graph.test_mask[i]);
    out.feature_missing.push_back(graph.feature_missing[i]);
    out.node_origin.push_back(graph.node_origin[i]);
    out.features.row(remap[i]) = graph.features.row(i);
  }
  for (auto [u, v] : graph.edges) {
    if (drop[u] || drop[v]) continue;
    out.edges.emplace_back(remap[u], remap[v]);
  }
  std::sort(out.edges.begin(), out.edges.end());
  out.validate();
  return out;
}

}  // namespace rograd
