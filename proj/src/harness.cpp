#include "rograd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace rograd {

namespace {

std::string fmt(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s;
}

}  // namespace

std::string ResultRow::csv_key() const {
  std::ostringstream ss;
  ss << method << '|' << backbone << '|' << fmt(nra) << '|' << fmt(sha) << '|' << fmt(fda) << '|'
     << fmt(labeled_ratio) << '|' << seed;
  return ss.str();
}

std::string results_csv_header() {
  return "method,backbone,nra,sha,fda,labeled_ratio,intensity,seed,test_acc,runtime_s,status";
}

std::string to_csv_row(const ResultRow& r) {
  std::ostringstream ss;
  ss << r.method << ',' << r.backbone << ',' << fmt(r.nra) << ',' << fmt(r.sha) << ','
     << fmt(r.fda) << ',' << fmt(r.labeled_ratio) << ',';
  char ibuf[16];
  std::snprintf(ibuf, sizeof ibuf, "%.2f", r.intensity);
  ss << ibuf << ',' << r.seed << ',' << fmt(r.test_acc, 10) << ',' << fmt(r.runtime_s, 4) << ','
     << sanitize(r.status);
  return ss.str();
}

std::vector<ResultRow> read_results_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open results csv: " + path);
  std::vector<ResultRow> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line.rfind("method,", 0) == 0) continue;  // header
    }
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) f.push_back(field);
    if (f.size() < 11) fail(ErrorKind::parse, "results csv: expected 11 fields");
    ResultRow r;
    r.method = f[0];
    r.backbone = f[1];
    r.nra = std::stod(f[2]);
    r.sha = std::stod(f[3]);
    r.fda = std::stod(f[4]);
    r.labeled_ratio = std::stod(f[5]);
    r.intensity = std::stod(f[6]);
    r.seed = std::stoull(f[7]);
    r.test_acc = std::stod(f[8]);
    r.runtime_s = std::stod(f[9]);
    r.status = f[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write results csv: " + path);
  out << results_csv_header() << '\n';
  for (const auto& r : rows) out << to_csv_row(r) << '\n';
}

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::io, "cannot write curve csv: " + path);
  out << "intensity,mean_acc,n_cells\n";
  for (const auto& p : curve) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f", p.intensity);
    out << buf << ',' << fmt(p.mean_acc, 10) << ',' << p.n_cells << '\n';
  }
}

std::string RobustnessReport::to_json() const {
  json doc = {{"clean_acc", clean_acc}, {"worst_acc", worst_acc}, {"avg_acc", avg_acc}};
  if (norm_auc)
    doc["norm_auc"] = *norm_auc;
  else
    doc["norm_auc"] = nullptr;
  return doc.dump(2);
}

double RepresentationQualityReport::mean_intra() const {
  if (intra_variance.empty()) return 0.0;
  double s = 0.0;
  for (double v : intra_variance) s += v;
  return s / static_cast<double>(intra_variance.size());
}

double RepresentationQualityReport::min_margin() const {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < margins.rows(); ++i)
    for (Eigen::Index j = i + 1; j < margins.cols(); ++j) best = std::min(best, margins(i, j));
  return std::isfinite(best) ? best : 0.0;
}

RepresentationQualityReport representation_quality(const Mat& embeddings,
                                                   const std::vector<std::int32_t>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != embeddings.rows())
    fail(ErrorKind::invalid_argument, "representation_quality: label count mismatch");
  if (labels.empty()) fail(ErrorKind::invalid_argument, "representation_quality: empty input");
  std::int32_t num_classes = *std::max_element(labels.begin(), labels.end()) + 1;

  std::vector<std::int64_t> counts(static_cast<std::size_t>(num_classes), 0);
  Mat centroids = Mat::Zero(num_classes, embeddings.cols());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0) fail(ErrorKind::invalid_argument, "representation_quality: negative label");
    centroids.row(labels[i]) += embeddings.row(static_cast<Eigen::Index>(i));
    ++counts[static_cast<std::size_t>(labels[i])];
  }
  for (std::int32_t c = 0; c < num_classes; ++c) {
    if (counts[static_cast<std::size_t>(c)] == 0)
      fail(ErrorKind::invalid_argument,
           "representation_quality: class " + std::to_string(c) + " is empty");
    centroids.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
  }

  RepresentationQualityReport rep;
  rep.intra_variance.assign(static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double d2 =
        (embeddings.row(static_cast<Eigen::Index>(i)) - centroids.row(labels[i])).squaredNorm();
    rep.intra_variance[static_cast<std::size_t>(labels[i])] += d2;
  }
  for (std::int32_t c = 0; c < num_classes; ++c)
    rep.intra_variance[static_cast<std::size_t>(c)] /=
        static_cast<double>(counts[static_cast<std::size_t>(c)]);

  rep.margins = Mat::Zero(num_classes, num_classes);
  for (std::int32_t a = 0; a < num_classes; ++a)
    for (std::int32_t b = a + 1; b < num_classes; ++b) {
      double d = (centroids.row(a) - centroids.row(b)).norm();
      rep.margins(a, b) = d;
      rep.margins(b, a) = d;
    }
  return rep;
}

std::vector<CurvePoint> aggregate_by_intensity(const std::vector<ResultRow>& rows) {
  if (rows.empty()) fail(ErrorKind::invalid_argument, "aggregate_by_intensity: no rows");
  std::map<std::int64_t, std::pair<double, int>> groups;  // label*100 -> (sum, n)
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    auto key = static_cast<std::int64_t>(std::llround(intensity_label(r.intensity) * 100.0));
    auto& g = groups[key];
    g.first += r.test_acc;
    g.second += 1;
  }
  std::vector<CurvePoint> curve;
  for (const auto& [key, g] : groups)
    curve.push_back({static_cast<double>(key) / 100.0, g.first / g.second, g.second});
  return curve;  // std::map iteration is already ascending
}

RobustnessReport robustness_metrics(const std::vector<CurvePoint>& curve) {
  if (curve.empty()) fail(ErrorKind::invalid_argument, "robustness_metrics: empty curve");
  RobustnessReport rep;
  bool have_clean = false;
  double worst = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (const auto& p : curve) {
    if (p.intensity == 0.0) {
      have_clean = true;
      rep.clean_acc = p.mean_acc;
    }
    worst = std::min(worst, p.mean_acc);
    sum += p.mean_acc;
  }
  if (!have_clean)
    fail(ErrorKind::invalid_argument, "robustness_metrics: curve lacks the intensity-0 point");
  rep.worst_acc = worst;
  rep.avg_acc = sum / static_cast<double>(curve.size());

  if (curve.size() >= 2) {
    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
      double dx = curve[i].intensity - curve[i - 1].intensity;
      area += 0.5 * dx * (curve[i].mean_acc + curve[i - 1].mean_acc) / 100.0;
    }
    double span = curve.back().intensity - curve.front().intensity;
    rep.norm_auc = area / span;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Cell execution

namespace {

double classify_accuracy(const TextAttributedGraph& graph, BackboneConfig config,
                         std::uint64_t seed) {
  config.seed = mix64(seed, 0xbac7b0eULL);
  TrainedClassifier trained = train_classifier(graph, config);
  return trained.report.test_acc;
}

}  // namespace

ResultRow run_cell(const TextAttributedGraph& base, const PipelineConfig& pipeline,
                   const std::string& method, const AttackSpec& spec,
                   std::pair<RepresentationQualityReport, RepresentationQualityReport>* quality_out) {
  ResultRow row;
  row.method = method;
  row.backbone = architecture_name(pipeline.backbone.arch);
  row.nra = spec.nra_ratio;
  row.sha = spec.sha_ratio;
  row.fda = spec.fda_ratio;
  row.labeled_ratio = spec.labeled_ratio;
  row.intensity = intensity_label(spec);
  row.seed = spec.seed;

  auto t0 = std::chrono::steady_clock::now();
  try {
    AttackedGraph attacked = apply_compound(base, spec);

    const bool degenerate = pipeline.samples_per_class == 0 && pipeline.r2cl.epochs == 0;
    if (method == "vanilla" || degenerate) {
      row.test_acc = classify_accuracy(attacked.graph, pipeline.backbone, spec.seed);
    } else if (method == "rograd") {
      auto encoder = pipeline.make_encoder();
      LlmGateway gateway(pipeline.make_llm_backend(), pipeline.gateway);

      TextAttributedGraph working = pipeline.unified_embeddings
                                        ? unify_embeddings(attacked.graph, *encoder)
                                        : attacked.graph;
      EmbeddingStore store = build_store(working, *encoder);

      std::vector<ClassCount> plan;
      for (std::int32_t c = 0; c < working.num_classes; ++c) {
        if (!store.has_class(c, EntryKind::original)) continue;  // class wiped out by NRA
        plan.push_back({c, working.class_name(c), pipeline.samples_per_class});
      }
      auto texts = [&working](const std::string& id) {
        std::int32_t idx = working.index_of(id);
        if (idx < 0) fail(ErrorKind::invalid_argument, "unknown store id: " + id);
        return working.texts[static_cast<std::size_t>(idx)];
      };
      SggmConfig sggm_cfg = pipeline.sggm;
      auto samples = generate_batch(plan, store, gateway, pipeline.prompts, *encoder, sggm_cfg,
                                    mix64(spec.seed, 0x5997c3edULL), texts);

      EnrichedGraph enriched = enrich(working, samples, pipeline.enrichment);

      R2clConfig r2cl_cfg = pipeline.r2cl;
      r2cl_cfg.seed = mix64(spec.seed, 0x2c1c3edULL);
      R2clResult refined =
          train_r2cl(enriched.graph, r2cl_cfg, gateway, pipeline.prompts, *encoder);

      if (quality_out) {
        std::vector<std::int32_t> original_labels;
        std::vector<Eigen::Index> original_rows;
        for (std::int64_t i = 0; i < enriched.graph.num_nodes(); ++i) {
          if (enriched.graph.node_origin[i] != NodeOrigin::original) continue;
          original_labels.push_back(enriched.graph.labels[i]);
          original_rows.push_back(i);
        }
        Mat before(static_cast<Eigen::Index>(original_rows.size()), enriched.graph.features.cols());
        Mat after(static_cast<Eigen::Index>(original_rows.size()), refined.projections.cols());
        for (std::size_t r = 0; r < original_rows.size(); ++r) {
          before.row(static_cast<Eigen::Index>(r)) =
              enriched.graph.features.row(original_rows[r]).cast<double>();
          after.row(static_cast<Eigen::Index>(r)) = refined.projections.row(original_rows[r]);
        }
        quality_out->first = representation_quality(before, original_labels);
        quality_out->second = representation_quality(after, original_labels);
      }

      row.test_acc = classify_accuracy(refined.refined_graph, pipeline.backbone, spec.seed);
    } else {
      fail(ErrorKind::invalid_argument, "unknown method: " + method);
    }
  } catch (const Error& e) {
    row.status = e.what();
    row.test_acc = std::numeric_limits<double>::quiet_NaN();
  } catch (const std::exception& e) {
    row.status = e.what();
    row.test_acc = std::numeric_limits<double>::quiet_NaN();
  }
  row.runtime_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return row;
}

GridResult run_grid(const GridConfig& grid, const std::string& out_dir) {
  grid.validate();
  fs::create_directories(out_dir);
  TextAttributedGraph base = load_graph(grid.manifest_path);

  struct Cell {
    AttackSpec spec;
    std::size_t index;
  };
  std::vector<Cell> cells;
  std::size_t idx = 0;
  for (double nra : grid.nra)
    for (double sha : grid.sha)
      for (double fda : grid.fda)
        for (double lab : grid.labeled)
          for (int s = 0; s < grid.seeds; ++s) {
            AttackSpec spec;
            spec.nra_ratio = nra;
            spec.sha_ratio = sha;
            spec.fda_ratio = fda;
            spec.labeled_ratio = lab;
            // Seed from the cell coordinates, not the enumeration index, so
            // resuming with edited ratio lists replays identical cells.
            std::ostringstream coord;
            coord << fmt(nra) << '|' << fmt(sha) << '|' << fmt(fda) << '|' << fmt(lab) << '|' << s;
            spec.seed = mix64(grid.base_seed, hash_str(coord.str()));
            cells.push_back({spec, idx});
            ++idx;
          }

  const std::string results_path = (fs::path(out_dir) / "results.csv").string();
  std::vector<ResultRow> done;
  if (grid.resume && fs::exists(results_path)) done = read_results_csv(results_path);
  std::map<std::string, ResultRow> by_key;
  for (auto& r : done) by_key[r.csv_key()] = r;

  std::vector<Cell> todo;
  for (const auto& c : cells) {
    ResultRow probe;
    probe.method = grid.method;
    probe.backbone = architecture_name(grid.pipeline.backbone.arch);
    probe.nra = c.spec.nra_ratio;
    probe.sha = c.spec.sha_ratio;
    probe.fda = c.spec.fda_ratio;
    probe.labeled_ratio = c.spec.labeled_ratio;
    probe.seed = c.spec.seed;
    auto it = by_key.find(probe.csv_key());
    if (it != by_key.end() && it->second.status == "ok") continue;
    todo.push_back(c);
  }

  std::ofstream quality_stream;
  std::mutex io_mutex;
  if (grid.emit_quality && grid.method == "rograd") {
    quality_stream.open((fs::path(out_dir) / "quality.csv").string());
    quality_stream << "nra,sha,fda,labeled_ratio,seed,mean_intra_before,mean_intra_after,"
                      "min_margin_before,min_margin_after\n";
  }

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= todo.size()) return;
      const Cell& cell = todo[i];
      std::pair<RepresentationQualityReport, RepresentationQualityReport> quality;
      bool want_quality = grid.emit_quality && grid.method == "rograd";
      ResultRow row = run_cell(base, grid.pipeline, grid.method, cell.spec,
                               want_quality ? &quality : nullptr);
      std::lock_guard<std::mutex> lock(io_mutex);
      by_key[row.csv_key()] = row;
      if (want_quality && row.status == "ok") {
        quality_stream << row.nra << ',' << row.sha << ',' << row.fda << ',' << row.labeled_ratio
                       << ',' << row.seed << ',' << quality.first.mean_intra() << ','
                       << quality.second.mean_intra() << ',' << quality.first.min_margin() << ','
                       << quality.second.min_margin() << '\n';
      }
    }
  };
  if (grid.jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int t = 0; t < grid.jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  GridResult result;
  for (const auto& c : cells) {
    ResultRow probe;
    probe.method = grid.method;
    probe.backbone = architecture_name(grid.pipeline.backbone.arch);
    probe.nra = c.spec.nra_ratio;
    probe.sha = c.spec.sha_ratio;
    probe.fda = c.spec.fda_ratio;
    probe.labeled_ratio = c.spec.labeled_ratio;
    probe.seed = c.spec.seed;
    auto it = by_key.find(probe.csv_key());
    if (it == by_key.end()) continue;
    result.rows.push_back(it->second);
    if (it->second.status != "ok") ++result.failed_cells;
  }
  write_results_csv(results_path, result.rows);

  result.curve = aggregate_by_intensity(result.rows);
  write_curve_csv((fs::path(out_dir) / "curve.csv").string(), result.curve);
  if (!result.curve.empty()) {
    result.report = robustness_metrics(result.curve);
    std::ofstream rep((fs::path(out_dir) / "robustness.json").string());
    rep << result.report.to_json() << '\n';
  }
  return result;
}

}  // namespace rograd
