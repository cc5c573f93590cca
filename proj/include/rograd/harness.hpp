#pragma once

#include <optional>

#include "rograd/attacks.hpp"
#include "rograd/config.hpp"

namespace rograd {

struct ResultRow {
  std::string method;
  std::string backbone;
  double nra = 0.0, sha = 0.0, fda = 0.0, labeled_ratio = 0.6;
  double intensity = 0.0;  // two-decimal label
  std::uint64_t seed = 0;
  double test_acc = 0.0;  // percent; NaN on failure
  double runtime_s = 0.0;
  std::string status = "ok";  // "ok" or the error message

  std::string csv_key() const;  // identifies a cell for resume
};

std::string results_csv_header();
std::string to_csv_row(const ResultRow& row);
std::vector<ResultRow> read_results_csv(const std::string& path);
void write_results_csv(const std::string& path, const std::vector<ResultRow>& rows);

struct CurvePoint {
  double intensity = 0.0;
  double mean_acc = 0.0;
  int n_cells = 0;
};

struct RobustnessReport {
  double clean_acc = 0.0;
  double worst_acc = 0.0;
  double avg_acc = 0.0;
  std::optional<double> norm_auc;  // needs >= 2 curve points

  std::string to_json() const;
};

struct RepresentationQualityReport {
  std::vector<double> intra_variance;  // per class
  Mat margins;                         // symmetric, zero diagonal

  double mean_intra() const;
  double min_margin() const;
};

// One grid cell end to end: attack, then either the plain classifier
// (vanilla) or generation -> enrichment -> contrastive refinement ->
// classifier on the refined graph (rograd). A rograd run with zero generated
// samples and zero refinement epochs degenerates to the vanilla path.
// `quality_out`, when non-null and the method is rograd, receives the
// representation-quality reports before and after refinement.
ResultRow run_cell(const TextAttributedGraph& base, const PipelineConfig& pipeline,
                   const std::string& method, const AttackSpec& spec,
                   std::pair<RepresentationQualityReport, RepresentationQualityReport>*
                       quality_out = nullptr);

// Groups rows by two-decimal intensity label; unweighted mean per group,
// ascending. Failed rows are skipped.
std::vector<CurvePoint> aggregate_by_intensity(const std::vector<ResultRow>& rows);

// clean = value at intensity 0 (error when absent), worst = min, avg =
// unweighted mean over curve points, norm_auc = trapezoidal area of acc/100
// over [0, I_max] divided by I_max.
RobustnessReport robustness_metrics(const std::vector<CurvePoint>& curve);

// Per-class variance around the class centroid and pairwise centroid
// distances. Every class in [0, max_label] must have a member.
RepresentationQualityReport representation_quality(const Mat& embeddings,
                                                   const std::vector<std::int32_t>& labels);

struct GridResult {
  std::vector<ResultRow> rows;
  std::vector<CurvePoint> curve;
  RobustnessReport report;
  int failed_cells = 0;
};

// All cells x seeds with per-cell seeds derived from the grid seed; resumable
// and optionally parallel. Persists results.csv, curve.csv, robustness.json
// (and quality.csv when enabled) under out_dir.
GridResult run_grid(const GridConfig& grid, const std::string& out_dir);

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

}  // namespace rograd
