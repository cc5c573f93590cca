#pragma once

#include <cstdint>
#include <string>

#include "rograd/graph.hpp"

namespace rograd {

// The four deficiency knobs. labeled_ratio 0.6 is the intensity-zero
// reference point.
struct AttackSpec {
  double nra_ratio = 0.0;
  double sha_ratio = 0.0;
  double fda_ratio = 0.0;
  double labeled_ratio = 0.6;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static AttackSpec from_json(const std::string& text);
};

struct AttackProvenance {
  std::int64_t nodes_removed = 0;
  std::int64_t same_class_edges_removed = 0;
  std::int64_t feature_rows_zeroed = 0;
  std::int64_t labels_withheld = 0;  // train-mask shrinkage through SSA

  std::string to_csv_row() const;
  static std::string csv_header();
};

struct AttackedGraph {
  TextAttributedGraph graph;
  AttackProvenance provenance;
};

enum class AttackStage { nra, sha, fda, ssa };

// Deterministic per-stage sub-seed so a single attack at the derived seed
// reproduces its slice of a compound run.
std::uint64_t attack_subseed(std::uint64_t seed, AttackStage stage);

// Removes floor(ratio * |eligible|) nodes drawn uniformly from the non-val,
// non-test pool. Val/test nodes always survive.
AttackedGraph apply_nra(const TextAttributedGraph& graph, double ratio, std::uint64_t seed);

// Removes floor(ratio * |E_same|) edges drawn uniformly from the same-label
// edges; cross-class edges are untouched.
AttackedGraph apply_sha(const TextAttributedGraph& graph, double ratio, std::uint64_t seed);

// Zeroes the feature rows of floor(ratio * N) uniformly chosen nodes and
// flags them feature_missing.
AttackedGraph apply_fda(const TextAttributedGraph& graph, double ratio, std::uint64_t seed);

// Redraws the train mask at the given labeled ratio; val/test unchanged.
AttackedGraph apply_ssa(const TextAttributedGraph& graph, double labeled_ratio,
                        std::uint64_t seed);

// NRA -> SHA -> FDA -> SSA with sub-seeds derived from spec.seed.
AttackedGraph apply_compound(const TextAttributedGraph& graph, const AttackSpec& spec);

// nra + sha + fda + (1 - labeled/0.6).
double intensity(const AttackSpec& spec);

// Intensity truncated to two decimals; this is the curve/grouping label
// (e.g. the grid maximum 0.9+0.9+0.9 with labeled 0.2 renders as 3.36).
double intensity_label(double intensity_value);
double intensity_label(const AttackSpec& spec);

}  // namespace rograd
