#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "rograd/embed_store.hpp"
#include "rograd/llm.hpp"

namespace rograd {

struct SggmConfig {
  int k = 10;              // same-class exemplars retrieved per round
  double theta_r = 0.85;   // redundancy ceiling
  double theta_a = 0.6;    // alignment floor
  double theta_o = 0.3;    // off-category ceiling
  double theta_d = 0.7;    // duplication ceiling
  int max_rounds = 3;
  double lambda = 2.0;     // keyword fusion weight
  DecodingOptions decoding;
  int attempt_budget = 3;

  void validate() const;
};

// Cosine diagnostics of a draft against the store: redundancy is the max over
// same-class originals, alignment the mean over the top-k of those,
// off_category the max over cross-class originals, duplication the max over
// previously generated samples of the run (0 when none).
struct DiagnosticReport {
  double redundancy = 0.0;
  double alignment = 0.0;
  double off_category = 0.0;
  double duplication = 0.0;
  bool redundancy_flag = false;
  bool alignment_flag = false;
  bool off_category_flag = false;
  bool duplication_flag = false;

  int violations() const {
    return int(redundancy_flag) + int(alignment_flag) + int(off_category_flag) +
           int(duplication_flag);
  }
  bool clean() const { return violations() == 0; }
};

struct GeneratedSample {
  std::string id;
  std::int32_t cls = 0;
  ParsedSample sample;
  Eigen::VectorXf embedding;  // fused, unit norm
  int rounds_used = 0;
  std::vector<DiagnosticReport> reports;  // one per round
  bool clean = false;
};

DiagnosticReport diagnose(const Eigen::VectorXf& candidate, const EmbeddingStore& store,
                          const std::vector<Eigen::VectorXf>& previous_generated,
                          std::int32_t cls, const SggmConfig& config);

// Refinement instructions for the violated metrics, in fixed r, a, o, d
// order. Calling without violations is an error.
std::string build_feedback(const DiagnosticReport& report, const SggmConfig& config);

// normalize(main + lambda * keywords); lambda 0 reduces to the normalized
// main embedding.
Eigen::VectorXf fuse_keyword_embedding(const Eigen::VectorXf& main_embedding,
                                       const Eigen::VectorXf& keyword_embedding, double lambda);

// Resolves a store entry id to the node text used in prompts.
using ExemplarTextFn = std::function<std::string(const std::string& id)>;

// One sample through the full loop: retrieve exemplars (round 0 against the
// class centroid, later rounds against the current draft embedding), prompt,
// parse, encode, fuse, diagnose; feed violations back until clean or the
// round cap. On non-convergence returns the draft with the fewest violations
// (ties to the latest round) with clean=false.
GeneratedSample generate_sample(std::int32_t cls, const std::string& category,
                                const EmbeddingStore& store, LlmGateway& gateway,
                                const PromptLibrary& prompts, Encoder& encoder,
                                const SggmConfig& config,
                                const std::vector<Eigen::VectorXf>& previous_generated,
                                std::uint64_t seed, const ExemplarTextFn& texts);

struct ClassCount {
  std::int32_t cls = 0;
  std::string category;
  int count = 0;
};

// Class-by-class generation; duplication bookkeeping accumulates across the
// whole batch so each sample is diagnosed against all earlier outputs.
std::vector<GeneratedSample> generate_batch(const std::vector<ClassCount>& plan,
                                            const EmbeddingStore& store, LlmGateway& gateway,
                                            const PromptLibrary& prompts, Encoder& encoder,
                                            const SggmConfig& config, std::uint64_t seed,
                                            const ExemplarTextFn& texts);

void save_samples_jsonl(const std::string& path, const std::vector<GeneratedSample>& samples);
std::vector<GeneratedSample> load_samples_jsonl(const std::string& path);

}  // namespace rograd
