#pragma once

#include <memory>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "rograd/backbones.hpp"
#include "rograd/enrichment.hpp"
#include "rograd/r2cl.hpp"
#include "rograd/sggm.hpp"

namespace rograd {

// Everything one method run needs: encoder choice, LLM backend choice and
// all module configs. Parsed from the run's JSON config file; every key is
// optional and falls back to the documented default.
struct PipelineConfig {
  // encoder
  std::string encoder_type = "hash";  // "hash" | "http"
  int encoder_dim = 256;
  std::uint64_t encoder_seed = 0;
  HttpEncoderConfig http_encoder;

  // llm
  std::string llm_backend = "mock";  // "mock" | "http"
  MockLlmConfig mock;
  HttpLlmConfig http_llm;
  GatewayConfig gateway;
  PromptLibrary prompts;

  // modules
  SggmConfig sggm;
  EnrichmentConfig enrichment;
  R2clConfig r2cl;
  BackboneConfig backbone;

  // pipeline
  int samples_per_class = 5;
  bool unified_embeddings = true;

  static PipelineConfig from_json(const nlohmann::json& doc);
  static PipelineConfig from_json_text(const std::string& text);
  static PipelineConfig from_file(const std::string& path);

  std::unique_ptr<Encoder> make_encoder() const;
  std::shared_ptr<LlmBackend> make_llm_backend() const;
};

struct GridConfig {
  std::string manifest_path;
  std::vector<double> nra{0.0, 0.5, 0.9};
  std::vector<double> sha{0.0, 0.5, 0.9};
  std::vector<double> fda{0.0, 0.5, 0.9};
  std::vector<double> labeled{0.6, 0.4, 0.2};
  int seeds = 1;
  std::uint64_t base_seed = 0;
  std::string method = "vanilla";  // "vanilla" | "rograd"
  int jobs = 1;
  bool resume = false;
  bool emit_quality = false;  // per-cell representation-quality rows (rograd)
  PipelineConfig pipeline;

  static GridConfig from_json(const nlohmann::json& doc);
  static GridConfig from_file(const std::string& path);
  void validate() const;
};

}  // namespace rograd
