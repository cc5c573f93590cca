#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rograd/common.hpp"

namespace rograd {

enum class PromptKind { initial, refine, modify_anchor, edge_analysis };

const char* prompt_kind_name(PromptKind kind);

struct DecodingOptions {
  double temperature = 0.7;
  int max_tokens = 512;
  // Decoding seed, forwarded to backends that support it. The mock keys its
  // sampling on it, which is how repeated draws for the same prompt differ.
  std::uint64_t seed = 0;
};

struct GenerationRequest {
  PromptKind kind = PromptKind::initial;
  std::string prompt;
  DecodingOptions decoding;
  int attempt_budget = 3;
};

struct ParsedSample {
  std::string title;
  std::string abstract;
  std::vector<std::string> keywords;

  // Single-line Title/Abstract/Keywords rendering (the transfer format).
  std::string to_line() const;
};

enum class EdgeVerdict : std::uint8_t { connect, remove };

// ---------------------------------------------------------------------------
// Prompt construction. Substitution is plain concatenation, so category names
// and texts pass through verbatim.

struct PromptLibrary {
  // Noun slotted into "generate a <domain> paper"; per-dataset terminology.
  std::string domain = "research";

  std::string render_initial(const std::string& category,
                             const std::vector<std::string>& exemplar_texts) const;
  std::string render_refine(const ParsedSample& draft, const std::string& feedback,
                            const std::string& category,
                            const std::vector<std::string>& exemplar_texts) const;
  std::string render_modify(const std::string& anchor_text,
                            const std::vector<std::string>& same_class_texts,
                            const std::vector<std::string>& cross_class_texts,
                            const std::string& category) const;
  std::string render_edge(const std::string& anchor_text,
                          const std::vector<std::string>& candidate_texts) const;
};

// ---------------------------------------------------------------------------
// Response parsing. Rejects rather than guesses: missing prefixes, empty
// fields, unknown verdict tokens and count mismatches are all errors.

ParsedSample parse_sample(const std::string& raw);
std::vector<EdgeVerdict> parse_edge_verdicts(const std::string& raw, std::size_t n_candidates);

// ---------------------------------------------------------------------------
// Backends.

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string name() const = 0;
  // Throws Error(io/runtime) on transport failure.
  virtual std::string complete(const GenerationRequest& request) = 0;
};

// Deterministic offline generator: a pure function of (request, seed).
//
// Category-aware replies rely on the synthetic-corpus vocabulary convention:
// the core vocabulary of category "x" is the token set "x_term0".."x_term<pool-1>",
// and node texts are built from those tokens. Replies sample that pool.
struct MockLlmConfig {
  std::uint64_t seed = 0;
  enum class Mode {
    compliant,        // well-formatted, class-aligned, diverse
    never_compliant,  // parrots the first exemplar: redundancy never clears
    malformed,        // replies that no parser accepts
  };
  Mode mode = Mode::compliant;
  // Token counts tuned so compliant drafts sit clear of every diagnostic
  // threshold: close enough to the class originals to link and align, far
  // enough from each other to avoid the duplication ceiling.
  int core_pool = 20;     // per-category vocabulary size
  int core_pick = 11;     // core tokens per generated abstract
  int kw_pick = 11;       // keywords, drawn independently from the full pool
  int unique_tokens = 9;  // fresh tokens per abstract
};

class MockLlm : public LlmBackend {
 public:
  explicit MockLlm(MockLlmConfig config = {});
  std::string name() const override { return "mock"; }
  std::string complete(const GenerationRequest& request) override;

 private:
  MockLlmConfig config_;
};

// Chat-completion HTTP adapter: POST {model, messages, temperature, ...} to
// the configured endpoint, reply text read from choices[0].message.content.
struct HttpLlmConfig {
  std::string endpoint;  // e.g. http://host:port/v1/chat/completions
  std::string model;
  std::string auth_token_env;  // name of the env var holding the bearer token
  int timeout_seconds = 120;
};

class HttpLlm : public LlmBackend {
 public:
  explicit HttpLlm(HttpLlmConfig config);
  std::string name() const override { return "http"; }
  std::string complete(const GenerationRequest& request) override;

 private:
  HttpLlmConfig config_;
};

// ---------------------------------------------------------------------------
// Gateway: retry budget, concurrency cap, audit trail. The single boundary
// between the pipeline and any language model.

struct GatewayConfig {
  int max_in_flight = 4;
  std::string audit_path;  // JSONL; empty disables auditing
};

struct GatewayStats {
  std::int64_t requests = 0;
  std::int64_t transport_retries = 0;
  std::int64_t parse_retries = 0;
  std::int64_t failures = 0;
};

class LlmGateway {
 public:
  LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayConfig config = {});
  ~LlmGateway();

  // First successful completion within request.attempt_budget; transport
  // failures are retried, budget exhaustion throws.
  std::string complete(const GenerationRequest& request);

  // complete + parse with parse-level retries inside the same budget. Each
  // retry re-salts the decoding seed.
  ParsedSample complete_sample(GenerationRequest request);
  std::vector<EdgeVerdict> complete_edge_verdicts(GenerationRequest request,
                                                  std::size_t n_candidates);

  GatewayStats stats() const;
  const std::string& backend_name() const { return backend_name_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string backend_name_;
};

}  // namespace rograd
