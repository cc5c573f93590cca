#include "rograd/config.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

using nlohmann::json;

namespace rograd {

namespace {

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return json::parse(ss.str());
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "config parse error in " + path + ": " + e.what());
  }
}

template <typename T>
void maybe(const json& doc, const char* key, T& out) {
  if (!doc.contains(key)) return;
  try {
    out = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("config key '") + key + "': " + e.what());
  }
}

void parse_decoding(const json& doc, DecodingOptions& d) {
  maybe(doc, "temperature", d.temperature);
  maybe(doc, "max_tokens", d.max_tokens);
  maybe(doc, "decoding_seed", d.seed);
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& doc) {
  PipelineConfig c;
  if (doc.contains("encoder")) {
    const auto& e = doc.at("encoder");
    maybe(e, "type", c.encoder_type);
    maybe(e, "dim", c.encoder_dim);
    maybe(e, "seed", c.encoder_seed);
    maybe(e, "endpoint", c.http_encoder.endpoint);
    maybe(e, "timeout_seconds", c.http_encoder.timeout_seconds);
    c.http_encoder.dimension = c.encoder_dim;
  }
  if (doc.contains("llm")) {
    const auto& l = doc.at("llm");
    maybe(l, "backend", c.llm_backend);
    maybe(l, "seed", c.mock.seed);
    std::string mode = "compliant";
    maybe(l, "mock_mode", mode);
    if (mode == "compliant") c.mock.mode = MockLlmConfig::Mode::compliant;
    else if (mode == "never_compliant") c.mock.mode = MockLlmConfig::Mode::never_compliant;
    else if (mode == "malformed") c.mock.mode = MockLlmConfig::Mode::malformed;
    else fail(ErrorKind::parse, "config: unknown mock_mode " + mode);
    maybe(l, "endpoint", c.http_llm.endpoint);
    maybe(l, "model", c.http_llm.model);
    maybe(l, "auth_token_env", c.http_llm.auth_token_env);
    maybe(l, "timeout_seconds", c.http_llm.timeout_seconds);
    maybe(l, "max_in_flight", c.gateway.max_in_flight);
    maybe(l, "audit_path", c.gateway.audit_path);
    maybe(l, "domain", c.prompts.domain);
  }
  if (doc.contains("sggm")) {
    const auto& s = doc.at("sggm");
    maybe(s, "k", c.sggm.k);
    maybe(s, "theta_r", c.sggm.theta_r);
    maybe(s, "theta_a", c.sggm.theta_a);
    maybe(s, "theta_o", c.sggm.theta_o);
    maybe(s, "theta_d", c.sggm.theta_d);
    maybe(s, "max_rounds", c.sggm.max_rounds);
    maybe(s, "lambda", c.sggm.lambda);
    maybe(s, "attempt_budget", c.sggm.attempt_budget);
    parse_decoding(s, c.sggm.decoding);
  }
  if (doc.contains("enrichment")) {
    maybe(doc.at("enrichment"), "tau", c.enrichment.tau);
  }
  if (doc.contains("r2cl")) {
    const auto& r = doc.at("r2cl");
    maybe(r, "depth", c.r2cl.depth);
    maybe(r, "hidden", c.r2cl.hidden);
    maybe(r, "projection", c.r2cl.projection);
    maybe(r, "batch_size", c.r2cl.batch_size);
    maybe(r, "temperature", c.r2cl.temperature);
    maybe(r, "omega", c.r2cl.omega);
    maybe(r, "epochs", c.r2cl.epochs);
    maybe(r, "refine_period", c.r2cl.refine_period);
    maybe(r, "anchors", c.r2cl.anchors);
    maybe(r, "same_k", c.r2cl.same_k);
    maybe(r, "cross_k", c.r2cl.cross_k);
    maybe(r, "edge_drop", c.r2cl.edge_drop);
    maybe(r, "feature_mask", c.r2cl.feature_mask);
    maybe(r, "learning_rate", c.r2cl.learning_rate);
    maybe(r, "attempt_budget", c.r2cl.attempt_budget);
    maybe(r, "seed", c.r2cl.seed);
    parse_decoding(r, c.r2cl.decoding);
  }
  if (doc.contains("backbone")) {
    const auto& b = doc.at("backbone");
    std::string arch = "gcn";
    maybe(b, "arch", arch);
    c.backbone.arch = architecture_from_string(arch);
    maybe(b, "hidden", c.backbone.hidden);
    maybe(b, "dropout", c.backbone.dropout);
    maybe(b, "learning_rate", c.backbone.learning_rate);
    maybe(b, "weight_decay", c.backbone.weight_decay);
    maybe(b, "gcn_layers", c.backbone.gcn_layers);
    maybe(b, "gat_heads", c.backbone.gat_heads);
    maybe(b, "max_epochs", c.backbone.max_epochs);
    maybe(b, "patience", c.backbone.patience);
    maybe(b, "seed", c.backbone.seed);
  }
  maybe(doc, "samples_per_class", c.samples_per_class);
  maybe(doc, "unified_embeddings", c.unified_embeddings);
  if (c.samples_per_class < 0)
    fail(ErrorKind::invalid_argument, "config: samples_per_class must be non-negative");
  return c;
}

PipelineConfig PipelineConfig::from_json_text(const std::string& text) {
  try {
    return from_json(json::parse(text));
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("config parse error: ") + e.what());
  }
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  return from_json(parse_file(path));
}

std::unique_ptr<Encoder> PipelineConfig::make_encoder() const {
  if (encoder_type == "hash")
    return std::make_unique<HashEncoder>(encoder_dim, encoder_seed);
  if (encoder_type == "http") return std::make_unique<HttpEncoder>(http_encoder);
  fail(ErrorKind::invalid_argument, "unknown encoder type: " + encoder_type);
}

std::shared_ptr<LlmBackend> PipelineConfig::make_llm_backend() const {
  if (llm_backend == "mock") return std::make_shared<MockLlm>(mock);
  if (llm_backend == "http") return std::make_shared<HttpLlm>(http_llm);
  fail(ErrorKind::invalid_argument, "unknown llm backend: " + llm_backend);
}

GridConfig GridConfig::from_json(const json& doc) {
  GridConfig g;
  maybe(doc, "dataset", g.manifest_path);
  maybe(doc, "nra", g.nra);
  maybe(doc, "sha", g.sha);
  maybe(doc, "fda", g.fda);
  maybe(doc, "labeled", g.labeled);
  maybe(doc, "seeds", g.seeds);
  maybe(doc, "base_seed", g.base_seed);
  maybe(doc, "method", g.method);
  maybe(doc, "jobs", g.jobs);
  maybe(doc, "resume", g.resume);
  maybe(doc, "emit_quality", g.emit_quality);
  g.pipeline = PipelineConfig::from_json(doc);
  g.validate();
  return g;
}

GridConfig GridConfig::from_file(const std::string& path) {
  return from_json(parse_file(path));
}

void GridConfig::validate() const {
  if (manifest_path.empty()) fail(ErrorKind::invalid_argument, "grid: dataset manifest required");
  if (nra.empty() || sha.empty() || fda.empty() || labeled.empty())
    fail(ErrorKind::invalid_argument, "grid: ratio lists must be non-empty");
  if (seeds < 1) fail(ErrorKind::invalid_argument, "grid: seeds must be >= 1");
  if (jobs < 1) fail(ErrorKind::invalid_argument, "grid: jobs must be >= 1");
  if (method != "vanilla" && method != "rograd")
    fail(ErrorKind::invalid_argument, "grid: method must be vanilla or rograd");
}

}  // namespace rograd
