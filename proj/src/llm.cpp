#include "rograd/llm.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

using nlohmann::json;

namespace rograd {

const char* prompt_kind_name(PromptKind kind) {
  switch (kind) {
    case PromptKind::initial: return "initial";
    case PromptKind::refine: return "refine";
    case PromptKind::modify_anchor: return "modify_anchor";
    case PromptKind::edge_analysis: return "edge_analysis";
  }
  return "unknown";
}

std::string ParsedSample::to_line() const {
  std::ostringstream ss;
  ss << "Title: " << title << "  Abstract: " << abstract << "  Keywords: ";
  for (std::size_t i = 0; i < keywords.size(); ++i) ss << (i ? ", " : "") << keywords[i];
  return ss.str();
}

// ---------------------------------------------------------------------------
// Templates

namespace {

constexpr const char* kFormatConstraints =
    "Format constraints: plain text only. Each of Title, Abstract, Keywords on a "
    "single line; exact prefixes \"Title:\", \"Abstract:\", \"Keywords:\" with two "
    "spaces before \"Abstract:\" and \"Keywords:\".";

void append_examples(std::ostringstream& ss, const std::vector<std::string>& texts) {
  ss << "Example papers:\n";
  for (std::size_t i = 0; i < texts.size(); ++i)
    ss << "Example " << (i + 1) << ": " << texts[i] << "\n";
}

}  // namespace

std::string PromptLibrary::render_initial(const std::string& category,
                                          const std::vector<std::string>& exemplar_texts) const {
  std::ostringstream ss;
  ss << "Please generate a " << domain << " paper in the category [" << category
     << "], including a title, an abstract, and keywords.\n\n";
  if (!exemplar_texts.empty()) {
    ss << "Step 1: Analyze the example papers to identify:\n"
       << "- common terms and methodologies specific to [" << category << "];\n"
       << "- typical research problems in this category;\n"
       << "- distinctive approaches separating [" << category << "] from other categories.\n\n";
    append_examples(ss, exemplar_texts);
    ss << "\n";
  }
  ss << "Step 2: Generate a paper that\n"
     << "- uses EXACT terms (15-20) from the example papers;\n"
     << "- addresses a typical research problem in [" << category << "];\n"
     << "- employs characteristic methodologies of [" << category << "];\n"
     << "- avoids approaches typical of other categories.\n\n"
     << "Keywords: provide 15-20 key terms characteristic of the category.\n\n"
     << "Screening: outputs are checked for similarity with [" << category
     << "] papers; insufficient alignment will be rejected.\n\n"
     << kFormatConstraints;
  return ss.str();
}

std::string PromptLibrary::render_refine(const ParsedSample& draft, const std::string& feedback,
                                         const std::string& category,
                                         const std::vector<std::string>& exemplar_texts) const {
  if (feedback.empty()) fail(ErrorKind::invalid_argument, "render_refine: feedback is empty");
  std::ostringstream ss;
  ss << "You have generated: " << draft.to_line() << "\n"
     << "Similarity analysis: " << feedback << "\n\n"
     << "Task: Revise the paper to align more closely with [" << category
     << "] while maintaining originality:\n"
     << "- retain the Title-Abstract-Keywords format;\n"
     << "- use the example papers as guidance;\n"
     << "- extract 15-20 key terms from the revised abstract and place them immediately "
        "after the abstract (two spaces before \"Keywords:\").\n\n";
  if (!exemplar_texts.empty()) {
    append_examples(ss, exemplar_texts);
    ss << "\n";
  }
  ss << kFormatConstraints;
  return ss.str();
}

std::string PromptLibrary::render_modify(const std::string& anchor_text,
                                         const std::vector<std::string>& same_class_texts,
                                         const std::vector<std::string>& cross_class_texts,
                                         const std::string& category) const {
  std::ostringstream ss;
  ss << "Anchor paper (Category: " << category << "): " << anchor_text << "\n\n";
  if (!same_class_texts.empty()) {
    ss << "Similar papers in the same category:\n";
    for (const auto& t : same_class_texts) ss << "Paper: " << t << "\n";
    ss << "\n";
  }
  if (!cross_class_texts.empty()) {
    ss << "Papers from other categories:\n";
    for (const auto& t : cross_class_texts) ss << "Paper: " << t << "\n";
    ss << "\n";
  }
  ss << "Task: Modify the anchor paper so that:\n"
     << "- it clearly remains in its category;\n"
     << "- it is more distinctive from the similar papers;\n"
     << "- key concepts and methodologies are preserved, but the research focus or "
        "terminology is varied;\n"
     << "- output format: Title-Abstract-Keywords only, no explanations.\n\n"
     << kFormatConstraints;
  return ss.str();
}

std::string PromptLibrary::render_edge(const std::string& anchor_text,
                                       const std::vector<std::string>& candidate_texts) const {
  std::ostringstream ss;
  ss << "Anchor paper: " << anchor_text << "\n\n"
     << "Candidate papers:\n";
  for (std::size_t i = 0; i < candidate_texts.size(); ++i)
    ss << "Paper " << (i + 1) << ": " << candidate_texts[i] << "\n";
  ss << "\nTask: Decide which candidates should connect to the anchor based on:\n"
     << "- methodological similarity;\n"
     << "- shared research domains or targets;\n"
     << "- conceptual relationships.\n\n"
     << "Edge rules:\n"
     << "- connect same-category papers with strong methodological proximity;\n"
     << "- connect across categories only with strong overlap;\n"
     << "- be selective.\n\n"
     << "Output format: Paper 1: CONNECT/REMOVE; Paper 2: CONNECT/REMOVE; ...";
  return ss.str();
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

// Collapses whitespace runs (including newlines) to single spaces and trims.
std::string normalize_ws(const std::string& s) {
  std::string out;
  bool in_space = true;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!in_space && !out.empty()) out.push_back(' ');
      in_space = true;
    } else {
      out.push_back(c);
      in_space = false;
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

ParsedSample parse_sample(const std::string& raw) {
  auto title_pos = raw.find("Title:");
  if (title_pos == std::string::npos) fail(ErrorKind::parse, "reply is missing \"Title:\"");
  auto abstract_pos = raw.find("Abstract:", title_pos);
  if (abstract_pos == std::string::npos) fail(ErrorKind::parse, "reply is missing \"Abstract:\"");
  auto keywords_pos = raw.find("Keywords:", abstract_pos);
  if (keywords_pos == std::string::npos) fail(ErrorKind::parse, "reply is missing \"Keywords:\"");

  ParsedSample out;
  out.title = normalize_ws(raw.substr(title_pos + 6, abstract_pos - title_pos - 6));
  out.abstract = normalize_ws(raw.substr(abstract_pos + 9, keywords_pos - abstract_pos - 9));
  std::string kw = raw.substr(keywords_pos + 9);
  if (out.title.empty()) fail(ErrorKind::parse, "empty Title field");
  if (out.abstract.empty()) fail(ErrorKind::parse, "empty Abstract field");

  std::vector<std::string> seen_lower;
  std::string current;
  auto flush = [&] {
    std::string k = normalize_ws(current);
    current.clear();
    if (k.empty()) return;
    std::string kl = lower(k);
    if (std::find(seen_lower.begin(), seen_lower.end(), kl) != seen_lower.end()) return;
    seen_lower.push_back(kl);
    out.keywords.push_back(k);
  };
  for (char c : kw) {
    if (c == ',' || c == ';')
      flush();
    else
      current.push_back(c);
  }
  flush();
  if (out.keywords.empty()) fail(ErrorKind::parse, "empty Keywords field");
  return out;
}

std::vector<EdgeVerdict> parse_edge_verdicts(const std::string& raw, std::size_t n_candidates) {
  if (n_candidates == 0) fail(ErrorKind::invalid_argument, "n_candidates must be >= 1");
  std::vector<EdgeVerdict> out;
  std::size_t pos = 0;
  for (std::size_t i = 1; i <= n_candidates; ++i) {
    std::string marker = "Paper " + std::to_string(i);
    auto m = raw.find(marker, pos);
    if (m == std::string::npos)
      fail(ErrorKind::parse, "verdict count mismatch: missing \"" + marker + "\"");
    pos = m + marker.size();
    while (pos < raw.size() && (raw[pos] == ' ' || raw[pos] == ':')) ++pos;
    std::string token;
    while (pos < raw.size() && std::isalpha(static_cast<unsigned char>(raw[pos])))
      token.push_back(raw[pos++]);
    std::string tl = lower(token);
    if (tl == "connect")
      out.push_back(EdgeVerdict::connect);
    else if (tl == "remove")
      out.push_back(EdgeVerdict::remove);
    else
      fail(ErrorKind::parse, "unknown verdict token \"" + token + "\" for " + marker);
  }
  if (raw.find("Paper " + std::to_string(n_candidates + 1), pos) != std::string::npos)
    fail(ErrorKind::parse, "verdict count mismatch: more verdicts than candidates");
  return out;
}

// ---------------------------------------------------------------------------
// Mock backend

MockLlm::MockLlm(MockLlmConfig config) : config_(config) {}

namespace {

// First bracketed string, e.g. the category of a generation prompt.
std::string extract_bracketed(const std::string& prompt) {
  auto open = prompt.find('[');
  if (open == std::string::npos) return {};
  auto close = prompt.find(']', open + 1);
  if (close == std::string::npos) return {};
  return prompt.substr(open + 1, close - open - 1);
}

std::string extract_between(const std::string& text, const std::string& from,
                            const std::string& to, std::size_t start = 0) {
  auto a = text.find(from, start);
  if (a == std::string::npos) return {};
  a += from.size();
  auto b = text.find(to, a);
  if (b == std::string::npos) b = text.size();
  return text.substr(a, b - a);
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> words;
  std::string token;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) || c == '_') {
      token.push_back(static_cast<char>(std::tolower(c)));
    } else if (!token.empty()) {
      words.push_back(token);
      token.clear();
    }
  }
  if (!token.empty()) words.push_back(token);
  return words;
}

std::string category_token(const std::string& category) {
  std::string t;
  for (char raw : category) {
    unsigned char c = static_cast<unsigned char>(raw);
    t.push_back(std::isalnum(c) ? static_cast<char>(std::tolower(c)) : '_');
  }
  return t;
}

// Category a text belongs to under the synthetic vocabulary convention: the
// prefix of the first "<cat>_term<k>" token. Empty when none present.
std::string detect_category(const std::string& text) {
  for (const auto& w : tokenize_words(text)) {
    auto pos = w.rfind("_term");
    if (pos == std::string::npos || pos == 0) continue;
    bool digits = pos + 5 < w.size();
    for (std::size_t i = pos + 5; i < w.size(); ++i)
      digits = digits && std::isdigit(static_cast<unsigned char>(w[i]));
    if (digits) return w.substr(0, pos);
  }
  return {};
}

std::string hex_token(Rng& rng) {
  static const char* digits = "0123456789abcdef";
  std::string t = "gen_";
  for (int i = 0; i < 8; ++i) t.push_back(digits[rng.bounded(16)]);
  return t;
}

}  // namespace

std::string MockLlm::complete(const GenerationRequest& request) {
  if (request.prompt.empty()) fail(ErrorKind::invalid_argument, "empty prompt");
  if (config_.mode == MockLlmConfig::Mode::malformed)
    return "I cannot produce the requested structure.";

  Rng rng(mix64(config_.seed, hash_str(request.prompt), request.decoding.seed));

  if (request.kind == PromptKind::edge_analysis) {
    // Candidates live between the section header and the Task block; the
    // template's output-format line also says "Paper 1:" and must not count.
    std::string section = extract_between(request.prompt, "Candidate papers:\n", "\nTask:");
    std::string anchor = extract_between(request.prompt, "Anchor paper:", "Candidate papers:");
    std::string anchor_cat = detect_category(anchor);
    std::ostringstream ss;
    std::size_t i = 1;
    for (;; ++i) {
      std::string from = "Paper " + std::to_string(i) + ":";
      if (section.find(from) == std::string::npos) break;
      std::string candidate = extract_between(section, from, "Paper " + std::to_string(i + 1) + ":");
      bool same = !anchor_cat.empty() && detect_category(candidate) == anchor_cat;
      if (config_.mode == MockLlmConfig::Mode::never_compliant) same = false;
      ss << (i > 1 ? "; " : "") << "Paper " << i << ": " << (same ? "CONNECT" : "REMOVE");
    }
    if (i == 1) fail(ErrorKind::runtime, "mock: edge prompt without candidates");
    return ss.str();
  }

  // Generation prompts (initial / refine / modify_anchor).
  std::string category;
  if (request.kind == PromptKind::modify_anchor)
    category = extract_between(request.prompt, "(Category: ", ")");
  else
    category = extract_bracketed(request.prompt);
  if (category.empty()) fail(ErrorKind::runtime, "mock: prompt carries no category");

  if (config_.mode == MockLlmConfig::Mode::never_compliant) {
    // Parrot the first exemplar verbatim; redundancy never clears.
    std::string exemplar = extract_between(request.prompt, "Example 1: ", "\n");
    if (exemplar.empty()) exemplar = extract_between(request.prompt, "You have generated: ", "\n");
    auto words = tokenize_words(exemplar);
    std::ostringstream abstract;
    for (std::size_t i = 0; i < words.size(); ++i) abstract << (i ? " " : "") << words[i];
    std::ostringstream kws;
    std::size_t n_kw = std::min<std::size_t>(words.size(), 18);
    for (std::size_t i = 0; i < n_kw; ++i) kws << (i ? ", " : "") << words[i];
    return "Title: " + category + " revisited  Abstract: " +
           (words.empty() ? category_token(category) : abstract.str()) +
           "  Keywords: " + (n_kw == 0 ? category_token(category) : kws.str());
  }

  // Compliant: a diverse, class-aligned sample from the category vocabulary.
  // Abstract core tokens and keywords are independent subsets of the pool.
  const std::string cat = category_token(category);
  std::vector<int> pool(config_.core_pool);
  for (int i = 0; i < config_.core_pool; ++i) pool[i] = i;
  rng.shuffle(pool);
  int picks = std::min(config_.core_pick, config_.core_pool);

  std::ostringstream abstract;
  for (int i = 0; i < picks; ++i)
    abstract << (i ? " " : "") << cat << "_term" << pool[static_cast<std::size_t>(i)];
  for (int i = 0; i < config_.unique_tokens; ++i) abstract << ' ' << hex_token(rng);

  rng.shuffle(pool);
  std::ostringstream kws;
  int n_kw = std::min(config_.kw_pick, config_.core_pool);
  for (int i = 0; i < n_kw; ++i)
    kws << (i ? ", " : "") << cat << "_term" << pool[static_cast<std::size_t>(i)];

  return "Title: " + category + " " + hex_token(rng) + "  Abstract: " + abstract.str() +
         "  Keywords: " + kws.str();
}

// ---------------------------------------------------------------------------
// HTTP backend

HttpLlm::HttpLlm(HttpLlmConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) fail(ErrorKind::invalid_argument, "HttpLlm requires an endpoint");
}

namespace {

std::pair<std::string, std::string> split_url(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = endpoint.find('/', host_start);
  if (path_start == std::string::npos) return {endpoint, "/"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

std::string HttpLlm::complete(const GenerationRequest& request) {
  auto [base, path] = split_url(config_.endpoint);
  httplib::Client client(base);
  client.set_read_timeout(config_.timeout_seconds, 0);
  client.set_connection_timeout(config_.timeout_seconds, 0);

  httplib::Headers headers;
  if (!config_.auth_token_env.empty()) {
    const char* token = std::getenv(config_.auth_token_env.c_str());
    if (token && *token) headers.emplace("Authorization", std::string("Bearer ") + token);
  }

  json body = {{"model", config_.model},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})},
               {"temperature", request.decoding.temperature},
               {"max_tokens", request.decoding.max_tokens}};

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) fail(ErrorKind::io, "llm endpoint unreachable: " + config_.endpoint);
  if (res->status != 200)
    fail(ErrorKind::io, "llm endpoint returned status " + std::to_string(res->status));

  try {
    json doc = json::parse(res->body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::io, std::string("malformed llm transport reply: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Gateway

struct LlmGateway::Impl {
  std::shared_ptr<LlmBackend> backend;
  GatewayConfig config;
  std::counting_semaphore<1024> slots;
  mutable std::mutex mutex;  // guards stats and the audit stream
  GatewayStats stats;
  std::ofstream audit;

  Impl(std::shared_ptr<LlmBackend> b, GatewayConfig c)
      : backend(std::move(b)), config(std::move(c)), slots(std::max(1, config.max_in_flight)) {
    if (!config.audit_path.empty()) {
      audit.open(config.audit_path, std::ios::app);
      if (!audit) fail(ErrorKind::io, "cannot open audit log: " + config.audit_path);
    }
  }

  void log(const GenerationRequest& request, int attempt, const std::string& reply,
           const std::string& error) {
    std::lock_guard<std::mutex> lock(mutex);
    if (!audit.is_open()) return;
    json line = {{"template", prompt_kind_name(request.kind)},
                 {"attempt", attempt},
                 {"backend", backend->name()},
                 {"prompt_chars", request.prompt.size()},
                 {"prompt", request.prompt},
                 {"reply", reply},
                 {"error", error}};
    audit << line.dump() << '\n';
    audit.flush();
  }
};

LlmGateway::LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayConfig config)
    : impl_(std::make_unique<Impl>(std::move(backend), std::move(config))),
      backend_name_(impl_->backend->name()) {}

LlmGateway::~LlmGateway() = default;

std::string LlmGateway::complete(const GenerationRequest& request) {
  if (request.prompt.empty()) fail(ErrorKind::invalid_argument, "complete: empty prompt");
  if (request.attempt_budget < 1)
    fail(ErrorKind::invalid_argument, "complete: attempt budget must be >= 1");
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    ++impl_->stats.requests;
  }
  std::string last_error;
  for (int attempt = 1; attempt <= request.attempt_budget; ++attempt) {
    impl_->slots.acquire();
    try {
      std::string reply = impl_->backend->complete(request);
      impl_->slots.release();
      impl_->log(request, attempt, reply, "");
      return reply;
    } catch (const Error& e) {
      impl_->slots.release();
      last_error = e.what();
      impl_->log(request, attempt, "", last_error);
      std::lock_guard<std::mutex> lock(impl_->mutex);
      if (attempt < request.attempt_budget) ++impl_->stats.transport_retries;
    }
  }
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    ++impl_->stats.failures;
  }
  fail(ErrorKind::runtime, "attempt budget exhausted (" + std::to_string(request.attempt_budget) +
                               " attempts): " + last_error);
}

ParsedSample LlmGateway::complete_sample(GenerationRequest request) {
  const int budget = request.attempt_budget;
  std::string last_error;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    request.attempt_budget = budget - attempt + 1;
    std::string raw = complete(request);
    try {
      return parse_sample(raw);
    } catch (const Error& e) {
      last_error = e.what();
      std::lock_guard<std::mutex> lock(impl_->mutex);
      ++impl_->stats.parse_retries;
    }
    // Different decoding seed so a stochastic backend re-rolls.
    request.decoding.seed = mix64(request.decoding.seed, 0xbadf00dULL + static_cast<std::uint64_t>(attempt));
  }
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    ++impl_->stats.failures;
  }
  fail(ErrorKind::runtime, "attempt budget exhausted on parse failures: " + last_error);
}

std::vector<EdgeVerdict> LlmGateway::complete_edge_verdicts(GenerationRequest request,
                                                            std::size_t n_candidates) {
  const int budget = request.attempt_budget;
  std::string last_error;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    request.attempt_budget = budget - attempt + 1;
    std::string raw = complete(request);
    try {
      return parse_edge_verdicts(raw, n_candidates);
    } catch (const Error& e) {
      last_error = e.what();
      std::lock_guard<std::mutex> lock(impl_->mutex);
      ++impl_->stats.parse_retries;
    }
    request.decoding.seed = mix64(request.decoding.seed, 0xbadf00dULL + static_cast<std::uint64_t>(attempt));
  }
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    ++impl_->stats.failures;
  }
  fail(ErrorKind::runtime, "attempt budget exhausted on verdict parse failures: " + last_error);
}

GatewayStats LlmGateway::stats() const {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  return impl_->stats;
}

}  // namespace rograd
