#include <doctest.h>

#include <atomic>
#include <thread>

#include "rograd/llm.hpp"
#include "support/testutil.hpp"

// Keep httplib last: its resolver includes leak a `res` macro that breaks
// any Eigen header included after it.
#include <httplib.h>

using namespace rograd;

namespace {

// Backend that fails `failures` times before succeeding.
class FlakyBackend : public LlmBackend {
 public:
  FlakyBackend(int failures, std::string reply)
      : failures_(failures), reply_(std::move(reply)) {}
  std::string name() const override { return "flaky"; }
  std::string complete(const GenerationRequest&) override {
    if (calls_++ < failures_) fail(ErrorKind::io, "connection refused");
    return reply_;
  }
  int calls() const { return calls_; }

 private:
  int failures_;
  std::string reply_;
  int calls_ = 0;
};

GenerationRequest request_of(PromptKind kind, std::string prompt, int budget = 3,
                             std::uint64_t seed = 0) {
  GenerationRequest r;
  r.kind = kind;
  r.prompt = std::move(prompt);
  r.attempt_budget = budget;
  r.decoding.seed = seed;
  return r;
}

}  // namespace

TEST_CASE("initial prompt embeds category, exemplars and format rules") {
  PromptLibrary prompts;
  std::string p = prompts.render_initial("Neural Networks", {"first exemplar", "second exemplar"});
  CHECK(p.find("[Neural Networks]") != std::string::npos);
  CHECK(p.find("first exemplar") != std::string::npos);
  CHECK(p.find("second exemplar") != std::string::npos);
  CHECK(p.find("15-20") != std::string::npos);
  CHECK(p.find("\"Title:\"") != std::string::npos);
  CHECK(p.find("\"Keywords:\"") != std::string::npos);

  std::string no_examples = prompts.render_initial("Neural Networks", {});
  CHECK(no_examples.find("Example papers") == std::string::npos);
  CHECK(no_examples.find("\"Title:\"") != std::string::npos);
}

TEST_CASE("refine prompt embeds draft and feedback") {
  PromptLibrary prompts;
  ParsedSample draft{"Old Title", "Old abstract body", {"k1", "k2"}};
  std::string p = prompts.render_refine(draft, "redundancy too high", "CatX", {"exemplar"});
  CHECK(p.find("Old Title") != std::string::npos);
  CHECK(p.find("redundancy too high") != std::string::npos);
  CHECK(p.find("[CatX]") != std::string::npos);
  CHECK(p.find("exemplar") != std::string::npos);
  CHECK_THROWS_AS(prompts.render_refine(draft, "", "CatX", {}), Error);
}

TEST_CASE("modify prompt handles empty cross-class context") {
  PromptLibrary prompts;
  std::string p = prompts.render_modify("anchor text", {"same1"}, {}, "CatY");
  CHECK(p.find("anchor text") != std::string::npos);
  CHECK(p.find("same1") != std::string::npos);
  CHECK(p.find("(Category: CatY)") != std::string::npos);
  CHECK(p.find("other categories") == std::string::npos);
}

TEST_CASE("edge prompt numbers every candidate") {
  PromptLibrary prompts;
  std::string p = prompts.render_edge("anchor", {"cand one", "cand two", "cand three"});
  CHECK(p.find("Paper 1: cand one") != std::string::npos);
  CHECK(p.find("Paper 3: cand three") != std::string::npos);
  CHECK(p.find("CONNECT/REMOVE") != std::string::npos);

  std::string single = prompts.render_edge("anchor", {"only"});
  CHECK(single.find("Paper 1: only") != std::string::npos);
}

TEST_CASE("parse_sample extracts the three fields") {
  ParsedSample s = parse_sample("Title: A  Abstract: B  Keywords: x, y");
  CHECK(s.title == "A");
  CHECK(s.abstract == "B");
  CHECK(s.keywords == std::vector<std::string>{"x", "y"});
}

TEST_CASE("parse_sample error paths and dedup") {
  CHECK_THROWS_WITH_AS(parse_sample("Title: A  Abstract: B"),
                       doctest::Contains("Keywords"), Error);
  CHECK_THROWS_WITH_AS(parse_sample("Abstract: B  Keywords: x"), doctest::Contains("Title"),
                       Error);
  CHECK_THROWS_AS(parse_sample("Title:   Abstract: B  Keywords: x"), Error);
  CHECK_THROWS_AS(parse_sample("Title: A  Abstract: B  Keywords:  ,  "), Error);

  ParsedSample s = parse_sample("Title: T  Abstract: A  Keywords: GAN, gan, other; GAN");
  CHECK(s.keywords == std::vector<std::string>{"GAN", "other"});

  // Multi-line replies are whitespace-normalized per field.
  ParsedSample m = parse_sample("Title: Two\nWords\nAbstract: body here\nKeywords: a, b");
  CHECK(m.title == "Two Words");
  CHECK(m.abstract == "body here");
}

TEST_CASE("parse_edge_verdicts") {
  auto v = parse_edge_verdicts("Paper 1: CONNECT; Paper 2: REMOVE", 2);
  REQUIRE(v.size() == 2);
  CHECK(v[0] == EdgeVerdict::connect);
  CHECK(v[1] == EdgeVerdict::remove);

  CHECK_THROWS_WITH_AS(parse_edge_verdicts("Paper 1: CONNECT", 2),
                       doctest::Contains("count mismatch"), Error);
  CHECK_THROWS_WITH_AS(parse_edge_verdicts("Paper 1: CONNECT; Paper 2: REMOVE", 1),
                       doctest::Contains("count mismatch"), Error);
  CHECK_THROWS_WITH_AS(parse_edge_verdicts("Paper 1: MAYBE", 1), doctest::Contains("unknown"),
                       Error);

  auto lower = parse_edge_verdicts("paper 1 is unclear. Paper 1: connect", 1);
  CHECK(lower[0] == EdgeVerdict::connect);
}

TEST_CASE("mock is a pure function of request and seed") {
  MockLlmConfig cfg;
  cfg.seed = 42;
  MockLlm mock(cfg);
  PromptLibrary prompts;
  auto req = request_of(PromptKind::initial, prompts.render_initial("alpha", {"alpha_term0 x"}));
  CHECK(mock.complete(req) == mock.complete(req));

  auto req2 = req;
  req2.decoding.seed = 1;
  CHECK(mock.complete(req) != mock.complete(req2));

  MockLlm other({43});
  CHECK(mock.complete(req) != other.complete(req));
}

TEST_CASE("every render output re-parses through the matching parser") {
  PromptLibrary prompts;
  MockLlm mock({7});
  // Category with characters that are special in many template engines.
  std::string category = "We{ird% $cat}";
  std::vector<std::string> exemplars{"weird_cat_term0 weird_cat_term1 filler"};

  auto initial = request_of(PromptKind::initial, prompts.render_initial(category, exemplars));
  ParsedSample draft = parse_sample(mock.complete(initial));
  CHECK(draft.title.find(category) != std::string::npos);
  CHECK_FALSE(draft.keywords.empty());

  auto refine = request_of(
      PromptKind::refine, prompts.render_refine(draft, "feedback text", category, exemplars));
  CHECK_NOTHROW(parse_sample(mock.complete(refine)));

  auto modify = request_of(PromptKind::modify_anchor,
                           prompts.render_modify("anchor body", {"same"}, {"cross"}, category));
  CHECK_NOTHROW(parse_sample(mock.complete(modify)));

  auto edge = request_of(PromptKind::edge_analysis,
                         prompts.render_edge("anchor alpha_term0", {"alpha_term1 text", "beta_term0 text"}));
  auto verdicts = parse_edge_verdicts(mock.complete(edge), 2);
  CHECK(verdicts.size() == 2);
}

TEST_CASE("mock edge verdicts follow the category convention") {
  PromptLibrary prompts;
  MockLlm mock({3});
  std::string anchor = "alpha_term0 alpha_term1 unique_stuff";
  std::vector<std::string> candidates{"alpha_term2 alpha_term3", "beta_term0 beta_term1",
                                      "alpha_term5 words"};
  auto req = request_of(PromptKind::edge_analysis, prompts.render_edge(anchor, candidates));
  auto verdicts = parse_edge_verdicts(mock.complete(req), 3);
  CHECK(verdicts[0] == EdgeVerdict::connect);
  CHECK(verdicts[1] == EdgeVerdict::remove);
  CHECK(verdicts[2] == EdgeVerdict::connect);
}

TEST_CASE("gateway retries transport failures within the budget") {
  auto flaky = std::make_shared<FlakyBackend>(2, "Title: T  Abstract: A  Keywords: k");
  LlmGateway gateway(flaky, {});
  auto req = request_of(PromptKind::initial, "p [c]", 3);
  std::string reply = gateway.complete(req);
  CHECK(reply.find("Title") == 0);
  CHECK(flaky->calls() == 3);
  CHECK(gateway.stats().transport_retries == 2);
  CHECK(gateway.stats().failures == 0);
}

TEST_CASE("gateway exhausts the budget on a dead backend") {
  auto dead = std::make_shared<FlakyBackend>(1000000, "never");
  LlmGateway gateway(dead, {});
  auto req = request_of(PromptKind::initial, "p", 1);
  CHECK_THROWS_WITH_AS(gateway.complete(req), doctest::Contains("budget exhausted"), Error);
  CHECK(gateway.stats().failures == 1);
}

TEST_CASE("gateway parse retries exhaust the budget on malformed replies") {
  MockLlmConfig cfg;
  cfg.mode = MockLlmConfig::Mode::malformed;
  LlmGateway gateway(std::make_shared<MockLlm>(cfg), {});
  auto req = request_of(PromptKind::initial, "whatever [cat]", 3);
  CHECK_THROWS_WITH_AS(gateway.complete_sample(req), doctest::Contains("budget exhausted"),
                       Error);
  CHECK(gateway.stats().parse_retries == 3);
}

TEST_CASE("gateway audit log captures prompts and replies") {
  testutil::TempDir dir;
  GatewayConfig cfg;
  cfg.audit_path = dir.file("audit.jsonl");
  LlmGateway gateway(std::make_shared<MockLlm>(MockLlmConfig{}), cfg);
  auto req = request_of(PromptKind::initial, "Please generate [gamma] now", 2);
  gateway.complete(req);
  std::ifstream in(cfg.audit_path);
  std::string line;
  REQUIRE(std::getline(in, line));
  CHECK(line.find("\"template\":\"initial\"") != std::string::npos);
  CHECK(line.find("gamma") != std::string::npos);
}

TEST_CASE("http llm backend against a local chat-completion server") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    CHECK(req.body.find("\"messages\"") != std::string::npos);
    res.set_content(
        R"({"choices":[{"message":{"role":"assistant","content":"Title: H  Abstract: B  Keywords: k"}}]})",
        "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread runner([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpLlmConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.model = "test-model";
  cfg.timeout_seconds = 5;
  HttpLlm backend(cfg);
  auto req = request_of(PromptKind::initial, "hello [cat]");
  std::string reply = backend.complete(req);
  CHECK(reply.find("Title: H") == 0);
  CHECK(hits == 1);

  server.stop();
  runner.join();
}
