#include <doctest.h>

#include <set>

#include "rograd/sggm.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace rograd;

namespace {

Eigen::VectorXf unit(std::initializer_list<float> vals) {
  Eigen::VectorXf v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (float x : vals) v(i++) = x;
  return v / v.norm();
}

struct SggmFixture {
  HashEncoder encoder{4096, 5};
  TextAttributedGraph graph;
  EmbeddingStore store{4096};
  PromptLibrary prompts;
  SggmConfig config;

  SggmFixture() {
    testutil::SyntheticSpec spec;
    spec.nodes = 30;
    spec.classes = 3;
    graph = testutil::make_synthetic_tag(spec, encoder);
    store = build_store(graph, encoder);
    config.k = 5;
    config.max_rounds = 3;
  }

  ExemplarTextFn texts() const {
    return [this](const std::string& id) {
      return graph.texts[static_cast<std::size_t>(graph.index_of(id))];
    };
  }
};

}  // namespace

TEST_CASE("diagnose: identity candidate trips redundancy only") {
  SggmFixture fx;
  const auto& probe = fx.store.entries()[0];
  DiagnosticReport rep = diagnose(probe.vec, fx.store, {}, probe.cls, fx.config);
  CHECK(rep.redundancy == doctest::Approx(1.0));
  CHECK(rep.duplication == 0.0);
  CHECK(rep.redundancy_flag);
  CHECK_FALSE(rep.duplication_flag);
}

TEST_CASE("diagnose: orthogonal candidate violates alignment only") {
  SggmConfig config;
  EmbeddingStore store(4);
  store.add("a", 0, unit({1, 0, 0, 0}), EntryKind::original);
  store.add("b", 0, unit({0, 1, 0, 0}), EntryKind::original);
  store.add("c", 1, unit({0, 0, 1, 0}), EntryKind::original);
  DiagnosticReport rep = diagnose(unit({0, 0, 0, 1}), store, {}, 0, config);
  CHECK(rep.redundancy == doctest::Approx(0.0));
  CHECK(rep.alignment == doctest::Approx(0.0));
  CHECK(rep.off_category == doctest::Approx(0.0));
  CHECK(rep.alignment_flag);
  CHECK_FALSE(rep.redundancy_flag);
  CHECK_FALSE(rep.off_category_flag);
  CHECK_FALSE(rep.duplication_flag);
}

TEST_CASE("diagnose: hand store with k=3 matches the naive oracle") {
  SggmConfig config;
  config.k = 3;
  EmbeddingStore store(3);
  store.add("s1", 0, unit({1, 0, 0}), EntryKind::original);
  store.add("s2", 0, unit({1, 1, 0}), EntryKind::original);
  store.add("s3", 0, unit({0, 1, 1}), EntryKind::original);
  store.add("s4", 1, unit({0, 0, 1}), EntryKind::original);
  store.add("s5", 1, unit({1, 1, 1}), EntryKind::original);
  std::vector<Eigen::VectorXf> prev{unit({2, 1, 0})};
  Eigen::VectorXf cand = unit({3, 2, 1});

  DiagnosticReport rep = diagnose(cand, store, prev, 0, config);
  auto oracle = oracles::naive_diagnose(cand, store.entries(), prev, 0, config.k);
  CHECK(rep.redundancy == doctest::Approx(oracle.r).epsilon(1e-9));
  CHECK(rep.alignment == doctest::Approx(oracle.a).epsilon(1e-9));
  CHECK(rep.off_category == doctest::Approx(oracle.o).epsilon(1e-9));
  CHECK(rep.duplication == doctest::Approx(oracle.d).epsilon(1e-9));
}

TEST_CASE("diagnose equals the oracle on randomized stores") {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    int dim = 4 + static_cast<int>(rng.bounded(28));
    int n = 3 + static_cast<int>(rng.bounded(40));
    int classes = 2 + static_cast<int>(rng.bounded(3));
    EmbeddingStore store(dim);
    bool has_cls0 = false;
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXf v(dim);
      for (int j = 0; j < dim; ++j) v(j) = static_cast<float>(rng.normal());
      auto cls = static_cast<std::int32_t>(rng.bounded(classes));
      auto kind = rng.uniform() < 0.85 ? EntryKind::original : EntryKind::generated;
      if (cls == 0 && kind == EntryKind::original) has_cls0 = true;
      store.add("r" + std::to_string(i), cls, v, kind);
    }
    if (!has_cls0) continue;
    std::vector<Eigen::VectorXf> prev;
    for (std::uint64_t p = 0; p < rng.bounded(4); ++p) {
      Eigen::VectorXf v(dim);
      for (int j = 0; j < dim; ++j) v(j) = static_cast<float>(rng.normal());
      prev.push_back(v / v.norm());
    }
    Eigen::VectorXf cand(dim);
    for (int j = 0; j < dim; ++j) cand(j) = static_cast<float>(rng.normal());
    cand /= cand.norm();

    SggmConfig config;
    config.k = 1 + static_cast<int>(rng.bounded(12));
    DiagnosticReport rep = diagnose(cand, store, prev, 0, config);
    auto oracle = oracles::naive_diagnose(cand, store.entries(), prev, 0, config.k);
    CHECK(rep.redundancy == doctest::Approx(oracle.r).epsilon(1e-9));
    CHECK(rep.alignment == doctest::Approx(oracle.a).epsilon(1e-9));
    CHECK(rep.off_category == doctest::Approx(oracle.o).epsilon(1e-9));
    CHECK(rep.duplication == doctest::Approx(oracle.d).epsilon(1e-9));
  }
}

TEST_CASE("diagnose rejects a class absent from the store") {
  SggmFixture fx;
  CHECK_THROWS_WITH_AS(diagnose(fx.store.entries()[0].vec, fx.store, {}, 99, fx.config),
                       doctest::Contains("absent"), Error);
}

TEST_CASE("build_feedback lists violated metrics in fixed order") {
  SggmConfig config;
  DiagnosticReport rep;

  SUBCASE("no violations is an error") { CHECK_THROWS_AS(build_feedback(rep, config), Error); }

  SUBCASE("redundancy only") {
    rep.redundancy = 0.93;
    rep.redundancy_flag = true;
    std::string fb = build_feedback(rep, config);
    CHECK(fb.find("novel elements") != std::string::npos);
    CHECK(fb.find("category-specific terms") == std::string::npos);
    CHECK(fb.find("off-category terminology") == std::string::npos);
  }

  SUBCASE("alignment and drift") {
    rep.alignment = 0.2;
    rep.alignment_flag = true;
    rep.off_category = 0.5;
    rep.off_category_flag = true;
    std::string fb = build_feedback(rep, config);
    auto align_pos = fb.find("reinforce category-specific terms");
    auto drift_pos = fb.find("remove off-category terminology");
    CHECK(align_pos != std::string::npos);
    CHECK(drift_pos != std::string::npos);
    CHECK(align_pos < drift_pos);
    CHECK(fb.find("novel elements") == std::string::npos);
  }

  SUBCASE("all four in r, a, o, d order") {
    rep.redundancy_flag = rep.alignment_flag = rep.off_category_flag = rep.duplication_flag = true;
    std::string fb = build_feedback(rep, config);
    auto r_pos = fb.find("Redundancy");
    auto a_pos = fb.find("Class alignment");
    auto o_pos = fb.find("Off-category");
    auto d_pos = fb.find("Duplication");
    CHECK(r_pos < a_pos);
    CHECK(a_pos < o_pos);
    CHECK(o_pos < d_pos);
  }
}

TEST_CASE("fuse_keyword_embedding") {
  SUBCASE("lambda 0 is the normalized main embedding") {
    Eigen::VectorXf main = unit({1, 1, 0}) * 5.0f;
    Eigen::VectorXf fused = fuse_keyword_embedding(main, unit({0, 0, 1}), 0.0);
    CHECK((fused - unit({1, 1, 0})).norm() == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("identical unit directions are a fixed point") {
    Eigen::VectorXf v = unit({2, 1, 2});
    Eigen::VectorXf fused = fuse_keyword_embedding(v, v, 3.7);
    CHECK((fused - v).norm() == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("closed-form blend") {
    Eigen::VectorXf fused = fuse_keyword_embedding(unit({1, 0}), unit({0, 1}), 2.0);
    CHECK(fused(0) == doctest::Approx(1.0 / std::sqrt(5.0)));
    CHECK(fused(1) == doctest::Approx(2.0 / std::sqrt(5.0)));
  }
  SUBCASE("zero main rejected") {
    CHECK_THROWS_AS(fuse_keyword_embedding(Eigen::VectorXf::Zero(3), unit({1, 0, 0}), 1.0), Error);
  }
  SUBCASE("exact cancellation rejected") {
    Eigen::VectorXf main = unit({1, 0});
    CHECK_THROWS_AS(fuse_keyword_embedding(main, -main, 1.0), Error);
  }
}

TEST_CASE("generate_sample with the compliant mock terminates clean in round 1") {
  SggmFixture fx;
  LlmGateway gateway(std::make_shared<MockLlm>(MockLlmConfig{99}), {});
  GeneratedSample s = generate_sample(0, fx.graph.class_names[0], fx.store, gateway, fx.prompts,
                                      fx.encoder, fx.config, {}, 1, fx.texts());
  CHECK(s.clean);
  CHECK(s.rounds_used == 1);
  REQUIRE(s.reports.size() == 1);
  CHECK(s.embedding.norm() == doctest::Approx(1.0).epsilon(1e-6));
  // Comfortable margins around every threshold keep this robust.
  const auto& rep = s.reports[0];
  CHECK(rep.redundancy < fx.config.theta_r - 0.03);
  CHECK(rep.alignment > fx.config.theta_a + 0.03);
  CHECK(rep.off_category < fx.config.theta_o - 0.03);
}

TEST_CASE("generate_sample with the never-compliant mock runs all rounds") {
  SggmFixture fx;
  MockLlmConfig mock;
  mock.mode = MockLlmConfig::Mode::never_compliant;
  LlmGateway gateway(std::make_shared<MockLlm>(mock), {});
  fx.config.max_rounds = 3;
  GeneratedSample s = generate_sample(1, fx.graph.class_names[1], fx.store, gateway, fx.prompts,
                                      fx.encoder, fx.config, {}, 2, fx.texts());
  CHECK_FALSE(s.clean);
  CHECK(s.rounds_used == 3);
  CHECK(s.reports.size() == 3);
  for (const auto& rep : s.reports) CHECK(rep.redundancy_flag);
}

TEST_CASE("generate_sample with R=1 returns the violating draft") {
  SggmFixture fx;
  MockLlmConfig mock;
  mock.mode = MockLlmConfig::Mode::never_compliant;
  LlmGateway gateway(std::make_shared<MockLlm>(mock), {});
  fx.config.max_rounds = 1;
  GeneratedSample s = generate_sample(0, fx.graph.class_names[0], fx.store, gateway, fx.prompts,
                                      fx.encoder, fx.config, {}, 3, fx.texts());
  CHECK_FALSE(s.clean);
  CHECK(s.rounds_used == 1);
  CHECK_FALSE(s.sample.title.empty());
}

TEST_CASE("generate_sample propagates budget exhaustion on malformed replies") {
  SggmFixture fx;
  MockLlmConfig mock;
  mock.mode = MockLlmConfig::Mode::malformed;
  LlmGateway gateway(std::make_shared<MockLlm>(mock), {});
  CHECK_THROWS_WITH_AS(generate_sample(0, fx.graph.class_names[0], fx.store, gateway, fx.prompts,
                                       fx.encoder, fx.config, {}, 4, fx.texts()),
                       doctest::Contains("budget"), Error);
}

TEST_CASE("generate_batch accumulates duplication bookkeeping") {
  SggmFixture fx;
  LlmGateway gateway(std::make_shared<MockLlm>(MockLlmConfig{5}), {});

  SUBCASE("zero counts produce an empty batch") {
    auto out = generate_batch({{0, fx.graph.class_names[0], 0}}, fx.store, gateway, fx.prompts,
                              fx.encoder, fx.config, 1, fx.texts());
    CHECK(out.empty());
  }

  SUBCASE("2 classes x 2 samples, all clean, unique ids") {
    std::vector<ClassCount> plan{{0, fx.graph.class_names[0], 2}, {1, fx.graph.class_names[1], 2}};
    auto out = generate_batch(plan, fx.store, gateway, fx.prompts, fx.encoder, fx.config, 1,
                              fx.texts());
    REQUIRE(out.size() == 4);
    std::set<std::string> ids;
    for (const auto& s : out) {
      CHECK(s.clean);
      ids.insert(s.id);
    }
    CHECK(ids.size() == 4);
    // The final sample was diagnosed against all three previous embeddings:
    // its duplication score reflects the closest of them.
    const auto& last = out.back().reports.back();
    CHECK(last.duplication > 0.0);
    CHECK(last.duplication <= fx.config.theta_d);
  }
}

TEST_CASE("samples round-trip through jsonl") {
  SggmFixture fx;
  LlmGateway gateway(std::make_shared<MockLlm>(MockLlmConfig{5}), {});
  std::vector<ClassCount> plan{{0, fx.graph.class_names[0], 2}};
  auto out = generate_batch(plan, fx.store, gateway, fx.prompts, fx.encoder, fx.config, 9,
                            fx.texts());
  testutil::TempDir dir;
  save_samples_jsonl(dir.file("samples.jsonl"), out);
  auto back = load_samples_jsonl(dir.file("samples.jsonl"));
  REQUIRE(back.size() == out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(back[i].id == out[i].id);
    CHECK(back[i].cls == out[i].cls);
    CHECK(back[i].sample.title == out[i].sample.title);
    CHECK(back[i].sample.keywords == out[i].sample.keywords);
    CHECK(back[i].clean == out[i].clean);
    CHECK(back[i].rounds_used == out[i].rounds_used);
    CHECK((back[i].embedding - out[i].embedding).norm() == doctest::Approx(0.0));
    CHECK(back[i].reports.size() == out[i].reports.size());
  }
}
