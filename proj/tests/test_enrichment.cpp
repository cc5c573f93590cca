#include <doctest.h>

#include "rograd/enrichment.hpp"
#include "support/testutil.hpp"

using namespace rograd;

namespace {

GeneratedSample sample_with(const std::string& id, std::int32_t cls,
                            std::initializer_list<float> vals) {
  GeneratedSample s;
  s.id = id;
  s.cls = cls;
  s.sample.title = "Generated " + id;
  s.sample.abstract = "body of " + id;
  s.sample.keywords = {"kw"};
  Eigen::VectorXf v(static_cast<Eigen::Index>(vals.size()));
  Eigen::Index i = 0;
  for (float x : vals) v(i++) = x;
  s.embedding = v / v.norm();
  s.clean = true;
  s.rounds_used = 1;
  return s;
}

// Two originals with hand-set unit features: similarities against a sample
// embedding of (1,0) are 0.9 and 0.6.
TextAttributedGraph hand_graph() {
  TextAttributedGraph g;
  g.name = "hand";
  g.num_classes = 2;
  g.class_names = {"a", "b"};
  g.node_ids = {"n0", "n1"};
  g.texts = {"text zero", "text one"};
  g.labels = {0, 1};
  g.features.resize(2, 2);
  g.features.row(0) << 0.9f, std::sqrt(1.0f - 0.81f);
  g.features.row(1) << 0.6f, std::sqrt(1.0f - 0.36f);
  g.train_mask = {1, 0};
  g.val_mask = {0, 1};
  g.test_mask = {0, 0};
  g.feature_missing = {0, 0};
  g.node_origin.assign(2, NodeOrigin::original);
  g.validate();
  return g;
}

}  // namespace

TEST_CASE("tau 1.0 never links (strict inequality)") {
  auto g = hand_graph();
  EnrichmentConfig cfg;
  cfg.tau = 1.0;
  auto out = enrich(g, {sample_with("g0", 0, {1, 0}), sample_with("g1", 1, {0, 1})}, cfg);
  CHECK(out.graph.num_nodes() == 4);
  CHECK(out.stats.samples_added == 2);
  CHECK(out.stats.edges_added == 0);
  CHECK(out.graph.num_edges() == g.num_edges());
}

TEST_CASE("hand similarities 0.9 and 0.6 against tau 0.7 link exactly once") {
  auto g = hand_graph();
  EnrichmentConfig cfg;  // tau 0.7
  auto out = enrich(g, {sample_with("g0", 0, {1, 0})}, cfg);
  CHECK(out.stats.edges_added == 1);
  REQUIRE(out.stats.neighbor_counts.size() == 1);
  CHECK(out.stats.neighbor_counts[0] == 1);
  // The new node is index 2; its single edge goes to n0 (similarity 0.9).
  Edge expected{0, 2};
  CHECK(std::find(out.graph.edges.begin(), out.graph.edges.end(), expected) !=
        out.graph.edges.end());
}

TEST_CASE("empty sample list leaves the graph unchanged") {
  auto g = hand_graph();
  auto out = enrich(g, {}, {});
  CHECK(testutil::graphs_identical(g, out.graph));
  CHECK(out.stats.samples_added == 0);
  CHECK(out.stats.edges_added == 0);
  CHECK(out.stats.neighbor_counts.empty());
}

TEST_CASE("enrichment bookkeeping and invariants") {
  HashEncoder enc(64, 17);
  testutil::SyntheticSpec spec;
  spec.nodes = 20;
  spec.classes = 2;
  auto g = testutil::make_split_synthetic(spec, enc, 0.6, 3);

  // Two near-identical same-class samples: similar to each other, but no
  // generated-generated edge may appear.
  GeneratedSample s1 = sample_with("g0", 0, {1, 0, 0, 0});
  GeneratedSample s2 = sample_with("g1", 0, {0.99f, 0.141f, 0, 0});
  s1.embedding.conservativeResize(64);
  s2.embedding.conservativeResize(64);
  s1.embedding.setZero();
  s2.embedding.setZero();
  s1.embedding(0) = 1.0f;
  s2.embedding(0) = 1.0f;  // identical direction

  EnrichmentConfig cfg;
  auto out = enrich(g, {s1, s2}, cfg);

  SUBCASE("original rows, labels, masks and edges preserved bitwise") {
    for (std::int64_t i = 0; i < g.num_nodes(); ++i) {
      CHECK((out.graph.features.row(i) == g.features.row(i)));
      CHECK(out.graph.labels[i] == g.labels[i]);
      CHECK(out.graph.val_mask[i] == g.val_mask[i]);
      CHECK(out.graph.test_mask[i] == g.test_mask[i]);
      CHECK(out.graph.train_mask[i] == g.train_mask[i]);
    }
    for (auto e : g.edges)
      CHECK(std::find(out.graph.edges.begin(), out.graph.edges.end(), e) !=
            out.graph.edges.end());
  }

  SUBCASE("generated nodes are train-only, flagged, pseudo-labeled") {
    for (std::int64_t i = g.num_nodes(); i < out.graph.num_nodes(); ++i) {
      CHECK(out.graph.node_origin[i] == NodeOrigin::generated);
      CHECK(out.graph.train_mask[i] == 1);
      CHECK(out.graph.val_mask[i] == 0);
      CHECK(out.graph.test_mask[i] == 0);
      CHECK(out.graph.labels[i] == 0);
    }
  }

  SUBCASE("no generated-generated edges despite identical embeddings") {
    Edge forbidden{static_cast<std::int32_t>(g.num_nodes()),
                   static_cast<std::int32_t>(g.num_nodes() + 1)};
    CHECK(std::find(out.graph.edges.begin(), out.graph.edges.end(), forbidden) ==
          out.graph.edges.end());
  }

  SUBCASE("independent scan reproduces the added edges exactly") {
    std::int64_t expected = 0;
    for (const auto& s : {s1, s2})
      for (std::int64_t j = 0; j < g.num_nodes(); ++j) {
        Eigen::VectorXf row = g.features.row(j).transpose();
        if (row.norm() == 0.0f) continue;
        expected += (cosine(s.embedding, row) > cfg.tau);
      }
    CHECK(out.stats.edges_added == expected);
    CHECK(out.graph.num_edges() == g.num_edges() + expected);
  }

  SUBCASE("stats recount passes and detects tampering") {
    CHECK_NOTHROW(enrichment_stats(out));
    EnrichedGraph broken = out;
    broken.stats.edges_added += 1;
    CHECK_THROWS_AS(enrichment_stats(broken), Error);
  }
}

TEST_CASE("missing-feature originals never attract edges") {
  auto g = hand_graph();
  g.features.row(0).setZero();
  g.feature_missing[0] = 1;
  auto out = enrich(g, {sample_with("g0", 0, {1, 0})}, {});
  // n0 would have matched at 0.9 but its features are gone; n1 at 0.6 < tau.
  CHECK(out.stats.edges_added == 0);
}

TEST_CASE("enrich rejects bad inputs") {
  auto g = hand_graph();
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_WITH_AS(enrich(g, {sample_with("g0", 0, {1, 0, 0})}, {}),
                         doctest::Contains("dimension"), Error);
  }
  SUBCASE("duplicate sample ids") {
    CHECK_THROWS_WITH_AS(
        enrich(g, {sample_with("g0", 0, {1, 0}), sample_with("g0", 1, {0, 1})}, {}),
        doctest::Contains("duplicate"), Error);
  }
  SUBCASE("sample id colliding with a node id") {
    CHECK_THROWS_AS(enrich(g, {sample_with("n0", 0, {1, 0})}, {}), Error);
  }
  SUBCASE("class out of range") {
    CHECK_THROWS_AS(enrich(g, {sample_with("g0", 9, {1, 0})}, {}), Error);
  }
  SUBCASE("tau out of range") {
    EnrichmentConfig cfg;
    cfg.tau = 1.5;
    CHECK_THROWS_AS(enrich(g, {}, cfg), Error);
  }
}

TEST_CASE("unify_embeddings keeps missing rows zero and normalizes the rest") {
  HashEncoder enc(32, 4);
  testutil::SyntheticSpec spec;
  spec.nodes = 8;
  spec.classes = 2;
  auto g = testutil::make_synthetic_tag(spec, enc);
  g.features = Eigen::MatrixXf::Ones(8, 3);  // stale feature space
  g.feature_missing[2] = 1;

  auto out = unify_embeddings(g, enc);
  CHECK(out.feature_dim() == 32);
  for (std::int64_t i = 0; i < 8; ++i) {
    if (i == 2)
      CHECK(out.features.row(i).norm() == 0.0f);
    else
      CHECK(out.features.row(i).norm() == doctest::Approx(1.0).epsilon(1e-6));
  }
  CHECK(out.texts == g.texts);
  CHECK(out.edges == g.edges);
}
