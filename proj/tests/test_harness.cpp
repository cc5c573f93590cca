#include <doctest.h>

#include <filesystem>

#include "rograd/harness.hpp"
#include "support/oracles.hpp"
#include "support/testutil.hpp"

using namespace rograd;
namespace fs = std::filesystem;

namespace {

ResultRow ok_row(double intensity, double acc) {
  ResultRow r;
  r.method = "vanilla";
  r.backbone = "gcn";
  r.intensity = intensity;
  r.test_acc = acc;
  return r;
}

// Small pipeline tuned for runtime: tiny encoder nets, few samples.
PipelineConfig fast_pipeline() {
  PipelineConfig cfg;
  cfg.encoder_dim = 64;
  cfg.encoder_seed = 7;
  cfg.samples_per_class = 2;
  cfg.sggm.k = 4;
  cfg.sggm.max_rounds = 2;
  cfg.r2cl.depth = 2;
  cfg.r2cl.hidden = 16;
  cfg.r2cl.projection = 8;
  cfg.r2cl.epochs = 6;
  cfg.r2cl.refine_period = 3;
  cfg.r2cl.anchors = 3;
  cfg.r2cl.same_k = 2;
  cfg.r2cl.cross_k = 2;
  cfg.backbone.hidden = 16;
  cfg.backbone.max_epochs = 60;
  cfg.backbone.patience = 30;
  return cfg;
}

std::string write_synthetic_manifest(const testutil::TempDir& dir, int nodes, int classes,
                                     std::uint64_t seed) {
  HashEncoder enc(64, 7);
  testutil::SyntheticSpec spec;
  spec.nodes = nodes;
  spec.classes = classes;
  spec.seed = seed;
  auto g = testutil::make_split_synthetic(spec, enc, 0.6, seed);
  return save_graph(g, dir.str(), "synth");
}

}  // namespace

TEST_CASE("aggregate_by_intensity") {
  SUBCASE("single row becomes a single point") {
    auto curve = aggregate_by_intensity({ok_row(0.0, 88.0)});
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].intensity == 0.0);
    CHECK(curve[0].mean_acc == 88.0);
    CHECK(curve[0].n_cells == 1);
  }
  SUBCASE("rows sharing a label average without weights") {
    auto curve = aggregate_by_intensity({ok_row(1.83, 80.0), ok_row(1.83, 60.0)});
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].intensity == doctest::Approx(1.83));
    CHECK(curve[0].mean_acc == doctest::Approx(70.0));
    CHECK(curve[0].n_cells == 2);
  }
  SUBCASE("permutation invariant and sorted ascending") {
    std::vector<ResultRow> rows{ok_row(1.83, 70), ok_row(0.0, 90), ok_row(0.5, 85),
                                ok_row(0.0, 92)};
    auto a = aggregate_by_intensity(rows);
    std::reverse(rows.begin(), rows.end());
    auto b = aggregate_by_intensity(rows);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].intensity == b[i].intensity);
      CHECK(a[i].mean_acc == doctest::Approx(b[i].mean_acc));
      if (i) CHECK(a[i].intensity > a[i - 1].intensity);
    }
  }
  SUBCASE("failed rows are excluded") {
    ResultRow bad = ok_row(0.5, 0.0);
    bad.status = "boom";
    auto curve = aggregate_by_intensity({ok_row(0.0, 90), bad});
    CHECK(curve.size() == 1);
  }
}

TEST_CASE("robustness_metrics") {
  SUBCASE("constant 100% curve") {
    std::vector<CurvePoint> curve{{0.0, 100.0, 1}, {1.0, 100.0, 1}, {2.0, 100.0, 1}};
    auto rep = robustness_metrics(curve);
    CHECK(rep.clean_acc == 100.0);
    CHECK(rep.worst_acc == 100.0);
    CHECK(rep.avg_acc == 100.0);
    REQUIRE(rep.norm_auc.has_value());
    CHECK(*rep.norm_auc == doctest::Approx(1.0));
  }
  SUBCASE("(0,100)-(1,0) integrates to one half") {
    std::vector<CurvePoint> curve{{0.0, 100.0, 1}, {1.0, 0.0, 1}};
    auto rep = robustness_metrics(curve);
    REQUIRE(rep.norm_auc.has_value());
    CHECK(*rep.norm_auc == doctest::Approx(0.5));
    CHECK(rep.worst_acc == 0.0);
    CHECK(rep.avg_acc == doctest::Approx(50.0));
  }
  SUBCASE("constant c% curve equals c/100 exactly") {
    std::vector<CurvePoint> curve{{0.0, 73.0, 1}, {0.5, 73.0, 1}, {1.7, 73.0, 1}};
    CHECK(*robustness_metrics(curve).norm_auc == doctest::Approx(0.73).epsilon(1e-12));
  }
  SUBCASE("monotone non-increasing curve: clean first, worst last") {
    std::vector<CurvePoint> curve{{0.0, 90.0, 1}, {1.0, 70.0, 1}, {2.0, 40.0, 1}};
    auto rep = robustness_metrics(curve);
    CHECK(rep.clean_acc == 90.0);
    CHECK(rep.worst_acc == 40.0);
  }
  SUBCASE("missing clean point is an error") {
    std::vector<CurvePoint> curve{{0.5, 90.0, 1}, {1.0, 80.0, 1}};
    CHECK_THROWS_WITH_AS(robustness_metrics(curve), doctest::Contains("intensity-0"), Error);
  }
  SUBCASE("single point carries no norm_auc") {
    std::vector<CurvePoint> curve{{0.0, 90.0, 1}};
    CHECK_FALSE(robustness_metrics(curve).norm_auc.has_value());
  }
}

TEST_CASE("representation_quality") {
  SUBCASE("identical class members have zero variance") {
    Mat z(4, 2);
    z << 1, 2, 1, 2, 5, 5, 5, 7;
    auto rep = representation_quality(z, {0, 0, 1, 1});
    CHECK(rep.intra_variance[0] == doctest::Approx(0.0));
    CHECK(rep.intra_variance[1] > 0.0);
  }
  SUBCASE("two classes three apart have margin three") {
    Mat z(2, 2);
    z << 0, 0, 3, 0;
    auto rep = representation_quality(z, {0, 1});
    CHECK(rep.margins(0, 1) == doctest::Approx(3.0));
    CHECK(rep.margins(1, 0) == doctest::Approx(3.0));
    CHECK(rep.margins(0, 0) == 0.0);
  }
  SUBCASE("random 30-point set matches the naive definition") {
    Rng rng(3);
    Mat z(30, 5);
    std::vector<std::int32_t> labels;
    for (int i = 0; i < 30; ++i) {
      for (int j = 0; j < 5; ++j) z(i, j) = rng.normal();
      labels.push_back(i % 3);
    }
    auto rep = representation_quality(z, labels);

    for (int c = 0; c < 3; ++c) {
      Eigen::RowVectorXd centroid = Eigen::RowVectorXd::Zero(5);
      int count = 0;
      for (int i = 0; i < 30; ++i)
        if (labels[i] == c) {
          centroid += z.row(i);
          ++count;
        }
      centroid /= count;
      double var = 0.0;
      for (int i = 0; i < 30; ++i)
        if (labels[i] == c) var += (z.row(i) - centroid).squaredNorm();
      var /= count;
      CHECK(rep.intra_variance[c] == doctest::Approx(var).epsilon(1e-10));
    }
  }
  SUBCASE("empty class is an error") {
    Mat z(2, 2);
    z << 1, 0, 0, 1;
    CHECK_THROWS_WITH_AS(representation_quality(z, {0, 2}), doctest::Contains("empty"), Error);
  }
}

TEST_CASE("results csv round trip") {
  testutil::TempDir dir;
  std::vector<ResultRow> rows;
  ResultRow r = ok_row(1.83, 77.25);
  r.nra = 0.5;
  r.sha = 0.5;
  r.fda = 0.5;
  r.labeled_ratio = 0.4;
  r.seed = 42;
  r.runtime_s = 1.25;
  rows.push_back(r);
  ResultRow bad = ok_row(0.0, std::numeric_limits<double>::quiet_NaN());
  bad.status = "something broke, with a comma";
  rows.push_back(bad);

  write_results_csv(dir.file("results.csv"), rows);
  auto back = read_results_csv(dir.file("results.csv"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].csv_key() == rows[0].csv_key());
  CHECK(back[0].test_acc == doctest::Approx(77.25));
  CHECK(back[0].intensity == doctest::Approx(1.83));
  CHECK(back[1].status.find("comma") != std::string::npos);
  CHECK(back[1].status.find(',') == std::string::npos);
}

TEST_CASE("run_cell") {
  testutil::TempDir dir;
  std::string manifest = write_synthetic_manifest(dir, 40, 2, 3);
  TextAttributedGraph base = load_graph(manifest);
  PipelineConfig pipeline = fast_pipeline();

  SUBCASE("all-zero attack vanilla equals a direct classifier run") {
    AttackSpec spec;
    spec.seed = 5;
    ResultRow row = run_cell(base, pipeline, "vanilla", spec);
    REQUIRE(row.status == "ok");

    BackboneConfig direct = pipeline.backbone;
    direct.seed = mix64(spec.seed, 0xbac7b0eULL);
    auto attacked = apply_compound(base, spec);
    TrainedClassifier trained = train_classifier(attacked.graph, direct);
    CHECK(row.test_acc == doctest::Approx(trained.report.test_acc));
  }

  SUBCASE("degenerate rograd equals vanilla on the same cell") {
    PipelineConfig degenerate = pipeline;
    degenerate.samples_per_class = 0;
    degenerate.r2cl.epochs = 0;
    AttackSpec spec;
    spec.nra_ratio = 0.5;
    spec.seed = 8;
    ResultRow vanilla = run_cell(base, pipeline, "vanilla", spec);
    ResultRow rograd = run_cell(base, degenerate, "rograd", spec);
    REQUIRE(vanilla.status == "ok");
    REQUIRE(rograd.status == "ok");
    CHECK(rograd.test_acc == doctest::Approx(vanilla.test_acc));
  }

  SUBCASE("repeated cells are identical") {
    AttackSpec spec;
    spec.sha_ratio = 0.5;
    spec.labeled_ratio = 0.4;
    spec.seed = 11;
    ResultRow a = run_cell(base, pipeline, "rograd", spec);
    ResultRow b = run_cell(base, pipeline, "rograd", spec);
    REQUIRE(a.status == "ok");
    CHECK(a.test_acc == doctest::Approx(b.test_acc));
    CHECK(a.intensity == doctest::Approx(0.83));
  }

  SUBCASE("failures are recorded, not thrown") {
    PipelineConfig broken = pipeline;
    broken.llm_backend = "http";
    broken.http_llm.endpoint = "http://127.0.0.1:1/nothing";
    broken.http_llm.timeout_seconds = 1;
    broken.sggm.attempt_budget = 1;
    AttackSpec spec;
    spec.seed = 2;
    ResultRow row = run_cell(base, broken, "rograd", spec);
    CHECK(row.status != "ok");
    CHECK(std::isnan(row.test_acc));
  }
}

TEST_CASE("run_grid writes artifacts and resumes") {
  testutil::TempDir data_dir;
  std::string manifest = write_synthetic_manifest(data_dir, 40, 2, 9);

  GridConfig grid;
  grid.manifest_path = manifest;
  grid.nra = {0.0, 0.5};
  grid.sha = {0.0};
  grid.fda = {0.0};
  grid.labeled = {0.6};
  grid.seeds = 1;
  grid.method = "vanilla";
  grid.pipeline = fast_pipeline();

  testutil::TempDir out_dir;
  GridResult result = run_grid(grid, out_dir.str());
  CHECK(result.rows.size() == 2);
  CHECK(result.failed_cells == 0);
  CHECK(fs::exists(out_dir.path / "results.csv"));
  CHECK(fs::exists(out_dir.path / "curve.csv"));
  CHECK(fs::exists(out_dir.path / "robustness.json"));

  // Resume with an extended grid: previous cells are reused verbatim.
  auto first_rows = read_results_csv((out_dir.path / "results.csv").string());
  grid.nra = {0.0, 0.5, 0.9};
  grid.resume = true;
  GridResult resumed = run_grid(grid, out_dir.str());
  CHECK(resumed.rows.size() == 3);
  for (const auto& old_row : first_rows) {
    bool found = false;
    for (const auto& row : resumed.rows)
      if (row.csv_key() == old_row.csv_key() && row.test_acc == old_row.test_acc &&
          row.runtime_s == old_row.runtime_s)
        found = true;
    CHECK(found);  // runtime equality proves the cell was not re-run
  }
}
