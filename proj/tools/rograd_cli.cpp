// Command-line front end. All graph/pipeline work goes through the C API in
// rograd/rograd.h; this file only handles flags, config files and printing.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "rograd/rograd.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GraphHandle {
  rograd_graph* g = nullptr;
  ~GraphHandle() { rograd_graph_free(g); }
};

struct CString {
  char* s = nullptr;
  ~CString() { rograd_string_free(s); }
};

[[noreturn]] void die(const std::string& context) {
  std::cerr << "error: " << context << ": " << rograd_last_error() << "\n";
  std::exit(1);
}

void check(rograd_status status, const std::string& context) {
  if (status != ROGRAD_OK) die(context);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    std::exit(1);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    std::cerr << "error: config " << path << ": " << e.what() << "\n";
    std::exit(1);
  }
}

GraphHandle load_graph_or_die(const std::string& manifest) {
  GraphHandle h;
  check(rograd_graph_load(manifest.c_str(), &h.g), "loading " + manifest);
  return h;
}

void print_graph_summary(const rograd_graph* g, const std::string& label) {
  std::cout << label << ": " << rograd_graph_num_nodes(g) << " nodes, "
            << rograd_graph_num_edges(g) << " edges, " << rograd_graph_feature_dim(g)
            << " features, " << rograd_graph_num_classes(g) << " classes\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rograd: robustness toolkit for text-attributed graphs"};
  app.require_subcommand(1);

  std::string graph_path, config_path, out_path, name = "graph";
  std::string samples_path, results_path, curve_path, spec_path;
  double nra = 0.0, sha = 0.0, fda = 0.0, labeled = 0.6;
  std::uint64_t seed = 0;
  double train_fraction = 0.0;

  auto* attack = app.add_subcommand("attack", "inject graph deficiencies");
  attack->add_option("--graph", graph_path, "dataset manifest")->required();
  attack->add_option("--out", out_path, "output directory")->required();
  attack->add_option("--spec", spec_path, "attack spec JSON file");
  attack->add_option("--nra", nra, "node removal ratio");
  attack->add_option("--sha", sha, "same-class edge removal ratio");
  attack->add_option("--fda", fda, "feature drop ratio");
  attack->add_option("--labeled", labeled, "labeled training ratio");
  attack->add_option("--seed", seed, "attack seed");
  attack->add_option("--name", name, "output graph name");

  auto* generate = app.add_subcommand("generate", "generate refined samples");
  generate->add_option("--graph", graph_path, "dataset manifest")->required();
  generate->add_option("--config", config_path, "pipeline config JSON")->required();
  generate->add_option("--out", out_path, "output samples JSONL")->required();

  auto* enrich = app.add_subcommand("enrich", "insert generated samples into the graph");
  enrich->add_option("--graph", graph_path, "dataset manifest")->required();
  enrich->add_option("--samples", samples_path, "samples JSONL")->required();
  enrich->add_option("--config", config_path, "pipeline config JSON")->required();
  enrich->add_option("--out", out_path, "output directory")->required();
  enrich->add_option("--name", name, "output graph name");

  auto* train = app.add_subcommand("train-r2cl", "contrastive refinement training");
  train->add_option("--graph", graph_path, "dataset manifest (enriched)")->required();
  train->add_option("--config", config_path, "pipeline config JSON")->required();
  train->add_option("--out", out_path, "output directory")->required();
  train->add_option("--name", name, "output graph name");

  auto* classify = app.add_subcommand("classify", "train and evaluate a backbone");
  classify->add_option("--graph", graph_path, "dataset manifest")->required();
  classify->add_option("--config", config_path, "pipeline config JSON");
  classify->add_option("--split", train_fraction, "redraw masks at this train fraction first");
  classify->add_option("--seed", seed, "split seed");

  auto* grid = app.add_subcommand("grid", "run an attack grid");
  grid->add_option("--config", config_path, "grid config JSON")->required();
  grid->add_option("--out", out_path, "output directory")->required();

  auto* report = app.add_subcommand("report", "robustness metrics from results CSV");
  report->add_option("--results", results_path, "results.csv")->required();
  report->add_option("--curve", curve_path, "write aggregated curve CSV here");

  CLI11_PARSE(app, argc, argv);

  if (attack->parsed()) {
    GraphHandle input = load_graph_or_die(graph_path);
    json spec;
    if (!spec_path.empty()) spec = load_config(spec_path);
    if (attack->count("--nra")) spec["nra_ratio"] = nra;
    if (attack->count("--sha")) spec["sha_ratio"] = sha;
    if (attack->count("--fda")) spec["fda_ratio"] = fda;
    if (attack->count("--labeled")) spec["labeled_ratio"] = labeled;
    if (attack->count("--seed")) spec["seed"] = seed;
    GraphHandle attacked;
    CString provenance;
    check(rograd_attack(input.g, spec.dump().c_str(), &attacked.g, &provenance.s), "attack");
    CString manifest;
    check(rograd_graph_save(attacked.g, out_path.c_str(), name.c_str(), &manifest.s),
          "saving attacked graph");
    json prov = json::parse(provenance.s);
    {
      std::ofstream csv(fs::path(out_path) / "provenance.csv");
      csv << "nodes_removed,same_class_edges_removed,feature_rows_zeroed,labels_withheld,"
             "intensity_label\n"
          << prov["nodes_removed"] << ',' << prov["same_class_edges_removed"] << ','
          << prov["feature_rows_zeroed"] << ',' << prov["labels_withheld"] << ','
          << prov["intensity_label"] << '\n';
    }
    print_graph_summary(attacked.g, "attacked graph");
    std::cout << "provenance: " << prov.dump() << "\nmanifest: " << manifest.s << "\n";
    return 0;
  }

  if (generate->parsed()) {
    GraphHandle input = load_graph_or_die(graph_path);
    std::string config = load_config(config_path).dump();
    CString summary;
    check(rograd_generate(input.g, config.c_str(), out_path.c_str(), &summary.s), "generate");
    std::cout << "samples written to " << out_path << "\nsummary: " << summary.s << "\n";
    return 0;
  }

  if (enrich->parsed()) {
    GraphHandle input = load_graph_or_die(graph_path);
    std::string config = load_config(config_path).dump();
    GraphHandle enriched;
    CString stats;
    check(rograd_enrich(input.g, samples_path.c_str(), config.c_str(), &enriched.g, &stats.s),
          "enrich");
    CString manifest;
    check(rograd_graph_save(enriched.g, out_path.c_str(), name.c_str(), &manifest.s),
          "saving enriched graph");
    print_graph_summary(enriched.g, "enriched graph");
    std::cout << "stats: " << stats.s << "\nmanifest: " << manifest.s << "\n";
    return 0;
  }

  if (train->parsed()) {
    GraphHandle input = load_graph_or_die(graph_path);
    std::string config = load_config(config_path).dump();
    fs::create_directories(out_path);
    std::string log_csv = (fs::path(out_path) / "training_log.csv").string();
    std::string checkpoint = (fs::path(out_path) / "r2cl_checkpoint.bin").string();
    GraphHandle refined;
    CString summary;
    check(rograd_train_r2cl(input.g, config.c_str(), &refined.g, log_csv.c_str(),
                            checkpoint.c_str(), &summary.s),
          "train-r2cl");
    CString manifest;
    check(rograd_graph_save(refined.g, out_path.c_str(), name.c_str(), &manifest.s),
          "saving refined graph");
    print_graph_summary(refined.g, "refined graph");
    std::cout << "summary: " << summary.s << "\nmanifest: " << manifest.s << "\n";
    return 0;
  }

  if (classify->parsed()) {
    GraphHandle input = load_graph_or_die(graph_path);
    if (classify->count("--split"))
      check(rograd_graph_split(input.g, train_fraction, seed), "splitting masks");
    std::string config = load_config(config_path).dump();
    CString report_json;
    check(rograd_classify(input.g, config.c_str(), &report_json.s), "classify");
    std::cout << report_json.s << "\n";
    return 0;
  }

  if (grid->parsed()) {
    std::string config = read_text_file(config_path);
    CString summary;
    rograd_status status = rograd_run_grid(config.c_str(), out_path.c_str(), &summary.s);
    if (summary.s) std::cout << summary.s << "\n";
    if (status != ROGRAD_OK) die("grid");
    std::cout << "artifacts in " << out_path << "\n";
    return 0;
  }

  if (report->parsed()) {
    CString report_json;
    check(rograd_report(results_path.c_str(), curve_path.empty() ? nullptr : curve_path.c_str(),
                        &report_json.s),
          "report");
    std::cout << report_json.s << "\n";
    return 0;
  }

  return 0;
}
