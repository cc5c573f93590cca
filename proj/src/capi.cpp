#include "rograd/rograd.h"

#include <cstring>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "rograd/harness.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error;

rograd_status status_of(rograd::ErrorKind kind) {
  switch (kind) {
    case rograd::ErrorKind::io: return ROGRAD_ERR_IO;
    case rograd::ErrorKind::parse: return ROGRAD_ERR_PARSE;
    case rograd::ErrorKind::invalid_argument: return ROGRAD_ERR_INVALID;
    case rograd::ErrorKind::runtime: return ROGRAD_ERR_RUNTIME;
  }
  return ROGRAD_ERR_RUNTIME;
}

template <typename Fn>
rograd_status guarded(Fn&& fn) {
  try {
    fn();
    return ROGRAD_OK;
  } catch (const rograd::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return ROGRAD_ERR_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

rograd_status invalid(const char* message) {
  g_last_error = message;
  return ROGRAD_ERR_INVALID;
}

}  // namespace

struct rograd_graph {
  rograd::TextAttributedGraph g;
};

extern "C" {

const char* rograd_version(void) { return "0.1.0"; }

const char* rograd_last_error(void) { return g_last_error.c_str(); }

void rograd_string_free(char* s) { delete[] s; }

rograd_status rograd_graph_load(const char* manifest_path, rograd_graph** out_graph) {
  if (!manifest_path || !out_graph) return invalid("null argument");
  return guarded([&] {
    auto* h = new rograd_graph{rograd::load_graph(manifest_path)};
    *out_graph = h;
  });
}

rograd_status rograd_graph_save(const rograd_graph* graph, const char* dir, const char* name,
                                char** out_manifest_path) {
  if (!graph || !dir || !name) return invalid("null argument");
  return guarded([&] {
    std::string path = rograd::save_graph(graph->g, dir, name);
    if (out_manifest_path) *out_manifest_path = dup_string(path);
  });
}

void rograd_graph_free(rograd_graph* graph) { delete graph; }

int64_t rograd_graph_num_nodes(const rograd_graph* graph) {
  return graph ? graph->g.num_nodes() : -1;
}
int64_t rograd_graph_num_edges(const rograd_graph* graph) {
  return graph ? graph->g.num_edges() : -1;
}
int32_t rograd_graph_num_classes(const rograd_graph* graph) {
  return graph ? graph->g.num_classes : -1;
}
int64_t rograd_graph_feature_dim(const rograd_graph* graph) {
  return graph ? graph->g.feature_dim() : -1;
}

rograd_status rograd_graph_split(rograd_graph* graph, double train_fraction, uint64_t seed) {
  if (!graph) return invalid("null graph");
  return guarded([&] {
    graph->g = rograd::with_masks(graph->g, rograd::split_masks(graph->g, train_fraction, seed));
  });
}

rograd_status rograd_attack(const rograd_graph* graph, const char* spec_json,
                            rograd_graph** out_graph, char** out_provenance_json) {
  if (!graph || !spec_json || !out_graph) return invalid("null argument");
  return guarded([&] {
    rograd::AttackSpec spec = rograd::AttackSpec::from_json(spec_json);
    rograd::AttackedGraph attacked = rograd::apply_compound(graph->g, spec);
    *out_graph = new rograd_graph{std::move(attacked.graph)};
    if (out_provenance_json) {
      json doc = {{"nodes_removed", attacked.provenance.nodes_removed},
                  {"same_class_edges_removed", attacked.provenance.same_class_edges_removed},
                  {"feature_rows_zeroed", attacked.provenance.feature_rows_zeroed},
                  {"labels_withheld", attacked.provenance.labels_withheld},
                  {"intensity", rograd::intensity(spec)},
                  {"intensity_label", rograd::intensity_label(spec)}};
      *out_provenance_json = dup_string(doc.dump());
    }
  });
}

rograd_status rograd_intensity(const char* spec_json, double* out_intensity, double* out_label) {
  if (!spec_json) return invalid("null spec");
  return guarded([&] {
    rograd::AttackSpec spec = rograd::AttackSpec::from_json(spec_json);
    if (out_intensity) *out_intensity = rograd::intensity(spec);
    if (out_label) *out_label = rograd::intensity_label(spec);
  });
}

rograd_status rograd_generate(const rograd_graph* graph, const char* config_json,
                              const char* out_jsonl_path, char** out_summary_json) {
  if (!graph || !config_json || !out_jsonl_path) return invalid("null argument");
  return guarded([&] {
    auto cfg = rograd::PipelineConfig::from_json_text(config_json);
    auto encoder = cfg.make_encoder();
    rograd::LlmGateway gateway(cfg.make_llm_backend(), cfg.gateway);

    const rograd::TextAttributedGraph& g = graph->g;
    rograd::TextAttributedGraph working =
        cfg.unified_embeddings ? rograd::unify_embeddings(g, *encoder) : g;
    rograd::EmbeddingStore store = rograd::build_store(working, *encoder);

    std::vector<rograd::ClassCount> plan;
    for (std::int32_t c = 0; c < working.num_classes; ++c) {
      if (!store.has_class(c, rograd::EntryKind::original)) continue;
      plan.push_back({c, working.class_name(c), cfg.samples_per_class});
    }
    auto texts = [&working](const std::string& id) {
      std::int32_t idx = working.index_of(id);
      if (idx < 0) rograd::fail(rograd::ErrorKind::invalid_argument, "unknown store id: " + id);
      return working.texts[static_cast<std::size_t>(idx)];
    };
    auto samples = rograd::generate_batch(plan, store, gateway, cfg.prompts, *encoder, cfg.sggm,
                                          cfg.sggm.decoding.seed, texts);
    rograd::save_samples_jsonl(out_jsonl_path, samples);

    if (out_summary_json) {
      int clean = 0;
      for (const auto& s : samples) clean += s.clean;
      auto stats = gateway.stats();
      json doc = {{"samples", samples.size()},
                  {"clean", clean},
                  {"llm_requests", stats.requests},
                  {"transport_retries", stats.transport_retries},
                  {"parse_retries", stats.parse_retries}};
      *out_summary_json = dup_string(doc.dump());
    }
  });
}

rograd_status rograd_enrich(const rograd_graph* graph, const char* samples_jsonl_path,
                            const char* config_json, rograd_graph** out_graph,
                            char** out_stats_json) {
  if (!graph || !samples_jsonl_path || !config_json || !out_graph) return invalid("null argument");
  return guarded([&] {
    auto cfg = rograd::PipelineConfig::from_json_text(config_json);
    auto samples = rograd::load_samples_jsonl(samples_jsonl_path);

    rograd::TextAttributedGraph working = graph->g;
    if (cfg.unified_embeddings) {
      auto encoder = cfg.make_encoder();
      working = rograd::unify_embeddings(working, *encoder);
    }
    rograd::EnrichedGraph enriched = rograd::enrich(working, samples, cfg.enrichment);
    *out_graph = new rograd_graph{enriched.graph};
    if (out_stats_json) {
      json doc = {{"nodes_before", enriched.stats.nodes_before},
                  {"edges_before", enriched.stats.edges_before},
                  {"samples_added", enriched.stats.samples_added},
                  {"edges_added", enriched.stats.edges_added},
                  {"neighbor_counts", enriched.stats.neighbor_counts}};
      *out_stats_json = dup_string(doc.dump());
    }
  });
}

rograd_status rograd_train_r2cl(const rograd_graph* graph, const char* config_json,
                                rograd_graph** out_graph, const char* log_csv_path,
                                const char* checkpoint_path, char** out_summary_json) {
  if (!graph || !config_json || !out_graph) return invalid("null argument");
  return guarded([&] {
    auto cfg = rograd::PipelineConfig::from_json_text(config_json);
    auto encoder = cfg.make_encoder();
    rograd::LlmGateway gateway(cfg.make_llm_backend(), cfg.gateway);

    rograd::R2clResult result =
        rograd::train_r2cl(graph->g, cfg.r2cl, gateway, cfg.prompts, *encoder);
    *out_graph = new rograd_graph{result.refined_graph};

    if (log_csv_path && *log_csv_path) {
      std::ofstream log(log_csv_path);
      if (!log) rograd::fail(rograd::ErrorKind::io, "cannot write training log");
      log << "epoch,loss,refined\n";
      for (const auto& e : result.epoch_log)
        log << e.epoch << ',' << e.mean_loss << ',' << (e.refined ? 1 : 0) << '\n';
    }
    if (checkpoint_path && *checkpoint_path)
      result.model.save(checkpoint_path, rograd::config_fingerprint(cfg.r2cl));

    if (out_summary_json) {
      json doc = {{"epochs", result.epoch_log.size()},
                  {"refinement_events", result.refinement_events},
                  {"anchors_processed", result.rag_log.anchors_processed},
                  {"anchors_failed", result.rag_log.anchors_failed},
                  {"edges_connected", result.rag_log.edges_connected},
                  {"edges_removed", result.rag_log.edges_removed}};
      *out_summary_json = dup_string(doc.dump());
    }
  });
}

rograd_status rograd_classify(const rograd_graph* graph, const char* config_json,
                              char** out_report_json) {
  if (!graph || !config_json || !out_report_json) return invalid("null argument");
  return guarded([&] {
    auto cfg = rograd::PipelineConfig::from_json_text(config_json);
    rograd::TrainedClassifier trained = rograd::train_classifier(graph->g, cfg.backbone);
    json doc = {{"backbone", rograd::architecture_name(cfg.backbone.arch)},
                {"best_val_acc", trained.report.best_val_acc},
                {"test_acc", trained.report.test_acc},
                {"epochs_run", trained.report.epochs_run},
                {"warnings", trained.report.warnings}};
    *out_report_json = dup_string(doc.dump());
  });
}

rograd_status rograd_run_grid(const char* grid_config_json, const char* out_dir,
                              char** out_summary_json) {
  if (!grid_config_json || !out_dir) return invalid("null argument");
  return guarded([&] {
    rograd::GridConfig grid;
    try {
      grid = rograd::GridConfig::from_json(json::parse(grid_config_json));
    } catch (const json::exception& e) {
      rograd::fail(rograd::ErrorKind::parse, std::string("grid config: ") + e.what());
    }
    rograd::GridResult result = rograd::run_grid(grid, out_dir);
    if (out_summary_json) {
      json doc = {{"cells", result.rows.size()},
                  {"failed_cells", result.failed_cells},
                  {"curve_points", result.curve.size()},
                  {"clean_acc", result.report.clean_acc},
                  {"worst_acc", result.report.worst_acc},
                  {"avg_acc", result.report.avg_acc}};
      if (result.report.norm_auc) doc["norm_auc"] = *result.report.norm_auc;
      *out_summary_json = dup_string(doc.dump());
    }
    if (result.failed_cells > 0)
      rograd::fail(rograd::ErrorKind::runtime,
                   std::to_string(result.failed_cells) + " grid cells failed");
  });
}

rograd_status rograd_report(const char* results_csv_path, const char* curve_csv_path,
                            char** out_report_json) {
  if (!results_csv_path || !out_report_json) return invalid("null argument");
  return guarded([&] {
    auto rows = rograd::read_results_csv(results_csv_path);
    auto curve = rograd::aggregate_by_intensity(rows);
    if (curve_csv_path && *curve_csv_path) rograd::write_curve_csv(curve_csv_path, curve);
    rograd::RobustnessReport report = rograd::robustness_metrics(curve);
    *out_report_json = dup_string(report.to_json());
  });
}

}  // extern "C"
