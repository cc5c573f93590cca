/*
 * rograd C API: robustness toolkit for text-attributed graphs.
 *
 * Every function returns a rograd_status; on failure the thread-local
 * message from rograd_last_error() describes what went wrong. Objects are
 * opaque handles released with their _free function. Strings returned
 * through char** out-parameters are heap-allocated; release them with
 * rograd_string_free().
 *
 * Configuration crosses this boundary as JSON text with the same schema as
 * the CLI config files (see README).
 */
#ifndef ROGRAD_H
#define ROGRAD_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rograd_status {
  ROGRAD_OK = 0,
  ROGRAD_ERR_IO = 1,
  ROGRAD_ERR_PARSE = 2,
  ROGRAD_ERR_INVALID = 3,
  ROGRAD_ERR_RUNTIME = 4
} rograd_status;

typedef struct rograd_graph rograd_graph;

const char* rograd_version(void);

/* Thread-local message of the most recent failure in this thread. */
const char* rograd_last_error(void);

void rograd_string_free(char* s);

/* ------------------------------------------------------------------ graphs */

rograd_status rograd_graph_load(const char* manifest_path, rograd_graph** out_graph);
/* Writes <dir>/<name>.manifest.json plus data files; the manifest path is
 * returned through out_manifest_path when non-NULL. */
rograd_status rograd_graph_save(const rograd_graph* graph, const char* dir, const char* name,
                                char** out_manifest_path);
void rograd_graph_free(rograd_graph* graph);

int64_t rograd_graph_num_nodes(const rograd_graph* graph);
int64_t rograd_graph_num_edges(const rograd_graph* graph);
int32_t rograd_graph_num_classes(const rograd_graph* graph);
int64_t rograd_graph_feature_dim(const rograd_graph* graph);

/* Fixed 20%/20% val/test plus a stratified train split at train_fraction. */
rograd_status rograd_graph_split(rograd_graph* graph, double train_fraction, uint64_t seed);

/* ----------------------------------------------------------------- attacks */

/* spec_json: {"nra_ratio","sha_ratio","fda_ratio","labeled_ratio","seed"}.
 * out_provenance_json receives the removal counts when non-NULL. */
rograd_status rograd_attack(const rograd_graph* graph, const char* spec_json,
                            rograd_graph** out_graph, char** out_provenance_json);

/* Compound attack intensity (exact) and its two-decimal curve label. */
rograd_status rograd_intensity(const char* spec_json, double* out_intensity, double* out_label);

/* ---------------------------------------------------------------- pipeline */

/* Runs sample generation against the graph and writes one JSON line per
 * sample to out_jsonl_path; a summary lands in out_summary_json. */
rograd_status rograd_generate(const rograd_graph* graph, const char* config_json,
                              const char* out_jsonl_path, char** out_summary_json);

/* Inserts previously generated samples (JSONL) into the graph. */
rograd_status rograd_enrich(const rograd_graph* graph, const char* samples_jsonl_path,
                            const char* config_json, rograd_graph** out_graph,
                            char** out_stats_json);

/* Contrastive refinement; returns the refined graph (trained representations
 * as features). Optional: per-epoch log CSV and a model checkpoint. */
rograd_status rograd_train_r2cl(const rograd_graph* graph, const char* config_json,
                                rograd_graph** out_graph, const char* log_csv_path,
                                const char* checkpoint_path, char** out_summary_json);

/* Trains the configured backbone on the graph's masks; the report carries
 * best validation / test accuracy and epochs run. */
rograd_status rograd_classify(const rograd_graph* graph, const char* config_json,
                              char** out_report_json);

/* Full attack-grid sweep driven by a grid config; artifacts are written
 * under out_dir (results.csv, curve.csv, robustness.json). */
rograd_status rograd_run_grid(const char* grid_config_json, const char* out_dir,
                              char** out_summary_json);

/* Aggregates an existing results.csv into a curve CSV and a robustness
 * report. curve_csv_path may be NULL to skip writing the curve. */
rograd_status rograd_report(const char* results_csv_path, const char* curve_csv_path,
                            char** out_report_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* ROGRAD_H */
