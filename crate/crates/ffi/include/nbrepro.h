/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef NBREPRO_H
#define NBREPRO_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NbrDisposition {
  NBR_DISPOSITION_NORMALIZED = 0,
  NBR_DISPOSITION_EXCLUDED_USER_ONLY = 1,
  NBR_DISPOSITION_EXCLUDED_PAGES = 2,
  NBR_DISPOSITION_MALFORMED = 3,
} NbrDisposition;

typedef enum NbrStatus {
  NBR_STATUS_OK = 0,
  NBR_STATUS_NULL_ARG = 1,
  NBR_STATUS_INVALID_UTF8 = 2,
  // The input was read but rejected: bad notebook, bad number, etc.
  NBR_STATUS_INVALID_INPUT = 3,
  NBR_STATUS_IO = 4,
  NBR_STATUS_STORE = 5,
  NBR_STATUS_INTERNAL = 6,
} NbrStatus;

// Parsed notebook.
typedef struct NbrNotebook NbrNotebook;

// Open pipeline store.
typedef struct NbrStore NbrStore;

typedef struct NbrNotebookMetrics {
  uint64_t total_cells;
  uint64_t code_cells;
  uint64_t markdown_cells;
  uint64_t raw_cells;
  uint64_t empty_cells;
  uint64_t cells_with_output;
  // -1 when no cell has an execution count.
  int64_t max_execution_count;
  // NaN when there are no code cells.
  double md_code_ratio;
} NbrNotebookMetrics;

typedef struct NbrFootprintParams {
  double cores;
  double core_power_w;
  double usage;
  double mem_gb;
  double mem_power_w_per_gb;
  double pue;
  double carbon_intensity_kg_per_kwh;
} NbrFootprintParams;

typedef struct NbrFootprint {
  double energy_kwh;
  double carbon_kgco2e;
  double tree_months;
} NbrFootprint;

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *nbr_last_error_message(void);

// # Safety
// `s` must come from this library and not have been freed.
void nbr_string_free(char *s);

// Classifies a repository link. `out_canonical` receives
// `https://github.com/<owner>/<repo>` for normalized links and NULL
// otherwise; it may itself be NULL when only the disposition is wanted.
//
// # Safety
// `raw` must be a NUL-terminated string; out pointers must be writable.
enum NbrStatus nbr_normalize_link(const char *raw,
                                  enum NbrDisposition *out_disposition,
                                  char **out_canonical);

// Opens (creating if needed) a pipeline store file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum NbrStatus nbr_store_open(const char *path, struct NbrStore **out);

// # Safety
// `store` must come from [`nbr_store_open`] and not have been closed.
void nbr_store_close(struct NbrStore *store);

// Funnel counts as a JSON object keyed by stage name.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
enum NbrStatus nbr_store_funnel_json(const struct NbrStore *store, char **out);

// Exception classes ranked by frequency, as a JSON array of
// `{"class", "count", "share"}` objects.
//
// # Safety
// `store` must be a live handle; `out` must be writable.
enum NbrStatus nbr_store_exceptions_json(const struct NbrStore *store, char **out);

// Parses a notebook file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum NbrStatus nbr_notebook_parse_file(const char *path, struct NbrNotebook **out);

// Parses notebook JSON held in memory.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum NbrStatus nbr_notebook_parse_str(const char *json, struct NbrNotebook **out);

// # Safety
// `nb` must come from a parse function and not have been freed.
void nbr_notebook_free(struct NbrNotebook *nb);

// # Safety
// `nb` must be a live handle; `out` must be writable.
enum NbrStatus nbr_notebook_metrics(const struct NbrNotebook *nb, struct NbrNotebookMetrics *out);

// Language and version as JSON: `{"language": "python", "version": "3.8"}`.
//
// # Safety
// `nb` must be a live handle; `out` must be writable.
enum NbrStatus nbr_notebook_language_json(const struct NbrNotebook *nb, char **out);

// Style findings as a JSON array of `{"cell", "line", "column", "code"}`.
//
// # Safety
// `nb` must be a live handle; `out` must be writable.
enum NbrStatus nbr_notebook_style_json(const struct NbrNotebook *nb, char **out);

// Imports as a JSON array of `{"cell", "line", "module", "top_level"}`.
//
// # Safety
// `nb` must be a live handle; `out` must be writable.
enum NbrStatus nbr_notebook_imports_json(const struct NbrNotebook *nb, char **out);

// Fills `out` with the default hardware and grid parameters.
//
// # Safety
// `out` must be writable.
enum NbrStatus nbr_footprint_default_params(struct NbrFootprintParams *out);

// Energy, carbon and tree-months for `runtime_h` hours. `params` may be
// NULL for the defaults.
//
// # Safety
// `params` must be NULL or readable; `out` must be writable.
enum NbrStatus nbr_footprint_estimate(double runtime_h,
                                      const struct NbrFootprintParams *params,
                                      struct NbrFootprint *out);

#endif  /* NBREPRO_H */
