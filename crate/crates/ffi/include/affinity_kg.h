#ifndef AFFINITY_KG_H
#define AFFINITY_KG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AkgFold {
  AKG_FOLD_TRAIN = 0,
  AKG_FOLD_VALID = 1,
  AKG_FOLD_TEST = 2,
} AkgFold;

/**
 * Call outcome; the nonzero codes match the CLI exit codes where they overlap.
 */
typedef enum AkgStatus {
  AKG_STATUS_OK = 0,
  AKG_STATUS_INPUT_ERROR = 2,
  AKG_STATUS_CONSISTENCY_ERROR = 3,
  AKG_STATUS_RUNTIME_ERROR = 4,
  AKG_STATUS_NULL_POINTER = 5,
  AKG_STATUS_PANIC = 6,
} AkgStatus;

/**
 * Opaque knowledge graph handle.
 */
typedef struct AkgGraph AkgGraph;

/**
 * Opaque model handle.
 */
typedef struct AkgModel AkgModel;

typedef struct AkgMetrics {
  double hits1;
  double hits3;
  double hits10;
  double mrr;
  /**
   * Evaluated directions, two per triple.
   */
  size_t n;
} AkgMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *akg_last_error(void);

/**
 * Loads `train.tsv`, `valid.tsv` and `test.tsv` from `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AkgStatus akg_graph_load(const char *dir, bool undirected, struct AkgGraph **out);

/**
 * # Safety
 * `graph` must come from [`akg_graph_load`] and not be used afterwards.
 */
void akg_graph_free(struct AkgGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle or NULL (returns 0).
 */
size_t akg_graph_n_entities(const struct AkgGraph *graph);

/**
 * Relation count including reciprocals, as models index them.
 *
 * # Safety
 * `graph` must be a live handle or NULL (returns 0).
 */
size_t akg_graph_n_relations(const struct AkgGraph *graph);

/**
 * # Safety
 * `graph` must be a live handle, `label` NUL-terminated, `out` valid.
 */
enum AkgStatus akg_graph_entity_id(const struct AkgGraph *graph, const char *label, size_t *out);

/**
 * Loads a checkpoint directory. When `graph` is non-NULL the checkpoint's
 * vocabulary must match it.
 *
 * # Safety
 * `dir` must be NUL-terminated, `graph` live or NULL, `out` valid.
 */
enum AkgStatus akg_model_load(const char *dir, const struct AkgGraph *graph, struct AkgModel **out);

/**
 * # Safety
 * `model` must come from [`akg_model_load`] and not be used afterwards.
 */
void akg_model_free(struct AkgModel *model);

/**
 * Inference-time logit of `(h, r, t)`.
 *
 * # Safety
 * `model` must be live and `out` valid.
 */
enum AkgStatus akg_model_score(const struct AkgModel *model,
                               size_t h,
                               size_t r,
                               size_t t,
                               double *out);

/**
 * Writes the logits of every tail into `out[0..len]`; `len` must equal the
 * entity count.
 *
 * # Safety
 * `model` must be live and `out` must hold `len` doubles.
 */
enum AkgStatus akg_model_score_all_tails(const struct AkgModel *model,
                                         size_t h,
                                         size_t r,
                                         double *out,
                                         size_t len);

/**
 * Ranks both directions of every triple in `fold` and aggregates metrics.
 *
 * # Safety
 * `model` and `graph` must be live and `out` valid.
 */
enum AkgStatus akg_evaluate(const struct AkgModel *model,
                            const struct AkgGraph *graph,
                            enum AkgFold fold,
                            bool filtered,
                            struct AkgMetrics *out);

/**
 * Probability that a uniformly random top-`degree` list over `n_e`
 * entities is exactly right.
 *
 * # Safety
 * `out` must be valid.
 */
enum AkgStatus akg_random_top_n_probability(uint64_t n_e, uint64_t degree, double *out);

/**
 * Library version, a static NUL-terminated string.
 */
const char *akg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFFINITY_KG_H */
