#ifndef RELCLUST_H
#define RELCLUST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RcStatus {
  RC_STATUS_OK = 0,
  RC_STATUS_NULL_POINTER = 1,
  RC_STATUS_INVALID_UTF8 = 2,
  // Bad input data or configuration.
  RC_STATUS_VALIDATION = 3,
  RC_STATUS_IO = 4,
  // Any other failure inside the pipeline.
  RC_STATUS_RUNTIME = 5,
  // The requested value does not exist (e.g. no gold labels to score).
  RC_STATUS_UNAVAILABLE = 6,
  RC_STATUS_BUFFER_TOO_SMALL = 7,
  RC_STATUS_PANIC = 8,
} RcStatus;

typedef struct RcCorpus RcCorpus;

typedef struct RcEmbeddings RcEmbeddings;

typedef struct RcRun RcRun;

// Pairwise precision, recall and F1 in [0, 1].
typedef struct RcScore {
  double precision;
  double recall;
  double f1;
  size_t n_evaluated;
} RcScore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failure on this thread; empty if none. The pointer
// stays valid until the next failing call on this thread.
const char *rc_last_error(void);

// Library version as a static NUL-terminated string.
const char *rc_version(void);

// Loads a JSON-lines corpus.
enum RcStatus rc_corpus_load(const char *path, struct RcCorpus **out);

enum RcStatus rc_corpus_len(const struct RcCorpus *corpus, size_t *out);

void rc_corpus_free(struct RcCorpus *corpus);

// Loads word vectors from a text file. `dim` of 0 infers the dimension.
enum RcStatus rc_embeddings_load(const char *path, size_t dim, struct RcEmbeddings **out);

enum RcStatus rc_embeddings_dim(const struct RcEmbeddings *table, size_t *out);

enum RcStatus rc_embeddings_len(const struct RcEmbeddings *table, size_t *out);

void rc_embeddings_free(struct RcEmbeddings *table);

// Runs featurization, reduction, clustering and evaluation in memory on
// already-loaded inputs. `config_json` is a JSON run configuration; its
// path and output fields are ignored.
enum RcStatus rc_run_execute(const struct RcCorpus *corpus,
                             const struct RcEmbeddings *table,
                             const char *config_json,
                             struct RcRun **out);

// Runs the full pipeline from files named in `config_json`, writing the
// usual outputs to its `out` directory.
enum RcStatus rc_run_pipeline(const char *config_json, struct RcRun **out);

enum RcStatus rc_run_len(const struct RcRun *run, size_t *out);

// Copies cluster labels into `labels`, which must hold `capacity` entries.
enum RcStatus rc_run_labels(const struct RcRun *run, size_t *labels, size_t capacity);

// Instance id of row `index`, owned by `run`.
enum RcStatus rc_run_instance_id(const struct RcRun *run, size_t index, const char **out);

// Score against the corpus gold labels; `Unavailable` if there were none.
enum RcStatus rc_run_score(const struct RcRun *run, struct RcScore *out);

void rc_run_free(struct RcRun *run);

// Pairwise scores of `predicted` against `gold`; a negative gold label
// marks an unlabeled instance, which is left out.
enum RcStatus rc_pairwise_f1(const size_t *predicted,
                             const int64_t *gold,
                             size_t n,
                             struct RcScore *out);

// Ward clustering of `n` row-major points of dimension `dim`, cut into
// `k` clusters. Writes `n` labels.
enum RcStatus rc_hac_ward(const double *data, size_t n, size_t dim, size_t k, size_t *labels);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELCLUST_H */
