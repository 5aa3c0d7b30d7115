#ifndef INSRANK_H
#define INSRANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum InsrankMethod {
  INSRANK_METHOD_PREVIOUS_YEAR = 0,
  INSRANK_METHOD_RANKINS1 = 1,
  INSRANK_METHOD_RANKINS2 = 2,
} InsrankMethod;

// Result codes of every fallible call.
typedef enum InsrankStatus {
  INSRANK_STATUS_OK = 0,
  INSRANK_STATUS_NULL_ARGUMENT = 1,
  INSRANK_STATUS_INVALID_ARGUMENT = 2,
  INSRANK_STATUS_IO = 3,
  INSRANK_STATUS_INVALID_DATA = 4,
  INSRANK_STATUS_MISSING_HISTORY = 5,
  INSRANK_STATUS_PIPELINE = 6,
  INSRANK_STATUS_OUT_OF_RANGE = 7,
  INSRANK_STATUS_PANIC = 8,
} InsrankStatus;

// A loaded or generated corpus.
typedef struct InsrankCorpus InsrankCorpus;

// Predicted relevance of every tracked institution, in corpus order.
typedef struct InsrankRelevance InsrankRelevance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Loads `papers.tsv`, `affiliations.tsv`, `institutions.tsv` and
// `venues.tsv` from `dir`.
//
// # Safety
// `dir` must be a NUL-terminated string and `out` a writable pointer.
enum InsrankStatus insrank_corpus_load(const char *dir, struct InsrankCorpus **out);

// Generates a synthetic corpus; unspecified generator settings keep their
// defaults.
//
// # Safety
// `out` must be a writable pointer.
enum InsrankStatus insrank_corpus_synthetic(uint32_t institutions,
                                            uint32_t venues,
                                            int32_t first_year,
                                            int32_t last_year,
                                            uint32_t papers_per_venue_year,
                                            double drift,
                                            uint64_t seed,
                                            struct InsrankCorpus **out);

// # Safety
// `corpus` must be null or a handle not yet freed.
void insrank_corpus_free(struct InsrankCorpus *corpus);

// Number of tracked institutions, or 0 for a null handle.
//
// # Safety
// `corpus` must be null or a live handle.
size_t insrank_corpus_institution_count(const struct InsrankCorpus *corpus);

// Predicts `venue` (id or abbreviation) for `target_year` using data before
// that year. `seed` drives clustering and the forest of the feature-matrix
// method; the other methods ignore it.
//
// # Safety
// `corpus` must be a live handle, `venue` a NUL-terminated string and `out`
// a writable pointer.
enum InsrankStatus insrank_rank(const struct InsrankCorpus *corpus,
                                enum InsrankMethod method,
                                const char *venue,
                                int32_t target_year,
                                uint64_t seed,
                                struct InsrankRelevance **out);

// # Safety
// `relevance` must be null or a live handle.
size_t insrank_relevance_len(const struct InsrankRelevance *relevance);

// Reads entry `index`. The id stays valid until the handle is freed.
//
// # Safety
// `relevance` must be a live handle; `id` and `value` writable pointers.
enum InsrankStatus insrank_relevance_get(const struct InsrankRelevance *relevance,
                                         size_t index,
                                         const char **id,
                                         double *value);

// # Safety
// `relevance` must be null or a handle not yet freed.
void insrank_relevance_free(struct InsrankRelevance *relevance);

// NDCG@n of ranking items by descending `predicted` (ties by lower index)
// against true relevances `truth`; both arrays have `len` entries.
//
// # Safety
// `predicted` and `truth` must point to `len` readable doubles (or be null
// when `len` is 0); `out` must be writable.
enum InsrankStatus insrank_ndcg(const double *predicted,
                                const double *truth,
                                size_t len,
                                size_t n,
                                double *out);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next call on this thread.
const char *insrank_last_error(void);

// Library version, a static string.
const char *insrank_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INSRANK_H */
