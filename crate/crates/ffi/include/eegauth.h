#ifndef EEGAUTH_H
#define EEGAUTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define EEGAUTH_OK 0

#define EEGAUTH_ERR_NULL_POINTER 1

#define EEGAUTH_ERR_INVALID_ARGUMENT 2

#define EEGAUTH_ERR_DATA 3

#define EEGAUTH_ERR_NUMERICAL 4

#define EEGAUTH_ERR_BUFFER_TOO_SMALL 5

#define EEGAUTH_ERR_PANIC 6

#define EEGAUTH_METRIC_EUCLIDEAN 0

#define EEGAUTH_METRIC_COSINE 1

#define EEGAUTH_METRIC_MANHATTAN 2

#define EEGAUTH_SCORER_DISTANCE 0

#define EEGAUTH_SCORER_LOGREG 1

#define EEGAUTH_SCORER_LDA 2

/**
 * Opened corpus manifest.
 */
typedef struct EegauthCorpus EegauthCorpus;

/**
 * Trained per-subject scorer of any kind.
 */
typedef struct EegauthScorer EegauthScorer;

/**
 * Distance template built from enrollment vectors.
 */
typedef struct EegauthTemplate EegauthTemplate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *eegauth_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *eegauth_last_error_message(void);

void eegauth_clear_error(void);

/**
 * Equal error rate of the given genuine and impostor scores (higher = more genuine).
 *
 * # Safety
 * `genuine` and `impostor` must point to `n_genuine` / `n_impostor` doubles;
 * `out` must be writable.
 */
int32_t eegauth_eer(const double *genuine, size_t n_genuine, const double *impostor, size_t n_impostor, double *out);

/**
 * FRR at the most permissive threshold whose FAR is at most `far_target`.
 *
 * # Safety
 * Same contract as [`eegauth_eer`].
 */
int32_t eegauth_frr_at_far(const double *genuine, size_t n_genuine, const double *impostor, size_t n_impostor, double far_target, double *out);

/**
 * One-sided Welch PSD of `x` with a periodic Hann taper.
 *
 * Writes `segment_len / 2 + 1` bins into `out` and their count into `out_len`.
 * Returns `EEGAUTH_ERR_BUFFER_TOO_SMALL` (with `out_len` set) when `out_cap`
 * is short.
 *
 * # Safety
 * `x` must hold `n` doubles, `out` `out_cap` doubles; `out_len` must be writable.
 */
int32_t eegauth_welch_psd(const double *x, size_t n, double rate_hz, size_t segment_len, double overlap, double *out, size_t out_cap, size_t *out_len);

/**
 * Burg AR(`order`) fit; `coeffs` receives `order` values with
 * `x[t] = Σ coeffs[k] x[t-1-k] + e[t]`. `error_power` may be NULL.
 *
 * # Safety
 * `x` must hold `n` doubles and `coeffs` `order` doubles.
 */
int32_t eegauth_burg(const double *x, size_t n, size_t order, double *coeffs, double *error_power);

/**
 * Open a corpus manifest (file or directory).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t eegauth_corpus_open(const char *path, struct EegauthCorpus **out);

/**
 * # Safety
 * `corpus` must come from [`eegauth_corpus_open`]; `n` must be writable.
 */
int32_t eegauth_corpus_n_sessions(const struct EegauthCorpus *corpus, size_t *n);

/**
 * # Safety
 * As [`eegauth_corpus_n_sessions`].
 */
int32_t eegauth_corpus_n_channels(const struct EegauthCorpus *corpus, size_t *n);

/**
 * # Safety
 * As [`eegauth_corpus_n_sessions`].
 */
int32_t eegauth_corpus_rate_hz(const struct EegauthCorpus *corpus, double *rate);

/**
 * # Safety
 * `corpus` must come from [`eegauth_corpus_open`] or be NULL, and not be used afterwards.
 */
void eegauth_corpus_free(struct EegauthCorpus *corpus);

/**
 * Build a centroid template from `n_vectors` row-major vectors of length `dim`.
 *
 * # Safety
 * `vectors` must hold `n_vectors * dim` doubles; `out` must be writable.
 */
int32_t eegauth_template_new(const double *vectors, size_t n_vectors, size_t dim, int32_t metric_code, struct EegauthTemplate **out);

/**
 * Similarity (negated distance to the centroid) of one probe.
 *
 * # Safety
 * `probe` must hold `dim` doubles; `out` must be writable.
 */
int32_t eegauth_template_score(const struct EegauthTemplate *template_, const double *probe, size_t dim, double *out);

/**
 * # Safety
 * `template` must come from [`eegauth_template_new`] or be NULL.
 */
void eegauth_template_free(struct EegauthTemplate *template_);

/**
 * Train a scorer for one subject. Classifier kinds need `n_negatives >= 1`
 * impostor vectors; the distance kind ignores them.
 *
 * # Safety
 * `enrollment` must hold `n_enrollment * dim` doubles, `negatives`
 * `n_negatives * dim` doubles; `out` must be writable.
 */
int32_t eegauth_scorer_train(int32_t kind_code, int32_t metric_code, const double *enrollment, size_t n_enrollment, const double *negatives, size_t n_negatives, size_t dim, struct EegauthScorer **out);

/**
 * Load a classifier saved by [`eegauth_scorer_save`] or the engine.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
int32_t eegauth_scorer_load(const char *path, struct EegauthScorer **out);

/**
 * Save a classifier scorer; distance scorers have no model to save.
 *
 * # Safety
 * `scorer` must be a live handle; `path` a NUL-terminated string.
 */
int32_t eegauth_scorer_save(const struct EegauthScorer *scorer, const char *path);

/**
 * # Safety
 * `probe` must hold `dim` doubles; `out` must be writable.
 */
int32_t eegauth_scorer_score(const struct EegauthScorer *scorer, const double *probe, size_t dim, double *out);

/**
 * # Safety
 * `scorer` must come from a scorer constructor or be NULL.
 */
void eegauth_scorer_free(struct EegauthScorer *scorer);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EEGAUTH_H */
