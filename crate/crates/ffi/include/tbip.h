#ifndef TBIP_H
#define TBIP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Result of every fallible call. Codes 1 to 3 match the CLI exit codes.
 */
typedef enum TbipStatus {
  TBIP_STATUS_OK = 0,
  TBIP_STATUS_IO_ERROR = 1,
  TBIP_STATUS_VALIDATION_ERROR = 2,
  TBIP_STATUS_NUMERIC_ERROR = 3,
  TBIP_STATUS_NULL_POINTER = 4,
  TBIP_STATUS_PANIC = 5,
} TbipStatus;

/**
 * A preprocessed corpus loaded from a corpus directory.
 */
typedef struct TbipCorpus TbipCorpus;

/**
 * A fitted TBIP model.
 */
typedef struct TbipFit TbipFit;

/**
 * Training options. Obtain defaults from [`tbip_train_options_default`].
 */
typedef struct TbipTrainOptions {
  size_t num_topics;
  size_t batch_size;
  size_t max_steps;
  uint64_t seed;
  double learning_rate;
  size_t mc_samples;
  bool use_log_transform;
  size_t report_interval;
  size_t pretrain_sweeps;
  double prior_shape;
  double prior_rate;
} TbipTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on the same thread.
 */
const char *tbip_last_error(void);

struct TbipTrainOptions tbip_train_options_default(void);

/**
 * Load a corpus directory (`counts.txt`, `vocab.txt`, `authors.csv`).
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TbipStatus tbip_corpus_load(const char *dir, struct TbipCorpus **out);

/**
 * # Safety
 * `corpus` must be null or a handle from [`tbip_corpus_load`] not yet freed.
 */
void tbip_corpus_free(struct TbipCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t tbip_corpus_num_docs(const struct TbipCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t tbip_corpus_num_terms(const struct TbipCorpus *corpus);

/**
 * # Safety
 * `corpus` must be null or a live handle.
 */
size_t tbip_corpus_num_authors(const struct TbipCorpus *corpus);

/**
 * Train TBIP on `corpus`. `options` may be null for the defaults.
 *
 * # Safety
 * `corpus` must be a live handle, `options` null or valid, `out` valid.
 */
enum TbipStatus tbip_train(const struct TbipCorpus *corpus,
                           const struct TbipTrainOptions *options,
                           struct TbipFit **out);

/**
 * Write a fit to `dir` in the CLI's fit format.
 *
 * # Safety
 * `fit` must be a live handle and `dir` a NUL-terminated string.
 */
enum TbipStatus tbip_fit_save(const struct TbipFit *fit, const char *dir);

/**
 * Read a TBIP fit written by [`tbip_fit_save`] or `tbip train tbip`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TbipStatus tbip_fit_load(const char *dir, struct TbipFit **out);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void tbip_fit_free(struct TbipFit *fit);

/**
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t tbip_fit_num_authors(const struct TbipFit *fit);

/**
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t tbip_fit_num_topics(const struct TbipFit *fit);

/**
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t tbip_fit_num_terms(const struct TbipFit *fit);

/**
 * Copy the fitted ideal points into `out`, which holds `capacity` values.
 *
 * # Safety
 * `fit` must be a live handle and `out` valid for `capacity` writes.
 */
enum TbipStatus tbip_fit_ideal_points(const struct TbipFit *fit, double *out, size_t capacity);

/**
 * Copy author `index`'s name as a NUL-terminated string into `buf`.
 * `needed`, when not null, receives the buffer size required.
 *
 * # Safety
 * `fit` must be a live handle, `buf` valid for `capacity` bytes or null
 * with `capacity` 0, `needed` null or valid.
 */
enum TbipStatus tbip_fit_author_name(const struct TbipFit *fit,
                                     size_t index,
                                     char *buf,
                                     size_t capacity,
                                     size_t *needed);

/**
 * Last recorded ELBO of the fit, or NaN when none was recorded.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double tbip_fit_final_elbo(const struct TbipFit *fit);

/**
 * Pearson and Spearman correlation of two score vectors of length `n`.
 *
 * # Safety
 * `a` and `b` must be valid for `n` reads; `pearson` and `spearman` valid.
 */
enum TbipStatus tbip_compare(const double *a,
                             const double *b,
                             size_t n,
                             double *pearson,
                             double *spearman);

/**
 * Probability of a yea vote.
 */
double tbip_vote_prob(double alpha, double eta, double x);

/**
 * Poisson rates of one document. `theta` has `num_topics` entries, `beta`
 * and `eta` are `num_topics x num_terms` row-major, `out` receives
 * `num_terms` rates.
 *
 * # Safety
 * All pointers must be valid for the lengths above.
 */
enum TbipStatus tbip_rate(const double *theta,
                          size_t num_topics,
                          const double *beta,
                          const double *eta,
                          size_t num_terms,
                          double x,
                          double weight,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TBIP_H */
