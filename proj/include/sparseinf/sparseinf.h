/* SPDX-License-Identifier: Apache-2.0 */
/*
 * C interface to the sparse information form library. Every function
 * returns a status code; on failure sinf_last_error() describes the error
 * for the calling thread. Strings returned through char** are owned by the
 * caller and released with sinf_string_free.
 */
#ifndef SPARSEINF_H
#define SPARSEINF_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sinf_status {
  SINF_OK = 0,
  SINF_ERR_CONTRACT = 1,
  SINF_ERR_NOT_PD = 2,
  SINF_ERR_NUMERIC = 3,
  SINF_ERR_CONVERGENCE = 4,
  SINF_ERR_TRAINING = 5,
  SINF_ERR_IO = 6,
  SINF_ERR_INTERNAL = 7,
  SINF_ERR_CHECK_FAILED = 8 /* a run or verification completed with failures */
} sinf_status;

typedef struct sinf_dataset sinf_dataset;
typedef struct sinf_model sinf_model;
typedef struct sinf_posterior sinf_posterior;

const char* sinf_last_error(void);
const char* sinf_version(void);
void sinf_string_free(char* s);

/* Datasets. */
sinf_status sinf_dataset_toy(uint64_t seed, size_t n_points, sinf_dataset** out);
sinf_status sinf_dataset_load(const char* csv_path, sinf_dataset** out);
sinf_status sinf_dataset_save(const sinf_dataset* d, const char* csv_path);
sinf_status sinf_dataset_shape(const sinf_dataset* d, size_t* rows, size_t* cols, int* classification);
/* Row-major rows x cols copy of the inputs. */
sinf_status sinf_dataset_inputs(const sinf_dataset* d, double* out);
/* Regression targets (rows x outputs, row-major) or labels; pass NULL for the
 * one that does not apply. */
sinf_status sinf_dataset_targets(const sinf_dataset* d, size_t* outputs, double* y, int* labels);
void sinf_dataset_free(sinf_dataset* d);

/* MAP models. config_json: {"spec": {...}, "train": {...}, "seed": n}. */
sinf_status sinf_model_train(const char* config_json, const sinf_dataset* data, sinf_model** out);
sinf_status sinf_model_load(const char* path, sinf_model** out);
sinf_status sinf_model_save(const sinf_model* m, const char* path);
sinf_status sinf_model_dims(const sinf_model* m, size_t* input_dim, size_t* output_dim, size_t* num_params);
/* x is row-major rows x input_dim; out is row-major rows x output_dim. */
sinf_status sinf_model_predict(const sinf_model* m, const double* x, size_t rows, double* out);
void sinf_model_free(sinf_model* m);

/* Posteriors. posterior_json holds the posterior configuration. */
sinf_status sinf_posterior_build(const sinf_model* m, const sinf_dataset* data, const char* posterior_json,
                                 uint64_t seed, sinf_posterior** out);
sinf_status sinf_posterior_load(const char* path, sinf_posterior** out);
sinf_status sinf_posterior_save(const sinf_posterior* p, const char* path);
sinf_status sinf_posterior_report(const sinf_posterior* p, char** json);
sinf_status sinf_posterior_dims(const sinf_posterior* p, size_t* input_dim, size_t* output_dim, size_t* num_params);
/* count draws of the flattened parameter vector, row-major count x num_params.
 * Draw t of layer l uses the stream (seed, t, l). */
sinf_status sinf_posterior_sample(const sinf_posterior* p, uint64_t seed, size_t count, double* out);
/* linearized != 0: regression only, k_mc and seed ignored. variance may be
 * NULL; it is left untouched for classification. */
sinf_status sinf_posterior_predict(const sinf_posterior* p, const double* x, size_t rows, int linearized,
                                   size_t k_mc, uint64_t seed, double* mean, double* variance);
sinf_status sinf_posterior_acquire(const sinf_posterior* p, const double* pool, size_t rows, size_t* index);
void sinf_posterior_free(sinf_posterior* p);

/* Pipelines. config_json follows the experiment configuration schema. */
sinf_status sinf_run_pipeline(const char* config_json, const char* out_dir, char** manifest_json);
sinf_status sinf_verify_manifest(const char* manifest_path, char** mismatches_json);
/* ranks: comma separated, e.g. "25%,50%,75%,100%". */
sinf_status sinf_sweep_rank(const char* config_json, const char* ranks, char** csv);
sinf_status sinf_sweep_hyper(const char* config_json, const char* sweep_json, char** csv);
sinf_status sinf_active_learn(const char* al_json, uint64_t seed, char** csv);
/* Theorem suite. Returns SINF_ERR_CHECK_FAILED when any check fails. */
sinf_status sinf_verify(const char* verify_json, char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* SPARSEINF_H */
