/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The newsrec Authors */

/* C interface to the newsrec library. Every call returns an nr_status;
 * objects are opaque handles released with their _free function. The last
 * error message is kept per session (or per thread for calls that take no
 * session) and stays valid until the next failing call. */

#ifndef NEWSREC_NEWSREC_H_
#define NEWSREC_NEWSREC_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define NR_API __declspec(dllexport)
#else
#define NR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nr_status {
  NR_OK = 0,
  NR_ERR_INTERNAL = 1,
  NR_ERR_CONFIG = 2,
  NR_ERR_DATA = 3,
  NR_ERR_NUMERICAL = 4,
  NR_ERR_DIMENSION = 5,
  NR_ERR_INDEX = 6,
  NR_ERR_CONTRACT = 7,
  NR_ERR_IO = 8,
  NR_ERR_ARGUMENT = 9
} nr_status;

typedef struct nr_session nr_session;
typedef struct nr_config nr_config;
typedef struct nr_model nr_model;

/* Receives progress text; `text` is only valid during the call. */
typedef void (*nr_log_fn)(const char* text, void* user);

NR_API const char* nr_version(void);
NR_API const char* nr_status_name(nr_status status);
/* Message of the last failing call on this thread that took no session. */
NR_API const char* nr_last_error(void);

/* A session routes log output (stdout when no callback is set) and keeps
 * the last error message. */
NR_API nr_status nr_session_create(nr_session** out);
NR_API void nr_session_free(nr_session* session);
NR_API nr_status nr_session_set_log(nr_session* session, nr_log_fn fn, void* user);
NR_API const char* nr_session_last_error(const nr_session* session);

NR_API nr_status nr_config_load(const char* path, nr_config** out);
NR_API nr_status nr_config_parse(const char* json, nr_config** out);
NR_API void nr_config_free(nr_config* config);
NR_API nr_status nr_config_set_seed(nr_config* config, uint64_t seed);
NR_API nr_status nr_config_seed(const nr_config* config, uint64_t* out);
/* Writes the 16 hex digit config hash plus a terminator; `size` >= 17. */
NR_API nr_status nr_config_hash(const nr_config* config, char* buf, size_t size);

/* Commands. Artifacts go under `out_dir`. */
NR_API nr_status nr_cmd_gen_data(nr_session* session, const nr_config* config, const char* out_dir);
NR_API nr_status nr_cmd_pretrain(nr_session* session, const nr_config* config, const char* out_dir);
/* `pretrained_dir` may be NULL; `scratch` non-zero forces random init. */
NR_API nr_status nr_cmd_train(nr_session* session, const nr_config* config, const char* out_dir,
                              const char* pretrained_dir, int scratch);
/* `checkpoint_dir` may be NULL to score an untrained model. */
NR_API nr_status nr_cmd_evaluate(nr_session* session, const nr_config* config, const char* out_dir,
                                 const char* checkpoint_dir, int oracle_scorer);
NR_API nr_status nr_cmd_compare(nr_session* session, const nr_config* config, const char* out_dir);
NR_API nr_status nr_cmd_export_embeddings(nr_session* session, const nr_config* config,
                                          const char* out_dir, const char* checkpoint_dir);

/* Trained model saved by the train command (its model/ directory). */
NR_API nr_status nr_model_load(const char* dir, nr_model** out);
NR_API void nr_model_free(nr_model* model);
NR_API nr_status nr_model_param_count(const nr_model* model, size_t* out);
NR_API nr_status nr_model_embedding_dim(const nr_model* model, size_t* out);
/* Encodes titles given as token ids (CLS first, no padding); `lengths[i]`
 * ids of title i follow those of title i-1 in `ids`. Writes count x dim
 * doubles, row-major, into `out`. */
NR_API nr_status nr_model_encode_titles(const nr_model* model, const int32_t* ids, const size_t* lengths,
                                        size_t count, double* out);

/* Per-impression metrics. Labels are 0/1. */
NR_API nr_status nr_metric_auc(const double* scores, const int32_t* labels, size_t n, double* out);
NR_API nr_status nr_metric_mrr(const double* scores, const int32_t* labels, size_t n, double* out);
NR_API nr_status nr_metric_ndcg(const double* scores, const int32_t* labels, size_t n, size_t k, double* out);

#ifdef __cplusplus
}
#endif

#endif /* NEWSREC_NEWSREC_H_ */
