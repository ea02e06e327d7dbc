#ifndef SIGN_C_H
#define SIGN_C_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define SIGN_API __declspec(dllexport)
#else
#define SIGN_API __attribute__((visibility("default")))
#endif

/* Status codes double as process exit codes for the command-line tool. */
typedef enum sign_status {
    SIGN_OK = 0,
    SIGN_ERR_OTHER = 1,
    SIGN_ERR_CONFIG = 2,
    SIGN_ERR_DATA = 3,
    SIGN_ERR_DIVERGENCE = 4,
    SIGN_ERR_IO = 5
} sign_status;

typedef struct sign_config sign_config;
typedef struct sign_model sign_model;

SIGN_API const char* sign_version(void);

/* Message and category ("config", "data", "format", "divergence", "io", ...)
 * of the last failed call on this thread. Empty strings after success. */
SIGN_API const char* sign_last_error(void);
SIGN_API const char* sign_last_error_category(void);

SIGN_API sign_config* sign_config_new(void);
SIGN_API void sign_config_free(sign_config* cfg);
/* Applies a `key = value` file on top of the current values. */
SIGN_API sign_status sign_config_load(sign_config* cfg, const char* path);
SIGN_API sign_status sign_config_set(sign_config* cfg, const char* key, const char* value);
/* "key=value" */
SIGN_API sign_status sign_config_assign(sign_config* cfg, const char* assignment);
/* Copies the value into buf (NUL-terminated, truncated to len). *needed gets
 * the full length including the terminator when non-null. */
SIGN_API sign_status sign_config_get(const sign_config* cfg, const char* key, char* buf, size_t len,
                                     size_t* needed);
SIGN_API size_t sign_config_key_count(void);
SIGN_API const char* sign_config_key(size_t index);

/* Runs one of: gen-data, pretrain-score, pregen-pairs, train, sample, edit,
 * eval, trace, scaling-study. */
SIGN_API sign_status sign_run(const char* command, const sign_config* cfg, const char* out_dir);
SIGN_API size_t sign_command_count(void);
SIGN_API const char* sign_command_name(size_t index);

/* Generator loaded from a checkpoint file. */
SIGN_API sign_status sign_model_load(const char* path, sign_model** out);
SIGN_API void sign_model_free(sign_model* model);
SIGN_API size_t sign_model_dim(const sign_model* model);
/* rows x dim row-major input and output; in and out may alias. */
SIGN_API sign_status sign_model_apply(const sign_model* model, const double* in, size_t rows, double* out);

#ifdef __cplusplus
}
#endif

#endif
