/*
 * sdr — spatial-dependency-reduced video forgery detection, C API.
 *
 * The library trains and evaluates a multi-branch temporal-consistency
 * classifier over synthetic video clips. All functions return sdr_status;
 * on any failure sdr_last_error() carries a human-readable message for the
 * calling thread. Handles are opaque and owned by the caller via the
 * matching *_free function.
 */
#ifndef SDR_H
#define SDR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SDR_API __declspec(dllexport)
#else
#define SDR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum sdr_status {
    SDR_OK = 0,
    SDR_ERR_GRADCHECK = 1,     /* gradient check failed tolerance */
    SDR_ERR_CONFIG = 2,        /* invalid configuration */
    SDR_ERR_OUTPUT_EXISTS = 3, /* refusing to overwrite without force */
    SDR_ERR_DATA = 4,          /* missing or malformed input data */
    SDR_ERR_NUMERIC = 5,       /* NaN/Inf during computation */
    SDR_ERR_IO = 6,            /* filesystem failure */
    SDR_ERR_INVALID = 7,       /* bad arguments to a C API call */
    SDR_ERR_INTERNAL = 10      /* broken internal invariant */
} sdr_status;

SDR_API const char* sdr_version(void);

/* Message for the most recent failure on this thread; never NULL. */
SDR_API const char* sdr_last_error(void);

/* Receives progress lines (no trailing newline). May be NULL anywhere. */
typedef void (*sdr_log_fn)(const char* line, void* user);

/* Receives one CSV row at a time, header first. */
typedef void (*sdr_row_fn)(const char* csv_row, void* user);

/* ---- synthetic datasets ------------------------------------------------ */

typedef struct sdr_dataset sdr_dataset;

/* Builds clips + manifest in memory from a dataset config (JSON text). */
SDR_API sdr_status sdr_dataset_generate(const char* config_json, sdr_dataset** out);

/* Loads clips.sdrc (+ manifest.csv when present) from a directory. */
SDR_API sdr_status sdr_dataset_load(const char* dir, sdr_dataset** out);

/*
 * Writes clips.sdrc and manifest.csv into out_dir. A nonempty out_dir is
 * refused with SDR_ERR_OUTPUT_EXISTS unless force is nonzero.
 */
SDR_API sdr_status sdr_dataset_write(const sdr_dataset* ds, const char* out_dir, int force);

SDR_API sdr_status sdr_dataset_info(const sdr_dataset* ds, uint32_t* count, uint32_t* t,
                                    uint32_t* c, uint32_t* h, uint32_t* w);

SDR_API void sdr_dataset_free(sdr_dataset* ds);

/* ---- training ----------------------------------------------------------- */

typedef struct sdr_run_metrics {
    double train_auc, train_acc;
    double test_auc, test_acc;
    uint64_t steps;
    uint64_t param_count;
} sdr_run_metrics;

/*
 * Trains per the train config (JSON text). data_dir must hold
 * <train_subdir>/clips.sdrc and <test_subdir>/clips.sdrc. Writes
 * checkpoint.sdr1, history.csv and metrics.json into out_dir (created if
 * missing). dry_run logs the parameter count and step plan, writes nothing
 * and leaves metrics zeroed except param_count/steps.
 */
SDR_API sdr_status sdr_train(const char* config_json, const char* data_dir, const char* out_dir,
                             int dry_run, sdr_log_fn log, void* log_user,
                             sdr_run_metrics* metrics_out);

/* ---- trained models ------------------------------------------------------ */

typedef struct sdr_model sdr_model;

/* Loads a checkpoint together with the train config that produced it. */
SDR_API sdr_status sdr_model_load(const char* checkpoint_path, const char* config_json,
                                  sdr_model** out);

/* Video-level AUC/ACC on <data_dir>/<split_subdir>/clips.sdrc. */
SDR_API sdr_status sdr_model_evaluate(const sdr_model* model, const char* data_dir,
                                      const char* split_subdir, double* auc, double* acc);

SDR_API sdr_status sdr_model_param_count(const sdr_model* model, uint64_t* count);

SDR_API void sdr_model_free(sdr_model* model);

/* ---- verification and experiments ---------------------------------------- */

/*
 * Finite-difference check of L_MI, L_Con, L_CE and the weighted total on a
 * tiny 64-bit model. config_json may be NULL for defaults. A JSON report is
 * written into report_json (if non-NULL). Returns SDR_ERR_GRADCHECK when
 * any term exceeds tolerance.
 */
SDR_API sdr_status sdr_gradcheck(const char* config_json, char* report_json, size_t report_len);

/*
 * Style-shift branch-count sweep. n_list is comma-separated, e.g. "2,3,4,5".
 * Rows (header "n,seed,auc,acc") stream through on_row and, when out_csv is
 * non-NULL, are appended to that file as each run completes.
 */
SDR_API sdr_status sdr_sweep_branches(const char* config_json, const char* n_list,
                                      const char* out_csv, sdr_row_fn on_row, void* row_user,
                                      sdr_log_fn log, void* log_user);

/*
 * Component-combination study (header "tpa,trfi,contrastive,seed,auc,acc"):
 * none, TRFI only, TPA+TRFI, TPA+TRFI+contrastive, over the config's seeds.
 */
SDR_API sdr_status sdr_ablate(const char* config_json, const char* out_csv, sdr_row_fn on_row,
                              void* row_user, sdr_log_fn log, void* log_user);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* SDR_H */
