/* Public C API of the MIM out-of-distribution detection toolkit.
 *
 * All functions return a mim_status; non-zero codes match the CLI exit
 * codes. On failure, mim_last_error() returns a thread-local message.
 * Opaque handles must be released with their matching _free function.
 */
#ifndef MIM_H
#define MIM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mim_status {
    MIM_OK = 0,
    MIM_ERR_CONFIG = 2,  /* bad config file / invalid parameters */
    MIM_ERR_DATA = 3,    /* unreadable or malformed data/model files */
    MIM_ERR_NUMERIC = 4  /* numeric failure or internal contract violation */
} mim_status;

/* Thread-local message describing the most recent failure in this thread. */
const char* mim_last_error(void);

const char* mim_version(void);

/* ---- experiment pipeline (paths and formats come from the JSON config) -- */

/* Full pipeline: pretrain, evaluate before, fine-tune one epoch, evaluate
 * after, emit report.csv / losses.csv / manifest.json into the output dir.
 * The MIM_OUT_DIR environment variable overrides the config's output_dir. */
mim_status mim_run(const char* config_path);

/* Pretrain only; writes model_pretrained.mim1 into the output dir. */
mim_status mim_pretrain(const char* config_path);

/* One MIM fine-tuning epoch on a saved model; writes model_finetuned.mim1
 * and losses.csv into the output dir. */
mim_status mim_finetune(const char* config_path, const char* model_path);

/* Evaluate a saved model; writes report.csv into the output dir. */
mim_status mim_evaluate(const char* config_path, const char* model_path);

/* Generate the synthetic benchmark as MIMD dataset files in out_dir. */
mim_status mim_gen_synth(const char* config_path, const char* out_dir);

/* ---- model handle -------------------------------------------------------- */

typedef struct mim_model mim_model;

mim_status mim_model_load(const char* path, mim_model** out);
void mim_model_free(mim_model* model);

/* Number of classes, or 0 if model is NULL. */
uint32_t mim_model_num_classes(const mim_model* model);

/* Scores n samples with one detector kind ("msp", "max_logit", "energy",
 * "entropy"). pixels is row-major [n x c x h x w] with values in [0, 1];
 * scores_out must hold n doubles. Higher score means more in-distribution. */
mim_status mim_model_score(const mim_model* model, const double* pixels, uint32_t n, uint32_t c,
                           uint32_t h, uint32_t w, const char* detector, double* scores_out);

#ifdef __cplusplus
}
#endif

#endif /* MIM_H */
