/* placer — training-free person insertion into scene images.
 *
 * C interface to the shared library. All functions are synchronous; an
 * engine handle owns the resolved configuration and may be used from one
 * thread at a time. Detailed failure messages are available through
 * placer_engine_last_error() (or placer_last_error() for creation
 * failures).
 */
#ifndef PLACER_H
#define PLACER_H

#ifdef __cplusplus
extern "C" {
#endif

typedef struct placer_engine placer_engine;

typedef enum placer_status {
    PLACER_OK = 0,
    PLACER_ERR_INVALID_ARGUMENT = 1,
    PLACER_ERR_CONFIG = 2,
    PLACER_ERR_IO = 3,
    PLACER_ERR_INSERTION_FAILURE = 4,
    PLACER_ERR_NUMERICAL_DIVERGENCE = 5,
    PLACER_ERR_TRANSPORT = 6,
    PLACER_ERR_UNSUPPORTED = 7,
    PLACER_ERR_PARTIAL_FAILURE = 8,
    PLACER_ERR_INTERNAL = 9
} placer_status;

const char* placer_version(void);
const char* placer_status_name(placer_status status);

/* Creates an engine from a JSON configuration document (NULL or empty means
 * all defaults). Unknown keys are rejected. */
placer_status placer_engine_create(const char* config_json, placer_engine** out_engine);
void placer_engine_destroy(placer_engine* engine);

/* Message for the last failed call on this engine; valid until the next
 * call on the same engine. */
const char* placer_engine_last_error(const placer_engine* engine);

/* Message for the last failed placer_engine_create in this thread. */
const char* placer_last_error(void);

/* Fully resolved configuration as JSON; the string stays valid until the
 * next call on the same engine. */
const char* placer_engine_config_json(placer_engine* engine);

typedef struct placer_insert_request {
    const char* scene_path;      /* required: PNG or JPEG scene image */
    const char* reference_path;  /* required: PNG or JPEG subject image */
    const char* scene_prompt;    /* required: scene description with the person */
    const char* subject_prompt;  /* required: subject description */
    const char* overrides_json;  /* optional: per-run config overrides */
    const char* run_id;          /* optional: output run id */
} placer_insert_request;

/* Runs one insertion and writes out_dir/{result.png, first_pass.png,
 * person_mask.png, config.json, log.jsonl}. */
placer_status placer_insert(placer_engine* engine, const placer_insert_request* request,
                            const char* out_dir);

/* Runs the pipeline for every manifest row, then writes report.json and
 * report.txt under out_dir. Row failures are recorded in failures.json and
 * reported as PLACER_ERR_PARTIAL_FAILURE. jobs <= 0 uses the configured
 * value. */
placer_status placer_eval(placer_engine* engine, const char* manifest_path,
                          const char* out_dir, const char* overrides_json, int jobs);

/* Runs an ablation family and writes per-variant outputs plus a labeled
 * contact_sheet.png. variant_json examples:
 *   {"kind":"no_blending"}
 *   {"kind":"guidance_sweep","weights":[1,3,5,7.5]}
 *   {"kind":"window_sweep","windows":[[0,10],[10,20]]} */
placer_status placer_ablate(placer_engine* engine, const placer_insert_request* request,
                            const char* variant_json, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* PLACER_H */
