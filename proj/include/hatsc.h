/* C interface to the spell-correction library: corpus synthesis, training,
 * evaluation, phrase correction, and checkpoint inspection.
 *
 * Conventions:
 *   - Every function that can fail returns hatsc_status; 0 means success.
 *     hatsc_last_error() describes the most recent failure on this thread.
 *   - Strings returned through char** are heap-allocated; release them with
 *     hatsc_free(). They are NUL-terminated UTF-8 (JSON unless noted).
 *   - `config_text` is the structured-text configuration ("[section]" headers
 *     with "key = value" lines); NULL means all defaults. `overrides` entries
 *     look like "train.epochs=9" or "seed=5" (no dot = global key) and take
 *     precedence over the file text.
 *   - A "run directory" is created by hatsc_train: model.ckpt (+ .opt
 *     optimizer sidecar), vocab.*.vocab files, manifest.json, and
 *     metrics.ndjson all live there under fixed names.
 */
#ifndef HATSC_H
#define HATSC_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum hatsc_status {
  HATSC_OK = 0,
  HATSC_ERROR = 1,   /* unexpected internal failure */
  HATSC_USAGE = 2,   /* caller passed unusable arguments */
  HATSC_DATA = 3,    /* missing or corrupt files / data */
  HATSC_NUMERIC = 4  /* numerical failure (e.g. training diverged) */
} hatsc_status;

/* Library version string, e.g. "hatsc 0.1.0". Static storage; do not free. */
const char* hatsc_version(void);

/* Message for the most recent failure on the calling thread ("" if none).
 * Static storage; do not free. Overwritten by the next failing call. */
const char* hatsc_last_error(void);

/* Releases any string returned through a char** out-parameter. */
void hatsc_free(char* s);

/* Reads one key from configuration text into *out_value (caller frees).
 * HATSC_DATA when the text does not parse or the key is absent (the error
 * message distinguishes the two). */
hatsc_status hatsc_config_get(const char* config_text, const char* section, const char* key,
                              char** out_value);

/* Generates a noisy-pair corpus from a clean phrase list (one phrase per
 * line) and writes train.tsv / dev.tsv / test.tsv plus manifest.json into
 * out_dir (created if needed). lexicon_path NULL disables phonetic
 * substitutions (every generated pair is then an edit or identity pair).
 * out_json (optional) receives generation statistics. */
hatsc_status hatsc_synth(const char* phrases_path, const char* lexicon_path, const char* out_dir,
                         const char* config_text, const char* const* overrides,
                         size_t n_overrides, char** out_json);

/* Trains a model on a pair TSV (dev_tsv optional, may be NULL) and populates
 * out_dir as a run directory. With resume != 0 an existing checkpoint in
 * out_dir is loaded and training continues (input file hashes must match the
 * recorded manifest). out_json (optional) receives the training report. */
hatsc_status hatsc_train(const char* train_tsv, const char* dev_tsv, const char* out_dir,
                         const char* config_text, const char* const* overrides,
                         size_t n_overrides, int resume, char** out_json);

/* Decodes every source in a pair TSV against a trained run directory and
 * scores the hypotheses: character / word / sentence error rates, the edit
 * breakdown, and input provenance (checkpoint and corpus hashes). */
hatsc_status hatsc_eval(const char* run_dir, const char* pairs_tsv, int beam_width,
                        char** out_json);

/* Reports a run directory's model configuration, parameter count, tensor
 * inventory, and recorded manifest. */
hatsc_status hatsc_inspect(const char* run_dir, char** out_json);

/* A loaded model + vocabularies, reusable across many corrections. */
typedef struct hatsc_corrector hatsc_corrector;

/* NULL on failure (see hatsc_last_error). */
hatsc_corrector* hatsc_open(const char* run_dir);
void hatsc_close(hatsc_corrector* h);

int hatsc_corrector_streams(const hatsc_corrector* h);
int64_t hatsc_corrector_param_count(const hatsc_corrector* h);

/* Corrects one phrase. max_len 0 means the model's position limit.
 * *out_text receives the corrected phrase (caller frees); *out_truncated
 * (optional) is set to 1 when no hypothesis finished within the cap. */
hatsc_status hatsc_correct(hatsc_corrector* h, const char* phrase, int beam_width, int max_len,
                           char** out_text, int* out_truncated);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* HATSC_H */
