#ifndef FEWREC_H
#define FEWREC_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes; the CLI maps them one-to-one onto exit codes. */
typedef enum {
    FR_OK = 0,
    FR_ERR_CONFIG = 2,  /* invalid configuration or parameters */
    FR_ERR_DATA = 3,    /* missing/corrupt files, format violations */
    FR_ERR_NUMERIC = 4  /* numeric failure (non-finite values, etc.) */
} fr_status;

/* Message for the most recent failure on this thread, or "" if none. The
   pointer stays valid until the next fewrec call on the same thread. */
const char* fr_last_error(void);

/* Frees strings returned through the char** out-parameters below. */
void fr_string_free(char* s);

/* Each operation takes a JSON configuration object (documented in README.md)
   and writes its outputs to the paths named there. Operations that produce a
   report also return it as a string when `report_out` is non-NULL. */
fr_status fr_gen_data(const char* config_json);
fr_status fr_distill(const char* config_json);
fr_status fr_train(const char* config_json);
fr_status fr_adapt(const char* config_json);
fr_status fr_eval(const char* config_json, char** report_out);
fr_status fr_ablate(const char* config_json, char** report_out);
fr_status fr_onn(const char* config_json, char** report_out);

/* Opaque voxel-grid handle for format interop. */
typedef struct fr_grid fr_grid;

fr_status fr_grid_load(const char* path, fr_grid** out);
fr_status fr_grid_save(const fr_grid* grid, const char* path);
int fr_grid_resolution(const fr_grid* grid);
fr_status fr_grid_iou(const fr_grid* a, const fr_grid* b, double* iou_out);
void fr_grid_free(fr_grid* grid);

#ifdef __cplusplus
}
#endif

#endif
