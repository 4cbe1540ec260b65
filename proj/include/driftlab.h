/* driftlab C API. All handles are opaque; every fallible call returns a dl_status. */
#ifndef DRIFTLAB_H
#define DRIFTLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(DRIFTLAB_BUILDING)
#define DL_API __attribute__((visibility("default")))
#else
#define DL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* values match the library error codes */
typedef enum dl_status {
  DL_OK = 0,
  DL_INVALID_ARGUMENT,
  DL_NO_CONVERGENCE,
  DL_OUT_OF_BAND,
  DL_GAP_VIOLATION,
  DL_ESCAPED_CHANNEL,
  DL_NOT_FOUND,
  DL_CONTINUATION_FAILED,
  DL_DOMAIN_EXCEEDED,
  DL_BAND_OVERFLOW,
  DL_GENERATION_LIMIT,
  DL_PADDING_FAILED,
  DL_SHOOTING_FAILED,
  DL_BOUND_VIOLATED,
  DL_FEWER_FOUND,
  DL_GRAPH_FOLD,
  DL_CONFIG_ERROR,
  DL_IO_ERROR,
  DL_INTERNAL = 100
} dl_status;

/* process exit codes of a run */
enum { DL_EXIT_PASS = 0, DL_EXIT_FAILURE = 1, DL_EXIT_INCONCLUSIVE = 2, DL_EXIT_CONFIG = 3 };

typedef struct dl_config dl_config;
typedef struct dl_manifest dl_manifest;
typedef struct dl_map dl_map;

DL_API const char* dl_version(void);
DL_API const char* dl_status_name(int status);
/* message of the last failed call on this thread; empty when none */
DL_API const char* dl_last_error(void);

DL_API int dl_config_load(const char* path, dl_config** out);
DL_API int dl_config_parse(const char* json_text, dl_config** out);
DL_API int dl_config_set_threads(dl_config* cfg, unsigned threads);
DL_API int dl_config_set_seed(dl_config* cfg, uint64_t seed);
DL_API int dl_config_set_tol(dl_config* cfg, double tol);
/* output_dir from the config; owned by cfg */
DL_API const char* dl_config_output_dir(const dl_config* cfg);
DL_API void dl_config_free(dl_config* cfg);

/* command: check | cylinder | scattering | transport | drift | mu-scan.
   A run that completes (even with failed invariants) returns DL_OK; see dl_manifest_exit_code. */
DL_API int dl_run(const dl_config* cfg, const char* command, const char* out_dir, dl_manifest** out);
DL_API int dl_manifest_exit_code(const dl_manifest* m);
/* manifest as JSON text; owned by m */
DL_API const char* dl_manifest_json(const dl_manifest* m);
DL_API void dl_manifest_free(dl_manifest* m);

/* column descriptions of a command's output files; owned by the library until the next call on this thread */
DL_API int dl_plot_columns(const char* command, const char** text);

/* maps, from the same JSON table as the config's "map" entry */
DL_API int dl_map_create(const char* json_text, dl_map** out);
DL_API void dl_map_free(dl_map* map);
/* p = (phi, I, x, y) */
DL_API int dl_map_apply(const dl_map* map, const double in[4], double out[4]);
DL_API int dl_map_apply_inverse(const dl_map* map, const double in[4], double out[4]);
/* row-major 4x4 */
DL_API int dl_map_jacobian(const dl_map* map, const double in[4], double out[16]);
/* largest |J^T Omega J - Omega| over n random points */
DL_API int dl_map_symplectic_residual(const dl_map* map, size_t n, uint64_t seed, double* residual);

DL_API int dl_standard_saddle(double k, double* lambda_u, double* lambda_s);

#ifdef __cplusplus
}
#endif

#endif
