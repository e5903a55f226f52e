#ifndef POLYFILT_POLYFILT_H
#define POLYFILT_POLYFILT_H

/* C interface to the polyfilt set-membership filter. Every call returns a pf_status;
 * on failure pf_last_error() describes the problem (thread-local, valid until the next call). */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define PF_API __attribute__((visibility("default")))
#else
#define PF_API
#endif

typedef enum pf_status
{
    PF_OK = 0,
    PF_ERR_CONFIG = 2,       /* malformed or invalid scenario / option */
    PF_ERR_IO = 3,           /* file could not be read or written */
    PF_ERR_INCONSISTENT = 4, /* measurement incompatible with the model */
    PF_ERR_SDP = 5,          /* an SDP did not reach optimality */
    PF_ERR_VERIFY = 6,       /* a saved certificate failed re-checking */
    PF_ERR_ARGUMENT = 7,     /* bad argument (null pointer, wrong dimension, ...) */
    PF_ERR_INTERNAL = 8
} pf_status;

typedef struct pf_scenario pf_scenario;

PF_API const char* pf_version(void);
PF_API const char* pf_last_error(void);
PF_API const char* pf_status_name(pf_status status);

PF_API pf_status pf_scenario_load(const char* path, pf_scenario** out);
PF_API pf_status pf_scenario_parse(const char* json_text, pf_scenario** out);
PF_API void pf_scenario_free(pf_scenario* scenario);

PF_API pf_status pf_scenario_set_seed(pf_scenario* scenario, uint64_t seed);
PF_API pf_status pf_scenario_set_sos_degree(pf_scenario* scenario, int half_degree);
PF_API pf_status pf_scenario_set_max_halfspaces(pf_scenario* scenario, size_t count);
PF_API pf_status pf_scenario_set_points(pf_scenario* scenario, size_t count);
PF_API pf_status pf_scenario_set_threads(pf_scenario* scenario, int threads);
PF_API pf_status pf_scenario_horizon(const pf_scenario* scenario, size_t* horizon);

/* Writes trajectory.json / trajectory.csv into out_dir. */
PF_API pf_status pf_simulate(const pf_scenario* scenario, const char* out_dir);

/* Runs the filter and writes its results into out_dir. On PF_ERR_INCONSISTENT or PF_ERR_SDP,
 * *failed_step (if non-null) receives the 1-based step; otherwise it is set to 0. */
PF_API pf_status pf_filter(const pf_scenario* scenario, const char* out_dir, size_t* failed_step);

typedef struct pf_verify_summary
{
    size_t checked;
    size_t failed;
    double max_identity_residual;
    double min_eigenvalue;
} pf_verify_summary;

/* Re-checks all certificates under out_dir. Returns PF_ERR_VERIFY if any fails. */
PF_API pf_status pf_verify(const char* out_dir, pf_verify_summary* summary);

/* Writes plot.svg; the path is copied into buf (truncated to buf_size, NUL-terminated). */
PF_API pf_status pf_plot(const char* out_dir, char* buf, size_t buf_size);

/* Writes report.csv. The text table is returned through *text; release it with pf_string_free. */
PF_API pf_status pf_report(const char* out_dir, char** text);
PF_API void pf_string_free(char* text);

/* Smallest certified nu with omega^T x <= nu on {x : g_i(x) >= 0}. Polynomials are given as
 * JSON ({"n_vars":..,"terms":[{"exps":[..],"coef":..}]}) in a JSON array. */
PF_API pf_status pf_min_halfspace_offset(const char* constraints_json, const double* omega, size_t n_vars,
                                         int half_degree, double* nu);

#ifdef __cplusplus
}
#endif

#endif
