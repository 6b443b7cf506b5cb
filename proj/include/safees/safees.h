#ifndef SAFEES_SAFEES_H
#define SAFEES_SAFEES_H

/* C interface to the safe extremum-seeking library. All functions return a
 * safees_status; on failure safees_last_error() describes the problem for the
 * calling thread. Handles are opaque and owned by the caller. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef SAFEES_BUILDING_LIBRARY
#    define SAFEES_API __declspec(dllexport)
#  else
#    define SAFEES_API __declspec(dllimport)
#  endif
#else
#  define SAFEES_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum safees_status {
  SAFEES_OK = 0,
  SAFEES_ERR_INVALID_ARGUMENT = 1,
  SAFEES_ERR_PARSE = 2,
  SAFEES_ERR_DOMAIN = 3,
  SAFEES_ERR_CONFIG = 4,
  SAFEES_ERR_NUMERICAL = 5,
  SAFEES_ERR_DEGENERATE = 6,
  SAFEES_ERR_INTERNAL = 7
} safees_status;

typedef struct safees_maps safees_maps;
typedef struct safees_trajectory safees_trajectory;

typedef struct safees_es_config {
  double k;
  double c;
  double omega_f;
  double m_plus;
  double a;
  const double* omegas; /* length n */
} safees_es_config;

typedef enum safees_system { SAFEES_SYSTEM_ES = 0, SAFEES_SYSTEM_EXACT = 1 } safees_system;

typedef struct safees_sim_spec {
  double dt;
  double t_final;
  size_t sample_stride; /* 0 is treated as 1 */
  int allow_coarse_dt;
} safees_sim_spec;

typedef struct safees_command_options {
  const char* config_path; /* may be NULL for paper-example */
  const char* out_dir;     /* NULL keeps the config value */
  size_t workers;          /* 0 keeps the config value */
  uint64_t seed;
  int has_seed;
  const char* const* overrides; /* "dotted.path=value" */
  size_t override_count;
} safees_command_options;

SAFEES_API const char* safees_version(void);
/* Message for the last failed call on this thread; empty if none. */
SAFEES_API const char* safees_last_error(void);

/* Objective J and barrier h over x1..xn. */
SAFEES_API safees_status safees_maps_create(const char* j_expr, const char* h_expr, size_t n,
                                            safees_maps** out);
SAFEES_API void safees_maps_destroy(safees_maps* maps);
SAFEES_API size_t safees_maps_dim(const safees_maps* maps);
SAFEES_API safees_status safees_maps_eval(const safees_maps* maps, const double* theta, double* j_out,
                                          double* h_out);
SAFEES_API safees_status safees_maps_grad(const safees_maps* maps, const double* theta, double* grad_j,
                                          double* grad_h);

/* Right-hand sides. ES state layout: theta_hat(n), G_J(n), eta_J, G_h(n), eta_h. */
SAFEES_API safees_status safees_es_rhs(const safees_maps* maps, const safees_es_config* cfg, double t,
                                       const double* x, double* dx);
SAFEES_API safees_status safees_exact_rhs(const safees_maps* maps, double c, double m_plus,
                                          const double* theta, double* dtheta);

SAFEES_API safees_status safees_simulate_es(const safees_maps* maps, const safees_es_config* cfg,
                                            const double* x0, const safees_sim_spec* spec,
                                            safees_trajectory** out);
SAFEES_API safees_status safees_simulate_exact(const safees_maps* maps, double c, double m_plus,
                                               const double* theta0, const safees_sim_spec* spec,
                                               safees_trajectory** out);
SAFEES_API void safees_trajectory_destroy(safees_trajectory* traj);
SAFEES_API size_t safees_trajectory_size(const safees_trajectory* traj);
SAFEES_API size_t safees_trajectory_state_dim(const safees_trajectory* traj);
SAFEES_API safees_status safees_trajectory_time(const safees_trajectory* traj, size_t i, double* t);
/* Copies state_dim values of sample i. */
SAFEES_API safees_status safees_trajectory_state(const safees_trajectory* traj, size_t i, double* x);
/* h at theta_hat and at the applied point for sample i. */
SAFEES_API safees_status safees_trajectory_h(const safees_trajectory* traj, size_t i, double* h_hat,
                                             double* h_applied);
SAFEES_API safees_status safees_trajectory_write_csv(const safees_trajectory* traj, const char* path,
                                                     size_t stride);

/* Frequencies as num[i]/den[i]. *ok is 1 when distinct with no w_i + w_j = w_k. */
SAFEES_API safees_status safees_validate_frequencies(const int64_t* num, const int64_t* den, size_t n,
                                                     int* ok);

/* Runs "simulate", "exact", "check" or "paper-example"; returns the process exit code. */
SAFEES_API int safees_run_command(const char* command, const safees_command_options* options);

#ifdef __cplusplus
}
#endif

#endif
