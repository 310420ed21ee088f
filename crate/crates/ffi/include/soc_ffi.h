#ifndef SOC_FFI_H
#define SOC_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the nonzero error values match the CLI exit codes.
typedef enum SocStatus {
  SOC_STATUS_OK = 0,
  SOC_STATUS_CONFIG = 2,
  SOC_STATUS_DATA = 3,
  SOC_STATUS_NUMERICAL = 4,
  SOC_STATUS_NULL_POINTER = 10,
  SOC_STATUS_INVALID_ARGUMENT = 11,
  SOC_STATUS_BUFFER_TOO_SMALL = 12,
  SOC_STATUS_PANIC = 13,
} SocStatus;

// A SOC model with its data and priors.
typedef struct SocModelHandle SocModelHandle;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread.
//
// # Safety
// `buf` must point to `len` writable bytes or be null; `needed` must be
// null or writable.
enum SocStatus soc_last_error(char *buf, size_t len, size_t *needed);

// Builds a model from a TOML run config (or run manifest) and the data it
// names.
//
// # Safety
// `config_path` must be a NUL-terminated string; `out` must be writable.
enum SocStatus soc_model_open(const char *config_path, struct SocModelHandle **out);

// # Safety
// `handle` must come from [`soc_model_open`] and not be used afterwards.
void soc_model_close(struct SocModelHandle *handle);

// Number of free parameters.
//
// # Safety
// `handle` must be live; `out` writable.
enum SocStatus soc_model_param_count(const struct SocModelHandle *handle, size_t *out);

// Name of free parameter `index`.
//
// # Safety
// `handle` must be live; `buf` must hold `len` bytes or be null.
enum SocStatus soc_model_param_name(const struct SocModelHandle *handle,
                                    size_t index,
                                    char *buf,
                                    size_t len,
                                    size_t *needed);

// Log prior density at `theta` (may be -inf).
//
// # Safety
// `theta` must hold `n` doubles; `out` writable.
enum SocStatus soc_model_log_prior(const struct SocModelHandle *handle,
                                   const double *theta,
                                   size_t n,
                                   double *out);

// Particle-filter log-likelihood estimate at `theta`, with auxiliary
// normals drawn from `seed`.
//
// # Safety
// `theta` must hold `n` doubles; `out` writable.
enum SocStatus soc_model_log_likelihood(const struct SocModelHandle *handle,
                                        const double *theta,
                                        size_t n,
                                        uint64_t seed,
                                        double *out);

// Runs `fit` with the handle's config, writing artifacts to its output
// directory.
//
// # Safety
// `handle` must be live.
enum SocStatus soc_model_fit(const struct SocModelHandle *handle);

// Exact log-likelihood of a scalar linear-Gaussian series
// `x_t = a x_{t-1} + e_t`, `y_t = c x_t + v_t`, `x_{-1} = x0`. NaN
// entries of `y` are missing.
//
// # Safety
// `y` must hold `len` doubles; `out` writable.
enum SocStatus soc_kalman_scalar(double a,
                                 double c,
                                 double q,
                                 double r,
                                 double x0,
                                 const double *y,
                                 size_t len,
                                 double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SOC_FFI_H */
