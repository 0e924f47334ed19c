#ifndef DPHASE_H
#define DPHASE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DphaseStatus {
  DPHASE_STATUS_OK = 0,
  DPHASE_STATUS_NULL_POINTER = 1,
  DPHASE_STATUS_INVALID_PARAMETER = 2,
  DPHASE_STATUS_DIMENSION_MISMATCH = 3,
  DPHASE_STATUS_OUT_OF_DOMAIN = 4,
  DPHASE_STATUS_PRECONDITION = 5,
  DPHASE_STATUS_INCONCLUSIVE = 6,
  DPHASE_STATUS_NOT_CONVERGED = 7,
  DPHASE_STATUS_CONFIG = 8,
  DPHASE_STATUS_FIELD_CSV = 9,
  DPHASE_STATUS_IO = 10,
  DPHASE_STATUS_BUFFER_TOO_SMALL = 11,
  DPHASE_STATUS_PANIC = 12,
} DphaseStatus;

typedef enum DphaseDensityKind {
  DPHASE_DENSITY_KIND_ZHIKOV = 0,
  DPHASE_DENSITY_KIND_EXAMPLE1 = 1,
  DPHASE_DENSITY_KIND_EXAMPLE2 = 2,
  DPHASE_DENSITY_KIND_P_POWER = 3,
} DphaseDensityKind;

typedef enum DphaseWeightKind {
  DPHASE_WEIGHT_KIND_ZERO = 0,
  DPHASE_WEIGHT_KIND_CONSTANT = 1,
  DPHASE_WEIGHT_KIND_HOLDER = 2,
  DPHASE_WEIGHT_KIND_STEP = 3,
  DPHASE_WEIGHT_KIND_TWO_THRESHOLD = 4,
} DphaseWeightKind;

typedef struct DphaseDensity DphaseDensity;

typedef struct DphaseField DphaseField;

typedef struct DphaseReport DphaseReport;

/*
 Weight parameters; fields not used by `kind` are ignored.
 `Holder`: `value * |x1 - r1|^sigma`. `Step`: jump at `r1`.
 `TwoThreshold`: thresholds `r1 < r2`.
 */
typedef struct DphaseWeight {
  enum DphaseWeightKind kind;
  double value;
  double r1;
  double r2;
  double sigma;
  double h;
} DphaseWeight;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. Valid until the
 next call into this library on the same thread.
 */
const char *dphase_last_error(void);

/*
 Creates a density. `weight` may be null for kinds without a weight.

 # Safety
 `weight` must be null or point to a valid `DphaseWeight`; `out` must be writable.
 */
enum DphaseStatus dphase_density_new(enum DphaseDensityKind kind,
                                     double p,
                                     double q,
                                     const struct DphaseWeight *weight,
                                     struct DphaseDensity **out_density);

/*
 # Safety
 `density` must come from `dphase_density_new` or be null.
 */
void dphase_density_free(struct DphaseDensity *density);

/*
 `f(x, z)` with `x` of length `n` and `z` a row-major `rows × n` matrix.

 # Safety
 Pointers must be valid for the given lengths.
 */
enum DphaseStatus dphase_density_eval(const struct DphaseDensity *density,
                                      const double *x,
                                      size_t n,
                                      const double *z,
                                      size_t rows,
                                      double *out_value);

/*
 Writes 1 to `out_holds` when `q ≤ p (1 + σ/n)`, else 0.

 # Safety
 `out_holds` must be writable.
 */
enum DphaseStatus dphase_check_f1(double p, double q, size_t n, double sigma, int *out_holds);

/*
 Samples `a(x) ≤ c6 a(x~) + c5 |x − x~|^σ` over pairs in `B(center, radius)`.

 # Safety
 `weight` and `center` must be valid; `out_report` must be writable.
 */
enum DphaseStatus dphase_check_zsigma(const struct DphaseWeight *weight,
                                      double c5,
                                      double c6,
                                      double sigma,
                                      const double *center,
                                      size_t n,
                                      double radius,
                                      size_t budget,
                                      uint64_t seed,
                                      struct DphaseReport **out_report);

/*
 1 when the report found no violation.

 # Safety
 `report` must be a valid handle.
 */
int dphase_report_passed(const struct DphaseReport *report);

/*
 Text rendering of a report; release with `dphase_string_free`.

 # Safety
 `report` must be a valid handle; `out_text` must be writable.
 */
enum DphaseStatus dphase_report_text(const struct DphaseReport *report, char **out_text);

/*
 # Safety
 `report` must come from this library or be null.
 */
void dphase_report_free(struct DphaseReport *report);

/*
 # Safety
 `s` must come from this library or be null.
 */
void dphase_string_free(char *s);

/*
 Lower convex hull of `(xs[i], ys[i])` evaluated at `queries`; values
 outside the hull's range are NaN.

 # Safety
 Arrays must be valid for their lengths.
 */
enum DphaseStatus dphase_convex_hull_eval(const double *xs,
                                          const double *ys,
                                          size_t len,
                                          const double *queries,
                                          size_t qlen,
                                          double *out_values);

/*
 Field with `target_dim` components on the cube grid `[lo, hi]^n` with
 `cells` nodes per axis; `values` is node-major, `cells^n · target_dim` long.

 # Safety
 `values` must be valid for `len` doubles; `out_field` must be writable.
 */
enum DphaseStatus dphase_field_new(size_t n,
                                   double lo,
                                   double hi,
                                   size_t cells,
                                   size_t target_dim,
                                   const double *values,
                                   size_t len,
                                   struct DphaseField **out_field);

/*
 The kinked test field `|x1 − r|^exponent` (plus smooth components) sampled
 on `[lo, hi]^n`.

 # Safety
 `out_field` must be writable.
 */
enum DphaseStatus dphase_field_kinked(size_t n,
                                      double lo,
                                      double hi,
                                      size_t cells,
                                      size_t target_dim,
                                      double r,
                                      double exponent,
                                      struct DphaseField **out_field);

/*
 # Safety
 `field` must come from this library or be null.
 */
void dphase_field_free(struct DphaseField *field);

/*
 Number of doubles held by the field (`nodes · target_dim`).

 # Safety
 `field` must be a valid handle.
 */
size_t dphase_field_len(const struct DphaseField *field);

/*
 Nodes per axis of the field's grid (the first axis).

 # Safety
 `field` must be a valid handle.
 */
size_t dphase_field_nodes_per_axis(const struct DphaseField *field);

/*
 Copies the field's values into `buf`.

 # Safety
 `buf` must be writable for `cap` doubles.
 */
enum DphaseStatus dphase_field_values(const struct DphaseField *field, double *buf, size_t cap);

/*
 Mollified field at radius `eps`, on the grid shrunk by the kernel margin.

 # Safety
 `field` must be valid; `out_field` must be writable.
 */
enum DphaseStatus dphase_mollify(const struct DphaseField *field,
                                 double eps,
                                 struct DphaseField **out_field);

/*
 `max |Du_ε| ≤ c₁ ε^{−n/p}` with 1% slack; writes the bound and the
 observed maximum.

 # Safety
 `field` must be valid; out pointers must be writable.
 */
enum DphaseStatus dphase_gradient_bound(const struct DphaseField *field,
                                        double eps,
                                        double p,
                                        double *out_bound,
                                        double *out_max,
                                        int *out_passed);

/*
 `∫_{B(center, radius)} f(x, Du)` by the midpoint rule.

 # Safety
 Handles and `center` must be valid; `out_energy` must be writable.
 */
enum DphaseStatus dphase_energy(const struct DphaseDensity *density,
                                const struct DphaseField *field,
                                const double *center,
                                double radius,
                                double *out_energy);

/*
 Runs the command-line tool with `argv` (including the program name) and
 returns its exit code.

 # Safety
 `argv` must hold `argc` valid NUL-terminated strings.
 */
int dphase_cli_run(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DPHASE_H */
