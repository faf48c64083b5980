/* C ABI for the configuration-ensemble dynamics lab (ce-core).
 *
 * Conventions:
 *   - Pointer-returning functions yield NULL on failure.
 *   - int-returning functions yield CE_OK (0) on success.
 *   - On failure, ce_last_error() returns a thread-local message valid until
 *     the next ce_* call on the same thread. Do not free it.
 *   - Every CeEnsemble* must be released with ce_ensemble_free().
 */

#ifndef CE_H
#define CE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#define CE_OK 0
#define CE_NULL_ARGUMENT 1
#define CE_INVALID_UTF8 2
#define CE_ERROR 3

/* Opaque ensemble handle. */
typedef struct CeEnsemble CeEnsemble;

/* Library version; static storage. */
const char *ce_version(void);

/* Thread-local message for the most recent failure; static storage. */
const char *ce_last_error(void);

/* The standard scenario's initial product ensemble, grid sized for evolution
 * up to t_max. */
CeEnsemble *ce_ensemble_standard(uint32_t base_n, double t_max);

/* Product ensemble from Gaussian packets psi_i ~ exp(-(a_re + i a_im)
 * (u - center)^2 / 2 + i momentum u), classical density
 * P0 ~ exp(-classical_c (x - classical_center)^2), and an action polynomial
 * s0_expr in x (e.g. "0.5*x^2"). The grid is sized for evolution up to t_max
 * under couplings (g1, g2); sequential != 0 selects the sequential
 * interaction ordering. */
CeEnsemble *ce_ensemble_product(double a1_re, double a1_im, double center1,
                                double momentum1, double a2_re, double a2_im,
                                double center2, double momentum2,
                                double classical_c, double classical_center,
                                const char *s0_expr, double hbar,
                                uint32_t base_n, double g1, double g2,
                                int sequential, double t_max);

/* Release a handle (NULL accepted). */
void ce_ensemble_free(CeEnsemble *handle);

/* Total probability mass. */
int ce_ensemble_norm(const CeEnsemble *handle, double *out);

/* Evolve under the bilinear interaction; returns a new handle. */
CeEnsemble *ce_ensemble_evolve(const CeEnsemble *handle, double g1, double g2,
                               int sequential, double t);

/* Ensemble-average value of an observable expression. kind is "classical"
 * (variables x, k) or "quantum" (q1, p1, q2, p2, with p*_sym markers for
 * symmetrized mixed products). */
int ce_observable_value(const CeEnsemble *handle, const char *kind,
                        const char *expr, double *out);

/* Functional Poisson bracket {V, W} at the ensemble. */
int ce_poisson_bracket(const CeEnsemble *handle, const char *kind_v,
                       const char *expr_v, const char *kind_w,
                       const char *expr_w, double *out);

/* Entanglement entropy (nats) of the conditional two-particle state of the
 * standard scenario: evolve for t under (g1, g2), measure the mediator at a. */
int ce_conditional_entropy(double g1, double g2, double t, double a,
                           int sequential, uint32_t base_n, double *out);

/* Final negativity of the bit-mediated two-qubit protocol. */
int ce_qubit_protocol_negativity(double p0, int communicate, double *out);

/* ce-ensemble/1 snapshot I/O. */
int ce_snapshot_write(const CeEnsemble *handle, const char *path,
                      const char *scenario, double time);
CeEnsemble *ce_snapshot_read(const char *path);

#ifdef __cplusplus
}
#endif

#endif /* CE_H */
