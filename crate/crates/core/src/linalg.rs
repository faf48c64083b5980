//! Small dense Hermitian eigensolver (cyclic Jacobi with complex rotations).
//! Used for the qubit protocol (4×4) and the Schmidt Gram matrices; no
//! external LAPACK backend required.

use ndarray::Array2;
use num_complex::Complex64;

/// Eigendecomposition of a Hermitian matrix: returns eigenvalues (ascending)
/// and the unitary of column eigenvectors.
pub fn hermitian_eigen(a: &Array2<Complex64>) -> (Vec<f64>, Array2<Complex64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let mut m = a.clone();
    let mut v = Array2::<Complex64>::from_shape_fn((n, n), |(i, j)| {
        if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::default()
        }
    });

    let norm = m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let tol = 1e-15 * norm.max(1e-300);

    for _sweep in 0..60 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += m[(p, q)].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let g = m[(p, q)];
                if g.norm() <= tol {
                    continue;
                }
                let alpha = m[(p, p)].re;
                let beta = m[(q, q)].re;
                let mag = g.norm();
                let phase = g / mag; // e^{i φ}

                // real rotation zeroing [[alpha, mag], [mag, beta]]
                let tau = (beta - alpha) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    1.0 / (tau - (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                // U restricted to (p, q):
                //   column p: (c, -s conj(phase)); column q: (s phase, c)
                let upp = Complex64::new(c, 0.0);
                let upq = phase * s;
                let uqp = -phase.conj() * s;
                let uqq = Complex64::new(c, 0.0);

                // m <- U† m U
                for r in 0..n {
                    let mrp = m[(r, p)];
                    let mrq = m[(r, q)];
                    m[(r, p)] = mrp * upp + mrq * uqp;
                    m[(r, q)] = mrp * upq + mrq * uqq;
                }
                for cidx in 0..n {
                    let mpc = m[(p, cidx)];
                    let mqc = m[(q, cidx)];
                    m[(p, cidx)] = upp.conj() * mpc + uqp.conj() * mqc;
                    m[(q, cidx)] = upq.conj() * mpc + uqq.conj() * mqc;
                }
                for r in 0..n {
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = vrp * upp + vrq * uqp;
                    v[(r, q)] = vrp * upq + vrq * uqq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let evals: Vec<f64> = (0..n).map(|i| m[(i, i)].re).collect();
    order.sort_by(|&i, &j| evals[i].total_cmp(&evals[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| evals[i]).collect();
    let mut vs = Array2::<Complex64>::default((n, n));
    for (new_col, &old_col) in order.iter().enumerate() {
        for r in 0..n {
            vs[(r, new_col)] = v[(r, old_col)];
        }
    }
    (sorted, vs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_hermitian(n: usize, seed: u64) -> Array2<Complex64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let raw = Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let mut h = Array2::<Complex64>::default((n, n));
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = (raw[(i, j)] + raw[(j, i)].conj()) * 0.5;
            }
        }
        h
    }

    #[test]
    fn diagonalizes_random_hermitian_matrices() {
        for (n, seed) in [(4usize, 1u64), (8, 2), (24, 3)] {
            let h = random_hermitian(n, seed);
            let (evals, v) = hermitian_eigen(&h);

            // residual ||H v - λ v|| per eigenpair
            for (k, lam) in evals.iter().enumerate() {
                for r in 0..n {
                    let hv: Complex64 = (0..n).map(|c| h[(r, c)] * v[(c, k)]).sum();
                    let diff = hv - v[(r, k)] * *lam;
                    assert!(diff.norm() < 1e-10, "residual {} at ({n},{k})", diff.norm());
                }
            }
            // unitarity
            for i in 0..n {
                for j in 0..n {
                    let dot: Complex64 = (0..n).map(|r| v[(r, i)].conj() * v[(r, j)]).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - expect).norm() < 1e-11);
                }
            }
            // trace preserved
            let tr: f64 = (0..n).map(|i| h[(i, i)].re).sum();
            assert_relative_eq!(tr, evals.iter().sum::<f64>(), epsilon = 1e-10);
        }
    }
}
