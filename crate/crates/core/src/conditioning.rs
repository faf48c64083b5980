//! Measurement of the classical position and the resulting conditional
//! two-particle state, with entanglement quantified two independent ways:
//! Schmidt decomposition of the gridded state, and the covariance-matrix
//! route for Gaussian states.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{evolve, FlowMap, HamiltonianSpec, InteractionMode};
use crate::ensemble::{
    conditional_wavefunction, make_product_ensemble, Action1D, Density1D, Ensemble,
    TwoParticleWavefunction, Wavefunction1D, EPS_COND,
};
use crate::error::{CeError, Result};
use crate::grid::Grid;
use crate::linalg::hermitian_eigen;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AnalyticEq11,
    GridSlice,
}

/// Normalized two-particle state after conditioning on x = a.
#[derive(Debug, Clone)]
pub struct ConditionalState {
    pub wavefunction: TwoParticleWavefunction,
    pub a: f64,
    /// Normalization constant applied to the assembled product form.
    pub k_a: f64,
    pub provenance: Provenance,
    /// Present when every input factor is Gaussian with at-most-quadratic
    /// action, enabling the covariance-matrix oracle.
    pub gaussian: Option<GaussianExponent>,
}

impl ConditionalState {
    pub fn validate(&self) -> Result<()> {
        let n = self.wavefunction.norm_sq();
        if (n - 1.0).abs() > 1e-6 {
            return Err(CeError::Invariant(format!(
                "conditional state squared norm {n:.12e}"
            )));
        }
        if !self.k_a.is_finite() || self.k_a <= 0.0 {
            return Err(CeError::Invariant(format!("K_a = {} not positive", self.k_a)));
        }
        Ok(())
    }
}

/// Method used to produce an entanglement report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntanglementMethod {
    Svd,
    GaussianCovariance,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntanglementReport {
    /// Descending Schmidt coefficients (square roots of the reduced spectrum).
    pub schmidt_coefficients: Vec<f64>,
    /// Entropy of entanglement in nats.
    pub entropy: f64,
    /// Number of coefficients above 1e-6.
    pub schmidt_rank: usize,
    pub method: EntanglementMethod,
}

pub const SCHMIDT_RANK_EPS: f64 = 1e-6;

/// Schmidt decomposition of the gridded two-particle state: singular values
/// of the cell-weighted coefficient matrix, entropy = -Σ λ² ln λ².
pub fn schmidt_analysis(wf: &TwoParticleWavefunction) -> Result<EntanglementReport> {
    let norm = wf.norm_sq().sqrt();
    if (norm - 1.0).abs() > 1e-4 {
        return Err(CeError::NotNormalized {
            which: "schmidt input".into(),
            norm,
            rel_err: (norm - 1.0).abs(),
        });
    }
    let (n1, n2) = wf.psi.dim();
    let scale = wf.cell_area().sqrt();

    // Gram matrix of the smaller side; eigenvalues are squared singular values.
    let (dim, gram) = if n2 <= n1 {
        let mut g = Array2::<Complex64>::default((n2, n2));
        for a in 0..n2 {
            for b in a..n2 {
                let mut acc = Complex64::default();
                for i in 0..n1 {
                    acc += wf.psi[(i, a)].conj() * wf.psi[(i, b)];
                }
                acc *= scale * scale;
                g[(a, b)] = acc;
                g[(b, a)] = acc.conj();
            }
        }
        (n2, g)
    } else {
        let mut g = Array2::<Complex64>::default((n1, n1));
        for a in 0..n1 {
            for b in a..n1 {
                let mut acc = Complex64::default();
                for j in 0..n2 {
                    acc += wf.psi[(a, j)].conj() * wf.psi[(b, j)];
                }
                acc *= scale * scale;
                g[(a, b)] = acc;
                g[(b, a)] = acc.conj();
            }
        }
        (n1, g)
    };
    let _ = dim;

    let (evals, _) = hermitian_eigen(&gram);
    let mut coeffs: Vec<f64> = evals
        .iter()
        .rev()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    coeffs.truncate(coeffs.iter().take_while(|c| **c > 1e-15).count().max(1));

    let entropy = -coeffs
        .iter()
        .map(|l| {
            let p = l * l;
            if p > 1e-30 {
                p * p.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>();
    let schmidt_rank = coeffs.iter().filter(|c| **c > SCHMIDT_RANK_EPS).count();
    Ok(EntanglementReport {
        schmidt_coefficients: coeffs,
        entropy: entropy.max(0.0),
        schmidt_rank,
        method: EntanglementMethod::Svd,
    })
}

/// Two-mode complex Gaussian exponent data:
/// `psi ∝ exp(-½ q^T A q + b·q)` with A complex symmetric, Re(A) positive
/// definite.
#[derive(Debug, Clone, Copy)]
pub struct GaussianExponent {
    pub quad: [[Complex64; 2]; 2],
    pub linear: [Complex64; 2],
}

impl GaussianExponent {
    /// The (alpha, beta, gamma) parameters of
    /// `exp(-alpha q1² - beta q2² - gamma q1 q2 + ...)`.
    pub fn from_alpha_beta_gamma(alpha: Complex64, beta: Complex64, gamma: Complex64) -> Self {
        GaussianExponent {
            quad: [[2.0 * alpha, gamma], [gamma, 2.0 * beta]],
            linear: [Complex64::default(); 2],
        }
    }

    /// Local symplectic scaling (q1, q2) -> (c q1, q2 / c).
    pub fn scaled(&self, c: f64) -> Self {
        let s = [c, 1.0 / c];
        let mut out = *self;
        for i in 0..2 {
            for j in 0..2 {
                out.quad[i][j] = self.quad[i][j] * s[i] * s[j];
            }
            out.linear[i] = self.linear[i] * s[i];
        }
        out
    }
}

/// Build the exponent by accumulating factors `exp(kappa (alpha·(1,q))²)` and
/// linear pieces; clearer than in-place tricks.
#[derive(Debug, Clone, Copy, Default)]
struct ExponentBuilder {
    // E(q) = e11 q1² + e22 q2² + e12 q1 q2 + l1 q1 + l2 q2 (+ const, dropped)
    e11: Complex64,
    e22: Complex64,
    e12: Complex64,
    l1: Complex64,
    l2: Complex64,
}

impl ExponentBuilder {
    /// E += kappa (a0 + a1 q1 + a2 q2)².
    fn square(&mut self, kappa: Complex64, a0: f64, a1: f64, a2: f64) {
        self.e11 += kappa * a1 * a1;
        self.e22 += kappa * a2 * a2;
        self.e12 += kappa * 2.0 * a1 * a2;
        self.l1 += kappa * 2.0 * a0 * a1;
        self.l2 += kappa * 2.0 * a0 * a2;
    }

    /// E += kappa (a0 + a1 q1 + a2 q2).
    fn linear(&mut self, kappa: Complex64, _a0: f64, a1: f64, a2: f64) {
        self.l1 += kappa * a1;
        self.l2 += kappa * a2;
    }

    fn finish(&self) -> GaussianExponent {
        // E = -½ q^T A q + b·q  =>  A11 = -2 e11, A12 = -e12
        GaussianExponent {
            quad: [
                [-2.0 * self.e11, -self.e12],
                [-self.e12, -2.0 * self.e22],
            ],
            linear: [self.l1, self.l2],
        }
    }
}

/// Entanglement entropy of a pure two-mode Gaussian state from its covariance
/// matrix (hbar = 1, vacuum variance ½): the symplectic eigenvalue nu of the
/// reduced single-mode block gives
/// S = (nu + ½) ln(nu + ½) − (nu − ½) ln(nu − ½).
pub fn gaussian_entanglement(spec: &GaussianExponent) -> Result<EntanglementReport> {
    let ar = [
        [spec.quad[0][0].re, spec.quad[0][1].re],
        [spec.quad[1][0].re, spec.quad[1][1].re],
    ];
    let ai = [
        [spec.quad[0][0].im, spec.quad[0][1].im],
        [spec.quad[1][0].im, spec.quad[1][1].im],
    ];
    let det_r = ar[0][0] * ar[1][1] - ar[0][1] * ar[1][0];
    if ar[0][0] <= 0.0 || det_r <= 0.0 {
        return Err(CeError::Precondition(
            "Gaussian exponent real part is not positive definite".into(),
        ));
    }

    // covariance blocks: sigma_qq = ½ Ar⁻¹, sigma_qp = -½ Ar⁻¹ Ai,
    // sigma_pp = ½ (Ar + Ai Ar⁻¹ Ai)
    let inv = [
        [ar[1][1] / det_r, -ar[0][1] / det_r],
        [-ar[1][0] / det_r, ar[0][0] / det_r],
    ];
    let mat_mul = |a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]| -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        out
    };
    let qq = [
        [0.5 * inv[0][0], 0.5 * inv[0][1]],
        [0.5 * inv[1][0], 0.5 * inv[1][1]],
    ];
    let inv_ai = mat_mul(&inv, &ai);
    let qp = [
        [-0.5 * inv_ai[0][0], -0.5 * inv_ai[0][1]],
        [-0.5 * inv_ai[1][0], -0.5 * inv_ai[1][1]],
    ];
    let ai_inv_ai = mat_mul(&ai, &inv_ai);
    let pp = [
        [0.5 * (ar[0][0] + ai_inv_ai[0][0]), 0.5 * (ar[0][1] + ai_inv_ai[0][1])],
        [0.5 * (ar[1][0] + ai_inv_ai[1][0]), 0.5 * (ar[1][1] + ai_inv_ai[1][1])],
    ];

    // purity self-check: det(sigma) = 1/16 for a pure two-mode state
    let mut sigma = [[0.0_f64; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            sigma[i][j] = qq[i][j];
            sigma[i][j + 2] = qp[i][j];
            sigma[i + 2][j] = qp[j][i];
            sigma[i + 2][j + 2] = pp[i][j];
        }
    }
    let det4 = det4x4(&sigma);
    if (det4 - 1.0 / 16.0).abs() > 1e-8 {
        return Err(CeError::Invariant(format!(
            "covariance determinant {det4:.3e} violates purity (expected 1/16)"
        )));
    }

    // reduced single-mode covariance of mode 1
    let nu = (qq[0][0] * pp[0][0] - qp[0][0] * qp[0][0]).sqrt();
    let entropy = if nu <= 0.5 + 1e-12 {
        0.0
    } else {
        (nu + 0.5) * (nu + 0.5).ln() - (nu - 0.5) * (nu - 0.5).ln()
    };

    // Schmidt spectrum of the two-mode gaussian: lambda_k = sqrt(1-z²) z^k
    // with mean photon number nbar = nu - ½.
    let nbar = (nu - 0.5).max(0.0);
    let z2 = nbar / (nbar + 1.0);
    let mut coeffs = Vec::new();
    let mut p = 1.0 - z2;
    while p > 1e-18 && coeffs.len() < 256 {
        coeffs.push(p.sqrt());
        p *= z2;
        if z2 == 0.0 {
            break;
        }
    }
    let schmidt_rank = coeffs.iter().filter(|c| **c > SCHMIDT_RANK_EPS).count();
    Ok(EntanglementReport {
        schmidt_coefficients: coeffs,
        entropy,
        schmidt_rank,
        method: EntanglementMethod::GaussianCovariance,
    })
}

#[allow(clippy::needless_range_loop)]
fn det4x4(m: &[[f64; 4]; 4]) -> f64 {
    // cofactor expansion over the first row with 3x3 minors
    let det3 = |a: [[f64; 3]; 3]| -> f64 {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let minor = |row: usize, col: usize| -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        let mut rr = 0;
        for r in 0..4 {
            if r == row {
                continue;
            }
            let mut cc = 0;
            for c in 0..4 {
                if c == col {
                    continue;
                }
                out[rr][cc] = m[r][c];
                cc += 1;
            }
            rr += 1;
        }
        out
    };
    (0..4)
        .map(|c| {
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[0][c] * det3(minor(0, c))
        })
        .sum()
}

/// Closed-form product initial data for the measurement pipeline.
#[derive(Debug, Clone)]
pub struct ProductInitialData {
    pub psi1: Wavefunction1D,
    pub psi2: Wavefunction1D,
    pub p0: Density1D,
    pub s0: Action1D,
    pub grid: Grid,
    pub hbar: f64,
}

impl ProductInitialData {
    pub fn ensemble(&self) -> Result<Ensemble> {
        make_product_ensemble(&self.psi1, &self.psi2, &self.p0, &self.s0, &self.grid, self.hbar)
    }
}

/// Evolve the product initial data under the bilinear interaction, measure the
/// classical position at `a`, and return the conditional two-particle state.
pub fn measure_and_condition(
    initial: &ProductInitialData,
    g1: f64,
    g2: f64,
    t: f64,
    a: f64,
    mode: InteractionMode,
) -> Result<ConditionalState> {
    let e0 = initial.ensemble()?;
    let h = HamiltonianSpec::HybridBilinear { g1, g2, mode };
    let evolved = evolve(&e0, &h, t)?;

    // threshold from the evolved classical marginal
    let marg = evolved.marginal_x();
    let threshold = EPS_COND * marg.max();

    if let (
        Wavefunction1D::Gaussian(psi1),
        Wavefunction1D::Gaussian(psi2),
        Density1D::Gaussian(p0),
        Action1D::Poly(s0),
    ) = (&initial.psi1, &initial.psi2, &initial.p0, &initial.s0)
    {
        // direct assembly of the conditional product form:
        // psi(q1, q2 | a) = K_a psi1(q1 - g1 t a + σ q2) psi2(q2)
        //                   sqrt(P0(a - g2 t q2)) e^{i S0(a - g2 t q2)/hbar}
        let flow = FlowMap::hybrid_bilinear(g1, g2, mode, t);
        let sigma = flow.shear;
        let grid = evolved.grid();
        let hbar = initial.hbar;

        let raw = Array2::from_shape_fn((grid.q1.n, grid.q2.n), |(i, j)| {
            let q1 = grid.q1.value(i);
            let q2 = grid.q2.value(j);
            let u = q1 - g1 * t * a + sigma * q2;
            let w = a - g2 * t * q2;
            psi1.eval(u)
                * psi2.eval(q2)
                * p0.sqrt_eval(w)
                * Complex64::new(0.0, s0.eval(w) / hbar).exp()
        });
        let mass: f64 =
            raw.iter().map(|c| c.norm_sqr()).sum::<f64>() * grid.q1.spacing() * grid.q2.spacing();
        if mass <= threshold {
            return Err(CeError::ZeroProbabilityConditioning {
                x: a,
                p: mass,
                threshold,
            });
        }
        let k_a = 1.0 / mass.sqrt();
        let psi = raw.mapv(|c| c * k_a);

        // Gaussian exponent when the action phase is at most quadratic
        let gaussian = if s0.degree() <= 2 {
            let mut b = ExponentBuilder::default();
            // psi1 factor: -a1/2 (u - mu1)² + i k1 u, u = (−g1 t a) + q1 + σ q2
            let a1 = psi1.a();
            b.square(
                -0.5 * a1,
                -g1 * t * a - psi1.center,
                1.0,
                sigma,
            );
            b.linear(
                Complex64::new(0.0, psi1.momentum),
                -g1 * t * a,
                1.0,
                sigma,
            );
            // psi2 factor on q2
            let a2 = psi2.a();
            b.square(-0.5 * a2, -psi2.center, 0.0, 1.0);
            b.linear(Complex64::new(0.0, psi2.momentum), 0.0, 0.0, 1.0);
            // sqrt(P0) factor: -c/2 (w - muc)², w = a - g2 t q2
            b.square(
                Complex64::new(-0.5 * p0.c, 0.0),
                a - p0.center,
                0.0,
                -g2 * t,
            );
            // phase factor i S0(w)/hbar for S0 = s0 + s1 w + s2 w²
            let coef = |k: usize| s0.coeffs.get(k).copied().unwrap_or(0.0);
            b.square(Complex64::new(0.0, coef(2) / hbar), a, 0.0, -g2 * t);
            b.linear(Complex64::new(0.0, coef(1) / hbar), a, 0.0, -g2 * t);
            Some(b.finish())
        } else {
            None
        };

        let state = ConditionalState {
            wavefunction: TwoParticleWavefunction {
                q1: grid.q1,
                q2: grid.q2,
                psi,
                hbar,
            },
            a,
            k_a,
            provenance: Provenance::AnalyticEq11,
            gaussian,
        };
        state.validate()?;
        return Ok(state);
    }

    // grid-slice fallback through the evolved ensemble
    let wf = conditional_wavefunction(&evolved, a)?;
    let k = evolved.grid().x.nearest_index(a);
    let k_a = 1.0 / (marg.values[k].max(f64::MIN_POSITIVE)).sqrt();
    let state = ConditionalState {
        wavefunction: wf,
        a,
        k_a,
        provenance: Provenance::GridSlice,
        gaussian: None,
    };
    state.validate()?;
    Ok(state)
}

/// One row of an entanglement sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub g1: f64,
    pub g2: f64,
    pub t: f64,
    pub a: f64,
    pub mode: InteractionMode,
    pub entropy: f64,
    pub schmidt_rank: usize,
}

/// Entanglement entropy over a (t, a) grid of measurement settings.
pub fn entanglement_sweep(
    initial: &ProductInitialData,
    g1: f64,
    g2: f64,
    t_values: &[f64],
    a_values: &[f64],
    mode: InteractionMode,
) -> Result<Vec<SweepRow>> {
    let cells: Vec<(f64, f64)> = t_values
        .iter()
        .flat_map(|&t| a_values.iter().map(move |&a| (t, a)))
        .collect();
    cells
        .par_iter()
        .map(|&(t, a)| {
            let state = measure_and_condition(initial, g1, g2, t, a, mode)?;
            let report = schmidt_analysis(&state.wavefunction)?;
            Ok(SweepRow {
                g1,
                g2,
                t,
                a,
                mode,
                entropy: report.entropy,
                schmidt_rank: report.schmidt_rank,
            })
        })
        .collect()
}
