//! Closed-form initial data (Gaussian wavepackets, Gaussian classical
//! densities, polynomial actions) together with affine coordinate maps, so
//! that evolved ensembles can be evaluated exactly by composition instead of
//! interpolation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Affine map on (q1, q2, x): `y = m·q + b`, rows of `m` indexed by output
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap3 {
    pub m: [[f64; 3]; 3],
    pub b: [f64; 3],
}

impl AffineMap3 {
    pub fn identity() -> Self {
        AffineMap3 {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            b: [0.0; 3],
        }
    }

    pub fn apply(&self, q: [f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (row, (mr, br)) in self.m.iter().zip(self.b.iter()).enumerate() {
            out[row] = mr[0] * q[0] + mr[1] * q[1] + mr[2] * q[2] + br;
        }
        out
    }

    #[allow(clippy::needless_range_loop)]
    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &AffineMap3) -> AffineMap3 {
        let mut m = [[0.0; 3]; 3];
        let mut b = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| self.m[i][k] * other.m[k][j]).sum();
            }
            b[i] = (0..3).map(|k| self.m[i][k] * other.b[k]).sum::<f64>() + self.b[i];
        }
        AffineMap3 { m, b }
    }

    pub fn determinant(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }
}

/// Polynomial in one variable; coefficient at index `i` multiplies `u^i`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Poly1 {
    pub coeffs: Vec<f64>,
}

impl Poly1 {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Poly1 { coeffs }
    }

    pub fn zero() -> Self {
        Poly1 { coeffs: vec![] }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn derivative(&self) -> Poly1 {
        if self.coeffs.len() <= 1 {
            return Poly1::zero();
        }
        Poly1 {
            coeffs: self
                .coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, c)| i as f64 * c)
                .collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| *c == 0.0)
    }

    /// Degree of the highest nonzero coefficient (0 for the zero polynomial).
    pub fn degree(&self) -> usize {
        self.coeffs
            .iter()
            .rposition(|c| *c != 0.0)
            .unwrap_or(0)
    }
}

/// Normalized complex Gaussian wavepacket
/// `psi(u) = (Re a/pi)^{1/4} exp(-a (u-mu)^2 / 2 + i k0 u)` with `Re a > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianWavepacket {
    pub a_re: f64,
    pub a_im: f64,
    pub center: f64,
    pub momentum: f64,
}

impl GaussianWavepacket {
    /// Real ground-state-like packet of width parameter `a` (|psi|^2 has
    /// standard deviation 1/sqrt(2a)).
    pub fn real(a: f64, center: f64) -> Self {
        GaussianWavepacket {
            a_re: a,
            a_im: 0.0,
            center,
            momentum: 0.0,
        }
    }

    /// The unit packet pi^{-1/4} e^{-u^2/2} used throughout the tests.
    pub fn unit() -> Self {
        Self::real(1.0, 0.0)
    }

    pub fn a(&self) -> Complex64 {
        Complex64::new(self.a_re, self.a_im)
    }

    fn norm_const(&self) -> f64 {
        (self.a_re / std::f64::consts::PI).powf(0.25)
    }

    pub fn eval(&self, u: f64) -> Complex64 {
        let d = u - self.center;
        let exponent = -self.a() * (0.5 * d * d) + Complex64::new(0.0, self.momentum * u);
        self.norm_const() * exponent.exp()
    }

    /// psi'(u)/psi(u).
    pub fn log_deriv(&self, u: f64) -> Complex64 {
        -self.a() * (u - self.center) + Complex64::new(0.0, self.momentum)
    }

    /// psi''(u)/psi(u).
    pub fn log_deriv2(&self, u: f64) -> Complex64 {
        let l = self.log_deriv(u);
        l * l - self.a()
    }

    /// |psi(u)|^2.
    pub fn density(&self, u: f64) -> f64 {
        let d = u - self.center;
        (self.a_re / std::f64::consts::PI).sqrt() * (-self.a_re * d * d).exp()
    }

    /// d/du ln |psi(u)|^2.
    pub fn density_log_deriv(&self, u: f64) -> f64 {
        -2.0 * self.a_re * (u - self.center)
    }

    /// Smooth phase arg psi(u) (no branch cuts in closed form).
    pub fn phase(&self, u: f64) -> f64 {
        let d = u - self.center;
        self.momentum * u - 0.5 * self.a_im * d * d
    }

    pub fn d_phase(&self, u: f64) -> f64 {
        self.momentum - self.a_im * (u - self.center)
    }

    pub fn d2_phase(&self, _u: f64) -> f64 {
        -self.a_im
    }

    /// |psi|^2 mass outside `[lo, hi]`.
    pub fn tail_mass(&self, lo: f64, hi: f64) -> f64 {
        let s = self.a_re.sqrt();
        0.5 * erfc(s * (hi - self.center)) + 0.5 * erfc(s * (self.center - lo))
    }
}

/// Normalized real Gaussian density `P0(x) = sqrt(c/pi) exp(-c (x-mu)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalGaussian {
    pub c: f64,
    pub center: f64,
}

impl ClassicalGaussian {
    pub fn unit() -> Self {
        ClassicalGaussian { c: 1.0, center: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        (self.c / std::f64::consts::PI).sqrt() * (-self.c * d * d).exp()
    }

    /// d/dx ln P0(x).
    pub fn log_deriv(&self, x: f64) -> f64 {
        -2.0 * self.c * (x - self.center)
    }

    pub fn sqrt_eval(&self, x: f64) -> f64 {
        let d = x - self.center;
        (self.c / std::f64::consts::PI).powf(0.25) * (-0.5 * self.c * d * d).exp()
    }

    pub fn tail_mass(&self, lo: f64, hi: f64) -> f64 {
        let s = self.c.sqrt();
        0.5 * erfc(s * (hi - self.center)) + 0.5 * erfc(s * (self.center - lo))
    }

    /// Standard deviation of the density.
    pub fn sigma(&self) -> f64 {
        (0.5 / self.c).sqrt()
    }
}

/// Complementary error function (Numerical Recipes rational approximation,
/// relative error below 1.2e-7 — ample for tail-mass thresholds).
pub fn erfc(x: f64) -> f64 {
    let z = x.abs();
    let t = 1.0 / (1.0 + 0.5 * z);
    let ans = t * (-z * z - 1.26551223
        + t * (1.00002368
            + t * (0.37409196
                + t * (0.09678418
                    + t * (-0.18628806
                        + t * (0.27886807
                            + t * (-1.13520398
                                + t * (1.48851587
                                    + t * (-0.82215223 + t * 0.17087277)))))))))
        .exp();
    if x >= 0.0 {
        ans
    } else {
        2.0 - ans
    }
}

/// Closed-form product initial data, pre-composed with an affine map so that
/// evolved ensembles evaluate exactly: every field is a function of
/// `(u, v, w) = pre(q1, q2, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductGenerators {
    pub psi1: GaussianWavepacket,
    pub psi2: GaussianWavepacket,
    pub p0: ClassicalGaussian,
    pub s0: Poly1,
    pub hbar: f64,
    pub pre: AffineMap3,
}

/// Correlated Gaussian data for strong-separability counterexamples:
/// `P = N exp(-1/2 z^T A z)` (z = q - mean) with an optional polynomial S.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedGaussian {
    pub quad: [[f64; 3]; 3],
    pub mean: [f64; 3],
    /// S as a sum of monomials `coeff * q1^i q2^j x^k`.
    pub s_terms: Vec<(f64, [u8; 3])>,
    pub hbar: f64,
    pub pre: AffineMap3,
}

impl CorrelatedGaussian {
    pub fn norm_const(&self) -> f64 {
        let det = AffineMap3 {
            m: self.quad,
            b: [0.0; 3],
        }
        .determinant();
        assert!(det > 0.0, "quadratic form must be positive definite");
        det.sqrt() / (2.0 * std::f64::consts::PI).powf(1.5)
    }

    fn s_value(&self, z: [f64; 3]) -> f64 {
        // S is a polynomial in the absolute coordinates, offset by mean.
        let q = [
            z[0] + self.mean[0],
            z[1] + self.mean[1],
            z[2] + self.mean[2],
        ];
        self.s_terms
            .iter()
            .map(|(c, pw)| {
                c * q[0].powi(pw[0] as i32) * q[1].powi(pw[1] as i32) * q[2].powi(pw[2] as i32)
            })
            .sum()
    }

    fn s_grad(&self, z: [f64; 3], axis: usize) -> f64 {
        let q = [
            z[0] + self.mean[0],
            z[1] + self.mean[1],
            z[2] + self.mean[2],
        ];
        self.s_terms
            .iter()
            .map(|(c, pw)| {
                let p = pw[axis] as f64;
                if p == 0.0 {
                    return 0.0;
                }
                let mut v = c * p;
                for (ax, qa) in q.iter().enumerate() {
                    let e = if ax == axis {
                        pw[ax] as i32 - 1
                    } else {
                        pw[ax] as i32
                    };
                    v *= qa.powi(e);
                }
                v
            })
            .sum()
    }

    fn s_hess(&self, z: [f64; 3], ax1: usize, ax2: usize) -> f64 {
        let q = [
            z[0] + self.mean[0],
            z[1] + self.mean[1],
            z[2] + self.mean[2],
        ];
        self.s_terms
            .iter()
            .map(|(c, pw)| {
                let mut pows = [pw[0] as i32, pw[1] as i32, pw[2] as i32];
                let mut factor = *c;
                for ax in [ax1, ax2] {
                    if pows[ax] == 0 {
                        return 0.0;
                    }
                    factor *= pows[ax] as f64;
                    pows[ax] -= 1;
                }
                factor * q[0].powi(pows[0]) * q[1].powi(pows[1]) * q[2].powi(pows[2])
            })
            .sum()
    }
}

/// Point evaluation bundle: everything the functional machinery needs at one
/// configuration point, evaluated in closed form.
#[derive(Debug, Clone, Copy)]
pub struct PointFields {
    pub p: f64,
    pub s: f64,
    pub grad_p: [f64; 3],
    pub grad_s: [f64; 3],
    pub d2s_xx: f64,
    pub chi: Complex64,
    /// First derivatives of chi along q1, q2.
    pub d_chi: [Complex64; 2],
    /// Second derivatives of chi along q1, q2.
    pub d2_chi: [Complex64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub enum Generators {
    Product(ProductGenerators),
    Correlated(CorrelatedGaussian),
}

impl Generators {
    pub fn pre(&self) -> &AffineMap3 {
        match self {
            Generators::Product(g) => &g.pre,
            Generators::Correlated(g) => &g.pre,
        }
    }

    /// Compose with a further inverse flow map: the new field is
    /// `old(inv_flow(q))`.
    pub fn composed(&self, inv_flow: &AffineMap3) -> Generators {
        match self {
            Generators::Product(g) => {
                let mut g = g.clone();
                g.pre = g.pre.compose(inv_flow);
                Generators::Product(g)
            }
            Generators::Correlated(g) => {
                let mut g = g.clone();
                g.pre = g.pre.compose(inv_flow);
                Generators::Correlated(g)
            }
        }
    }

    pub fn is_product(&self) -> bool {
        matches!(self, Generators::Product(_))
    }

    pub fn p(&self, q: [f64; 3]) -> f64 {
        match self {
            Generators::Product(g) => {
                let [u, v, w] = g.pre.apply(q);
                g.psi1.density(u) * g.psi2.density(v) * g.p0.eval(w)
            }
            Generators::Correlated(g) => {
                let y = g.pre.apply(q);
                let z = [y[0] - g.mean[0], y[1] - g.mean[1], y[2] - g.mean[2]];
                let az = mat_vec(&g.quad, z);
                g.norm_const() * (-0.5 * dot(z, az)).exp()
            }
        }
    }

    pub fn s(&self, q: [f64; 3]) -> f64 {
        match self {
            Generators::Product(g) => {
                let [u, v, w] = g.pre.apply(q);
                g.hbar * (g.psi1.phase(u) + g.psi2.phase(v)) + g.s0.eval(w)
            }
            Generators::Correlated(g) => {
                let y = g.pre.apply(q);
                let z = [y[0] - g.mean[0], y[1] - g.mean[1], y[2] - g.mean[2]];
                g.s_value(z)
            }
        }
    }

    /// Everything at once; shares the exponential evaluations.
    pub fn fields(&self, q: [f64; 3]) -> PointFields {
        match self {
            Generators::Product(g) => product_fields(g, q),
            Generators::Correlated(g) => correlated_fields(g, q),
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

fn product_fields(g: &ProductGenerators, q: [f64; 3]) -> PointFields {
    let pre = &g.pre;
    let y = pre.apply(q);
    let [u, v, w] = y;

    // Per-factor values and logarithmic derivatives in pre-image coordinates.
    let psi1 = g.psi1.eval(u);
    let psi2 = g.psi2.eval(v);
    let l1 = g.psi1.log_deriv(u);
    let l2 = g.psi2.log_deriv(v);
    let l1_2 = g.psi1.log_deriv2(u);
    let l2_2 = g.psi2.log_deriv2(v);

    let p0 = g.p0.eval(w);
    let sqrt_p0 = g.p0.sqrt_eval(w);
    let dlp0 = g.p0.log_deriv(w); // d/dw ln P0
    let s0 = g.s0.eval(w);
    let ds0 = g.s0.derivative();
    let ds0_w = ds0.eval(w);
    let d2s0_w = ds0.derivative().eval(w);

    let p = psi1.norm_sqr() * psi2.norm_sqr() * p0;
    let s = g.hbar * (g.psi1.phase(u) + g.psi2.phase(v)) + s0;

    // chi = psi1(u) psi2(v) sqrt(P0(w)) e^{i S0(w)/hbar}
    let phase_c = Complex64::new(0.0, s0 / g.hbar);
    let c3 = sqrt_p0 * phase_c.exp();
    let chi = psi1 * psi2 * c3;

    // Logarithmic derivatives of chi with respect to the pre-image coords.
    let lc = [
        l1,
        l2,
        Complex64::new(0.5 * dlp0, ds0_w / g.hbar),
    ];
    // Second log-derivative data: chi_jj / chi = lc_j^2 + (d lc_j / d coord).
    let dlc = [
        l1_2 - l1 * l1,
        l2_2 - l2 * l2,
        Complex64::new(-g.p0.c, d2s0_w / g.hbar),
    ];

    // ln P derivatives in pre-image coordinates.
    let dlnp = [
        g.psi1.density_log_deriv(u),
        g.psi2.density_log_deriv(v),
        dlp0,
    ];
    // S derivatives in pre-image coordinates.
    let ds_pre = [
        g.hbar * g.psi1.d_phase(u),
        g.hbar * g.psi2.d_phase(v),
        ds0_w,
    ];
    let d2s_pre = [
        g.hbar * g.psi1.d2_phase(u),
        g.hbar * g.psi2.d2_phase(v),
        d2s0_w,
    ];

    // Chain rule through the affine pre-map: d/dq_i = sum_j m[j][i] d/dy_j.
    let m = &pre.m;
    let mut grad_p = [0.0; 3];
    let mut grad_s = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            grad_p[i] += m[j][i] * dlnp[j];
            grad_s[i] += m[j][i] * ds_pre[j];
        }
        grad_p[i] *= p;
    }

    // d2 S / dx dx  (S cross-Hessian in pre-image coords is zero: each factor
    // depends on a single pre-image coordinate).
    let mut d2s_xx = 0.0;
    for j in 0..3 {
        d2s_xx += m[j][2] * m[j][2] * d2s_pre[j];
    }

    // chi derivatives along q1 and q2.
    let mut d_chi = [Complex64::default(); 2];
    let mut d2_chi = [Complex64::default(); 2];
    for (slot, i) in [(0usize, 0usize), (1, 1)] {
        let mut first = Complex64::default();
        for j in 0..3 {
            first += m[j][i] * lc[j];
        }
        // second derivative: (sum_j m_ji lc_j)^2 + sum_j m_ji^2 dlc_j
        let mut second = first * first;
        for j in 0..3 {
            second += m[j][i] * m[j][i] * dlc[j];
        }
        d_chi[slot] = chi * first;
        d2_chi[slot] = chi * second;
    }

    PointFields {
        p,
        s,
        grad_p,
        grad_s,
        d2s_xx,
        chi,
        d_chi,
        d2_chi,
    }
}

fn correlated_fields(g: &CorrelatedGaussian, q: [f64; 3]) -> PointFields {
    let pre = &g.pre;
    let y = pre.apply(q);
    let z = [y[0] - g.mean[0], y[1] - g.mean[1], y[2] - g.mean[2]];
    let az = mat_vec(&g.quad, z);
    let p = g.norm_const() * (-0.5 * dot(z, az)).exp();
    let s = g.s_value(z);

    let ds_pre = [g.s_grad(z, 0), g.s_grad(z, 1), g.s_grad(z, 2)];
    // chi log-derivative in pre-image coords: -az/2 + i dS/hbar
    let lc: Vec<Complex64> = (0..3)
        .map(|j| Complex64::new(-0.5 * az[j], ds_pre[j] / g.hbar))
        .collect();

    let chi = Complex64::new(p.sqrt(), 0.0) * Complex64::new(0.0, s / g.hbar).exp();

    let m = &pre.m;
    let mut grad_p = [0.0; 3];
    let mut grad_s = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            grad_p[i] += m[j][i] * (-az[j]);
            grad_s[i] += m[j][i] * ds_pre[j];
        }
        grad_p[i] *= p;
    }

    let mut d2s_xx = 0.0;
    for j in 0..3 {
        for l in 0..3 {
            d2s_xx += m[j][2] * m[l][2] * g.s_hess(z, j, l);
        }
    }

    let mut d_chi = [Complex64::default(); 2];
    let mut d2_chi = [Complex64::default(); 2];
    for (slot, i) in [(0usize, 0usize), (1, 1)] {
        let mut first = Complex64::default();
        for j in 0..3 {
            first += m[j][i] * lc[j];
        }
        let mut second = first * first;
        for j in 0..3 {
            for l in 0..3 {
                let dl_jl = Complex64::new(-0.5 * g.quad[j][l], g.s_hess(z, j, l) / g.hbar);
                second += m[j][i] * m[l][i] * dl_jl;
            }
        }
        d_chi[slot] = chi * first;
        d2_chi[slot] = chi * second;
    }

    PointFields {
        p,
        s,
        grad_p,
        grad_s,
        d2s_xx,
        chi,
        d_chi,
        d2_chi,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn wavepacket_is_normalized() {
        let psi = GaussianWavepacket {
            a_re: 1.3,
            a_im: 0.4,
            center: 0.2,
            momentum: 0.7,
        };
        let n = 4001;
        let (lo, hi) = (-12.0, 12.0);
        let h = (hi - lo) / (n - 1) as f64;
        let norm: f64 = (0..n).map(|i| psi.eval(lo + i as f64 * h).norm_sqr()).sum::<f64>() * h;
        assert_relative_eq!(norm, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn log_derivatives_match_finite_differences() {
        let psi = GaussianWavepacket {
            a_re: 0.9,
            a_im: -0.3,
            center: -0.1,
            momentum: 1.2,
        };
        let u = 0.43;
        let h = 1e-5;
        let num_d = (psi.eval(u + h) - psi.eval(u - h)) / (2.0 * h);
        let num_d2 = (psi.eval(u + h) - 2.0 * psi.eval(u) + psi.eval(u - h)) / (h * h);
        assert_relative_eq!((psi.eval(u) * psi.log_deriv(u)).re, num_d.re, epsilon = 1e-6);
        assert_relative_eq!((psi.eval(u) * psi.log_deriv(u)).im, num_d.im, epsilon = 1e-6);
        assert_relative_eq!((psi.eval(u) * psi.log_deriv2(u)).re, num_d2.re, epsilon = 1e-4);
        assert_relative_eq!((psi.eval(u) * psi.log_deriv2(u)).im, num_d2.im, epsilon = 1e-4);
    }

    #[test]
    fn affine_compose_matches_pointwise() {
        let a = AffineMap3 {
            m: [[1.0, 0.5, -1.0], [0.0, 1.0, 0.0], [0.0, -2.0, 1.0]],
            b: [0.1, 0.0, -0.3],
        };
        let b = AffineMap3 {
            m: [[1.0, 0.0, 2.0], [0.0, 1.0, 0.0], [0.0, 1.0, 1.0]],
            b: [0.0, 0.2, 0.0],
        };
        let q = [0.3, -0.7, 1.1];
        let lhs = a.compose(&b).apply(q);
        let rhs = a.apply(b.apply(q));
        for i in 0..3 {
            assert_relative_eq!(lhs[i], rhs[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn product_fields_derivatives_match_finite_differences() {
        let g = ProductGenerators {
            psi1: GaussianWavepacket {
                a_re: 1.0,
                a_im: 0.2,
                center: 0.1,
                momentum: 0.5,
            },
            psi2: GaussianWavepacket::unit(),
            p0: ClassicalGaussian::unit(),
            s0: Poly1::new(vec![0.0, 0.3, 0.1]),
            hbar: 1.0,
            pre: AffineMap3 {
                m: [[1.0, 0.5, -1.0], [0.0, 1.0, 0.0], [0.0, -1.0, 1.0]],
                b: [0.0; 3],
            },
        };
        let gens = Generators::Product(g);
        let q = [0.2, -0.3, 0.4];
        let f = gens.fields(q);
        let h = 1e-5;

        for axis in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[axis] += h;
            qm[axis] -= h;
            let num_dp = (gens.p(qp) - gens.p(qm)) / (2.0 * h);
            let num_ds = (gens.s(qp) - gens.s(qm)) / (2.0 * h);
            assert_relative_eq!(f.grad_p[axis], num_dp, epsilon = 1e-6, max_relative = 1e-6);
            assert_relative_eq!(f.grad_s[axis], num_ds, epsilon = 1e-6, max_relative = 1e-6);
        }

        // chi derivatives along q1, q2 against finite differences of fields().
        for (slot, axis) in [(0usize, 0usize), (1, 1)] {
            let mut qp = q;
            let mut qm = q;
            qp[axis] += h;
            qm[axis] -= h;
            let cp = gens.fields(qp).chi;
            let cm = gens.fields(qm).chi;
            let c0 = f.chi;
            let num_d = (cp - cm) / (2.0 * h);
            let num_d2 = (cp - 2.0 * c0 + cm) / (h * h);
            assert_relative_eq!(f.d_chi[slot].re, num_d.re, epsilon = 1e-6);
            assert_relative_eq!(f.d_chi[slot].im, num_d.im, epsilon = 1e-6);
            assert_relative_eq!(f.d2_chi[slot].re, num_d2.re, epsilon = 1e-4);
            assert_relative_eq!(f.d2_chi[slot].im, num_d2.im, epsilon = 1e-4);
        }

        // d2s_xx
        let mut qp = q;
        let mut qm = q;
        qp[2] += h;
        qm[2] -= h;
        let num = (gens.s(qp) - 2.0 * gens.s(q) + gens.s(qm)) / (h * h);
        assert_relative_eq!(f.d2s_xx, num, epsilon = 1e-4);
    }

    #[test]
    fn correlated_fields_derivatives_match_finite_differences() {
        let g = CorrelatedGaussian {
            quad: [[1.2, 0.0, 0.5], [0.0, 1.0, 0.0], [0.5, 0.0, 1.1]],
            mean: [0.0, 0.0, 0.0],
            s_terms: vec![(0.4, [1, 0, 1]), (0.2, [0, 0, 2])],
            hbar: 1.0,
            pre: AffineMap3::identity(),
        };
        let gens = Generators::Correlated(g);
        let q = [0.3, 0.1, -0.2];
        let f = gens.fields(q);
        let h = 1e-5;
        for axis in 0..3 {
            let mut qp = q;
            let mut qm = q;
            qp[axis] += h;
            qm[axis] -= h;
            let num_dp = (gens.p(qp) - gens.p(qm)) / (2.0 * h);
            let num_ds = (gens.s(qp) - gens.s(qm)) / (2.0 * h);
            assert_relative_eq!(f.grad_p[axis], num_dp, epsilon = 1e-6, max_relative = 1e-6);
            assert_relative_eq!(f.grad_s[axis], num_ds, epsilon = 1e-6, max_relative = 1e-6);
        }
        for (slot, axis) in [(0usize, 0usize), (1, 1)] {
            let mut qp = q;
            let mut qm = q;
            qp[axis] += h;
            qm[axis] -= h;
            let cp = gens.fields(qp).chi;
            let cm = gens.fields(qm).chi;
            let num_d2 = (cp - 2.0 * f.chi + cm) / (h * h);
            assert_relative_eq!(f.d2_chi[slot].re, num_d2.re, epsilon = 1e-4);
            assert_relative_eq!(f.d2_chi[slot].im, num_d2.im, epsilon = 1e-4);
        }
    }

    #[test]
    fn erfc_reference_values() {
        assert_relative_eq!(erfc(0.0), 1.0, epsilon = 1e-7);
        assert_relative_eq!(erfc(1.0), 0.15729920705028513, max_relative = 2e-7);
        assert_relative_eq!(erfc(-1.0), 2.0 - 0.15729920705028513, max_relative = 2e-7);
        assert_relative_eq!(erfc(3.0), 2.209049699858544e-5, max_relative = 2e-7);
    }
}
