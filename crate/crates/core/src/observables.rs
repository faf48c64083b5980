//! Observable functionals over ensembles: classical phase-space functions
//! f(x, k) with k read off the action gradient, quantum operator expectations
//! through the hybrid wavefunction, their functional derivatives, the
//! functional Poisson bracket, and the bracket-algebra isomorphism checks.

use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::ensemble::{Ensemble, TwoParticleWavefunction, EPS_SUPPORT};
use crate::error::{CeError, Result};
use crate::grid::{stable_sum_by, Axis};

pub const X_DEGREE_CAP: u8 = 4;
pub const K_DEGREE_CAP: u8 = 2;

/// Polynomial f(x, k) on the classical phase space; key = (x power, k power).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhasePolynomial {
    coeffs: BTreeMap<(u8, u8), f64>,
}

impl PhasePolynomial {
    pub fn new(terms: &[(f64, u8, u8)]) -> Result<PhasePolynomial> {
        let mut coeffs = BTreeMap::new();
        for &(c, m, n) in terms {
            if m > X_DEGREE_CAP || n > K_DEGREE_CAP {
                return Err(CeError::Precondition(format!(
                    "phase polynomial term x^{m} k^{n} exceeds degree caps (x^{X_DEGREE_CAP}, k^{K_DEGREE_CAP})"
                )));
            }
            if c != 0.0 {
                *coeffs.entry((m, n)).or_insert(0.0) += c;
            }
        }
        coeffs.retain(|_, c| *c != 0.0);
        Ok(PhasePolynomial { coeffs })
    }

    fn from_map(coeffs: BTreeMap<(u8, u8), f64>) -> PhasePolynomial {
        let mut p = PhasePolynomial { coeffs };
        p.coeffs.retain(|_, c| *c != 0.0);
        p
    }

    pub fn constant(c: f64) -> PhasePolynomial {
        PhasePolynomial::new(&[(c, 0, 0)]).expect("constant within caps")
    }

    pub fn x() -> PhasePolynomial {
        PhasePolynomial::new(&[(1.0, 1, 0)]).unwrap()
    }

    pub fn k() -> PhasePolynomial {
        PhasePolynomial::new(&[(1.0, 0, 1)]).unwrap()
    }

    pub fn xk() -> PhasePolynomial {
        PhasePolynomial::new(&[(1.0, 1, 1)]).unwrap()
    }

    pub fn x2() -> PhasePolynomial {
        PhasePolynomial::new(&[(1.0, 2, 0)]).unwrap()
    }

    pub fn k2() -> PhasePolynomial {
        PhasePolynomial::new(&[(1.0, 0, 2)]).unwrap()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&(u8, u8), &f64)> {
        self.coeffs.iter()
    }

    pub fn eval(&self, x: f64, k: f64) -> f64 {
        self.coeffs
            .iter()
            .map(|(&(m, n), &c)| c * x.powi(m as i32) * k.powi(n as i32))
            .sum()
    }

    pub fn d_dx(&self) -> PhasePolynomial {
        let mut coeffs = BTreeMap::new();
        for (&(m, n), &c) in &self.coeffs {
            if m > 0 {
                *coeffs.entry((m - 1, n)).or_insert(0.0) += c * m as f64;
            }
        }
        PhasePolynomial::from_map(coeffs)
    }

    pub fn d_dk(&self) -> PhasePolynomial {
        let mut coeffs = BTreeMap::new();
        for (&(m, n), &c) in &self.coeffs {
            if n > 0 {
                *coeffs.entry((m, n - 1)).or_insert(0.0) += c * n as f64;
            }
        }
        PhasePolynomial::from_map(coeffs)
    }

    fn mul(&self, other: &PhasePolynomial) -> BTreeMap<(u8, u8), f64> {
        let mut coeffs = BTreeMap::new();
        for (&(m1, n1), &c1) in &self.coeffs {
            for (&(m2, n2), &c2) in &other.coeffs {
                *coeffs.entry((m1 + m2, n1 + n2)).or_insert(0.0) += c1 * c2;
            }
        }
        coeffs
    }

    /// Phase-space Poisson bracket {f, g} = f_x g_k - g_x f_k.
    pub fn phase_space_bracket(f: &PhasePolynomial, g: &PhasePolynomial) -> Result<PhasePolynomial> {
        let mut coeffs = f.d_dx().mul(&g.d_dk());
        for (key, c) in g.d_dx().mul(&f.d_dk()) {
            *coeffs.entry(key).or_insert(0.0) -= c;
        }
        let out = PhasePolynomial::from_map(coeffs);
        for (&(m, n), _) in out.terms() {
            if m > X_DEGREE_CAP || n > K_DEGREE_CAP {
                return Err(CeError::Unsupported(format!(
                    "phase-space bracket result contains x^{m} k^{n}, outside the degree caps"
                )));
            }
        }
        Ok(out)
    }

    pub fn label(&self) -> String {
        if self.coeffs.is_empty() {
            return "0".to_string();
        }
        let mut parts = Vec::new();
        for (&(m, n), &c) in &self.coeffs {
            let mut t = String::new();
            if c != 1.0 || (m == 0 && n == 0) {
                t.push_str(&format!("{c}"));
            }
            for (sym, pw) in [("x", m), ("k", n)] {
                if pw > 0 {
                    if !t.is_empty() {
                        t.push('*');
                    }
                    t.push_str(sym);
                    if pw > 1 {
                        t.push_str(&format!("^{pw}"));
                    }
                }
            }
            parts.push(t);
        }
        parts.join(" + ")
    }
}

/// Weyl-ordered monomial q^m p^n on one axis (n <= 2 so that application needs
/// at most second derivatives).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AxisMonomial {
    pub q_pow: u8,
    pub p_pow: u8,
}

impl AxisMonomial {
    pub fn identity() -> AxisMonomial {
        AxisMonomial { q_pow: 0, p_pow: 0 }
    }

    pub fn is_identity(&self) -> bool {
        self.q_pow == 0 && self.p_pow == 0
    }
}

/// One additive term: coeff * M(q1 axis) ⊗ M(q2 axis).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorTerm {
    pub coeff: f64,
    pub on_q1: AxisMonomial,
    pub on_q2: AxisMonomial,
}

/// Hermitian operator on the two-particle Hilbert space.
#[derive(Debug, Clone)]
pub enum QuantumOperatorSpec {
    /// Sum of products of per-axis Weyl monomials; Hermitian by construction.
    Composite(Vec<OperatorTerm>),
    /// Explicit matrix acting on a single axis (coarse grids only, n <= 64).
    ExplicitMatrix { axis: Axis, mat: Array2<Complex64> },
}

impl QuantumOperatorSpec {
    pub fn identity() -> Self {
        QuantumOperatorSpec::Composite(vec![OperatorTerm {
            coeff: 1.0,
            on_q1: AxisMonomial::identity(),
            on_q2: AxisMonomial::identity(),
        }])
    }

    /// q^m p^n (Weyl-symmetrized when both powers are nonzero) on `axis`.
    pub fn weyl(axis: Axis, q_pow: u8, p_pow: u8) -> Result<Self> {
        if axis == Axis::X {
            return Err(CeError::Precondition(
                "quantum operators act on q1 or q2".into(),
            ));
        }
        if q_pow > X_DEGREE_CAP || p_pow > K_DEGREE_CAP {
            return Err(CeError::Precondition(format!(
                "operator monomial q^{q_pow} p^{p_pow} exceeds degree caps"
            )));
        }
        let m = AxisMonomial { q_pow, p_pow };
        let term = match axis {
            Axis::Q1 => OperatorTerm {
                coeff: 1.0,
                on_q1: m,
                on_q2: AxisMonomial::identity(),
            },
            _ => OperatorTerm {
                coeff: 1.0,
                on_q1: AxisMonomial::identity(),
                on_q2: m,
            },
        };
        Ok(QuantumOperatorSpec::Composite(vec![term]))
    }

    pub fn position(axis: Axis) -> Self {
        Self::weyl(axis, 1, 0).unwrap()
    }

    pub fn momentum(axis: Axis) -> Self {
        Self::weyl(axis, 0, 1).unwrap()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            QuantumOperatorSpec::Composite(terms) => QuantumOperatorSpec::Composite(
                terms
                    .iter()
                    .map(|t| OperatorTerm {
                        coeff: t.coeff * factor,
                        ..*t
                    })
                    .collect(),
            ),
            QuantumOperatorSpec::ExplicitMatrix { axis, mat } => QuantumOperatorSpec::ExplicitMatrix {
                axis: *axis,
                mat: mat.mapv(|c| c * factor),
            },
        }
    }

    /// Axes the operator acts on nontrivially.
    pub fn axis_support(&self) -> Vec<Axis> {
        match self {
            QuantumOperatorSpec::Composite(terms) => {
                let mut q1 = false;
                let mut q2 = false;
                for t in terms {
                    q1 |= !t.on_q1.is_identity();
                    q2 |= !t.on_q2.is_identity();
                }
                let mut out = Vec::new();
                if q1 {
                    out.push(Axis::Q1);
                }
                if q2 {
                    out.push(Axis::Q2);
                }
                out
            }
            QuantumOperatorSpec::ExplicitMatrix { axis, .. } => vec![*axis],
        }
    }

    /// Frobenius norm of the anti-Hermitian part (zero for composites).
    pub fn anti_hermitian_norm(&self) -> f64 {
        match self {
            QuantumOperatorSpec::Composite(_) => 0.0,
            QuantumOperatorSpec::ExplicitMatrix { mat, .. } => {
                let mut acc = 0.0;
                for ((i, j), v) in mat.indexed_iter() {
                    let d = v - mat[(j, i)].conj();
                    acc += d.norm_sqr();
                }
                (acc / 4.0).sqrt()
            }
        }
    }

    pub fn check_hermitian(&self) -> Result<()> {
        let n = self.anti_hermitian_norm();
        if n > 1e-10 {
            return Err(CeError::NotHermitian { norm: n });
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            QuantumOperatorSpec::Composite(terms) => {
                let part = |m: &AxisMonomial, q: &str, p: &str| -> String {
                    let mut s = String::new();
                    if m.q_pow > 0 {
                        s.push_str(q);
                        if m.q_pow > 1 {
                            s.push_str(&format!("^{}", m.q_pow));
                        }
                    }
                    if m.p_pow > 0 {
                        if !s.is_empty() {
                            s.push('*');
                        }
                        s.push_str(p);
                        if m.p_pow > 1 {
                            s.push_str(&format!("^{}", m.p_pow));
                        }
                        if m.q_pow > 0 {
                            s.push_str("_sym");
                        }
                    }
                    s
                };
                let mut parts = Vec::new();
                for t in terms {
                    let a = part(&t.on_q1, "q1", "p1");
                    let b = part(&t.on_q2, "q2", "p2");
                    let mut s = String::new();
                    if t.coeff != 1.0 || (a.is_empty() && b.is_empty()) {
                        s.push_str(&format!("{}", t.coeff));
                    }
                    for piece in [a, b] {
                        if !piece.is_empty() {
                            if !s.is_empty() {
                                s.push('*');
                            }
                            s.push_str(&piece);
                        }
                    }
                    parts.push(s);
                }
                parts.join(" + ")
            }
            QuantumOperatorSpec::ExplicitMatrix { axis, .. } => {
                format!("matrix[{}]", axis.name())
            }
        }
    }
}

/// Derivative bundle for applying one axis monomial: the field, and its first
/// and second derivatives along that axis.
struct AxisDerivs<'a> {
    f: &'a Array3<Complex64>,
    d1: Option<&'a Array3<Complex64>>,
    d2: Option<&'a Array3<Complex64>>,
}

/// Apply the Weyl monomial q^m p^n at one grid point given coordinate value
/// and derivative values there.
fn apply_monomial_point(
    m: &AxisMonomial,
    hbar: f64,
    q: f64,
    f: Complex64,
    d1: Complex64,
    d2: Complex64,
) -> Complex64 {
    let qm = q.powi(m.q_pow as i32);
    match m.p_pow {
        0 => qm * f,
        1 => {
            // Weyl(q^m p) = q^m p + (p q^m)/2 - ...  = -i hbar (q^m f' + (m/2) q^{m-1} f)
            let mm = m.q_pow as f64;
            let lower = if m.q_pow > 0 {
                0.5 * mm * q.powi(m.q_pow as i32 - 1) * f
            } else {
                Complex64::default()
            };
            Complex64::new(0.0, -hbar) * (qm * d1 + lower)
        }
        2 => {
            // Weyl(q^m p^2) = -hbar² [q^m f'' + m q^{m-1} f' + m(m-1)/4 q^{m-2} f]
            let mm = m.q_pow as f64;
            let mut acc = qm * d2;
            if m.q_pow >= 1 {
                acc += mm * q.powi(m.q_pow as i32 - 1) * d1;
            }
            if m.q_pow >= 2 {
                acc += 0.25 * mm * (mm - 1.0) * q.powi(m.q_pow as i32 - 2) * f;
            }
            -hbar * hbar * acc
        }
        _ => unreachable!("p_pow capped at 2"),
    }
}

/// Apply an AxisMonomial along `axis` to the 3-D field, using derivative
/// arrays supplied by the caller.
fn apply_axis_monomial_3d(
    e: &Ensemble,
    m: &AxisMonomial,
    axis: Axis,
    derivs: AxisDerivs<'_>,
) -> Array3<Complex64> {
    let grid = e.grid();
    let ax = grid.axis(axis);
    let hbar = e.hbar();
    let mut out = Array3::default(derivs.f.dim());
    for ((i, j, k), o) in out.indexed_iter_mut() {
        let q = ax.value(match axis {
            Axis::Q1 => i,
            Axis::Q2 => j,
            Axis::X => k,
        });
        let idx = (i, j, k);
        let f = derivs.f[idx];
        let d1 = derivs.d1.map(|a| a[idx]).unwrap_or_default();
        let d2 = derivs.d2.map(|a| a[idx]).unwrap_or_default();
        *o = apply_monomial_point(m, hbar, q, f, d1, d2);
    }
    out
}

fn multiply_q_pow(e: &Ensemble, axis: Axis, q_pow: u8, field: &Array3<Complex64>) -> Array3<Complex64> {
    if q_pow == 0 {
        return field.clone();
    }
    let ax = e.grid().axis(axis);
    let mut out = field.clone();
    for ((i, j, k), o) in out.indexed_iter_mut() {
        let q = ax.value(match axis {
            Axis::Q1 => i,
            Axis::Q2 => j,
            Axis::X => k,
        });
        *o *= q.powi(q_pow as i32);
    }
    out
}

/// Grid-path monomial application through operator composition:
///   Weyl(q^m p)  = ½ (q^m p̂ + p̂ q^m),
///   Weyl(q^m p²) = ¼ (p̂² q^m + 2 p̂ q^m p̂ + q^m p̂²),
/// with p̂ the central-difference stencil. Summation by parts of the interior
/// stencils makes the expectations real to rounding, which the expanded
/// product-rule form does not achieve on a grid.
fn apply_monomial_grid(
    e: &Ensemble,
    m: &AxisMonomial,
    axis: Axis,
    chi: &Array3<Complex64>,
) -> Array3<Complex64> {
    let hbar = e.hbar();
    let grid = e.grid();
    match m.p_pow {
        0 => multiply_q_pow(e, axis, m.q_pow, chi),
        1 => {
            let qm_chi = multiply_q_pow(e, axis, m.q_pow, chi);
            let d_chi = crate::grid::gradient_c(grid, chi, axis);
            let qm_d = multiply_q_pow(e, axis, m.q_pow, &d_chi);
            let d_qm = crate::grid::gradient_c(grid, &qm_chi, axis);
            let mut out = Array3::default(chi.dim());
            let half_ih = Complex64::new(0.0, -0.5 * hbar);
            for ((o, a), b) in out.iter_mut().zip(qm_d.iter()).zip(d_qm.iter()) {
                *o = half_ih * (a + b);
            }
            out
        }
        2 => {
            let qm_chi = multiply_q_pow(e, axis, m.q_pow, chi);
            let d2_qm = crate::grid::second_derivative_c(grid, &qm_chi, axis);
            let d_chi = crate::grid::gradient_c(grid, chi, axis);
            let qm_d = multiply_q_pow(e, axis, m.q_pow, &d_chi);
            let d_qm_d = crate::grid::gradient_c(grid, &qm_d, axis);
            let qm_d2 = multiply_q_pow(
                e,
                axis,
                m.q_pow,
                &crate::grid::second_derivative_c(grid, chi, axis),
            );
            let mut out = Array3::default(chi.dim());
            let scale = -0.25 * hbar * hbar;
            for (((o, a), b), c) in out
                .iter_mut()
                .zip(d2_qm.iter())
                .zip(d_qm_d.iter())
                .zip(qm_d2.iter())
            {
                *o = scale * (a + 2.0 * b + c);
            }
            out
        }
        _ => unreachable!("p_pow capped at 2"),
    }
}

/// M chi over the full configuration space. Supported when each term carries
/// momentum content on at most one axis (position factors anywhere).
pub fn apply_to_chi(e: &Ensemble, spec: &QuantumOperatorSpec) -> Result<Array3<Complex64>> {
    spec.check_hermitian()?;
    let chi = e.chi();
    match spec {
        QuantumOperatorSpec::Composite(terms) => {
            let mut acc = Array3::<Complex64>::default(chi.dim());
            for t in terms {
                if t.on_q1.p_pow > 0 && t.on_q2.p_pow > 0 {
                    return Err(CeError::Unsupported(
                        "pointwise application with momentum content on both axes".into(),
                    ));
                }
                // Apply the momentum-carrying monomial (if any) first, then
                // multiply by the remaining position polynomial.
                let (mom_axis, mom, pos_axis, pos) = if t.on_q1.p_pow > 0 {
                    (Axis::Q1, t.on_q1, Axis::Q2, t.on_q2)
                } else if t.on_q2.p_pow > 0 {
                    (Axis::Q2, t.on_q2, Axis::Q1, t.on_q1)
                } else {
                    (Axis::Q1, t.on_q1, Axis::Q2, t.on_q2)
                };
                let d1;
                let d2;
                let applied = if mom.p_pow == 0 {
                    apply_axis_monomial_3d(
                        e,
                        &mom,
                        mom_axis,
                        AxisDerivs {
                            f: &chi,
                            d1: None,
                            d2: None,
                        },
                    )
                } else if e.generators().is_some() {
                    // exact derivatives: the expanded Weyl form is exact
                    d1 = e.d_chi(mom_axis);
                    d2 = if mom.p_pow > 1 {
                        Some(e.d2_chi(mom_axis))
                    } else {
                        None
                    };
                    apply_axis_monomial_3d(
                        e,
                        &mom,
                        mom_axis,
                        AxisDerivs {
                            f: &chi,
                            d1: Some(&d1),
                            d2: d2.as_deref(),
                        },
                    )
                } else {
                    // finite differences: composition keeps the discrete
                    // expectation real
                    apply_monomial_grid(e, &mom, mom_axis, &chi)
                };
                // position factor on the other axis
                let grid = e.grid();
                let pos_ax = grid.axis(pos_axis);
                for ((i, j, k), a) in acc.indexed_iter_mut() {
                    let q = pos_ax.value(match pos_axis {
                        Axis::Q1 => i,
                        Axis::Q2 => j,
                        Axis::X => k,
                    });
                    *a += t.coeff * q.powi(pos.q_pow as i32) * applied[(i, j, k)];
                }
            }
            Ok(acc)
        }
        QuantumOperatorSpec::ExplicitMatrix { axis, mat } => {
            let n = e.grid().axis(*axis).n;
            if mat.dim() != (n, n) {
                return Err(CeError::Precondition(format!(
                    "explicit matrix is {:?} for a {n}-point axis",
                    mat.dim()
                )));
            }
            if n > 64 {
                return Err(CeError::Precondition(
                    "explicit matrices are reserved for axes with n <= 64".into(),
                ));
            }
            let mut out = Array3::<Complex64>::default(chi.dim());
            let (n1, n2, n3) = chi.dim();
            match axis {
                Axis::Q1 => {
                    for j in 0..n2 {
                        for k in 0..n3 {
                            for i in 0..n1 {
                                let mut s = Complex64::default();
                                for ii in 0..n1 {
                                    s += mat[(i, ii)] * chi[(ii, j, k)];
                                }
                                out[(i, j, k)] = s;
                            }
                        }
                    }
                }
                Axis::Q2 => {
                    for i in 0..n1 {
                        for k in 0..n3 {
                            for j in 0..n2 {
                                let mut s = Complex64::default();
                                for jj in 0..n2 {
                                    s += mat[(j, jj)] * chi[(i, jj, k)];
                                }
                                out[(i, j, k)] = s;
                            }
                        }
                    }
                }
                Axis::X => {
                    return Err(CeError::Precondition(
                        "quantum operators act on q1 or q2".into(),
                    ))
                }
            }
            Ok(out)
        }
    }
}

/// Observable functional of (P, S).
#[derive(Clone)]
pub enum ObservableFunctional {
    Classical(PhasePolynomial),
    Quantum(QuantumOperatorSpec),
    Custom(CustomFunctional),
}

/// Value callback of a custom functional.
pub type ValueFn = Arc<dyn Fn(&Ensemble) -> Result<f64> + Send + Sync>;
/// Functional-derivative callback returning a grid array.
pub type DerivativeFn = Arc<dyn Fn(&Ensemble) -> Array3<f64> + Send + Sync>;

#[derive(Clone)]
pub struct CustomFunctional {
    pub label: String,
    pub value: ValueFn,
    pub d_p: Option<DerivativeFn>,
    pub d_s: Option<DerivativeFn>,
}

impl std::fmt::Debug for ObservableFunctional {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl ObservableFunctional {
    pub fn classical(f: PhasePolynomial) -> Self {
        ObservableFunctional::Classical(f)
    }

    pub fn quantum(m: QuantumOperatorSpec) -> Self {
        ObservableFunctional::Quantum(m)
    }

    pub fn label(&self) -> String {
        match self {
            ObservableFunctional::Classical(f) => format!("C[{}]", f.label()),
            ObservableFunctional::Quantum(m) => format!("Q[{}]", m.label()),
            ObservableFunctional::Custom(c) => c.label.clone(),
        }
    }
}

pub const IMAG_RESIDUE_TOL: f64 = 1e-6;

/// Ensemble-average value of the observable.
pub fn value(obs: &ObservableFunctional, e: &Ensemble) -> Result<f64> {
    match obs {
        ObservableFunctional::Classical(f) => {
            let ds_x = e.ds(Axis::X);
            let support = e.support();
            let p = e.p();
            let grid = e.grid();
            let mut plane = Vec::with_capacity(p.len());
            for ((i, j, k), pv) in p.indexed_iter() {
                let m = support[(i, j, k)];
                if m == 0.0 {
                    plane.push(0.0);
                    continue;
                }
                let x = grid.x.value(k);
                plane.push(pv * f.eval(x, ds_x[(i, j, k)]));
                let _ = (i, j);
            }
            Ok(stable_sum_by(&plane, |v| *v) * grid.cell_volume())
        }
        ObservableFunctional::Quantum(m) => {
            let chi = e.chi();
            let mchi = apply_to_chi(e, m)?;
            let dv = e.grid().cell_volume();
            let pairs: Vec<Complex64> = chi
                .iter()
                .zip(mchi.iter())
                .map(|(c, mc)| c.conj() * mc)
                .collect();
            let re = stable_sum_by(&pairs, |c| c.re) * dv;
            let im = stable_sum_by(&pairs, |c| c.im) * dv;
            if im.abs() > IMAG_RESIDUE_TOL {
                return Err(CeError::ImaginaryResidue {
                    residue: im.abs(),
                    context: format!("value of {}", m.label()),
                });
            }
            Ok(re)
        }
        ObservableFunctional::Custom(c) => (c.value)(e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conjugate {
    P,
    S,
}

/// Analytic functional derivative as a grid array.
pub fn functional_derivative(
    obs: &ObservableFunctional,
    e: &Ensemble,
    wrt: Conjugate,
) -> Result<Array3<f64>> {
    let support = e.support();
    match obs {
        ObservableFunctional::Classical(f) => {
            let grid = e.grid();
            let ds_x = e.ds(Axis::X);
            match wrt {
                Conjugate::P => {
                    // δC/δP = f(x, dS/dx) on the support
                    let mut out = Array3::zeros(e.p().dim());
                    for ((i, j, k), o) in out.indexed_iter_mut() {
                        if support[(i, j, k)] == 0.0 {
                            continue;
                        }
                        let x = grid.x.value(k);
                        *o = f.eval(x, ds_x[(i, j, k)]);
                    }
                    Ok(out)
                }
                Conjugate::S => {
                    // δC/δS = -d/dx [ P f_k(x, dS/dx) ]
                    let fk = f.d_dk();
                    if e.generators().is_some() {
                        // closed-form product rule
                        let fkx = fk.d_dx();
                        let fkk = fk.d_dk();
                        let dp_x = e.dp(Axis::X);
                        let d2s = e.d2s_xx();
                        let p = e.p();
                        let mut out = Array3::zeros(p.dim());
                        for ((i, j, k), o) in out.indexed_iter_mut() {
                            if support[(i, j, k)] == 0.0 {
                                continue;
                            }
                            let x = grid.x.value(k);
                            let kbar = ds_x[(i, j, k)];
                            *o = -(dp_x[(i, j, k)] * fk.eval(x, kbar)
                                + p[(i, j, k)]
                                    * (fkx.eval(x, kbar) + fkk.eval(x, kbar) * d2s[(i, j, k)]));
                        }
                        Ok(out)
                    } else {
                        // discrete divergence of the masked flux
                        let p = e.p();
                        let mut flux = Array3::zeros(p.dim());
                        for ((i, j, k), fx) in flux.indexed_iter_mut() {
                            if support[(i, j, k)] == 0.0 {
                                continue;
                            }
                            let x = grid.x.value(k);
                            *fx = p[(i, j, k)] * fk.eval(x, ds_x[(i, j, k)]);
                        }
                        let mut out = crate::grid::gradient(grid, &flux, Axis::X);
                        out.mapv_inplace(|v| -v);
                        Ok(out)
                    }
                }
            }
        }
        ObservableFunctional::Quantum(m) => {
            let chi = e.chi();
            let mchi = apply_to_chi(e, m)?;
            let hbar = e.hbar();
            let p = e.p();
            let mut out = Array3::zeros(p.dim());
            match wrt {
                Conjugate::P => {
                    // δQ/δP = Re[conj(chi) M chi] / P
                    for ((i, j, k), o) in out.indexed_iter_mut() {
                        if support[(i, j, k)] == 0.0 {
                            continue;
                        }
                        *o = (chi[(i, j, k)].conj() * mchi[(i, j, k)]).re / p[(i, j, k)];
                    }
                }
                Conjugate::S => {
                    // δQ/δS = (2/hbar) Im[conj(chi) M chi]
                    for ((i, j, k), o) in out.indexed_iter_mut() {
                        if support[(i, j, k)] == 0.0 {
                            continue;
                        }
                        *o = 2.0 / hbar * (chi[(i, j, k)].conj() * mchi[(i, j, k)]).im;
                    }
                }
            }
            Ok(out)
        }
        ObservableFunctional::Custom(c) => {
            let f = match wrt {
                Conjugate::P => c.d_p.as_ref(),
                Conjugate::S => c.d_s.as_ref(),
            };
            match f {
                Some(df) => Ok(df(e)),
                None => Err(CeError::Unsupported(format!(
                    "custom functional `{}` lacks a δ/δ{} callable",
                    c.label,
                    match wrt {
                        Conjugate::P => "P",
                        Conjugate::S => "S",
                    }
                ))),
            }
        }
    }
}

/// Numerical functional derivative at a single grid point: a centered bump of
/// magnitude h / Δv, h = 1e-6 · (|value| + 1).
pub fn functional_derivative_at(
    obs: &ObservableFunctional,
    e: &Ensemble,
    wrt: Conjugate,
    index: (usize, usize, usize),
) -> Result<f64> {
    let scale = value(obs, e)?.abs() + 1.0;
    let h = 1e-6 * scale;
    let bump = h / e.grid().cell_volume();

    let probe = |sign: f64| -> Result<f64> {
        let mut p = e.p().clone();
        let mut s = e.s().clone();
        match wrt {
            Conjugate::P => p[index] += sign * bump,
            Conjugate::S => s[index] += sign * bump,
        }
        let pert = Ensemble::from_arrays_unchecked(*e.grid(), p, s, e.hbar());
        value(obs, &pert)
    };
    Ok((probe(1.0)? - probe(-1.0)?) / (2.0 * h))
}

/// Functional Poisson bracket {V, W} = ∫ (δV/δP δW/δS − δW/δP δV/δS).
pub fn poisson_bracket(
    v: &ObservableFunctional,
    w: &ObservableFunctional,
    e: &Ensemble,
) -> Result<f64> {
    let vp = functional_derivative(v, e, Conjugate::P)?;
    let vs = functional_derivative(v, e, Conjugate::S)?;
    let wp = functional_derivative(w, e, Conjugate::P)?;
    let ws = functional_derivative(w, e, Conjugate::S)?;
    let support = e.support();
    let mut integrand = Vec::with_capacity(vp.len());
    for (((a, b), (c, d)), m) in vp
        .iter()
        .zip(ws.iter())
        .zip(wp.iter().zip(vs.iter()))
        .zip(support.iter())
    {
        integrand.push((a * b - c * d) * m);
    }
    Ok(stable_sum_by(&integrand, |v| *v) * e.grid().cell_volume())
}

/// Report for one bracket-isomorphism check.
#[derive(Debug, Clone, serde::Serialize)]
pub struct BracketReport {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_error: f64,
}

/// {C_f, C_g} against C_{{f,g}} (Poisson bracket on phase space).
pub fn verify_classical_isomorphism(
    f: &PhasePolynomial,
    g: &PhasePolynomial,
    e: &Ensemble,
) -> Result<BracketReport> {
    let cf = ObservableFunctional::classical(f.clone());
    let cg = ObservableFunctional::classical(g.clone());
    let lhs = poisson_bracket(&cf, &cg, e)?;
    let fg = PhasePolynomial::phase_space_bracket(f, g)?;
    let rhs = value(&ObservableFunctional::classical(fg.clone()), e)?;
    Ok(BracketReport {
        label: format!("{{C[{}], C[{}]}} vs C[{}]", f.label(), g.label(), fg.label()),
        lhs,
        rhs,
        abs_error: (lhs - rhs).abs(),
    })
}

/// Weyl symbol of a single-axis composite, as a phase-space polynomial in the
/// axis coordinate pair; None when the spec is not single-axis composite.
fn single_axis_symbol(spec: &QuantumOperatorSpec) -> Option<(Option<Axis>, PhasePolynomial)> {
    let QuantumOperatorSpec::Composite(terms) = spec else {
        return None;
    };
    let support = spec.axis_support();
    if support.len() > 1 {
        return None;
    }
    let axis = support.first().copied();
    let mut coeffs = BTreeMap::new();
    for t in terms {
        let m = match axis {
            Some(Axis::Q1) | None => t.on_q1,
            Some(Axis::Q2) => t.on_q2,
            Some(Axis::X) => unreachable!(),
        };
        let other = match axis {
            Some(Axis::Q1) | None => t.on_q2,
            Some(Axis::Q2) => t.on_q1,
            Some(Axis::X) => unreachable!(),
        };
        if !other.is_identity() {
            return None;
        }
        *coeffs.entry((m.q_pow, m.p_pow)).or_insert(0.0) += t.coeff;
    }
    Some((axis, PhasePolynomial::from_map(coeffs)))
}

fn symbol_to_spec(axis: Axis, sym: &PhasePolynomial) -> Result<QuantumOperatorSpec> {
    let mut terms = Vec::new();
    for (&(m, n), &c) in sym.terms() {
        if n > K_DEGREE_CAP {
            return Err(CeError::Unsupported(format!(
                "commutator symbol carries p^{n}, outside the applicable degree window"
            )));
        }
        let mono = AxisMonomial { q_pow: m, p_pow: n };
        terms.push(match axis {
            Axis::Q1 => OperatorTerm {
                coeff: c,
                on_q1: mono,
                on_q2: AxisMonomial::identity(),
            },
            Axis::Q2 => OperatorTerm {
                coeff: c,
                on_q1: AxisMonomial::identity(),
                on_q2: mono,
            },
            Axis::X => unreachable!(),
        });
    }
    if terms.is_empty() {
        terms.push(OperatorTerm {
            coeff: 0.0,
            on_q1: AxisMonomial::identity(),
            on_q2: AxisMonomial::identity(),
        });
    }
    Ok(QuantumOperatorSpec::Composite(terms))
}

/// Weyl symbol of i[M, N]/hbar for same-axis operators: the Moyal bracket.
/// With p-degree <= 2 on both sides the sine series terminates after the
/// hbar² term, so this is exact.
fn moyal_bracket(
    a: &PhasePolynomial,
    b: &PhasePolynomial,
    hbar: f64,
) -> Result<PhasePolynomial> {
    // Poisson part
    let mut coeffs = a.d_dx().mul(&b.d_dk());
    for (key, c) in b.d_dx().mul(&a.d_dk()) {
        *coeffs.entry(key).or_insert(0.0) -= c;
    }
    // + hbar²/8 [ (a_qqp)(b_qpp) − (a_qpp)(b_qqp) ]
    let a_qqp = a.d_dx().d_dx().d_dk();
    let a_qpp = a.d_dx().d_dk().d_dk();
    let b_qqp = b.d_dx().d_dx().d_dk();
    let b_qpp = b.d_dx().d_dk().d_dk();
    let corr_scale = hbar * hbar / 8.0;
    for (key, c) in a_qqp.mul(&b_qpp) {
        *coeffs.entry(key).or_insert(0.0) += corr_scale * c;
    }
    for (key, c) in a_qpp.mul(&b_qqp) {
        *coeffs.entry(key).or_insert(0.0) -= corr_scale * c;
    }
    Ok(PhasePolynomial::from_map(coeffs))
}

/// {Q_M, Q_N} against Q_{i[M,N]/hbar}.
pub fn verify_quantum_isomorphism(
    m: &QuantumOperatorSpec,
    n: &QuantumOperatorSpec,
    e: &Ensemble,
) -> Result<BracketReport> {
    let qm = ObservableFunctional::quantum(m.clone());
    let qn = ObservableFunctional::quantum(n.clone());
    let lhs = poisson_bracket(&qm, &qn, e)?;

    let (am, sm) = single_axis_symbol(m).ok_or_else(|| {
        CeError::Unsupported("quantum isomorphism requires single-axis composite operators".into())
    })?;
    let (an, sn) = single_axis_symbol(n).ok_or_else(|| {
        CeError::Unsupported("quantum isomorphism requires single-axis composite operators".into())
    })?;

    let (rhs, comm_label) = match (am, an) {
        (Some(ax_m), Some(ax_n)) if ax_m == ax_n => {
            let sym = moyal_bracket(&sm, &sn, e.hbar())?;
            let spec = symbol_to_spec(ax_m, &sym)?;
            (
                value(&ObservableFunctional::quantum(spec), e)?,
                format!("i[..]/h on {}", ax_m.name()),
            )
        }
        // Different axes or at least one scalar: commutator vanishes.
        _ => (0.0, "0".to_string()),
    };
    Ok(BracketReport {
        label: format!(
            "{{Q[{}], Q[{}]}} vs Q[{}]",
            m.label(),
            n.label(),
            comm_label
        ),
        lhs,
        rhs,
        abs_error: (lhs - rhs).abs(),
    })
}

/// Apply a 1-particle operator to a two-particle wavefunction along the given
/// particle axis (0 = q1, 1 = q2), with finite-difference momentum action.
pub fn apply_1particle(
    spec: &QuantumOperatorSpec,
    wf: &TwoParticleWavefunction,
    particle: usize,
) -> Result<Array2<Complex64>> {
    spec.check_hermitian()?;
    let (n1, n2) = wf.psi.dim();
    let (axspec, h) = if particle == 0 {
        (wf.q1, wf.q1.spacing())
    } else {
        (wf.q2, wf.q2.spacing())
    };
    let hbar = wf.hbar;

    let take_line = |psi: &Array2<Complex64>, fixed: usize| -> Vec<Complex64> {
        if particle == 0 {
            (0..n1).map(|i| psi[(i, fixed)]).collect()
        } else {
            (0..n2).map(|j| psi[(fixed, j)]).collect()
        }
    };

    let put_line = |out: &mut Array2<Complex64>, fixed: usize, line: &[Complex64]| {
        if particle == 0 {
            for (i, v) in line.iter().enumerate() {
                out[(i, fixed)] += *v;
            }
        } else {
            for (j, v) in line.iter().enumerate() {
                out[(fixed, j)] += *v;
            }
        }
    };

    let n_along = if particle == 0 { n1 } else { n2 };
    let n_fixed = if particle == 0 { n2 } else { n1 };

    let mut out = Array2::<Complex64>::default((n1, n2));
    match spec {
        QuantumOperatorSpec::Composite(terms) => {
            for t in terms {
                let (mine, other) = if particle == 0 {
                    (t.on_q1, t.on_q2)
                } else {
                    (t.on_q2, t.on_q1)
                };
                if !other.is_identity() {
                    return Err(CeError::WrongParticle(format!(
                        "operator {} is not local to particle {}",
                        spec.label(),
                        particle + 1
                    )));
                }
                for fixed in 0..n_fixed {
                    let line = take_line(&wf.psi, fixed);
                    let applied = apply_monomial_line(&mine, hbar, &axspec, &line, h);
                    let scaled: Vec<Complex64> =
                        applied.iter().map(|v| t.coeff * v).collect();
                    put_line(&mut out, fixed, &scaled);
                }
            }
            Ok(out)
        }
        QuantumOperatorSpec::ExplicitMatrix { mat, .. } => {
            if mat.dim() != (n_along, n_along) {
                return Err(CeError::Precondition(format!(
                    "explicit matrix is {:?} for a {n_along}-point axis",
                    mat.dim()
                )));
            }
            for fixed in 0..n_fixed {
                let line = take_line(&wf.psi, fixed);
                let applied: Vec<Complex64> = (0..n_along)
                    .map(|i| (0..n_along).map(|ii| mat[(i, ii)] * line[ii]).sum())
                    .collect();
                put_line(&mut out, fixed, &applied);
            }
            Ok(out)
        }
    }
}

/// Composition-form Weyl monomial on a sampled line (see
/// `apply_monomial_grid` for why composition rather than the expanded form).
fn apply_monomial_line(
    m: &AxisMonomial,
    hbar: f64,
    ax: &crate::grid::AxisSpec,
    line: &[Complex64],
    h: f64,
) -> Vec<Complex64> {
    let n = line.len();
    let qm = |v: &[Complex64]| -> Vec<Complex64> {
        (0..n)
            .map(|i| v[i] * ax.value(i).powi(m.q_pow as i32))
            .collect()
    };
    match m.p_pow {
        0 => qm(line),
        1 => {
            let a = qm(&diff1(line, h));
            let b = diff1(&qm(line), h);
            let half_ih = Complex64::new(0.0, -0.5 * hbar);
            (0..n).map(|i| half_ih * (a[i] + b[i])).collect()
        }
        2 => {
            let a = diff2(&qm(line), h);
            let b = diff1(&qm(&diff1(line, h)), h);
            let c = qm(&diff2(line, h));
            let scale = -0.25 * hbar * hbar;
            (0..n).map(|i| scale * (a[i] + 2.0 * b[i] + c[i])).collect()
        }
        _ => unreachable!("p_pow capped at 2"),
    }
}

fn diff1(line: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = line.len();
    let inv2h = 1.0 / (2.0 * h);
    let mut out = vec![Complex64::default(); n];
    out[0] = (-line[2] + 4.0 * line[1] - 3.0 * line[0]) * inv2h;
    for i in 1..n - 1 {
        out[i] = (line[i + 1] - line[i - 1]) * inv2h;
    }
    out[n - 1] = (3.0 * line[n - 1] - 4.0 * line[n - 2] + line[n - 3]) * inv2h;
    out
}

fn diff2(line: &[Complex64], h: f64) -> Vec<Complex64> {
    let n = line.len();
    let invh2 = 1.0 / (h * h);
    let mut out = vec![Complex64::default(); n];
    out[0] = (2.0 * line[0] - 5.0 * line[1] + 4.0 * line[2] - line[3]) * invh2;
    for i in 1..n - 1 {
        out[i] = (line[i + 1] - 2.0 * line[i] + line[i - 1]) * invh2;
    }
    out[n - 1] = (2.0 * line[n - 1] - 5.0 * line[n - 2] + 4.0 * line[n - 3] - line[n - 4]) * invh2;
    out
}

/// Support threshold helper shared with the ensemble module.
pub fn support_epsilon(e: &Ensemble) -> f64 {
    EPS_SUPPORT * e.max_p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{ClassicalGaussian, GaussianWavepacket, Poly1};
    use crate::dynamics::{evolve, HamiltonianSpec, InteractionMode};
    use crate::ensemble::{make_product_ensemble, Action1D, Density1D, Wavefunction1D};
    use crate::presets::StandardScenario;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sg() -> StandardScenario {
        StandardScenario {
            n: 64,
            ..Default::default()
        }
    }

    #[test]
    fn classical_unit_observable_is_one() {
        let e = sg().initial(0.0).unwrap();
        let c1 = ObservableFunctional::classical(PhasePolynomial::constant(1.0));
        assert_relative_eq!(value(&c1, &e).unwrap(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn classical_x_vanishes_on_symmetric_initial_data() {
        let e = sg().initial(0.0).unwrap();
        let cx = ObservableFunctional::classical(PhasePolynomial::x());
        assert!(value(&cx, &e).unwrap().abs() < 1e-12);
    }

    #[test]
    fn classical_k_reads_linear_action_gradient() {
        let e = sg()
            .initial_with_s0(0.0, Poly1::new(vec![0.0, 2.0]))
            .unwrap();
        let ck = ObservableFunctional::classical(PhasePolynomial::k());
        assert_relative_eq!(value(&ck, &e).unwrap(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn quantum_q1_matches_quadrature_oracle_on_shifted_evolved_state() {
        // classical density centered at 1 so that <q1>_t = g1 t <x> = 1 at t = 1
        let scen = sg();
        let grid = scen.grid_for(1.0).unwrap();
        let e0 = make_product_ensemble(
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian { c: 1.0, center: 1.0 }),
            &Action1D::Poly(Poly1::zero()),
            &grid,
            1.0,
        )
        .unwrap();
        let h = HamiltonianSpec::HybridBilinear {
            g1: 1.0,
            g2: 0.0,
            mode: InteractionMode::Simultaneous,
        };
        let e1 = evolve(&e0, &h, 1.0).unwrap();
        let v = value(
            &ObservableFunctional::quantum(QuantumOperatorSpec::position(Axis::Q1)),
            &e1,
        )
        .unwrap();

        // independent quadrature of the same functional over the raw arrays
        let mut acc = 0.0;
        for ((i, _, _), pv) in e1.p().indexed_iter() {
            acc += pv * e1.grid().q1.value(i);
        }
        acc *= e1.grid().cell_volume();
        assert_relative_eq!(v, acc, epsilon = 1e-8);
        assert_relative_eq!(v, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn derivative_of_cx_wrt_p_is_the_coordinate() {
        let e = sg().initial(0.0).unwrap();
        let cx = ObservableFunctional::classical(PhasePolynomial::x());
        let d = functional_derivative(&cx, &e, Conjugate::P).unwrap();
        let support = e.support();
        for ((idx, dv), m) in d.indexed_iter().zip(support.iter()) {
            if *m == 0.0 {
                continue;
            }
            assert_relative_eq!(*dv, e.grid().x.value(idx.2), epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_ck_wrt_s_is_divergence_form() {
        // grid-path ensemble: check δC_k/δS equals -D_x P and integrates to ~0
        let e = sg().initial(0.0).unwrap();
        let e = crate::ensemble::Ensemble::from_arrays(
            *e.grid(),
            e.p().clone(),
            e.s().clone(),
            e.hbar(),
        )
        .unwrap();
        let ck = ObservableFunctional::classical(PhasePolynomial::k());
        let d = functional_derivative(&ck, &e, Conjugate::S).unwrap();
        let total = e.grid().integrate(&d);
        assert!(total.abs() < 1e-10, "divergence integral = {total}");

        let dp = crate::grid::gradient(e.grid(), e.p(), Axis::X);
        for (dv, g) in d.iter().zip(dp.iter()) {
            assert_relative_eq!(*dv, -g, epsilon = 1e-12, max_relative = 1e-10);
        }
    }

    #[test]
    fn numeric_probe_agrees_with_analytic_derivatives() {
        // small grid keeps the single-point probes cheap
        let scen = StandardScenario {
            n: 24,
            ..Default::default()
        };
        let grid = scen.grid_for(0.0).unwrap();
        // complex packet so the action carries q1 dependence
        let e = make_product_ensemble(
            &Wavefunction1D::Gaussian(GaussianWavepacket {
                a_re: 1.0,
                a_im: 0.3,
                center: 0.2,
                momentum: 0.5,
            }),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(Poly1::new(vec![0.0, 0.4, 0.15])),
            &grid,
            1.0,
        )
        .unwrap();
        // strip generators so probe and analytic path share the discretization
        let e = crate::ensemble::Ensemble::from_arrays(
            *e.grid(),
            e.p().clone(),
            e.s().clone(),
            e.hbar(),
        )
        .unwrap();

        let observables = vec![
            ObservableFunctional::classical(PhasePolynomial::xk()),
            ObservableFunctional::classical(PhasePolynomial::k2()),
            ObservableFunctional::quantum(QuantumOperatorSpec::position(Axis::Q1)),
            ObservableFunctional::quantum(QuantumOperatorSpec::momentum(Axis::Q1)),
        ];
        let mut rng = StdRng::seed_from_u64(7);
        let shape = e.p().dim();
        // centered probes need P - bump > 0, so sample where P is substantial
        let p_floor = 1e-3 * e.max_p();
        for obs in &observables {
            for wrt in [Conjugate::P, Conjugate::S] {
                let analytic = functional_derivative(obs, &e, wrt).unwrap();
                let scale = analytic.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let mut checked = 0;
                while checked < 8 {
                    let idx = (
                        rng.random_range(2..shape.0 - 2),
                        rng.random_range(2..shape.1 - 2),
                        rng.random_range(2..shape.2 - 2),
                    );
                    if e.p()[idx] < p_floor {
                        continue;
                    }
                    let numeric = functional_derivative_at(obs, &e, wrt, idx).unwrap();
                    // identically-zero fields (e.g. δQ[q1]/δS) compare noise
                    // against probe noise; both below floor counts as agreement
                    if analytic[idx].abs() < 1e-9 && numeric.abs() < 1e-9 {
                        checked += 1;
                        continue;
                    }
                    let err = (analytic[idx] - numeric).abs() / scale.max(1e-9);
                    assert!(
                        err < 1e-4,
                        "{} wrt {:?} at {:?}: analytic {} numeric {} rel err {err}",
                        obs.label(),
                        wrt,
                        idx,
                        analytic[idx],
                        numeric
                    );
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn custom_without_derivatives_is_unsupported() {
        let e = sg().initial(0.0).unwrap();
        let c = ObservableFunctional::Custom(CustomFunctional {
            label: "opaque".into(),
            value: Arc::new(|_| Ok(0.0)),
            d_p: None,
            d_s: None,
        });
        assert!(matches!(
            functional_derivative(&c, &e, Conjugate::P),
            Err(CeError::Unsupported(_))
        ));
    }

    #[test]
    fn bracket_of_observable_with_itself_vanishes() {
        let e = sg()
            .initial_with_s0(0.0, Poly1::new(vec![0.0, 0.5, 0.2]))
            .unwrap();
        for obs in [
            ObservableFunctional::classical(PhasePolynomial::xk()),
            ObservableFunctional::quantum(QuantumOperatorSpec::momentum(Axis::Q1)),
        ] {
            let b = poisson_bracket(&obs, &obs, &e).unwrap();
            assert!(b.abs() < 1e-10, "{{V,V}} = {b}");
        }
    }

    #[test]
    fn bracket_is_antisymmetric_and_bilinear_on_random_pairs() {
        let e = sg()
            .initial_with_s0(0.0, Poly1::new(vec![0.0, 0.3, 0.1]))
            .unwrap();
        let corpus = [
            ObservableFunctional::classical(PhasePolynomial::x()),
            ObservableFunctional::classical(PhasePolynomial::k()),
            ObservableFunctional::classical(PhasePolynomial::xk()),
            ObservableFunctional::quantum(QuantumOperatorSpec::position(Axis::Q1)),
            ObservableFunctional::quantum(QuantumOperatorSpec::momentum(Axis::Q2)),
        ];
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..6 {
            let a = &corpus[rng.random_range(0..corpus.len())];
            let b = &corpus[rng.random_range(0..corpus.len())];
            let ab = poisson_bracket(a, b, &e).unwrap();
            let ba = poisson_bracket(b, a, &e).unwrap();
            assert_relative_eq!(ab, -ba, epsilon = 1e-10);
        }

        // bilinearity in the first slot for classical observables:
        // {C_f + 2 C_g, W} = {C_f, W} + 2 {C_g, W}; built from the coefficient table
        let f = PhasePolynomial::x();
        let g = PhasePolynomial::k();
        let combo = PhasePolynomial::new(&[(1.0, 1, 0), (2.0, 0, 1)]).unwrap();
        let w = ObservableFunctional::quantum(QuantumOperatorSpec::momentum(Axis::Q1));
        let lhs = poisson_bracket(&ObservableFunctional::classical(combo), &w, &e).unwrap();
        let rhs = poisson_bracket(&ObservableFunctional::classical(f), &w, &e).unwrap()
            + 2.0 * poisson_bracket(&ObservableFunctional::classical(g), &w, &e).unwrap();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10);
    }

    #[test]
    fn canonical_brackets_equal_one() {
        let e = sg().initial(0.0).unwrap();
        let cx = ObservableFunctional::classical(PhasePolynomial::x());
        let ck = ObservableFunctional::classical(PhasePolynomial::k());
        assert_relative_eq!(poisson_bracket(&cx, &ck, &e).unwrap(), 1.0, epsilon = 1e-4);

        let qq = ObservableFunctional::quantum(QuantumOperatorSpec::position(Axis::Q1));
        let qp = ObservableFunctional::quantum(QuantumOperatorSpec::momentum(Axis::Q1));
        assert_relative_eq!(poisson_bracket(&qq, &qp, &e).unwrap(), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn classical_isomorphism_canonical_pair() {
        let e = sg().initial(0.0).unwrap();
        let r = verify_classical_isomorphism(&PhasePolynomial::x(), &PhasePolynomial::k(), &e)
            .unwrap();
        assert_relative_eq!(r.lhs, 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.rhs, 1.0, epsilon = 1e-4);
        assert!(r.abs_error < 1e-4);
    }

    #[test]
    fn classical_isomorphism_x2_k_gives_two_x() {
        let e = sg().initial(0.0).unwrap();
        let r = verify_classical_isomorphism(&PhasePolynomial::x2(), &PhasePolynomial::k(), &e)
            .unwrap();
        // {x², k} = 2x, whose average vanishes on the symmetric initial state
        assert!(r.rhs.abs() < 1e-10);
        assert!(r.abs_error < 1e-4, "error = {}", r.abs_error);
    }

    #[test]
    fn classical_isomorphism_on_evolved_state() {
        let scen = sg();
        let e1 = evolve(
            &scen
                .initial_with_s0(1.0, Poly1::new(vec![0.0, 0.3, 0.2]))
                .unwrap(),
            &scen.hamiltonian(),
            1.0,
        )
        .unwrap();
        let r =
            verify_classical_isomorphism(&PhasePolynomial::xk(), &PhasePolynomial::x2(), &e1)
                .unwrap();
        assert!(r.abs_error < 1e-3, "{}: error = {}", r.label, r.abs_error);
    }

    #[test]
    fn quantum_isomorphism_canonical_pair() {
        let e = sg().initial(0.0).unwrap();
        let r = verify_quantum_isomorphism(
            &QuantumOperatorSpec::position(Axis::Q1),
            &QuantumOperatorSpec::momentum(Axis::Q1),
            &e,
        )
        .unwrap();
        assert_relative_eq!(r.lhs, 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.rhs, 1.0, epsilon = 1e-4);
    }

    #[test]
    fn quantum_isomorphism_commuting_axes() {
        let e = sg().initial(0.0).unwrap();
        let r = verify_quantum_isomorphism(
            &QuantumOperatorSpec::position(Axis::Q1),
            &QuantumOperatorSpec::position(Axis::Q2),
            &e,
        )
        .unwrap();
        assert!(r.lhs.abs() < 1e-8);
        assert_eq!(r.rhs, 0.0);
    }

    #[test]
    fn quantum_isomorphism_mixed_monomial() {
        // shifted packet so <q1> is nonzero and the check is non-vacuous
        let grid = StandardScenario::default().grid_for(0.0).unwrap();
        let e = make_product_ensemble(
            &Wavefunction1D::Gaussian(GaussianWavepacket {
                a_re: 1.0,
                a_im: 0.0,
                center: 0.6,
                momentum: 0.4,
            }),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(Poly1::zero()),
            &grid,
            1.0,
        )
        .unwrap();
        let qp = QuantumOperatorSpec::weyl(Axis::Q1, 1, 1).unwrap();
        let q = QuantumOperatorSpec::position(Axis::Q1);
        let r = verify_quantum_isomorphism(&qp, &q, &e).unwrap();
        // [Weyl(qp), q]/(i h) has symbol {qp, q} = -q, so rhs = -<q1> = -0.6
        assert_relative_eq!(r.rhs, -0.6, epsilon = 1e-6);
        assert!(r.abs_error < 1e-3, "{}: error = {}", r.label, r.abs_error);
    }

    #[test]
    fn explicit_matrix_agrees_with_composite_on_coarse_grid() {
        let scen = StandardScenario {
            n: 48,
            ..Default::default()
        };
        let e = scen.initial(0.0).unwrap();
        let n = e.grid().q1.n;
        let mat = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                Complex64::new(e.grid().q1.value(i), 0.0)
            } else {
                Complex64::default()
            }
        });
        let via_matrix = value(
            &ObservableFunctional::quantum(QuantumOperatorSpec::ExplicitMatrix {
                axis: Axis::Q1,
                mat,
            }),
            &e,
        )
        .unwrap();
        let via_composite = value(
            &ObservableFunctional::quantum(QuantumOperatorSpec::position(Axis::Q1)),
            &e,
        )
        .unwrap();
        assert_relative_eq!(via_matrix, via_composite, epsilon = 1e-10);
    }

    #[test]
    fn phase_polynomial_rejects_excess_degree() {
        assert!(PhasePolynomial::new(&[(1.0, 5, 0)]).is_err());
        assert!(PhasePolynomial::new(&[(1.0, 0, 3)]).is_err());
        assert!(QuantumOperatorSpec::weyl(Axis::Q1, 1, 3).is_err());
    }
}
