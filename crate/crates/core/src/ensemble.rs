//! Hybrid ensembles (P, S) on the configuration space (q1, q2, x), their
//! derived statistical objects (classical marginal, conditional wavefunctions,
//! phase-space density, quantum density operator as a pure-state mixture), and
//! the hybrid-wavefunction representation.

use std::sync::{Arc, OnceLock};

use ndarray::{Array2, Array3, Axis as NdAxis};
use num_complex::Complex64;

use crate::analytic::{ClassicalGaussian, GaussianWavepacket, Generators, Poly1, ProductGenerators};
use crate::error::{CeError, Result};
use crate::grid::{self, stable_sum, stable_sum_by, Axis, AxisSpec, Grid};

/// Relative support threshold: S is treated as undefined (and integrands are
/// zeroed) where P <= EPS_SUPPORT * max(P).
pub const EPS_SUPPORT: f64 = 1e-12;
/// Relative conditioning threshold on the classical marginal.
pub const EPS_COND: f64 = 1e-8;
/// Normalization tolerance for ensembles.
pub const NORM_TOL: f64 = 1e-8;
/// Relative norm error above which inputs are rejected.
pub const INPUT_NORM_TOL: f64 = 1e-4;
/// Tail mass allowed outside the grid per input factor.
pub const TAIL_TOL: f64 = 1e-6;

/// One-particle wavefunction input: closed form or samples on the target axis.
#[derive(Debug, Clone)]
pub enum Wavefunction1D {
    Gaussian(GaussianWavepacket),
    Samples(Vec<Complex64>),
}

/// Classical density input.
#[derive(Debug, Clone)]
pub enum Density1D {
    Gaussian(ClassicalGaussian),
    Samples(Vec<f64>),
}

/// Classical action input.
#[derive(Debug, Clone)]
pub enum Action1D {
    Poly(Poly1),
    Samples(Vec<f64>),
}

#[derive(Default)]
struct FieldCache {
    chi: OnceLock<Arc<Array3<Complex64>>>,
    ds: [OnceLock<Arc<Array3<f64>>>; 3],
    dp: [OnceLock<Arc<Array3<f64>>>; 3],
    d2s_xx: OnceLock<Arc<Array3<f64>>>,
    d_chi: [OnceLock<Arc<Array3<Complex64>>>; 2],
    d2_chi: [OnceLock<Arc<Array3<Complex64>>>; 2],
    support: OnceLock<Arc<Array3<f64>>>,
    max_p: OnceLock<f64>,
    marginal: OnceLock<Arc<Marginal1D>>,
}

impl Clone for FieldCache {
    fn clone(&self) -> Self {
        // Caches are derived data; a fresh clone recomputes on demand.
        FieldCache::default()
    }
}

/// The central state object: probability density P and conjugate action S on
/// the configuration-space grid, with optional closed-form generators for
/// exact evaluation.
#[derive(Clone)]
pub struct Ensemble {
    grid: Grid,
    hbar: f64,
    p: Array3<f64>,
    s: Array3<f64>,
    generators: Option<Generators>,
    is_product: bool,
    cache: FieldCache,
}

impl std::fmt::Debug for Ensemble {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ensemble")
            .field("grid", &self.grid)
            .field("hbar", &self.hbar)
            .field("analytic", &self.generators.is_some())
            .field("is_product", &self.is_product)
            .finish()
    }
}

impl Ensemble {
    pub fn from_arrays(grid: Grid, p: Array3<f64>, s: Array3<f64>, hbar: f64) -> Result<Ensemble> {
        let e = Ensemble {
            grid,
            hbar,
            p,
            s,
            generators: None,
            is_product: false,
            cache: FieldCache::default(),
        };
        e.validate()?;
        Ok(e)
    }

    /// Internal constructor that skips invariant validation (used by the
    /// single-point functional-derivative probes, whose bumped fields are
    /// deliberately not normalized).
    pub(crate) fn from_arrays_unchecked(
        grid: Grid,
        p: Array3<f64>,
        s: Array3<f64>,
        hbar: f64,
    ) -> Ensemble {
        Ensemble {
            grid,
            hbar,
            p,
            s,
            generators: None,
            is_product: false,
            cache: FieldCache::default(),
        }
    }

    pub fn from_generators(
        grid: Grid,
        generators: Generators,
        hbar: f64,
        is_product: bool,
    ) -> Result<Ensemble> {
        let p = grid.sample(|q1, q2, x| generators.p([q1, q2, x]));
        let s = grid.sample(|q1, q2, x| generators.s([q1, q2, x]));
        let e = Ensemble {
            grid,
            hbar,
            p,
            s,
            generators: Some(generators),
            is_product,
            cache: FieldCache::default(),
        };
        e.validate()?;
        Ok(e)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn p(&self) -> &Array3<f64> {
        &self.p
    }

    pub fn s(&self) -> &Array3<f64> {
        &self.s
    }

    pub fn generators(&self) -> Option<&Generators> {
        self.generators.as_ref()
    }

    pub fn is_product(&self) -> bool {
        self.is_product
    }

    pub(crate) fn set_product_flag(&mut self, flag: bool) {
        self.is_product = flag;
    }

    pub fn norm(&self) -> f64 {
        self.grid.integrate(&self.p)
    }

    pub fn max_p(&self) -> f64 {
        *self.cache.max_p.get_or_init(|| {
            self.p.iter().copied().fold(0.0_f64, f64::max)
        })
    }

    /// Check the ensemble invariants: P >= 0, unit norm, S finite on support.
    pub fn validate(&self) -> Result<()> {
        if self.hbar <= 0.0 || !self.hbar.is_finite() {
            return Err(CeError::Invariant(format!("hbar = {} not positive", self.hbar)));
        }
        if self.p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(CeError::Invariant("P has negative or non-finite entries".into()));
        }
        let norm = self.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(CeError::Invariant(format!(
                "P integrates to {norm:.12e}, outside 1 ± {NORM_TOL:.0e}"
            )));
        }
        let eps = EPS_SUPPORT * self.max_p();
        for (pv, sv) in self.p.iter().zip(self.s.iter()) {
            if *pv > eps && !sv.is_finite() {
                return Err(CeError::Invariant("S non-finite on the support of P".into()));
            }
        }
        Ok(())
    }

    /// 0/1 mask of the support P > EPS_SUPPORT * max(P).
    pub fn support(&self) -> Arc<Array3<f64>> {
        self.cache
            .support
            .get_or_init(|| {
                let eps = EPS_SUPPORT * self.max_p();
                Arc::new(self.p.mapv(|v| if v > eps { 1.0 } else { 0.0 }))
            })
            .clone()
    }

    /// Hybrid wavefunction field sqrt(P) e^{iS/hbar} sampled on the grid.
    pub fn chi(&self) -> Arc<Array3<Complex64>> {
        self.cache
            .chi
            .get_or_init(|| {
                let arr = match &self.generators {
                    Some(g) => self.grid.sample_complex(|q1, q2, x| g.fields([q1, q2, x]).chi),
                    None => {
                        let hbar = self.hbar;
                        let mut out = Array3::default(self.p.dim());
                        for ((o, pv), sv) in out.iter_mut().zip(self.p.iter()).zip(self.s.iter()) {
                            *o = if *pv > 0.0 && sv.is_finite() {
                                pv.sqrt() * Complex64::new(0.0, sv / hbar).exp()
                            } else {
                                Complex64::new(pv.max(0.0).sqrt(), 0.0)
                            };
                        }
                        out
                    }
                };
                Arc::new(arr)
            })
            .clone()
    }

    /// dS/d(axis): analytic when generators exist, otherwise 2nd-order finite
    /// differences of the S array.
    pub fn ds(&self, axis: Axis) -> Arc<Array3<f64>> {
        self.cache.ds[axis.index()]
            .get_or_init(|| {
                let arr = match &self.generators {
                    Some(g) => self
                        .grid
                        .sample(|q1, q2, x| g.fields([q1, q2, x]).grad_s[axis.index()]),
                    None => grid::gradient(&self.grid, &self.s, axis),
                };
                Arc::new(arr)
            })
            .clone()
    }

    /// dP/d(axis).
    pub fn dp(&self, axis: Axis) -> Arc<Array3<f64>> {
        self.cache.dp[axis.index()]
            .get_or_init(|| {
                let arr = match &self.generators {
                    Some(g) => self
                        .grid
                        .sample(|q1, q2, x| g.fields([q1, q2, x]).grad_p[axis.index()]),
                    None => grid::gradient(&self.grid, &self.p, axis),
                };
                Arc::new(arr)
            })
            .clone()
    }

    /// d²S/dx².
    pub fn d2s_xx(&self) -> Arc<Array3<f64>> {
        self.cache
            .d2s_xx
            .get_or_init(|| {
                let arr = match &self.generators {
                    Some(g) => self.grid.sample(|q1, q2, x| g.fields([q1, q2, x]).d2s_xx),
                    None => {
                        let ds = self.ds(Axis::X);
                        grid::gradient(&self.grid, &ds, Axis::X)
                    }
                };
                Arc::new(arr)
            })
            .clone()
    }

    /// d(chi)/d(q-axis); `axis` must be Q1 or Q2.
    pub fn d_chi(&self, axis: Axis) -> Arc<Array3<Complex64>> {
        assert!(axis != Axis::X, "chi derivatives are along quantum axes");
        self.cache.d_chi[axis.index()]
            .get_or_init(|| {
                let arr = match &self.generators {
                    Some(g) => self
                        .grid
                        .sample_complex(|q1, q2, x| g.fields([q1, q2, x]).d_chi[axis.index()]),
                    None => grid::gradient_c(&self.grid, &self.chi(), axis),
                };
                Arc::new(arr)
            })
            .clone()
    }

    /// d²(chi)/d(q-axis)².
    pub fn d2_chi(&self, axis: Axis) -> Arc<Array3<Complex64>> {
        assert!(axis != Axis::X, "chi derivatives are along quantum axes");
        self.cache.d2_chi[axis.index()]
            .get_or_init(|| {
                let arr = match &self.generators {
                    Some(g) => self
                        .grid
                        .sample_complex(|q1, q2, x| g.fields([q1, q2, x]).d2_chi[axis.index()]),
                    None => grid::second_derivative_c(&self.grid, &self.chi(), axis),
                };
                Arc::new(arr)
            })
            .clone()
    }

    /// Classical marginal P(x) (cached).
    pub fn marginal_x(&self) -> Arc<Marginal1D> {
        self.cache
            .marginal
            .get_or_init(|| Arc::new(classical_marginal(self)))
            .clone()
    }
}

/// One-dimensional density on an axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal1D {
    pub axis: AxisSpec,
    pub values: Vec<f64>,
}

impl Marginal1D {
    pub fn integrate(&self) -> f64 {
        stable_sum(&self.values) * self.axis.spacing()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0_f64, f64::max)
    }
}

/// Two-particle wavefunction on the (q1, q2) grid.
#[derive(Debug, Clone)]
pub struct TwoParticleWavefunction {
    pub q1: AxisSpec,
    pub q2: AxisSpec,
    pub psi: Array2<Complex64>,
    pub hbar: f64,
}

impl TwoParticleWavefunction {
    pub fn cell_area(&self) -> f64 {
        self.q1.spacing() * self.q2.spacing()
    }

    pub fn norm_sq(&self) -> f64 {
        stable_sum_by(
            self.psi.as_slice().expect("contiguous"),
            |c| c.norm_sqr(),
        ) * self.cell_area()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sq().sqrt();
        if n > 0.0 {
            self.psi.mapv_inplace(|c| c / n);
        }
    }

    pub fn inner(&self, other: &TwoParticleWavefunction) -> Complex64 {
        let s: Complex64 = self
            .psi
            .iter()
            .zip(other.psi.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        s * self.cell_area()
    }

    /// L2 distance, both states assumed on the same grid.
    pub fn l2_distance(&self, other: &TwoParticleWavefunction) -> f64 {
        let s: f64 = self
            .psi
            .iter()
            .zip(other.psi.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.cell_area()).sqrt()
    }
}

/// rho_{Q1Q2} represented as weights over conditional pure states, never as an
/// (n² x n²) matrix.
#[derive(Debug, Clone)]
pub struct PureStateMixture {
    pub components: Vec<(f64, TwoParticleWavefunction)>,
}

impl PureStateMixture {
    pub fn total_weight(&self) -> f64 {
        stable_sum_by(&self.components, |(w, _)| *w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.iter().any(|(w, _)| *w < 0.0) {
            return Err(CeError::Invariant("mixture has negative weight".into()));
        }
        if (self.total_weight() - 1.0).abs() > NORM_TOL {
            return Err(CeError::Invariant(format!(
                "mixture weights sum to {:.12e}",
                self.total_weight()
            )));
        }
        for (i, (_, psi)) in self.components.iter().enumerate() {
            let n = psi.norm_sq();
            if (n - 1.0).abs() > 1e-6 {
                return Err(CeError::Invariant(format!(
                    "mixture component {i} has squared norm {n:.12e}"
                )));
            }
        }
        Ok(())
    }
}

fn axis_norm_sq_c(values: &[Complex64], h: f64) -> f64 {
    stable_sum_by(values, |c| c.norm_sqr()) * h
}

fn check_unit_norm(which: &str, norm_sq: f64) -> Result<()> {
    let norm = norm_sq.sqrt();
    let rel = (norm - 1.0).abs();
    if rel > INPUT_NORM_TOL {
        return Err(CeError::NotNormalized {
            which: which.to_string(),
            norm,
            rel_err: rel,
        });
    }
    Ok(())
}

/// Unwrap a phase line in place: values are adjusted by multiples of 2π so
/// that consecutive differences stay within (-π, π], walking outward from
/// `anchor`.
pub fn unwrap_phase_line(phases: &mut [f64], anchor: usize) {
    use std::f64::consts::PI;
    let n = phases.len();
    for i in anchor + 1..n {
        let mut d = phases[i] - phases[i - 1];
        while d > PI {
            phases[i] -= 2.0 * PI;
            d = phases[i] - phases[i - 1];
        }
        while d < -PI {
            phases[i] += 2.0 * PI;
            d = phases[i] - phases[i - 1];
        }
    }
    for i in (0..anchor).rev() {
        let mut d = phases[i] - phases[i + 1];
        while d > PI {
            phases[i] -= 2.0 * PI;
            d = phases[i] - phases[i + 1];
        }
        while d < -PI {
            phases[i] += 2.0 * PI;
            d = phases[i] - phases[i + 1];
        }
    }
}

/// Build the initial product ensemble P = |psi1|²|psi2|²P0,
/// S = hbar·arg(psi1) + hbar·arg(psi2) + S0.
pub fn make_product_ensemble(
    psi1: &Wavefunction1D,
    psi2: &Wavefunction1D,
    p0: &Density1D,
    s0: &Action1D,
    grid: &Grid,
    hbar: f64,
) -> Result<Ensemble> {
    // Tail checks first, so rejected inputs name the guilty axis.
    let tails: [(&'static str, f64); 3] = [
        (
            "q1",
            match psi1 {
                Wavefunction1D::Gaussian(g) => g.tail_mass(grid.q1.lower, grid.q1.upper),
                Wavefunction1D::Samples(v) => edge_mass_c(v, grid.q1.spacing()),
            },
        ),
        (
            "q2",
            match psi2 {
                Wavefunction1D::Gaussian(g) => g.tail_mass(grid.q2.lower, grid.q2.upper),
                Wavefunction1D::Samples(v) => edge_mass_c(v, grid.q2.spacing()),
            },
        ),
        (
            "x",
            match p0 {
                Density1D::Gaussian(g) => g.tail_mass(grid.x.lower, grid.x.upper),
                Density1D::Samples(v) => edge_mass_r(v, grid.x.spacing()),
            },
        ),
    ];
    for (axis, mass) in tails {
        if mass > TAIL_TOL {
            return Err(CeError::TailMass {
                axis,
                mass,
                limit: TAIL_TOL,
            });
        }
    }

    // Normalization checks on the grid quadrature.
    match psi1 {
        Wavefunction1D::Gaussian(g) => {
            let vals: Vec<Complex64> = grid.q1.values().iter().map(|&u| g.eval(u)).collect();
            check_unit_norm("psi1", axis_norm_sq_c(&vals, grid.q1.spacing()))?;
        }
        Wavefunction1D::Samples(v) => {
            if v.len() != grid.q1.n {
                return Err(CeError::Precondition(format!(
                    "psi1 has {} samples for a {}-point axis",
                    v.len(),
                    grid.q1.n
                )));
            }
            check_unit_norm("psi1", axis_norm_sq_c(v, grid.q1.spacing()))?;
        }
    }
    match psi2 {
        Wavefunction1D::Gaussian(g) => {
            let vals: Vec<Complex64> = grid.q2.values().iter().map(|&u| g.eval(u)).collect();
            check_unit_norm("psi2", axis_norm_sq_c(&vals, grid.q2.spacing()))?;
        }
        Wavefunction1D::Samples(v) => {
            if v.len() != grid.q2.n {
                return Err(CeError::Precondition(format!(
                    "psi2 has {} samples for a {}-point axis",
                    v.len(),
                    grid.q2.n
                )));
            }
            check_unit_norm("psi2", axis_norm_sq_c(v, grid.q2.spacing()))?;
        }
    }
    match p0 {
        Density1D::Gaussian(g) => {
            let mass: f64 =
                stable_sum(&grid.x.values().iter().map(|&x| g.eval(x)).collect::<Vec<_>>())
                    * grid.x.spacing();
            check_unit_norm("P0", mass)?;
        }
        Density1D::Samples(v) => {
            if v.len() != grid.x.n {
                return Err(CeError::Precondition(format!(
                    "P0 has {} samples for a {}-point axis",
                    v.len(),
                    grid.x.n
                )));
            }
            if v.iter().any(|p| *p < 0.0) {
                return Err(CeError::Precondition("P0 has negative samples".into()));
            }
            check_unit_norm("P0", stable_sum(v) * grid.x.spacing())?;
        }
    }

    // Closed-form fast path: retain generators.
    if let (
        Wavefunction1D::Gaussian(g1),
        Wavefunction1D::Gaussian(g2),
        Density1D::Gaussian(gc),
        Action1D::Poly(sp),
    ) = (psi1, psi2, p0, s0)
    {
        let gens = Generators::Product(ProductGenerators {
            psi1: *g1,
            psi2: *g2,
            p0: *gc,
            s0: sp.clone(),
            hbar,
            pre: crate::analytic::AffineMap3::identity(),
        });
        return Ensemble::from_generators(*grid, gens, hbar, true);
    }

    // Sampled path: per-axis vectors, unwrapped phases on the support.
    let psi1_vals: Vec<Complex64> = match psi1 {
        Wavefunction1D::Gaussian(g) => grid.q1.values().iter().map(|&u| g.eval(u)).collect(),
        Wavefunction1D::Samples(v) => v.clone(),
    };
    let psi2_vals: Vec<Complex64> = match psi2 {
        Wavefunction1D::Gaussian(g) => grid.q2.values().iter().map(|&u| g.eval(u)).collect(),
        Wavefunction1D::Samples(v) => v.clone(),
    };
    let p0_vals: Vec<f64> = match p0 {
        Density1D::Gaussian(g) => grid.x.values().iter().map(|&x| g.eval(x)).collect(),
        Density1D::Samples(v) => v.clone(),
    };
    let s0_vals: Vec<f64> = match s0 {
        Action1D::Poly(p) => grid.x.values().iter().map(|&x| p.eval(x)).collect(),
        Action1D::Samples(v) => {
            if v.len() != grid.x.n {
                return Err(CeError::Precondition(format!(
                    "S0 has {} samples for a {}-point axis",
                    v.len(),
                    grid.x.n
                )));
            }
            v.clone()
        }
    };

    let unwrap_axis = |vals: &[Complex64]| -> Vec<f64> {
        let mut phases: Vec<f64> = vals.iter().map(|c| c.arg()).collect();
        let anchor = vals
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        unwrap_phase_line(&mut phases, anchor);
        phases
    };
    let ph1 = unwrap_axis(&psi1_vals);
    let ph2 = unwrap_axis(&psi2_vals);

    let shape = grid.shape();
    let p = Array3::from_shape_fn(shape, |(i, j, k)| {
        psi1_vals[i].norm_sqr() * psi2_vals[j].norm_sqr() * p0_vals[k]
    });
    let s = Array3::from_shape_fn(shape, |(i, j, k)| {
        hbar * (ph1[i] + ph2[j]) + s0_vals[k]
    });

    let mut e = Ensemble::from_arrays(*grid, p, s, hbar)?;
    e.set_product_flag(true);
    Ok(e)
}

fn edge_mass_c(v: &[Complex64], h: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (v[0].norm_sqr() + v[v.len() - 1].norm_sqr()) * h
}

fn edge_mass_r(v: &[f64], h: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    (v[0] + v[v.len() - 1]) * h
}

/// Classical marginal P(x) = ∫ dq1 dq2 P.
pub fn classical_marginal(e: &Ensemble) -> Marginal1D {
    let grid = e.grid();
    let da = grid.q1.spacing() * grid.q2.spacing();
    let values: Vec<f64> = (0..grid.x.n)
        .map(|k| {
            let plane = e.p().index_axis(NdAxis(2), k);
            let s: f64 = plane.iter().sum();
            s * da
        })
        .collect();
    Marginal1D {
        axis: grid.x,
        values,
    }
}

/// Conditional two-particle wavefunction at classical position `x_value`.
///
/// On the analytic path `x_value` is used exactly; otherwise it is snapped to
/// the nearest grid plane.
pub fn conditional_wavefunction(e: &Ensemble, x_value: f64) -> Result<TwoParticleWavefunction> {
    let marg = e.marginal_x();
    let threshold = EPS_COND * marg.max();

    let grid = e.grid();
    let psi: Array2<Complex64> = match e.generators() {
        Some(g) => {
            // marginal at the exact x for the threshold check
            let da = grid.q1.spacing() * grid.q2.spacing();
            let mut mass = 0.0;
            let mut slice = Array2::default((grid.q1.n, grid.q2.n));
            for i in 0..grid.q1.n {
                let q1 = grid.q1.value(i);
                for j in 0..grid.q2.n {
                    let q2 = grid.q2.value(j);
                    let c = g.fields([q1, q2, x_value]).chi;
                    mass += c.norm_sqr();
                    slice[(i, j)] = c;
                }
            }
            mass *= da;
            if mass <= threshold {
                return Err(CeError::ZeroProbabilityConditioning {
                    x: x_value,
                    p: mass,
                    threshold,
                });
            }
            slice
        }
        None => {
            let k = grid.x.nearest_index(x_value);
            if marg.values[k] <= threshold {
                return Err(CeError::ZeroProbabilityConditioning {
                    x: grid.x.value(k),
                    p: marg.values[k],
                    threshold,
                });
            }
            let chi = e.chi();
            chi.index_axis(NdAxis(2), k).to_owned()
        }
    };

    let mut wf = TwoParticleWavefunction {
        q1: grid.q1,
        q2: grid.q2,
        psi,
        hbar: e.hbar(),
    };
    wf.normalize();
    Ok(wf)
}

/// rho_{Q1Q2} as a weighted mixture of conditional wavefunctions over the
/// grid planes with nonnegligible marginal mass.
pub fn quantum_density_operator(e: &Ensemble) -> Result<PureStateMixture> {
    let grid = e.grid();
    let marg = e.marginal_x();
    let threshold = EPS_COND * marg.max();
    let dx = grid.x.spacing();

    let chi = e.chi();
    let mut components = Vec::new();
    for k in 0..grid.x.n {
        let mass = marg.values[k];
        if mass <= threshold {
            continue;
        }
        let mut wf = TwoParticleWavefunction {
            q1: grid.q1,
            q2: grid.q2,
            psi: chi.index_axis(NdAxis(2), k).to_owned(),
            hbar: e.hbar(),
        };
        wf.normalize();
        components.push((mass * dx, wf));
    }
    if components.is_empty() {
        return Err(CeError::Precondition(
            "no grid plane carries marginal mass above the conditioning threshold".into(),
        ));
    }
    let total = stable_sum_by(&components, |(w, _)| *w);
    for (w, _) in &mut components {
        *w /= total;
    }
    Ok(PureStateMixture { components })
}

/// Expectation <M1 ⊗ M2> over the mixture, with each 1-particle operator
/// applied along its own axis.
pub fn expectation_product(
    m: &PureStateMixture,
    m1: &crate::observables::QuantumOperatorSpec,
    m2: &crate::observables::QuantumOperatorSpec,
) -> Result<f64> {
    m1.check_hermitian()?;
    m2.check_hermitian()?;
    let mut acc = 0.0;
    let mut imag = 0.0;
    for (w, psi) in &m.components {
        let a1 = crate::observables::apply_1particle(m1, psi, 0)?;
        let tmp = TwoParticleWavefunction {
            q1: psi.q1,
            q2: psi.q2,
            psi: a1,
            hbar: psi.hbar,
        };
        let a12 = crate::observables::apply_1particle(m2, &tmp, 1)?;
        let inner: Complex64 = psi
            .psi
            .iter()
            .zip(a12.iter())
            .map(|(a, b)| a.conj() * b)
            .sum();
        let inner = inner * psi.cell_area();
        acc += w * inner.re;
        imag += w * inner.im;
    }
    if imag.abs() > 1e-8 {
        return Err(CeError::ImaginaryResidue {
            residue: imag.abs(),
            context: "expectation_product".into(),
        });
    }
    Ok(acc)
}

/// Bin axis for the momentum coordinate of the classical phase density:
/// `n_bins` equal bins with centers at `lower + (j + 1/2) Δk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinSpec {
    pub lower: f64,
    pub upper: f64,
    pub n_bins: usize,
}

impl BinSpec {
    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.n_bins as f64
    }

    pub fn center(&self, j: usize) -> f64 {
        self.lower + (j as f64 + 0.5) * self.width()
    }

    /// Symmetric range with an odd bin count, so k = 0 is a bin center.
    pub fn symmetric(half: f64, n_bins: usize) -> BinSpec {
        let n = if n_bins.is_multiple_of(2) { n_bins + 1 } else { n_bins };
        BinSpec {
            lower: -half,
            upper: half,
            n_bins: n,
        }
    }
}

/// Classical phase-space density rho_C(x, k) built by histogramming
/// dS/dx against the momentum bins, weighted by P.
#[derive(Debug, Clone)]
pub struct ClassicalPhaseDensity {
    pub x_axis: AxisSpec,
    pub k_bins: BinSpec,
    /// Indexed (x index, k bin); normalized so sum * Δx * Δk = 1.
    pub rho: Array2<f64>,
}

impl ClassicalPhaseDensity {
    pub fn total_mass(&self) -> f64 {
        self.rho.sum() * self.x_axis.spacing() * self.k_bins.width()
    }

    pub fn mean_momentum(&self) -> f64 {
        let dk = self.k_bins.width();
        let dx = self.x_axis.spacing();
        let mut acc = 0.0;
        for ((_, j), v) in self.rho.indexed_iter() {
            acc += self.k_bins.center(j) * v;
        }
        acc * dx * dk
    }
}

pub fn classical_phase_density(e: &Ensemble, k_bins: BinSpec) -> Result<ClassicalPhaseDensity> {
    let grid = e.grid();
    let ds_x = e.ds(Axis::X);
    let support = e.support();
    let dv = grid.cell_volume();
    let dk = k_bins.width();
    let dx = grid.x.spacing();

    let mut rho = Array2::<f64>::zeros((grid.x.n, k_bins.n_bins));
    let mut lost = 0.0;
    let mut total = 0.0;
    for ((i, j, k), pv) in e.p().indexed_iter() {
        let w = pv * support[(i, j, k)] * dv;
        if w == 0.0 {
            continue;
        }
        total += w;
        let kval = ds_x[(i, j, k)];
        let bin = ((kval - k_bins.lower) / dk).floor();
        if bin < 0.0 || bin >= k_bins.n_bins as f64 {
            lost += w;
            continue;
        }
        rho[(k, bin as usize)] += w;
    }
    if total <= 0.0 {
        return Err(CeError::Precondition("ensemble carries no support mass".into()));
    }
    if lost / total > 1e-3 {
        return Err(CeError::MomentumTruncation {
            lost: lost / total,
            limit: 1e-3,
        });
    }
    let captured = total - lost;
    rho.mapv_inplace(|v| v / (captured * dx * dk));
    Ok(ClassicalPhaseDensity {
        x_axis: grid.x,
        k_bins,
        rho,
    })
}

/// The hybrid wavefunction sqrt(P) e^{iS/hbar} as a standalone representation.
#[derive(Debug, Clone)]
pub struct HybridWavefunction {
    pub grid: Grid,
    pub psi: Array3<Complex64>,
    pub hbar: f64,
}

impl HybridWavefunction {
    pub fn from_ensemble(e: &Ensemble) -> HybridWavefunction {
        HybridWavefunction {
            grid: *e.grid(),
            psi: e.chi().as_ref().clone(),
            hbar: e.hbar(),
        }
    }

    pub fn norm_sq(&self) -> f64 {
        stable_sum_by(self.psi.as_slice().expect("contiguous"), |c| c.norm_sqr())
            * self.grid.cell_volume()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.norm_sq();
        if (n - 1.0).abs() > NORM_TOL {
            return Err(CeError::Invariant(format!(
                "|psi|² integrates to {n:.12e}"
            )));
        }
        Ok(())
    }

    pub fn l2_distance(&self, other: &HybridWavefunction) -> f64 {
        let s: f64 = self
            .psi
            .iter()
            .zip(other.psi.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        (s * self.grid.cell_volume()).sqrt()
    }

    /// Back to (P, S): P = |psi|² exactly; S = hbar · arg(psi), unwrapped
    /// along q1, then q2, then x, anchored at the point of maximal P.
    pub fn to_ensemble(&self) -> Result<Ensemble> {
        let p = self.psi.mapv(|c| c.norm_sqr());
        let (n1, n2, n3) = p.dim();

        let mut anchor = (0usize, 0usize, 0usize);
        let mut best = f64::MIN;
        for (idx, v) in p.indexed_iter() {
            if *v > best {
                best = *v;
                anchor = idx;
            }
        }
        let (i0, j0, k0) = anchor;

        let mut s = self.psi.mapv(|c| c.arg());
        // Axis q1 along the anchor line.
        {
            let mut line: Vec<f64> = (0..n1).map(|i| s[(i, j0, k0)]).collect();
            unwrap_phase_line(&mut line, i0);
            for (i, v) in line.into_iter().enumerate() {
                s[(i, j0, k0)] = v;
            }
        }
        // Axis q2 for every i in the k0 plane, anchored at j0.
        for i in 0..n1 {
            let mut line: Vec<f64> = (0..n2).map(|j| s[(i, j, k0)]).collect();
            unwrap_phase_line(&mut line, j0);
            for (j, v) in line.into_iter().enumerate() {
                s[(i, j, k0)] = v;
            }
        }
        // Axis x for every (i, j), anchored at k0.
        for i in 0..n1 {
            for j in 0..n2 {
                let mut line: Vec<f64> = (0..n3).map(|k| s[(i, j, k)]).collect();
                unwrap_phase_line(&mut line, k0);
                for (k, v) in line.into_iter().enumerate() {
                    s[(i, j, k)] = v;
                }
            }
        }
        s.mapv_inplace(|v| v * self.hbar);
        Ensemble::from_arrays(self.grid, p, s, self.hbar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, HamiltonianSpec, InteractionMode};
    use crate::observables::QuantumOperatorSpec;
    use crate::presets::StandardScenario;
    use approx::assert_relative_eq;
    use ndarray::Array2;

    fn sg() -> StandardScenario {
        StandardScenario {
            n: 64,
            ..Default::default()
        }
    }

    fn sg_hamiltonian() -> HamiltonianSpec {
        sg().hamiltonian()
    }

    #[test]
    fn product_ensemble_is_normalized() {
        let e = sg().initial(1.0).unwrap();
        assert_relative_eq!(e.norm(), 1.0, epsilon = 1e-8);
        e.validate().unwrap();
        assert!(e.is_product());
    }

    #[test]
    fn linear_s0_gives_uniform_action() {
        let e = sg().initial_with_s0(0.0, Poly1::new(vec![0.0, 2.0])).unwrap();
        let grid = e.grid();
        for ((_, _, k), s) in e.s().indexed_iter() {
            assert_relative_eq!(*s, 2.0 * grid.x.value(k), epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_phase_factor_enters_action() {
        let grid = StandardScenario::default().grid_for(0.0).unwrap();
        let psi1 = GaussianWavepacket {
            a_re: 1.0,
            a_im: 0.0,
            center: 0.0,
            momentum: 1.0,
        };
        let s0 = Poly1::new(vec![0.0, 0.5]);
        let e = make_product_ensemble(
            &Wavefunction1D::Gaussian(psi1),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(s0),
            &grid,
            1.0,
        )
        .unwrap();
        for ((i, _, k), s) in e.s().indexed_iter() {
            let expect = grid.q1.value(i) + 0.5 * grid.x.value(k);
            assert_relative_eq!(*s, expect, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn non_normalized_input_is_rejected_with_measured_norm() {
        let grid = StandardScenario::default().grid_for(0.0).unwrap();
        let bad: Vec<Complex64> = grid
            .q1
            .values()
            .iter()
            .map(|&u| GaussianWavepacket::unit().eval(u) * 1.001)
            .collect();
        let err = make_product_ensemble(
            &Wavefunction1D::Samples(bad),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(Poly1::zero()),
            &grid,
            1.0,
        )
        .unwrap_err();
        match err {
            CeError::NotNormalized { which, norm, .. } => {
                assert_eq!(which, "psi1");
                assert_relative_eq!(norm, 1.001, epsilon = 1e-6);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn tail_mass_violation_names_the_axis() {
        // q2 axis too narrow for the unit packet: erfc(2) ≈ 4.7e-3 of mass outside.
        let grid = Grid::new(
            AxisSpec::new(-8.0, 8.0, 64).unwrap(),
            AxisSpec::new(-2.0, 2.0, 64).unwrap(),
            AxisSpec::new(-8.0, 8.0, 64).unwrap(),
        )
        .unwrap();
        let err = make_product_ensemble(
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(Poly1::zero()),
            &grid,
            1.0,
        )
        .unwrap_err();
        match err {
            CeError::TailMass { axis, mass, .. } => {
                assert_eq!(axis, "q2");
                assert!(mass > 1e-6, "mass = {mass}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn marginal_of_product_matches_p0_pointwise() {
        let e = sg().initial(0.0).unwrap();
        let marg = classical_marginal(&e);
        let p0 = ClassicalGaussian::unit();
        for (k, v) in marg.values.iter().enumerate() {
            assert_relative_eq!(*v, p0.eval(marg.axis.value(k)), epsilon = 1e-10);
        }
        assert_relative_eq!(marg.integrate(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn marginal_invariant_under_one_sided_g2_zero_flow() {
        let scen = StandardScenario {
            g2: 0.0,
            n: 64,
            ..Default::default()
        };
        let e0 = scen.initial(1.0).unwrap();
        let h = HamiltonianSpec::HybridBilinear {
            g1: 1.0,
            g2: 0.0,
            mode: InteractionMode::Simultaneous,
        };
        let e1 = evolve(&e0, &h, 0.7).unwrap();
        let m0 = classical_marginal(&e0);
        let m1 = classical_marginal(&e1);
        for (a, b) in m0.values.iter().zip(m1.values.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-10);
        }
    }

    /// Independent oracle: brute-force quadrature of the evolved density built
    /// from the closed-form initial data and the hand-written substitution.
    #[test]
    fn evolved_marginal_matches_quadrature_oracle_and_convolution() {
        let scen = sg();
        let e0 = scen.initial(1.0).unwrap();
        let e1 = evolve(&e0, &sg_hamiltonian(), 1.0).unwrap();
        let marg = classical_marginal(&e1);
        let grid = e1.grid();

        let pi = std::f64::consts::PI;
        let p0_3d = |q1: f64, q2: f64, x: f64| -> f64 {
            pi.powf(-1.5) * (-q1 * q1 - q2 * q2 - x * x).exp()
        };

        for k in (0..grid.x.n).step_by(7) {
            let x = grid.x.value(k);
            // direct 2-D quadrature of P0(q1 - x + q2/2, q2, x - q2)
            let mut acc = 0.0;
            for i in 0..grid.q1.n {
                let q1 = grid.q1.value(i);
                for j in 0..grid.q2.n {
                    let q2 = grid.q2.value(j);
                    acc += p0_3d(q1 - x + 0.5 * q2, q2, x - q2);
                }
            }
            acc *= grid.q1.spacing() * grid.q2.spacing();
            assert_relative_eq!(marg.values[k], acc, epsilon = 1e-6);

            // closed form: convolution of two variance-1/2 Gaussians
            let closed = (2.0 * pi).powf(-0.5) * (-0.5 * x * x).exp();
            assert_relative_eq!(marg.values[k], closed, epsilon = 1e-6);
        }
    }

    #[test]
    fn conditioning_product_factorizes() {
        let e = sg()
            .initial_with_s0(0.0, Poly1::new(vec![0.3, 1.1]))
            .unwrap();
        let wf = conditional_wavefunction(&e, 0.37).unwrap();
        assert_relative_eq!(wf.norm_sq(), 1.0, epsilon = 1e-6);

        let mut reference = TwoParticleWavefunction {
            q1: wf.q1,
            q2: wf.q2,
            psi: Array2::from_shape_fn((wf.q1.n, wf.q2.n), |(i, j)| {
                GaussianWavepacket::unit().eval(wf.q1.value(i))
                    * GaussianWavepacket::unit().eval(wf.q2.value(j))
            }),
            hbar: 1.0,
        };
        reference.normalize();
        let overlap = wf.inner(&reference).norm();
        assert_relative_eq!(overlap, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn conditioning_evolved_matches_closed_form() {
        let scen = sg();
        let e0 = scen.initial(1.0).unwrap();
        let e1 = evolve(&e0, &sg_hamiltonian(), 1.0).unwrap();
        let wf = conditional_wavefunction(&e1, 0.0).unwrap();

        // psi(q1, q2 | 0) ∝ exp(-(q1 + q2/2)²/2 - q2²)
        let mut reference = TwoParticleWavefunction {
            q1: wf.q1,
            q2: wf.q2,
            psi: Array2::from_shape_fn((wf.q1.n, wf.q2.n), |(i, j)| {
                let q1 = wf.q1.value(i);
                let q2 = wf.q2.value(j);
                Complex64::new((-0.5 * (q1 + 0.5 * q2).powi(2) - q2 * q2).exp(), 0.0)
            }),
            hbar: 1.0,
        };
        reference.normalize();
        assert!(wf.l2_distance(&reference) < 1e-8, "distance = {}", wf.l2_distance(&reference));
    }

    #[test]
    fn conditioning_outside_support_is_rejected() {
        let e = sg().initial(0.0).unwrap();
        // 10 sigma of the classical marginal
        let err = conditional_wavefunction(&e, 10.0 * ClassicalGaussian::unit().sigma() * 1.0)
            .unwrap_err();
        match err {
            CeError::ZeroProbabilityConditioning { p, threshold, .. } => {
                assert!(p <= threshold);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn density_operator_of_product_is_pure() {
        let e = sg().initial(0.0).unwrap();
        let mix = quantum_density_operator(&e).unwrap();
        mix.validate().unwrap();
        let total: f64 = mix.components.iter().map(|(w, _)| w).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);

        let mut reference = TwoParticleWavefunction {
            q1: e.grid().q1,
            q2: e.grid().q2,
            psi: Array2::from_shape_fn((e.grid().q1.n, e.grid().q2.n), |(i, j)| {
                GaussianWavepacket::unit().eval(e.grid().q1.value(i))
                    * GaussianWavepacket::unit().eval(e.grid().q2.value(j))
            }),
            hbar: 1.0,
        };
        reference.normalize();
        for (_, psi) in &mix.components {
            assert_relative_eq!(psi.inner(&reference).norm(), 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn density_operator_weights_match_marginal_masses() {
        let scen = sg();
        let e = evolve(&scen.initial(1.0).unwrap(), &sg_hamiltonian(), 1.0).unwrap();
        let mix = quantum_density_operator(&e).unwrap();
        let marg = e.marginal_x();
        let dx = e.grid().x.spacing();
        let threshold = EPS_COND * marg.max();
        let total: f64 = marg
            .values
            .iter()
            .filter(|m| **m > threshold)
            .map(|m| m * dx)
            .sum();
        let mut idx = 0;
        for (k, m) in marg.values.iter().enumerate() {
            if *m <= threshold {
                continue;
            }
            let w = mix.components[idx].0;
            assert_relative_eq!(w, m * dx / total, epsilon = 1e-8);
            idx += 1;
            let _ = k;
        }
    }

    #[test]
    fn expectation_identity_is_one() {
        let e = sg().initial(0.0).unwrap();
        let mix = quantum_density_operator(&e).unwrap();
        let one = QuantumOperatorSpec::identity();
        let v = expectation_product(&mix, &one, &one).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn expectation_q1q2_zero_initially_and_quarter_after_evolution() {
        let scen = sg();
        let e0 = scen.initial(1.0).unwrap();
        let q1 = QuantumOperatorSpec::position(Axis::Q1);
        let q2 = QuantumOperatorSpec::position(Axis::Q2);

        let mix0 = quantum_density_operator(&e0).unwrap();
        let v0 = expectation_product(&mix0, &q1, &q2).unwrap();
        assert!(v0.abs() < 1e-10, "initial <q1 q2> = {v0}");

        // After the simultaneous flow at g1 = g2 = t = 1:
        // q1(t) = q1 + t x + (g1 g2 t²/2) q2, so <q1 q2> = <q2²>/2 = 1/4.
        let e1 = evolve(&e0, &sg_hamiltonian(), 1.0).unwrap();
        let mix1 = quantum_density_operator(&e1).unwrap();
        let v1 = expectation_product(&mix1, &q1, &q2).unwrap();
        assert_relative_eq!(v1, 0.25, epsilon = 1e-6);

        // independent 3-D quadrature oracle over the density arrays
        let grid = e1.grid();
        let mut acc = 0.0;
        for ((i, j, _), pv) in e1.p().indexed_iter() {
            acc += pv * grid.q1.value(i) * grid.q2.value(j);
        }
        acc *= grid.cell_volume();
        assert_relative_eq!(v1, acc, epsilon = 1e-6);
    }

    #[test]
    fn expectation_rejects_non_hermitian_matrix() {
        let e = sg().initial(0.0).unwrap();
        let mix = quantum_density_operator(&e).unwrap();
        let n = e.grid().q1.n;
        let mut mat = Array2::<Complex64>::zeros((n, n));
        mat[(0, 1)] = Complex64::new(1.0, 0.0);
        let bad = QuantumOperatorSpec::ExplicitMatrix {
            axis: Axis::Q1,
            mat,
        };
        let err = expectation_product(&mix, &bad, &QuantumOperatorSpec::identity()).unwrap_err();
        match err {
            CeError::NotHermitian { norm } => assert!(norm > 0.0),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn one_component_mixture_matches_direct_sandwich() {
        let scen = sg();
        let e = evolve(&scen.initial(1.0).unwrap(), &sg_hamiltonian(), 1.0).unwrap();
        let wf = conditional_wavefunction(&e, 0.2).unwrap();
        let mix = PureStateMixture {
            components: vec![(1.0, wf.clone())],
        };
        let q1 = QuantumOperatorSpec::position(Axis::Q1);
        let q2 = QuantumOperatorSpec::position(Axis::Q2);
        let v = expectation_product(&mix, &q1, &q2).unwrap();

        // direct <psi| q1 q2 |psi> with raw loops
        let mut acc = 0.0;
        for ((i, j), c) in wf.psi.indexed_iter() {
            acc += c.norm_sqr() * wf.q1.value(i) * wf.q2.value(j);
        }
        acc *= wf.cell_area();
        assert_relative_eq!(v, acc, epsilon = 1e-8);
    }

    #[test]
    fn phase_density_uniform_gradient_lands_in_one_bin() {
        let e = sg().initial_with_s0(0.0, Poly1::new(vec![0.0, 2.0])).unwrap();
        let bins = BinSpec::symmetric(8.0, 161);
        let rho = classical_phase_density(&e, bins).unwrap();
        assert_relative_eq!(rho.total_mass(), 1.0, epsilon = 1e-6);

        let dk = bins.width();
        let expected_bin = ((2.0 - bins.lower) / dk).floor() as usize;
        for ((_, j), v) in rho.rho.indexed_iter() {
            if j != expected_bin {
                assert_eq!(*v, 0.0);
            }
        }
        assert_relative_eq!(rho.mean_momentum(), bins.center(expected_bin), epsilon = 1e-12);
    }

    #[test]
    fn phase_density_of_product_sg_sits_at_zero_momentum() {
        let e = sg().initial(0.0).unwrap();
        let bins = BinSpec::symmetric(4.0, 81);
        let rho = classical_phase_density(&e, bins).unwrap();
        // all mass in the central bin; x-profile proportional to P0
        let center_bin = bins.n_bins / 2;
        let p0 = ClassicalGaussian::unit();
        for ((k, j), v) in rho.rho.indexed_iter() {
            if j == center_bin {
                assert_relative_eq!(
                    *v * bins.width(),
                    p0.eval(rho.x_axis.value(k)),
                    epsilon = 1e-8
                );
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn phase_density_mean_momentum_matches_classical_functional() {
        use crate::observables::{value, ObservableFunctional, PhasePolynomial};
        // cubic S0 gives a smoothly spread momentum field: dS/dx = 0.6 x²
        let scen = sg();
        let e0 = scen
            .initial_with_s0(1.0, Poly1::new(vec![0.0, 0.0, 0.0, 0.2]))
            .unwrap();
        let e1 = evolve(&e0, &sg_hamiltonian(), 1.0).unwrap();

        let bins = BinSpec {
            lower: -0.5,
            upper: 25.0,
            n_bins: 1021,
        };
        let rho = classical_phase_density(&e1, bins).unwrap();
        let ck = value(&ObservableFunctional::classical(PhasePolynomial::k()), &e1).unwrap();
        assert_relative_eq!(rho.mean_momentum(), ck, epsilon = 1e-3);
        // analytic value: E[0.6 w²] = 0.6/2 = 0.3 over the unit classical Gaussian
        assert_relative_eq!(ck, 0.3, epsilon = 1e-6);
    }

    #[test]
    fn phase_density_reports_momentum_truncation() {
        let e = sg().initial_with_s0(0.0, Poly1::new(vec![0.0, 2.0])).unwrap();
        let bins = BinSpec {
            lower: -0.1,
            upper: 0.1,
            n_bins: 11,
        };
        match classical_phase_density(&e, bins).unwrap_err() {
            CeError::MomentumTruncation { lost, .. } => assert!(lost > 0.99),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn hybrid_round_trip_preserves_p_exactly_and_s_mod_2pi() {
        let grid = StandardScenario::default().grid_for(0.0).unwrap();
        let psi1 = GaussianWavepacket {
            a_re: 1.0,
            a_im: 0.0,
            center: 0.0,
            momentum: 1.3,
        };
        let e = make_product_ensemble(
            &Wavefunction1D::Gaussian(psi1),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(Poly1::new(vec![0.0, 1.7])),
            &grid,
            1.0,
        )
        .unwrap();

        let w = HybridWavefunction::from_ensemble(&e);
        w.validate().unwrap();
        let back = w.to_ensemble().unwrap();

        let support = e.support();
        let tau = 2.0 * std::f64::consts::PI;
        let mut anchor_offset: Option<f64> = None;
        for ((idx, p_orig), p_back) in e.p().indexed_iter().zip(back.p().iter()) {
            assert_relative_eq!(*p_orig, *p_back, epsilon = 1e-13, max_relative = 1e-12);
            if support[idx] == 0.0 {
                continue;
            }
            let d = back.s()[idx] - e.s()[idx];
            let offset = *anchor_offset.get_or_insert(d);
            // same 2π-branch offset everywhere on the support
            assert!((d - offset).abs() < 1e-9, "branch jump at {idx:?}: {d} vs {offset}");
            let frac = (offset / tau) - (offset / tau).round();
            assert!(frac.abs() < 1e-9, "offset {offset} not a 2π multiple");
        }
    }

    #[test]
    fn invariant_violations_are_caught() {
        let e = sg().initial(0.0).unwrap();
        let mut p = e.p().clone();
        p[(0, 0, 0)] = -1.0;
        assert!(Ensemble::from_arrays(*e.grid(), p, e.s().clone(), 1.0).is_err());

        let p2 = e.p().mapv(|v| v * 1.5);
        assert!(Ensemble::from_arrays(*e.grid(), p2, e.s().clone(), 1.0).is_err());
    }
}

#[cfg(test)]
mod cross_module_tests {
    use super::*;
    use crate::dynamics::evolve;
    use crate::observables::{value, ObservableFunctional, PhasePolynomial};
    use crate::presets::StandardScenario;
    use approx::assert_relative_eq;

    #[test]
    fn classical_value_matches_phase_space_average() {
        // C_f against ∫ f ρ_C dx dk for a momentum-spread ensemble
        let scen = StandardScenario {
            n: 64,
            ..Default::default()
        };
        let e0 = scen
            .initial_with_s0(1.0, Poly1::new(vec![0.0, 0.0, 0.0, 0.2]))
            .unwrap();
        let e = evolve(&e0, &scen.hamiltonian(), 1.0).unwrap();

        let bins = BinSpec {
            lower: -0.5,
            upper: 25.0,
            n_bins: 2001,
        };
        let rho = classical_phase_density(&e, bins).unwrap();
        for f in [PhasePolynomial::k(), PhasePolynomial::xk(), PhasePolynomial::k2()] {
            let functional = value(&ObservableFunctional::classical(f.clone()), &e).unwrap();
            let mut from_rho = 0.0;
            for ((i, j), v) in rho.rho.indexed_iter() {
                from_rho += f.eval(rho.x_axis.value(i), rho.k_bins.center(j)) * v;
            }
            from_rho *= rho.x_axis.spacing() * rho.k_bins.width();
            assert_relative_eq!(functional, from_rho, epsilon = 1e-2);
        }
    }

    #[test]
    fn evolved_mixture_carries_classical_quantum_correlation() {
        // components conditioned at different mediator values differ after the
        // interaction, while each stays pure by construction
        let scen = StandardScenario {
            n: 48,
            ..Default::default()
        };
        let e = evolve(&scen.initial(1.0).unwrap(), &scen.hamiltonian(), 1.0).unwrap();
        let mix = quantum_density_operator(&e).unwrap();
        mix.validate().unwrap();
        let mid = mix.components.len() / 2;
        let quarter = mix.components.len() / 4;
        let overlap = mix.components[mid].1.inner(&mix.components[quarter].1).norm();
        assert!(
            overlap < 1.0 - 1e-3,
            "components at different x should differ, overlap = {overlap}"
        );
    }

    #[test]
    fn non_finite_action_on_support_is_rejected() {
        let e = StandardScenario {
            n: 48,
            ..Default::default()
        }
        .initial(0.0)
        .unwrap();
        let mut s = e.s().clone();
        // poison S at the density peak
        let mut peak = (0, 0, 0);
        let mut best = f64::MIN;
        for (idx, v) in e.p().indexed_iter() {
            if *v > best {
                best = *v;
                peak = idx;
            }
        }
        s[peak] = f64::NAN;
        let err = Ensemble::from_arrays(*e.grid(), e.p().clone(), s, 1.0).unwrap_err();
        assert!(matches!(err, CeError::Invariant(_)));
    }
}
