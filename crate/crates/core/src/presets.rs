//! Canonical scenario constructors shared by the CLI, the acceptance suite,
//! and the tests.

use crate::analytic::{ClassicalGaussian, CorrelatedGaussian, GaussianWavepacket, Generators, Poly1};
use crate::dynamics::{HamiltonianSpec, InteractionMode};
use crate::ensemble::{make_product_ensemble, Action1D, Density1D, Ensemble, Wavefunction1D};
use crate::error::Result;
use crate::grid::{AxisSpec, Grid};

/// Number of density standard deviations covered on each side by default.
pub const DEFAULT_SIGMAS: f64 = 8.0;

/// Cap on the per-axis point count the auto-sizing may request.
pub const MAX_AXIS_POINTS: usize = 384;

/// Grid sized for the standard Gaussian initial data evolved up to `t` under
/// couplings (g1, g2): initial half-widths of 8 sigma per factor, expanded by
/// the forward-flow displacement bounds. `n` is the per-axis baseline; axes
/// stretched by the flow gain points so the spacing never exceeds 0.8 of the
/// narrowest factor width (midpoint quadrature stays well below the 1e-8
/// normalization tolerance).
pub fn sized_grid(
    psi_sigma: f64,
    x_sigma: f64,
    g1: f64,
    g2: f64,
    mode: InteractionMode,
    t: f64,
    n: usize,
) -> Result<Grid> {
    let bq = DEFAULT_SIGMAS * psi_sigma;
    let bx = DEFAULT_SIGMAS * x_sigma;
    let (a1, a2) = (g1.abs() * t.abs(), g2.abs() * t.abs());
    let shear = match mode {
        InteractionMode::Simultaneous => 0.5 * a1 * a2,
        InteractionMode::Sequential => a1 * a2,
    };
    let x_half = bx + a2 * bq;
    let q1_half = bq + a1 * x_half + shear * bq;
    let margin = 1.05;
    let max_spacing = 0.8 * psi_sigma.min(x_sigma);
    let points = |half: f64| -> usize {
        let needed = (2.0 * margin * half / max_spacing).ceil() as usize + 1;
        needed.max(n).min(MAX_AXIS_POINTS)
    };
    Grid::new(
        AxisSpec::new(-margin * q1_half, margin * q1_half, points(q1_half))?,
        AxisSpec::new(-margin * bq, margin * bq, points(bq))?,
        AxisSpec::new(-margin * x_half, margin * x_half, points(x_half))?,
    )
}

/// The standard scenario used throughout the tests: unit Gaussians for both
/// quantum particles, a unit Gaussian classical density, S0 = 0, hbar = 1,
/// couplings g1 = g2 = 1, simultaneous interaction.
#[derive(Debug, Clone, Copy)]
pub struct StandardScenario {
    pub g1: f64,
    pub g2: f64,
    pub mode: InteractionMode,
    pub n: usize,
}

impl Default for StandardScenario {
    fn default() -> Self {
        StandardScenario {
            g1: 1.0,
            g2: 1.0,
            mode: InteractionMode::Simultaneous,
            n: 96,
        }
    }
}

impl StandardScenario {
    /// sigma of |psi|² for the unit packets.
    pub fn psi_sigma() -> f64 {
        0.5_f64.sqrt()
    }

    pub fn grid_for(&self, t_max: f64) -> Result<Grid> {
        sized_grid(
            Self::psi_sigma(),
            ClassicalGaussian::unit().sigma(),
            self.g1,
            self.g2,
            self.mode,
            t_max,
            self.n,
        )
    }

    pub fn hamiltonian(&self) -> HamiltonianSpec {
        HamiltonianSpec::HybridBilinear {
            g1: self.g1,
            g2: self.g2,
            mode: self.mode,
        }
    }

    /// The initial product ensemble on a grid sized for evolution up to
    /// `t_max`.
    pub fn initial(&self, t_max: f64) -> Result<Ensemble> {
        let grid = self.grid_for(t_max)?;
        make_product_ensemble(
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(Poly1::zero()),
            &grid,
            1.0,
        )
    }

    /// Initial data with a custom classical action polynomial.
    pub fn initial_with_s0(&self, t_max: f64, s0: Poly1) -> Result<Ensemble> {
        let grid = self.grid_for(t_max)?;
        make_product_ensemble(
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
            &Density1D::Gaussian(ClassicalGaussian::unit()),
            &Action1D::Poly(s0),
            &grid,
            1.0,
        )
    }
}

/// Correlated Gaussian ensemble with a q1–x cross term in P (covariance knob
/// `gamma`) and an S cross term `s_cross * q1 * x`; used to exhibit nonzero
/// classical-quantum brackets.
pub fn correlated_ensemble(gamma: f64, s_cross: f64, n: usize) -> Result<Ensemble> {
    assert!(gamma.abs() < 1.0, "correlation parameter must satisfy |gamma| < 1");
    let quad = [
        [1.0, 0.0, gamma],
        [0.0, 1.0, 0.0],
        [gamma, 0.0, 1.0],
    ];
    let gens = Generators::Correlated(CorrelatedGaussian {
        quad,
        mean: [0.0; 3],
        s_terms: vec![(s_cross, [1, 0, 1])],
        hbar: 1.0,
        pre: crate::analytic::AffineMap3::identity(),
    });
    // Marginal standard deviation of the correlated pair is
    // 1/sqrt(1 - gamma²); size the box accordingly.
    let sigma = (1.0 / (1.0 - gamma * gamma)).sqrt();
    let half = DEFAULT_SIGMAS * sigma;
    let grid = Grid::symmetric(half, n)?;
    Ensemble::from_generators(grid, gens, 1.0, false)
}
