//! Scenario configuration: a strict TOML schema describing initial data, the
//! interaction, time/measurement parameters, and tolerance overrides. See
//! docs/config-schema.md.

use serde::{Deserialize, Serialize};

use crate::analytic::{ClassicalGaussian, GaussianWavepacket};
use crate::conditioning::ProductInitialData;
use crate::dynamics::{HamiltonianSpec, InteractionMode};
use crate::ensemble::{Action1D, Density1D, Ensemble, Wavefunction1D};
use crate::error::{CeError, Result};
use crate::expr::parse_action_poly;
use crate::grid::Grid;
use crate::presets::sized_grid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub hamiltonian: HamiltonianConfig,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub measure: MeasureConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

/// Extra observables, as expression strings, folded into the bracket reports
/// (all unordered pairs within each list).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservablesConfig {
    /// Phase-space functions f(x, k), e.g. "x*k + 0.5*k^2".
    #[serde(default)]
    pub f: Vec<String>,
    /// Quantum operators, e.g. "q1*p1_sym".
    #[serde(default)]
    pub m: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Per-axis baseline point count; axes stretched by the flow gain points.
    pub n: usize,
    /// Explicit grid override (skips auto-sizing entirely).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<Grid>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: 96,
            explicit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PacketConfig {
    /// Real part of the width parameter a in exp(-a (u-center)²/2).
    #[serde(default = "one")]
    pub a_re: f64,
    /// Imaginary part (chirp).
    #[serde(default)]
    pub a_im: f64,
    #[serde(default)]
    pub center: f64,
    #[serde(default)]
    pub momentum: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PacketConfig {
    fn default() -> Self {
        PacketConfig {
            a_re: 1.0,
            a_im: 0.0,
            center: 0.0,
            momentum: 0.0,
        }
    }
}

impl PacketConfig {
    pub fn packet(&self) -> GaussianWavepacket {
        GaussianWavepacket {
            a_re: self.a_re,
            a_im: self.a_im,
            center: self.center,
            momentum: self.momentum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalConfig {
    /// Exponent coefficient c in P0 ∝ exp(-c (x-center)²).
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub center: f64,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        ClassicalConfig { c: 1.0, center: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default)]
    pub psi1: PacketConfig,
    #[serde(default)]
    pub psi2: PacketConfig,
    #[serde(default)]
    pub classical: ClassicalConfig,
    /// Classical action polynomial in x, e.g. "0.5*x^2".
    #[serde(default = "zero_expr")]
    pub s0: String,
    #[serde(default = "one")]
    pub hbar: f64,
}

fn zero_expr() -> String {
    "0".into()
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            psi1: PacketConfig::default(),
            psi2: PacketConfig::default(),
            classical: ClassicalConfig::default(),
            s0: zero_expr(),
            hbar: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianConfig {
    #[serde(rename = "type")]
    pub kind: HamiltonianKind,
    pub g1: f64,
    pub g2: f64,
    #[serde(default = "default_mode")]
    pub mode: InteractionMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HamiltonianKind {
    HybridBilinear,
    ClassicalAnalog,
}

fn default_mode() -> InteractionMode {
    InteractionMode::Simultaneous
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t: f64,
    /// Sample times for locality/observable tracking.
    #[serde(default)]
    pub samples: Vec<f64>,
    /// Split-step count.
    #[serde(default = "default_steps")]
    pub n_steps: usize,
}

fn default_steps() -> usize {
    64
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            t: 1.0,
            samples: vec![],
            n_steps: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    #[serde(default = "default_a")]
    pub a_values: Vec<f64>,
    #[serde(default = "default_t")]
    pub t_values: Vec<f64>,
}

fn default_a() -> Vec<f64> {
    vec![0.0]
}

fn default_t() -> Vec<f64> {
    vec![1.0]
}

impl Default for MeasureConfig {
    fn default() -> Self {
        MeasureConfig {
            a_values: default_a(),
            t_values: default_t(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: String,
}

fn default_dir() -> String {
    "out".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: default_dir() }
    }
}

/// Numeric tolerances, centralized; the defaults are the per-module values
/// used throughout the library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Schmidt-vs-Gaussian entropy agreement.
    pub entropy_agreement: f64,
    /// L2 distance between split-step and the exact flow at the configured
    /// step count.
    pub split_step_l2: f64,
    /// Bracket-isomorphism residual at the default spacing.
    pub bracket_isomorphism: f64,
    /// Canonical bracket deviation from 1.
    pub canonical_bracket: f64,
    /// Remote-observable drift on the analytic path.
    pub remote_drift: f64,
    /// Direct one-sided brackets.
    pub direct_bracket: f64,
    /// Strong-separability corpus brackets.
    pub strong_separability: f64,
    /// Rate-law bracket-vs-finite-difference error.
    pub rate_law: f64,
    /// Classical-analog vs hybrid array deviation.
    pub classical_analog: f64,
    /// Qubit-protocol matrix deviations.
    pub qubit_matrix: f64,
    /// Negativity deviations.
    pub negativity: f64,
    /// Gravity-demo flag threshold.
    pub demo_deviation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            entropy_agreement: 1e-4,
            split_step_l2: 1e-3,
            bracket_isomorphism: 1e-3,
            canonical_bracket: 1e-4,
            remote_drift: 1e-8,
            direct_bracket: 1e-6,
            strong_separability: 1e-3,
            rate_law: 1e-3,
            classical_analog: 1e-12,
            qubit_matrix: 1e-12,
            negativity: 1e-10,
            demo_deviation: 1e-6,
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| CeError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<ScenarioConfig> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Serialized effective config; reparses to an identical scenario.
    pub fn emit(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CeError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| -> Result<()> {
            if !v.is_finite() {
                return Err(CeError::Config(format!("{what} = {v} is not finite")));
            }
            Ok(())
        };
        if self.name.is_empty() {
            return Err(CeError::Config("scenario name must not be empty".into()));
        }
        for (v, what) in [
            (self.initial.psi1.a_re, "initial.psi1.a_re"),
            (self.initial.psi2.a_re, "initial.psi2.a_re"),
            (self.initial.classical.c, "initial.classical.c"),
            (self.hamiltonian.g1, "hamiltonian.g1"),
            (self.hamiltonian.g2, "hamiltonian.g2"),
            (self.time.t, "time.t"),
            (self.initial.hbar, "initial.hbar"),
        ] {
            finite(v, what)?;
        }
        if self.initial.psi1.a_re <= 0.0
            || self.initial.psi2.a_re <= 0.0
            || self.initial.classical.c <= 0.0
        {
            return Err(CeError::Config("width parameters must be positive".into()));
        }
        if self.initial.hbar <= 0.0 {
            return Err(CeError::Config("hbar must be positive".into()));
        }
        if self.grid.n < 8 {
            return Err(CeError::Config(format!(
                "grid.n = {} below the minimum of 8",
                self.grid.n
            )));
        }
        parse_action_poly(&self.initial.s0)?;
        for expr in &self.observables.f {
            crate::expr::parse_phase_polynomial(expr)?;
        }
        for expr in &self.observables.m {
            crate::expr::parse_operator(expr)?;
        }
        Ok(())
    }

    /// The largest time the grid must accommodate.
    pub fn horizon(&self) -> f64 {
        let mut t = self.time.t.abs();
        for s in &self.time.samples {
            t = t.max(s.abs());
        }
        for s in &self.measure.t_values {
            t = t.max(s.abs());
        }
        t
    }

    pub fn build_grid(&self) -> Result<Grid> {
        if let Some(g) = self.grid.explicit {
            g.q1.validate("q1")?;
            g.q2.validate("q2")?;
            g.x.validate("x")?;
            return Ok(g);
        }
        let psi_sigma = (0.5 / self.initial.psi1.a_re)
            .sqrt()
            .max((0.5 / self.initial.psi2.a_re).sqrt());
        let x_sigma = ClassicalGaussian {
            c: self.initial.classical.c,
            center: self.initial.classical.center,
        }
        .sigma();
        sized_grid(
            psi_sigma,
            x_sigma,
            self.hamiltonian.g1,
            self.hamiltonian.g2,
            self.hamiltonian.mode,
            self.horizon(),
            self.grid.n,
        )
    }

    pub fn initial_data(&self) -> Result<ProductInitialData> {
        Ok(ProductInitialData {
            psi1: Wavefunction1D::Gaussian(self.initial.psi1.packet()),
            psi2: Wavefunction1D::Gaussian(self.initial.psi2.packet()),
            p0: Density1D::Gaussian(ClassicalGaussian {
                c: self.initial.classical.c,
                center: self.initial.classical.center,
            }),
            s0: Action1D::Poly(parse_action_poly(&self.initial.s0)?),
            grid: self.build_grid()?,
            hbar: self.initial.hbar,
        })
    }

    pub fn build_ensemble(&self) -> Result<Ensemble> {
        self.initial_data()?.ensemble()
    }

    pub fn hamiltonian_spec(&self) -> HamiltonianSpec {
        match self.hamiltonian.kind {
            HamiltonianKind::HybridBilinear => HamiltonianSpec::HybridBilinear {
                g1: self.hamiltonian.g1,
                g2: self.hamiltonian.g2,
                mode: self.hamiltonian.mode,
            },
            HamiltonianKind::ClassicalAnalog => HamiltonianSpec::ClassicalAnalog {
                g1: self.hamiltonian.g1,
                g2: self.hamiltonian.g2,
                mode: self.hamiltonian.mode,
            },
        }
    }

    /// The shipped standard scenario.
    pub fn standard() -> ScenarioConfig {
        ScenarioConfig {
            name: "standard".into(),
            seed: 0xCE,
            grid: GridConfig::default(),
            initial: InitialConfig::default(),
            hamiltonian: HamiltonianConfig {
                kind: HamiltonianKind::HybridBilinear,
                g1: 1.0,
                g2: 1.0,
                mode: InteractionMode::Simultaneous,
            },
            time: TimeConfig {
                t: 1.0,
                samples: vec![0.5, 1.0, 2.0],
                n_steps: 64,
            },
            measure: MeasureConfig::default(),
            output: OutputConfig::default(),
            observables: ObservablesConfig::default(),
            tolerances: Tolerances::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_config_round_trips_exactly() {
        let cfg = ScenarioConfig::standard();
        let text = cfg.emit().unwrap();
        let back = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(cfg, back);
        // and the re-emission is byte-identical
        assert_eq!(text, back.emit().unwrap());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"
name = "bad"
surprise = 1

[initial]

[hamiltonian]
type = "hybrid-bilinear"
g1 = 1.0
g2 = 1.0
"#;
        let err = ScenarioConfig::parse(text).unwrap_err();
        assert!(matches!(err, CeError::Config(_)), "{err}");
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let text = r#"
name = "minimal"

[initial]

[hamiltonian]
type = "hybrid-bilinear"
g1 = 1.0
g2 = 0.5
mode = "sequential"
"#;
        let cfg = ScenarioConfig::parse(text).unwrap();
        assert_eq!(cfg.grid.n, 96);
        assert_eq!(cfg.time.n_steps, 64);
        assert_eq!(cfg.hamiltonian.mode, InteractionMode::Sequential);
        cfg.build_ensemble().unwrap();
    }

    #[test]
    fn non_finite_and_invalid_values_are_rejected() {
        let mut cfg = ScenarioConfig::standard();
        cfg.hamiltonian.g1 = f64::NAN;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::standard();
        cfg.initial.psi1.a_re = -1.0;
        assert!(cfg.validate().is_err());

        let mut cfg = ScenarioConfig::standard();
        cfg.initial.s0 = "x*q1".into();
        assert!(cfg.validate().is_err());
    }
}
