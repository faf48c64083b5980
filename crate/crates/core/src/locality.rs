//! Locality checks: invariance of remote observables under one-sided
//! interactions, strong separability of classical-quantum brackets for
//! product initial data, and the correlated counterexample search.

use serde::Serialize;

use crate::dynamics::{evolve, hamiltonian_functional, HamiltonianSpec, InteractionMode};
use crate::ensemble::Ensemble;
use crate::error::{CeError, Result};
use crate::grid::Axis;
use crate::observables::{
    poisson_bracket, value, ObservableFunctional, PhasePolynomial, QuantumOperatorSpec,
};

/// Which quantum particle the one-sided interaction couples to the mediator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Q1Side,
    Q2Side,
}

impl Side {
    pub fn coupled_axis(self) -> Axis {
        match self {
            Side::Q1Side => Axis::Q1,
            Side::Q2Side => Axis::Q2,
        }
    }

    pub fn remote_axis(self) -> Axis {
        match self {
            Side::Q1Side => Axis::Q2,
            Side::Q2Side => Axis::Q1,
        }
    }

    pub fn hamiltonian(self, g: f64) -> HamiltonianSpec {
        match self {
            Side::Q1Side => HamiltonianSpec::HybridBilinear {
                g1: g,
                g2: 0.0,
                mode: InteractionMode::Simultaneous,
            },
            Side::Q2Side => HamiltonianSpec::HybridBilinear {
                g1: 0.0,
                g2: g,
                mode: InteractionMode::Simultaneous,
            },
        }
    }
}

pub const ANALYTIC_DRIFT_TOL: f64 = 1e-8;
pub const DIRECT_BRACKET_TOL: f64 = 1e-6;
pub const GRID_BRACKET_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct LocalityReport {
    pub observable: String,
    /// (t, value) samples along the flow, or (t, bracket) for bracket checks.
    pub values: Vec<(f64, f64)>,
    pub max_drift: f64,
    /// Direct bracket with the generating Hamiltonian at t = 0 when relevant.
    pub direct_bracket: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Expectation of one observable sampled along the flow; no remoteness guard
/// (used both by the invariance check and by planted same-side controls).
pub fn observable_drift(
    e0: &Ensemble,
    h: &HamiltonianSpec,
    t_samples: &[f64],
    m: &QuantumOperatorSpec,
    tolerance: f64,
) -> Result<LocalityReport> {
    let obs = ObservableFunctional::quantum(m.clone());
    let v0 = value(&obs, e0)?;
    let mut values = vec![(0.0, v0)];
    let mut max_drift = 0.0_f64;
    for &t in t_samples {
        let et = evolve(e0, h, t)?;
        let vt = value(&obs, &et)?;
        max_drift = max_drift.max((vt - v0).abs());
        values.push((t, vt));
    }
    let h_func = hamiltonian_functional(h)?;
    let bracket = poisson_bracket(&obs, &h_func, e0)?;
    Ok(LocalityReport {
        observable: obs.label(),
        values,
        max_drift,
        direct_bracket: Some(bracket),
        tolerance,
        pass: max_drift < tolerance,
    })
}

/// Under a one-sided interaction, every observable of the *other* particle
/// must stay constant; drift and the direct bracket are both reported.
pub fn check_remote_invariance(
    side: Side,
    e0: &Ensemble,
    g: f64,
    t_samples: &[f64],
    observables: &[QuantumOperatorSpec],
) -> Result<Vec<LocalityReport>> {
    let h = side.hamiltonian(g);
    let remote = side.remote_axis();
    let mut reports = Vec::new();
    for m in observables {
        let support = m.axis_support();
        if support.iter().any(|a| *a != remote) {
            return Err(CeError::WrongParticle(format!(
                "{} does not act on the remote particle ({})",
                m.label(),
                remote.name()
            )));
        }
        let mut r = observable_drift(e0, &h, t_samples, m, ANALYTIC_DRIFT_TOL)?;
        let bracket_ok = r
            .direct_bracket
            .map(|b| b.abs() < DIRECT_BRACKET_TOL)
            .unwrap_or(false);
        r.pass = r.pass && bracket_ok;
        reports.push(r);
    }
    Ok(reports)
}

/// The degree-≤2 phase-space corpus used throughout the locality checks.
pub fn classical_corpus() -> Vec<PhasePolynomial> {
    vec![
        PhasePolynomial::x(),
        PhasePolynomial::k(),
        PhasePolynomial::xk(),
        PhasePolynomial::x2(),
        PhasePolynomial::k2(),
    ]
}

/// Quantum corpus: q, p, q², p², symmetrized qp on the given axis.
pub fn quantum_corpus(axis: Axis) -> Vec<QuantumOperatorSpec> {
    vec![
        QuantumOperatorSpec::weyl(axis, 1, 0).unwrap(),
        QuantumOperatorSpec::weyl(axis, 0, 1).unwrap(),
        QuantumOperatorSpec::weyl(axis, 2, 0).unwrap(),
        QuantumOperatorSpec::weyl(axis, 0, 2).unwrap(),
        QuantumOperatorSpec::weyl(axis, 1, 1).unwrap(),
    ]
}

/// Both-axis quantum corpus.
pub fn quantum_corpus_both() -> Vec<QuantumOperatorSpec> {
    let mut v = quantum_corpus(Axis::Q1);
    v.extend(quantum_corpus(Axis::Q2));
    v
}

/// For product initial data, {C_f, Q_M} must vanish at every evolved time.
pub fn check_strong_separability(
    e0: &Ensemble,
    h: &HamiltonianSpec,
    t_samples: &[f64],
    f_corpus: &[PhasePolynomial],
    m_corpus: &[QuantumOperatorSpec],
    tolerance: f64,
) -> Result<Vec<LocalityReport>> {
    if !e0.is_product() {
        return Err(CeError::Precondition(
            "strong separability requires product initial data; use the counterexample search for correlated ensembles".into(),
        ));
    }
    let evolved: Vec<(f64, Ensemble)> = {
        let mut v = vec![(0.0, e0.clone())];
        for &t in t_samples {
            v.push((t, evolve(e0, h, t)?));
        }
        v
    };
    let mut reports = Vec::new();
    for f in f_corpus {
        let cf = ObservableFunctional::classical(f.clone());
        for m in m_corpus {
            let qm = ObservableFunctional::quantum(m.clone());
            let mut values = Vec::new();
            let mut max_drift = 0.0_f64;
            for (t, et) in &evolved {
                let b = poisson_bracket(&cf, &qm, et)?;
                max_drift = max_drift.max(b.abs());
                values.push((*t, b));
            }
            reports.push(LocalityReport {
                observable: format!("{{C[{}], Q[{}]}}", f.label(), m.label()),
                values,
                max_drift,
                direct_bracket: None,
                tolerance,
                pass: max_drift < tolerance,
            });
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, Serialize)]
pub struct ViolationReport {
    /// The witnessing pair and its bracket value, when found.
    pub found: Option<(String, String, f64)>,
    pub threshold: f64,
    pub pairs_searched: usize,
}

/// Search the corpus for a classical-quantum pair with a bracket well above
/// the separability tolerance; correlated ensembles are expected to expose
/// one, product ensembles none.
pub fn exhibit_nonseparable_bracket(e_corr: &Ensemble) -> Result<ViolationReport> {
    let threshold = 10.0 * GRID_BRACKET_TOL;
    let mut best: Option<(String, String, f64)> = None;
    let mut searched = 0;
    for f in classical_corpus() {
        let cf = ObservableFunctional::classical(f.clone());
        for m in quantum_corpus_both() {
            let qm = ObservableFunctional::quantum(m.clone());
            let b = poisson_bracket(&cf, &qm, e_corr)?;
            searched += 1;
            if b.abs() > threshold {
                let better = best
                    .as_ref()
                    .map(|(_, _, prev)| b.abs() > prev.abs())
                    .unwrap_or(true);
                if better {
                    best = Some((f.label(), m.label(), b));
                }
            }
        }
    }
    Ok(ViolationReport {
        found: best,
        threshold,
        pairs_searched: searched,
    })
}
