//! The discrete protocol: two qubits entangled through a classical bit and
//! local operations, plus the semiclassical-gravity contrast demo. Everything
//! here is exact 4×4 linear algebra.

use ndarray::Array2;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{CeError, Result};
use crate::linalg::hermitian_eigen;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

/// 2×2 Pauli matrices.
pub fn pauli_i() -> Array2<C> {
    ndarray::array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

pub fn pauli_x() -> Array2<C> {
    ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]]
}

pub fn pauli_y() -> Array2<C> {
    ndarray::array![[c(0.0, 0.0), c(0.0, -1.0)], [c(0.0, 1.0), c(0.0, 0.0)]]
}

pub fn pauli_z() -> Array2<C> {
    ndarray::array![[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]]
}

/// Kronecker product with basis ordering |a b> -> index 2a + b.
pub fn kron(a: &Array2<C>, b: &Array2<C>) -> Array2<C> {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = Array2::<C>::default((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            for k in 0..rb {
                for l in 0..cb {
                    out[(i * rb + k, j * cb + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn mat_mul(a: &Array2<C>, b: &Array2<C>) -> Array2<C> {
    let (n, m) = (a.nrows(), b.ncols());
    let inner = a.ncols();
    let mut out = Array2::<C>::default((n, m));
    for i in 0..n {
        for j in 0..m {
            let mut s = C::default();
            for k in 0..inner {
                s += a[(i, k)] * b[(k, j)];
            }
            out[(i, j)] = s;
        }
    }
    out
}

fn dagger(a: &Array2<C>) -> Array2<C> {
    let (n, m) = a.dim();
    Array2::from_shape_fn((m, n), |(i, j)| a[(j, i)].conj())
}

fn trace(a: &Array2<C>) -> C {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// 4×4 two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QubitDensityMatrix {
    pub mat: Array2<C>,
}

impl QubitDensityMatrix {
    pub fn new(mat: Array2<C>) -> Result<Self> {
        let rho = QubitDensityMatrix { mat };
        rho.validate()?;
        Ok(rho)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mat.dim() != (4, 4) {
            return Err(CeError::Invariant("density matrix must be 4×4".into()));
        }
        let mut anti = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                anti += (self.mat[(i, j)] - self.mat[(j, i)].conj()).norm_sqr();
            }
        }
        if anti.sqrt() / 2.0 > 1e-12 {
            return Err(CeError::Invariant(format!(
                "density matrix not Hermitian (deviation {:.3e})",
                anti.sqrt() / 2.0
            )));
        }
        let tr = trace(&self.mat);
        if (tr.re - 1.0).abs() > 1e-12 || tr.im.abs() > 1e-12 {
            return Err(CeError::Invariant(format!("trace = {tr}")));
        }
        let (evals, _) = hermitian_eigen(&self.mat);
        if evals.iter().any(|l| *l < -1e-10) {
            return Err(CeError::Invariant(format!(
                "negative eigenvalue {:.3e}",
                evals[0]
            )));
        }
        Ok(())
    }

    pub fn purity(&self) -> f64 {
        trace(&mat_mul(&self.mat, &self.mat)).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.mat).0
    }

    /// Max entrywise deviation from another density matrix.
    pub fn entrywise_distance(&self, other: &QubitDensityMatrix) -> f64 {
        self.mat
            .iter()
            .zip(other.mat.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Conjugate by a local unitary on one party: (U_A ⊗ 1) rho (U_A ⊗ 1)†
    /// or (1 ⊗ U_B) rho (1 ⊗ U_B)†.
    pub fn conjugate_local(&self, u: &Array2<C>, party: Party) -> QubitDensityMatrix {
        let full = match party {
            Party::A => kron(u, &pauli_i()),
            Party::B => kron(&pauli_i(), u),
        };
        QubitDensityMatrix {
            mat: mat_mul(&mat_mul(&full, &self.mat), &dagger(&full)),
        }
    }
}

/// Partial transpose over party B (the second tensor factor).
pub fn partial_transpose_b(rho: &QubitDensityMatrix) -> Array2<C> {
    let mut out = Array2::<C>::default((4, 4));
    for a in 0..2 {
        for b in 0..2 {
            for ap in 0..2 {
                for bp in 0..2 {
                    out[(2 * a + b, 2 * ap + bp)] = rho.mat[(2 * a + bp, 2 * ap + b)];
                }
            }
        }
    }
    out
}

/// Sum of the magnitudes of negative eigenvalues of the partial transpose.
pub fn negativity(rho: &QubitDensityMatrix) -> Result<f64> {
    rho.validate()?;
    let pt = partial_transpose_b(rho);
    let (evals, _) = hermitian_eigen(&pt);
    Ok(evals.iter().filter(|l| **l < 0.0).map(|l| -l).sum())
}

/// The two orthogonal Bell states
/// rho_c = ¼ (1⊗1 − X⊗X + (−1)^c Y⊗Y + (−1)^c Z⊗Z).
pub fn bell_pair_states() -> (QubitDensityMatrix, QubitDensityMatrix) {
    let ii = kron(&pauli_i(), &pauli_i());
    let xx = kron(&pauli_x(), &pauli_x());
    let yy = kron(&pauli_y(), &pauli_y());
    let zz = kron(&pauli_z(), &pauli_z());
    let build = |sign: f64| {
        let mut m = Array2::<C>::default((4, 4));
        for i in 0..4 {
            for j in 0..4 {
                m[(i, j)] =
                    0.25 * (ii[(i, j)] - xx[(i, j)] + sign * (yy[(i, j)] + zz[(i, j)]));
            }
        }
        QubitDensityMatrix::new(m).expect("Bell state is a valid density matrix")
    };
    (build(1.0), build(-1.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparabilityReport {
    /// Entrywise deviation between ½(rho0 + rho1) and the explicit separable
    /// decomposition ½[(1+X)/2 ⊗ (1−X)/2 + (1−X)/2 ⊗ (1+X)/2].
    pub decomposition_deviation: f64,
    pub negativity: f64,
    pub mixture_eigenvalues: Vec<f64>,
    pub ppt: bool,
}

/// Check that the equal mixture of the two Bell states is the displayed
/// separable state: entrywise match, PPT, zero negativity.
pub fn mixture_and_separability() -> Result<SeparabilityReport> {
    let (rho0, rho1) = bell_pair_states();
    let mix = QubitDensityMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
        0.5 * (rho0.mat[(i, j)] + rho1.mat[(i, j)])
    }))?;

    let half = |sign: f64| -> Array2<C> {
        let x = pauli_x();
        Array2::from_shape_fn((2, 2), |(i, j)| {
            0.5 * (pauli_i()[(i, j)] + sign * x[(i, j)])
        })
    };
    let sep_a = kron(&half(1.0), &half(-1.0));
    let sep_b = kron(&half(-1.0), &half(1.0));
    let sep = QubitDensityMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
        0.5 * (sep_a[(i, j)] + sep_b[(i, j)])
    }))?;

    let deviation = mix.entrywise_distance(&sep);
    let neg = negativity(&mix)?;
    let pt = partial_transpose_b(&mix);
    let (pt_evals, _) = hermitian_eigen(&pt);
    Ok(SeparabilityReport {
        decomposition_deviation: deviation,
        negativity: neg,
        mixture_eigenvalues: mix.eigenvalues(),
        ppt: pt_evals.iter().all(|l| *l > -1e-10),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Party {
    A,
    B,
}

/// Machine-checkable transcript entries; anything outside local operations
/// and classical communication fails the tagger.
#[derive(Debug, Clone, Serialize)]
pub enum ProtocolOp {
    LocalPreparation { party: Party, description: String },
    ClassicalCommunication { from: Party, to: Party, bit: u8 },
    LocalUnitary { party: Party, name: String },
    JointUnitary { name: String },
}

/// Reject transcripts containing joint quantum operations.
pub fn validate_transcript(ops: &[ProtocolOp]) -> Result<()> {
    for (i, op) in ops.iter().enumerate() {
        if let ProtocolOp::JointUnitary { name } = op {
            return Err(CeError::Precondition(format!(
                "transcript step {i} is a joint quantum operation ({name})"
            )));
        }
    }
    Ok(())
}

/// One classical branch of the protocol.
#[derive(Debug, Clone)]
pub struct ProtocolState {
    pub bit: u8,
    pub probability: f64,
    pub rho: QubitDensityMatrix,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub branches: Vec<ProtocolState>,
    /// Ensemble average over the classical bit.
    pub final_state: QubitDensityMatrix,
    pub transcript: Vec<ProtocolOp>,
    pub final_negativity: f64,
}

/// Run the bit-mediated protocol: the pair rho_c is shared according to the
/// classical bit (prob p0 for c = 0); when `communicate` is set the bit is
/// sent to observer A, who applies X^c, mapping every branch to rho_0.
pub fn run_protocol(p0: f64, communicate: bool) -> Result<ProtocolOutcome> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(CeError::Precondition(format!(
            "bit probability {p0} outside [0, 1]"
        )));
    }
    let (rho0, rho1) = bell_pair_states();
    let mut transcript = vec![
        ProtocolOp::LocalPreparation {
            party: Party::A,
            description: "receive half of the bit-correlated pair".into(),
        },
        ProtocolOp::LocalPreparation {
            party: Party::B,
            description: "receive half of the bit-correlated pair".into(),
        },
    ];

    let mut branches = Vec::new();
    for (bit, prob, rho) in [(0u8, p0, rho0.clone()), (1u8, 1.0 - p0, rho1.clone())] {
        let rho = if communicate && bit == 1 {
            rho.conjugate_local(&pauli_x(), Party::A)
        } else {
            rho
        };
        branches.push(ProtocolState {
            bit,
            probability: prob,
            rho,
        });
    }
    if communicate {
        transcript.push(ProtocolOp::ClassicalCommunication {
            from: Party::B,
            to: Party::A,
            bit: 1,
        });
        transcript.push(ProtocolOp::LocalUnitary {
            party: Party::A,
            name: "X^c".into(),
        });
    }

    let final_state = QubitDensityMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
        branches
            .iter()
            .map(|b| b.rho.mat[(i, j)] * b.probability)
            .sum()
    }))?;
    let final_negativity = negativity(&final_state)?;
    Ok(ProtocolOutcome {
        branches,
        final_state,
        transcript,
        final_negativity,
    })
}

fn check_hermitian_2x2(h: &Array2<C>) -> Result<()> {
    let mut anti = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            anti += (h[(i, j)] - h[(j, i)].conj()).norm_sqr();
        }
    }
    let n = anti.sqrt() / 2.0;
    if n > 1e-12 {
        return Err(CeError::NotHermitian { norm: n });
    }
    Ok(())
}

/// Exact propagator e^{-i h t} via eigendecomposition.
fn propagator(h: &Array2<C>, t: f64) -> Array2<C> {
    let (evals, v) = hermitian_eigen(h);
    let n = h.nrows();
    let mut out = Array2::<C>::default((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = C::default();
            for k in 0..n {
                let phase = C::new(0.0, -evals[k] * t).exp();
                s += v[(i, k)] * phase * v[(j, k)].conj();
            }
            out[(i, j)] = s;
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoRow {
    pub t: f64,
    pub lambda: f64,
    pub observable: String,
    pub party: Party,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoTable {
    pub rows: Vec<DemoRow>,
    /// Observables whose coupled trajectory deviates from the uncoupled one by
    /// more than 1e-6 somewhere on the sample grid.
    pub flagged: Vec<(String, Party, f64)>,
}

pub const DEMO_FLAG_TOL: f64 = 1e-6;

/// Joint evolution under h12 = h1⊗1 + 1⊗h2 − λ h1⊗h2 for a product initial
/// pure state; the probe corpus {X, Y, Z} per party is tabulated with the
/// given λ and with λ = 0, and deviations are flagged.
pub fn semiclassical_gravity_demo(
    lambda: f64,
    t_samples: &[f64],
    h1: &Array2<C>,
    h2: &Array2<C>,
    initial_a: [C; 2],
    initial_b: [C; 2],
) -> Result<DemoTable> {
    check_hermitian_2x2(h1)?;
    check_hermitian_2x2(h2)?;

    let h_free = {
        let a = kron(h1, &pauli_i());
        let b = kron(&pauli_i(), h2);
        Array2::from_shape_fn((4, 4), |(i, j)| a[(i, j)] + b[(i, j)])
    };
    let h_coupled = {
        let ab = kron(h1, h2);
        Array2::from_shape_fn((4, 4), |(i, j)| h_free[(i, j)] - lambda * ab[(i, j)])
    };

    let mut psi0 = [C::default(); 4];
    for a in 0..2 {
        for b in 0..2 {
            psi0[2 * a + b] = initial_a[a] * initial_b[b];
        }
    }
    let norm: f64 = psi0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(CeError::Precondition("initial state is zero".into()));
    }
    for z in &mut psi0 {
        *z /= norm;
    }

    let probes: Vec<(String, Party, Array2<C>)> = [
        ("X", pauli_x()),
        ("Y", pauli_y()),
        ("Z", pauli_z()),
    ]
    .into_iter()
    .flat_map(|(name, m)| {
        [
            (name.to_string(), Party::A, kron(&m, &pauli_i())),
            (name.to_string(), Party::B, kron(&pauli_i(), &m)),
        ]
    })
    .collect();

    let expect = |h: &Array2<C>, t: f64, probe: &Array2<C>| -> f64 {
        let u = propagator(h, t);
        let mut psi = [C::default(); 4];
        for i in 0..4 {
            for j in 0..4 {
                psi[i] += u[(i, j)] * psi0[j];
            }
        }
        let mut val = C::default();
        for i in 0..4 {
            for j in 0..4 {
                val += psi[i].conj() * probe[(i, j)] * psi[j];
            }
        }
        val.re
    };

    let mut rows = Vec::new();
    let mut flagged: Vec<(String, Party, f64)> = Vec::new();
    for (name, party, probe) in &probes {
        let mut max_dev = 0.0_f64;
        for &t in t_samples {
            let coupled = expect(&h_coupled, t, probe);
            let free = expect(&h_free, t, probe);
            max_dev = max_dev.max((coupled - free).abs());
            rows.push(DemoRow {
                t,
                lambda,
                observable: name.clone(),
                party: *party,
                value: coupled,
            });
            rows.push(DemoRow {
                t,
                lambda: 0.0,
                observable: name.clone(),
                party: *party,
                value: free,
            });
        }
        if max_dev > DEMO_FLAG_TOL {
            flagged.push((name.clone(), *party, max_dev));
        }
    }
    Ok(DemoTable { rows, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn bell_states_are_orthogonal_pure_and_unit_trace() {
        let (rho0, rho1) = bell_pair_states();
        assert_relative_eq!(trace(&rho0.mat).re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(trace(&rho1.mat).re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(rho0.purity(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(rho1.purity(), 1.0, epsilon = 1e-12);
        let overlap = trace(&mat_mul(&rho0.mat, &rho1.mat)).re;
        assert!(overlap.abs() < 1e-12, "tr rho0 rho1 = {overlap}");
    }

    #[test]
    fn mixture_matches_the_separable_decomposition() {
        let report = mixture_and_separability().unwrap();
        assert!(
            report.decomposition_deviation < 1e-12,
            "deviation {:.3e}",
            report.decomposition_deviation
        );
        assert!(report.negativity < 1e-12);
        assert!(report.ppt);
        // exact spectrum {0, 0, ½, ½}
        let evals = &report.mixture_eigenvalues;
        assert!(evals[0].abs() < 1e-12 && evals[1].abs() < 1e-12);
        assert_relative_eq!(evals[2], 0.5, epsilon = 1e-12);
        assert_relative_eq!(evals[3], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn local_x_maps_rho1_to_rho0() {
        let (rho0, rho1) = bell_pair_states();
        let mapped = rho1.conjugate_local(&pauli_x(), Party::A);
        assert!(mapped.entrywise_distance(&rho0) < 1e-12);
    }

    #[test]
    fn negativity_reference_values() {
        let (rho0, _) = bell_pair_states();
        assert_relative_eq!(negativity(&rho0).unwrap(), 0.5, epsilon = 1e-12);

        let maximally_mixed = QubitDensityMatrix::new(Array2::from_shape_fn((4, 4), |(i, j)| {
            if i == j {
                c(0.25, 0.0)
            } else {
                C::default()
            }
        }))
        .unwrap();
        assert!(negativity(&maximally_mixed).unwrap() < 1e-14);

        // the partial transpose of rho0 has spectrum {½, ½, ½, −½}
        let pt = partial_transpose_b(&rho0);
        let (evals, _) = hermitian_eigen(&pt);
        assert_relative_eq!(evals[0], -0.5, epsilon = 1e-12);
        for e in &evals[1..] {
            assert_relative_eq!(*e, 0.5, epsilon = 1e-12);
        }
    }

    #[test]
    fn communicated_protocol_restores_the_bell_state() {
        let (rho0, _) = bell_pair_states();
        let out = run_protocol(0.5, true).unwrap();
        assert!(out.final_state.entrywise_distance(&rho0) < 1e-12);
        assert_relative_eq!(out.final_negativity, 0.5, epsilon = 1e-10);
        validate_transcript(&out.transcript).unwrap();
    }

    #[test]
    fn uncommunicated_protocol_stays_separable() {
        let out = run_protocol(0.5, false).unwrap();
        assert!(out.final_negativity < 1e-12);
    }

    #[test]
    fn degenerate_single_branch_control() {
        let (rho0, _) = bell_pair_states();
        let out = run_protocol(1.0, false).unwrap();
        assert!(out.final_state.entrywise_distance(&rho0) < 1e-12);
        assert_relative_eq!(out.final_negativity, 0.5, epsilon = 1e-10);
    }

    #[test]
    fn tagger_rejects_joint_operations() {
        let mut ops = run_protocol(0.5, true).unwrap().transcript;
        validate_transcript(&ops).unwrap();
        ops.push(ProtocolOp::JointUnitary {
            name: "CNOT".into(),
        });
        assert!(matches!(
            validate_transcript(&ops),
            Err(CeError::Precondition(_))
        ));
    }

    fn random_unitary_2x2(rng: &mut StdRng) -> Array2<C> {
        // Gram-Schmidt on a random complex matrix
        let v1 = [
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        ];
        let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
        let e1 = [v1[0] / n1, v1[1] / n1];
        let mut v2 = [
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        ];
        let overlap = e1[0].conj() * v2[0] + e1[1].conj() * v2[1];
        v2[0] -= overlap * e1[0];
        v2[1] -= overlap * e1[1];
        let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
        let e2 = [v2[0] / n2, v2[1] / n2];
        ndarray::array![[e1[0], e2[0]], [e1[1], e2[1]]]
    }

    #[test]
    fn negativity_is_invariant_under_local_unitaries() {
        let (rho0, _) = bell_pair_states();
        let base = negativity(&rho0).unwrap();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..12 {
            let u = random_unitary_2x2(&mut rng);
            let party = if rng.random_range(0..2) == 0 {
                Party::A
            } else {
                Party::B
            };
            let rotated = rho0.conjugate_local(&u, party);
            let n = negativity(&rotated).unwrap();
            assert!((n - base).abs() < 1e-10, "negativity drifted to {n}");
        }
    }

    #[test]
    fn demo_uncoupled_limit_matches_single_qubit_evolution() {
        let plus = [c(0.5_f64.sqrt(), 0.0), c(0.5_f64.sqrt(), 0.0)];
        let ts = [0.3, 0.7, 1.0];
        let table =
            semiclassical_gravity_demo(0.0, &ts, &pauli_z(), &pauli_z(), plus, plus).unwrap();
        assert!(table.flagged.is_empty());
        // single-qubit reference: <X>(t) = cos(2t) for |+> under h = Z
        for row in table
            .rows
            .iter()
            .filter(|r| r.observable == "X" && r.party == Party::A && r.lambda == 0.0)
        {
            assert_relative_eq!(row.value, (2.0 * row.t).cos(), epsilon = 1e-12);
        }
    }

    #[test]
    fn demo_coupling_influences_both_parties() {
        let plus = [c(0.5_f64.sqrt(), 0.0), c(0.5_f64.sqrt(), 0.0)];
        let table = semiclassical_gravity_demo(
            0.1,
            &[0.5, 1.0],
            &pauli_z(),
            &pauli_z(),
            plus,
            plus,
        )
        .unwrap();
        let x_a = table
            .flagged
            .iter()
            .find(|(name, party, _)| name == "X" && *party == Party::A)
            .expect("X on party A must be influenced");
        assert!(x_a.2 > 1e-6, "measured deviation {:.3e}", x_a.2);
        assert!(table.flagged.iter().any(|(_, p, _)| *p == Party::A));
        assert!(table.flagged.iter().any(|(_, p, _)| *p == Party::B));
    }

    #[test]
    fn demo_constant_hamiltonians_are_global_phase_only() {
        let plus = [c(0.5_f64.sqrt(), 0.0), c(0.5_f64.sqrt(), 0.0)];
        for lambda in [0.1, 1.0, 5.0] {
            let table = semiclassical_gravity_demo(
                lambda,
                &[0.5, 1.0, 2.0],
                &pauli_i(),
                &pauli_i(),
                plus,
                plus,
            )
            .unwrap();
            assert!(
                table.flagged.is_empty(),
                "lambda {lambda} flagged {:?}",
                table.flagged
            );
        }
        // one-sided constant: party A observables stay unaffected for any
        // lambda (the coupling only renormalizes h2)
        for lambda in [0.1, 2.0] {
            let table = semiclassical_gravity_demo(
                lambda,
                &[0.5, 1.0],
                &pauli_i(),
                &pauli_z(),
                plus,
                plus,
            )
            .unwrap();
            assert!(
                table.flagged.iter().all(|(_, p, _)| *p == Party::B),
                "lambda {lambda}: unexpected party-A flag in {:?}",
                table.flagged
            );
        }
    }

    #[test]
    fn demo_rejects_non_hermitian_input() {
        let plus = [c(1.0, 0.0), c(0.0, 0.0)];
        let bad = ndarray::array![[c(0.0, 0.0), c(1.0, 0.0)], [c(0.5, 0.0), c(0.0, 0.0)]];
        assert!(matches!(
            semiclassical_gravity_demo(0.1, &[1.0], &bad, &pauli_z(), plus, plus),
            Err(CeError::NotHermitian { .. })
        ));
    }
}
