//! Entanglement of the two quantum particles as a function of interaction
//! time, generated through the classical mediator and a position measurement.
//!
//! ```sh
//! cargo run --release -p ce-core --example mediated_entanglement
//! ```

use ce_core::analytic::{ClassicalGaussian, GaussianWavepacket, Poly1};
use ce_core::conditioning::{
    gaussian_entanglement, measure_and_condition, schmidt_analysis, ProductInitialData,
};
use ce_core::dynamics::InteractionMode;
use ce_core::ensemble::{Action1D, Density1D, Wavefunction1D};
use ce_core::presets::StandardScenario;

fn main() -> ce_core::Result<()> {
    let scen = StandardScenario {
        n: 64,
        ..Default::default()
    };
    let t_max = 1.5;
    let init = ProductInitialData {
        psi1: Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
        psi2: Wavefunction1D::Gaussian(GaussianWavepacket::unit()),
        p0: Density1D::Gaussian(ClassicalGaussian::unit()),
        s0: Action1D::Poly(Poly1::zero()),
        grid: scen.grid_for(t_max)?,
        hbar: 1.0,
    };

    println!("{:>6}  {:>12}  {:>12}  {:>5}", "t", "S (Schmidt)", "S (Gauss)", "rank");
    let mut t = 0.0;
    while t <= t_max + 1e-9 {
        let state = measure_and_condition(&init, 1.0, 1.0, t, 0.0, InteractionMode::Simultaneous)?;
        let svd = schmidt_analysis(&state.wavefunction)?;
        let gauss = gaussian_entanglement(&state.gaussian.expect("gaussian inputs"))?;
        println!(
            "{t:6.2}  {:12.8}  {:12.8}  {:>5}",
            svd.entropy, gauss.entropy, svd.schmidt_rank
        );
        t += 0.25;
    }
    Ok(())
}
