//! Free decay of a Rydberg-excited target, then the C-NOT fidelity against
//! the decay rate.
//!
//! Run with `cargo run --release --example lindblad_decay`.

use std::f64::consts::PI;

use rydberg_sta::dynamo::{evolve_lindblad, IntegratorConfig};
use rydberg_sta::gateproto::{average_fidelity, GateProtocol};
use rydberg_sta::hammodel::{lindblad_ops_for, StaticHamiltonian};
use rydberg_sta::qcore::{CMatrix, HilbertSpace, QuantumState};

fn main() -> rydberg_sta::Result<()> {
    let space = HilbertSpace::rydberg_register(2)?;
    let gamma = 2.0 * PI * 1e3;
    let jumps = lindblad_ops_for(&space, gamma)?;
    let h = StaticHamiltonian::new(CMatrix::zeros(space.dim(), space.dim()));
    let rho = QuantumState::basis(&space, &space.parse_labels("1r")?)?.into_density();
    let t_end = 3.0 / gamma;
    let traj = evolve_lindblad(&h, &jumps, &rho, (0.0, t_end), &IntegratorConfig::default())?;
    let r = space.index_of(&space.parse_labels("1r")?)?;
    println!("P(1r) against e^(-γt):");
    for (k, (t, p)) in traj.times.iter().zip(traj.population_series(r)).enumerate() {
        if k % 50 == 0 {
            println!("  γt = {:.2}: {p:.6} vs {:.6}", gamma * t, (-gamma * t).exp());
        }
    }

    for khz in [0.0, 1.0, 10.0, 100.0] {
        let mut p = GateProtocol::cnot();
        p.gamma = 2.0 * PI * khz * 1e3;
        p.dissipation = khz > 0.0;
        println!("γ/2π = {khz:5} kHz: F_av = {:.5}", average_fidelity(&p, p.theta_points)?);
    }
    Ok(())
}
