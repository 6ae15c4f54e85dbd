//! The corrected Hamiltonian is diagonal in the dressed frame, so the step
//! propagator is diagonal in the `(In, R, Out)` basis up to the frame change.
//!
//! Run with `cargo run --release --example dressed_frame`.

use std::f64::consts::PI;

use rydberg_sta::hammodel::{dressed_evolution_operator, dressed_frame_hamiltonian};
use rydberg_sta::pulsegen::{DressedSchedule, Dressing, VitanovPulse, DEFAULT_EDGE};

fn main() -> rydberg_sta::Result<()> {
    let omega = 2.0 * PI * 1e6;
    let pulse = VitanovPulse::new(omega, 0.2 / omega, DEFAULT_EDGE)?;
    let schedule = DressedSchedule::new(pulse, Dressing::Simplest)?;
    let mut worst: f64 = 0.0;
    for q in schedule.sample(&pulse.grid(401))? {
        let h = dressed_frame_hamiltonian(&q.base, &q.dressed, &q.corrections);
        worst = worst.max(h.max_offdiagonal());
    }
    println!("largest dressed-frame coupling over the window: {:.2e} Ω̃", worst / omega);
    let u = dressed_evolution_operator(&schedule, 200)?;
    println!("|U| in (In, R, Out):");
    for i in 0..3 {
        println!("  {:.6} {:.6} {:.6}", u[(i, 0)].norm(), u[(i, 1)].norm(), u[(i, 2)].norm());
    }
    Ok(())
}
