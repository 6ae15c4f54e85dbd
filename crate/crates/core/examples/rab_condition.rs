//! Solves the anti-blockade condition for the detuning at a few drive ratios.
//!
//! Run with `cargo run --release --example rab_condition`.

use std::f64::consts::PI;

use rydberg_sta::hammodel::{effective_detuning, rab_solve};

fn main() -> rydberg_sta::Result<()> {
    let v = 2.0 * PI * 2e9;
    let omega = 2.0 * PI * 30e6;
    for n in [2usize, 3] {
        println!("n = {n}, V/2π = 2 GHz, Ωp = Ωs = 30 MHz·2π");
        for alpha in [0.0, 1.0 / 15.0, 0.1, 0.2] {
            let delta = rab_solve(v, omega, omega, alpha, n)?;
            let residual = effective_detuning(n, v, delta, alpha * delta, omega, omega);
            println!(
                "  α = {alpha:.4}: Δ/2π = {:9.3} MHz, Ωc/2π = {:8.3} MHz, Δ_eff/2π = {:.1e} Hz",
                delta / (2.0 * PI * 1e6),
                alpha * delta / (2.0 * PI * 1e6),
                residual / (2.0 * PI)
            );
        }
    }
    Ok(())
}
