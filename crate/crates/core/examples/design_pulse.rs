//! Base and dressed pulses for one step, plus the control corrections.
//!
//! Run with `cargo run --release --example design_pulse [tau]`, where `tau`
//! is in units of 1/Ω̃ (default 0.2).

use std::f64::consts::PI;

use rydberg_sta::pulsegen::{DressedSchedule, Dressing, VitanovPulse, DEFAULT_EDGE};

fn main() -> rydberg_sta::Result<()> {
    let tau_eff: f64 = std::env::args().nth(1).map(|s| s.parse().expect("tau is a number")).unwrap_or(0.2);
    let omega = 2.0 * PI * 1e6;
    let pulse = VitanovPulse::new(omega, tau_eff / omega, DEFAULT_EDGE)?;
    let schedule = DressedSchedule::new(pulse, Dressing::Simplest)?;
    println!("window [{:.3}, {:.3}] µs for τΩ̃ = {tau_eff}", pulse.t_start * 1e6, pulse.t_end * 1e6);
    println!("{:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}", "t/τ", "Ωp/Ω̃", "Ωs/Ω̃", "Ω'p/Ω̃", "Ω's/Ω̃", "μ", "gx/Ω̃");
    let mut peak: f64 = 0.0;
    for (k, q) in schedule.sample(&pulse.grid(2001))?.iter().enumerate() {
        peak = peak.max(q.omega_new);
        let (bp, bs) = pulse.base_pulses(q.t);
        if k % 100 == 0 {
            println!(
                "{:8.2} {:8.4} {:8.4} {:8.4} {:8.4} {:8.4} {:8.4}",
                q.t / pulse.tau,
                bp / omega,
                bs / omega,
                q.omega_p / omega,
                q.omega_s / omega,
                q.dressed.mu,
                q.corrections.gx / omega
            );
        }
    }
    println!("peak dressed amplitude {:.4} Ω̃", peak / omega);
    Ok(())
}
