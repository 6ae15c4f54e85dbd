//! Average C-NOT fidelity against pulse-area error and step duration, in
//! the effective model without decay.
//!
//! Run with `cargo run --release --example parameter_sweep`.

use rydberg_sta::gateproto::{average_fidelity, GateProtocol, ModelKind};

fn main() -> rydberg_sta::Result<()> {
    let base = GateProtocol::cnot().with_model(ModelKind::Effective).with_dissipation(false);
    let taus = [0.1, 0.2, 0.5, 1.0];
    print!("{:>6}", "scale");
    for t in taus {
        print!("  τΩ̃={t:<5}");
    }
    println!();
    for scale in [0.9, 0.95, 1.0, 1.05, 1.1] {
        print!("{scale:>6.2}");
        for t in taus {
            let mut p = base.clone().with_tau(t)?;
            p.amplitude_scale = scale;
            print!("  {:<9.5}", average_fidelity(&p, p.theta_points)?);
        }
        println!();
    }
    Ok(())
}
