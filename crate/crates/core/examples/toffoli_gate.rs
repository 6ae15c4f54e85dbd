//! Three-qubit Toffoli in the full rotating-wave model with spontaneous decay.
//!
//! Run with `cargo run --release --example toffoli_gate [effective|full-rw|full-cosine]`.

use rydberg_sta::gateproto::{truth_table, GateProtocol, ModelKind};

fn main() -> rydberg_sta::Result<()> {
    let model: ModelKind = std::env::args()
        .nth(1)
        .map(|s| s.parse())
        .transpose()?
        .unwrap_or(ModelKind::RotatingWave);
    let protocol = GateProtocol::toffoli().with_model(model);
    println!(
        "model {model}, Ω̃/2π = {:.3} MHz, step duration {:.3} µs",
        protocol.pulse.amplitude / (2.0 * std::f64::consts::PI) / 1e6,
        protocol.step_duration() * 1e6
    );
    let start = std::time::Instant::now();
    let report = truth_table(&protocol)?;
    println!("input  -> {}", report.basis.join("      "));
    for (label, row) in report.basis.iter().zip(&report.truth_table) {
        let cells: Vec<String> = row.iter().map(|p| format!("{p:.5}")).collect();
        println!("{label:>5}  -> {}", cells.join("  "));
    }
    println!("phases (rad): {:?}", report.phases.iter().map(|p| (p * 1e4).round() / 1e4).collect::<Vec<_>>());
    println!("leakage: {:?}", report.leakage.iter().map(|p| format!("{p:.2e}")).collect::<Vec<_>>());
    println!("average fidelity {:.5}", report.average_fidelity);
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(())
}
