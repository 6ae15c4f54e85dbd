//! Step 1 (|11⟩ → |1m⟩ for the C-NOT) in the effective and full models.
//!
//! Run with `cargo run --release --example single_step_transfer`.

use rydberg_sta::gateproto::{run_step, GateProtocol, ModelKind};
use rydberg_sta::hammodel::StepSpec;
use rydberg_sta::qcore::QuantumState;

fn main() -> rydberg_sta::Result<()> {
    let step = StepSpec::new(1)?;
    for model in [ModelKind::Effective, ModelKind::RotatingWave, ModelKind::Cosine] {
        let p = GateProtocol::cnot().with_model(model).with_dissipation(false);
        let space = p.space();
        let input = QuantumState::basis(&space, &space.parse_labels("11")?)?;
        let (out, traj) = run_step(&p, step, &input)?;
        let at = |s: &str| -> rydberg_sta::Result<f64> { Ok(out.population_at(space.index_of(&space.parse_labels(s)?)?)) };
        println!(
            "{model:>12}: P(11) = {:.5}, P(rr) = {:.5}, P(1m) = {:.5}, {} steps",
            at("11")?,
            at("rr")?,
            at("1m")?,
            traj.accepted_steps
        );
    }
    Ok(())
}
