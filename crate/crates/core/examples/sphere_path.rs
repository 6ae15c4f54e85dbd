//! Step-1 trajectory on the `(In, rr, Out)` sphere for the dressed pulse and
//! a slow adiabatic pulse.
//!
//! Run with `cargo run --release --example sphere_path`.

use rydberg_sta::gateproto::{run_step, sphere_path, GateProtocol, ModelKind};
use rydberg_sta::hammodel::StepSpec;
use rydberg_sta::pulsegen::Dressing;
use rydberg_sta::qcore::QuantumState;

fn main() -> rydberg_sta::Result<()> {
    let step = StepSpec::new(1)?;
    let dressed = GateProtocol::cnot().with_model(ModelKind::Effective).with_dissipation(false);
    let adiabatic = dressed.clone().with_dressing(Dressing::None).with_tau(3.0)?;
    for (name, p) in [("dressed, τΩ̃ = 0.2", dressed), ("adiabatic, τΩ̃ = 3", adiabatic)] {
        let space = p.space();
        let input = QuantumState::basis(&space, &space.parse_labels("11")?)?;
        let (_, traj) = run_step(&p, step, &input)?;
        let path = sphere_path(&traj, p.n, step)?;
        println!("{name}:");
        let stride = (path.len() / 10).max(1);
        for (_, q) in path.iter().enumerate().filter(|(k, _)| k % stride == 0 || *k + 1 == path.len()) {
            println!("  t = {:8.4} µs  a = {:7.4}  b = {:7.4}  c = {:7.4}", q.t * 1e6, q.a, q.b, q.c);
        }
    }
    Ok(())
}
