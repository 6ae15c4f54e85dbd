//! Three-step C_{n−1}-NOT protocol, truth tables, average fidelity and
//! sphere-path export.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamo::{evolve_lindblad, evolve_schrodinger, IntegratorConfig, Trajectory};
use crate::error::{Error, Result};
use crate::hammodel::{
    factorial_ratio, lindblad_ops_for, DriveForm, DriveSchedule, DriveSource, EffectiveModel,
    FullModel, Hamiltonian, Register, StepSpec,
};
use crate::pulsegen::{DressedSchedule, Dressing, VitanovPulse, DEFAULT_EDGE};
use crate::qcore::{c, CMatrix, CVector, HilbertSpace, Level, Operator, QuantumState, C64};

/// Which Hamiltonian propagates the register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "effective")]
    Effective,
    #[serde(rename = "full-rw")]
    RotatingWave,
    #[serde(rename = "full-cosine")]
    Cosine,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Effective => "effective",
            ModelKind::RotatingWave => "full-rw",
            ModelKind::Cosine => "full-cosine",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "effective" => Ok(ModelKind::Effective),
            "full-rw" | "full-rotating-wave" | "rotating-wave" => Ok(ModelKind::RotatingWave),
            "full-cosine" | "cosine" => Ok(ModelKind::Cosine),
            _ => Err(Error::Config(format!(
                "unknown model '{s}' (expected effective, full-rw or full-cosine)"
            ))),
        }
    }
}

/// Complete description of a gate run.
#[derive(Clone, Debug)]
pub struct GateProtocol {
    pub n: usize,
    /// Effective pulse with amplitude `Ω̃`, reused by every step.
    pub pulse: VitanovPulse,
    pub dressing: Dressing,
    /// `Ω_c/Δ`, held fixed.
    pub alpha: f64,
    /// Base detuning `Δ` in rad/s.
    pub delta: f64,
    /// Pair interactions; `None` derives them from the RAB condition.
    pub interactions: Option<Vec<f64>>,
    pub gamma: f64,
    pub dissipation: bool,
    /// Let `Δ(t)` follow the RAB root of the instantaneous pulse power.
    pub tracking: bool,
    pub model: ModelKind,
    pub sideband_correction: bool,
    /// Applied over designed pulse amplitude.
    pub amplitude_scale: f64,
    pub integrator: IntegratorConfig,
    pub theta_points: usize,
}

/// `2π × 1 kHz`.
pub const REFERENCE_GAMMA: f64 = 2.0 * PI * 1e3;
/// `2π × 30 MHz`.
pub const REFERENCE_OMEGA: f64 = 2.0 * PI * 30e6;

impl GateProtocol {
    /// Protocol with physical drive `Ω_c = Ω_p,s = omega`, detuning
    /// `delta = omega/α`, and Vitanov time constant `tau_eff/Ω̃`.
    pub fn new(n: usize, omega: f64, delta: f64, tau_eff: f64) -> Result<Self> {
        Self::with_drive(n, omega, omega, delta, tau_eff, DEFAULT_EDGE)
    }

    /// Protocol with pulse amplitude `omega`, control `omega_c` and base
    /// detuning `delta`.
    pub fn with_drive(n: usize, omega: f64, omega_c: f64, delta: f64, tau_eff: f64, edge: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", "need at least two atoms"));
        }
        if !(omega > 0.0 && omega_c > 0.0 && delta > omega_c) {
            return Err(Error::param("delta", "need Ω, Ω_c > 0 and Ω_c < Δ"));
        }
        let alpha = omega_c / delta;
        let amplitude = factorial_ratio(n) * alpha.powi(n as i32 - 1) * omega;
        let pulse = VitanovPulse::new(amplitude, tau_eff / amplitude, edge)?;
        Ok(Self {
            n,
            pulse,
            dressing: Dressing::Simplest,
            alpha,
            delta,
            interactions: None,
            gamma: REFERENCE_GAMMA,
            dissipation: true,
            tracking: true,
            model: ModelKind::RotatingWave,
            sideband_correction: true,
            amplitude_scale: 1.0,
            integrator: IntegratorConfig::default(),
            theta_points: 101,
        })
    }

    /// Two-qubit C-NOT: `Ω/2π = 30 MHz`, `Δ = 15Ω`, `τ = 0.2/Ω̃`.
    pub fn cnot() -> Self {
        Self::new(2, REFERENCE_OMEGA, 15.0 * REFERENCE_OMEGA, 0.2).expect("valid reference parameters")
    }

    /// Three-qubit Toffoli: `Ω/2π = 30 MHz`, `Δ = 10Ω`, `τ = 0.2/Ω̃`.
    pub fn toffoli() -> Self {
        Self::new(3, REFERENCE_OMEGA, 10.0 * REFERENCE_OMEGA, 0.2).expect("valid reference parameters")
    }

    pub fn with_model(mut self, model: ModelKind) -> Self {
        self.model = model;
        self
    }

    pub fn with_dressing(mut self, dressing: Dressing) -> Self {
        self.dressing = dressing;
        self
    }

    pub fn with_dissipation(mut self, on: bool) -> Self {
        self.dissipation = on;
        self
    }

    /// Replaces the time constant, keeping the amplitude and edge.
    pub fn with_tau(mut self, tau_eff: f64) -> Result<Self> {
        let p = self.pulse;
        self.pulse = VitanovPulse::new(p.amplitude, tau_eff / p.amplitude, p.edge)?;
        Ok(self)
    }

    pub fn steps(&self) -> [StepSpec; 3] {
        StepSpec::protocol()
    }

    pub fn space(&self) -> HilbertSpace {
        HilbertSpace::rydberg_register(self.n).expect("n ≥ 2 checked at construction")
    }

    pub fn step_duration(&self) -> f64 {
        self.pulse.duration()
    }

    /// Drive schedule with zero phase offset.
    pub fn drive_schedule(&self) -> Result<DriveSchedule> {
        let schedule = DressedSchedule::new(self.pulse, self.dressing.clone())?;
        DriveSchedule::new(
            self.n,
            self.alpha,
            self.delta,
            self.interactions.clone(),
            schedule,
            self.tracking,
        )
        .map(|d| d.with_amplitude_scale(self.amplitude_scale))
    }

    /// Hamiltonian for one step whose drive phase starts at `phase_offset`.
    pub fn step_model(&self, drive: &DriveSchedule, step: StepSpec, phase_offset: f64) -> Result<Box<dyn Hamiltonian>> {
        let source = DriveSource::Scheduled(drive.clone().with_phase_offset(phase_offset));
        Ok(match self.model {
            ModelKind::Effective => Box::new(EffectiveModel::embedded(source, step)?),
            ModelKind::RotatingWave | ModelKind::Cosine => {
                let form = if self.model == ModelKind::Cosine {
                    DriveForm::Cosine
                } else {
                    DriveForm::RotatingWave
                };
                let mut m = FullModel::new(source, step, form)?;
                m.sideband_correction = self.sideband_correction;
                Box::new(m)
            }
        })
    }

    fn jumps(&self) -> Result<Vec<Operator>> {
        if self.dissipation {
            lindblad_ops_for(&self.space(), self.gamma)
        } else {
            Ok(Vec::new())
        }
    }
}

fn check_computational(space: &HilbertSpace, state: &QuantumState) -> Result<()> {
    let leak: f64 = (0..space.dim())
        .filter(|&i| {
            space
                .labels_of(i)
                .iter()
                .any(|l| !matches!(l, Level::Zero | Level::One))
        })
        .map(|i| state.population_at(i))
        .sum();
    if leak > 1e-9 {
        return Err(Error::InvalidState(format!(
            "input has population {leak:e} outside the computational levels"
        )));
    }
    Ok(())
}

fn append(acc: &mut Option<Trajectory>, mut next: Trajectory, shift: f64) {
    next.times.iter_mut().for_each(|t| *t += shift);
    match acc {
        None => *acc = Some(next),
        Some(a) => {
            // The first sample repeats the previous step's last one.
            a.times.extend(next.times.into_iter().skip(1));
            a.states.extend(next.states.into_iter().skip(1));
            a.conserved.extend(next.conserved.into_iter().skip(1));
            a.max_drift = a.max_drift.max(next.max_drift);
            a.accepted_steps += next.accepted_steps;
            a.rejected_steps += next.rejected_steps;
            a.evaluations += next.evaluations;
            a.positivity_warnings += next.positivity_warnings;
        }
    }
}

fn propagate(
    protocol: &GateProtocol,
    steps: &[StepSpec],
    input: &QuantumState,
    jumps: &[Operator],
    use_density: bool,
    mut on_step: impl FnMut(usize, &QuantumState),
) -> Result<(QuantumState, Trajectory)> {
    let space = protocol.space();
    if input.dim() != space.dim() {
        return Err(Error::DimensionMismatch {
            expected: space.dim(),
            found: input.dim(),
        });
    }
    input.validate()?;
    check_computational(&space, input)?;
    let drive = protocol.drive_schedule()?;
    let window = drive.window();
    let step_phase = drive.total_phase();
    let duration = window.1 - window.0;

    let mut state = if use_density {
        input.clone().into_density()
    } else {
        input.clone()
    };
    let mut traj = None;
    for (k, step) in steps.iter().enumerate() {
        let h = protocol.step_model(&drive, *step, k as f64 * step_phase)?;
        let t = if state.is_pure_ket() {
            evolve_schrodinger(h.as_ref(), &state, window, &protocol.integrator)?
        } else {
            evolve_lindblad(h.as_ref(), jumps, &state, window, &protocol.integrator)?
        };
        // Integrator drift is recorded in the trajectory; the next step
        // starts from a normalized state.
        state = t.final_state().clone();
        on_step(k, &state);
        state = state.renormalized();
        append(&mut traj, t, k as f64 * duration - window.0);
    }
    Ok((state, traj.expect("at least one step")))
}

/// Runs the three steps back to back, carrying the full state across.
///
/// Kets stay kets unless dissipation is on; density matrices always use the
/// master equation. Trajectory times start at zero and run over all steps.
pub fn run_gate(protocol: &GateProtocol, input: &QuantumState) -> Result<(QuantumState, Trajectory)> {
    let jumps = protocol.jumps()?;
    propagate(protocol, &protocol.steps(), input, &jumps, protocol.dissipation, |_, _| {})
}

/// Runs a single step from the start of its window.
pub fn run_step(protocol: &GateProtocol, step: StepSpec, input: &QuantumState) -> Result<(QuantumState, Trajectory)> {
    let jumps = protocol.jumps()?;
    propagate(protocol, &[step], input, &jumps, protocol.dissipation, |_, _| {})
}

/// The same run with the corrections switched off.
pub fn adiabatic_reference_run(protocol: &GateProtocol, input: &QuantumState) -> Result<(QuantumState, Trajectory)> {
    let p = protocol.clone().with_dressing(Dressing::None);
    run_gate(&p, input)
}

/// Computational basis of the register, first atom most significant.
pub fn computational_labels(n: usize) -> Vec<Vec<Level>> {
    (0..1usize << n)
        .map(|k| {
            (0..n)
                .map(|a| {
                    if (k >> (n - 1 - a)) & 1 == 1 {
                        Level::One
                    } else {
                        Level::Zero
                    }
                })
                .collect()
        })
        .collect()
}

/// Ideal C_{n−1}-NOT on the computational basis.
pub fn ideal_gate(n: usize) -> CMatrix {
    let d = 1usize << n;
    let mut u = CMatrix::zeros(d, d);
    for k in 0..d {
        let out = if k >> 1 == (d >> 1) - 1 { k ^ 1 } else { k };
        u[(out, k)] = c(1.0);
    }
    u
}

fn ideal_output(n: usize, input: usize) -> usize {
    let d = 1usize << n;
    if input >> 1 == (d >> 1) - 1 {
        input ^ 1
    } else {
        input
    }
}

/// Outcome of a full gate characterisation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateReport {
    pub n: usize,
    pub model: ModelKind,
    pub dressing: String,
    pub dissipation: bool,
    pub tau: f64,
    pub step_duration: f64,
    /// Computational basis labels indexing rows and columns of `truth_table`.
    pub basis: Vec<String>,
    /// `truth_table[i][j]` is the population of `basis[j]` after input `basis[i]`.
    pub truth_table: Vec<Vec<f64>>,
    /// Column labels of the per-step tables: controls in `{0, 1}`, target in `{0, 1, m}`.
    pub step_basis: Vec<String>,
    /// Cumulative populations after each step.
    pub step_tables: Vec<Vec<Vec<f64>>>,
    /// Population left outside the computational levels, per input.
    pub leakage: Vec<f64>,
    /// `⟨ideal|ρ|ideal⟩` per input.
    pub input_fidelities: Vec<f64>,
    /// `arg⟨ideal|ψ⟩` per input from closed-system runs.
    pub phases: Vec<f64>,
    pub average_fidelity: f64,
    pub theta_points: usize,
    #[serde(skip)]
    pub trajectories: Vec<Trajectory>,
}

fn step_labels(n: usize) -> Vec<Vec<Level>> {
    let mut out = Vec::new();
    for ctrl in computational_labels(n - 1) {
        for t in [Level::Zero, Level::One, Level::M] {
            let mut l = ctrl.clone();
            l.push(t);
            out.push(l);
        }
    }
    out
}

fn populations_on(space: &HilbertSpace, state: &QuantumState, labels: &[Vec<Level>]) -> Vec<f64> {
    labels
        .iter()
        .map(|l| state.population_at(space.index_of(l).expect("register label")))
        .collect()
}

struct InputRun {
    final_state: QuantumState,
    trajectory: Trajectory,
    step_rows: Vec<Vec<f64>>,
}

fn run_input(protocol: &GateProtocol, space: &HilbertSpace, input: &QuantumState, jumps: &[Operator], density: bool) -> Result<InputRun> {
    let slabels = step_labels(protocol.n);
    let mut step_rows = Vec::new();
    let (final_state, trajectory) = propagate(protocol, &protocol.steps(), input, jumps, density, |_, s| {
        step_rows.push(populations_on(space, s, &slabels));
    })?;
    Ok(InputRun {
        final_state,
        trajectory,
        step_rows,
    })
}

fn trapezoid_theta(points: usize, f: impl Fn(f64) -> f64) -> Result<f64> {
    if points < 21 || points.is_multiple_of(2) {
        return Err(Error::param("theta_points", format!("need an odd count ≥ 21, got {points}")));
    }
    let h = 2.0 * PI / (points - 1) as f64;
    let mut sum = 0.0;
    for i in 0..points {
        let w = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        sum += w * f(-PI + h * i as f64);
    }
    Ok(sum * h / (2.0 * PI))
}

/// Average fidelity over `cos(θ/2)|a⟩ + sin(θ/2)|b⟩` with `a = |1…10⟩` and
/// `b = |1…11⟩`, given the propagated outputs of `a`, `b` and, for mixed
/// states, of `(a + b)/√2`.
pub fn average_fidelity_from(
    a_out: &QuantumState,
    b_out: &QuantumState,
    x_out: Option<&QuantumState>,
    ideal_a: usize,
    ideal_b: usize,
    points: usize,
) -> Result<f64> {
    match (a_out, b_out) {
        (QuantumState::Ket(pa), QuantumState::Ket(pb)) => {
            let (aa, ab) = (pa[ideal_a], pa[ideal_b]);
            let (ba, bb) = (pb[ideal_a], pb[ideal_b]);
            trapezoid_theta(points, |th| {
                let (s, co) = (0.5 * th).sin_cos();
                // φ = cos|U a⟩ + sin|U b⟩, ψ = cos ψ_a + sin ψ_b.
                (aa * co * co + ba * co * s + ab * s * co + bb * s * s).norm_sqr()
            })
        }
        _ => {
            let x = x_out.ok_or_else(|| Error::InvalidState("mixed outputs need the superposition run".into()))?;
            let (ra, rb, rx) = (a_out.to_density(), b_out.to_density(), x.to_density());
            let idx = [ideal_a, ideal_b];
            let sub = |m: &CMatrix| [[m[(idx[0], idx[0])], m[(idx[0], idx[1])]], [m[(idx[1], idx[0])], m[(idx[1], idx[1])]]];
            let (sa, sb, sx) = (sub(&ra), sub(&rb), sub(&rx));
            trapezoid_theta(points, |th| {
                let (s, co) = (0.5 * th).sin_cos();
                let phi = [co, s];
                let mut f = C64::default();
                for i in 0..2 {
                    for j in 0..2 {
                        let cross = sx[i][j] * 2.0 - sa[i][j] - sb[i][j];
                        let rho = sa[i][j] * (co * co) + sb[i][j] * (s * s) + cross * (co * s);
                        f += rho * (phi[i] * phi[j]);
                    }
                }
                f.re
            })
        }
    }
}

fn comp_index(space: &HilbertSpace, n: usize, k: usize) -> usize {
    space.index_of(&computational_labels(n)[k]).expect("computational label")
}

/// Truth table, per-step tables, fidelities and phases.
pub fn truth_table(protocol: &GateProtocol) -> Result<GateReport> {
    let n = protocol.n;
    let space = protocol.space();
    let comp = computational_labels(n);
    let d = comp.len();
    let jumps = protocol.jumps()?;
    let density = protocol.dissipation;

    let inputs: Vec<QuantumState> = comp
        .iter()
        .map(|l| QuantumState::basis(&space, l))
        .collect::<Result<_>>()?;
    let runs: Vec<InputRun> = inputs
        .par_iter()
        .map(|s| run_input(protocol, &space, s, &jumps, density))
        .collect::<Result<_>>()?;

    // Phases need amplitudes, so mixed runs get closed-system companions.
    let kets: Vec<QuantumState> = if density {
        inputs
            .par_iter()
            .map(|s| propagate(protocol, &protocol.steps(), s, &[], false, |_, _| {}).map(|r| r.0))
            .collect::<Result<_>>()?
    } else {
        runs.iter().map(|r| r.final_state.clone()).collect()
    };

    let mut truth = Vec::with_capacity(d);
    let mut leakage = Vec::with_capacity(d);
    let mut input_fidelities = Vec::with_capacity(d);
    let mut phases = Vec::with_capacity(d);
    for (k, run) in runs.iter().enumerate() {
        let row = populations_on(&space, &run.final_state, &comp);
        let total = run.final_state.norm_or_trace();
        let total = if run.final_state.is_pure_ket() { total * total } else { total };
        leakage.push(total - row.iter().sum::<f64>());
        let ideal = comp_index(&space, n, ideal_output(n, k));
        input_fidelities.push(run.final_state.population_at(ideal));
        let QuantumState::Ket(psi) = &kets[k] else {
            unreachable!("closed-system runs return kets")
        };
        phases.push(psi[ideal].arg());
        truth.push(row);
    }
    let step_tables = (0..3)
        .map(|s| runs.iter().map(|r| r.step_rows[s].clone()).collect())
        .collect();

    let (ia, ib) = (d - 2, d - 1);
    let (ideal_a, ideal_b) = (comp_index(&space, n, ia), comp_index(&space, n, ib));
    let x_out = if density {
        let mut v = CVector::zeros(space.dim());
        v[ideal_a] = c(std::f64::consts::FRAC_1_SQRT_2);
        v[ideal_b] = c(std::f64::consts::FRAC_1_SQRT_2);
        Some(propagate(protocol, &protocol.steps(), &QuantumState::ket(v)?, &jumps, true, |_, _| {})?.0)
    } else {
        None
    };
    // The ideal gate swaps a and b.
    let f_av = average_fidelity_from(
        &runs[ia].final_state,
        &runs[ib].final_state,
        x_out.as_ref(),
        ideal_b,
        ideal_a,
        protocol.theta_points,
    )?;

    Ok(GateReport {
        n,
        model: protocol.model,
        dressing: protocol.dressing.name().to_string(),
        dissipation: protocol.dissipation,
        tau: protocol.pulse.tau,
        step_duration: protocol.step_duration(),
        basis: comp.iter().map(|l| crate::qcore::format_labels(l)).collect(),
        truth_table: truth,
        step_basis: step_labels(n).iter().map(|l| crate::qcore::format_labels(l)).collect(),
        step_tables,
        leakage,
        input_fidelities,
        phases,
        average_fidelity: f_av,
        theta_points: protocol.theta_points,
        trajectories: runs.into_iter().map(|r| r.trajectory).collect(),
    })
}

/// Average gate fidelity on a `points`-sample θ grid.
pub fn average_fidelity(protocol: &GateProtocol, points: usize) -> Result<f64> {
    let n = protocol.n;
    let space = protocol.space();
    let d = 1usize << n;
    let (ia, ib) = (comp_index(&space, n, d - 2), comp_index(&space, n, d - 1));
    let jumps = protocol.jumps()?;
    let density = protocol.dissipation;
    let mut inputs = vec![
        QuantumState::basis_index(space.dim(), ia),
        QuantumState::basis_index(space.dim(), ib),
    ];
    if density {
        let mut v = CVector::zeros(space.dim());
        v[ia] = c(std::f64::consts::FRAC_1_SQRT_2);
        v[ib] = c(std::f64::consts::FRAC_1_SQRT_2);
        inputs.push(QuantumState::ket(v)?);
    }
    let outs: Vec<QuantumState> = inputs
        .par_iter()
        .map(|s| propagate(protocol, &protocol.steps(), s, &jumps, density, |_, _| {}).map(|r| r.0))
        .collect::<Result<_>>()?;
    average_fidelity_from(&outs[0], &outs[1], outs.get(2), ib, ia, points)
}

/// One point on the `{|In⟩, |r…r⟩, |Out⟩}` sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    pub t: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `a² + b² + c² < 0.9`.
    pub leaky: bool,
}

/// Projects a trajectory onto the Λ states of `step`. Three-dimensional
/// trajectories are read in the `(In, R, Out)` order.
pub fn sphere_path(trajectory: &Trajectory, n: usize, step: StepSpec) -> Result<Vec<SpherePoint>> {
    let dim = trajectory.final_state().dim();
    let (i_in, i_r, i_out) = if dim == 3 {
        (0, 1, 2)
    } else {
        let reg = Register::new(n, &vec![0.0; crate::hammodel::pair_count(n)], step)?;
        if reg.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: reg.dim(),
                found: dim,
            });
        }
        reg.lambda_states()
    };
    Ok(trajectory
        .times
        .iter()
        .zip(&trajectory.states)
        .map(|(&t, s)| {
            let (a, b, c) = (
                s.population_at(i_in).max(0.0).sqrt(),
                s.population_at(i_r).max(0.0).sqrt(),
                s.population_at(i_out).max(0.0).sqrt(),
            );
            SpherePoint {
                t,
                a,
                b,
                c,
                leaky: a * a + b * b + c * c < 0.9,
            }
        })
        .collect())
}
