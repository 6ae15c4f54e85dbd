//! Full and effective anti-blockade Hamiltonians, spin-1 frames, the RAB
//! condition and Lindblad jump operators.
//!
//! Each register has `n − 1` control atoms `{0, 1, r}` and one target atom
//! `{0, 1, m, r}`. The control laser `Ω_c` drives `|1⟩ ↔ |r⟩` on every control
//! atom while `Ω_p` and `Ω_s` drive `|In⟩ ↔ |r⟩` and `|Out⟩ ↔ |r⟩` on the
//! target. All drives oscillate at the common detuning `Δ`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulsegen::{
    AdiabaticAngles, ControlCorrections, DressedAngles, DressedSchedule,
};
use crate::qcore::{c, CMatrix, CVector, HilbertSpace, Level, Operator, C64, I};

/// Source of a time-dependent Hamiltonian matrix.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;

    /// Writes `H(t)` into `h`, overwriting every entry.
    fn fill(&self, t: f64, h: &mut CMatrix) -> Result<()>;

    /// Phases `φ_j(t)` of a rotating frame in which `fill` is expressed; the
    /// lab-frame amplitude is `e^{−iφ_j} ψ_j`. `None` means the lab frame.
    fn frame_phases(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }

    /// Largest step that resolves the fastest explicit oscillation.
    fn max_step_hint(&self, _window: (f64, f64)) -> Option<f64> {
        None
    }

    fn matrix_at(&self, t: f64) -> Result<CMatrix> {
        let mut h = CMatrix::zeros(self.dim(), self.dim());
        self.fill(t, &mut h)?;
        Ok(h)
    }
}

/// Time-independent Hamiltonian.
#[derive(Clone, Debug)]
pub struct StaticHamiltonian(CMatrix);

impl StaticHamiltonian {
    pub fn new(h: CMatrix) -> Self {
        Self(h)
    }
}

impl Hamiltonian for StaticHamiltonian {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn fill(&self, _t: f64, h: &mut CMatrix) -> Result<()> {
        h.copy_from(&self.0);
        Ok(())
    }
}

/// Hamiltonian given by a closure that overwrites the matrix.
pub struct FnHamiltonian<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &mut CMatrix) + Send + Sync> FnHamiltonian<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &mut CMatrix) + Send + Sync> Hamiltonian for FnHamiltonian<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn fill(&self, t: f64, h: &mut CMatrix) -> Result<()> {
        (self.f)(t, h);
        Ok(())
    }
}

/// One step of the three-step protocol: the target levels playing `|In⟩` and
/// `|Out⟩`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSpec {
    pub index: u8,
    pub in_level: Level,
    pub out_level: Level,
}

impl StepSpec {
    /// Step 1 moves `1 → m`, step 2 `0 → 1`, step 3 `m → 0`.
    pub fn new(index: u8) -> Result<Self> {
        let (in_level, out_level) = match index {
            1 => (Level::One, Level::M),
            2 => (Level::Zero, Level::One),
            3 => (Level::M, Level::Zero),
            _ => return Err(Error::param("step", format!("unknown step {index}"))),
        };
        Ok(Self {
            index,
            in_level,
            out_level,
        })
    }

    pub fn protocol() -> [StepSpec; 3] {
        [1, 2, 3].map(|k| StepSpec::new(k).expect("steps 1..=3 exist"))
    }
}

/// Physical drive parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    pub n: usize,
    pub omega_c: f64,
    pub omega_p: f64,
    pub omega_s: f64,
    pub delta: f64,
    /// Pair interactions `V_ij` for `i < j`, in lexicographic pair order.
    pub interactions: Vec<f64>,
    pub gamma: f64,
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Atom pairs `(i, j)`, `i < j`, in the order used for `interactions`.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .collect()
}

impl DriveParams {
    pub fn new(
        n: usize,
        omega_c: f64,
        omega_p: f64,
        omega_s: f64,
        delta: f64,
        interactions: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let p = Self {
            n,
            omega_c,
            omega_p,
            omega_s,
            delta,
            interactions,
            gamma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks hard constraints and logs the large-detuning diagnostic.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("n", "need at least two atoms"));
        }
        if self.interactions.len() != pair_count(self.n) {
            return Err(Error::param(
                "interactions",
                format!(
                    "expected {} pair couplings for n = {}, got {}",
                    pair_count(self.n),
                    self.n,
                    self.interactions.len()
                ),
            ));
        }
        if let Some(v) = self.interactions.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::param("interactions", format!("V must be ≥ 0, got {v}")));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::param("gamma", format!("must be ≥ 0, got {}", self.gamma)));
        }
        for w in self.warnings() {
            log::warn!("{w}");
        }
        Ok(())
    }

    /// Soft diagnostics, currently the `Δ ≥ 5·max Ω` condition.
    pub fn warnings(&self) -> Vec<String> {
        let max = self.omega_c.abs().max(self.omega_p.abs()).max(self.omega_s.abs());
        if self.delta < 5.0 * max {
            vec![format!(
                "detuning {:e} rad/s is below 5x the largest Rabi frequency {:e} rad/s",
                self.delta, max
            )]
        } else {
            Vec::new()
        }
    }

    pub fn v_total(&self) -> f64 {
        self.interactions.iter().sum()
    }
}

/// `n!/2ⁿ`.
pub fn factorial_ratio(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64 / 2.0)
}

/// `n!·Ω_c^{n−1}/(2ⁿΔ^{n−1})`, the factor turning `Ω_p` into `Ω_p′`.
pub fn coupling_prefactor(n: usize, omega_c: f64, delta: f64) -> f64 {
    factorial_ratio(n) * (omega_c / delta).powi(n as i32 - 1)
}

/// `ΣV − nΔ + ((n−1)Ω_c² + Ω_p² + Ω_s²)/(3Δ)`.
pub fn effective_detuning(
    n: usize,
    v_total: f64,
    delta: f64,
    omega_c: f64,
    omega_p: f64,
    omega_s: f64,
) -> f64 {
    let stark = ((n - 1) as f64 * omega_c * omega_c + omega_p * omega_p + omega_s * omega_s)
        / (3.0 * delta);
    v_total - n as f64 * delta + stark
}

/// Parameters of the three-level effective model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParams {
    pub omega_p: f64,
    pub omega_s: f64,
    pub delta_eff: f64,
    pub alpha: f64,
    pub n: usize,
}

pub fn effective_params(params: &DriveParams) -> Result<EffectiveParams> {
    if !(params.delta > 0.0) {
        return Err(Error::param("delta", format!("must be positive, got {}", params.delta)));
    }
    let k = coupling_prefactor(params.n, params.omega_c, params.delta);
    Ok(EffectiveParams {
        omega_p: k * params.omega_p,
        omega_s: k * params.omega_s,
        delta_eff: effective_detuning(
            params.n,
            params.v_total(),
            params.delta,
            params.omega_c,
            params.omega_p,
            params.omega_s,
        ),
        alpha: params.omega_c / params.delta,
        n: params.n,
    })
}

/// Positive root `Δ` of `(3n − (n−1)α²)Δ² − 3ΣV·Δ − (Ω_p² + Ω_s²) = 0`,
/// which is `Δ_eff = 0` with `Ω_c = αΔ`.
pub fn rab_solve(v_total: f64, omega_p: f64, omega_s: f64, alpha: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", "need at least two atoms"));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::param("alpha", format!("must lie in [0, 1), got {alpha}")));
    }
    if !(v_total >= 0.0) {
        return Err(Error::param("v_total", format!("must be ≥ 0, got {v_total}")));
    }
    let a = 3.0 * n as f64 - (n - 1) as f64 * alpha * alpha;
    let b = 3.0 * v_total;
    let power = omega_p * omega_p + omega_s * omega_s;
    let disc = b * b + 4.0 * a * power;
    let root = (b + disc.sqrt()) / (2.0 * a);
    if !(root > 0.0) || !root.is_finite() {
        return Err(Error::NoPositiveRoot(format!(
            "V = {v_total:e}, Ω_p = {omega_p:e}, Ω_s = {omega_s:e}, α = {alpha}"
        )));
    }
    Ok(root)
}

/// Total interaction that puts `Δ` on the RAB resonance for pulse power
/// `Ω_p² + Ω_s²`: `ΣV = ((3n − (n−1)α²)Δ² − (Ω_p² + Ω_s²))/(3Δ)`.
pub fn rab_interaction(n: usize, delta: f64, alpha: f64, power: f64) -> f64 {
    let a = 3.0 * n as f64 - (n - 1) as f64 * alpha * alpha;
    (a * delta * delta - power) / (3.0 * delta)
}

/// Cumulative `∫Δ dt` on a uniform grid, interpolated with cubic Hermite
/// polynomials using `Δ` as the slope.
#[derive(Clone, Debug)]
struct PhaseTable {
    t0: f64,
    h: f64,
    phi: Vec<f64>,
    rate: Vec<f64>,
}

impl PhaseTable {
    fn build(t0: f64, t1: f64, nodes: usize, f: impl Fn(f64) -> Result<f64>) -> Result<Self> {
        // 4-point Gauss–Legendre on [−1, 1].
        const X: [f64; 4] = [
            -0.861_136_311_594_052_6,
            -0.339_981_043_584_856_3,
            0.339_981_043_584_856_3,
            0.861_136_311_594_052_6,
        ];
        const W: [f64; 4] = [
            0.347_854_845_137_453_9,
            0.652_145_154_862_546_1,
            0.652_145_154_862_546_1,
            0.347_854_845_137_453_9,
        ];
        let h = (t1 - t0) / (nodes - 1) as f64;
        let mut phi = Vec::with_capacity(nodes);
        let mut rate = Vec::with_capacity(nodes);
        let mut acc = 0.0;
        for i in 0..nodes {
            let a = t0 + h * i as f64;
            rate.push(f(a)?);
            phi.push(acc);
            if i + 1 < nodes {
                let mid = a + 0.5 * h;
                let mut s = 0.0;
                for (x, w) in X.iter().zip(W) {
                    s += w * f(mid + 0.5 * h * x)?;
                }
                acc += 0.5 * h * s;
            }
        }
        Ok(Self { t0, h, phi, rate })
    }

    fn eval(&self, t: f64) -> f64 {
        let last = self.phi.len() - 1;
        let x = (t - self.t0) / self.h;
        if x <= 0.0 {
            return self.phi[0] + self.rate[0] * (t - self.t0);
        }
        if x >= last as f64 {
            let t_last = self.t0 + self.h * last as f64;
            return self.phi[last] + self.rate[last] * (t - t_last);
        }
        let i = (x.floor() as usize).min(last - 1);
        let s = x - i as f64;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.phi[i]
            + h10 * self.h * self.rate[i]
            + h01 * self.phi[i + 1]
            + h11 * self.h * self.rate[i + 1]
    }

    fn total(&self) -> f64 {
        *self.phi.last().unwrap()
    }

    fn max_rate(&self) -> f64 {
        self.rate.iter().copied().fold(0.0, f64::max)
    }
}

const PHASE_NODES: usize = 4097;

/// Physical drive amplitudes at one instant, with the matching effective
/// quantities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveSample {
    pub t: f64,
    pub omega_c: f64,
    pub omega_p: f64,
    pub omega_s: f64,
    pub delta: f64,
    /// Accumulated drive phase `φ(t)`; the lab-frame drives carry `cos φ`.
    pub phase: f64,
    pub eff_p: f64,
    pub eff_s: f64,
    pub delta_eff: f64,
}

/// Physical drives realising a dressed effective schedule.
///
/// The ratio `α = Ω_c/Δ` is held fixed. With `tracking` on, `Δ(t)` follows
/// the instantaneous RAB root so `Δ_eff(t) = 0` throughout; otherwise `Δ` and
/// `Ω_c` stay at their base values.
#[derive(Clone, Debug)]
pub struct DriveSchedule {
    pub n: usize,
    pub alpha: f64,
    pub base_delta: f64,
    pub interactions: Vec<f64>,
    pub schedule: DressedSchedule,
    pub tracking: bool,
    /// Relative amplitude of the applied `Ω_p`, `Ω_s` against the design;
    /// `Δ(t)` still tracks the designed power.
    pub amplitude_scale: f64,
    phase_offset: f64,
    table: Option<Arc<PhaseTable>>,
}

impl DriveSchedule {
    /// `interactions = None` chooses equal pair couplings that satisfy the RAB
    /// condition at `base_delta` for the undressed pulse power.
    pub fn new(
        n: usize,
        alpha: f64,
        base_delta: f64,
        interactions: Option<Vec<f64>>,
        schedule: DressedSchedule,
        tracking: bool,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::param("n", "need at least two atoms"));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
        }
        if !(base_delta > 0.0) {
            return Err(Error::param("delta", format!("must be positive, got {base_delta}")));
        }
        let ratio = factorial_ratio(n) * alpha.powi(n as i32 - 1);
        let interactions = match interactions {
            Some(v) => v,
            None => {
                let omega = schedule.pulse.amplitude / ratio;
                let total = rab_interaction(n, base_delta, alpha, omega * omega);
                vec![total / pair_count(n) as f64; pair_count(n)]
            }
        };
        if interactions.len() != pair_count(n) {
            return Err(Error::param(
                "interactions",
                format!("expected {} pair couplings, got {}", pair_count(n), interactions.len()),
            ));
        }
        if let Some(v) = interactions.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::param("interactions", format!("V must be ≥ 0, got {v:e}")));
        }
        let mut s = Self {
            n,
            alpha,
            base_delta,
            interactions,
            schedule,
            tracking,
            amplitude_scale: 1.0,
            phase_offset: 0.0,
            table: None,
        };
        if tracking {
            let p = s.schedule.pulse;
            let table = PhaseTable::build(p.t_start, p.t_end, PHASE_NODES, |t| s.detuning(t))?;
            s.table = Some(Arc::new(table));
        }
        Ok(s)
    }

    pub fn with_amplitude_scale(mut self, scale: f64) -> Self {
        self.amplitude_scale = scale;
        self
    }

    /// Shifts the drive phase by `offset` radians.
    pub fn with_phase_offset(mut self, offset: f64) -> Self {
        self.phase_offset = offset;
        self
    }

    pub fn window(&self) -> (f64, f64) {
        (self.schedule.pulse.t_start, self.schedule.pulse.t_end)
    }

    pub fn v_total(&self) -> f64 {
        self.interactions.iter().sum()
    }

    fn ratio(&self) -> f64 {
        factorial_ratio(self.n) * self.alpha.powi(self.n as i32 - 1)
    }

    fn detuning(&self, t: f64) -> Result<f64> {
        if !self.tracking {
            return Ok(self.base_delta);
        }
        let (ep, es) = self.schedule.effective_pulses(t)?;
        let r = self.ratio();
        rab_solve(self.v_total(), ep / r, es / r, self.alpha, self.n)
    }

    /// Phase accumulated over the whole window.
    pub fn total_phase(&self) -> f64 {
        match &self.table {
            Some(tab) => tab.total(),
            None => self.base_delta * self.schedule.pulse.duration(),
        }
    }

    pub fn max_detuning(&self) -> f64 {
        match &self.table {
            Some(tab) => tab.max_rate(),
            None => self.base_delta,
        }
    }

    pub fn at(&self, t: f64) -> Result<DriveSample> {
        let (eff_p, eff_s) = self.schedule.effective_pulses(t)?;
        let r = self.ratio();
        let (omega_p, omega_s) = (eff_p / r, eff_s / r);
        let delta = if self.tracking {
            rab_solve(self.v_total(), omega_p, omega_s, self.alpha, self.n)?
        } else {
            self.base_delta
        };
        let omega_c = self.alpha * delta;
        let k = self.amplitude_scale;
        let (eff_p, eff_s, omega_p, omega_s) = (k * eff_p, k * eff_s, k * omega_p, k * omega_s);
        let rel = match &self.table {
            Some(tab) => tab.eval(t),
            None => self.base_delta * (t - self.schedule.pulse.t_start),
        };
        Ok(DriveSample {
            t,
            omega_c,
            omega_p,
            omega_s,
            delta,
            phase: self.phase_offset + rel,
            eff_p,
            eff_s,
            delta_eff: effective_detuning(self.n, self.v_total(), delta, omega_c, omega_p, omega_s),
        })
    }
}

/// Where drive amplitudes come from.
#[derive(Clone, Debug)]
pub enum DriveSource {
    /// Constant amplitudes with phase `Δ·t`.
    Constant(DriveParams),
    Scheduled(DriveSchedule),
}

impl DriveSource {
    pub fn n(&self) -> usize {
        match self {
            DriveSource::Constant(p) => p.n,
            DriveSource::Scheduled(s) => s.n,
        }
    }

    pub fn interactions(&self) -> &[f64] {
        match self {
            DriveSource::Constant(p) => &p.interactions,
            DriveSource::Scheduled(s) => &s.interactions,
        }
    }

    pub fn sample(&self, t: f64) -> Result<DriveSample> {
        match self {
            DriveSource::Scheduled(s) => s.at(t),
            DriveSource::Constant(p) => {
                let k = coupling_prefactor(p.n, p.omega_c, p.delta);
                Ok(DriveSample {
                    t,
                    omega_c: p.omega_c,
                    omega_p: p.omega_p,
                    omega_s: p.omega_s,
                    delta: p.delta,
                    phase: p.delta * t,
                    eff_p: k * p.omega_p,
                    eff_s: k * p.omega_s,
                    delta_eff: effective_detuning(
                        p.n,
                        p.v_total(),
                        p.delta,
                        p.omega_c,
                        p.omega_p,
                        p.omega_s,
                    ),
                })
            }
        }
    }

    fn max_detuning(&self) -> f64 {
        match self {
            DriveSource::Constant(p) => p.delta,
            DriveSource::Scheduled(s) => s.max_detuning(),
        }
    }
}

/// Which drive couples a transition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DriveKind {
    Control,
    Probe,
    Stokes,
}

/// A driven transition `lower → upper` that adds one Rydberg excitation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Coupling {
    pub upper: usize,
    pub lower: usize,
    pub kind: DriveKind,
}

/// Basis bookkeeping shared by the full and effective models.
#[derive(Clone, Debug)]
pub struct Register {
    pub space: HilbertSpace,
    pub step: StepSpec,
    pub couplings: Vec<Coupling>,
    /// Interaction energy `Σ V_ij` over Rydberg pairs, per basis state.
    pub energies: Vec<f64>,
    /// Number of atoms in `|r⟩`, per basis state.
    pub excitations: Vec<u32>,
    by_upper: Vec<Vec<usize>>,
    by_lower: Vec<Vec<usize>>,
}

impl Register {
    pub fn new(n: usize, interactions: &[f64], step: StepSpec) -> Result<Self> {
        let space = HilbertSpace::rydberg_register(n)?;
        if interactions.len() != pair_count(n) {
            return Err(Error::param("interactions", "wrong number of pair couplings"));
        }
        let dim = space.dim();
        let target = n - 1;
        let mut couplings = Vec::new();
        let mut energies = vec![0.0; dim];
        let mut excitations = vec![0; dim];
        for idx in 0..dim {
            let labels = space.labels_of(idx);
            excitations[idx] = labels.iter().filter(|l| **l == Level::R).count() as u32;
            for (&(i, j), v) in pairs(n).iter().zip(interactions) {
                if labels[i] == Level::R && labels[j] == Level::R {
                    energies[idx] += v;
                }
            }
            for (atom, &level) in labels.iter().enumerate() {
                let kind = if atom < target {
                    (level == Level::One).then_some(DriveKind::Control)
                } else if level == step.in_level {
                    Some(DriveKind::Probe)
                } else if level == step.out_level {
                    Some(DriveKind::Stokes)
                } else {
                    None
                };
                if let Some(kind) = kind {
                    let mut up = labels.clone();
                    up[atom] = Level::R;
                    couplings.push(Coupling {
                        upper: space.index_of(&up)?,
                        lower: idx,
                        kind,
                    });
                }
            }
        }
        let mut by_upper = vec![Vec::new(); dim];
        let mut by_lower = vec![Vec::new(); dim];
        for (k, cp) in couplings.iter().enumerate() {
            by_upper[cp.upper].push(k);
            by_lower[cp.lower].push(k);
        }
        Ok(Self {
            space,
            step,
            couplings,
            energies,
            excitations,
            by_upper,
            by_lower,
        })
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// `|1…1 In⟩`, `|r…r⟩` and `|1…1 Out⟩`.
    pub fn lambda_states(&self) -> (usize, usize, usize) {
        let n = self.space.n_atoms();
        let mut l = vec![Level::One; n];
        l[n - 1] = self.step.in_level;
        let a = self.space.index_of(&l).expect("In state exists");
        l[n - 1] = self.step.out_level;
        let b = self.space.index_of(&l).expect("Out state exists");
        let r = self.space.index_of(&vec![Level::R; n]).expect("all-Rydberg state exists");
        (a, r, b)
    }
}

fn amplitude(kind: DriveKind, s: &DriveSample) -> f64 {
    match kind {
        DriveKind::Control => s.omega_c,
        DriveKind::Probe => s.omega_p,
        DriveKind::Stokes => s.omega_s,
    }
}

/// Drive form of the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriveForm {
    /// Literal couplings `Ω cos φ(t)` with only interaction energies on the
    /// diagonal.
    Cosine,
    /// Couplings `Ω/2` in the frame rotating with `φ(t)` per Rydberg
    /// excitation, plus the second-order shift of the dropped sideband.
    RotatingWave,
}

/// Full register Hamiltonian for one protocol step.
#[derive(Clone, Debug)]
pub struct FullModel {
    pub register: Register,
    pub drive: DriveSource,
    pub form: DriveForm,
    /// Include the counter-rotating correction in the rotating-wave form.
    pub sideband_correction: bool,
}

/// Full Hamiltonian with constant amplitudes.
pub fn build_full_hamiltonian(params: &DriveParams, step: StepSpec, form: DriveForm) -> Result<FullModel> {
    params.validate()?;
    FullModel::new(DriveSource::Constant(params.clone()), step, form)
}

impl FullModel {
    pub fn new(drive: DriveSource, step: StepSpec, form: DriveForm) -> Result<Self> {
        let register = Register::new(drive.n(), drive.interactions(), step)?;
        Ok(Self {
            register,
            drive,
            form,
            sideband_correction: true,
        })
    }

    pub fn without_sideband_correction(mut self) -> Self {
        self.sideband_correction = false;
        self
    }

    fn add_sideband_shift(&self, s: &DriveSample, h: &mut CMatrix) {
        let reg = &self.register;
        let e = &reg.energies;
        let d = s.delta;
        let g = |k: usize| 0.5 * amplitude(reg.couplings[k].kind, s);
        // Lower states a, c coupled through a shared upper state b.
        for (b, list) in reg.by_upper.iter().enumerate() {
            for &k1 in list {
                for &k2 in list {
                    let (a, cc) = (reg.couplings[k1].lower, reg.couplings[k2].lower);
                    let w = 0.5 * (1.0 / (e[cc] - e[b] - d) + 1.0 / (e[a] - e[b] - d));
                    h[(a, cc)] += c(g(k1) * g(k2) * w);
                }
            }
        }
        // Upper states a, c coupled through a shared lower state b.
        for (b, list) in reg.by_lower.iter().enumerate() {
            for &k1 in list {
                for &k2 in list {
                    let (a, cc) = (reg.couplings[k1].upper, reg.couplings[k2].upper);
                    let w = 0.5 * (1.0 / (e[cc] - e[b] + d) + 1.0 / (e[a] - e[b] + d));
                    h[(a, cc)] += c(g(k1) * g(k2) * w);
                }
            }
        }
    }
}

impl Hamiltonian for FullModel {
    fn dim(&self) -> usize {
        self.register.dim()
    }

    fn fill(&self, t: f64, h: &mut CMatrix) -> Result<()> {
        let s = self.drive.sample(t)?;
        let reg = &self.register;
        h.fill(C64::default());
        match self.form {
            DriveForm::Cosine => {
                let cs = s.phase.cos();
                for cp in &reg.couplings {
                    let v = c(amplitude(cp.kind, &s) * cs);
                    h[(cp.upper, cp.lower)] += v;
                    h[(cp.lower, cp.upper)] += v;
                }
                for (j, e) in reg.energies.iter().enumerate() {
                    h[(j, j)] += c(*e);
                }
            }
            DriveForm::RotatingWave => {
                for cp in &reg.couplings {
                    let v = c(0.5 * amplitude(cp.kind, &s));
                    h[(cp.upper, cp.lower)] += v;
                    h[(cp.lower, cp.upper)] += v;
                }
                for j in 0..reg.dim() {
                    h[(j, j)] += c(reg.energies[j] - reg.excitations[j] as f64 * s.delta);
                }
                if self.sideband_correction {
                    self.add_sideband_shift(&s, h);
                }
            }
        }
        Ok(())
    }

    fn frame_phases(&self, t: f64) -> Option<Vec<f64>> {
        match self.form {
            DriveForm::Cosine => None,
            DriveForm::RotatingWave => {
                let phase = self.drive.sample(t).ok()?.phase;
                Some(
                    self.register
                        .excitations
                        .iter()
                        .map(|&k| k as f64 * phase)
                        .collect(),
                )
            }
        }
    }

    fn max_step_hint(&self, _window: (f64, f64)) -> Option<f64> {
        match self.form {
            DriveForm::Cosine => Some(2.0 * PI / (20.0 * self.drive.max_detuning())),
            DriveForm::RotatingWave => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Layout {
    ThreeLevel,
    Embedded { dim: usize, inp: usize, r: usize, out: usize },
}

/// Effective Λ model `Ω_p′|In⟩⟨R| + Ω_s′|Out⟩⟨R| + H.c. + Δ_eff|R⟩⟨R|`.
#[derive(Clone, Debug)]
pub struct EffectiveModel {
    pub drive: DriveSource,
    layout: Layout,
}

impl EffectiveModel {
    /// Three-level model in the basis `(In, R, Out)`.
    pub fn three_level(drive: DriveSource) -> Self {
        Self {
            drive,
            layout: Layout::ThreeLevel,
        }
    }

    /// The same Λ system embedded in the full register space; every other
    /// basis state is left undriven.
    pub fn embedded(drive: DriveSource, step: StepSpec) -> Result<Self> {
        let reg = Register::new(drive.n(), drive.interactions(), step)?;
        let (inp, r, out) = reg.lambda_states();
        Ok(Self {
            drive,
            layout: Layout::Embedded {
                dim: reg.dim(),
                inp,
                r,
                out,
            },
        })
    }
}

impl Hamiltonian for EffectiveModel {
    fn dim(&self) -> usize {
        match self.layout {
            Layout::ThreeLevel => 3,
            Layout::Embedded { dim, .. } => dim,
        }
    }

    fn fill(&self, t: f64, h: &mut CMatrix) -> Result<()> {
        let s = self.drive.sample(t)?;
        let (inp, r, out) = match self.layout {
            Layout::ThreeLevel => (0, 1, 2),
            Layout::Embedded { inp, r, out, .. } => (inp, r, out),
        };
        h.fill(C64::default());
        h[(inp, r)] = c(s.eff_p);
        h[(r, inp)] = c(s.eff_p);
        h[(out, r)] = c(s.eff_s);
        h[(r, out)] = c(s.eff_s);
        h[(r, r)] = c(s.delta_eff);
        Ok(())
    }
}

/// Static 3×3 effective Hamiltonian in the basis `(In, R, Out)`.
pub fn build_effective_hamiltonian(eff: &EffectiveParams, _step: StepSpec) -> Operator {
    let mut h = CMatrix::zeros(3, 3);
    h[(0, 1)] = c(eff.omega_p);
    h[(1, 0)] = c(eff.omega_p);
    h[(2, 1)] = c(eff.omega_s);
    h[(1, 2)] = c(eff.omega_s);
    h[(1, 1)] = c(eff.delta_eff);
    Operator::hermitian(h).expect("real symmetric matrix")
}

/// Jump operators `√(γ/2)|j⟩⟨r|` on each control and `√(γ/3)|k⟩⟨r|` on the
/// target, embedded in the register space.
pub fn lindblad_ops(params: &DriveParams) -> Result<Vec<Operator>> {
    if !(params.gamma >= 0.0) {
        return Err(Error::param("gamma", "must be ≥ 0"));
    }
    let space = HilbertSpace::rydberg_register(params.n)?;
    lindblad_ops_for(&space, params.gamma)
}

pub fn lindblad_ops_for(space: &HilbertSpace, gamma: f64) -> Result<Vec<Operator>> {
    let n = space.n_atoms();
    let mut ops = Vec::new();
    for atom in 0..n {
        let levels = space.levels(atom);
        let sinks: Vec<Level> = levels.iter().copied().filter(|l| *l != Level::R).collect();
        let rate = gamma / sinks.len() as f64;
        for k in sinks {
            let local = Operator::transition(levels, k, Level::R)?.scaled(rate.sqrt());
            ops.push(crate::qcore::tensor_embed(&local, atom, space)?);
        }
    }
    Ok(ops)
}

/// Spin-1 matrices `(M_x, M_y, M_z)` in the basis `(+, 0, −)`.
pub fn spin1_matrices() -> [CMatrix; 3] {
    let s = FRAC_1_SQRT_2;
    let z = C64::default();
    let mx = CMatrix::from_row_slice(3, 3, &[z, c(-s), z, c(-s), z, c(s), z, c(s), z]);
    let is = C64::new(0.0, s);
    let my = CMatrix::from_row_slice(3, 3, &[z, is, z, -is, z, -is, z, is, z]);
    let mz = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0), z, c(-1.0)]));
    [mx, my, mz]
}

/// `U_ad(θ)`, mapping `(In, R, Out)` amplitudes to `(φ₊, φ₀, φ₋)`.
pub fn adiabatic_frame(theta: f64) -> CMatrix {
    let (s, co) = theta.sin_cos();
    CMatrix::from_row_slice(
        3,
        3,
        &[s, -1.0, -co, SQRT_2 * co, 0.0, SQRT_2 * s, s, 1.0, -co].map(|x| c(x * FRAC_1_SQRT_2)),
    )
}

/// `dU_ad/dt` for mixing-angle rate `θ̇`.
pub fn adiabatic_frame_rate(theta: f64, theta_dot: f64) -> CMatrix {
    let (s, co) = theta.sin_cos();
    CMatrix::from_row_slice(
        3,
        3,
        &[co, 0.0, s, -SQRT_2 * s, 0.0, SQRT_2 * co, co, 0.0, s]
            .map(|x| c(x * FRAC_1_SQRT_2 * theta_dot)),
    )
}

fn exp_i_mz(angle: f64) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_vec(vec![
        C64::from_polar(1.0, angle),
        c(1.0),
        C64::from_polar(1.0, -angle),
    ]))
}

fn exp_i_mx(angle: f64) -> CMatrix {
    let [mx, _, _] = spin1_matrices();
    (mx * (I * angle)).exp()
}

/// `V = exp(iηM_z) exp(iμM_x) exp(iξM_z)`.
pub fn dressing_frame(mu: f64, xi: f64, eta: f64) -> CMatrix {
    exp_i_mz(eta) * exp_i_mx(mu) * exp_i_mz(xi)
}

/// `dV/dt` from the product rule.
pub fn dressing_frame_rate(d: &DressedAngles) -> CMatrix {
    let [mx, _, mz] = spin1_matrices();
    let (a, b, cz) = (exp_i_mz(d.eta), exp_i_mx(d.mu), exp_i_mz(d.xi));
    let v = &a * &b * &cz;
    &mz * (I * d.eta_dot) * &v + &a * (&mx * (I * d.mu_dot)) * &b * &cz + &v * (&mz * (I * d.xi_dot))
}

/// Spin-1 operators with both frames evaluated at given angles.
#[derive(Clone, Debug)]
pub struct FrameSet {
    pub mx: CMatrix,
    pub my: CMatrix,
    pub mz: CMatrix,
    pub u_ad: CMatrix,
    pub v: CMatrix,
}

pub fn spin1_frames(theta: f64, mu: f64, xi: f64, eta: f64) -> FrameSet {
    let [mx, my, mz] = spin1_matrices();
    FrameSet {
        mx,
        my,
        mz,
        u_ad: adiabatic_frame(theta),
        v: dressing_frame(mu, xi, eta),
    }
}

/// `H_c = U_ad†(g_x M_x + g_z M_z)U_ad` in the `(In, R, Out)` basis.
pub fn control_hamiltonian(theta: f64, gx: f64, gz: f64) -> CMatrix {
    let [mx, _, mz] = spin1_matrices();
    let u = adiabatic_frame(theta);
    u.adjoint() * (mx * c(gx) + mz * c(gz)) * u
}

/// Closed-form dressed-frame Hamiltonian.
#[derive(Clone, Debug)]
pub struct DressedFrameHamiltonian {
    /// Full 3×3 matrix in the `(ϕ₊, ϕ₀, ϕ₋)` basis.
    pub matrix: CMatrix,
    /// Coefficient of `σ_z = |ϕ₊⟩⟨ϕ₊| − |ϕ₋⟩⟨ϕ₋|`.
    pub diagonal: f64,
    /// `⟨ϕ₊|H|ϕ₀⟩`; `⟨ϕ₋|H|ϕ₀⟩ = −conj` of it.
    pub coupling: C64,
    /// `(μ̇ sin ξ − θ̇)/(sin μ cos ξ)`, the diagonal once the couplings are
    /// cancelled. `None` where `sin μ cos ξ = 0`.
    pub reduced: Option<f64>,
    /// `sin μ cos ξ = 0` with a nonzero numerator.
    pub singular: bool,
}

impl DressedFrameHamiltonian {
    pub fn max_offdiagonal(&self) -> f64 {
        let m = &self.matrix;
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    worst = worst.max(m[(i, j)].norm());
                }
            }
        }
        worst
    }
}

/// Evaluates `V[(Ω + g_z)M_z + θ̇M_y + g_xM_x]V† + iV̇V†` from its closed form.
pub fn dressed_frame_hamiltonian(
    angles: &AdiabaticAngles,
    dressed: &DressedAngles,
    corr: &ControlCorrections,
) -> DressedFrameHamiltonian {
    let DressedAngles {
        mu,
        mu_dot,
        xi,
        xi_dot,
        eta,
        eta_dot,
    } = *dressed;
    let (sm, cm) = mu.sin_cos();
    let (sx, cx) = xi.sin_cos();
    let om = angles.omega;
    let th_d = angles.theta_dot;
    let ControlCorrections { gx, gz } = *corr;

    let diagonal = gx * sm * sx - eta_dot - th_d * cx * sm + (om + gz - xi_dot) * cm;
    let coupling = C64::from_polar(FRAC_1_SQRT_2, eta)
        * (C64::new(-gx * cx + mu_dot - th_d * sx, -gx * cm * sx + sm * (gz - xi_dot + om) + th_d * cm * cx));

    let z = C64::default();
    let matrix = CMatrix::from_row_slice(
        3,
        3,
        &[
            c(diagonal),
            coupling,
            z,
            coupling.conj(),
            z,
            -coupling,
            z,
            -coupling.conj(),
            c(-diagonal),
        ],
    );
    let denom = sm * cx;
    let numer = mu_dot * sx - th_d;
    let (reduced, singular) = if denom == 0.0 {
        (None, numer != 0.0)
    } else {
        (Some(numer / denom), false)
    };
    DressedFrameHamiltonian {
        matrix,
        diagonal,
        coupling,
        reduced,
        singular,
    }
}

/// The same quantity assembled from matrix exponentials and the product-rule
/// `V̇`, independent of the closed form.
pub fn dressed_frame_hamiltonian_numeric(
    angles: &AdiabaticAngles,
    dressed: &DressedAngles,
    corr: &ControlCorrections,
) -> CMatrix {
    let [mx, my, mz] = spin1_matrices();
    let h_ad = mz * c(angles.omega + corr.gz) + my * c(angles.theta_dot) + mx * c(corr.gx);
    let v = dressing_frame(dressed.mu, dressed.xi, dressed.eta);
    let vd = dressing_frame_rate(dressed);
    &v * h_ad * v.adjoint() + vd * v.adjoint() * I
}

/// `U_ad†(t_f)V†(t_f)·exp(−i∫H_new)·V(t_i)U_ad(t_i)` for a schedule whose
/// corrections cancel the dressed-frame couplings. The diagonal is integrated
/// with `panels` composite 5-point Gauss–Legendre panels.
pub fn dressed_evolution_operator_with<F>(t_i: f64, t_f: f64, panels: usize, eval: F) -> Result<CMatrix>
where
    F: Fn(f64) -> Result<(AdiabaticAngles, DressedAngles, ControlCorrections)>,
{
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683_1,
        0.0,
        0.538_469_310_105_683_1,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    if !(t_f > t_i) || panels == 0 {
        return Err(Error::param("window", "need t_i < t_f and at least one panel"));
    }
    let h = (t_f - t_i) / panels as f64;
    let mut integral = 0.0;
    for p in 0..panels {
        let mid = t_i + h * (p as f64 + 0.5);
        for (x, w) in X.iter().zip(W) {
            let (a, d, g) = eval(mid + 0.5 * h * x)?;
            integral += 0.5 * h * w * dressed_frame_hamiltonian(&a, &d, &g).diagonal;
        }
    }
    let (a0, d0, _) = eval(t_i)?;
    let (a1, d1, _) = eval(t_f)?;
    let prop = exp_i_mz(-integral);
    let start = dressing_frame(d0.mu, d0.xi, d0.eta) * adiabatic_frame(a0.theta);
    let end = dressing_frame(d1.mu, d1.xi, d1.eta) * adiabatic_frame(a1.theta);
    Ok(end.adjoint() * prop * start)
}

/// Evolution operator of a dressed schedule over its window, in `(In, R, Out)`.
pub fn dressed_evolution_operator(schedule: &DressedSchedule, panels: usize) -> Result<CMatrix> {
    let p = schedule.pulse;
    dressed_evolution_operator_with(p.t_start, p.t_end, panels, |t| {
        let s = schedule.at(t)?;
        Ok((s.base, s.dressed, s.corrections))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulsegen::{dressed_angles, control_corrections, Dressing, VitanovPulse, DEFAULT_EDGE};
    use crate::qcore::{hermitian_deviation, unitarity_deviation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TWO_PI: f64 = 2.0 * PI;

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn comm(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    #[test]
    fn spin1_algebra() {
        let [mx, my, mz] = spin1_matrices();
        assert!(max_abs(&(comm(&mx, &my) - &mz * I)) < 1e-12);
        assert!(max_abs(&(comm(&my, &mz) - &mx * I)) < 1e-12);
        assert!(max_abs(&(comm(&mz, &mx) - &my * I)) < 1e-12);
        let eig = nalgebra::SymmetricEigen::new(mz.clone()).eigenvalues;
        let mut e: Vec<f64> = eig.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        assert_eq!(e, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn identity_dressing_frame() {
        assert!(max_abs(&(dressing_frame(0.0, 0.0, 0.0) - CMatrix::identity(3, 3))) < 1e-15);
    }

    #[test]
    fn adiabatic_frame_consistency() {
        // U H_eff U† + i U̇ U† = Ω M_z + θ̇ M_y for the undressed Λ model.
        let [_, my, mz] = spin1_matrices();
        for (th, th_d, om) in [(0.3, 0.7, 1.3), (1.2, -0.4, 2.0), (0.0, 1.0, 0.5)] {
            let (p, s) = (-om * f64::sin(th), om * f64::cos(th));
            let eff = EffectiveParams {
                omega_p: p,
                omega_s: s,
                delta_eff: 0.0,
                alpha: 0.1,
                n: 2,
            };
            let h = build_effective_hamiltonian(&eff, StepSpec::new(1).unwrap()).into_matrix();
            let u = adiabatic_frame(th);
            let ud = adiabatic_frame_rate(th, th_d);
            let lhs = &u * h * u.adjoint() + ud * u.adjoint() * I;
            let rhs = mz.clone() * c(om) + my.clone() * c(th_d);
            assert!(max_abs(&(lhs - rhs)) < 1e-12 * om.max(1.0));
        }
    }

    #[test]
    fn simplest_dressed_frame_is_diagonal() {
        let om = TWO_PI * 1e6;
        let p = VitanovPulse::new(om, 0.2 / om, DEFAULT_EDGE).unwrap();
        for t in p.grid(1000) {
            let a = p.adiabatic(t);
            let d = dressed_angles(&a, &Dressing::Simplest, t);
            let g = control_corrections(&a, &d, t).unwrap();
            let h = dressed_frame_hamiltonian(&a, &d, &g);
            assert!(h.max_offdiagonal() < 1e-10 * om);
            let expected = -a.theta_dot / d.mu.sin();
            assert!((h.diagonal - expected).abs() < 1e-9 * om);
        }
    }

    #[test]
    fn zero_angles_leave_omega_mz() {
        let a = AdiabaticAngles {
            theta: 0.4,
            theta_dot: 0.0,
            theta_ddot: 0.0,
            omega: 2.5,
            omega_dot: 0.0,
        };
        let h = dressed_frame_hamiltonian(&a, &DressedAngles::default(), &ControlCorrections::default());
        let [_, _, mz] = spin1_matrices();
        assert!(max_abs(&(h.matrix - mz * c(2.5))) < 1e-15);
    }

    #[test]
    fn control_hamiltonian_zero_case() {
        assert!(max_abs(&control_hamiltonian(0.7, 0.0, 0.0)) == 0.0);
    }

    #[test]
    fn modified_pulses_equal_base_plus_control() {
        // H_eff(θ_new, Ω_new) = H_eff(θ̃, Ω̃) + H_c(θ̃, g_x, g_z)
        let (th, om, gx, gz) = (0.7, 1.3, 0.4, 0.2);
        let th_new = th - f64::atan2(gx, om + gz);
        let om_new = f64::hypot(om + gz, gx);
        let mk = |t: f64, o: f64| {
            let e = EffectiveParams {
                omega_p: -o * t.sin(),
                omega_s: o * t.cos(),
                delta_eff: 0.0,
                alpha: 0.1,
                n: 2,
            };
            build_effective_hamiltonian(&e, StepSpec::new(1).unwrap()).into_matrix()
        };
        let lhs = mk(th_new, om_new);
        let rhs = mk(th, om) + control_hamiltonian(th, gx, gz);
        assert!(max_abs(&(lhs - rhs)) < 1e-14);
    }

    #[test]
    fn step_table_follows_protocol() {
        let s = StepSpec::protocol();
        assert_eq!((s[0].in_level, s[0].out_level), (Level::One, Level::M));
        assert_eq!((s[1].in_level, s[1].out_level), (Level::Zero, Level::One));
        assert_eq!((s[2].in_level, s[2].out_level), (Level::M, Level::Zero));
        assert!(StepSpec::new(4).is_err());
    }

    #[test]
    fn undriven_full_model_is_interaction_only() {
        let v = TWO_PI * 2e9;
        let params = DriveParams::new(2, 0.0, 0.0, 0.0, TWO_PI * 1e9, vec![v], 0.0).unwrap();
        let m = build_full_hamiltonian(&params, StepSpec::new(1).unwrap(), DriveForm::Cosine).unwrap();
        let h = m.matrix_at(1.234e-7).unwrap();
        let rr = m.register.space.parse_labels("rr").unwrap();
        let irr = m.register.space.index_of(&rr).unwrap();
        for i in 0..12 {
            for j in 0..12 {
                let expected = if i == irr && j == irr { v } else { 0.0 };
                assert_eq!(h[(i, j)], c(expected));
            }
        }
    }

    #[test]
    fn full_model_hermitian_at_random_times() {
        let om = TWO_PI * 30e6;
        let params = DriveParams::new(3, om, 0.6 * om, 0.8 * om, 10.0 * om, vec![1e9, 2e9, 3e9], 0.0).unwrap();
        for form in [DriveForm::Cosine, DriveForm::RotatingWave] {
            for k in [1, 2, 3] {
                let m = build_full_hamiltonian(&params, StepSpec::new(k).unwrap(), form).unwrap();
                for i in 0..1000 {
                    let t = (i as f64 * 0.618_033_988_7).fract() * 1e-6;
                    assert!(hermitian_deviation(&m.matrix_at(t).unwrap()) < 1e-10 * om);
                }
            }
        }
    }

    #[test]
    fn three_atom_step_two_support() {
        // Steps with in = 0, out = 1: controls drive 1↔r, the target drives 0↔r and 1↔r.
        let reg = Register::new(3, &[1.0, 1.0, 1.0], StepSpec::new(2).unwrap()).unwrap();
        let sp = &reg.space;
        let mut seen = std::collections::BTreeSet::new();
        for cp in &reg.couplings {
            let lo = sp.labels_of(cp.lower);
            let up = sp.labels_of(cp.upper);
            let changed: Vec<usize> = (0..3).filter(|&a| lo[a] != up[a]).collect();
            assert_eq!(changed.len(), 1);
            let a = changed[0];
            assert_eq!(up[a], Level::R);
            seen.insert((a, lo[a]));
        }
        let expected: std::collections::BTreeSet<_> = [
            (0, Level::One),
            (1, Level::One),
            (2, Level::Zero),
            (2, Level::One),
        ]
        .into_iter()
        .collect();
        assert_eq!(seen, expected);
        // Each control atom 1↔r appears once per configuration of the other two atoms.
        assert_eq!(reg.couplings.len(), 12 + 12 + 9 + 9);
    }

    #[test]
    fn effective_rates_two_and_three_atoms() {
        let om = TWO_PI * 30e6;
        let p2 = DriveParams::new(2, om, om, om, 15.0 * om, vec![0.0], 0.0).unwrap();
        assert_relative_eq!(effective_params(&p2).unwrap().omega_p, om / 30.0, max_relative = 1e-15);
        let d = 10.0 * om;
        let p3 = DriveParams::new(3, om, 0.7 * om, om, d, vec![0.0; 3], 0.0).unwrap();
        assert_relative_eq!(
            effective_params(&p3).unwrap().omega_p,
            3.0 * om * om * 0.7 * om / (4.0 * d * d),
            max_relative = 1e-12
        );
        assert_eq!(factorial_ratio(3), 0.75);
        assert_eq!(factorial_ratio(2), 0.5);
    }

    #[test]
    fn bare_anti_blockade_resonance() {
        let d = TWO_PI * 1e9;
        let p = DriveParams::new(2, 0.0, 0.0, 0.0, d, vec![2.0 * d], 0.0).unwrap();
        assert_eq!(effective_params(&p).unwrap().delta_eff, 0.0);
        assert!(effective_params(&DriveParams { delta: 0.0, ..p }).is_err());
    }

    #[test]
    fn effective_eigenvalues_on_resonance() {
        let eff = EffectiveParams {
            omega_p: 0.6,
            omega_s: -0.8,
            delta_eff: 0.0,
            alpha: 0.1,
            n: 2,
        };
        let h = build_effective_hamiltonian(&eff, StepSpec::new(1).unwrap());
        assert_eq!(h.matrix()[(0, 2)], c(0.0));
        let mut e: Vec<f64> = nalgebra::SymmetricEigen::new(h.into_matrix()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        assert_relative_eq!(e[0], -1.0, epsilon = 1e-14);
        assert!(e[1].abs() < 1e-14);
        assert_relative_eq!(e[2], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rab_trivial_limits() {
        let v = TWO_PI * 2e9;
        assert_relative_eq!(rab_solve(v, 0.0, 0.0, 0.0, 2).unwrap(), v / 2.0, max_relative = 1e-12);
        let vs = [1.1e9, 2.3e9, 0.7e9];
        let total: f64 = vs.iter().sum();
        assert_relative_eq!(rab_solve(total, 0.0, 0.0, 0.0, 3).unwrap(), total / 3.0, max_relative = 1e-12);
        assert!(matches!(rab_solve(0.0, 0.0, 0.0, 0.1, 2), Err(Error::NoPositiveRoot(_))));
        assert!(rab_solve(1.0, 1.0, 1.0, 1.0, 2).is_err());
    }

    #[test]
    fn rab_reference_case() {
        let v = TWO_PI * 2e9;
        let om = TWO_PI * 30e6;
        let alpha = 1.0 / 15.0;
        let d = rab_solve(v, om, om, alpha, 2).unwrap();
        let res = effective_detuning(2, v, d, alpha * d, om, om);
        assert!(res.abs() < 1e-9 * d);
    }

    #[test]
    fn lindblad_operator_counts_and_rates() {
        let g = TWO_PI * 1e3;
        let p = DriveParams::new(2, 1.0, 1.0, 1.0, 10.0, vec![0.0], g).unwrap();
        let ops = lindblad_ops(&p).unwrap();
        assert_eq!(ops.len(), 5);
        let space = HilbertSpace::rydberg_register(2).unwrap();
        let control_sum = ops[..2]
            .iter()
            .fold(CMatrix::zeros(12, 12), |acc, l| acc + l.matrix().adjoint() * l.matrix());
        let r = Operator::transition(space.levels(0), Level::R, Level::R).unwrap().scaled(g);
        let expected = crate::qcore::tensor_embed(&r, 0, &space).unwrap();
        assert!(max_abs(&(control_sum - expected.matrix())) < 1e-9);
        let zero = lindblad_ops(&DriveParams { gamma: 0.0, ..p }).unwrap();
        assert_eq!(zero.len(), 5);
        assert!(zero.iter().all(|l| max_abs(l.matrix()) == 0.0));
        assert_eq!(lindblad_ops(&DriveParams::new(3, 1.0, 1.0, 1.0, 10.0, vec![0.0; 3], g).unwrap()).unwrap().len(), 7);
    }

    #[test]
    fn trivial_schedule_keeps_dark_state() {
        let th = 0.4;
        let om = 1.0;
        let u = dressed_evolution_operator_with(0.0, 10.0, 20, |_| {
            Ok((
                AdiabaticAngles {
                    theta: th,
                    theta_dot: 0.0,
                    theta_ddot: 0.0,
                    omega: om,
                    omega_dot: 0.0,
                },
                DressedAngles::default(),
                ControlCorrections::default(),
            ))
        })
        .unwrap();
        let dark = CVector::from_vec(vec![c(th.cos()), c(0.0), c(th.sin())]);
        let out = &u * &dark;
        assert!((out - dark).norm() < 1e-12);
        assert!(unitarity_deviation(&u) < 1e-12);
    }

    #[test]
    fn dressed_evolution_transfers_in_to_out() {
        let om = TWO_PI * 1e6;
        let p = VitanovPulse::new(om, 0.2 / om, DEFAULT_EDGE).unwrap();
        let s = DressedSchedule::new(p, Dressing::Simplest).unwrap();
        let u = dressed_evolution_operator(&s, 400).unwrap();
        assert!(unitarity_deviation(&u) < 1e-10);
        assert!((u[(2, 0)].norm_sqr() - 1.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn frames_are_unitary(th in -7.0f64..7.0, mu in -7.0f64..7.0, xi in -7.0f64..7.0, eta in -7.0f64..7.0) {
            let f = spin1_frames(th, mu, xi, eta);
            prop_assert!(unitarity_deviation(&f.u_ad) < 1e-12);
            prop_assert!(unitarity_deviation(&f.v) < 1e-12);
        }

        #[test]
        fn control_hamiltonian_has_no_in_out_coupling(th in -7.0f64..7.0, gx in -1e7f64..1e7, gz in -1e7f64..1e7) {
            let h = control_hamiltonian(th, gx, gz);
            let scale = gx.abs().max(gz.abs()).max(1.0);
            prop_assert!(h[(0, 2)].norm() < 1e-12 * scale);
            prop_assert!(h[(2, 0)].norm() < 1e-12 * scale);
            prop_assert!(hermitian_deviation(&h) < 1e-12 * scale);
        }

        #[test]
        fn closed_form_matches_numeric_frame(
            th in -3.0f64..3.0, thd in -2.0f64..2.0, om in 0.1f64..3.0,
            mu in -3.0f64..3.0, mud in -2.0f64..2.0, xi in -3.0f64..3.0, xid in -2.0f64..2.0,
            eta in -3.0f64..3.0, etad in -2.0f64..2.0, gx in -2.0f64..2.0, gz in -2.0f64..2.0,
        ) {
            let a = AdiabaticAngles { theta: th, theta_dot: thd, theta_ddot: 0.0, omega: om, omega_dot: 0.0 };
            let d = DressedAngles { mu, mu_dot: mud, xi, xi_dot: xid, eta, eta_dot: etad };
            let g = ControlCorrections { gx, gz };
            let closed = dressed_frame_hamiltonian(&a, &d, &g).matrix;
            let numeric = dressed_frame_hamiltonian_numeric(&a, &d, &g);
            prop_assert!(max_abs(&(closed - numeric)) < 1e-12);
        }

        #[test]
        fn rab_back_substitution(v in 0.0f64..1e10, op in 0.0f64..3e8, os in 0.0f64..3e8, alpha in 0.0f64..0.3, n in 2usize..6) {
            prop_assume!(v > 1.0 || op > 1.0 || os > 1.0);
            let d = rab_solve(v, op, os, alpha, n).unwrap();
            prop_assert!(d > 0.0);
            let res = effective_detuning(n, v, d, alpha * d, op, os);
            prop_assert!(res.abs() < 1e-9 * d);
        }

        #[test]
        fn prefactor_reduces_to_closed_forms(oc in 1e6f64..1e9, d in 1e9f64..1e11) {
            prop_assert!((coupling_prefactor(2, oc, d) - oc / (2.0 * d)).abs() <= 1e-15 * oc / d);
            prop_assert!((coupling_prefactor(3, oc, d) - 3.0 * oc * oc / (4.0 * d * d)).abs() <= 1e-15 * (oc / d).powi(2));
        }

        #[test]
        fn embedded_jumps_conserve_rates(g in 0.0f64..1e5) {
            let space = HilbertSpace::rydberg_register(2).unwrap();
            let ops = lindblad_ops_for(&space, g).unwrap();
            let total = ops.iter().fold(CMatrix::zeros(12, 12), |acc, l| acc + l.matrix().adjoint() * l.matrix());
            for i in 0..12 {
                let k = space.labels_of(i).iter().filter(|l| **l == Level::R).count() as f64;
                prop_assert!((total[(i, i)].re - k * g).abs() < 1e-9 * g.max(1.0));
            }
        }
    }
}
