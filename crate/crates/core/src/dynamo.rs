//! Time-dependent Schrödinger and Lindblad propagation.
//!
//! Both equations run on an adaptive 8(5,3) Dormand–Prince integrator over a
//! flat complex state vector. Steps are clamped to land on every requested
//! sample time, so no dense output is involved.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use crate::hammodel::Hamiltonian;
use crate::qcore::{c, min_eigenvalue, CMatrix, CVector, Operator, QuantumState, C64, I};

/// Adaptive integrator settings.
#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step in seconds. Models may tighten it further.
    pub max_step: Option<f64>,
    /// Number of equally spaced output samples including both endpoints.
    pub samples: usize,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: None,
            samples: 201,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::param("tolerance", "rel_tol and abs_tol must be positive"));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::param("max_step", format!("must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Sampled solution plus conservation diagnostics.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<QuantumState>,
    /// Ket norm or density-matrix trace at each sample.
    pub conserved: Vec<f64>,
    /// Largest `|norm − norm₀|` (or trace) over every accepted step.
    pub max_drift: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
    /// Samples whose smallest eigenvalue fell below `−1e-6`.
    pub positivity_warnings: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> &QuantumState {
        self.states.last().expect("trajectory has at least one sample")
    }

    /// Population of basis index `i` at every sample.
    pub fn population_series(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.population_at(i)).collect()
    }
}

#[derive(Clone, Copy, Debug, Default)]
struct Stats {
    accepted: usize,
    rejected: usize,
    evaluations: usize,
}

// Dormand–Prince 8(5,3) coefficients (Hairer, Nørsett & Wanner), kept at the
// published precision.
const C2: f64 = 0.526001519587677318785587544488E-01;
const C3: f64 = 0.789002279381515978178381316732E-01;
const C4: f64 = 0.118350341907227396726757197510E+00;
const C5: f64 = 0.281649658092772603273242802490E+00;
const C6: f64 = 0.333333333333333333333333333333E+00;
const C7: f64 = 0.25E+00;
const C8: f64 = 0.307692307692307692307692307692E+00;
const C9: f64 = 0.651282051282051282051282051282E+00;
const C10: f64 = 0.6E+00;
const C11: f64 = 0.857142857142857142857142857142E+00;

const A21: f64 = 5.26001519587677318785587544488E-2;
const A31: f64 = 1.97250569845378994544595329183E-2;
const A32: f64 = 5.91751709536136983633785987549E-2;
const A41: f64 = 2.95875854768068491816892993775E-2;
const A43: f64 = 8.87627564304205475450678981324E-2;
const A51: f64 = 2.41365134159266685502369798665E-1;
const A53: f64 = -8.84549479328286085344864962717E-1;
const A54: f64 = 9.24834003261792003115737966543E-1;
const A61: f64 = 3.7037037037037037037037037037E-2;
const A64: f64 = 1.70828608729473871279604482173E-1;
const A65: f64 = 1.25467687566822425016691814123E-1;
const A71: f64 = 3.7109375E-2;
const A74: f64 = 1.70252211019544039314978060272E-1;
const A75: f64 = 6.02165389804559606850219397283E-2;
const A76: f64 = -1.7578125E-2;
const A81: f64 = 3.70920001185047927108779319836E-2;
const A84: f64 = 1.70383925712239993810214054705E-1;
const A85: f64 = 1.07262030446373284651809199168E-1;
const A86: f64 = -1.53194377486244017527936158236E-2;
const A87: f64 = 8.27378916381402288758473766002E-3;
const A91: f64 = 6.24110958716075717114429577812E-1;
const A94: f64 = -3.36089262944694129406857109825E0;
const A95: f64 = -8.68219346841726006818189891453E-1;
const A96: f64 = 2.75920996994467083049415600797E1;
const A97: f64 = 2.01540675504778934086186788979E1;
const A98: f64 = -4.34898841810699588477366255144E1;
const A101: f64 = 4.77662536438264365890433908527E-1;
const A104: f64 = -2.48811461997166764192642586468E0;
const A105: f64 = -5.90290826836842996371446475743E-1;
const A106: f64 = 2.12300514481811942347288949897E1;
const A107: f64 = 1.52792336328824235832596922938E1;
const A108: f64 = -3.32882109689848629194453265587E1;
const A109: f64 = -2.03312017085086261358222928593E-2;
const A111: f64 = -9.3714243008598732571704021658E-1;
const A114: f64 = 5.18637242884406370830023853209E0;
const A115: f64 = 1.09143734899672957818500254654E0;
const A116: f64 = -8.14978701074692612513997267357E0;
const A117: f64 = -1.85200656599969598641566180701E1;
const A118: f64 = 2.27394870993505042818970056734E1;
const A119: f64 = 2.49360555267965238987089396762E0;
const A1110: f64 = -3.0467644718982195003823669022E0;
const A121: f64 = 2.27331014751653820792359768449E0;
const A124: f64 = -1.05344954667372501984066689879E1;
const A125: f64 = -2.00087205822486249909675718444E0;
const A126: f64 = -1.79589318631187989172765950534E1;
const A127: f64 = 2.79488845294199600508499808837E1;
const A128: f64 = -2.85899827713502369474065508674E0;
const A129: f64 = -8.87285693353062954433549289258E0;
const A1210: f64 = 1.23605671757943030647266201528E1;
const A1211: f64 = 6.43392746015763530355970484046E-1;

const B1: f64 = 5.42937341165687622380535766363E-2;
const B6: f64 = 4.45031289275240888144113950566E0;
const B7: f64 = 1.89151789931450038304281599044E0;
const B8: f64 = -5.8012039600105847814672114227E0;
const B9: f64 = 3.1116436695781989440891606237E-1;
const B10: f64 = -1.52160949662516078556178806805E-1;
const B11: f64 = 2.01365400804030348374776537501E-1;
const B12: f64 = 4.47106157277725905176885569043E-2;

const BHH1: f64 = 0.244094488188976377952755905512E+00;
const BHH2: f64 = 0.733846688281611857341361741547E+00;
const BHH3: f64 = 0.220588235294117647058823529412E-01;

const ER1: f64 = 0.1312004499419488073250102996E-01;
const ER6: f64 = -0.1225156446376204440720569753E+01;
const ER7: f64 = -0.4957589496572501915214079952E+00;
const ER8: f64 = 0.1664377182454986536961530415E+01;
const ER9: f64 = -0.3503288487499736816886487290E+00;
const ER10: f64 = 0.3341791187130174790297318841E+00;
const ER11: f64 = 0.8192320648511571246570742613E-01;
const ER12: f64 = -0.2235530786388629525884427845E-01;

const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.333;
const FAC_MAX: f64 = 6.0;

/// `out = y + h Σ aⱼ kⱼ`.
fn combine(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    out.copy_from_slice(y);
    for &(a, k) in terms {
        let s = a * h;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += ki * s;
        }
    }
}

fn weighted_rms(v: &[C64], y: &[C64], rtol: f64, atol: f64) -> f64 {
    let s: f64 = v
        .iter()
        .zip(y)
        .map(|(vi, yi)| (vi.norm() / (atol + rtol * yi.norm())).powi(2))
        .sum();
    (s / v.len() as f64).sqrt()
}

/// Integrates `ẏ = f(t, y)` from `times[0]` through every later entry of
/// `times`, returning the state at each. `on_accept` may modify the state
/// after each accepted step.
fn dop853<F, G>(
    mut f: F,
    y0: Vec<C64>,
    times: &[f64],
    cfg: &IntegratorConfig,
    mut on_accept: G,
) -> Result<(Vec<Vec<C64>>, Stats)>
where
    F: FnMut(f64, &[C64], &mut [C64]) -> Result<()>,
    G: FnMut(f64, &mut [C64]),
{
    cfg.validate()?;
    let n = y0.len();
    let t0 = times[0];
    let t_end = *times.last().unwrap();
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::param("times", "sample times must increase strictly"));
    }
    let span = t_end - t0;
    let h_max = cfg.max_step.unwrap_or(span).min(span.max(f64::MIN_POSITIVE));
    let (rtol, atol) = (cfg.rel_tol, cfg.abs_tol);

    let mut stats = Stats::default();
    let mut out = vec![y0.clone()];
    if times.len() == 1 {
        return Ok((out, stats));
    }

    let mut y = y0;
    let mut k: Vec<Vec<C64>> = vec![vec![C64::default(); n]; 12];
    let mut tmp = vec![C64::default(); n];
    let mut y_new = vec![C64::default(); n];
    let mut t = t0;

    f(t, &y, &mut k[0])?;
    stats.evaluations += 1;

    // Initial step guess.
    let mut h = {
        let d0 = weighted_rms(&y, &y, rtol, atol);
        let d1 = weighted_rms(&k[0], &y, rtol, atol);
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 * span } else { 0.01 * d0 / d1 };
        h0 = h0.min(h_max);
        combine(&mut tmp, &y, h0, &[(1.0, &k[0])]);
        f(t + h0, &tmp, &mut k[1])?;
        stats.evaluations += 1;
        let diff: Vec<C64> = k[1].iter().zip(&k[0]).map(|(a, b)| a - b).collect();
        let d2 = weighted_rms(&diff, &y, rtol, atol) / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 {
            (h0 * 1e-3).max(1e-6 * span)
        } else {
            (0.01 / dm).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(h_max)
    };

    let mut last_rejected = false;
    let mut next_sample = 1;

    while next_sample < times.len() {
        if stats.accepted + stats.rejected >= cfg.max_steps {
            return Err(Error::Integration {
                t,
                reason: format!("step limit {} reached", cfg.max_steps),
            });
        }
        let target = times[next_sample];
        let h_free = h;
        let hits_sample = t + h >= target - 1e-12 * span.abs();
        if hits_sample {
            h = target - t;
        }
        if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(span.abs()) {
            return Err(Error::Integration {
                t,
                reason: format!("step size underflow (h = {h:e})"),
            });
        }

        {
            let (k1, rest) = k.split_at_mut(1);
            let k1 = &k1[0];
            combine(&mut tmp, &y, h, &[(A21, k1)]);
            f(t + C2 * h, &tmp, &mut rest[0])?;
            combine(&mut tmp, &y, h, &[(A31, k1), (A32, &rest[0])]);
            f(t + C3 * h, &tmp, &mut rest[1])?;
            combine(&mut tmp, &y, h, &[(A41, k1), (A43, &rest[1])]);
            f(t + C4 * h, &tmp, &mut rest[2])?;
            combine(&mut tmp, &y, h, &[(A51, k1), (A53, &rest[1]), (A54, &rest[2])]);
            f(t + C5 * h, &tmp, &mut rest[3])?;
            combine(&mut tmp, &y, h, &[(A61, k1), (A64, &rest[2]), (A65, &rest[3])]);
            f(t + C6 * h, &tmp, &mut rest[4])?;
            combine(
                &mut tmp,
                &y,
                h,
                &[(A71, k1), (A74, &rest[2]), (A75, &rest[3]), (A76, &rest[4])],
            );
            f(t + C7 * h, &tmp, &mut rest[5])?;
            combine(
                &mut tmp,
                &y,
                h,
                &[
                    (A81, k1),
                    (A84, &rest[2]),
                    (A85, &rest[3]),
                    (A86, &rest[4]),
                    (A87, &rest[5]),
                ],
            );
            f(t + C8 * h, &tmp, &mut rest[6])?;
            combine(
                &mut tmp,
                &y,
                h,
                &[
                    (A91, k1),
                    (A94, &rest[2]),
                    (A95, &rest[3]),
                    (A96, &rest[4]),
                    (A97, &rest[5]),
                    (A98, &rest[6]),
                ],
            );
            f(t + C9 * h, &tmp, &mut rest[7])?;
            combine(
                &mut tmp,
                &y,
                h,
                &[
                    (A101, k1),
                    (A104, &rest[2]),
                    (A105, &rest[3]),
                    (A106, &rest[4]),
                    (A107, &rest[5]),
                    (A108, &rest[6]),
                    (A109, &rest[7]),
                ],
            );
            f(t + C10 * h, &tmp, &mut rest[8])?;
            combine(
                &mut tmp,
                &y,
                h,
                &[
                    (A111, k1),
                    (A114, &rest[2]),
                    (A115, &rest[3]),
                    (A116, &rest[4]),
                    (A117, &rest[5]),
                    (A118, &rest[6]),
                    (A119, &rest[7]),
                    (A1110, &rest[8]),
                ],
            );
            f(t + C11 * h, &tmp, &mut rest[9])?;
            combine(
                &mut tmp,
                &y,
                h,
                &[
                    (A121, k1),
                    (A124, &rest[2]),
                    (A125, &rest[3]),
                    (A126, &rest[4]),
                    (A127, &rest[5]),
                    (A128, &rest[6]),
                    (A129, &rest[7]),
                    (A1210, &rest[8]),
                    (A1211, &rest[9]),
                ],
            );
            f(t + h, &tmp, &mut rest[10])?;
        }
        stats.evaluations += 11;

        // Eighth-order solution and the two embedded error estimates.
        let mut err5 = 0.0;
        let mut err3 = 0.0;
        for i in 0..n {
            let bsum = k[0][i] * B1
                + k[5][i] * B6
                + k[6][i] * B7
                + k[7][i] * B8
                + k[8][i] * B9
                + k[9][i] * B10
                + k[10][i] * B11
                + k[11][i] * B12;
            y_new[i] = y[i] + bsum * h;
            let sk = atol + rtol * y[i].norm().max(y_new[i].norm());
            let e3 = bsum - k[0][i] * BHH1 - k[8][i] * BHH2 - k[11][i] * BHH3;
            let e5 = k[0][i] * ER1
                + k[5][i] * ER6
                + k[6][i] * ER7
                + k[7][i] * ER8
                + k[8][i] * ER9
                + k[9][i] * ER10
                + k[10][i] * ER11
                + k[11][i] * ER12;
            err3 += (e3.norm() / sk).powi(2);
            err5 += (e5.norm() / sk).powi(2);
        }
        let mut deno = err5 + 0.01 * err3;
        if deno <= 0.0 {
            deno = 1.0;
        }
        let err = h.abs() * err5 / (deno * n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Integration {
                t,
                reason: "non-finite error estimate".into(),
            });
        }

        let fac11 = err.powf(1.0 / 8.0);
        let fac = (1.0 / FAC_MAX).max((1.0 / FAC_MIN).min(fac11 / SAFE));
        let mut h_new = h / fac;

        if err <= 1.0 {
            stats.accepted += 1;
            t = if hits_sample { target } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            on_accept(t, &mut y);
            f(t, &y, &mut k[0])?;
            stats.evaluations += 1;
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            if hits_sample {
                out.push(y.clone());
                next_sample += 1;
                // A clamped step says nothing about the natural step size.
                h_new = h_new.max(h_free);
            }
        } else {
            h_new = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            last_rejected = true;
            stats.rejected += 1;
        }
        h = h_new.min(h_max);
    }
    Ok((out, stats))
}

/// Sparse snapshot of a dense matrix.
fn nonzeros(m: &CMatrix, out: &mut Vec<(usize, usize, C64)>) {
    out.clear();
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v.re != 0.0 || v.im != 0.0 {
                out.push((i, j, v));
            }
        }
    }
}

fn sample_times(window: (f64, f64), samples: usize) -> Result<Vec<f64>> {
    let (t0, t1) = window;
    if !(t1 > t0) {
        return Err(Error::param("window", format!("need t0 < t1, got ({t0:e}, {t1:e})")));
    }
    Ok(crate::pulsegen::linspace(t0, t1, samples.max(2)))
}

fn max_step(h: &dyn Hamiltonian, window: (f64, f64), cfg: &IntegratorConfig) -> IntegratorConfig {
    let mut cfg = cfg.clone();
    if let Some(hint) = h.max_step_hint(window) {
        cfg.max_step = Some(cfg.max_step.map_or(hint, |m| m.min(hint)));
    }
    cfg
}

fn phase_factors(h: &dyn Hamiltonian, t: f64, sign: f64) -> Option<Vec<C64>> {
    h.frame_phases(t)
        .map(|p| p.into_iter().map(|x| C64::from_polar(1.0, sign * x)).collect())
}

/// Solves `i dψ/dt = H(t) ψ`.
pub fn evolve_schrodinger(
    h: &dyn Hamiltonian,
    psi0: &QuantumState,
    window: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let QuantumState::Ket(psi) = psi0 else {
        return Err(Error::InvalidState("Schrödinger propagation needs a ket".into()));
    };
    psi0.validate()?;
    let dim = h.dim();
    if psi.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: psi.len(),
        });
    }
    let times = sample_times(window, cfg.samples)?;
    let cfg = max_step(h, window, cfg);

    let mut y0: Vec<C64> = psi.iter().copied().collect();
    if let Some(ph) = phase_factors(h, window.0, 1.0) {
        y0.iter_mut().zip(ph).for_each(|(a, p)| *a *= p);
    }
    let norm0 = psi.norm();

    let mut hm = CMatrix::zeros(dim, dim);
    let mut nz = Vec::new();
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| -> Result<()> {
        h.fill(t, &mut hm)?;
        nonzeros(&hm, &mut nz);
        dy.iter_mut().for_each(|d| *d = C64::default());
        for &(i, j, v) in &nz {
            dy[i] += v * y[j];
        }
        dy.iter_mut().for_each(|d| *d *= -I);
        Ok(())
    };
    let mut drift: f64 = 0.0;
    let (raw, stats) = dop853(rhs, y0, &times, &cfg, |_, y| {
        let nrm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        drift = drift.max((nrm - norm0).abs());
    })?;

    let mut states = Vec::with_capacity(raw.len());
    let mut conserved = Vec::with_capacity(raw.len());
    for (t, mut y) in times.iter().zip(raw) {
        if let Some(ph) = phase_factors(h, *t, -1.0) {
            y.iter_mut().zip(ph).for_each(|(a, p)| *a *= p);
        }
        let v = CVector::from_vec(y);
        conserved.push(v.norm());
        states.push(QuantumState::Ket(v));
    }
    log::debug!(
        "schrodinger: {} accepted, {} rejected, max norm drift {drift:e}",
        stats.accepted,
        stats.rejected
    );
    Ok(Trajectory {
        times,
        states,
        conserved,
        max_drift: drift,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
        evaluations: stats.evaluations,
        positivity_warnings: 0,
    })
}

/// Threshold below which a sampled eigenvalue counts as a positivity warning.
pub const POSITIVITY_WARNING: f64 = -1e-6;

/// Solves `dρ/dt = −i[H, ρ] + Σ (LρL† − ½{L†L, ρ})`.
///
/// Jump operators must each connect basis states whose frame phases differ by
/// a common amount, which holds for decays that lower the Rydberg excitation
/// count by one.
pub fn evolve_lindblad(
    h: &dyn Hamiltonian,
    jumps: &[Operator],
    rho0: &QuantumState,
    window: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let dim = h.dim();
    rho0.validate()?;
    if rho0.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: rho0.dim(),
        });
    }
    let mut jump_nz = Vec::with_capacity(jumps.len());
    let mut decay = CMatrix::zeros(dim, dim);
    for l in jumps {
        if l.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: l.dim(),
            });
        }
        let mut nz = Vec::new();
        nonzeros(l.matrix(), &mut nz);
        if !nz.is_empty() {
            jump_nz.push(nz);
            decay += l.matrix().adjoint() * l.matrix();
        }
    }
    check_jump_frames(h, &jump_nz, window)?;
    let decay = decay * c(0.5);

    let times = sample_times(window, cfg.samples)?;
    let cfg = max_step(h, window, cfg);

    // Row-major flattening of ρ in the model's frame.
    let rho = rho0.to_density();
    let mut y0: Vec<C64> = (0..dim * dim).map(|k| rho[(k / dim, k % dim)]).collect();
    if let Some(ph) = phase_factors(h, window.0, 1.0) {
        for i in 0..dim {
            for j in 0..dim {
                y0[i * dim + j] *= ph[i] * ph[j].conj();
            }
        }
    }
    let trace0 = rho.trace().re;

    let mut hm = CMatrix::zeros(dim, dim);
    let mut nz = Vec::new();
    let rhs = |t: f64, y: &[C64], dy: &mut [C64]| -> Result<()> {
        h.fill(t, &mut hm)?;
        hm -= &decay * I;
        nonzeros(&hm, &mut nz);
        dy.iter_mut().for_each(|d| *d = C64::default());
        // −i (H_eff ρ − ρ H_eff†)
        for &(i, k, v) in &nz {
            let w = -I * v;
            let (src, dst) = (k * dim, i * dim);
            for j in 0..dim {
                dy[dst + j] += w * y[src + j];
            }
            let wc = I * v.conj();
            for r in 0..dim {
                dy[r * dim + i] += wc * y[r * dim + k];
            }
        }
        for l in &jump_nz {
            for &(a, p, v1) in l {
                for &(b, q, v2) in l {
                    dy[a * dim + b] += v1 * v2.conj() * y[p * dim + q];
                }
            }
        }
        Ok(())
    };
    let mut drift: f64 = 0.0;
    let (raw, stats) = dop853(rhs, y0, &times, &cfg, |_, y| {
        for i in 0..dim {
            y[i * dim + i].im = 0.0;
            for j in (i + 1)..dim {
                let avg = (y[i * dim + j] + y[j * dim + i].conj()) * 0.5;
                y[i * dim + j] = avg;
                y[j * dim + i] = avg.conj();
            }
        }
        let tr: f64 = (0..dim).map(|i| y[i * dim + i].re).sum();
        drift = drift.max((tr - trace0).abs());
    })?;

    let mut states = Vec::with_capacity(raw.len());
    let mut conserved = Vec::with_capacity(raw.len());
    let mut warnings = 0;
    for (t, y) in times.iter().zip(raw) {
        let mut m = CMatrix::from_row_slice(dim, dim, &y);
        if let Some(ph) = phase_factors(h, *t, -1.0) {
            for i in 0..dim {
                for j in 0..dim {
                    m[(i, j)] *= ph[i] * ph[j].conj();
                }
            }
        }
        let lam = min_eigenvalue(&m);
        if lam < POSITIVITY_WARNING {
            warnings += 1;
            log::warn!("density matrix eigenvalue {lam:e} at t = {t:e} s");
        }
        conserved.push(m.trace().re);
        states.push(QuantumState::Density(m));
    }
    log::debug!(
        "lindblad: {} accepted, {} rejected, max trace drift {drift:e}",
        stats.accepted,
        stats.rejected
    );
    Ok(Trajectory {
        times,
        states,
        conserved,
        max_drift: drift,
        accepted_steps: stats.accepted,
        rejected_steps: stats.rejected,
        evaluations: stats.evaluations,
        positivity_warnings: warnings,
    })
}

fn check_jump_frames(
    h: &dyn Hamiltonian,
    jumps: &[Vec<(usize, usize, C64)>],
    window: (f64, f64),
) -> Result<()> {
    let probe = [window.0, 0.5 * (window.0 + window.1), window.1];
    for t in probe {
        let Some(ph) = h.frame_phases(t) else {
            return Ok(());
        };
        for l in jumps {
            let Some(&(a0, b0, _)) = l.first() else {
                continue;
            };
            let d0 = ph[a0] - ph[b0];
            for &(a, b, _) in l {
                let d = ph[a] - ph[b];
                if (d - d0).abs() > 1e-9 * (1.0 + d0.abs()) {
                    return Err(Error::param(
                        "jumps",
                        "a jump operator mixes basis states with different frame phases",
                    ));
                }
            }
        }
    }
    Ok(())
}
