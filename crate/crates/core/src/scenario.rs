//! Declarative TOML scenarios with explicit frequency units.
//!
//! Frequencies are strings carrying a unit tag, for example `"30 MHz*2pi"`,
//! `"1 kHz*2pi"` or `"1.885e8 rad/s"`. Time constants accept `"/omega_eff"`
//! (multiples of `1/Ω̃`) or a time unit (`s`, `ms`, `us`, `ns`).
//!
//! ```toml
//! name = "cnot"
//! gate = "cnot"
//! model = "full-rw"
//! dissipation = true
//!
//! [drive]
//! omega = "30 MHz*2pi"
//! delta = "450 MHz*2pi"
//! gamma = "1 kHz*2pi"
//!
//! [pulse]
//! tau = "0.2 /omega_eff"
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamo::IntegratorConfig;
use crate::error::{Error, Result};
use crate::gateproto::{GateProtocol, ModelKind};
use crate::hammodel::{effective_detuning, factorial_ratio, pair_count, rab_solve};
use crate::pulsegen::{Dressing, DEFAULT_EDGE};

fn cfg(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Parses a frequency with its unit tag into rad/s.
pub fn parse_frequency(field: &str, text: &str) -> Result<f64> {
    let t = text.trim();
    let split = t
        .find(|ch: char| ch.is_whitespace())
        .ok_or_else(|| cfg(format!("{field}: '{text}' has no unit tag (e.g. \"30 MHz*2pi\" or \"1e8 rad/s\")")))?;
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| cfg(format!("{field}: cannot read '{num}' as a number")))?;
    let unit: String = unit.chars().filter(|ch| !ch.is_whitespace()).collect();
    let scale = match unit.as_str() {
        "rad/s" => 1.0,
        "Hz*2pi" | "2pi*Hz" | "Hz·2π" | "2π·Hz" => 2.0 * PI,
        "kHz*2pi" | "2pi*kHz" | "kHz·2π" | "2π·kHz" => 2.0 * PI * 1e3,
        "MHz*2pi" | "2pi*MHz" | "MHz·2π" | "2π·MHz" => 2.0 * PI * 1e6,
        "GHz*2pi" | "2pi*GHz" | "GHz·2π" | "2π·GHz" => 2.0 * PI * 1e9,
        _ => {
            return Err(cfg(format!(
                "{field}: unknown unit '{unit}' (expected rad/s or Hz/kHz/MHz/GHz*2pi)"
            )))
        }
    };
    if !value.is_finite() {
        return Err(cfg(format!("{field}: value must be finite")));
    }
    Ok(value * scale)
}

/// Time constant: `Relative(x)` means `x/Ω̃`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeSpec {
    Relative(f64),
    Seconds(f64),
}

pub fn parse_time(field: &str, text: &str) -> Result<TimeSpec> {
    let t = text.trim();
    let split = t
        .find(|ch: char| ch.is_whitespace())
        .ok_or_else(|| cfg(format!("{field}: '{text}' has no unit tag (e.g. \"0.2 /omega_eff\" or \"50 ns\")")))?;
    let (num, unit) = t.split_at(split);
    let value: f64 = num
        .parse()
        .map_err(|_| cfg(format!("{field}: cannot read '{num}' as a number")))?;
    if !(value > 0.0 && value.is_finite()) {
        return Err(cfg(format!("{field}: must be positive")));
    }
    Ok(match unit.trim() {
        "/omega_eff" | "/Omega_eff" => TimeSpec::Relative(value),
        "s" => TimeSpec::Seconds(value),
        "ms" => TimeSpec::Seconds(value * 1e-3),
        "us" | "µs" => TimeSpec::Seconds(value * 1e-6),
        "ns" => TimeSpec::Seconds(value * 1e-9),
        u => return Err(cfg(format!("{field}: unknown unit '{u}' (expected /omega_eff, s, ms, us or ns)"))),
    })
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    gate: String,
    n: Option<usize>,
    model: Option<String>,
    dissipation: Option<bool>,
    theta_points: Option<usize>,
    drive: RawDrive,
    pulse: RawPulse,
    #[serde(default)]
    integrator: RawIntegrator,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    sweep: RawSweep,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrive {
    omega: String,
    omega_c: Option<String>,
    delta: String,
    alpha: Option<f64>,
    interactions: Option<Vec<String>>,
    gamma: Option<String>,
    tracking: Option<bool>,
    sideband_correction: Option<bool>,
    amplitude_scale: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulse {
    tau: String,
    edge: Option<f64>,
    dressing: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntegrator {
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    samples: Option<usize>,
    max_steps: Option<usize>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    #[serde(default)]
    axis: Vec<RawAxis>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAxis {
    param: String,
    values: Vec<toml::Value>,
}

/// Parameter a sweep axis varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Gamma,
    Tau,
    Delta,
    AmplitudeScale,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::Tau => "tau",
            SweepParam::Delta => "delta",
            SweepParam::AmplitudeScale => "amplitude_scale",
        }
    }
}

/// A resolved sweep axis. Values are in rad/s for `gamma` and `delta`, in
/// units of `1/Ω̃` for `tau`, and plain factors for `amplitude_scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepAxis {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// Fully resolved scenario in SI units, echoed at the top of every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub gate: String,
    pub n: usize,
    pub model: ModelKind,
    pub dissipation: bool,
    pub theta_points: usize,
    /// Pulse amplitude `Ω` of the probe and Stokes lasers, rad/s.
    pub omega: f64,
    pub omega_c: f64,
    pub delta: f64,
    /// `explicit` or `rab`.
    pub delta_source: String,
    pub alpha: f64,
    /// Pair interactions in rad/s; empty means derived from the RAB condition.
    pub interactions: Vec<f64>,
    pub gamma: f64,
    pub tracking: bool,
    pub sideband_correction: bool,
    pub amplitude_scale: f64,
    /// Effective amplitude `Ω̃`, rad/s.
    pub omega_eff: f64,
    /// Vitanov time constant in units of `1/Ω̃`.
    pub tau_eff: f64,
    pub tau: f64,
    pub edge: f64,
    pub dressing: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub samples: usize,
    pub max_steps: usize,
    pub output_dir: Option<String>,
    pub sweep: Vec<SweepAxis>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| cfg(format!("cannot read scenario {}: {e}", path.display())))?;
        let default_name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into());
        Self::from_toml_str(&text, &default_name)
    }

    pub fn from_toml_str(text: &str, default_name: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| cfg(format!("scenario parse error: {e}")))?;
        resolve(raw, default_name)
    }

    /// The scenario as `# `-prefixed TOML lines.
    pub fn comment_header(&self) -> String {
        let body = toml::to_string(self).expect("scenario serializes to TOML");
        body.lines().map(|l| format!("# {l}\n")).collect()
    }

    pub fn protocol(&self) -> Result<GateProtocol> {
        let mut p = GateProtocol::with_drive(self.n, self.omega, self.omega_c, self.delta, self.tau_eff, self.edge)?;
        p.model = self.model;
        p.dissipation = self.dissipation;
        p.gamma = self.gamma;
        p.tracking = self.tracking;
        p.sideband_correction = self.sideband_correction;
        p.amplitude_scale = self.amplitude_scale;
        p.theta_points = self.theta_points;
        p.interactions = (!self.interactions.is_empty()).then(|| self.interactions.clone());
        p.dressing = match self.dressing.as_str() {
            "none" => Dressing::None,
            _ => Dressing::Simplest,
        };
        p.integrator = IntegratorConfig {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            samples: self.samples,
            max_steps: self.max_steps,
            ..IntegratorConfig::default()
        };
        p.integrator.validate()?;
        Ok(p)
    }

    /// Copy with one swept parameter replaced.
    pub fn with_param(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut s = self.clone();
        match param {
            SweepParam::Gamma => s.gamma = value,
            SweepParam::Tau => {
                s.tau_eff = value;
                s.tau = value / s.omega_eff;
            }
            SweepParam::Delta => {
                let alpha = s.omega_c / s.delta;
                s.delta = value;
                s.omega_c = alpha * value;
                s.delta_source = "explicit".into();
                refresh_effective(&mut s);
            }
            SweepParam::AmplitudeScale => s.amplitude_scale = value,
        }
        Ok(s)
    }
}

fn refresh_effective(s: &mut Scenario) {
    s.alpha = s.omega_c / s.delta;
    s.omega_eff = factorial_ratio(s.n) * s.alpha.powi(s.n as i32 - 1) * s.omega;
    s.tau = s.tau_eff / s.omega_eff;
}

fn resolve(raw: RawScenario, default_name: &str) -> Result<Scenario> {
    let n = match raw.gate.as_str() {
        "cnot" => 2,
        "toffoli" => 3,
        "ck-not" => raw.n.ok_or_else(|| cfg("n: required for gate = \"ck-not\""))?,
        g => return Err(cfg(format!("gate: unknown gate '{g}' (expected cnot, toffoli or ck-not)"))),
    };
    if let Some(m) = raw.n {
        if m != n {
            return Err(cfg(format!("n: {m} contradicts gate '{}'", raw.gate)));
        }
    }
    if n < 2 {
        return Err(cfg("n: need at least two atoms"));
    }
    let model = match &raw.model {
        Some(m) => m.parse()?,
        None => ModelKind::RotatingWave,
    };
    let d = &raw.drive;
    let omega = parse_frequency("drive.omega", &d.omega)?;
    if !(omega >= 0.0) {
        return Err(cfg("drive.omega: must be ≥ 0"));
    }
    let interactions = match &d.interactions {
        Some(list) => {
            if list.len() != pair_count(n) {
                return Err(cfg(format!(
                    "drive.interactions: expected {} pair values for n = {n}, got {}",
                    pair_count(n),
                    list.len()
                )));
            }
            list.iter()
                .enumerate()
                .map(|(i, v)| parse_frequency(&format!("drive.interactions[{i}]"), v))
                .collect::<Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    let (delta, omega_c, delta_source) = if d.delta.trim() == "rab" {
        let alpha = d.alpha.ok_or_else(|| cfg("drive.alpha: required when delta = \"rab\""))?;
        if d.omega_c.is_some() {
            return Err(cfg("drive.omega_c: omit it when delta = \"rab\"; Ω_c = αΔ"));
        }
        if interactions.is_empty() {
            return Err(cfg("drive.interactions: required when delta = \"rab\""));
        }
        let v: f64 = interactions.iter().sum();
        let delta = rab_solve(v, omega, omega, alpha, n).map_err(|e| cfg(format!("drive.delta: {e}")))?;
        (delta, alpha * delta, "rab".to_string())
    } else {
        let delta = parse_frequency("drive.delta", &d.delta)?;
        let omega_c = match (&d.omega_c, d.alpha) {
            (Some(_), Some(_)) => return Err(cfg("drive.alpha: give either omega_c or alpha, not both")),
            (Some(oc), None) => parse_frequency("drive.omega_c", oc)?,
            (None, Some(a)) => a * delta,
            (None, None) => omega,
        };
        (delta, omega_c, "explicit".to_string())
    };
    if !(omega_c >= 0.0 && delta > omega_c) {
        return Err(cfg("drive.delta: need 0 ≤ Ω_c < Δ"));
    }
    let gamma = match &d.gamma {
        Some(g) => parse_frequency("drive.gamma", g)?,
        None => 0.0,
    };
    if gamma < 0.0 {
        return Err(cfg("drive.gamma: must be ≥ 0"));
    }
    let edge = raw.pulse.edge.unwrap_or(DEFAULT_EDGE);
    let dressing = raw.pulse.dressing.clone().unwrap_or_else(|| "simplest".into());
    if !matches!(dressing.as_str(), "simplest" | "none") {
        return Err(cfg(format!("pulse.dressing: unknown choice '{dressing}' (expected simplest or none)")));
    }

    let mut s = Scenario {
        name: raw.name.clone().unwrap_or_else(|| default_name.to_string()),
        gate: raw.gate.clone(),
        n,
        model,
        dissipation: raw.dissipation.unwrap_or(true),
        theta_points: raw.theta_points.unwrap_or(101),
        omega,
        omega_c,
        delta,
        delta_source,
        alpha: 0.0,
        interactions,
        gamma,
        tracking: d.tracking.unwrap_or(true),
        sideband_correction: d.sideband_correction.unwrap_or(true),
        amplitude_scale: d.amplitude_scale.unwrap_or(1.0),
        omega_eff: 0.0,
        tau_eff: 0.0,
        tau: 0.0,
        edge,
        dressing,
        rel_tol: raw.integrator.rel_tol.unwrap_or(1e-8),
        abs_tol: raw.integrator.abs_tol.unwrap_or(1e-10),
        samples: raw.integrator.samples.unwrap_or(201),
        max_steps: raw.integrator.max_steps.unwrap_or(5_000_000),
        output_dir: raw.output.dir.clone(),
        sweep: Vec::new(),
    };
    refresh_effective(&mut s);
    s.tau_eff = match parse_time("pulse.tau", &raw.pulse.tau)? {
        TimeSpec::Relative(x) => x,
        TimeSpec::Seconds(t) => t * s.omega_eff,
    };
    s.tau = s.tau_eff / s.omega_eff;

    if raw.sweep.axis.len() > 2 {
        return Err(cfg("sweep.axis: at most two axes"));
    }
    for (k, axis) in raw.sweep.axis.iter().enumerate() {
        let field = format!("sweep.axis[{k}]");
        let param = match axis.param.as_str() {
            "gamma" => SweepParam::Gamma,
            "tau" => SweepParam::Tau,
            "delta" => SweepParam::Delta,
            "amplitude_scale" => SweepParam::AmplitudeScale,
            p => return Err(cfg(format!("{field}.param: unknown parameter '{p}'"))),
        };
        if axis.values.is_empty() || axis.values.len() > 256 {
            return Err(cfg(format!("{field}.values: need between 1 and 256 values")));
        }
        let values = axis
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let f = format!("{field}.values[{i}]");
                match (param, v) {
                    (SweepParam::Gamma | SweepParam::Delta, toml::Value::String(t)) => parse_frequency(&f, t),
                    (SweepParam::Tau, toml::Value::String(t)) => match parse_time(&f, t)? {
                        TimeSpec::Relative(x) => Ok(x),
                        TimeSpec::Seconds(t) => Ok(t * s.omega_eff),
                    },
                    (SweepParam::AmplitudeScale, toml::Value::Float(x)) => Ok(*x),
                    (SweepParam::AmplitudeScale, toml::Value::Integer(x)) => Ok(*x as f64),
                    _ => Err(cfg(format!("{f}: expected a unit-tagged string"))),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        s.sweep.push(SweepAxis { param, values });
    }
    Ok(s)
}

/// Result of the RAB solve requested by a scenario.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RabSolution {
    pub n: usize,
    pub v_total: f64,
    pub omega_p: f64,
    pub omega_s: f64,
    pub alpha: f64,
    pub delta: f64,
    pub omega_c: f64,
    /// `Δ_eff` evaluated at the solution.
    pub residual: f64,
}

/// Solves the RAB condition with the scenario's interactions and pulse power.
pub fn rab_for(s: &Scenario) -> Result<RabSolution> {
    if s.interactions.is_empty() {
        return Err(cfg("drive.interactions: rab-solve needs explicit interactions"));
    }
    let v: f64 = s.interactions.iter().sum();
    let alpha = s.omega_c / s.delta;
    let delta = rab_solve(v, s.omega, s.omega, alpha, s.n)?;
    let residual = effective_detuning(s.n, v, delta, alpha * delta, s.omega, s.omega);
    Ok(RabSolution {
        n: s.n,
        v_total: v,
        omega_p: s.omega,
        omega_s: s.omega,
        alpha,
        delta,
        omega_c: alpha * delta,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CNOT: &str = r#"
gate = "cnot"
[drive]
omega = "30 MHz*2pi"
delta = "450 MHz*2pi"
gamma = "1 kHz*2pi"
[pulse]
tau = "0.2 /omega_eff"
"#;

    #[test]
    fn units_convert_to_rad_per_second() {
        assert_eq!(parse_frequency("f", "1 MHz*2pi").unwrap(), 2.0 * PI * 1e6);
        assert_eq!(parse_frequency("f", "2.5e8 rad/s").unwrap(), 2.5e8);
        assert_eq!(parse_frequency("f", "3 2pi*GHz").unwrap(), 2.0 * PI * 3e9);
        assert!(parse_frequency("f", "30").unwrap_err().to_string().contains("f"));
        assert!(matches!(parse_frequency("f", "30 MHz"), Err(Error::Config(_))));
        let TimeSpec::Seconds(t) = parse_time("t", "50 ns").unwrap() else { panic!() };
        assert!((t - 50e-9).abs() < 1e-22);
        assert_eq!(parse_time("t", "0.2 /omega_eff").unwrap(), TimeSpec::Relative(0.2));
    }

    #[test]
    fn cnot_scenario_resolves() {
        let s = Scenario::from_toml_str(CNOT, "x").unwrap();
        assert_eq!((s.n, s.name.as_str()), (2, "x"));
        assert!((s.alpha - 1.0 / 15.0).abs() < 1e-15);
        assert!((s.omega_eff - 2.0 * PI * 1e6).abs() < 1e-6);
        assert!((s.tau * s.omega_eff - 0.2).abs() < 1e-15);
        let p = s.protocol().unwrap();
        assert_eq!(p.pulse.amplitude, s.omega_eff);
        assert!(s.comment_header().lines().all(|l| l.starts_with("# ")));
    }

    #[test]
    fn missing_unit_names_field() {
        let text = CNOT.replace("\"30 MHz*2pi\"", "\"30\"");
        let e = Scenario::from_toml_str(&text, "x").unwrap_err();
        assert!(e.is_config());
        assert!(e.to_string().contains("drive.omega"), "{e}");
        let bare = CNOT.replace("\"30 MHz*2pi\"", "30.0");
        assert!(Scenario::from_toml_str(&bare, "x").unwrap_err().is_config());
    }

    #[test]
    fn rab_delta_is_solved_and_echoed() {
        let text = CNOT
            .replace("delta = \"450 MHz*2pi\"", "delta = \"rab\"\nalpha = 0.0\ninteractions = [\"2 GHz*2pi\"]")
            .replace("omega = \"30 MHz*2pi\"", "omega = \"0 MHz*2pi\"");
        let s = Scenario::from_toml_str(&text, "x").unwrap();
        assert!((s.delta - 2.0 * PI * 1e9).abs() < 1e-12 * s.delta);
        assert!(s.protocol().is_err());
        let text = CNOT.replace(
            "delta = \"450 MHz*2pi\"",
            "delta = \"rab\"\nalpha = 0.0666\ninteractions = [\"2 GHz*2pi\"]",
        );
        let s = Scenario::from_toml_str(&text, "x").unwrap();
        assert_eq!(s.delta_source, "rab");
        let r = rab_for(&s).unwrap();
        assert!(r.residual.abs() < 1e-9 * r.delta);
        assert!((r.delta - s.delta).abs() < 1e-6 * s.delta);
    }

    #[test]
    fn sweep_axes_parse() {
        let text = format!(
            "{CNOT}\n[[sweep.axis]]\nparam = \"gamma\"\nvalues = [\"0 kHz*2pi\", \"10 kHz*2pi\"]\n[[sweep.axis]]\nparam = \"amplitude_scale\"\nvalues = [0.98, 1]\n"
        );
        let s = Scenario::from_toml_str(&text, "x").unwrap();
        assert_eq!(s.sweep.len(), 2);
        assert_eq!(s.sweep[1].values, vec![0.98, 1.0]);
        let t = s.with_param(SweepParam::Tau, 0.5).unwrap();
        assert!((t.tau * t.omega_eff - 0.5).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = CNOT.replace("[pulse]", "[pulse]\ncolour = 1");
        assert!(Scenario::from_toml_str(&text, "x").unwrap_err().is_config());
    }
}
