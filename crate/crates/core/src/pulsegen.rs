//! Vitanov-style base pulses and their dressed-state corrections.
//!
//! The base family keeps a constant effective amplitude `Ω̃` and sweeps the
//! mixing angle along a logistic sigmoid, `θ̃(t) = (π/2)/(1 + e^{−t/τ})`.
//! A dressing `(μ, ξ, η)` adds control corrections `g_x, g_z` which are folded
//! back into a modified pulse pair `(θ_new, Ω_new)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Default tolerance on the boundary angles, in radians.
pub const DEFAULT_EDGE: f64 = 1e-4;

/// Logistic `1/(1 + e^{−x})` evaluated without overflow.
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `θ̃(t) = (π/2)·1/(1 + exp(−t/τ))`.
pub fn vitanov_theta(t: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::param("tau", format!("must be positive, got {tau}")));
    }
    Ok(FRAC_PI_2 * logistic(t / tau))
}

/// Base pulse specification.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VitanovPulse {
    /// Effective amplitude `Ω̃` in rad/s.
    pub amplitude: f64,
    /// Smoothness `τ` in seconds.
    pub tau: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Boundary tolerance `ε_edge` in radians.
    pub edge: f64,
}

/// Mixing angle, its rates and the rms amplitude at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdiabaticAngles {
    pub theta: f64,
    pub theta_dot: f64,
    pub theta_ddot: f64,
    pub omega: f64,
    pub omega_dot: f64,
}

impl AdiabaticAngles {
    /// Mixing angle and amplitude of an arbitrary pulse pair,
    /// `θ = −atan(Ω_p′/Ω_s′)` and `Ω = √(Ω_p′² + Ω_s′²)`. Rates are left at zero.
    pub fn from_pulses(omega_p: f64, omega_s: f64) -> Self {
        Self {
            theta: (-omega_p).atan2(omega_s),
            theta_dot: 0.0,
            theta_ddot: 0.0,
            omega: omega_p.hypot(omega_s),
            omega_dot: 0.0,
        }
    }
}

/// Euler angles of the dressing frame and their rates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DressedAngles {
    pub mu: f64,
    pub mu_dot: f64,
    pub xi: f64,
    pub xi_dot: f64,
    pub eta: f64,
    pub eta_dot: f64,
}

/// Control corrections `g_x, g_z` in rad/s.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlCorrections {
    pub gx: f64,
    pub gz: f64,
}

impl VitanovPulse {
    /// Pulse with the window chosen so both boundary conditions hold.
    ///
    /// The mixing angle is truncated at `ε_θ = ε·min(1, τΩ̃)`. Near the edges
    /// `|μ| ≈ ε_θ/(τΩ̃)` for the simplest dressing, so this keeps both `θ̃` and
    /// `μ` within `ε` of their asymptotes.
    pub fn new(amplitude: f64, tau: f64, edge: f64) -> Result<Self> {
        check_positive("amplitude", amplitude)?;
        check_positive("tau", tau)?;
        check_edge(edge)?;
        let eps_theta = edge * (tau * amplitude).min(1.0);
        let half = tau * (PI / (2.0 * eps_theta) - 1.0).ln();
        Ok(Self {
            amplitude,
            tau,
            t_start: -half,
            t_end: half,
            edge,
        })
    }

    /// Pulse on an explicit window; fails if `θ̃` is not within `edge` of its
    /// asymptotes at both ends.
    pub fn with_window(amplitude: f64, tau: f64, t_start: f64, t_end: f64, edge: f64) -> Result<Self> {
        check_positive("amplitude", amplitude)?;
        check_positive("tau", tau)?;
        check_edge(edge)?;
        if !(t_start < 0.0 && 0.0 < t_end) {
            return Err(Error::param(
                "window",
                format!("need t_start < 0 < t_end, got [{t_start:e}, {t_end:e}]"),
            ));
        }
        let p = Self {
            amplitude,
            tau,
            t_start,
            t_end,
            edge,
        };
        let head = p.theta(t_start);
        let tail = FRAC_PI_2 - p.theta(t_end);
        if head >= edge || tail >= edge {
            return Err(Error::Boundary(format!(
                "window [{t_start:e}, {t_end:e}] s too narrow for tau = {tau:e} s: \
                 theta misses its asymptotes by {head:e} and {tail:e} rad (edge {edge:e})"
            )));
        }
        Ok(p)
    }

    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn theta(&self, t: f64) -> f64 {
        FRAC_PI_2 * logistic(t / self.tau)
    }

    pub fn theta_dot(&self, t: f64) -> f64 {
        let s = logistic(t / self.tau);
        FRAC_PI_2 * s * (1.0 - s) / self.tau
    }

    pub fn theta_ddot(&self, t: f64) -> f64 {
        let s = logistic(t / self.tau);
        FRAC_PI_2 * s * (1.0 - s) * (1.0 - 2.0 * s) / (self.tau * self.tau)
    }

    /// `(Ω_p′, Ω_s′) = (−Ω̃ sin θ̃, Ω̃ cos θ̃)`.
    pub fn base_pulses(&self, t: f64) -> (f64, f64) {
        let th = self.theta(t);
        (-self.amplitude * th.sin(), self.amplitude * th.cos())
    }

    pub fn adiabatic(&self, t: f64) -> AdiabaticAngles {
        AdiabaticAngles {
            theta: self.theta(t),
            theta_dot: self.theta_dot(t),
            theta_ddot: self.theta_ddot(t),
            omega: self.amplitude,
            omega_dot: 0.0,
        }
    }

    /// `samples` equally spaced times covering the window inclusively.
    pub fn grid(&self, samples: usize) -> Vec<f64> {
        linspace(self.t_start, self.t_end, samples)
    }
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive and finite, got {v}")))
    }
}

fn check_edge(edge: f64) -> Result<()> {
    if edge > 0.0 && edge < FRAC_PI_2 {
        Ok(())
    } else {
        Err(Error::param("edge", format!("must lie in (0, π/2), got {edge}")))
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| if i + 1 == n { b } else { a + h * i as f64 })
                .collect()
        }
    }
}

type AngleFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied `(μ, ξ)` schedule. Rates come from the optional closures or,
/// when absent, from centered finite differences with spacing `step`.
#[derive(Clone)]
pub struct CustomDressing {
    pub mu: AngleFn,
    pub xi: AngleFn,
    pub mu_dot: Option<AngleFn>,
    pub xi_dot: Option<AngleFn>,
    pub step: f64,
}

impl CustomDressing {
    pub fn new(
        mu: impl Fn(f64) -> f64 + Send + Sync + 'static,
        xi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        step: f64,
    ) -> Self {
        Self {
            mu: Arc::new(mu),
            xi: Arc::new(xi),
            mu_dot: None,
            xi_dot: None,
            step,
        }
    }

    pub fn with_rates(
        mut self,
        mu_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
        xi_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        self.mu_dot = Some(Arc::new(mu_dot));
        self.xi_dot = Some(Arc::new(xi_dot));
        self
    }

    fn rate(&self, f: &AngleFn, exact: &Option<AngleFn>, t: f64) -> f64 {
        match exact {
            Some(d) => d(t),
            None => (f(t + self.step) - f(t - self.step)) / (2.0 * self.step),
        }
    }
}

impl fmt::Debug for CustomDressing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomDressing")
            .field("analytic_rates", &self.mu_dot.is_some())
            .field("step", &self.step)
            .finish()
    }
}

/// Choice of dressing frame.
#[derive(Clone, Debug, Default)]
pub enum Dressing {
    /// No dressing: `g_x = g_z = 0`, plain adiabatic following.
    None,
    /// `μ = −atan(θ̇/Ω)`, `ξ = η = 0`, giving `g_x = μ̇`, `g_z = 0`.
    #[default]
    Simplest,
    Custom(CustomDressing),
}

impl Dressing {
    pub fn name(&self) -> &'static str {
        match self {
            Dressing::None => "none",
            Dressing::Simplest => "simplest",
            Dressing::Custom(_) => "custom",
        }
    }
}

/// Dressing angles at time `t`.
pub fn dressed_angles(angles: &AdiabaticAngles, choice: &Dressing, t: f64) -> DressedAngles {
    match choice {
        Dressing::None => DressedAngles::default(),
        Dressing::Simplest => {
            let (th_d, om) = (angles.theta_dot, angles.omega);
            let r = th_d / om;
            // d/dt (θ̇/Ω) = (θ̈Ω − θ̇Ω̇)/Ω²
            let r_dot = (angles.theta_ddot * om - th_d * angles.omega_dot) / (om * om);
            DressedAngles {
                mu: -r.atan(),
                mu_dot: -r_dot / (1.0 + r * r),
                ..DressedAngles::default()
            }
        }
        Dressing::Custom(c) => DressedAngles {
            mu: (c.mu)(t),
            mu_dot: c.rate(&c.mu, &c.mu_dot, t),
            xi: (c.xi)(t),
            xi_dot: c.rate(&c.xi, &c.xi_dot, t),
            eta: 0.0,
            eta_dot: 0.0,
        },
    }
}

/// General corrections
/// `g_x = μ̇/cos ξ − θ̇ tan ξ`,
/// `g_z = −Ω + ξ̇ + (μ̇ sin ξ − θ̇)/(tan μ cos ξ)`.
pub fn control_corrections(
    angles: &AdiabaticAngles,
    dressed: &DressedAngles,
    t: f64,
) -> Result<ControlCorrections> {
    let DressedAngles {
        mu,
        mu_dot,
        xi,
        xi_dot,
        ..
    } = *dressed;
    let (cx, sx) = (xi.cos(), xi.sin());
    if cx == 0.0 {
        return Err(Error::Singularity {
            t,
            what: "cos ξ = 0 in g_x".into(),
        });
    }
    let gx = mu_dot / cx - angles.theta_dot * xi.tan();
    let numerator = mu_dot * sx - angles.theta_dot;
    let denominator = mu.tan() * cx;
    let ratio = if denominator == 0.0 {
        if numerator != 0.0 {
            return Err(Error::Singularity {
                t,
                what: format!("tan μ = 0 with numerator {numerator:e} in g_z"),
            });
        }
        0.0
    } else {
        numerator / denominator
    };
    let gz = -angles.omega + xi_dot + ratio;
    if !gx.is_finite() || !gz.is_finite() {
        return Err(Error::Singularity {
            t,
            what: format!("non-finite corrections g_x = {gx}, g_z = {gz}"),
        });
    }
    Ok(ControlCorrections { gx, gz })
}

/// `(P_In, P_rr, P_Out)` along the dressed dark state.
pub fn predicted_populations(angles: &AdiabaticAngles, dressed: &DressedAngles) -> (f64, f64, f64) {
    let (st, ct) = angles.theta.sin_cos();
    let (sm, cm) = dressed.mu.sin_cos();
    let (sx, cx) = dressed.xi.sin_cos();
    let p_rr = (sm * cx).powi(2);
    let p_in = (ct * cm + st * sm * sx).powi(2);
    let p_out = (st * cm - ct * sm * sx).powi(2);
    (p_in, p_rr, p_out)
}

/// One evaluated point of a dressed schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleSample {
    pub t: f64,
    pub base: AdiabaticAngles,
    pub dressed: DressedAngles,
    pub corrections: ControlCorrections,
    pub theta_new: f64,
    pub omega_new: f64,
    /// Modified effective pulses `(Ω_p′, Ω_s′)`.
    pub omega_p: f64,
    pub omega_s: f64,
    /// `Ω̃ + g_z` and `g_x` both vanished; the angle was held at `θ̃`.
    pub degenerate: bool,
}

/// Base pulse plus dressing, evaluated on demand.
#[derive(Clone, Debug)]
pub struct DressedSchedule {
    pub pulse: VitanovPulse,
    pub dressing: Dressing,
}

impl DressedSchedule {
    /// Checks the dressing frame is within `edge` of the identity at both ends.
    pub fn new(pulse: VitanovPulse, dressing: Dressing) -> Result<Self> {
        let s = Self { pulse, dressing };
        for t in [pulse.t_start, pulse.t_end] {
            let d = dressed_angles(&pulse.adiabatic(t), &s.dressing, t);
            if d.mu.abs() > pulse.edge {
                return Err(Error::Boundary(format!(
                    "|mu({t:e})| = {:e} exceeds edge {:e}; widen the window",
                    d.mu.abs(),
                    pulse.edge
                )));
            }
        }
        Ok(s)
    }

    pub fn at(&self, t: f64) -> Result<ScheduleSample> {
        let base = self.pulse.adiabatic(t);
        let dressed = dressed_angles(&base, &self.dressing, t);
        let corrections = match self.dressing {
            Dressing::None => ControlCorrections::default(),
            Dressing::Simplest => ControlCorrections {
                gx: dressed.mu_dot,
                gz: 0.0,
            },
            Dressing::Custom(_) => control_corrections(&base, &dressed, t)?,
        };
        let x = base.omega + corrections.gz;
        let y = corrections.gx;
        let degenerate = x == 0.0 && y == 0.0;
        let theta_new = if degenerate {
            base.theta
        } else {
            base.theta - y.atan2(x)
        };
        let omega_new = x.hypot(y);
        Ok(ScheduleSample {
            t,
            base,
            dressed,
            corrections,
            theta_new,
            omega_new,
            omega_p: -omega_new * theta_new.sin(),
            omega_s: omega_new * theta_new.cos(),
            degenerate,
        })
    }

    /// Modified effective pulses `(Ω_p′, Ω_s′)` at `t`.
    pub fn effective_pulses(&self, t: f64) -> Result<(f64, f64)> {
        let s = self.at(t)?;
        Ok((s.omega_p, s.omega_s))
    }

    /// Samples on the grid with `θ_new` unwrapped against its predecessor.
    pub fn sample(&self, times: &[f64]) -> Result<Vec<ScheduleSample>> {
        let mut out: Vec<ScheduleSample> = Vec::with_capacity(times.len());
        for &t in times {
            let mut s = self.at(t)?;
            if let Some(prev) = out.last() {
                let turns = ((prev.theta_new - s.theta_new) / (2.0 * PI)).round();
                s.theta_new += turns * 2.0 * PI;
                if s.degenerate {
                    s.theta_new = prev.theta_new;
                    s.omega_p = -s.omega_new * s.theta_new.sin();
                    s.omega_s = s.omega_new * s.theta_new.cos();
                }
            }
            out.push(s);
        }
        let degenerate = out.iter().filter(|s| s.degenerate).count();
        if degenerate > 0 {
            log::warn!("{degenerate} samples had an undefined modified angle");
        }
        Ok(out)
    }

    /// CSV with columns `t, Omega_p, Omega_s, theta, mu, g_x, g_z`.
    pub fn write_csv<W: Write>(&self, times: &[f64], mut w: W) -> Result<()> {
        writeln!(w, "t,Omega_p,Omega_s,theta,mu,g_x,g_z")?;
        for s in self.sample(times)? {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                fmt_e(s.t),
                fmt_e(s.omega_p),
                fmt_e(s.omega_s),
                fmt_e(s.theta_new),
                fmt_e(s.dressed.mu),
                fmt_e(s.corrections.gx),
                fmt_e(s.corrections.gz)
            )?;
        }
        Ok(())
    }
}

/// C-style `%.12e` formatting, e.g. `1.234000000000e+06`.
pub fn fmt_e(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.12e}");
    match s.split_once('e') {
        Some((mant, exp)) => {
            let (sign, digits) = match exp.strip_prefix('-') {
                Some(d) => ('-', d),
                None => ('+', exp),
            };
            format!("{mant}e{sign}{digits:0>2}")
        }
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const TWO_PI: f64 = 2.0 * PI;

    fn reference_pulse() -> VitanovPulse {
        let om = TWO_PI * 1e6;
        VitanovPulse::new(om, 0.2 / om, DEFAULT_EDGE).unwrap()
    }

    #[test]
    fn theta_reference_values() {
        assert_relative_eq!(vitanov_theta(0.0, 1.0).unwrap(), PI / 4.0, epsilon = 1e-15);
        assert!((vitanov_theta(1e4, 1.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!(vitanov_theta(-1e4, 1.0).unwrap().abs() < 1e-300);
        // (π/2)/(1 + e^{-1}) to 16 digits, from an arbitrary-precision evaluation.
        assert_relative_eq!(
            vitanov_theta(2.5, 2.5).unwrap(),
            1.148_344_129_983_91,
            epsilon = 1e-15
        );
        assert!(vitanov_theta(0.0, 0.0).is_err());
        assert!(vitanov_theta(0.0, -1.0).is_err());
    }

    #[test]
    fn base_pulse_limits() {
        let p = reference_pulse();
        let (op, os) = p.base_pulses(0.0);
        let a = p.amplitude / 2f64.sqrt();
        assert_relative_eq!(op, -a, max_relative = 1e-15);
        assert_relative_eq!(os, a, max_relative = 1e-15);
        let (op, os) = p.base_pulses(-1e3 * p.tau);
        assert!(op.abs() < 1e-12 * p.amplitude);
        assert_relative_eq!(os, p.amplitude, max_relative = 1e-15);
    }

    #[test]
    fn window_meets_both_boundary_conditions() {
        for taux in [0.05, 0.2, 1.0, 3.0, 10.0] {
            let om = TWO_PI * 1e6;
            let p = VitanovPulse::new(om, taux / om, DEFAULT_EDGE).unwrap();
            assert!(p.theta(p.t_start) <= DEFAULT_EDGE * (1.0 + 1e-9));
            assert!(FRAC_PI_2 - p.theta(p.t_end) <= DEFAULT_EDGE * (1.0 + 1e-9));
            let s = DressedSchedule::new(p, Dressing::Simplest).unwrap();
            for t in [p.t_start, p.t_end] {
                assert!(s.at(t).unwrap().dressed.mu.abs() <= DEFAULT_EDGE);
            }
        }
    }

    #[test]
    fn narrow_window_is_a_boundary_error() {
        let om = TWO_PI * 1e6;
        let tau = 3.0 / om;
        let r = VitanovPulse::with_window(om, tau, -2.0 * tau, 2.0 * tau, DEFAULT_EDGE);
        assert!(matches!(r, Err(Error::Boundary(_))));
        let wide = VitanovPulse::with_window(om, tau, -20.0 * tau, 20.0 * tau, DEFAULT_EDGE);
        assert!(wide.is_ok());
    }

    #[test]
    fn simplest_mu_at_centre() {
        let p = reference_pulse();
        // θ̇(0) = (π/2)/(4τ)
        let th_dot0 = PI / (8.0 * p.tau);
        let fd = (p.theta(1e-6 * p.tau) - p.theta(-1e-6 * p.tau)) / (2e-6 * p.tau);
        assert_relative_eq!(p.theta_dot(0.0), th_dot0, max_relative = 1e-14);
        assert_relative_eq!(fd, th_dot0, max_relative = 1e-8);
        let d = dressed_angles(&p.adiabatic(0.0), &Dressing::Simplest, 0.0);
        assert_relative_eq!(d.mu, -(th_dot0 / p.amplitude).atan(), max_relative = 1e-14);
        assert_relative_eq!(d.mu, -(PI / 1.6).atan(), max_relative = 1e-14);
        // θ̈(0) = 0, so μ̇(0) = 0 and Ω_new(0) = Ω̃.
        let s = DressedSchedule::new(p, Dressing::Simplest).unwrap().at(0.0).unwrap();
        assert!(s.dressed.mu_dot.abs() < 1e-9 * p.amplitude);
        assert_relative_eq!(
            s.omega_new,
            (p.amplitude.powi(2) + s.dressed.mu_dot.powi(2)).sqrt(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn simplest_dressing_special_points() {
        let a = AdiabaticAngles {
            theta: 0.3,
            theta_dot: 0.0,
            theta_ddot: 0.0,
            omega: 2.0,
            omega_dot: 0.0,
        };
        assert_eq!(dressed_angles(&a, &Dressing::Simplest, 0.0).mu, 0.0);
        let b = AdiabaticAngles {
            theta_dot: 2.0,
            ..a
        };
        assert_relative_eq!(
            dressed_angles(&b, &Dressing::Simplest, 0.0).mu,
            -PI / 4.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn simplest_corrections_via_general_formula() {
        let p = reference_pulse();
        for t in p.grid(1001) {
            let a = p.adiabatic(t);
            let d = dressed_angles(&a, &Dressing::Simplest, t);
            let g = control_corrections(&a, &d, t).unwrap();
            assert!(g.gz.abs() < 1e-10 * p.amplitude, "g_z = {} at {t}", g.gz);
            assert_relative_eq!(g.gx, d.mu_dot, max_relative = 1e-15);
        }
    }

    #[test]
    fn static_schedule_needs_no_correction() {
        let a = AdiabaticAngles {
            theta: 0.4,
            theta_dot: 0.0,
            theta_ddot: 0.0,
            omega: 1.0,
            omega_dot: 0.0,
        };
        let g = control_corrections(&a, &DressedAngles::default(), 0.0).unwrap();
        assert_eq!(g.gx, 0.0);
    }

    #[test]
    fn singular_tan_mu_is_reported() {
        let a = AdiabaticAngles {
            theta: 0.4,
            theta_dot: 1.0,
            theta_ddot: 0.0,
            omega: 1.0,
            omega_dot: 0.0,
        };
        let r = control_corrections(&a, &DressedAngles::default(), 0.5);
        assert!(matches!(r, Err(Error::Singularity { .. })));
    }

    #[test]
    fn undressed_schedule_equals_base_pulses() {
        let p = reference_pulse();
        let s = DressedSchedule::new(p, Dressing::None).unwrap();
        for t in p.grid(257) {
            let x = s.at(t).unwrap();
            let (bp, bs) = p.base_pulses(t);
            assert!((x.theta_new - x.base.theta).abs() < 1e-12);
            assert!((x.omega_new - p.amplitude).abs() < 1e-12 * p.amplitude);
            assert!((x.omega_p - bp).abs() < 1e-12 * p.amplitude);
            assert!((x.omega_s - bs).abs() < 1e-12 * p.amplitude);
        }
    }

    #[test]
    fn dressed_envelope_exceeds_base() {
        let p = reference_pulse();
        let s = DressedSchedule::new(p, Dressing::Simplest).unwrap();
        let peak = s
            .sample(&p.grid(2001))
            .unwrap()
            .iter()
            .map(|x| x.omega_new)
            .fold(0.0, f64::max);
        assert!(peak > p.amplitude * 1.01);
    }

    #[test]
    fn predicted_population_cases() {
        let a = |theta| AdiabaticAngles {
            theta,
            theta_dot: 0.0,
            theta_ddot: 0.0,
            omega: 1.0,
            omega_dot: 0.0,
        };
        let d0 = DressedAngles::default();
        let (i, r, o) = predicted_populations(&a(0.0), &d0);
        assert_eq!((i, r, o), (1.0, 0.0, 0.0));
        let (i, r, o) = predicted_populations(&a(FRAC_PI_2), &d0);
        assert!(i < 1e-30 && r == 0.0 && (o - 1.0).abs() < 1e-15);
        let d = DressedAngles {
            mu: PI / 6.0,
            ..d0
        };
        let (i, r, o) = predicted_populations(&a(PI / 4.0), &d);
        assert_relative_eq!(r, 0.25, epsilon = 1e-15);
        assert_relative_eq!(i, 0.375, epsilon = 1e-15);
        assert_relative_eq!(o, 0.375, epsilon = 1e-15);
    }

    #[test]
    fn custom_dressing_finite_difference_rates() {
        let c = CustomDressing::new(|t: f64| 0.5 * (t).sin(), |t: f64| 0.2 * t * t, 1e-4);
        let d = dressed_angles(&reference_pulse().adiabatic(0.0), &Dressing::Custom(c), 0.7);
        assert_relative_eq!(d.mu_dot, 0.5 * 0.7f64.cos(), max_relative = 1e-8);
        assert_relative_eq!(d.xi_dot, 0.4 * 0.7, max_relative = 1e-8);
    }

    #[test]
    fn csv_number_format() {
        assert_eq!(fmt_e(1.234e6), "1.234000000000e+06");
        assert_eq!(fmt_e(-2.5e-7), "-2.500000000000e-07");
        assert_eq!(fmt_e(0.0), "0.000000000000e+00");
        assert_eq!(fmt_e(1e100), "1.000000000000e+100");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let p = reference_pulse();
        let s = DressedSchedule::new(p, Dressing::Simplest).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&p.grid(5), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,Omega_p,Omega_s,theta,mu,g_x,g_z");
        assert_eq!(lines.len(), 6);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 7));
    }

    proptest! {
        #[test]
        fn base_amplitude_is_constant(x in -30.0f64..30.0, taux in 0.05f64..5.0) {
            let om = TWO_PI * 1e6;
            let p = VitanovPulse::new(om, taux / om, DEFAULT_EDGE).unwrap();
            let (a, b) = p.base_pulses(x * p.tau);
            prop_assert!((a.hypot(b) - om).abs() < 1e-12 * om);
            let back = AdiabaticAngles::from_pulses(a, b);
            prop_assert!((back.theta - p.theta(x * p.tau)).abs() < 1e-12);
        }

        #[test]
        fn populations_sum_to_one(th in -4.0f64..4.0, mu in -4.0f64..4.0, xi in -4.0f64..4.0) {
            let a = AdiabaticAngles { theta: th, theta_dot: 0.0, theta_ddot: 0.0, omega: 1.0, omega_dot: 0.0 };
            let d = DressedAngles { mu, xi, ..DressedAngles::default() };
            let (i, r, o) = predicted_populations(&a, &d);
            prop_assert!((i + r + o - 1.0).abs() < 1e-12);
        }

        #[test]
        fn analytic_rates_match_differences(x in -8.0f64..8.0, taux in 0.1f64..3.0) {
            let om = TWO_PI * 1e6;
            let p = VitanovPulse::new(om, taux / om, DEFAULT_EDGE).unwrap();
            let t = x * p.tau;
            let h = 1e-4 * p.tau;
            let fd_theta = (p.theta(t + h) - p.theta(t - h)) / (2.0 * h);
            prop_assert!((fd_theta - p.theta_dot(t)).abs() <= 1e-6 * p.theta_dot(t).abs().max(1e-3 / p.tau));
            let mu = |t| dressed_angles(&p.adiabatic(t), &Dressing::Simplest, t).mu;
            let fd_mu = (mu(t + h) - mu(t - h)) / (2.0 * h);
            let an = dressed_angles(&p.adiabatic(t), &Dressing::Simplest, t).mu_dot;
            prop_assert!((fd_mu - an).abs() <= 1e-6 * an.abs().max(1e-3 / p.tau));
        }
    }
}
