//! Scenario-driven command-line runner.
//!
//! Exit status is 0 on success, 1 on a domain or integration error and 2 on a
//! configuration or usage error.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gateproto::{run_step, sphere_path, truth_table, GateReport, ModelKind};
use crate::hammodel::StepSpec;
use crate::pulsegen::{fmt_e, DressedSchedule};
use crate::qcore::QuantumState;
use crate::scenario::{rab_for, Scenario, SweepAxis};

#[derive(Debug, Parser)]
#[command(name = "rydberg-sta", version, about = "Dressed-state STA gates on Rydberg anti-blockade registers")]
struct Cli {
    /// Worker threads for truth tables and sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Accepted for interface stability; the dynamics are deterministic.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario model: effective, full-rw or full-cosine.
    #[arg(long)]
    model: Option<String>,
    /// Output directory; defaults to the scenario's `output.dir`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write base and dressed waveforms, angles and corrections.
    DesignPulse(Common),
    /// Solve the RAB condition for Δ.
    RabSolve(Common),
    /// Run the gate: truth tables, fidelities, trajectories and sphere paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Skip trajectory and sphere-path files.
        #[arg(long)]
        tables_only: bool,
    },
    /// Average fidelity over the scenario's sweep axes.
    Sweep(Common),
    /// Same as `simulate --tables-only`.
    TruthTable(Common),
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    if cli.seed.is_some() {
        log::info!("--seed has no effect: propagation is deterministic");
    }
    match cli.command {
        Command::DesignPulse(c) => design_pulse(&c),
        Command::RabSolve(c) => rab_solve(&c),
        Command::Simulate { common, tables_only } => simulate(&common, tables_only),
        Command::Sweep(c) => sweep(&c),
        Command::TruthTable(c) => simulate(&c, true),
    }
}

fn load(c: &Common) -> Result<(Scenario, PathBuf)> {
    let mut s = Scenario::from_path(&c.scenario)?;
    if let Some(m) = &c.model {
        s.model = m.parse::<ModelKind>()?;
    }
    let out = c
        .out
        .clone()
        .or_else(|| s.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    Ok((s, out))
}

fn create(dir: &Path, name: &str, header: Option<&str>) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    if let Some(h) = header {
        w.write_all(h.as_bytes())?;
    }
    Ok(w)
}

#[derive(Serialize)]
struct WithScenario<'a, T: Serialize> {
    scenario: &'a Scenario,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, s: &Scenario, body: T) -> Result<()> {
    let mut w = create(dir, name, None)?;
    serde_json::to_writer_pretty(&mut w, &WithScenario { scenario: s, body })?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct PulseSummary {
    t_start: f64,
    t_end: f64,
    duration: f64,
    tau: f64,
    edge: f64,
    omega_eff: f64,
    max_omega_new: f64,
    dressing: String,
    samples: usize,
}

fn design_pulse(c: &Common) -> Result<()> {
    let (s, out) = load(c)?;
    let p = s.protocol()?;
    let schedule = DressedSchedule::new(p.pulse, p.dressing.clone())?;
    let times = p.pulse.grid(s.samples);
    let samples = schedule.sample(&times)?;
    let header = s.comment_header();
    let mut w = create(&out, "waveform.csv", Some(&header))?;
    writeln!(w, "t,Omega_p_base,Omega_s_base,Omega_p,Omega_s,theta_base,theta,mu,g_x,g_z")?;
    let mut max_new: f64 = 0.0;
    for q in &samples {
        let (bp, bs) = p.pulse.base_pulses(q.t);
        max_new = max_new.max(q.omega_new);
        let row = [bp, bs, q.omega_p, q.omega_s, q.base.theta, q.theta_new, q.dressed.mu, q.corrections.gx, q.corrections.gz];
        let cells: Vec<String> = row.iter().map(|x| fmt_e(*x)).collect();
        writeln!(w, "{},{}", fmt_e(q.t), cells.join(","))?;
    }
    w.flush()?;
    let summary = PulseSummary {
        t_start: p.pulse.t_start,
        t_end: p.pulse.t_end,
        duration: p.pulse.duration(),
        tau: p.pulse.tau,
        edge: p.pulse.edge,
        omega_eff: p.pulse.amplitude,
        max_omega_new: max_new,
        dressing: p.dressing.name().into(),
        samples: samples.len(),
    };
    write_json(&out, "pulse_summary.json", &s, &summary)?;
    println!("wrote {}", out.join("waveform.csv").display());
    Ok(())
}

fn rab_solve(c: &Common) -> Result<()> {
    let (s, out) = load(c)?;
    let sol = rab_for(&s)?;
    let text = serde_json::to_string_pretty(&sol)?;
    println!("{text}");
    if c.out.is_some() || s.output_dir.is_some() {
        write_json(&out, "rab.json", &s, &sol)?;
    }
    Ok(())
}

fn write_tables(dir: &Path, header: &str, r: &GateReport) -> Result<()> {
    let mut w = create(dir, "truth_table.csv", Some(header))?;
    writeln!(w, "input,{}", r.basis.join(","))?;
    for (label, row) in r.basis.iter().zip(&r.truth_table) {
        let cells: Vec<String> = row.iter().map(|x| fmt_e(*x)).collect();
        writeln!(w, "{label},{}", cells.join(","))?;
    }
    w.flush()?;
    let mut w = create(dir, "step_tables.csv", Some(header))?;
    writeln!(w, "step,input,{}", r.step_basis.join(","))?;
    for (k, table) in r.step_tables.iter().enumerate() {
        for (label, row) in r.basis.iter().zip(table) {
            let cells: Vec<String> = row.iter().map(|x| fmt_e(*x)).collect();
            writeln!(w, "{},{label},{}", k + 1, cells.join(","))?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ErrorManifest {
    error: String,
    completed: Vec<String>,
}

fn simulate(c: &Common, tables_only: bool) -> Result<()> {
    let (s, out) = load(c)?;
    let p = s.protocol()?;
    let header = s.comment_header();
    let mut completed = Vec::new();
    let result = (|| -> Result<()> {
        let report = truth_table(&p)?;
        write_json(&out, "report.json", &s, &report)?;
        write_tables(&out, &header, &report)?;
        completed.extend(["report.json", "truth_table.csv", "step_tables.csv"].map(String::from));
        println!("average fidelity {:.6}", report.average_fidelity);
        if tables_only {
            return Ok(());
        }
        let space = p.space();
        for (label, traj) in report.basis.iter().zip(&report.trajectories) {
            let name = format!("trajectory_{label}.csv");
            let mut w = create(&out, &name, Some(&header))?;
            let labels: Vec<String> = (0..space.dim()).map(|i| space.label_string(i)).collect();
            writeln!(w, "t,{}", labels.join(","))?;
            for (t, st) in traj.times.iter().zip(&traj.states) {
                let cells: Vec<String> = st.populations().iter().map(|x| fmt_e(*x)).collect();
                writeln!(w, "{},{}", fmt_e(*t), cells.join(","))?;
            }
            w.flush()?;
            completed.push(name);
        }
        let step = StepSpec::new(1)?;
        let ones = "1".repeat(p.n);
        let input = QuantumState::basis(&space, &space.parse_labels(&ones)?)?;
        let (_, traj) = run_step(&p, step, &input)?;
        let path = sphere_path(&traj, p.n, step)?;
        let mut w = create(&out, "sphere_path.csv", Some(&header))?;
        writeln!(w, "t,a,b,c,leaky")?;
        for q in path {
            writeln!(w, "{},{},{},{},{}", fmt_e(q.t), fmt_e(q.a), fmt_e(q.b), fmt_e(q.c), q.leaky as u8)?;
        }
        w.flush()?;
        completed.push("sphere_path.csv".into());
        Ok(())
    })();
    if let Err(e) = &result {
        write_json(
            &out,
            "error.json",
            &s,
            ErrorManifest {
                error: e.to_string(),
                completed,
            },
        )?;
    }
    result
}

fn grid(axes: &[SweepAxis]) -> Vec<Vec<f64>> {
    axes.iter().fold(vec![Vec::new()], |acc, axis| {
        acc.into_iter()
            .flat_map(|prefix| {
                axis.values.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect()
    })
}

fn sweep(c: &Common) -> Result<()> {
    let (s, out) = load(c)?;
    s.protocol()?;
    let points = grid(&s.sweep);
    let rows: Vec<std::result::Result<f64, String>> = points
        .par_iter()
        .map(|point| {
            let mut sc = s.clone();
            for (axis, v) in s.sweep.iter().zip(point) {
                sc = sc.with_param(axis.param, *v).map_err(|e| e.to_string())?;
            }
            let p = sc.protocol().map_err(|e| e.to_string())?;
            crate::gateproto::average_fidelity(&p, p.theta_points).map_err(|e| e.to_string())
        })
        .collect();
    let header = s.comment_header();
    let mut w = create(&out, "sweep.csv", Some(&header))?;
    let names: Vec<&str> = s.sweep.iter().map(|a| a.param.name()).collect();
    let lead = if names.is_empty() { String::new() } else { format!("{},", names.join(",")) };
    writeln!(w, "{lead}F_av,error")?;
    for (point, row) in points.iter().zip(&rows) {
        let mut cells: Vec<String> = point.iter().map(|x| fmt_e(*x)).collect();
        match row {
            Ok(f) => cells.extend([fmt_e(*f), String::new()]),
            Err(e) => cells.extend(["nan".to_string(), format!("\"{}\"", e.replace('"', "'"))]),
        }
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    let failed = rows.iter().filter(|r| r.is_err()).count();
    println!("wrote {} points ({failed} failed) to {}", rows.len(), out.join("sweep.csv").display());
    Ok(())
}
