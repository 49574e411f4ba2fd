//! Experiment drivers behind the `varimex` binary.
//!
//! Every command writes plain CSV: `#` metadata lines, a header row, then
//! data. Floats use Rust's shortest round-trip scientific form (`{:e}`),
//! so identical configurations give byte-identical files.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::analysis::{
    max_energy_error, stability_report, sup_difference, windowed_mean, ENERGY_ERROR_CAP,
};
use crate::error::Error;
use crate::integrators::{integrate, Method, Status, StepperSpec, Trajectory};
use crate::system::{
    coupled_oscillator_initial_state, fpu_exchange_initial_state, FpuParams, OscillatorySystem,
    State,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_BLOWUP: u8 = 2;
pub const EXIT_CHECK: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Numerics(#[from] Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> u8 {
        EXIT_CONFIG
    }
}

type HResult<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Parser)]
#[command(
    name = "varimex",
    version,
    about = "Variational IMEX integrator experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one system and write its trajectory.
    Integrate(IntegrateArgs),
    /// Energy error of RESPA and IMEX across ωh/π on the scalar model.
    ResonanceSweep(SweepArgs),
    /// Stiff-energy exchange on the FPU chain, optionally against a reference.
    FpuExchange(FpuArgs),
    /// Empirical convergence order on the scalar model.
    Convergence(ConvergenceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemChoice {
    /// U = ½q², W = ½ω²q²
    Model,
    /// Fermi–Pasta–Ulam chain with stiff springs
    Fpu,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

const METHOD_HELP: &str = "sv | imex | respa | midpoint | modified-impulse";

#[derive(Debug, Clone, Args)]
pub struct IntegrateArgs {
    #[arg(long, value_enum, default_value = "model")]
    pub system: SystemChoice,
    /// Fast frequency ω
    #[arg(long, default_value_t = 50.0)]
    pub omega: f64,
    /// FPU chain length (number of stiff springs)
    #[arg(long, default_value_t = 3)]
    pub ell: usize,
    #[arg(long, value_parser = parse_method, help = METHOD_HELP)]
    pub method: Method,
    #[arg(long)]
    pub h: f64,
    #[arg(long)]
    pub t_end: f64,
    /// Keep every stride-th step
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Fast substeps per step for respa
    #[arg(long, default_value_t = 100)]
    pub substeps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    /// Spacing of ωh/π
    #[arg(long, default_value_t = 0.01)]
    pub grid: f64,
    /// Largest ωh/π
    #[arg(long = "max", default_value_t = 4.5)]
    pub sweep_max: f64,
    #[arg(long, default_value_t = 1000.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 100)]
    pub substeps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct FpuArgs {
    #[arg(long, default_value_t = 3)]
    pub ell: usize,
    #[arg(long, default_value_t = 50.0)]
    pub omega: f64,
    #[arg(long, value_parser = parse_method, default_value = "imex", help = METHOD_HELP)]
    pub method: Method,
    #[arg(long, default_value_t = 0.03)]
    pub h: f64,
    #[arg(long, default_value_t = 200.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    /// Averaging window for the stiff energies
    #[arg(long, default_value_t = 1.0)]
    pub window: f64,
    /// Step of a Störmer/Verlet reference run to compare against
    #[arg(long)]
    pub reference_h: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub substeps: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ConvergenceArgs {
    /// Coarsest step; the study also runs h/2, h/4, h/8
    #[arg(long, default_value_t = 0.1)]
    pub h: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 2.0)]
    pub omega: f64,
    /// Restrict to one method (default: sv, imex, midpoint)
    #[arg(long, value_parser = parse_method, help = METHOD_HELP)]
    pub method: Option<Method>,
    /// Optional CSV of (method, h, err)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> HResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(HarnessError::Config(format!(
            "--{name} must be positive, got {v}"
        )))
    }
}

fn at_least_one(name: &str, v: usize) -> HResult<()> {
    if v >= 1 {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("--{name} must be at least 1")))
    }
}

/// Float formatting used in every data file.
pub fn fmt_f(x: f64) -> String {
    format!("{x:e}")
}

fn write_file(path: &Path, contents: &str) -> HResult<()> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(contents.as_bytes()).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn status_line(status: &Status) -> String {
    match status {
        Status::Completed => "# status=completed\n".to_string(),
        Status::Blowup { t, cause } => format!("# status=blowup t={} cause={cause}\n", fmt_f(*t)),
    }
}

/// Runs a parsed command line, returning the process exit code.
pub fn run(cli: &Cli) -> HResult<u8> {
    match &cli.command {
        Command::Integrate(a) => cmd_integrate(a),
        Command::ResonanceSweep(a) => cmd_resonance_sweep(a),
        Command::FpuExchange(a) => cmd_fpu_exchange(a),
        Command::Convergence(a) => cmd_convergence(a).map(|(code, report)| {
            print!("{report}");
            code
        }),
    }
}

fn build_system(a: &IntegrateArgs) -> HResult<(OscillatorySystem, State)> {
    Ok(match a.system {
        SystemChoice::Model => (
            OscillatorySystem::coupled_oscillator(a.omega)?,
            coupled_oscillator_initial_state(a.omega),
        ),
        SystemChoice::Fpu => {
            let params = FpuParams::new(a.ell, a.omega)?;
            (
                OscillatorySystem::fpu(params)?,
                fpu_exchange_initial_state(params),
            )
        }
    })
}

pub fn cmd_integrate(a: &IntegrateArgs) -> HResult<u8> {
    positive("h", a.h)?;
    positive("t-end", a.t_end)?;
    positive("omega", a.omega)?;
    at_least_one("stride", a.stride)?;
    at_least_one("substeps", a.substeps)?;
    at_least_one("ell", a.ell)?;
    let (sys, s0) = build_system(a)?;
    let spec = StepperSpec::new(a.method, a.h).with_substeps(a.substeps);
    let traj = integrate(&sys, &spec, &s0, a.t_end, a.stride)?;

    let d = sys.dim();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# command=integrate system={} omega={} ell={} method={} h={} t_end={} stride={} substeps={}",
        sys.label(),
        fmt_f(a.omega),
        a.ell,
        a.method,
        fmt_f(a.h),
        fmt_f(a.t_end),
        a.stride,
        a.substeps
    );
    out.push_str(&status_line(&traj.status));
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("q_{i}")));
    header.extend((1..=d).map(|i| format!("p_{i}")));
    header.push("H".into());
    if let Some(params) = sys.fpu_params() {
        header.extend((1..=params.ell).map(|j| format!("I_{j}")));
        header.push("I_total".into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![fmt_f(s.state.t)];
        row.extend(s.state.q.iter().map(|&v| fmt_f(v)));
        row.extend(s.state.p.iter().map(|&v| fmt_f(v)));
        row.push(fmt_f(s.energy));
        if let Some(stiff) = &s.stiff {
            row.extend(stiff.iter().map(|&v| fmt_f(v)));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_file(&a.out, &out)?;
    Ok(if traj.status.is_blowup() {
        eprintln!(
            "blow-up: {}",
            status_line(&traj.status)
                .trim_start_matches("# ")
                .trim_end()
        );
        EXIT_BLOWUP
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub omega_h_over_pi: f64,
    pub omega: f64,
    pub err_respa: f64,
    pub err_imex: f64,
}

/// Maximum energy error of RESPA and IMEX at ω = rπ/h on the scalar
/// model, both started from the same state.
pub fn sweep_point(h: f64, r: f64, t_end: f64, substeps: usize) -> crate::Result<SweepRow> {
    let omega = r * std::f64::consts::PI / h;
    let sys = OscillatorySystem::coupled_oscillator(omega)?;
    let s0 = coupled_oscillator_initial_state(omega);
    let err = |method| -> crate::Result<f64> {
        let spec = StepperSpec::new(method, h).with_substeps(substeps);
        let traj = integrate(&sys, &spec, &s0, t_end, 1)?;
        Ok(max_energy_error(&traj, |s| sys.hamiltonian(s)))
    };
    Ok(SweepRow {
        omega_h_over_pi: r,
        omega,
        err_respa: err(Method::Respa)?,
        err_imex: err(Method::Imex)?,
    })
}

/// Grid points k·grid, k = 1..⌊max/grid⌋.
pub fn sweep_grid(grid: f64, sweep_max: f64) -> Vec<f64> {
    let n = (sweep_max / grid + 1e-9).floor() as usize;
    (1..=n).map(|k| k as f64 * grid).collect()
}

/// All sweep rows in grid order; points run in parallel.
pub fn resonance_sweep(
    h: f64,
    grid: f64,
    sweep_max: f64,
    t_end: f64,
    substeps: usize,
) -> crate::Result<Vec<SweepRow>> {
    sweep_grid(grid, sweep_max)
        .into_par_iter()
        .map(|r| sweep_point(h, r, t_end, substeps))
        .collect()
}

pub fn cmd_resonance_sweep(a: &SweepArgs) -> HResult<u8> {
    positive("h", a.h)?;
    positive("grid", a.grid)?;
    positive("max", a.sweep_max)?;
    positive("t-end", a.t_end)?;
    at_least_one("substeps", a.substeps)?;
    if sweep_grid(a.grid, a.sweep_max).is_empty() {
        return Err(HarnessError::Config("--max is smaller than --grid".into()));
    }
    let rows = resonance_sweep(a.h, a.grid, a.sweep_max, a.t_end, a.substeps)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# command=resonance-sweep h={} grid={} max={} t_end={} substeps={} energy_error_cap={}",
        fmt_f(a.h),
        fmt_f(a.grid),
        fmt_f(a.sweep_max),
        fmt_f(a.t_end),
        a.substeps,
        fmt_f(ENERGY_ERROR_CAP)
    );
    out.push_str("omega_h_over_pi,omega,err_respa,err_imex\n");
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fmt_f(r.omega_h_over_pi),
            fmt_f(r.omega),
            fmt_f(r.err_respa),
            fmt_f(r.err_imex)
        );
    }
    write_file(&a.out, &out)?;
    Ok(EXIT_OK)
}

/// FPU run from the standard exchange start state.
pub fn fpu_run(
    params: FpuParams,
    method: Method,
    h: f64,
    t_end: f64,
    stride: usize,
    substeps: usize,
) -> crate::Result<Trajectory> {
    let sys = OscillatorySystem::fpu(params)?;
    let spec = StepperSpec::new(method, h).with_substeps(substeps);
    integrate(
        &sys,
        &spec,
        &fpu_exchange_initial_state(params),
        t_end,
        stride,
    )
}

/// Windowed I₁..I_ℓ and I of a trajectory, one series per quantity.
pub fn windowed_stiff(traj: &Trajectory, window: f64) -> Vec<Vec<(f64, f64)>> {
    let k = traj.samples[0].stiff.as_ref().map_or(0, Vec::len);
    (0..k)
        .map(|j| {
            let series: Vec<(f64, f64)> = traj
                .samples
                .iter()
                .map(|s| (s.state.t, s.stiff.as_ref().expect("fpu sample")[j]))
                .collect();
            windowed_mean(&series, window)
        })
        .collect()
}

/// sup over the run's sample times of |⟨I_j⟩ − ⟨I_j^ref⟩| for j = 1..ℓ,
/// windowed means taken on each run's own samples and the reference
/// interpolated linearly.
pub fn exchange_sup_differences(run: &Trajectory, reference: &Trajectory, window: f64) -> Vec<f64> {
    let a = windowed_stiff(run, window);
    let b = windowed_stiff(reference, window);
    let ell = a.len().saturating_sub(1);
    (0..ell).map(|j| sup_difference(&a[j], &b[j])).collect()
}

/// max over t of |⟨I⟩(t) − I(0)|.
pub fn adiabatic_drift(traj: &Trajectory, window: f64) -> f64 {
    let w = windowed_stiff(traj, window);
    let total = w.last().expect("fpu trajectory");
    let i0 = *traj.samples[0]
        .stiff
        .as_ref()
        .expect("fpu sample")
        .last()
        .unwrap();
    total
        .iter()
        .map(|(_, v)| (v - i0).abs())
        .fold(0.0, f64::max)
}

/// Reference stride giving roughly the run's sample spacing.
pub fn reference_stride(h: f64, stride: usize, reference_h: f64) -> usize {
    ((h * stride as f64 / reference_h).round() as usize).max(1)
}

pub fn cmd_fpu_exchange(a: &FpuArgs) -> HResult<u8> {
    positive("h", a.h)?;
    positive("t-end", a.t_end)?;
    positive("omega", a.omega)?;
    positive("window", a.window)?;
    at_least_one("stride", a.stride)?;
    at_least_one("substeps", a.substeps)?;
    if let Some(r) = a.reference_h {
        positive("reference-h", r)?;
    }
    let params = FpuParams::new(a.ell, a.omega)?;
    let traj = fpu_run(params, a.method, a.h, a.t_end, a.stride, a.substeps)?;
    let reference = match a.reference_h {
        Some(rh) => Some(fpu_run(
            params,
            Method::StormerVerlet,
            rh,
            a.t_end,
            reference_stride(a.h, a.stride, rh),
            1,
        )?),
        None => None,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "# command=fpu-exchange ell={} omega={} method={} h={} t_end={} stride={} window={}",
        a.ell,
        fmt_f(a.omega),
        a.method,
        fmt_f(a.h),
        fmt_f(a.t_end),
        a.stride,
        fmt_f(a.window)
    );
    out.push_str(&status_line(&traj.status));
    let mut header = vec!["t".to_string()];
    header.extend((1..=a.ell).map(|j| format!("I_{j}")));
    header.push("I".into());
    header.push("H".into());
    out.push_str(&header.join(","));
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![fmt_f(s.state.t)];
        row.extend(
            s.stiff
                .as_ref()
                .expect("fpu sample")
                .iter()
                .map(|&v| fmt_f(v)),
        );
        row.push(fmt_f(s.energy));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    let _ = writeln!(
        out,
        "# adiabatic max|<I>-I(0)|={}",
        fmt_f(adiabatic_drift(&traj, a.window))
    );
    if let (Some(reference), Some(rh)) = (&reference, a.reference_h) {
        let diffs = exchange_sup_differences(&traj, reference, a.window);
        let mut line = format!(
            "# comparison reference=sv reference_h={} reference_status={}",
            fmt_f(rh),
            if reference.status.is_blowup() {
                "blowup"
            } else {
                "completed"
            }
        );
        for (j, d) in diffs.iter().enumerate() {
            let _ = write!(line, " sup_diff_I_{}={}", j + 1, fmt_f(*d));
        }
        out.push_str(&line);
        out.push('\n');
        println!("{}", line.trim_start_matches("# "));
    }
    write_file(&a.out, &out)?;
    let blown = traj.status.is_blowup() || reference.as_ref().is_some_and(|r| r.status.is_blowup());
    Ok(if blown {
        eprintln!(
            "blow-up: {}",
            status_line(&traj.status)
                .trim_start_matches("# ")
                .trim_end()
        );
        EXIT_BLOWUP
    } else {
        EXIT_OK
    })
}

/// Outcome of one method in a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceResult {
    pub method: Method,
    /// (h, error at t_end) for h, h/2, h/4, h/8.
    pub errors: Vec<(f64, f64)>,
    pub order: Option<f64>,
    /// Steps at which the run blew up or the linear map is unstable.
    pub unstable_steps: Vec<f64>,
}

impl ConvergenceResult {
    pub fn passed(&self) -> bool {
        self.unstable_steps.is_empty() && self.order.is_some_and(|o| (1.9..=2.1).contains(&o))
    }
}

/// Exact solution of q'' = −ν²q.
pub fn harmonic_exact(nu: f64, q0: f64, p0: f64, t: f64) -> (f64, f64) {
    let (s, c) = (nu * t).sin_cos();
    (c * q0 + s * p0 / nu, -nu * s * q0 + c * p0)
}

/// Runs the scalar model at h, h/2, h/4, h/8 and measures the
/// energy-norm error √(ν²Δq² + Δp²) at `t_end` against the exact flow.
pub fn convergence_study(
    method: Method,
    h: f64,
    t_end: f64,
    omega: f64,
) -> crate::Result<ConvergenceResult> {
    let sys = OscillatorySystem::coupled_oscillator(omega)?;
    let nu = (1.0 + omega * omega).sqrt();
    let s0 = State::new(0.0, vec![1.0], vec![0.0]);
    let mut errors = Vec::new();
    let mut unstable_steps = Vec::new();
    for k in 0..4 {
        let hk = h / f64::from(1 << k);
        let spec = StepperSpec::new(method, hk);
        let traj = integrate(&sys, &spec, &s0, t_end, usize::MAX)?;
        let unstable = stability_report(method, hk, omega).map_or(true, |r| !r.stable);
        if traj.status.is_blowup() || unstable {
            unstable_steps.push(hk);
        }
        let last = &traj.last().state;
        let (q, p) = harmonic_exact(nu, 1.0, 0.0, last.t);
        let err = (nu * nu * (last.q[0] - q).powi(2) + (last.p[0] - p).powi(2)).sqrt();
        errors.push((hk, err));
    }
    let order = crate::analysis::convergence_order(&errors).ok();
    Ok(ConvergenceResult {
        method,
        errors,
        order,
        unstable_steps,
    })
}

/// Returns the exit code and the text report.
pub fn cmd_convergence(a: &ConvergenceArgs) -> HResult<(u8, String)> {
    positive("h", a.h)?;
    positive("t-end", a.t_end)?;
    positive("omega", a.omega)?;
    let methods: Vec<Method> = match a.method {
        Some(m) => vec![m],
        None => vec![Method::StormerVerlet, Method::Imex, Method::MidpointFull],
    };
    let mut report = String::new();
    let mut csv = String::new();
    let _ = writeln!(
        csv,
        "# command=convergence h={} t_end={} omega={}",
        fmt_f(a.h),
        fmt_f(a.t_end),
        fmt_f(a.omega)
    );
    csv.push_str("method,h,err\n");
    let mut ok = true;
    for m in methods {
        let r = convergence_study(m, a.h, a.t_end, a.omega)?;
        for &(h, e) in &r.errors {
            let _ = writeln!(csv, "{m},{},{}", fmt_f(h), fmt_f(e));
        }
        let order = r.order.map_or("n/a".to_string(), |o| format!("{o:.4}"));
        let _ = write!(report, "{m}: order {order}");
        if !r.unstable_steps.is_empty() {
            let hs: Vec<String> = r.unstable_steps.iter().map(|h| fmt_f(*h)).collect();
            let _ = write!(report, " (blow-up at h = {})", hs.join(", "));
        }
        let _ = writeln!(report, " {}", if r.passed() { "ok" } else { "FAIL" });
        ok &= r.passed();
    }
    if let Some(path) = &a.out {
        write_file(path, &csv)?;
    }
    Ok((if ok { EXIT_OK } else { EXIT_CHECK }, report))
}
