//! One-step maps on phase space and the trajectory driver.
//!
//! The variational IMEX step is kick–oscillate–kick:
//!
//! ```text
//! p⁺      = p − (h/2)∇U(q)                 explicit slow kick
//! (q', p⁻) = implicit midpoint on T + W      one SPD solve with I + (h²/4)Ω²
//! p'      = p⁻ − (h/2)∇U(q')               explicit slow kick
//! ```
//!
//! The oscillate stage is solved through the midpoint itself,
//! `(I + (h²/4)Ω²) m = q + (h/2)p⁺`, then `q' = 2m − q` and
//! `p⁻ = p⁺ − hΩ²m`. Solving for `m` rather than `q'` keeps `Ω²m`
//! accurate when hω is large and `m` is tiny.

use std::fmt;
use std::str::FromStr;

use crate::analysis::modified_frequency;
use crate::error::{Error, Result};
use crate::linalg::{norm_inf, Cholesky, SymMatrix};
use crate::system::{OscillatorySystem, State};

/// Magnitude cap on ‖q‖∞ and ‖p‖∞ beyond which a run is declared blown up.
pub const BLOWUP_CAP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    StormerVerlet,
    Imex,
    Respa,
    MidpointFull,
    ModifiedImpulse,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::StormerVerlet,
        Method::Imex,
        Method::Respa,
        Method::MidpointFull,
        Method::ModifiedImpulse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::StormerVerlet => "sv",
            Method::Imex => "imex",
            Method::Respa => "respa",
            Method::MidpointFull => "midpoint",
            Method::ModifiedImpulse => "modified-impulse",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown method '{s}'")))
    }
}

/// Method and step parameters for one integration.
#[derive(Debug, Clone)]
pub struct StepperSpec {
    pub method: Method,
    pub h: f64,
    /// Fast substeps per step (RESPA only).
    pub substeps: usize,
    /// Mass matrix for Störmer/Verlet; identity when absent.
    pub mass_override: Option<SymMatrix>,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl StepperSpec {
    pub fn new(method: Method, h: f64) -> Self {
        StepperSpec {
            method,
            h,
            substeps: 100,
            mass_override: None,
            fp_tol: 1e-12,
            fp_max_iter: 100,
        }
    }

    pub fn with_substeps(mut self, substeps: usize) -> Self {
        self.substeps = substeps;
        self
    }

    pub fn with_mass(mut self, mass: SymMatrix) -> Self {
        self.mass_override = Some(mass);
        self
    }

    pub fn with_fixed_point(mut self, tol: f64, max_iter: usize) -> Self {
        self.fp_tol = tol;
        self.fp_max_iter = max_iter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter("h must be positive".into()));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParameter(
                "substeps must be at least 1".into(),
            ));
        }
        if !(self.fp_tol > 0.0) {
            return Err(Error::InvalidParameter("fp_tol must be positive".into()));
        }
        if self.fp_max_iter == 0 {
            return Err(Error::InvalidParameter(
                "fp_max_iter must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Exact flow of the slow potential for time `tau`: p ← p + τ·g(q).
pub fn kick(sys: &OscillatorySystem, state: &State, tau: f64) -> State {
    let mut out = state.clone();
    kick_in_place(sys, &out.q.clone(), &mut out.p, tau);
    out
}

fn kick_in_place(sys: &OscillatorySystem, q: &[f64], p: &mut [f64], tau: f64) {
    let g = sys.slow_force(q);
    for (pi, gi) in p.iter_mut().zip(g) {
        *pi += tau * gi;
    }
}

/// p ← p − τ·Ω²q without allocating for diagonal Ω.
fn fast_kick_in_place(sys: &OscillatorySystem, q: &[f64], p: &mut [f64], tau: f64) {
    match sys.omega_diag() {
        Some(w) => {
            for ((pi, qi), wi) in p.iter_mut().zip(q).zip(w) {
                *pi -= tau * wi * wi * qi;
            }
        }
        None => {
            let f = sys.omega2().mul_vec(q);
            for (pi, fi) in p.iter_mut().zip(f) {
                *pi -= tau * fi;
            }
        }
    }
}

/// Störmer/Verlet on the full potential V = U + W with mass M (identity
/// unless overridden): half kick, drift by hM⁻¹p⁺, half kick.
pub fn step_stormer_verlet(
    sys: &OscillatorySystem,
    state: &State,
    h: f64,
    mass_override: Option<&SymMatrix>,
) -> Result<State> {
    let factor = mass_override.map(Cholesky::factor).transpose()?;
    Ok(verlet_with(sys, state, h, factor.as_ref()))
}

fn verlet_with(sys: &OscillatorySystem, state: &State, h: f64, mass: Option<&Cholesky>) -> State {
    let mut q = state.q.clone();
    let mut p = state.p.clone();
    let grad = sys.total_gradient(&q);
    for (pi, gi) in p.iter_mut().zip(&grad) {
        *pi -= 0.5 * h * gi;
    }
    let mut v = p.clone();
    if let Some(m) = mass {
        m.solve_in_place(&mut v);
    }
    for (qi, vi) in q.iter_mut().zip(&v) {
        *qi += h * vi;
    }
    let grad = sys.total_gradient(&q);
    for (pi, gi) in p.iter_mut().zip(&grad) {
        *pi -= 0.5 * h * gi;
    }
    State::new(state.t + h, q, p)
}

/// Implicit midpoint on the fast subsystem T + W, with the factorization
/// of `I + (h²/4)Ω²` computed once.
#[derive(Debug, Clone)]
pub struct FastMidpoint {
    h: f64,
    factor: Cholesky,
}

impl FastMidpoint {
    pub fn new(sys: &OscillatorySystem, h: f64) -> Self {
        let a = SymMatrix::identity(sys.dim()).add_scaled(sys.omega2(), 0.25 * h * h);
        let factor = Cholesky::factor(&a).expect("I + (h²/4)Ω² is SPD for PSD Ω²");
        FastMidpoint { h, factor }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Advances (q, p) in place.
    pub fn apply(&self, sys: &OscillatorySystem, q: &mut [f64], p: &mut [f64]) {
        let h = self.h;
        let mut m: Vec<f64> = q
            .iter()
            .zip(p.iter())
            .map(|(qi, pi)| qi + 0.5 * h * pi)
            .collect();
        self.factor.solve_in_place(&mut m);
        fast_kick_in_place(sys, &m, p, h);
        for (qi, mi) in q.iter_mut().zip(&m) {
            *qi = 2.0 * mi - *qi;
        }
    }
}

/// Implicit midpoint step for T + W alone.
pub fn step_midpoint_fast(sys: &OscillatorySystem, state: &State, h: f64) -> State {
    let fm = FastMidpoint::new(sys, h);
    let mut out = state.clone();
    fm.apply(sys, &mut out.q, &mut out.p);
    out.t = state.t + h;
    out
}

fn imex_with(sys: &OscillatorySystem, state: &State, fm: &FastMidpoint) -> State {
    let h = fm.h();
    let mut q = state.q.clone();
    let mut p = state.p.clone();
    kick_in_place(sys, &q, &mut p, 0.5 * h);
    fm.apply(sys, &mut q, &mut p);
    kick_in_place(sys, &q, &mut p, 0.5 * h);
    State::new(state.t + h, q, p)
}

/// Variational IMEX step: slow kick, fast implicit midpoint, slow kick.
pub fn step_imex(sys: &OscillatorySystem, state: &State, h: f64) -> State {
    imex_with(sys, state, &FastMidpoint::new(sys, h))
}

/// r-RESPA impulse step: slow half kicks around `substeps` Störmer/Verlet
/// steps of size h/substeps on the fast potential alone.
pub fn step_respa(sys: &OscillatorySystem, state: &State, h: f64, substeps: usize) -> State {
    assert!(substeps >= 1);
    let mut q = state.q.clone();
    let mut p = state.p.clone();
    kick_in_place(sys, &q, &mut p, 0.5 * h);
    let hs = h / substeps as f64;
    for _ in 0..substeps {
        fast_kick_in_place(sys, &q, &mut p, 0.5 * hs);
        for (qi, pi) in q.iter_mut().zip(&p) {
            *qi += hs * pi;
        }
        fast_kick_in_place(sys, &q, &mut p, 0.5 * hs);
    }
    kick_in_place(sys, &q, &mut p, 0.5 * h);
    State::new(state.t + h, q, p)
}

/// IMEX written as a modified impulse method: the oscillate stage is the
/// exact rotation at the modified frequency ω̃, in the singularity-free
/// form
///
/// ```text
/// q' = cos(hω̃)·q + (h/2)(1 + cos(hω̃))·p⁺
/// p⁻ = −(2/h)(1 − cos(hω̃))·q + cos(hω̃)·p⁺
/// ```
///
/// applied per diagonal frequency. Requires a diagonal Ω.
pub fn step_modified_impulse(sys: &OscillatorySystem, state: &State, h: f64) -> Result<State> {
    let omega = sys.omega_diag().ok_or(Error::MissingDiagonalOmega)?;
    let cosines: Vec<f64> = omega
        .iter()
        .map(|&w| (h * modified_frequency(h.abs(), w)).cos())
        .collect();
    Ok(modified_impulse_with(sys, state, h, &cosines))
}

fn modified_impulse_with(sys: &OscillatorySystem, state: &State, h: f64, cosines: &[f64]) -> State {
    let mut q = state.q.clone();
    let mut p = state.p.clone();
    kick_in_place(sys, &q, &mut p, 0.5 * h);
    for ((qi, pi), &c) in q.iter_mut().zip(p.iter_mut()).zip(cosines) {
        let (q0, p0) = (*qi, *pi);
        *qi = c * q0 + 0.5 * h * (1.0 + c) * p0;
        *pi = -(2.0 / h) * (1.0 - c) * q0 + c * p0;
    }
    kick_in_place(sys, &q, &mut p, 0.5 * h);
    State::new(state.t + h, q, p)
}

/// Implicit midpoint on the full potential, by fixed-point iteration on
/// the midpoint `m = q + (h/2)p − (h²/4)∇V(m)`.
pub fn step_midpoint_full(
    sys: &OscillatorySystem,
    state: &State,
    h: f64,
    fp_tol: f64,
    fp_max_iter: usize,
) -> Result<State> {
    midpoint_full_counted(sys, state, h, fp_tol, fp_max_iter).map(|(s, _)| s)
}

/// As [`step_midpoint_full`], also returning the iteration count.
pub fn midpoint_full_counted(
    sys: &OscillatorySystem,
    state: &State,
    h: f64,
    fp_tol: f64,
    fp_max_iter: usize,
) -> Result<(State, usize)> {
    let base: Vec<f64> = state
        .q
        .iter()
        .zip(&state.p)
        .map(|(q, p)| q + 0.5 * h * p)
        .collect();
    let mut m = base.clone();
    for iter in 1..=fp_max_iter {
        let grad = sys.total_gradient(&m);
        let next: Vec<f64> = base
            .iter()
            .zip(&grad)
            .map(|(b, g)| b - 0.25 * h * h * g)
            .collect();
        let diff = m
            .iter()
            .zip(&next)
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        m = next;
        if !diff.is_finite() {
            break;
        }
        if diff <= fp_tol {
            let grad = sys.total_gradient(&m);
            let q: Vec<f64> = m.iter().zip(&state.q).map(|(m, q)| 2.0 * m - q).collect();
            let p: Vec<f64> = state.p.iter().zip(&grad).map(|(p, g)| p - h * g).collect();
            return Ok((State::new(state.t + h, q, p), iter));
        }
    }
    Err(Error::NoConvergence {
        iterations: fp_max_iter,
    })
}

/// A configured one-step map with any per-(system, h) setup done once.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    sys: &'a OscillatorySystem,
    spec: StepperSpec,
    prepared: Prepared,
}

#[derive(Debug, Clone)]
enum Prepared {
    None,
    Mass(Cholesky),
    Fast(FastMidpoint),
    Cosines(Vec<f64>),
}

impl<'a> Stepper<'a> {
    pub fn new(sys: &'a OscillatorySystem, spec: StepperSpec) -> Result<Self> {
        spec.validate()?;
        let h = spec.h;
        let prepared = match spec.method {
            Method::StormerVerlet => match &spec.mass_override {
                Some(m) => {
                    if m.dim() != sys.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: sys.dim(),
                            found: m.dim(),
                        });
                    }
                    Prepared::Mass(Cholesky::factor(m)?)
                }
                None => Prepared::None,
            },
            Method::Imex => Prepared::Fast(FastMidpoint::new(sys, h)),
            Method::ModifiedImpulse => {
                let omega = sys.omega_diag().ok_or(Error::MissingDiagonalOmega)?;
                Prepared::Cosines(
                    omega
                        .iter()
                        .map(|&w| (h * modified_frequency(h, w)).cos())
                        .collect(),
                )
            }
            Method::Respa | Method::MidpointFull => Prepared::None,
        };
        Ok(Stepper {
            sys,
            spec,
            prepared,
        })
    }

    pub fn spec(&self) -> &StepperSpec {
        &self.spec
    }

    pub fn system(&self) -> &OscillatorySystem {
        self.sys
    }

    pub fn step(&self, state: &State) -> Result<State> {
        let sys = self.sys;
        let h = self.spec.h;
        Ok(match (&self.spec.method, &self.prepared) {
            (Method::StormerVerlet, Prepared::Mass(m)) => verlet_with(sys, state, h, Some(m)),
            (Method::StormerVerlet, _) => verlet_with(sys, state, h, None),
            (Method::Imex, Prepared::Fast(fm)) => imex_with(sys, state, fm),
            (Method::ModifiedImpulse, Prepared::Cosines(c)) => {
                modified_impulse_with(sys, state, h, c)
            }
            (Method::Respa, _) => step_respa(sys, state, h, self.spec.substeps),
            (Method::MidpointFull, _) => {
                step_midpoint_full(sys, state, h, self.spec.fp_tol, self.spec.fp_max_iter)?
            }
            (m, _) => unreachable!("stepper for {m} was not prepared"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: State,
    /// Total energy H = ½|p|² + U + W.
    pub energy: f64,
    /// I₁..I_ℓ then I, for FPU systems.
    pub stiff: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlowupCause {
    NonFinite,
    MagnitudeCap,
    Stepper(Error),
}

impl fmt::Display for BlowupCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlowupCause::NonFinite => f.write_str("non-finite state"),
            BlowupCause::MagnitudeCap => write!(f, "state exceeded {BLOWUP_CAP:e}"),
            BlowupCause::Stepper(e) => write!(f, "stepper failed: {e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Status {
    Completed,
    Blowup { t: f64, cause: BlowupCause },
}

impl Status {
    pub fn is_blowup(&self) -> bool {
        matches!(self, Status::Blowup { .. })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub status: Status,
    pub h: f64,
    pub stride: usize,
    pub method: Method,
    pub system: String,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("trajectory has at least the initial sample")
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.state.t).collect()
    }
}

/// Number of steps of size `h` covering `span`. Ratios within 1e-9 of an
/// integer are rounded to it, so that e.g. 1000/0.1 is exactly 10⁴ steps.
pub fn step_count(span: f64, h: f64) -> u64 {
    let x = span / h;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u64
    } else {
        x.ceil() as u64
    }
}

fn sample(sys: &OscillatorySystem, state: State) -> Sample {
    Sample {
        energy: sys.hamiltonian(&state),
        stiff: sys.stiff_energies(&state),
        state,
    }
}

/// Integrates from `state0` to `t_end`, keeping every `stride`-th state
/// and the final one.
/// Times are `t₀ + n·h` with integer n. Stops at the first non-finite
/// state or one with ‖q‖∞ or ‖p‖∞ above [`BLOWUP_CAP`]; that state is
/// kept as the last sample.
pub fn integrate(
    sys: &OscillatorySystem,
    spec: &StepperSpec,
    state0: &State,
    t_end: f64,
    stride: usize,
) -> Result<Trajectory> {
    if state0.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            expected: sys.dim(),
            found: state0.dim(),
        });
    }
    if !(t_end > state0.t) {
        return Err(Error::InvalidParameter(
            "t_end must exceed the initial time".into(),
        ));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be at least 1".into()));
    }
    let stepper = Stepper::new(sys, spec.clone())?;
    let h = spec.h;
    let t0 = state0.t;
    let n_steps = step_count(t_end - t0, h);

    let mut samples = Vec::with_capacity((n_steps / stride as u64 + 2) as usize);
    samples.push(sample(sys, state0.clone()));
    let mut status = Status::Completed;
    let mut current = state0.clone();
    for n in 1..=n_steps {
        let t = t0 + n as f64 * h;
        let mut next = match stepper.step(&current) {
            Ok(s) => s,
            Err(e) => {
                status = Status::Blowup {
                    t,
                    cause: BlowupCause::Stepper(e),
                };
                break;
            }
        };
        next.t = t;
        let cause = if !next.is_finite() {
            Some(BlowupCause::NonFinite)
        } else if norm_inf(&next.q) > BLOWUP_CAP || norm_inf(&next.p) > BLOWUP_CAP {
            Some(BlowupCause::MagnitudeCap)
        } else {
            None
        };
        if let Some(cause) = cause {
            samples.push(sample(sys, next));
            status = Status::Blowup { t, cause };
            break;
        }
        if n % stride as u64 == 0 || n == n_steps {
            samples.push(sample(sys, next.clone()));
        }
        current = next;
    }
    Ok(Trajectory {
        samples,
        status,
        h,
        stride,
        method: spec.method,
        system: sys.label().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{HalfSquare, NoPotential};
    use std::sync::Arc;

    fn fast_only(omega: f64) -> OscillatorySystem {
        OscillatorySystem::diagonal("fast", vec![omega], Arc::new(NoPotential)).unwrap()
    }

    fn slow_harmonic() -> OscillatorySystem {
        OscillatorySystem::diagonal("harmonic", vec![0.0], Arc::new(HalfSquare)).unwrap()
    }

    fn st(q: f64, p: f64) -> State {
        State::new(0.0, vec![q], vec![p])
    }

    #[test]
    fn verlet_drift_and_harmonic() {
        let free = fast_only(0.0);
        let s = step_stormer_verlet(&free, &st(1.0, 2.0), 0.5, None).unwrap();
        assert_eq!((s.q[0], s.p[0], s.t), (2.0, 2.0, 0.5));

        let s = step_stormer_verlet(&slow_harmonic(), &st(1.0, 0.0), 0.1, None).unwrap();
        assert!((s.q[0] - 0.995).abs() < 1e-15);
        assert!((s.p[0] - (-0.09975)).abs() < 1e-15);
    }

    #[test]
    fn verlet_rejects_indefinite_mass() {
        let bad = SymMatrix::from_diag(&[-1.0]);
        assert!(step_stormer_verlet(&slow_harmonic(), &st(1.0, 0.0), 0.1, Some(&bad)).is_err());
    }

    #[test]
    fn verlet_stability_threshold() {
        // hν = 2.5 grows, hν = 1.9 stays bounded
        let grow = |h: f64| {
            let mut s = st(1.0, 0.0);
            let sys = slow_harmonic();
            for _ in 0..100 {
                s = step_stormer_verlet(&sys, &s, h, None).unwrap();
            }
            s.q[0].abs().max(s.p[0].abs())
        };
        assert!(grow(2.5) > 1e20);
        assert!(grow(1.9) < 10.0);
    }

    #[test]
    fn midpoint_fast_examples() {
        let s = step_midpoint_fast(&fast_only(0.0), &st(1.0, 2.0), 0.3);
        assert!((s.q[0] - 1.6).abs() < 1e-15 && s.p[0] == 2.0);

        let sys = fast_only(50.0);
        let s = step_midpoint_fast(&sys, &st(1.0, 0.0), 0.1);
        let q_expect = (1.0 - 6.25) / (1.0 + 6.25);
        assert!((s.q[0] - q_expect).abs() < 1e-15);
        assert!((s.q[0] - (-0.724138)).abs() < 1e-6);
        let p_expect = -0.1 * 2500.0 * (1.0 + q_expect) / 2.0;
        assert!((s.p[0] - p_expect).abs() < 1e-12);
        assert!((s.p[0] - (-34.4828)).abs() < 1e-4);

        let energy = |s: &State| 0.5 * s.p[0] * s.p[0] + 0.5 * 2500.0 * s.q[0] * s.q[0];
        let s0 = st(0.3, -7.0);
        let e0 = energy(&s0);
        let s1 = step_midpoint_fast(&sys, &s0, 0.1);
        assert!((energy(&s1) - e0).abs() <= 1e-10 * e0);
    }

    #[test]
    fn imex_reductions() {
        let sys = fast_only(50.0);
        let s = step_imex(&sys, &st(1.0, 0.0), 0.1);
        let m = step_midpoint_fast(&sys, &st(1.0, 0.0), 0.1);
        assert_eq!(s, m);

        let sys = slow_harmonic();
        for (q, p) in [(0.3, 1.2), (-2.0, 0.5), (4.0, -3.0)] {
            let a = step_imex(&sys, &st(q, p), 0.2);
            let b = step_stormer_verlet(&sys, &st(q, p), 0.2, None).unwrap();
            assert!((a.q[0] - b.q[0]).abs() < 1e-14 && (a.p[0] - b.p[0]).abs() < 1e-14);
        }
    }

    #[test]
    fn imex_is_verlet_with_modified_mass_on_model() {
        let sys = OscillatorySystem::coupled_oscillator(50.0).unwrap();
        let a = step_imex(&sys, &st(1.0, 1.0), 0.1);
        let mass = SymMatrix::from_diag(&[7.25]);
        let b = step_stormer_verlet(&sys, &st(1.0, 1.0), 0.1, Some(&mass)).unwrap();
        assert!((a.q[0] - b.q[0]).abs() <= 1e-13);
        assert!((a.p[0] - b.p[0]).abs() <= 1e-13);
    }

    #[test]
    fn respa_collapses() {
        let sys = slow_harmonic();
        let a = step_respa(&sys, &st(0.7, -0.2), 0.1, 1);
        let b = step_stormer_verlet(&sys, &st(0.7, -0.2), 0.1, None).unwrap();
        assert!((a.q[0] - b.q[0]).abs() < 1e-15 && (a.p[0] - b.p[0]).abs() < 1e-15);

        let sys = fast_only(20.0);
        let a = step_respa(&sys, &st(0.7, -0.2), 0.1, 10);
        let mut b = st(0.7, -0.2);
        for _ in 0..10 {
            b = step_stormer_verlet(&sys, &b, 0.01, None).unwrap();
        }
        assert!((a.q[0] - b.q[0]).abs() < 1e-14 && (a.p[0] - b.p[0]).abs() < 1e-13);
    }

    #[test]
    fn modified_impulse_examples() {
        let sys = fast_only(50.0);
        let s = step_modified_impulse(&sys, &st(1.0, 0.0), 0.1).unwrap();
        assert!((s.q[0] - (-0.724138)).abs() < 1e-6);
        assert!((s.p[0] - (-34.4828)).abs() < 1e-4);
        let m = step_midpoint_fast(&sys, &st(1.0, 0.0), 0.1);
        assert!((s.q[0] - m.q[0]).abs() < 1e-14 && (s.p[0] - m.p[0]).abs() < 1e-12);

        // Ω = 0: kicks around a pure drift, identical to IMEX
        let sys = slow_harmonic();
        let a = step_modified_impulse(&sys, &st(0.4, 0.9), 0.3).unwrap();
        let b = step_imex(&sys, &st(0.4, 0.9), 0.3);
        assert_eq!(a, b);
    }

    #[test]
    fn modified_impulse_needs_diagonal() {
        let omega2 = SymMatrix::new(crate::linalg::Matrix::from_rows(&[
            vec![2.0, 1.0],
            vec![1.0, 2.0],
        ]))
        .unwrap();
        let sys = OscillatorySystem::new("coupled", omega2, None, Arc::new(NoPotential)).unwrap();
        let s = State::new(0.0, vec![1.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(
            step_modified_impulse(&sys, &s, 0.1),
            Err(Error::MissingDiagonalOmega)
        );
        assert!(Stepper::new(&sys, StepperSpec::new(Method::ModifiedImpulse, 0.1)).is_err());
    }

    #[test]
    fn midpoint_full_matches_linear_solve() {
        let sys = fast_only(30.0);
        let a = step_midpoint_full(&sys, &st(0.5, 2.0), 0.02, 1e-14, 200).unwrap();
        let b = step_midpoint_fast(&sys, &st(0.5, 2.0), 0.02);
        assert!((a.q[0] - b.q[0]).abs() < 1e-13 && (a.p[0] - b.p[0]).abs() < 1e-11);

        let free = fast_only(0.0);
        let a = step_midpoint_full(&free, &st(0.5, 2.0), 0.25, 1e-14, 10).unwrap();
        assert_eq!((a.q[0], a.p[0]), (1.0, 2.0));
    }

    #[test]
    fn midpoint_full_reports_no_convergence() {
        // contraction factor h²ω²/4 = 25 ≫ 1
        let sys = fast_only(100.0);
        assert_eq!(
            step_midpoint_full(&sys, &st(1.0, 0.0), 0.1, 1e-12, 50),
            Err(Error::NoConvergence { iterations: 50 })
        );
    }

    #[test]
    fn step_count_rounding() {
        assert_eq!(step_count(1000.0, 0.1), 10_000);
        assert_eq!(step_count(200.0, 0.03), 6667);
        assert_eq!(step_count(10.0, 3.0), 4);
        assert_eq!(step_count(1.0, 0.001), 1000);
    }

    #[test]
    fn integrate_free_particle() {
        let sys = fast_only(0.0);
        let spec = StepperSpec::new(Method::StormerVerlet, 0.1);
        let traj = integrate(&sys, &spec, &st(0.0, 1.0), 1.0, 1).unwrap();
        assert_eq!(traj.status, Status::Completed);
        assert_eq!(traj.samples.len(), 11);
        for (n, s) in traj.samples.iter().enumerate() {
            assert_eq!(s.state.t, n as f64 * 0.1);
            assert!((s.state.q[0] - n as f64 * 0.1).abs() < 1e-14);
            assert_eq!(s.state.p[0], 1.0);
        }
    }

    #[test]
    fn integrate_stride_and_blowup() {
        let sys = OscillatorySystem::coupled_oscillator(50.0).unwrap();
        let spec = StepperSpec::new(Method::Imex, 0.1);
        let traj = integrate(&sys, &spec, &st(1.0, 0.0), 10.0, 7).unwrap();
        assert_eq!(traj.samples.len(), 2 + 100 / 7);
        let ts = traj.times();
        assert!(ts[..15]
            .windows(2)
            .all(|w| (w[1] - w[0] - 0.7).abs() < 1e-12));
        assert_eq!(ts[15], 10.0);

        let spec = StepperSpec::new(Method::StormerVerlet, 3.0);
        let traj = integrate(&sys, &spec, &st(1.0, 0.0), 10.0, 1).unwrap();
        assert!(traj.status.is_blowup());
        let last = &traj.last().state;
        assert!(
            !last.is_finite() || norm_inf(&last.q) > BLOWUP_CAP || norm_inf(&last.p) > BLOWUP_CAP
        );
    }

    #[test]
    fn integrate_reports_stepper_failure_as_blowup() {
        let sys = fast_only(100.0);
        let spec = StepperSpec::new(Method::MidpointFull, 0.1).with_fixed_point(1e-12, 20);
        let traj = integrate(&sys, &spec, &st(1.0, 0.0), 1.0, 1).unwrap();
        match traj.status {
            Status::Blowup {
                cause: BlowupCause::Stepper(Error::NoConvergence { .. }),
                ..
            } => {}
            other => panic!("unexpected status {other:?}"),
        }
    }

    #[test]
    fn integrate_rejects_bad_arguments() {
        let sys = fast_only(1.0);
        let spec = StepperSpec::new(Method::Imex, 0.1);
        assert!(integrate(&sys, &spec, &st(0.0, 0.0), 0.0, 1).is_err());
        assert!(integrate(&sys, &spec, &st(0.0, 0.0), 1.0, 0).is_err());
        let bad = StepperSpec::new(Method::Imex, -0.1);
        assert!(integrate(&sys, &bad, &st(0.0, 0.0), 1.0, 1).is_err());
        let s2 = State::new(0.0, vec![0.0; 2], vec![0.0; 2]);
        assert!(integrate(&sys, &spec, &s2, 1.0, 1).is_err());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("rk4".parse::<Method>().is_err());
    }
}
