//! Highly oscillatory systems `q̈ + Ω²q = g(q)` with unit mass.
//!
//! A system is the triple (Ω², U, g = −∇U). The fast potential is always
//! the quadratic `W(q) = ½ qᵀΩ²q`; the slow potential is arbitrary.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{dot, SymMatrix};

/// Phase-space point.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl State {
    pub fn new(t: f64, q: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len(), "q and p must have the same length");
        State { t, q, p }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite() && self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }
}

/// Slow potential U and its force g = −∇U.
pub trait SlowPotential: Send + Sync {
    fn value(&self, q: &[f64]) -> f64;

    /// Writes g(q) = −∇U(q) into `out`.
    fn force_into(&self, q: &[f64], out: &mut [f64]);

    fn force(&self, q: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; q.len()];
        self.force_into(q, &mut out);
        out
    }
}

/// U ≡ 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoPotential;

impl SlowPotential for NoPotential {
    fn value(&self, _q: &[f64]) -> f64 {
        0.0
    }

    fn force_into(&self, _q: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// U(q) = ½ qᵀq.
#[derive(Debug, Clone, Copy, Default)]
pub struct HalfSquare;

impl SlowPotential for HalfSquare {
    fn value(&self, q: &[f64]) -> f64 {
        0.5 * dot(q, q)
    }

    fn force_into(&self, q: &[f64], out: &mut [f64]) {
        for (o, x) in out.iter_mut().zip(q) {
            *o = -x;
        }
    }
}

/// Quartic soft springs of the FPU chain in the transformed variables
/// `(x₀,₁..x₀,ℓ, x₁,₁..x₁,ℓ)`. The fixed walls at both ends are folded
/// into the first and last terms.
#[derive(Debug, Clone, Copy)]
pub struct FpuQuartic {
    pub ell: usize,
}

impl FpuQuartic {
    /// Spring elongations; each enters U as ¼·s⁴.
    fn stretches(&self, x: &[f64]) -> Vec<f64> {
        let l = self.ell;
        let (x0, x1) = x.split_at(l);
        let mut s = Vec::with_capacity(l + 1);
        s.push(x0[0] - x1[0]);
        for i in 0..l - 1 {
            s.push(x0[i + 1] - x1[i + 1] - x0[i] - x1[i]);
        }
        s.push(x0[l - 1] + x1[l - 1]);
        s
    }
}

impl SlowPotential for FpuQuartic {
    fn value(&self, x: &[f64]) -> f64 {
        0.25 * self.stretches(x).iter().map(|s| s.powi(4)).sum::<f64>()
    }

    fn force_into(&self, x: &[f64], out: &mut [f64]) {
        let l = self.ell;
        let s = self.stretches(x);
        out.fill(0.0);
        // d(¼s⁴)/ds = s³, chained through each stretch's coefficients
        let c = s[0].powi(3);
        out[0] -= c;
        out[l] += c;
        for i in 0..l - 1 {
            let c = s[i + 1].powi(3);
            out[i + 1] -= c;
            out[l + i + 1] += c;
            out[i] += c;
            out[l + i] += c;
        }
        let c = s[l].powi(3);
        out[l - 1] -= c;
        out[2 * l - 1] -= c;
    }
}

/// Parameters of the FPU chain: `ell` stiff springs of frequency `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpuParams {
    pub ell: usize,
    pub omega: f64,
}

impl FpuParams {
    pub fn new(ell: usize, omega: f64) -> Result<Self> {
        if ell < 1 {
            return Err(Error::InvalidParameter("ell must be at least 1".into()));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidParameter("omega must be positive".into()));
        }
        Ok(FpuParams { ell, omega })
    }
}

impl Default for FpuParams {
    fn default() -> Self {
        FpuParams {
            ell: 3,
            omega: 50.0,
        }
    }
}

/// Which concrete model a system was built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SystemKind {
    /// Scalar coupled oscillator U = ½q², W = ½ω²q².
    CoupledOscillator {
        omega: f64,
    },
    Fpu(FpuParams),
    Custom,
}

/// Unit-mass system with quadratic fast potential and a slow potential.
#[derive(Clone)]
pub struct OscillatorySystem {
    omega2: SymMatrix,
    omega_diag: Option<Vec<f64>>,
    slow: Arc<dyn SlowPotential>,
    kind: SystemKind,
    label: String,
}

impl fmt::Debug for OscillatorySystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OscillatorySystem")
            .field("label", &self.label)
            .field("dim", &self.dim())
            .field("kind", &self.kind)
            .field("omega_diag", &self.omega_diag)
            .finish()
    }
}

impl OscillatorySystem {
    /// Builds a custom system. `omega_diag`, when given, must square to
    /// the diagonal of `omega2` with zero off-diagonal.
    pub fn new(
        label: impl Into<String>,
        omega2: SymMatrix,
        omega_diag: Option<Vec<f64>>,
        slow: Arc<dyn SlowPotential>,
    ) -> Result<Self> {
        if let Some(w) = &omega_diag {
            if w.len() != omega2.dim() {
                return Err(Error::DimensionMismatch {
                    expected: omega2.dim(),
                    found: w.len(),
                });
            }
            if w.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::InvalidParameter(
                    "diagonal frequencies must be nonnegative".into(),
                ));
            }
            let sq: Vec<f64> = w.iter().map(|v| v * v).collect();
            if omega2.diagonal().as_deref() != Some(sq.as_slice()) {
                return Err(Error::InvalidParameter(
                    "omega2 must equal diag(omega_diag²)".into(),
                ));
            }
        }
        debug_assert!(omega2.is_psd(1e-12), "Ω² must be positive semidefinite");
        Ok(OscillatorySystem {
            omega2,
            omega_diag,
            slow,
            kind: SystemKind::Custom,
            label: label.into(),
        })
    }

    /// Diagonal fast frequencies, with Ω² = diag(ω²).
    pub fn diagonal(
        label: impl Into<String>,
        omega: Vec<f64>,
        slow: Arc<dyn SlowPotential>,
    ) -> Result<Self> {
        let sq: Vec<f64> = omega.iter().map(|w| w * w).collect();
        Self::new(label, SymMatrix::from_diag(&sq), Some(omega), slow)
    }

    /// Scalar model: U = ½q², W = ½ω²q².
    pub fn coupled_oscillator(omega: f64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidParameter("omega must be positive".into()));
        }
        let mut sys = Self::diagonal("model", vec![omega], Arc::new(HalfSquare))?;
        sys.kind = SystemKind::CoupledOscillator { omega };
        Ok(sys)
    }

    /// FPU chain in transformed coordinates, ordered (x₀ block, x₁ block),
    /// so Ω = diag(0,…,0, ω,…,ω).
    pub fn fpu(params: FpuParams) -> Result<Self> {
        let FpuParams { ell, omega } = FpuParams::new(params.ell, params.omega)?;
        let mut w = vec![0.0; ell];
        w.extend(std::iter::repeat_n(omega, ell));
        let mut sys = Self::diagonal("fpu", w, Arc::new(FpuQuartic { ell }))?;
        sys.kind = SystemKind::Fpu(params);
        Ok(sys)
    }

    pub fn dim(&self) -> usize {
        self.omega2.dim()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn omega2(&self) -> &SymMatrix {
        &self.omega2
    }

    pub fn omega_diag(&self) -> Option<&[f64]> {
        self.omega_diag.as_deref()
    }

    pub fn fpu_params(&self) -> Option<FpuParams> {
        match self.kind {
            SystemKind::Fpu(p) => Some(p),
            _ => None,
        }
    }

    pub fn slow_potential(&self, q: &[f64]) -> f64 {
        self.slow.value(q)
    }

    pub fn slow_force(&self, q: &[f64]) -> Vec<f64> {
        self.slow.force(q)
    }

    pub fn slow_force_into(&self, q: &[f64], out: &mut [f64]) {
        self.slow.force_into(q, out)
    }

    /// W(q) = ½ qᵀΩ²q
    pub fn fast_potential(&self, q: &[f64]) -> f64 {
        0.5 * self.omega2.quad_form(q)
    }

    /// ∇W(q) = Ω²q
    pub fn fast_gradient(&self, q: &[f64]) -> Vec<f64> {
        match &self.omega_diag {
            Some(w) => q.iter().zip(w).map(|(x, w)| w * w * x).collect(),
            None => self.omega2.mul_vec(q),
        }
    }

    /// ∇(U + W)
    pub fn total_gradient(&self, q: &[f64]) -> Vec<f64> {
        let mut g = self.fast_gradient(q);
        let f = self.slow_force(q);
        for (gi, fi) in g.iter_mut().zip(f) {
            *gi -= fi;
        }
        g
    }

    pub fn potential(&self, q: &[f64]) -> f64 {
        self.slow_potential(q) + self.fast_potential(q)
    }

    /// H = ½|p|² + U(q) + W(q).
    pub fn hamiltonian(&self, state: &State) -> f64 {
        0.5 * dot(&state.p, &state.p) + self.potential(&state.q)
    }

    /// Stiff-spring energies I₁..I_ℓ followed by their sum, for FPU systems.
    pub fn stiff_energies(&self, state: &State) -> Option<Vec<f64>> {
        self.fpu_params().map(|p| stiff_energies(p, state))
    }
}

/// Orthogonal change of variables from chain displacements to
/// (spring centers, spring lengths): x₀,ᵢ = (q₂ᵢ + q₂ᵢ₋₁)/√2,
/// x₁,ᵢ = (q₂ᵢ − q₂ᵢ₋₁)/√2, and the same for momenta.
pub fn fpu_transform(q: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (to_spring_coords(q), to_spring_coords(p))
}

/// Inverse of [`fpu_transform`].
pub fn fpu_inverse_transform(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (from_spring_coords(x), from_spring_coords(y))
}

fn to_spring_coords(q: &[f64]) -> Vec<f64> {
    assert!(q.len().is_multiple_of(2), "FPU vectors have even length");
    let l = q.len() / 2;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = vec![0.0; 2 * l];
    for i in 0..l {
        let (a, b) = (q[2 * i], q[2 * i + 1]);
        x[i] = (b + a) * s;
        x[l + i] = (b - a) * s;
    }
    x
}

fn from_spring_coords(x: &[f64]) -> Vec<f64> {
    assert!(x.len().is_multiple_of(2), "FPU vectors have even length");
    let l = x.len() / 2;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut q = vec![0.0; 2 * l];
    for i in 0..l {
        let (c, d) = (x[i], x[l + i]);
        q[2 * i] = (c - d) * s;
        q[2 * i + 1] = (c + d) * s;
    }
    q
}

/// FPU energy in transformed variables:
/// ½Σ(y₀ᵢ² + y₁ᵢ²) + (ω²/2)Σx₁ᵢ² + U(x).
pub fn fpu_hamiltonian(params: FpuParams, state: &State) -> f64 {
    let l = params.ell;
    let x1 = &state.q[l..];
    0.5 * dot(&state.p, &state.p)
        + 0.5 * params.omega * params.omega * dot(x1, x1)
        + FpuQuartic { ell: l }.value(&state.q)
}

/// I_j = ½(y₁ⱼ² + ω²x₁ⱼ²) for j = 1..ℓ, followed by I = ΣI_j.
pub fn stiff_energies(params: FpuParams, state: &State) -> Vec<f64> {
    let l = params.ell;
    let w2 = params.omega * params.omega;
    let mut out: Vec<f64> = (0..l)
        .map(|j| 0.5 * (state.p[l + j].powi(2) + w2 * state.q[l + j].powi(2)))
        .collect();
    let total = out.iter().sum();
    out.push(total);
    out
}

/// Initial state of the slow-exchange experiment: x₀,₁ = 1, y₀,₁ = 1,
/// x₁,₁ = ω⁻¹, y₁,₁ = 1, all else zero.
pub fn fpu_exchange_initial_state(params: FpuParams) -> State {
    let d = 2 * params.ell;
    let mut q = vec![0.0; d];
    let mut p = vec![0.0; d];
    q[0] = 1.0;
    p[0] = 1.0;
    q[params.ell] = 1.0 / params.omega;
    p[params.ell] = 1.0;
    State::new(0.0, q, p)
}

/// Start state for the scalar coupled oscillator: displaced with zero
/// momentum and unit-½ total energy, q₀ = 1/√(1+ω²).
pub fn coupled_oscillator_initial_state(omega: f64) -> State {
    State::new(0.0, vec![1.0 / (1.0 + omega * omega).sqrt()], vec![0.0])
}
