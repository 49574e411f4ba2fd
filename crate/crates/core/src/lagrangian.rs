//! Discrete Lagrangians L_h(q₀, q₁) for `L = ½q̇ᵀMq̇ − U − W`.
//!
//! All three quadratures share the kinetic term (h/2)·vᵀMv with
//! v = (q₁ − q₀)/h. They differ in how the potentials are sampled:
//!
//! | variant     | U                       | W                      |
//! |-------------|-------------------------|------------------------|
//! | trapezoidal | (U(q₀)+U(q₁))/2         | (W(q₀)+W(q₁))/2        |
//! | midpoint    | U((q₀+q₁)/2)            | W((q₀+q₁)/2)           |
//! | IMEX        | (U(q₀)+U(q₁))/2         | W((q₀+q₁)/2)           |
//!
//! The partial derivatives D₁, D₂ are exact, so the discrete
//! Euler–Lagrange residual can be checked at roundoff level.

use crate::linalg::SymMatrix;
use crate::system::OscillatorySystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quadrature {
    Trapezoidal,
    Midpoint,
    Imex,
}

#[derive(Debug, Clone)]
pub struct DiscreteLagrangian<'a> {
    system: &'a OscillatorySystem,
    h: f64,
    variant: Quadrature,
    mass: SymMatrix,
}

impl<'a> DiscreteLagrangian<'a> {
    /// Unit mass.
    pub fn new(system: &'a OscillatorySystem, h: f64, variant: Quadrature) -> Self {
        Self::with_mass(system, h, variant, SymMatrix::identity(system.dim()))
    }

    pub fn with_mass(
        system: &'a OscillatorySystem,
        h: f64,
        variant: Quadrature,
        mass: SymMatrix,
    ) -> Self {
        assert!(h > 0.0, "step size must be positive");
        assert_eq!(mass.dim(), system.dim());
        DiscreteLagrangian {
            system,
            h,
            variant,
            mass,
        }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn variant(&self) -> Quadrature {
        self.variant
    }

    fn velocity(&self, q0: &[f64], q1: &[f64]) -> Vec<f64> {
        assert_eq!(q0.len(), self.system.dim());
        assert_eq!(q1.len(), self.system.dim());
        q0.iter().zip(q1).map(|(a, b)| (b - a) / self.h).collect()
    }

    pub fn value(&self, q0: &[f64], q1: &[f64]) -> f64 {
        let h = self.h;
        let sys = self.system;
        let v = self.velocity(q0, q1);
        let kinetic = 0.5 * h * self.mass.quad_form(&v);
        let mid = midpoint(q0, q1);
        let potential = match self.variant {
            Quadrature::Trapezoidal => 0.5 * (sys.potential(q0) + sys.potential(q1)),
            Quadrature::Midpoint => sys.potential(&mid),
            Quadrature::Imex => {
                0.5 * (sys.slow_potential(q0) + sys.slow_potential(q1)) + sys.fast_potential(&mid)
            }
        };
        kinetic - h * potential
    }

    /// ∂L_h/∂q₀
    pub fn d1(&self, q0: &[f64], q1: &[f64]) -> Vec<f64> {
        let mv = self.mass.mul_vec(&self.velocity(q0, q1));
        let pot = self.potential_gradient_share(q0, q1, Slot::First);
        mv.iter()
            .zip(&pot)
            .map(|(m, g)| -m - 0.5 * self.h * g)
            .collect()
    }

    /// ∂L_h/∂q₁
    pub fn d2(&self, q0: &[f64], q1: &[f64]) -> Vec<f64> {
        let mv = self.mass.mul_vec(&self.velocity(q0, q1));
        let pot = self.potential_gradient_share(q0, q1, Slot::Second);
        mv.iter()
            .zip(&pot)
            .map(|(m, g)| m - 0.5 * self.h * g)
            .collect()
    }

    /// Potential gradient felt by one endpoint, before the −h/2 factor.
    /// Midpoint-sampled terms contribute ∇(·)(m) to both endpoints.
    fn potential_gradient_share(&self, q0: &[f64], q1: &[f64], slot: Slot) -> Vec<f64> {
        let sys = self.system;
        let end = match slot {
            Slot::First => q0,
            Slot::Second => q1,
        };
        let mid = midpoint(q0, q1);
        match self.variant {
            Quadrature::Trapezoidal => sys.total_gradient(end),
            Quadrature::Midpoint => sys.total_gradient(&mid),
            Quadrature::Imex => {
                let g = sys.slow_force(end);
                sys.fast_gradient(&mid)
                    .iter()
                    .zip(&g)
                    .map(|(w, g)| w - g)
                    .collect()
            }
        }
    }

    /// D₁L_h(q, q_next) + D₂L_h(q_prev, q); zero along exact discrete
    /// trajectories.
    pub fn del_residual(&self, q_prev: &[f64], q: &[f64], q_next: &[f64]) -> Vec<f64> {
        let a = self.d1(q, q_next);
        let b = self.d2(q_prev, q);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }

    /// p₀ = −D₁L_h(q₀, q₁)
    pub fn legendre_minus(&self, q0: &[f64], q1: &[f64]) -> Vec<f64> {
        self.d1(q0, q1).into_iter().map(|v| -v).collect()
    }

    /// p₁ = D₂L_h(q₀, q₁)
    pub fn legendre_plus(&self, q0: &[f64], q1: &[f64]) -> Vec<f64> {
        self.d2(q0, q1)
    }

    /// Discrete action Σ L_h(q_n, q_{n+1}).
    pub fn action(&self, path: &[Vec<f64>]) -> f64 {
        path.windows(2).map(|w| self.value(&w[0], &w[1])).sum()
    }
}

#[derive(Clone, Copy)]
enum Slot {
    First,
    Second,
}

fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
}

/// ‖r‖∞ / (1 + ‖p‖∞)
pub fn scaled_residual(residual: &[f64], p: &[f64]) -> f64 {
    crate::linalg::norm_inf(residual) / (1.0 + crate::linalg::norm_inf(p))
}
