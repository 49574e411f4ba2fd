//! Stability and diagnostic computations.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::integrators::{Method, Status, Stepper, StepperSpec, Trajectory};
use crate::linalg::{spectral_radius_2x2, SymMatrix};
use crate::system::{HalfSquare, OscillatorySystem, State};

/// Value reported for energy errors of blown-up runs, and the cap on any
/// finite error.
pub const ENERGY_ERROR_CAP: f64 = 1e12;

/// Frequency ω̃ at which the fast midpoint step rotates exactly:
/// tan(hω̃/2) = hω/2, so ω̃ = 2·atan(hω/2)/h ∈ [0, π/h).
pub fn modified_frequency(h: f64, omega: f64) -> f64 {
    2.0 * (0.5 * h * omega).atan() / h
}

/// M̃ = I + (h²/4)Ω².
pub fn modified_mass(h: f64, omega2: &SymMatrix) -> SymMatrix {
    SymMatrix::identity(omega2.dim()).add_scaled(omega2, 0.25 * h * h)
}

/// One-step matrix of a linear scalar method, read off by stepping the
/// basis states (1, 0) and (0, 1). Columns are the images.
pub fn propagation_matrix(sys: &OscillatorySystem, spec: &StepperSpec) -> Result<[[f64; 2]; 2]> {
    if sys.dim() != 1 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: sys.dim(),
        });
    }
    let stepper = Stepper::new(sys, spec.clone())?;
    let e1 = stepper.step(&State::new(0.0, vec![1.0], vec![0.0]))?;
    let e2 = stepper.step(&State::new(0.0, vec![0.0], vec![1.0]))?;
    Ok([[e1.q[0], e2.q[0]], [e1.p[0], e2.p[0]]])
}

/// The scalar model U = ½q², W = ½ω²q², allowing ω = 0.
pub fn scalar_model(omega: f64) -> Result<OscillatorySystem> {
    OscillatorySystem::diagonal("model", vec![omega], Arc::new(HalfSquare))
}

/// IMEX one-step matrix on the scalar model.
pub fn imex_propagation_matrix(h: f64, omega: f64) -> [[f64; 2]; 2] {
    let sys = scalar_model(omega).expect("omega must be nonnegative");
    propagation_matrix(&sys, &StepperSpec::new(Method::Imex, h)).expect("h must be positive")
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub method: Method,
    pub h: f64,
    pub omega: f64,
    pub spectral_radius: f64,
    pub stable: bool,
}

/// Linear stability of `method` on the scalar model.
pub fn stability_report(method: Method, h: f64, omega: f64) -> Result<StabilityReport> {
    let sys = scalar_model(omega)?;
    let p = propagation_matrix(&sys, &StepperSpec::new(method, h))?;
    let rho = spectral_radius_2x2(p);
    Ok(StabilityReport {
        method,
        h,
        omega,
        spectral_radius: rho,
        stable: rho <= 1.0 + 1e-12,
    })
}

/// max |H(sample) − H(sample₀)| over the trajectory, capped at
/// [`ENERGY_ERROR_CAP`]. Blown-up runs report the cap.
pub fn max_energy_error(traj: &Trajectory, energy: impl Fn(&State) -> f64) -> f64 {
    if matches!(traj.status, Status::Blowup { .. }) {
        return ENERGY_ERROR_CAP;
    }
    let Some(first) = traj.samples.first() else {
        return 0.0;
    };
    let e0 = energy(&first.state);
    let mut worst = 0.0_f64;
    for s in &traj.samples {
        let err = (energy(&s.state) - e0).abs();
        if !err.is_finite() {
            return ENERGY_ERROR_CAP;
        }
        worst = worst.max(err);
    }
    worst.min(ENERGY_ERROR_CAP)
}

/// Centered moving average over [t − w/2, t + w/2], truncated at the ends.
/// Assumes increasing times.
pub fn windowed_mean(series: &[(f64, f64)], window: f64) -> Vec<(f64, f64)> {
    let n = series.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &(_, v) in series {
        acc += v;
        prefix.push(acc);
    }
    let half = 0.5 * window;
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut out = Vec::with_capacity(n);
    for &(t, _) in series {
        while series[lo].0 < t - half {
            lo += 1;
        }
        while hi < n && series[hi].0 <= t + half {
            hi += 1;
        }
        let mean = if hi - lo == 1 {
            series[lo].1
        } else {
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        };
        out.push((t, mean));
    }
    out
}

/// Linear interpolation of an increasing-time series, clamped at the ends.
pub fn interpolate(series: &[(f64, f64)], t: f64) -> f64 {
    let k = series.partition_point(|&(s, _)| s < t);
    if k == 0 {
        return series[0].1;
    }
    if k == series.len() {
        return series[k - 1].1;
    }
    let (t0, v0) = series[k - 1];
    let (t1, v1) = series[k];
    v0 + (v1 - v0) * (t - t0) / (t1 - t0)
}

/// sup over the sample times of `a` of |a(t) − b(t)|, with `b` linearly
/// interpolated onto those times.
pub fn sup_difference(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    a.iter()
        .map(|&(t, v)| (v - interpolate(b, t)).abs())
        .fold(0.0, f64::max)
}

/// Least-squares slope of log(err) against log(h).
pub fn convergence_order(errors: &[(f64, f64)]) -> Result<f64> {
    if errors.len() < 2 {
        return Err(Error::DegenerateInput(
            "need at least two (h, err) pairs".into(),
        ));
    }
    if let Some(&(h, e)) = errors.iter().find(|&&(h, e)| !(e > 0.0) || !(h > 0.0)) {
        return Err(Error::DegenerateInput(format!(
            "step and error must be positive, got h = {h}, err = {e}"
        )));
    }
    let n = errors.len() as f64;
    let xs: Vec<f64> = errors.iter().map(|(h, _)| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateInput("all step sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::integrate;
    use crate::linalg::det_2x2;
    use proptest::prelude::*;

    fn arccos_form(h: f64, omega: f64) -> f64 {
        let a = (0.5 * h * omega).powi(2);
        ((1.0 - a) / (1.0 + a)).acos() / h
    }

    #[test]
    fn modified_frequency_examples() {
        assert_eq!(modified_frequency(0.1, 0.0), 0.0);
        assert!((modified_frequency(1e-6, 50.0) / 50.0 - 1.0).abs() < 1e-9);
        let wt = modified_frequency(0.1, 50.0);
        assert!((wt - 23.8058).abs() < 1e-4);
        assert!(((0.05 * wt).tan() - 2.5).abs() < 1e-12 * 2.5);
    }

    #[test]
    fn modified_frequency_closed_forms_agree() {
        let hs = [1e-4, 1e-3, 0.01, 0.1, 0.3, 1.0, 2.0, 5.0, 10.0];
        let ws = [0.0, 1e-3, 0.5, 1.0, 10.0, 50.0, 1e3, 1e5, 1e6];
        for &h in &hs {
            for &w in &ws {
                let a = modified_frequency(h, w);
                let b = arccos_form(h, w);
                // acos(y) amplifies a rounding error in y by 1/sin(hω̃)
                let x = 0.5 * h * w;
                let theta = h * a;
                let cond = f64::EPSILON * 4.0 / (h * theta.sin().max(1e-300));
                let tol = 1e-12 * a + cond;
                assert!((a - b).abs() <= tol, "h={h} w={w}: {a} vs {b}");
                assert!(h * a < std::f64::consts::PI);
                if w > 0.0 {
                    // tan near π/2 turns one ulp of angle into ε(1 + x²)
                    let t = (0.5 * h * a).tan();
                    let tol = 1e-12 * x + f64::EPSILON * (1.0 + x * x);
                    assert!((t - x).abs() <= tol, "h={h} w={w}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn modified_frequency_below_nyquist(h in 1e-4f64..10.0, w in 0.0f64..1e6) {
            let wt = modified_frequency(h, w);
            prop_assert!(wt >= 0.0 && h * wt < std::f64::consts::PI);
            prop_assert!(wt <= w * (1.0 + 1e-15));
        }

        #[test]
        fn imex_matrix_is_symplectic(h in 0.01f64..3.0, w in 0.0f64..1e4) {
            let p = imex_propagation_matrix(h, w);
            prop_assert!((det_2x2(p) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn modified_mass_examples() {
        let z = SymMatrix::from_diag(&[0.0, 0.0]);
        assert_eq!(modified_mass(0.3, &z), SymMatrix::identity(2));
        let m = modified_mass(0.1, &SymMatrix::from_diag(&[2500.0]));
        assert!((m[(0, 0)] - 7.25).abs() < 1e-14);
    }

    #[test]
    fn modified_mass_of_psd_is_at_least_identity() {
        use crate::linalg::Matrix;
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.gen_range(1..6);
            let b = Matrix::from_rows(
                &(0..n)
                    .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
                    .collect::<Vec<_>>(),
            );
            // BᵀB, symmetrized exactly
            let bb = b.transpose().matmul(&b);
            let sym = Matrix::from_rows(
                &(0..n)
                    .map(|i| (0..n).map(|j| 0.5 * (bb[(i, j)] + bb[(j, i)])).collect())
                    .collect::<Vec<_>>(),
            );
            let m = modified_mass(rng.gen_range(0.01..1.0), &SymMatrix::new(sym).unwrap());
            for _ in 0..20 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let xx: f64 = x.iter().map(|v| v * v).sum();
                assert!(m.quad_form(&x) >= xx * (1.0 - 1e-12));
            }
        }
    }

    #[test]
    fn propagation_matrix_reduces_to_verlet() {
        let h = 0.05;
        let p = imex_propagation_matrix(h, 0.0);
        let sv = [
            [1.0 - 0.5 * h * h, h],
            [-h * (1.0 - 0.25 * h * h), 1.0 - 0.5 * h * h],
        ];
        for i in 0..2 {
            for j in 0..2 {
                assert!((p[i][j] - sv[i][j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stability_threshold_grid() {
        for &w in &[0.0, 1.0, 10.0, 1e3, 1e6] {
            for &h in &[1.0, 1.5, 1.9, 1.99, 2.0] {
                let r = stability_report(Method::Imex, h, w).unwrap();
                assert!(r.stable, "h={h} w={w} rho={}", r.spectral_radius);
            }
            for &h in &[2.01, 2.5, 3.0] {
                let r = stability_report(Method::Imex, h, w).unwrap();
                assert!(!r.stable, "h={h} w={w}");
                assert!(r.spectral_radius > 1.0);
            }
        }
        assert!(stability_report(Method::Imex, 1.9, 1e6).unwrap().stable);
        assert!(!stability_report(Method::Imex, 2.1, 10.0).unwrap().stable);
        for &h in &[0.5, 1.0, 1.9, 2.5] {
            for &w in &[0.0, 1.0, 10.0, 1e3, 1e6] {
                assert!((det_2x2(imex_propagation_matrix(h, w)) - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn verlet_stability_depends_on_omega() {
        assert!(
            stability_report(Method::StormerVerlet, 0.1, 10.0)
                .unwrap()
                .stable
        );
        assert!(
            !stability_report(Method::StormerVerlet, 0.1, 50.0)
                .unwrap()
                .stable
        );
    }

    #[test]
    fn effective_frequency_matches_eigen_angle() {
        for &h in &[0.01, 0.1, 0.5, 1.0, 1.5, 1.9] {
            for &w in &[0.0, 1.0, 10.0, 50.0, 1e3] {
                let p = imex_propagation_matrix(h, w);
                let angle = (0.5 * (p[0][0] + p[1][1])).clamp(-1.0, 1.0).acos();
                let nu_eff = ((1.0 + w * w) / (1.0 + (0.5 * h * w).powi(2))).sqrt();
                let expect = 2.0 * (0.5 * h * nu_eff).asin();
                assert!((angle - expect).abs() <= 1e-8, "h={h} w={w}");
            }
        }
    }

    #[test]
    fn energy_error_trivia() {
        let sys = scalar_model(0.0).unwrap();
        let spec = StepperSpec::new(Method::StormerVerlet, 0.1);
        let mut traj =
            integrate(&sys, &spec, &State::new(0.0, vec![1.0], vec![0.0]), 1.0, 1).unwrap();
        assert_eq!(max_energy_error(&traj, |_| 3.0), 0.0);
        assert!(max_energy_error(&traj, |s| sys.hamiltonian(s)) > 0.0);
        traj.samples.truncate(1);
        assert_eq!(max_energy_error(&traj, |s| sys.hamiltonian(s)), 0.0);
    }

    #[test]
    fn energy_error_blowup_reports_cap() {
        let sys = scalar_model(50.0).unwrap();
        let spec = StepperSpec::new(Method::StormerVerlet, 3.0);
        let traj = integrate(&sys, &spec, &State::new(0.0, vec![1.0], vec![0.0]), 10.0, 1).unwrap();
        assert_eq!(
            max_energy_error(&traj, |s| sys.hamiltonian(s)),
            ENERGY_ERROR_CAP
        );
    }

    #[test]
    fn verlet_energy_error_is_second_order() {
        let sys = scalar_model(0.0).unwrap();
        let mut data = Vec::new();
        for &h in &[0.1, 0.05, 0.025] {
            let spec = StepperSpec::new(Method::StormerVerlet, h);
            let traj = integrate(
                &sys,
                &spec,
                &State::new(0.0, vec![1.0], vec![0.0]),
                100.0,
                1,
            )
            .unwrap();
            let e = max_energy_error(&traj, |s| sys.hamiltonian(s));
            assert!(e <= 0.2 * h * h);
            data.push((h, e));
        }
        assert!((data[0].1 / data[1].1 - 4.0).abs() < 0.1);
        let order = convergence_order(&data).unwrap();
        assert!((1.9..=2.1).contains(&order), "order {order}");
    }

    #[test]
    fn windowed_mean_examples() {
        let c: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, 3.5)).collect();
        for (a, b) in windowed_mean(&c, 1.0).iter().zip(&c) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - 3.5).abs() < 1e-14);
        }
        let s: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, (i as f64).sin())).collect();
        assert_eq!(windowed_mean(&s, 0.5), s);

        // period 0.1 ≪ window 2
        let dt = 0.001;
        let s: Vec<(f64, f64)> = (0..20_000)
            .map(|i| {
                let t = i as f64 * dt;
                (t, (2.0 * std::f64::consts::PI * t / 0.1).sin())
            })
            .collect();
        let m = windowed_mean(&s, 2.0);
        let interior = m.iter().filter(|(t, _)| *t >= 1.0 && *t <= 19.0);
        assert!(interior.map(|(_, v)| v.abs()).fold(0.0, f64::max) < 0.1);
        assert!(m.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max) < 0.1);
    }

    #[test]
    fn windowed_mean_matches_brute_force() {
        let s: Vec<(f64, f64)> = (0..300)
            .map(|i| {
                let t = i as f64 * 0.037 + (i as f64 * 0.7).sin() * 0.01;
                (t, (t * 3.1).cos() + 0.2 * t)
            })
            .collect();
        let m = windowed_mean(&s, 0.9);
        for (k, &(t, v)) in m.iter().enumerate() {
            let inside: Vec<f64> = s
                .iter()
                .filter(|(u, _)| *u >= t - 0.45 && *u <= t + 0.45)
                .map(|(_, v)| *v)
                .collect();
            let avg = inside.iter().sum::<f64>() / inside.len() as f64;
            assert_eq!(t, s[k].0);
            assert!((v - avg).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_and_sup_difference() {
        let b = vec![(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)];
        assert_eq!(interpolate(&b, 0.5), 1.0);
        assert_eq!(interpolate(&b, -1.0), 0.0);
        assert_eq!(interpolate(&b, 5.0), 0.0);
        let a = vec![(0.5, 1.0), (1.0, 1.0), (1.5, 1.0)];
        assert_eq!(sup_difference(&a, &b), 1.0);
    }

    #[test]
    fn convergence_order_examples() {
        let o = convergence_order(&[(0.1, 1e-2), (0.05, 2.5e-3)]).unwrap();
        assert!((o - 2.0).abs() < 1e-12);
        let o = convergence_order(&[(0.1, 1e-1), (0.05, 5e-2)]).unwrap();
        assert!((o - 1.0).abs() < 1e-12);
        assert!(matches!(
            convergence_order(&[(0.1, 1e-2), (0.05, 0.0)]),
            Err(Error::DegenerateInput(_))
        ));
        assert!(convergence_order(&[(0.1, 1e-2)]).is_err());
    }
}
