//! Weak-form residuals of the momentum and incompressibility equations.
//!
//! Test fields are v = ∇⊥Φ with Φ = A(t)·B(x₂)·cos(κx₁ + θ), where
//! B(x₂) = sin³(πx₂)(1 + β cos πx₂) is a four-term sine series vanishing to
//! third order at the walls and A is the bump (1 − s²)⁸ on a window inside
//! the run. Being band-limited, such fields are integrated exactly by the
//! grid quadrature, so the residual isolates the time-integration error.

use std::f64::consts::PI;

use rand::Rng;

use super::{Forcing, Solver, SolverError, SpectralState};

const TIME_POWER: i32 = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestField {
    /// Mode number along x₁; κ = 2πn/L.
    pub n: u32,
    pub phase: f64,
    pub beta: f64,
    pub amplitude: f64,
    /// Open time window carrying the support.
    pub t0: f64,
    pub t1: f64,
}

/// Values of Φ-building blocks at one point.
struct Local {
    /// A, A'
    a: f64,
    da: f64,
    /// B, B', B''
    b: [f64; 3],
    c: f64,
    s: f64,
    kappa: f64,
}

impl TestField {
    /// Seeded field with a random mode, phase and shape on `[t0, t1]`.
    pub fn random(rng: &mut impl Rng, t0: f64, t1: f64) -> Self {
        Self {
            n: rng.gen_range(0..=2),
            phase: rng.gen_range(0.0..2.0 * PI),
            beta: rng.gen_range(-1.0..1.0),
            amplitude: 1.0,
            t0,
            t1,
        }
    }

    fn time(&self, t: f64) -> (f64, f64) {
        let h = 0.5 * (self.t1 - self.t0);
        let s = (t - 0.5 * (self.t0 + self.t1)) / h;
        if s.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        let q = 1.0 - s * s;
        let a = q.powi(TIME_POWER);
        let da = TIME_POWER as f64 * q.powi(TIME_POWER - 1) * (-2.0 * s) / h;
        (self.amplitude * a, self.amplitude * da)
    }

    fn shape(&self, x2: f64) -> [f64; 3] {
        let coef = [
            (1.0, 0.75),
            (2.0, 0.25 * self.beta),
            (3.0, -0.25),
            (4.0, -0.125 * self.beta),
        ];
        let mut b = [0.0; 3];
        for (m, c) in coef {
            let k = m * PI;
            b[0] += c * (k * x2).sin();
            b[1] += c * k * (k * x2).cos();
            b[2] -= c * k * k * (k * x2).sin();
        }
        b
    }

    fn local(&self, l: f64, t: f64, x1: f64, x2: f64) -> Local {
        let (a, da) = self.time(t);
        let kappa = 2.0 * PI * self.n as f64 / l;
        let arg = kappa * x1 + self.phase;
        Local {
            a,
            da,
            b: self.shape(x2),
            c: arg.cos(),
            s: arg.sin(),
            kappa,
        }
    }

    /// v = ∇⊥Φ = (∂₂Φ, −∂₁Φ).
    pub fn velocity(&self, l: f64, t: f64, x1: f64, x2: f64) -> [f64; 2] {
        let p = self.local(l, t, x1, x2);
        [p.a * p.b[1] * p.c, p.a * p.b[0] * p.kappa * p.s]
    }
}

fn check_times(states: &[SpectralState], w: &TestField) -> Result<Vec<f64>, SolverError> {
    if states.len() < 2 {
        return Err(SolverError::BadSnapshots(
            "need at least two snapshots".into(),
        ));
    }
    let times: Vec<f64> = states.iter().map(|s| s.t).collect();
    let dt = times[1] - times[0];
    for pair in times.windows(2) {
        if ((pair[1] - pair[0]) - dt).abs() > 1e-9 * dt.abs().max(1e-300) || dt <= 0.0 {
            return Err(SolverError::BadSnapshots(
                "snapshots must be equally spaced".into(),
            ));
        }
    }
    let (first, last) = (times[0], *times.last().unwrap());
    if !(w.t0 > first && w.t1 < last && w.t0 < w.t1) {
        return Err(SolverError::TestFieldSupport(first, last));
    }
    Ok(times)
}

fn trapezoid_weights(times: &[f64]) -> Vec<f64> {
    let dt = times[1] - times[0];
    let mut w = vec![dt; times.len()];
    w[0] *= 0.5;
    *w.last_mut().unwrap() *= 0.5;
    w
}

/// Space-time integrals `(∫∫ (u,∂ₜv) + (u⊗u : ∇v), ∫∫ (u, ∇φ))` with φ = Φ.
/// For an exact solution forced by f the first equals −∫∫(f, v); unforced,
/// both vanish.
pub fn weak_residual(
    solver: &Solver,
    states: &[SpectralState],
    v: &TestField,
) -> Result<(f64, f64), SolverError> {
    let times = check_times(states, v)?;
    let g = solver.grid;
    let area = g.dx1() * g.dx2();
    let (mut r_mom, mut r_inc) = (0.0, 0.0);
    for (state, wt) in states.iter().zip(trapezoid_weights(&times)) {
        if v.time(state.t).0 == 0.0 && v.time(state.t).1 == 0.0 {
            continue;
        }
        let (u1, u2) = solver.velocity(state);
        let (mut sm, mut si) = (0.0, 0.0);
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let p = v.local(g.l, state.t, g.x1(i), g.x2(j));
                let (a, b, k) = (u1[i * g.n2 + j], u2[i * g.n2 + j], p.kappa);
                let dtv1 = p.da * p.b[1] * p.c;
                let dtv2 = p.da * p.b[0] * k * p.s;
                let d1v1 = -p.a * p.b[1] * k * p.s;
                let d2v1 = p.a * p.b[2] * p.c;
                let d1v2 = p.a * p.b[0] * k * k * p.c;
                let d2v2 = p.a * p.b[1] * k * p.s;
                sm += a * dtv1 + b * dtv2 + a * a * d1v1 + a * b * (d2v1 + d1v2) + b * b * d2v2;
                // ∇φ = (∂₁Φ, ∂₂Φ).
                si += a * (-p.a * p.b[0] * k * p.s) + b * (p.a * p.b[1] * p.c);
            }
        }
        r_mom += wt * sm * area;
        r_inc += wt * si * area;
    }
    Ok((r_mom, r_inc))
}

/// ∫∫ (f, v) over the run, by the same quadrature as [`weak_residual`].
pub fn forcing_pairing(
    solver: &Solver,
    states: &[SpectralState],
    forcing: &dyn Forcing,
    v: &TestField,
) -> Result<f64, SolverError> {
    let times = check_times(states, v)?;
    let g = solver.grid;
    let area = g.dx1() * g.dx2();
    let mut total = 0.0;
    for (&t, wt) in times.iter().zip(trapezoid_weights(&times)) {
        let (f1, f2) = solver.force_physical(&forcing.force_at(t));
        let mut s = 0.0;
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let [v1, v2] = v.velocity(g.l, t, g.x1(i), g.x2(j));
                s += f1[i * g.n2 + j] * v1 + f2[i * g.n2 + j] * v2;
            }
        }
        total += wt * s * area;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::super::Grid;
    use super::*;
    use crate::StepProfile;

    #[test]
    fn shape_vanishes_at_walls_and_matches_closed_form() {
        let v = TestField {
            n: 1,
            phase: 0.3,
            beta: 0.7,
            amplitude: 1.0,
            t0: 0.0,
            t1: 1.0,
        };
        for x in [0.0, 1.0] {
            let b = v.shape(x);
            assert!(b.iter().all(|y| y.abs() < 1e-12));
        }
        for x in [0.1, 0.37, 0.8] {
            let s = (PI * x).sin();
            let want = s.powi(3) * (1.0 + 0.7 * (PI * x).cos());
            assert!((v.shape(x)[0] - want).abs() < 1e-14);
            // Centered differences for B' and B''.
            let h = 1e-5;
            let d1 = (v.shape(x + h)[0] - v.shape(x - h)[0]) / (2.0 * h);
            let d2 = (v.shape(x + h)[0] - 2.0 * v.shape(x)[0] + v.shape(x - h)[0]) / (h * h);
            assert!((v.shape(x)[1] - d1).abs() < 1e-7);
            assert!((v.shape(x)[2] - d2).abs() < 1e-3);
        }
    }

    #[test]
    fn steady_parallel_flow_has_zero_residual() {
        let g = Grid::new(16, 16, 1.0).unwrap();
        let s = Solver::new(g);
        let p = StepProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap();
        let mut st = s.from_profile(&p, 0.25).unwrap();
        let mut states = Vec::new();
        s.integrate(&mut st, 1.0, 0.02, None, |x| states.push(x.clone()))
            .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        use rand::SeedableRng;
        for _ in 0..3 {
            let v = TestField::random(&mut rng, 0.1, 0.9);
            let (rm, ri) = weak_residual(&s, &states, &v).unwrap();
            assert!(rm.abs() < 1e-12 && ri.abs() < 1e-12, "{rm} {ri}");
        }
    }

    #[test]
    fn support_must_be_interior() {
        let g = Grid::new(8, 8, 1.0).unwrap();
        let s = Solver::new(g);
        let states: Vec<SpectralState> = (0..5)
            .map(|k| {
                let mut st = SpectralState::zero(g);
                st.t = k as f64 * 0.25;
                st
            })
            .collect();
        let mut v = TestField {
            n: 0,
            phase: 0.0,
            beta: 0.0,
            amplitude: 1.0,
            t0: 0.0,
            t1: 0.5,
        };
        assert!(matches!(
            weak_residual(&s, &states, &v),
            Err(SolverError::TestFieldSupport(..))
        ));
        v.t0 = 0.1;
        assert!(weak_residual(&s, &states, &v).is_ok());
    }
}
