//! Kinematic exchange paths and the tracked force that follows them.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{check_horizon, step_count, ControlError, ControlSetup, ForcingSchedule};
use crate::profile::{Move, StepProfile};
use crate::spectral::{step_time, BlowUpGuard, ForceField, Grid, Solver, SpectralState};

/// A cell must span at least this many grid points across x₂.
const MIN_BAND_POINTS: usize = 6;
/// The cell's stream function across its band is (1 − r²)^CELL_POWER.
const CELL_POWER: i32 = 4;
/// Headroom on the path's peak speed when choosing the step.
const SPEED_MARGIN: f64 = 1.25;
/// Path samples used to bound its peak speed.
const SPEED_PROBES: usize = 32;

/// x₂-interval covered by segments `k` and `k + 1` (1-based).
pub(super) fn layer_band(
    p: &StepProfile,
    k: usize,
    grid: &Grid,
) -> Result<(f64, f64), ControlError> {
    if k == 0 || k >= p.segments() {
        return Err(ControlError::BadIndex {
            k,
            segments: p.segments(),
        });
    }
    let bp = p.breakpoints();
    let band = (bp[k - 1], bp[k + 1]);
    check_band(band, k, grid)?;
    Ok(band)
}

pub(super) fn check_band(band: (f64, f64), k: usize, grid: &Grid) -> Result<(), ControlError> {
    let points = ((band.1 - band.0) * grid.n2 as f64).floor() as usize;
    if points < MIN_BAND_POINTS {
        return Err(ControlError::BandUnresolved {
            k,
            points,
            min: MIN_BAND_POINTS,
        });
    }
    Ok(())
}

/// Mean of `p` over `[a, b]`.
fn band_mean(p: &StepProfile, a: f64, b: f64) -> f64 {
    let bp = p.breakpoints();
    let mut s = 0.0;
    for (q, &v) in p.values().iter().enumerate() {
        let lo = bp[q].max(a);
        let hi = bp[q + 1].min(b);
        if hi > lo {
            s += v * (hi - lo);
        }
    }
    s / (b - a)
}

/// Mean ramp σ(s) = s − sin(2πs)/2π and its derivative; flat at both ends.
fn ramp(s: f64) -> (f64, f64) {
    (
        s - (2.0 * PI * s).sin() / (2.0 * PI),
        1.0 - (2.0 * PI * s).cos(),
    )
}

/// Cell envelope sin²(πs)·M(s) and its s-derivative, where M blends the
/// weights with a cos²/sin² partition of unity between equally spaced nodes.
fn envelope(s: f64, weights: &[f64]) -> (f64, f64) {
    let (m, dm) = match weights.len() {
        0 => (1.0, 0.0),
        1 => (weights[0], 0.0),
        b => {
            let h = 1.0 / (b - 1) as f64;
            let i = ((s / h).floor().max(0.0) as usize).min(b - 2);
            let tau = (s - i as f64 * h) / h;
            let (c, sn) = ((0.5 * PI * tau).cos(), (0.5 * PI * tau).sin());
            let m = weights[i] * c * c + weights[i + 1] * sn * sn;
            let dm = (weights[i + 1] - weights[i]) * 0.5 * PI * (PI * tau).sin() / h;
            (m, dm)
        }
    };
    let e = (PI * s).sin().powi(2);
    let de = PI * (2.0 * PI * s).sin();
    (e * m, de * m + e * dm)
}

/// Prescribed path ω_w(t) = ω_U + σ(t/T)(ω_V − ω_U) + A(t/T)·cell(x₁ − X(t)),
/// with the cell drifting at the mean speed of its band.
pub(super) struct ExchangePath {
    start: SpectralState,
    diff: Vec<Complex64>,
    diff_mean: f64,
    /// Nonzero cell coefficients as (index, value, k₁), unit peak speed.
    cell: Vec<(usize, Complex64, f64)>,
    horizon: f64,
    speed: f64,
    drift: f64,
    weights: Vec<f64>,
}

impl ExchangePath {
    #[allow(clippy::too_many_arguments)]
    pub(super) fn new(
        solver: &Solver,
        u: &StepProfile,
        v: &StepProfile,
        band: (f64, f64),
        horizon: f64,
        amplitude: f64,
        setup: &ControlSetup,
        weights: Vec<f64>,
    ) -> Result<Self, ControlError> {
        check_horizon(horizon)?;
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(ControlError::BadAmplitude(amplitude));
        }
        let su = solver.from_profile(u, setup.width)?;
        let sv = solver.from_profile(v, setup.width)?;
        let base = solver.max_speed(&su).max(solver.max_speed(&sv)).max(1.0);
        let speed = amplitude / horizon;
        let limit = 0.5 * base;
        if speed > limit {
            return Err(ControlError::AmplitudeTooLarge { speed, limit });
        }
        let diff = su
            .omega_hat
            .iter()
            .zip(&sv.omega_hat)
            .map(|(a, b)| b - a)
            .collect();
        let drift = 0.5 * (band_mean(u, band.0, band.1) + band_mean(v, band.0, band.1));
        Ok(Self {
            diff_mean: sv.mean.constant - su.mean.constant,
            start: su,
            diff,
            cell: unit_cell(solver, band),
            horizon,
            speed,
            drift,
            weights,
        })
    }

    /// Path state at time `t`.
    fn state(&self, t: f64) -> SpectralState {
        let s = t / self.horizon;
        let (sig, _) = ramp(s);
        let (a, _) = envelope(s, &self.weights);
        let mut out = self.start.clone();
        for (w, d) in out.omega_hat.iter_mut().zip(&self.diff) {
            *w += d * sig;
        }
        let x = self.drift * t;
        for &(q, z, k1) in &self.cell {
            out.omega_hat[q] += z * Complex64::from_polar(a * self.speed, -k1 * x);
        }
        out.mean.constant += sig * self.diff_mean;
        out.t = t;
        out
    }

    /// Feedforward force ∂ω_w/∂t + P(u_w·∇ω_w) that keeps the solver on the
    /// path; P is the solver's own dealiasing.
    fn feedforward(&self, solver: &Solver, w: &SpectralState) -> ForceField {
        let t = w.t;
        let s = t / self.horizon;
        let (_, dsig) = ramp(s);
        let (a, da) = envelope(s, &self.weights);
        let mut f = ForceField::zero(w.grid);
        f.g_hat = solver.advection(&w.omega_hat, w.mean.constant);
        for (g, d) in f.g_hat.iter_mut().zip(&self.diff) {
            *g += d * (dsig / self.horizon);
        }
        let x = self.drift * t;
        for &(q, z, k1) in &self.cell {
            let phase = Complex64::from_polar(self.speed, -k1 * x);
            let rate = Complex64::new(da / self.horizon, -k1 * self.drift * a);
            f.g_hat[q] += z * phase * rate;
        }
        f.mean = self.diff_mean * dsig / self.horizon;
        f
    }

    /// Track the path with gain `setup.gain`, sampling the force at every
    /// solver step. Returns the schedule and the state it ends in.
    pub(super) fn synthesize(
        &self,
        solver: &Solver,
        setup: &ControlSetup,
    ) -> Result<(ForcingSchedule, SpectralState), ControlError> {
        let peak = (0..=SPEED_PROBES)
            .map(|q| {
                let t = self.horizon * q as f64 / SPEED_PROBES as f64;
                solver.max_speed(&self.state(t))
            })
            .fold(0.0, f64::max);
        let steps = step_count(solver, self.horizon, SPEED_MARGIN * peak);
        let mut state = self.start.clone();
        let guard = BlowUpGuard::new(solver, &state);
        let mut schedule = ForcingSchedule::building(solver.grid);
        schedule.push(0.0, &self.feedforward(solver, &self.state(0.0)));
        for n in 0..steps {
            let t_next = step_time(0.0, self.horizon, steps, n + 1);
            let here = self.state(state.t);
            let mut f = self.feedforward(solver, &self.state(t_next));
            for ((g, w), x) in f
                .g_hat
                .iter_mut()
                .zip(&here.omega_hat)
                .zip(&state.omega_hat)
            {
                *g += (w - x) * setup.gain;
            }
            f.mean += (here.mean.constant - state.mean.constant) * setup.gain;
            schedule.push(t_next, &f);
            solver.step_to(&mut state, t_next, Some(&schedule))?;
            guard.check(solver, &state)?;
        }
        Ok((schedule, state))
    }
}

/// Vorticity of the cell with stream function β(x₂)·sin(2πx₁/L), β a bump
/// over `band`, scaled to unit peak speed.
fn unit_cell(solver: &Solver, band: (f64, f64)) -> Vec<(usize, Complex64, f64)> {
    let g = solver.grid;
    let (mid, half) = (0.5 * (band.0 + band.1), 0.5 * (band.1 - band.0));
    let beta = |x2: f64| {
        let r = (x2 - mid) / half;
        if r.abs() < 1.0 {
            (1.0 - r * r).powi(CELL_POWER)
        } else {
            0.0
        }
    };
    let m = g.m();
    let mut values = vec![0.0; g.len()];
    for i in 0..g.n1 {
        let sx = (2.0 * PI * g.x1(i) / g.l).sin();
        for j in 1..g.n2 {
            let b = beta(g.x2(j));
            values[i * m + j] = b * sx;
            values[i * m + m - j] = -b * sx;
        }
    }
    let psi = solver.real_to_spectral(&values);
    let mut cell = SpectralState::zero(g);
    for i in 0..g.n1 {
        for j in 0..m {
            let (k1, k2) = g.wavenumbers(i, j);
            cell.omega_hat[i * m + j] = psi[i * m + j] * (k1 * k1 + k2 * k2);
        }
    }
    let unit = solver.max_speed(&cell);
    let mut out = Vec::new();
    for i in 0..g.n1 {
        for j in 0..m {
            let z = cell.omega_hat[i * m + j] / unit;
            if z.norm() > 1e-14 {
                out.push((i * m + j, z, g.wavenumbers(i, j).0));
            }
        }
    }
    out
}

fn exchange(
    p: &StepProfile,
    mv: Move,
    k: usize,
    horizon: f64,
    amplitude: f64,
    setup: &ControlSetup,
) -> Result<ForcingSchedule, ControlError> {
    let band = layer_band(p, k, &setup.grid)?;
    let v = p.apply(&mv)?;
    let solver = Solver::new(setup.grid);
    let path = ExchangePath::new(&solver, p, &v, band, horizon, amplitude, setup, Vec::new())?;
    Ok(path.synthesize(&solver, setup)?.0)
}

/// Schedule that swaps segments `k` and `k + 1` of `p` over `[0, T]`. The
/// cell's peak speed is `amplitude / T`.
pub fn transposition_control(
    p: &StepProfile,
    k: usize,
    horizon: f64,
    amplitude: f64,
    setup: &ControlSetup,
) -> Result<ForcingSchedule, ControlError> {
    exchange(p, Move::Transpose { k }, k, horizon, amplitude, setup)
}

/// Schedule that takes segments `k` and `k + 1` of `p` to their collision
/// values in place.
pub fn collision_control(
    p: &StepProfile,
    k: usize,
    horizon: f64,
    amplitude: f64,
    setup: &ControlSetup,
) -> Result<ForcingSchedule, ControlError> {
    exchange(p, Move::Collide { k }, k, horizon, amplitude, setup)
}

#[cfg(test)]
mod tests {
    use super::super::{replay, verify_transfer};
    use super::*;

    fn two(a: f64, b: f64) -> StepProfile {
        StepProfile::uniform(vec![a, b]).unwrap()
    }

    #[test]
    fn ramp_is_flat_at_both_ends() {
        assert_eq!(ramp(0.0), (0.0, 0.0));
        let (s1, d1) = ramp(1.0);
        assert!((s1 - 1.0).abs() < 1e-15 && d1.abs() < 1e-15);
        let h = 1e-6;
        for s in [0.1, 0.37, 0.8] {
            let fd = (ramp(s + h).0 - ramp(s - h).0) / (2.0 * h);
            assert!((fd - ramp(s).1).abs() < 1e-8);
        }
    }

    #[test]
    fn envelope_blends_weights_smoothly() {
        for s in [0.0, 0.2, 0.5, 0.9] {
            let plain = (PI * s).sin().powi(2);
            assert!((envelope(s, &[1.0, 1.0, 1.0]).0 - plain).abs() < 1e-15);
        }
        let w = [0.3, 1.7, 0.0, 1.1];
        let h = 1e-6;
        for s in [0.05, 0.3, 0.5, 0.71, 0.95] {
            let fd = (envelope(s + h, &w).0 - envelope(s - h, &w).0) / (2.0 * h);
            assert!((fd - envelope(s, &w).1).abs() < 1e-7, "{s}");
        }
        // Continuity across a node.
        let node = 1.0 / 3.0;
        let gap = (envelope(node - 1e-12, &w).0 - envelope(node + 1e-12, &w).0).abs();
        assert!(gap < 1e-10);
    }

    #[test]
    fn unit_cell_is_admissible_with_unit_speed() {
        let setup = ControlSetup::default();
        let solver = Solver::new(setup.grid);
        let cell = unit_cell(&solver, (0.25, 0.75));
        let mut st = SpectralState::zero(setup.grid);
        for &(q, z, _) in &cell {
            st.omega_hat[q] = z;
        }
        assert!((solver.max_speed(&st) - 1.0).abs() < 1e-12);
        let g = setup.grid;
        assert!(cell
            .iter()
            .all(|&(q, _, _)| g.modes(q / g.m(), q % g.m()).0.abs() == 1));
        let mut sym = st.clone();
        sym.symmetrize();
        let defect = sym
            .omega_hat
            .iter()
            .zip(&st.omega_hat)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(defect < 1e-14);
    }

    #[test]
    fn feedforward_rate_matches_path_derivative() {
        let setup = ControlSetup::default();
        let solver = Solver::new(setup.grid);
        let (u, v) = (two(1.0, -1.0), two(-1.0, 1.0));
        let weights = vec![0.5, 1.5, 1.0];
        let path =
            ExchangePath::new(&solver, &u, &v, (0.0, 1.0), 10.0, 2.0, &setup, weights).unwrap();
        let (t, h) = (3.7, 1e-5);
        let (a, b) = (path.state(t - h), path.state(t + h));
        let w = path.state(t);
        let f = path.feedforward(&solver, &w);
        let adv = solver.advection(&w.omega_hat, w.mean.constant);
        let err = (0..f.g_hat.len())
            .map(|q| ((f.g_hat[q] - adv[q]) - (b.omega_hat[q] - a.omega_hat[q]) / (2.0 * h)).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        let dc = (b.mean.constant - a.mean.constant) / (2.0 * h);
        assert!((f.mean - dc).abs() < 1e-8);
    }

    #[test]
    fn exchange_inputs_are_checked() {
        let setup = ControlSetup::default();
        let p = two(1.0, -1.0);
        assert!(matches!(
            transposition_control(&p, 2, 10.0, 1.0, &setup),
            Err(ControlError::BadIndex { .. })
        ));
        assert!(matches!(
            transposition_control(&p, 1, 10.0, 0.0, &setup),
            Err(ControlError::BadAmplitude(_))
        ));
        assert!(matches!(
            transposition_control(&p, 1, 10.0, 50.0, &setup),
            Err(ControlError::AmplitudeTooLarge { .. })
        ));
        assert!(matches!(
            transposition_control(&p, 1, -1.0, 1.0, &setup),
            Err(ControlError::BadHorizon(_))
        ));
        let thin = StepProfile::new(vec![0.0, 0.05, 0.1, 1.0], vec![1.0, -1.0, 0.0]).unwrap();
        assert!(matches!(
            collision_control(&thin, 1, 10.0, 1.0, &setup),
            Err(ControlError::BandUnresolved { .. })
        ));
    }

    #[test]
    fn replay_reproduces_synthesis_exactly() {
        let setup = ControlSetup::default();
        let solver = Solver::new(setup.grid);
        let (u, v) = (two(1.0, -1.0), two(-1.0, 1.0));
        let path =
            ExchangePath::new(&solver, &u, &v, (0.0, 1.0), 4.0, 1.0, &setup, Vec::new()).unwrap();
        let (sched, end) = path.synthesize(&solver, &setup).unwrap();
        let (state, report) = replay(&u, &sched, &v, &setup, 1).unwrap();
        assert_eq!(state.omega_hat, end.omega_hat);
        assert_eq!(state.mean, end.mean);
        assert!(report.relative_error() < 1e-3);
        assert!(sched.admissibility_defect() <= 1e-12);
        let again = verify_transfer(&u, &sched, &v, &setup, 1).unwrap();
        assert_eq!(again, report);
    }

    #[test]
    fn collision_path_ends_at_collision_values() {
        let setup = ControlSetup::default();
        let p = StepProfile::new(vec![0.0, 2.0 / 3.0, 1.0], vec![0.0, 3.0]).unwrap();
        let v = StepProfile::new(vec![0.0, 2.0 / 3.0, 1.0], vec![2.0, -1.0]).unwrap();
        let s = collision_control(&p, 1, 5.0, 1.0, &setup).unwrap();
        let r = verify_transfer(&p, &s, &v, &setup, 1000).unwrap();
        assert!(r.relative_error() < 0.05, "{}", r.relative_error());
        assert!((r.last().momentum - r.initial().momentum).abs() < 1e-9);
    }
}
