//! Forcing schedules that carry one parallel flow to another, and the
//! machinery to replay them.
//!
//! A schedule stores the curl of an admissible force together with its
//! uniform x₁-component at a list of sample times; consumers interpolate
//! linearly in between. Synthesized schedules are sampled exactly at the
//! solver's step times, so replaying one through [`verify_transfer`]
//! reproduces the synthesis run bit for bit.
//!
//! The exchange controls follow a prescribed kinematic path: the mean
//! profile moves from `U` to `V` along a smooth ramp while a slow cellular
//! recirculation, of speed ∝ 1/T, stirs the two layers. The shear between
//! the layers is unstable, so the path is tracked rather than fed forward
//! blindly: every sample adds a proportional correction toward the path,
//! computed while the schedule is being built. The stored schedule is
//! still an open-loop force f(x, t).

mod io;
mod optimize;
mod path;

pub use io::{read_schedule, write_schedule};
pub use optimize::{optimize_schedule, OptimizeOptions, OptimizeReport};
pub use path::{collision_control, transposition_control};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ProfileError, StepProfile};
use crate::spectral::{
    step_time, BlowUpGuard, Diagnostics, ForceField, Forcing, Grid, Solver, SolverError,
    SpectralState,
};

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("amplitude must be positive and finite, got {0}")]
    BadAmplitude(f64),
    #[error(
        "cell speed {speed} exceeds the base flow scale {limit}; lower the amplitude or raise T"
    )]
    AmplitudeTooLarge { speed: f64, limit: f64 },
    #[error("layers {k} and {} span {points} grid points; at least {min} are needed", k + 1)]
    BandUnresolved { k: usize, points: usize, min: usize },
    #[error("layer index {k} needs segments k and k+1, profile has {segments}")]
    BadIndex { k: usize, segments: usize },
    #[error("schedule horizon {schedule} does not match the expected {expected}")]
    HorizonMismatch { schedule: f64, expected: f64 },
    #[error("schedule grid does not match the setup grid")]
    GridMismatch,
    #[error("schedule needs at least two samples")]
    TooFewSamples,
    #[error("sample times must be nondecreasing and start at 0")]
    BadTimes,
    #[error("malformed schedule file: {0}")]
    Format(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Resolution and tracking parameters shared by every control run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSetup {
    pub grid: Grid,
    /// Mollifier half-width applied to both endpoint profiles.
    pub width: f64,
    /// Tracking gain, in inverse advective time units.
    pub gain: f64,
}

impl Default for ControlSetup {
    /// The reference configuration: 16 × 32 modes on a channel of length 2.
    fn default() -> Self {
        Self {
            grid: Grid::new(16, 32, 2.0).expect("valid reference grid"),
            width: 0.2,
            gain: 10.0,
        }
    }
}

/// Highest x₁ mode kept by the 2/3 rule; higher rows of a force are never
/// stored.
fn max_row(grid: &Grid) -> i64 {
    ((grid.n1 - 1) / 3) as i64
}

fn compact_len(grid: &Grid) -> usize {
    (max_row(grid) as usize + 1) * (grid.n2 - 1)
}

/// Coefficients ĉ(n, m) with 0 ≤ n ≤ max_row and 1 ≤ m < N₂; the rest of
/// an admissible curl follows from realness and oddness in x₂.
fn compact(f: &ForceField) -> Vec<Complex64> {
    let g = &f.grid;
    let mut out = Vec::with_capacity(compact_len(g));
    for n in 0..=max_row(g) {
        for m in 1..g.n2 as i64 {
            out.push(f.g_hat[g.index_of(n, m)]);
        }
    }
    out
}

fn expand(grid: &Grid, coeffs: &[Complex64], mean: f64) -> ForceField {
    let mut f = ForceField::zero(*grid);
    let mut q = 0;
    for n in 0..=max_row(grid) {
        for m in 1..grid.n2 as i64 {
            let z = coeffs[q];
            q += 1;
            f.g_hat[grid.index_of(n, m)] = z;
            f.g_hat[grid.index_of(n, -m)] = -z;
            if n > 0 {
                f.g_hat[grid.index_of(-n, -m)] = z.conj();
                f.g_hat[grid.index_of(-n, m)] = -z.conj();
            }
        }
    }
    f.mean = mean;
    f
}

/// One run of samples; times are local, starting at 0.
#[derive(Debug, Clone, PartialEq)]
struct Piece {
    start: f64,
    times: Vec<f64>,
    curls: Vec<Vec<Complex64>>,
    means: Vec<f64>,
}

impl Piece {
    fn field(&self, grid: &Grid, i: usize) -> ForceField {
        expand(grid, &self.curls[i], self.means[i])
    }

    fn duration(&self) -> f64 {
        *self.times.last().expect("nonempty piece")
    }

    fn cost(&self, grid: &Grid) -> f64 {
        let norms: Vec<f64> = (0..self.times.len())
            .map(|i| self.field(grid, i).norm())
            .collect();
        (1..norms.len())
            .map(|i| 0.5 * (self.times[i] - self.times[i - 1]) * (norms[i - 1] + norms[i]))
            .sum()
    }

    fn force_at(&self, grid: &Grid, t: f64) -> ForceField {
        let n = self.times.len();
        if n == 1 {
            return self.field(grid, 0);
        }
        let idx = self.times.partition_point(|&x| x <= t);
        let i = idx.saturating_sub(1).min(n - 2);
        let (a, b) = (self.times[i], self.times[i + 1]);
        let s = if b > a {
            ((t - a) / (b - a)).clamp(0.0, 1.0)
        } else {
            1.0
        };
        if s == 0.0 {
            self.field(grid, i)
        } else if s == 1.0 {
            self.field(grid, i + 1)
        } else {
            self.field(grid, i).lerp(&self.field(grid, i + 1), s)
        }
    }
}

/// Admissible force sampled on `[0, T]`, linearly interpolated in time.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSchedule {
    grid: Grid,
    pieces: Vec<Piece>,
}

impl ForcingSchedule {
    /// Samples `fields` at `times` (nondecreasing, starting at 0).
    pub fn from_fields(
        grid: Grid,
        times: Vec<f64>,
        fields: &[ForceField],
    ) -> Result<Self, ControlError> {
        if times.len() < 2 || times.len() != fields.len() {
            return Err(ControlError::TooFewSamples);
        }
        if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(ControlError::BadTimes);
        }
        if fields.iter().any(|f| f.grid != grid) {
            return Err(ControlError::GridMismatch);
        }
        Ok(Self {
            grid,
            pieces: vec![Piece {
                start: 0.0,
                times,
                curls: fields.iter().map(compact).collect(),
                means: fields.iter().map(|f| f.mean).collect(),
            }],
        })
    }

    /// Zero force on `[0, horizon]` in `steps` equal intervals.
    pub fn zero(grid: Grid, horizon: f64, steps: usize) -> Result<Self, ControlError> {
        if !(horizon > 0.0) {
            return Err(ControlError::BadHorizon(horizon));
        }
        let steps = steps.max(1);
        let times = (0..=steps)
            .map(|n| step_time(0.0, horizon, steps, n))
            .collect();
        Self::from_fields(grid, times, &vec![ForceField::zero(grid); steps + 1])
    }

    /// Empty schedule to be filled sample by sample.
    fn building(grid: Grid) -> Self {
        Self {
            grid,
            pieces: vec![Piece {
                start: 0.0,
                times: Vec::new(),
                curls: Vec::new(),
                means: Vec::new(),
            }],
        }
    }

    fn push(&mut self, t: f64, f: &ForceField) {
        let p = self.pieces.last_mut().expect("one piece");
        p.times.push(t);
        p.curls.push(compact(f));
        p.means.push(f.mean);
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn horizon(&self) -> f64 {
        let p = self.pieces.last().expect("nonempty schedule");
        p.start + p.duration()
    }

    pub fn n_samples(&self) -> usize {
        self.pieces.iter().map(|p| p.times.len()).sum()
    }

    /// Absolute sample times; a concatenation point appears twice.
    pub fn times(&self) -> Vec<f64> {
        self.pieces
            .iter()
            .flat_map(|p| p.times.iter().map(move |&t| p.start + t))
            .collect()
    }

    /// Sample fields in time order.
    pub fn fields(&self) -> Vec<ForceField> {
        self.pieces
            .iter()
            .flat_map(|p| (0..p.times.len()).map(move |i| p.field(&self.grid, i)))
            .collect()
    }

    /// ∫₀ᵀ ‖f‖ dt by the trapezoidal rule over the samples.
    pub fn cost(&self) -> f64 {
        self.pieces.iter().map(|p| p.cost(&self.grid)).sum()
    }

    /// Cost accumulated over `[0, t]` for every sample time.
    pub fn cost_profile(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.n_samples());
        let mut acc = 0.0;
        for p in &self.pieces {
            let mut prev: Option<(f64, f64)> = None;
            for i in 0..p.times.len() {
                let norm = p.field(&self.grid, i).norm();
                if let Some((t0, n0)) = prev {
                    acc += 0.5 * (p.times[i] - t0) * (n0 + norm);
                }
                prev = Some((p.times[i], norm));
                out.push((p.start + p.times[i], acc));
            }
        }
        out
    }

    /// `self` on `[0, T₁]` followed by `other` shifted to `[T₁, T₁ + T₂]`.
    pub fn concat(&self, other: &ForcingSchedule) -> Result<Self, ControlError> {
        if self.grid != other.grid {
            return Err(ControlError::GridMismatch);
        }
        let shift = self.horizon();
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().map(|p| Piece {
            start: shift + p.start,
            ..p.clone()
        }));
        Ok(Self {
            grid: self.grid,
            pieces,
        })
    }

    /// Largest admissibility defect over all samples; zero by construction.
    pub fn admissibility_defect(&self) -> f64 {
        self.fields()
            .iter()
            .map(ForceField::admissibility_defect)
            .fold(0.0, f64::max)
    }

    /// Step end times a replay goes through, without the initial time.
    fn step_targets(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.pieces {
            out.extend(p.times.iter().skip(1).map(|&t| p.start + t));
        }
        out
    }
}

impl Forcing for ForcingSchedule {
    fn force_at(&self, t: f64) -> ForceField {
        // The last piece starting at or before t; a join time belongs to the
        // later piece.
        let i = self
            .pieces
            .partition_point(|p| p.start <= t)
            .saturating_sub(1);
        let p = &self.pieces[i];
        p.force_at(&self.grid, t - p.start)
    }
}

fn check_horizon(horizon: f64) -> Result<(), ControlError> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(ControlError::BadHorizon(horizon))
    }
}

/// Equal steps on `[0, horizon]` that respect the CFL limit at `speed`.
fn step_count(solver: &Solver, horizon: f64, speed: f64) -> usize {
    ((horizon / solver.stable_dt(speed)).ceil() as usize).max(1)
}

/// Constant force ((V − U)/T, 0) between the mollified profiles. Parallel
/// flows have no self-advection, so the straight line between them solves
/// the forced equations exactly and the cost is ‖V − U‖·√L whatever T is.
pub fn baseline_ramp(
    u: &StepProfile,
    v: &StepProfile,
    horizon: f64,
    setup: &ControlSetup,
) -> Result<ForcingSchedule, ControlError> {
    check_horizon(horizon)?;
    let solver = Solver::new(setup.grid);
    let su = solver.from_profile(u, setup.width)?;
    let sv = solver.from_profile(v, setup.width)?;
    let mut f = ForceField::zero(setup.grid);
    for (g, (a, b)) in f
        .g_hat
        .iter_mut()
        .zip(su.omega_hat.iter().zip(&sv.omega_hat))
    {
        *g = (b - a) / horizon;
    }
    f.mean = (sv.mean.constant - su.mean.constant) / horizon;
    let speed = solver.max_speed(&su).max(solver.max_speed(&sv));
    let steps = step_count(&solver, horizon, speed);
    let times = (0..=steps)
        .map(|n| step_time(0.0, horizon, steps, n))
        .collect();
    ForcingSchedule::from_fields(setup.grid, times, &vec![f; steps + 1])
}

/// ‖V_w − U_w‖·√L for the profiles mollified with half-width `width`, by
/// Gauss–Legendre quadrature between the mollifier's breakpoints.
pub fn baseline_cost(u: &StepProfile, v: &StepProfile, width: f64, l: f64) -> f64 {
    use crate::spectral::mollified_profile;
    let mut cuts = vec![0.0, 1.0];
    for p in [u, v] {
        for &b in p.breakpoints() {
            // Wall images of each jump bend the profile too.
            for c in [b, -b, 2.0 - b] {
                cuts.extend([c - width, c + width]);
            }
        }
    }
    cuts.retain(|x| (0.0..=1.0).contains(x));
    cuts.sort_by(f64::total_cmp);
    let d2 = |x: f64| (mollified_profile(v, width, x) - mollified_profile(u, width, x)).powi(2);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        // The integrand is a polynomial of degree 26 between cuts.
        total += gauss_legendre(w[0], w[1], &d2);
    }
    (l * total).sqrt()
}

/// 16-point Gauss–Legendre rule on `[a, b]`.
fn gauss_legendre(a: f64, b: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    const NODES: [(f64, f64); 8] = [
        (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
        (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
        (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
        (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
        (0.755_404_408_355_003, 0.124_628_971_255_533_9),
        (0.865_631_202_387_831_7, 0.095_158_511_682_492_79),
        (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
        (0.989_400_934_991_649_9, 0.027_152_459_411_754_09),
    ];
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * NODES
        .iter()
        .map(|&(x, w)| w * (f(c - h * x) + f(c + h * x)))
        .sum::<f64>()
}

/// Outcome of replaying a schedule from `U`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub horizon: f64,
    /// L² distance of the final velocity to the mollified target flow.
    pub endpoint_error: f64,
    /// L² norm of the mollified target flow.
    pub target_norm: f64,
    pub cost: f64,
    pub steps: usize,
    /// Diagnostics with accumulated cost, every `stride` steps and at the end.
    pub series: Vec<(Diagnostics, f64)>,
}

impl TransferReport {
    pub fn relative_error(&self) -> f64 {
        self.endpoint_error / self.target_norm
    }

    pub fn initial(&self) -> &Diagnostics {
        &self.series.first().expect("nonempty series").0
    }

    pub fn last(&self) -> &Diagnostics {
        &self.series.last().expect("nonempty series").0
    }
}

/// Replay `schedule` from the mollified flow of `u` through every sample
/// time and compare the end state with the mollified flow of `v`.
pub fn verify_transfer(
    u: &StepProfile,
    schedule: &ForcingSchedule,
    v: &StepProfile,
    setup: &ControlSetup,
    stride: usize,
) -> Result<TransferReport, ControlError> {
    let (state, report) = replay(u, schedule, v, setup, stride)?;
    drop(state);
    Ok(report)
}

fn replay(
    u: &StepProfile,
    schedule: &ForcingSchedule,
    v: &StepProfile,
    setup: &ControlSetup,
    stride: usize,
) -> Result<(SpectralState, TransferReport), ControlError> {
    if schedule.grid != setup.grid {
        return Err(ControlError::GridMismatch);
    }
    let solver = Solver::new(setup.grid);
    let mut state = solver.from_profile(u, setup.width)?;
    let target = solver.from_profile(v, setup.width)?;
    let accum = schedule.cost_profile();
    let targets = schedule.step_targets();
    let stride = stride.max(1);
    let guard = BlowUpGuard::new(&solver, &state);
    let mut series = vec![(solver.diagnostics(&state), 0.0)];
    let mut k = 0;
    for (n, &t) in targets.iter().enumerate() {
        if t > state.t {
            solver.step_to(&mut state, t, Some(schedule))?;
            guard.check(&solver, &state)?;
        }
        // accum has one extra leading entry per piece; track by time.
        while k + 1 < accum.len() && accum[k + 1].0 <= state.t {
            k += 1;
        }
        if (n + 1) % stride == 0 || n + 1 == targets.len() {
            series.push((solver.diagnostics(&state), accum[k].1));
        }
    }
    let report = TransferReport {
        horizon: schedule.horizon(),
        endpoint_error: state.velocity_distance(&target)?,
        target_norm: target.velocity_norm(),
        cost: schedule.cost(),
        steps: targets.len(),
        series,
    };
    Ok((state, report))
}
