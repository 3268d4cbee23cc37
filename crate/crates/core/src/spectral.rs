//! Forced incompressible 2-D Euler equations in the channel `[0,L) × [0,1]`,
//! periodic in x₁ with free-slip walls at x₂ ∈ {0, 1}.
//!
//! The vorticity ω = ∂₁u₂ − ∂₂u₁ is expanded in Fourier modes along x₁ and
//! sine modes along x₂. Internally the sine series is stored as the odd
//! extension of ω to `[0,L) × [0,2)`, so every transform is a plain complex
//! FFT on an `N₁ × 2N₂` grid. The stream function ψ solves −Δψ = ω with ψ = 0
//! on both walls, and the velocity is u = (∂₂ψ + c, −∂₁ψ), where the constant
//! `c` carries the channel-averaged momentum that vorticity leaves open.
//!
//! Time stepping is classical RK4 with the 2/3 rule on the advection term.

mod diag;
mod io;
mod weak;

pub use diag::{Diagnostics, DiagnosticsWriter, DIAGNOSTICS_HEADER};
pub use io::{read_snapshot, write_snapshot, Snapshot};
pub use weak::{forcing_pairing, weak_residual, TestField};

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::StepProfile;

/// Largest accepted CFL number.
pub const CFL_LIMIT: f64 = 0.5;
/// Blow-up guard: max |ω| may not exceed this multiple of its initial value.
pub const BLOWUP_FACTOR: f64 = 1e3;
/// Exponent of the polynomial mollifier (1 − r²)^p.
const BUMP_POWER: usize = 6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("mollifier width {width} spans fewer than 4 grid points at N2 = {n2}")]
    MollifierTooNarrow { width: f64, n2: usize },
    #[error("mollifier width must lie in (0, 0.5], got {0}")]
    BadWidth(f64),
    #[error("CFL number {cfl:.3} exceeds {CFL_LIMIT}")]
    Cfl { cfl: f64 },
    #[error("non-finite vorticity at t = {t}")]
    NonFinite { t: f64 },
    #[error("max |ω| = {max:e} exceeds blow-up limit {limit:e} at t = {t}")]
    BlowUp { t: f64, max: f64, limit: f64 },
    #[error("state and solver grids differ")]
    GridMismatch,
    #[error("invalid snapshots: {0}")]
    BadSnapshots(String),
    #[error("test field support must lie strictly inside ({0}, {1})")]
    TestFieldSupport(f64, f64),
    #[error("bad snapshot file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n1: usize,
    pub n2: usize,
    /// Channel period along x₁.
    pub l: f64,
}

impl Grid {
    pub fn new(n1: usize, n2: usize, l: f64) -> Result<Self, SolverError> {
        if n1 < 4 || n2 < 4 || !n1.is_multiple_of(2) || !n2.is_multiple_of(2) {
            return Err(SolverError::BadGrid(format!(
                "N1 = {n1}, N2 = {n2}; both must be even and at least 4"
            )));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(SolverError::BadGrid(format!("L = {l}")));
        }
        Ok(Self { n1, n2, l })
    }

    /// Points along x₂ of the doubled grid.
    pub fn m(&self) -> usize {
        2 * self.n2
    }

    pub fn len(&self) -> usize {
        self.n1 * self.m()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx1(&self) -> f64 {
        self.l / self.n1 as f64
    }

    pub fn dx2(&self) -> f64 {
        1.0 / self.n2 as f64
    }

    pub fn x1(&self, i: usize) -> f64 {
        i as f64 * self.dx1()
    }

    pub fn x2(&self, j: usize) -> f64 {
        j as f64 * self.dx2()
    }

    /// Signed mode numbers of coefficient `(i, j)`.
    pub fn modes(&self, i: usize, j: usize) -> (i64, i64) {
        let n = if i < self.n1 / 2 {
            i as i64
        } else {
            i as i64 - self.n1 as i64
        };
        let m = if j < self.n2 {
            j as i64
        } else {
            j as i64 - self.m() as i64
        };
        (n, m)
    }

    /// Wavenumbers (k₁, k₂) of coefficient `(i, j)`.
    pub fn wavenumbers(&self, i: usize, j: usize) -> (f64, f64) {
        let (n, m) = self.modes(i, j);
        (2.0 * PI * n as f64 / self.l, PI * m as f64)
    }

    pub(crate) fn index_of(&self, n: i64, m: i64) -> usize {
        let i = n.rem_euclid(self.n1 as i64) as usize;
        let j = m.rem_euclid(self.m() as i64) as usize;
        i * self.m() + j
    }
}

/// x₁-independent part of the velocity that vorticity does not determine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct MeanFlow {
    /// Channel average of u₁.
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralState {
    pub grid: Grid,
    /// Normalized coefficients of the odd extension of ω, row-major
    /// `[i][j]` over `N₁ × 2N₂`; ω(x) = Σ ĉ·exp(i(k₁x₁ + k₂x₂)).
    pub omega_hat: Vec<Complex64>,
    pub mean: MeanFlow,
    pub t: f64,
}

impl SpectralState {
    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            omega_hat: vec![Complex64::new(0.0, 0.0); grid.len()],
            mean: MeanFlow::default(),
            t: 0.0,
        }
    }

    /// Coefficient b of e^{ink₁x₁}·sin(mπx₂) in the sine expansion, m ≥ 1.
    pub fn sine_coefficient(&self, n: i64, m: i64) -> Complex64 {
        // sin θ = (e^{iθ} − e^{−iθ})/2i, so b = 2i·ĉ(n, m).
        2.0 * Complex64::i() * self.omega_hat[self.grid.index_of(n, m)]
    }

    /// Enforce a real field that is odd in x₂.
    pub fn symmetrize(&mut self) {
        symmetrize(&self.grid, &mut self.omega_hat);
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.omega_hat.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// L² norm over the channel of the velocity difference to `other`.
    pub fn velocity_distance(&self, other: &SpectralState) -> Result<f64, SolverError> {
        if self.grid != other.grid {
            return Err(SolverError::GridMismatch);
        }
        let diff: Vec<Complex64> = self
            .omega_hat
            .iter()
            .zip(&other.omega_hat)
            .map(|(a, b)| a - b)
            .collect();
        let dc = self.mean.constant - other.mean.constant;
        Ok((curl_energy(&self.grid, &diff) + self.grid.l * dc * dc).sqrt())
    }

    /// L² norm over the channel of the velocity.
    pub fn velocity_norm(&self) -> f64 {
        let c = self.mean.constant;
        (curl_energy(&self.grid, &self.omega_hat) + self.grid.l * c * c).sqrt()
    }
}

/// Σ |ĉ|²/|k|² times the channel area factor: ‖∇⊥(−Δ)⁻¹ω‖² over the channel.
fn curl_energy(grid: &Grid, coeffs: &[Complex64]) -> f64 {
    let mut s = 0.0;
    for i in 0..grid.n1 {
        for j in 0..grid.m() {
            let (k1, k2) = grid.wavenumbers(i, j);
            let kk = k1 * k1 + k2 * k2;
            if kk > 0.0 {
                s += coeffs[i * grid.m() + j].norm_sqr() / kk;
            }
        }
    }
    grid.l * s
}

pub(crate) fn symmetrize(grid: &Grid, c: &mut [Complex64]) {
    let old = c.to_vec();
    for i in 0..grid.n1 {
        for j in 0..grid.m() {
            let (n, m) = grid.modes(i, j);
            let odd = 0.5 * (old[grid.index_of(n, m)] - old[grid.index_of(n, -m)]);
            let odd_conj = 0.5 * (old[grid.index_of(-n, -m)] - old[grid.index_of(-n, m)]).conj();
            c[i * grid.m() + j] = 0.5 * (odd + odd_conj);
        }
    }
}

/// Divergence-free force tangent to the walls: f = (∂₂χ + mean, −∂₁χ) with
/// χ = 0 on the walls, stored through its curl g = −Δχ in the layout of
/// [`SpectralState::omega_hat`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForceField {
    pub grid: Grid,
    pub g_hat: Vec<Complex64>,
    /// Uniform x₁-component; drives the channel-averaged momentum.
    pub mean: f64,
}

impl ForceField {
    pub fn zero(grid: Grid) -> Self {
        Self {
            grid,
            g_hat: vec![Complex64::new(0.0, 0.0); grid.len()],
            mean: 0.0,
        }
    }

    /// L² norm over the channel, from the coefficients.
    pub fn norm(&self) -> f64 {
        (curl_energy(&self.grid, &self.g_hat) + self.grid.l * self.mean * self.mean).sqrt()
    }

    /// `(1 − s)·self + s·other`.
    pub fn lerp(&self, other: &ForceField, s: f64) -> ForceField {
        ForceField {
            grid: self.grid,
            g_hat: self
                .g_hat
                .iter()
                .zip(&other.g_hat)
                .map(|(a, b)| a * (1.0 - s) + b * s)
                .collect(),
            mean: self.mean * (1.0 - s) + other.mean * s,
        }
    }

    pub fn scaled(&self, s: f64) -> ForceField {
        ForceField {
            grid: self.grid,
            g_hat: self.g_hat.iter().map(|a| a * s).collect(),
            mean: self.mean * s,
        }
    }

    pub fn add_assign(&mut self, other: &ForceField) {
        for (a, b) in self.g_hat.iter_mut().zip(&other.g_hat) {
            *a += b;
        }
        self.mean += other.mean;
    }

    /// Largest deviation of the curl coefficients from a real field odd in
    /// x₂; zero for an admissible force.
    pub fn admissibility_defect(&self) -> f64 {
        let mut sym = self.g_hat.clone();
        symmetrize(&self.grid, &mut sym);
        sym.iter()
            .zip(&self.g_hat)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Time-dependent forcing consumed by the integrator.
pub trait Forcing {
    fn force_at(&self, t: f64) -> ForceField;
}

impl Forcing for ForceField {
    fn force_at(&self, _t: f64) -> ForceField {
        self.clone()
    }
}

/// Normalized bump density ρ(r) = C(1 − r²)^p on (−1, 1).
fn bump_density(r: f64) -> f64 {
    if r.abs() >= 1.0 {
        0.0
    } else {
        bump_norm() * (1.0 - r * r).powi(BUMP_POWER as i32)
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn bump_norm() -> f64 {
    let total: f64 = (0..=BUMP_POWER)
        .map(|j| binomial(BUMP_POWER, j) * (-1f64).powi(j as i32) * 2.0 / (2 * j + 1) as f64)
        .sum();
    1.0 / total
}

/// ∫_{−1}^{r} ρ.
fn bump_cdf(r: f64) -> f64 {
    let s = r.clamp(-1.0, 1.0);
    let sum: f64 = (0..=BUMP_POWER)
        .map(|j| {
            let e = 2 * j as i32 + 1;
            binomial(BUMP_POWER, j) * (-1f64).powi(j as i32) * (s.powi(e) + 1.0) / e as f64
        })
        .sum();
    bump_norm() * sum
}

/// Segments of `p` together with their mirror images across both walls.
fn reflected_segments(p: &StepProfile) -> Vec<(f64, f64, f64)> {
    let bp = p.breakpoints();
    let mut out = Vec::with_capacity(3 * p.segments());
    for (s, &v) in p.values().iter().enumerate() {
        let (a, b) = (bp[s], bp[s + 1]);
        out.push((a, b, v));
        out.push((-b, -a, v));
        out.push((2.0 - b, 2.0 - a, v));
    }
    out
}

/// Step profile convolved with the bump of half-width `width`, with even
/// reflection at the walls.
pub fn mollified_profile(p: &StepProfile, width: f64, x2: f64) -> f64 {
    reflected_segments(p)
        .into_iter()
        .map(|(a, b, v)| v * (bump_cdf((x2 - a) / width) - bump_cdf((x2 - b) / width)))
        .sum()
}

/// Vorticity of the mollified parallel flow, −d/dx₂ of [`mollified_profile`].
pub fn mollified_vorticity(p: &StepProfile, width: f64, x2: f64) -> f64 {
    -reflected_segments(p)
        .into_iter()
        .map(|(a, b, v)| v * (bump_density((x2 - a) / width) - bump_density((x2 - b) / width)))
        .sum::<f64>()
        / width
}

/// End of step `n` when `[t0, t_end]` is cut into `steps` equal steps.
pub fn step_time(t0: f64, t_end: f64, steps: usize, n: usize) -> f64 {
    if n >= steps {
        t_end
    } else {
        t0 + (t_end - t0) * n as f64 / steps as f64
    }
}

/// Aborts a run once max |ω| exceeds [`BLOWUP_FACTOR`] times its initial
/// value (or times 1 when the run starts from rest).
pub struct BlowUpGuard {
    limit: f64,
}

impl BlowUpGuard {
    pub fn new(solver: &Solver, state: &SpectralState) -> Self {
        Self {
            limit: BLOWUP_FACTOR * solver.max_vorticity(state).max(1.0),
        }
    }

    pub fn check(&self, solver: &Solver, state: &SpectralState) -> Result<(), SolverError> {
        let max = solver.max_vorticity(state);
        if max > self.limit {
            return Err(SolverError::BlowUp {
                t: state.t,
                max,
                limit: self.limit,
            });
        }
        Ok(())
    }
}

/// Pseudo-spectral solver with cached FFT plans for one grid.
pub struct Solver {
    pub grid: Grid,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    /// Derivative multipliers, zero on Nyquist modes.
    k1: Vec<f64>,
    k2: Vec<f64>,
    /// 1/|k|², zero for the (0, 0) mode.
    inv_k2: Vec<f64>,
    /// 2/3-rule mask.
    keep: Vec<bool>,
}

impl Solver {
    pub fn new(grid: Grid) -> Self {
        let mut planner = FftPlanner::new();
        let (n1, m) = (grid.n1, grid.m());
        let mut k1 = vec![0.0; grid.len()];
        let mut k2 = vec![0.0; grid.len()];
        let mut inv_k2 = vec![0.0; grid.len()];
        let mut keep = vec![false; grid.len()];
        for i in 0..n1 {
            for j in 0..m {
                let idx = i * m + j;
                let (n, mm) = grid.modes(i, j);
                let (a, b) = grid.wavenumbers(i, j);
                let kk = a * a + b * b;
                inv_k2[idx] = if kk > 0.0 { 1.0 / kk } else { 0.0 };
                k1[idx] = if i == n1 / 2 { 0.0 } else { a };
                k2[idx] = if j == grid.n2 { 0.0 } else { b };
                keep[idx] = 3 * n.unsigned_abs() < n1 as u64 && 3 * mm.unsigned_abs() < m as u64;
            }
        }
        Self {
            grid,
            row_fwd: planner.plan_fft_forward(m),
            row_inv: planner.plan_fft_inverse(m),
            col_fwd: planner.plan_fft_forward(n1),
            col_inv: planner.plan_fft_inverse(n1),
            k1,
            k2,
            inv_k2,
            keep,
        }
    }

    fn fft_rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], len: usize) {
        data.par_chunks_mut(len).for_each_init(
            || vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()],
            |scratch, row| fft.process_with_scratch(row, scratch),
        );
    }

    fn transpose(src: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); src.len()];
        for r in 0..rows {
            for c in 0..cols {
                out[c * rows + r] = src[r * cols + c];
            }
        }
        out
    }

    /// Unnormalized 2-D transform in place.
    fn fft2(&self, data: &mut Vec<Complex64>, inverse: bool) {
        let (n1, m) = (self.grid.n1, self.grid.m());
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        Self::fft_rows(row, data, m);
        let mut t = Self::transpose(data, n1, m);
        Self::fft_rows(col, &mut t, n1);
        *data = Self::transpose(&t, m, n1);
    }

    /// Physical values on the doubled grid from normalized coefficients.
    pub fn to_physical(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut d = coeffs.to_vec();
        self.fft2(&mut d, true);
        d
    }

    /// Normalized coefficients of a doubled-grid field.
    pub fn to_spectral(&self, values: &[Complex64]) -> Vec<Complex64> {
        let mut d = values.to_vec();
        self.fft2(&mut d, false);
        let s = 1.0 / self.grid.len() as f64;
        d.iter_mut().for_each(|c| *c *= s);
        d
    }

    /// Coefficients of a real doubled-grid field, odd in x₂.
    pub fn real_to_spectral(&self, values: &[f64]) -> Vec<Complex64> {
        let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let mut c = self.to_spectral(&v);
        symmetrize(&self.grid, &mut c);
        c
    }

    /// Physical (u₁, u₂) on the doubled grid.
    pub fn velocity_doubled(&self, state: &SpectralState) -> (Vec<f64>, Vec<f64>) {
        let a = self.velocity_packed(&state.omega_hat);
        let c = state.mean.constant;
        (
            a.iter().map(|z| z.re + c).collect(),
            a.iter().map(|z| z.im).collect(),
        )
    }

    /// ifft of û₁ + iû₂ for the curl part (no mean).
    fn velocity_packed(&self, omega_hat: &[Complex64]) -> Vec<Complex64> {
        let a: Vec<Complex64> = omega_hat
            .iter()
            .enumerate()
            .map(|(q, w)| {
                let psi = w * self.inv_k2[q];
                // û₁ = ik₂ψ̂, û₂ = −ik₁ψ̂; û₁ + iû₂ = ik₂ψ̂ + k₁ψ̂.
                psi * Complex64::new(self.k1[q], self.k2[q])
            })
            .collect();
        self.to_physical(&a)
    }

    /// Physical (u₁, u₂) on the channel grid, `N₁ × N₂` row-major, x₂ = j/N₂.
    pub fn velocity(&self, state: &SpectralState) -> (Vec<f64>, Vec<f64>) {
        let (u1, u2) = self.velocity_doubled(state);
        (self.half(&u1), self.half(&u2))
    }

    /// Physical vorticity on the channel grid.
    pub fn vorticity(&self, state: &SpectralState) -> Vec<f64> {
        let w: Vec<f64> = self
            .to_physical(&state.omega_hat)
            .iter()
            .map(|z| z.re)
            .collect();
        self.half(&w)
    }

    /// Force components (f₁, f₂) on the channel grid.
    pub fn force_physical(&self, f: &ForceField) -> (Vec<f64>, Vec<f64>) {
        let a = self.velocity_packed(&f.g_hat);
        (
            self.half(&a.iter().map(|z| z.re + f.mean).collect::<Vec<_>>()),
            self.half(&a.iter().map(|z| z.im).collect::<Vec<_>>()),
        )
    }

    /// Restrict a doubled-grid field to `j < N₂`.
    pub fn half(&self, v: &[f64]) -> Vec<f64> {
        let (n1, n2, m) = (self.grid.n1, self.grid.n2, self.grid.m());
        let mut out = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            out.extend_from_slice(&v[i * m..i * m + n2]);
        }
        out
    }

    /// x₁-averaged u₁ at x₂ = j/N₂, j < N₂.
    pub fn mean_profile(&self, state: &SpectralState) -> Vec<f64> {
        let (u1, _) = self.velocity(state);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        (0..n2)
            .map(|j| (0..n1).map(|i| u1[i * n2 + j]).sum::<f64>() / n1 as f64)
            .collect()
    }

    /// Parallel flow whose profile is `p` mollified with half-width `width`.
    pub fn from_profile(&self, p: &StepProfile, width: f64) -> Result<SpectralState, SolverError> {
        if !(width > 0.0 && width <= 0.5) {
            return Err(SolverError::BadWidth(width));
        }
        let n2 = self.grid.n2;
        if 2.0 * width * (n2 as f64) < 4.0 {
            return Err(SolverError::MollifierTooNarrow { width, n2 });
        }
        let m = self.grid.m();
        let column: Vec<f64> = (0..m)
            .map(|j| match j {
                0 => 0.0,
                j if j == n2 => 0.0,
                j if j < n2 => mollified_vorticity(p, width, self.grid.x2(j)),
                j => -mollified_vorticity(p, width, self.grid.x2(m - j)),
            })
            .collect();
        let mut values = Vec::with_capacity(self.grid.len());
        for _ in 0..self.grid.n1 {
            values.extend_from_slice(&column);
        }
        let mut state = SpectralState::zero(self.grid);
        state.omega_hat = self.real_to_spectral(&values);
        // A field constant in x₁ has only k₁ = 0 modes; drop roundoff elsewhere.
        for i in 1..self.grid.n1 {
            for c in &mut state.omega_hat[i * m..(i + 1) * m] {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        state.mean.constant = p.momentum();
        Ok(state)
    }

    /// Seeded smooth vorticity: random sine-Fourier modes with |n| ≤ 2 and
    /// m ≤ 3, scaled so max |ω| on the grid equals `amplitude`, plus mean `c`.
    pub fn random_smooth(&self, seed: u64, amplitude: f64, c: f64) -> SpectralState {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = self.grid;
        let mut st = SpectralState::zero(g);
        for n in -2i64..=2 {
            for m in 1i64..=3 {
                let z = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                st.omega_hat[g.index_of(n, m)] += z;
                st.omega_hat[g.index_of(n, -m)] -= z;
            }
        }
        st.symmetrize();
        let max = self.max_vorticity(&st);
        st.omega_hat.iter_mut().for_each(|w| *w *= amplitude / max);
        st.mean.constant = c;
        st
    }

    /// Dealiased advection u·∇ω in spectral space.
    pub fn advection(&self, omega_hat: &[Complex64], mean: f64) -> Vec<Complex64> {
        let a = self.velocity_packed(omega_hat);
        // ∂₁ω + i∂₂ω: ik₁ω̂ + i·ik₂ω̂.
        let b_hat: Vec<Complex64> = omega_hat
            .iter()
            .enumerate()
            .map(|(q, w)| w * Complex64::new(-self.k2[q], self.k1[q]))
            .collect();
        let b = self.to_physical(&b_hat);
        let prod: Vec<Complex64> = a
            .par_iter()
            .zip(b.par_iter())
            .map(|(a, b)| Complex64::new((a.re + mean) * b.re + a.im * b.im, 0.0))
            .collect();
        let mut n = self.to_spectral(&prod);
        for (c, &k) in n.iter_mut().zip(&self.keep) {
            if !k {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        n
    }

    fn rhs(
        &self,
        omega_hat: &[Complex64],
        mean: f64,
        force: Option<&ForceField>,
    ) -> (Vec<Complex64>, f64) {
        let mut d = self.advection(omega_hat, mean);
        d.iter_mut().for_each(|c| *c = -*c);
        let mut dc = 0.0;
        if let Some(f) = force {
            for (a, g) in d.iter_mut().zip(&f.g_hat) {
                *a += g;
            }
            dc = f.mean;
        }
        (d, dc)
    }

    /// max |u| over the doubled grid.
    pub fn max_speed(&self, state: &SpectralState) -> f64 {
        let a = self.velocity_packed(&state.omega_hat);
        let c = state.mean.constant;
        a.iter()
            .map(|z| ((z.re + c).powi(2) + z.im * z.im).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn max_vorticity(&self, state: &SpectralState) -> f64 {
        self.to_physical(&state.omega_hat)
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max)
    }

    pub fn cfl(&self, state: &SpectralState, dt: f64) -> f64 {
        self.max_speed(state) * dt / self.grid.dx1().min(self.grid.dx2())
    }

    /// One RK4 step of length `dt`.
    pub fn step(
        &self,
        state: &mut SpectralState,
        dt: f64,
        forcing: Option<&dyn Forcing>,
    ) -> Result<(), SolverError> {
        let t_end = state.t + dt;
        self.step_to(state, t_end, forcing)
    }

    /// One RK4 step ending exactly at `t_end`; the last stage samples the
    /// forcing at `t_end` itself.
    pub fn step_to(
        &self,
        state: &mut SpectralState,
        t_end: f64,
        forcing: Option<&dyn Forcing>,
    ) -> Result<(), SolverError> {
        if state.grid != self.grid {
            return Err(SolverError::GridMismatch);
        }
        let t = state.t;
        let dt = t_end - t;
        let cfl = self.cfl(state, dt);
        // dt = t_end − t may round one ulp above a step chosen at the limit.
        if !(cfl <= CFL_LIMIT * (1.0 + 1e-12)) {
            return Err(SolverError::Cfl { cfl });
        }
        let f0 = forcing.map(|f| f.force_at(t));
        let fh = forcing.map(|f| f.force_at(t + 0.5 * dt));
        let f1 = forcing.map(|f| f.force_at(t_end));
        let w0 = &state.omega_hat;
        let c0 = state.mean.constant;
        let axpy = |s: f64, d: &[Complex64]| -> Vec<Complex64> {
            w0.iter().zip(d).map(|(w, d)| w + d * s).collect()
        };
        let (k1, c1) = self.rhs(w0, c0, f0.as_ref());
        let (k2, c2) = self.rhs(&axpy(0.5 * dt, &k1), c0 + 0.5 * dt * c1, fh.as_ref());
        let (k3, c3) = self.rhs(&axpy(0.5 * dt, &k2), c0 + 0.5 * dt * c2, fh.as_ref());
        let (k4, c4) = self.rhs(&axpy(dt, &k3), c0 + dt * c3, f1.as_ref());
        let s = dt / 6.0;
        let next: Vec<Complex64> = (0..w0.len())
            .map(|q| w0[q] + (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]) * s)
            .collect();
        state.omega_hat = next;
        state.mean.constant = c0 + s * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
        state.t = t_end;
        state.symmetrize();
        if !state
            .omega_hat
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
        {
            return Err(SolverError::NonFinite { t: state.t });
        }
        Ok(())
    }

    /// Advance to `t_end` in equal steps no longer than `dt_max`, calling
    /// `observe` on the initial state and after every step.
    pub fn integrate(
        &self,
        state: &mut SpectralState,
        t_end: f64,
        dt_max: f64,
        forcing: Option<&dyn Forcing>,
        observe: impl FnMut(&SpectralState),
    ) -> Result<usize, SolverError> {
        let span = t_end - state.t;
        let steps = if span > 0.0 {
            (span / dt_max).ceil() as usize
        } else {
            0
        };
        self.integrate_steps(state, t_end, steps, forcing, observe)?;
        Ok(steps)
    }

    /// Advance to `t_end` in exactly `steps` equal steps; step `n` ends at
    /// [`step_time`]`(t0, t_end, steps, n + 1)`.
    pub fn integrate_steps(
        &self,
        state: &mut SpectralState,
        t_end: f64,
        steps: usize,
        forcing: Option<&dyn Forcing>,
        mut observe: impl FnMut(&SpectralState),
    ) -> Result<(), SolverError> {
        let t0 = state.t;
        let guard = BlowUpGuard::new(self, state);
        observe(state);
        for n in 0..steps {
            self.step_to(state, step_time(t0, t_end, steps, n + 1), forcing)?;
            guard.check(self, state)?;
            observe(state);
        }
        Ok(())
    }

    /// Largest step allowed by the CFL limit at the given speed.
    pub fn stable_dt(&self, speed: f64) -> f64 {
        CFL_LIMIT * self.grid.dx1().min(self.grid.dx2()) / speed.max(1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Grid {
        Grid::new(n, n, 1.0).unwrap()
    }

    fn two_step() -> StepProfile {
        StepProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap()
    }

    #[test]
    fn bump_is_a_probability_density() {
        assert!((bump_cdf(1.0) - 1.0).abs() < 1e-14);
        assert!(bump_cdf(-1.0).abs() < 1e-14);
        assert!((bump_cdf(0.0) - 0.5).abs() < 1e-14);
        // Midpoint rule on the density matches the CDF.
        let n = 20_000;
        let h = 1.6 / n as f64;
        let s: f64 = (0..n)
            .map(|i| bump_density(-0.8 + (i as f64 + 0.5) * h) * h)
            .sum();
        assert!((s - (bump_cdf(0.8) - bump_cdf(-0.8))).abs() < 1e-9);
    }

    #[test]
    fn mollified_profile_keeps_mean_and_far_values() {
        let p = two_step();
        let w = 0.1;
        assert!((mollified_profile(&p, w, 0.2) - 1.0).abs() < 1e-14);
        assert!((mollified_profile(&p, w, 0.8) + 1.0).abs() < 1e-14);
        assert!(mollified_profile(&p, w, 0.5).abs() < 1e-14);
        let n = 4000;
        let mean: f64 = (0..n)
            .map(|i| mollified_profile(&p, 0.3, (i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        assert!((mean - p.momentum()).abs() < 1e-9);
    }

    #[test]
    fn interface_spike_has_mass_of_the_jump() {
        let p = two_step();
        let n = 20_000;
        let mass: f64 = (0..n)
            .map(|i| mollified_vorticity(&p, 0.1, (i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        // ∫ −U' = U(0) − U(1) = 2.
        assert!((mass - 2.0).abs() < 1e-9);
    }

    #[test]
    fn narrow_mollifier_rejected() {
        let s = Solver::new(grid(16));
        assert!(matches!(
            s.from_profile(&two_step(), 0.1),
            Err(SolverError::MollifierTooNarrow { .. })
        ));
        assert!(s.from_profile(&two_step(), 0.125).is_ok());
        assert!(matches!(
            s.from_profile(&two_step(), 0.0),
            Err(SolverError::BadWidth(_))
        ));
    }

    #[test]
    fn constant_profile_is_pure_mean() {
        let s = Solver::new(grid(16));
        let st = s.from_profile(&StepProfile::constant(0.7), 0.2).unwrap();
        assert!(st.max_abs_coefficient() < 1e-15);
        assert_eq!(st.mean.constant, 0.7);
    }

    #[test]
    fn mean_profile_matches_mollified_profile() {
        let s = Solver::new(grid(64));
        let p = two_step();
        let st = s.from_profile(&p, 0.15).unwrap();
        let prof = s.mean_profile(&st);
        for (j, u) in prof.iter().enumerate().skip(1) {
            let x = s.grid.x2(j);
            assert!(
                (u - mollified_profile(&p, 0.15, x)).abs() < 1e-4,
                "x2 = {x}"
            );
        }
    }

    #[test]
    fn transforms_round_trip() {
        let s = Solver::new(Grid::new(8, 6, 2.0).unwrap());
        let v: Vec<Complex64> = (0..s.grid.len())
            .map(|q| Complex64::new((q as f64).sin(), (q as f64 * 0.3).cos()))
            .collect();
        let back = s.to_physical(&s.to_spectral(&v));
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn parallel_flow_is_steady() {
        let s = Solver::new(grid(32));
        let mut st = s.from_profile(&two_step(), 0.2).unwrap();
        let before = st.clone();
        let dt = s.stable_dt(s.max_speed(&st));
        for _ in 0..20 {
            s.step(&mut st, dt, None).unwrap();
        }
        assert!(st.velocity_distance(&before).unwrap() <= 1e-12 * before.velocity_norm());
    }

    #[test]
    fn cfl_violation_is_reported() {
        let s = Solver::new(grid(16));
        let mut st = s.from_profile(&two_step(), 0.25).unwrap();
        assert!(matches!(
            s.step(&mut st, 1.0, None),
            Err(SolverError::Cfl { .. })
        ));
    }

    #[test]
    fn mean_force_drives_momentum_exactly() {
        let g = grid(16);
        let s = Solver::new(g);
        let mut st = SpectralState::zero(g);
        let mut f = ForceField::zero(g);
        f.mean = 0.25;
        s.integrate(&mut st, 2.0, 0.01, Some(&f), |_| {}).unwrap();
        assert!((st.mean.constant - 0.5).abs() < 1e-12);
    }

    #[test]
    fn force_norm_matches_physical_quadrature() {
        let g = Grid::new(16, 16, 2.0).unwrap();
        let s = Solver::new(g);
        let mut f = ForceField::zero(g);
        f.mean = 0.3;
        let phys: Vec<f64> = (0..g.n1)
            .flat_map(|i| {
                (0..g.m()).map(move |j| {
                    let (x1, x2) = (g.x1(i), g.x2(j));
                    (PI * x1).cos() * (2.0 * PI * x2).sin() + (3.0 * PI * x2).sin()
                })
            })
            .collect();
        f.g_hat = s.real_to_spectral(&phys);
        // Periodic quadrature over the doubled domain is exact; halve it.
        let a = s.velocity_packed(&f.g_hat);
        let area = g.dx1() * g.dx2();
        let quad: f64 = a
            .iter()
            .map(|z| ((z.re + f.mean).powi(2) + z.im * z.im) * area)
            .sum::<f64>()
            / 2.0;
        assert!((quad.sqrt() - f.norm()).abs() < 1e-12);
        assert!(f.admissibility_defect() < 1e-15);
    }
}
