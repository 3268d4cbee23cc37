//! Discrete generalized flows: finite trajectory ensembles over time slices,
//! their action, incompressibility on a cell grid, least-action search, and
//! braid words of their x₁-projections.
//!
//! Every particle carries weight 1/N. Between slices a trajectory is the
//! straight segment that goes the short way around the period in x₁.

mod braid;
mod search;

pub use braid::{
    braid_word, free_reduce, isotopy_invariants_equal, BraidRecord, Generator, Verdict, TIE_OFFSET,
};
pub use search::{
    minimize_action, DiscreteFlowProblem, Mode, SearchOutcome, EXACT_MAX_CELLS, EXACT_MAX_INTERIOR,
};

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::StepProfile;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("ensemble needs at least one particle and two slices")]
    Empty,
    #[error("particle {particle} has {got} slices, expected {expected}")]
    Ragged {
        particle: usize,
        got: usize,
        expected: usize,
    },
    #[error("particle {particle} leaves the channel at slice {slice}")]
    OutsideChannel { particle: usize, slice: usize },
    #[error("endpoint map is not a bijection on {0} cells")]
    NotBijection(usize),
    #[error("exact search supports N ≤ {max_n} cells and S ≤ {max_s} interior slices, got N = {n}, S = {s}")]
    TooLarge {
        n: usize,
        s: usize,
        max_n: usize,
        max_s: usize,
    },
    #[error("no ensemble satisfies the constraints")]
    Infeasible,
    #[error("strands {a} and {b} cross with equal x₂ in interval {interval}")]
    DegenerateCrossing { interval: usize, a: usize, b: usize },
    #[error("braids have {0} and {1} strands")]
    StrandMismatch(usize, usize),
    #[error("grid must have positive sizes and length")]
    BadGrid,
    #[error("horizon must be positive, got {0}")]
    BadHorizon(f64),
    #[error("malformed ensemble file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform `n1 × n2` grid of cells on `[0,L) × [0,1]`; cell `k` sits in
/// column `k / n2` and row `k % n2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGrid {
    pub n1: usize,
    pub n2: usize,
    pub l: f64,
}

impl CellGrid {
    pub fn new(n1: usize, n2: usize, l: f64) -> Result<Self, FlowError> {
        if n1 == 0 || n2 == 0 || !(l > 0.0 && l.is_finite()) {
            return Err(FlowError::BadGrid);
        }
        Ok(Self { n1, n2, l })
    }

    pub fn cells(&self) -> usize {
        self.n1 * self.n2
    }

    pub fn center(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k / self.n2, k % self.n2);
        [
            (i as f64 + 0.5) * self.l / self.n1 as f64,
            (j as f64 + 0.5) / self.n2 as f64,
        ]
    }

    /// Squared distance between cell centers, short way around in x₁.
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        let (p, q) = (self.center(a), self.center(b));
        let d1 = wrap(q[0] - p[0], self.l);
        let d2 = q[1] - p[1];
        d1 * d1 + d2 * d2
    }
}

/// Representative of `d` modulo `l` in `[−l/2, l/2)`.
pub fn wrap(d: f64, l: f64) -> f64 {
    let r = d.rem_euclid(l);
    if r >= 0.5 * l {
        r - l
    } else {
        r
    }
}

/// N trajectories sampled at S + 1 equally spaced slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    /// Channel length.
    pub l: f64,
    /// `positions[i][s]` is particle `i` at slice `s`.
    pub positions: Vec<Vec<[f64; 2]>>,
}

impl TrajectoryEnsemble {
    pub fn new(l: f64, positions: Vec<Vec<[f64; 2]>>) -> Result<Self, FlowError> {
        let slices = positions.first().map_or(0, Vec::len);
        if positions.is_empty() || slices < 2 {
            return Err(FlowError::Empty);
        }
        for (i, p) in positions.iter().enumerate() {
            if p.len() != slices {
                return Err(FlowError::Ragged {
                    particle: i,
                    got: p.len(),
                    expected: slices,
                });
            }
            for (s, x) in p.iter().enumerate() {
                let inside = (0.0..l).contains(&x[0]) && (0.0..=1.0).contains(&x[1]);
                if !inside {
                    return Err(FlowError::OutsideChannel {
                        particle: i,
                        slice: s,
                    });
                }
            }
        }
        Ok(Self { l, positions })
    }

    /// Particles following per-slice cell assignments: `cells[s][i]` is the
    /// cell of particle `i` at slice `s`.
    pub fn from_cells(grid: &CellGrid, cells: &[Vec<usize>]) -> Self {
        let n = cells.first().map_or(0, Vec::len);
        let positions = (0..n)
            .map(|i| cells.iter().map(|slice| grid.center(slice[i])).collect())
            .collect();
        Self {
            l: grid.l,
            positions,
        }
    }

    /// Particles at the cell centers carried by the parallel flow `(U(x₂), 0)`
    /// over `[0, T]` in `slices` intervals.
    pub fn parallel_flow(grid: &CellGrid, u: &StepProfile, horizon: f64, slices: usize) -> Self {
        let positions = (0..grid.cells())
            .map(|k| {
                let [x1, x2] = grid.center(k);
                let v = u.value_at(x2);
                (0..=slices)
                    .map(|s| {
                        let t = horizon * s as f64 / slices as f64;
                        [(x1 + v * t).rem_euclid(grid.l), x2]
                    })
                    .collect()
            })
            .collect();
        Self {
            l: grid.l,
            positions,
        }
    }

    /// The sub-ensemble of the listed particles.
    pub fn select(&self, particles: &[usize]) -> Self {
        Self {
            l: self.l,
            positions: particles
                .iter()
                .map(|&i| self.positions[i].clone())
                .collect(),
        }
    }

    pub fn particles(&self) -> usize {
        self.positions.len()
    }

    /// Number of intervals S between slices.
    pub fn intervals(&self) -> usize {
        self.positions[0].len() - 1
    }

    /// Displacement of particle `i` over interval `s`, short way in x₁.
    pub fn step(&self, i: usize, s: usize) -> [f64; 2] {
        let (a, b) = (self.positions[i][s], self.positions[i][s + 1]);
        [wrap(b[0] - a[0], self.l), b[1] - a[1]]
    }

    /// Mean squared displacement over interval `s`.
    fn mean_square_step(&self, s: usize) -> f64 {
        let n = self.particles() as f64;
        (0..self.particles())
            .map(|i| {
                let d = self.step(i, s);
                d[0] * d[0] + d[1] * d[1]
            })
            .sum::<f64>()
            / n
    }
}

/// (1/N) Σᵢ Σₛ |xᵢ(s+1) − xᵢ(s)|² / 2Δt with Δt = T/S.
pub fn action(e: &TrajectoryEnsemble, horizon: f64) -> f64 {
    let dt = horizon / e.intervals() as f64;
    (0..e.intervals())
        .map(|s| e.mean_square_step(s))
        .sum::<f64>()
        / (2.0 * dt)
}

/// Σₛ Δt·(root-mean-square speed over interval s). Note Δt·rms speed is the
/// rms displacement, so T cancels.
pub fn path_length(e: &TrajectoryEnsemble, _horizon: f64) -> f64 {
    (0..e.intervals())
        .map(|s| e.mean_square_step(s).sqrt())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompressibilityReport {
    pub passed: bool,
    /// First slice that is not a permutation of the cell centers.
    pub failing_slice: Option<usize>,
    /// Slice with the largest distance from a particle to its nearest center.
    pub worst_slice: usize,
    pub worst_offset: f64,
}

/// Checks that every slice puts exactly one particle at each cell center,
/// within `tolerance`.
pub fn incompressibility_check(
    e: &TrajectoryEnsemble,
    grid: &CellGrid,
    tolerance: f64,
) -> IncompressibilityReport {
    let mut report = IncompressibilityReport {
        passed: true,
        failing_slice: None,
        worst_slice: 0,
        worst_offset: 0.0,
    };
    let fail = |r: &mut IncompressibilityReport, s: usize| {
        if r.passed {
            r.passed = false;
            r.failing_slice = Some(s);
        }
    };
    for s in 0..=e.intervals() {
        if e.particles() != grid.cells() {
            fail(&mut report, s);
            continue;
        }
        let mut used = vec![false; grid.cells()];
        for i in 0..e.particles() {
            let x = e.positions[i][s];
            let (k, off) = nearest_cell(grid, x);
            if off > report.worst_offset {
                report.worst_offset = off;
                report.worst_slice = s;
            }
            if off > tolerance || used[k] {
                fail(&mut report, s);
            }
            used[k] = true;
        }
    }
    report
}

fn nearest_cell(grid: &CellGrid, x: [f64; 2]) -> (usize, f64) {
    let i = ((x[0] / grid.l * grid.n1 as f64).floor() as usize).min(grid.n1 - 1);
    let j = ((x[1] * grid.n2 as f64).floor() as usize).min(grid.n2 - 1);
    let k = i * grid.n2 + j;
    let c = grid.center(k);
    let d1 = wrap(x[0] - c[0], grid.l);
    (k, (d1 * d1 + (x[1] - c[1]).powi(2)).sqrt())
}

pub const ENSEMBLE_HEADER: &str = "particle,slice,x1,x2";

/// CSV with columns `particle,slice,x1,x2`, particle-major.
pub fn write_ensemble(e: &TrajectoryEnsemble, mut out: impl Write) -> Result<(), FlowError> {
    writeln!(out, "{ENSEMBLE_HEADER}")?;
    for (i, p) in e.positions.iter().enumerate() {
        for (s, x) in p.iter().enumerate() {
            writeln!(out, "{i},{s},{:?},{:?}", x[0], x[1])?;
        }
    }
    Ok(())
}

/// Reads an ensemble CSV; rows may come in any order but must cover every
/// (particle, slice) pair exactly once.
pub fn read_ensemble(input: impl BufRead, l: f64) -> Result<TrajectoryEnsemble, FlowError> {
    let bad = |m: String| FlowError::Format(m);
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != ENSEMBLE_HEADER {
        return Err(bad(format!("expected header `{ENSEMBLE_HEADER}`")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(bad(format!("line {}: expected 4 fields", n + 2)));
        }
        let parse_err = |what: &str| bad(format!("line {}: bad {what}", n + 2));
        let i: usize = f[0].parse().map_err(|_| parse_err("particle"))?;
        let s: usize = f[1].parse().map_err(|_| parse_err("slice"))?;
        let x1: f64 = f[2].parse().map_err(|_| parse_err("x1"))?;
        let x2: f64 = f[3].parse().map_err(|_| parse_err("x2"))?;
        rows.push((i, s, [x1, x2]));
    }
    let n = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let slices = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if rows.len() != n * slices {
        return Err(bad("rows do not form a full particle × slice table".into()));
    }
    let mut positions = vec![vec![[f64::NAN; 2]; slices]; n];
    for (i, s, x) in rows {
        if !positions[i][s][0].is_nan() {
            return Err(bad(format!("duplicate row for particle {i}, slice {s}")));
        }
        positions[i][s] = x;
    }
    TrajectoryEnsemble::new(l, positions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_picks_the_short_way() {
        assert_eq!(wrap(0.3, 2.0), 0.3);
        assert_eq!(wrap(1.7, 2.0), 1.7 - 2.0);
        assert_eq!(wrap(-1.7, 2.0), -1.7 + 2.0);
        assert_eq!(wrap(1.0, 2.0), -1.0);
    }

    #[test]
    fn stationary_ensemble_has_no_action() {
        let g = CellGrid::new(3, 2, 1.0).unwrap();
        let cells: Vec<Vec<usize>> = vec![(0..6).collect(); 4];
        let e = TrajectoryEnsemble::from_cells(&g, &cells);
        assert_eq!(action(&e, 1.0), 0.0);
        assert_eq!(path_length(&e, 1.0), 0.0);
        assert!(incompressibility_check(&e, &g, 1e-12).passed);
    }

    #[test]
    fn straight_unit_path_is_slice_invariant() {
        for s in [1, 2, 5, 9] {
            let pts = (0..=s)
                .map(|q| [0.5 + q as f64 / s as f64 * 1.0, 0.5])
                .collect();
            let e = TrajectoryEnsemble::new(4.0, vec![pts]).unwrap();
            assert!((action(&e, 1.0) - 0.5).abs() < 1e-14);
            assert!((path_length(&e, 1.0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn parallel_flow_action_is_horizon_times_channel_energy() {
        // Rows aligned with the layers, so the particle average is exact.
        let g = CellGrid::new(4, 4, 2.0).unwrap();
        let u = StepProfile::uniform(vec![1.0, -1.0]).unwrap();
        let horizon = 3.0;
        let e = TrajectoryEnsemble::parallel_flow(&g, &u, horizon, 40);
        // Per particle: Σ (vT/S)²/(2T/S) = v²T/2, and the mean of v² is ∫U²,
        // so the action is T·½∫U².
        let want = horizon * u.energy();
        assert!((action(&e, horizon) - want).abs() < 1e-12);
    }

    #[test]
    fn path_length_obeys_cauchy_schwarz() {
        let e = TrajectoryEnsemble::new(
            1.0,
            vec![
                vec![[0.1, 0.2], [0.4, 0.9], [0.95, 0.5]],
                vec![[0.6, 0.1], [0.6, 0.3], [0.2, 0.3]],
            ],
        )
        .unwrap();
        let t = 2.5;
        assert!(path_length(&e, t).powi(2) <= 2.0 * t * action(&e, t) + 1e-15);
    }

    #[test]
    fn doubled_cell_fails_with_slice_index() {
        let g = CellGrid::new(2, 1, 1.0).unwrap();
        let e = TrajectoryEnsemble::from_cells(&g, &[vec![0, 1], vec![1, 1], vec![1, 0]]);
        let r = incompressibility_check(&e, &g, 1e-12);
        assert!(!r.passed);
        assert_eq!(r.failing_slice, Some(1));
    }

    #[test]
    fn outside_points_are_rejected() {
        let err = TrajectoryEnsemble::new(1.0, vec![vec![[0.2, 0.5], [1.2, 0.5]]]).unwrap_err();
        assert!(matches!(
            err,
            FlowError::OutsideChannel {
                particle: 0,
                slice: 1
            }
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = CellGrid::new(3, 2, 2.0).unwrap();
        let u = StepProfile::uniform(vec![0.3, -0.7]).unwrap();
        let e = TrajectoryEnsemble::parallel_flow(&g, &u, 1.3, 5);
        let mut buf = Vec::new();
        write_ensemble(&e, &mut buf).unwrap();
        let back = read_ensemble(buf.as_slice(), 2.0).unwrap();
        assert_eq!(back, e);
        let short = &buf[..buf.len() - 20];
        assert!(read_ensemble(short, 2.0).is_err());
    }
}
