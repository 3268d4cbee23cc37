//! Least-action ensembles on a cell grid.
//!
//! Particle `p` starts in cell `p`, must sit in cell `g(p)` at the final
//! slice, and every slice in between is a permutation of the cells. The
//! action only couples consecutive slices, so the problem is a shortest
//! path through layers of permutations.
//!
//! Exact mode is a depth-first branch-and-bound that assigns one particle
//! at a time. Its bound adds, for every particle, the cheapest unconstrained
//! route from its latest cell to its destination, tabulated by dynamic
//! programming over step counts. Heuristic mode re-solves one slice at a
//! time as an assignment problem against its two neighbours until nothing
//! improves, from several starts.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::braid::{braid_word, isotopy_invariants_equal, BraidRecord, Verdict};
use super::{CellGrid, FlowError, TrajectoryEnsemble};

pub const EXACT_MAX_CELLS: usize = 8;
pub const EXACT_MAX_INTERIOR: usize = 4;

/// Total squared step and the cells of a complete assignment.
type Found = (f64, Vec<Vec<usize>>);

/// Values closer than this (relative) count as ties.
const TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteFlowProblem {
    pub grid: CellGrid,
    /// Destination cell of the particle starting in each cell.
    pub endpoint: Vec<usize>,
    /// Number of slices strictly between the two ends.
    pub interior: usize,
    pub horizon: f64,
    /// When present, exact mode only accepts ensembles whose braid
    /// invariants match this record.
    pub reference: Option<BraidRecord>,
}

impl DiscreteFlowProblem {
    pub fn new(
        grid: CellGrid,
        endpoint: Vec<usize>,
        interior: usize,
        horizon: f64,
    ) -> Result<Self, FlowError> {
        let n = grid.cells();
        let mut seen = vec![false; n];
        if endpoint.len() != n {
            return Err(FlowError::NotBijection(n));
        }
        for &k in &endpoint {
            if k >= n || seen[k] {
                return Err(FlowError::NotBijection(n));
            }
            seen[k] = true;
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(FlowError::BadHorizon(horizon));
        }
        Ok(Self {
            grid,
            endpoint,
            interior,
            horizon,
            reference: None,
        })
    }

    pub fn with_reference(mut self, reference: BraidRecord) -> Self {
        self.reference = Some(reference);
        self
    }

    fn cells(&self) -> usize {
        self.grid.cells()
    }

    /// Action of an assignment given its summed squared steps.
    fn action_of(&self, total: f64) -> f64 {
        let dt = self.horizon / (self.interior + 1) as f64;
        total / (self.cells() as f64 * 2.0 * dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    Exact,
    Heuristic {
        restarts: usize,
        max_sweeps: usize,
        seed: u64,
    },
}

impl Mode {
    pub fn heuristic(seed: u64) -> Self {
        Mode::Heuristic {
            restarts: 256,
            max_sweeps: 100,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub ensemble: TrajectoryEnsemble,
    /// `cells[s][p]`: cell of particle `p` at slice `s`, ends included.
    pub cells: Vec<Vec<usize>>,
    pub action: f64,
    /// Heuristic only: some descent hit `max_sweeps` before settling.
    pub budget_exhausted: bool,
    /// Exact only: search nodes visited.
    pub nodes: usize,
}

pub fn minimize_action(
    problem: &DiscreteFlowProblem,
    mode: Mode,
) -> Result<SearchOutcome, FlowError> {
    if let Some(r) = &problem.reference {
        if r.strands() != problem.cells() {
            return Err(FlowError::StrandMismatch(r.strands(), problem.cells()));
        }
    }
    let table = Costs::new(problem);
    match mode {
        Mode::Exact => exact(problem, &table),
        Mode::Heuristic {
            restarts,
            max_sweeps,
            seed,
        } => {
            let (cells, total, exhausted) = heuristic(problem, &table, restarts, max_sweeps, seed);
            Ok(outcome(problem, cells, total, exhausted, 0))
        }
    }
}

fn outcome(
    problem: &DiscreteFlowProblem,
    cells: Vec<Vec<usize>>,
    total: f64,
    budget_exhausted: bool,
    nodes: usize,
) -> SearchOutcome {
    SearchOutcome {
        ensemble: TrajectoryEnsemble::from_cells(&problem.grid, &cells),
        action: problem.action_of(total),
        cells,
        budget_exhausted,
        nodes,
    }
}

/// Step costs and cheapest unconstrained routes.
struct Costs {
    n: usize,
    step: Vec<f64>,
    /// `route[r][a·n + b]`: cheapest r-step route from a to b.
    route: Vec<Vec<f64>>,
}

impl Costs {
    fn new(problem: &DiscreteFlowProblem) -> Self {
        let n = problem.cells();
        let mut step = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                step[a * n + b] = problem.grid.cost(a, b);
            }
        }
        let mut route = vec![vec![f64::INFINITY; n * n]];
        for a in 0..n {
            route[0][a * n + a] = 0.0;
        }
        for r in 1..=problem.interior + 1 {
            let prev = &route[r - 1];
            let mut next = vec![f64::INFINITY; n * n];
            for a in 0..n {
                for b in 0..n {
                    next[a * n + b] = (0..n)
                        .map(|k| step[a * n + k] + prev[k * n + b])
                        .fold(f64::INFINITY, f64::min);
                }
            }
            route.push(next);
        }
        Self { n, step, route }
    }

    fn c(&self, a: usize, b: usize) -> f64 {
        self.step[a * self.n + b]
    }

    fn h(&self, r: usize, a: usize, b: usize) -> f64 {
        self.route[r][a * self.n + b]
    }

    fn total(&self, cells: &[Vec<usize>]) -> f64 {
        cells
            .windows(2)
            .map(|w| (0..self.n).map(|p| self.c(w[0][p], w[1][p])).sum::<f64>())
            .sum()
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE * a.abs().max(b.abs()).max(1.0)
}

fn braid_matches(problem: &DiscreteFlowProblem, cells: &[Vec<usize>]) -> bool {
    let Some(reference) = &problem.reference else {
        return true;
    };
    let e = TrajectoryEnsemble::from_cells(&problem.grid, cells);
    match braid_word(&e) {
        Ok(r) => matches!(
            isotopy_invariants_equal(&r, reference),
            Ok(Verdict::Indistinguishable)
        ),
        Err(_) => false,
    }
}

struct Dfs<'a> {
    problem: &'a DiscreteFlowProblem,
    costs: &'a Costs,
    s_max: usize,
    cells: Vec<Vec<usize>>,
    used: Vec<u32>,
    bound_cap: f64,
    best: Option<(f64, Vec<Vec<usize>>)>,
    nodes: usize,
}

impl Dfs<'_> {
    fn cap(&self) -> f64 {
        self.best.as_ref().map_or(self.bound_cap, |b| b.0)
    }

    /// Assign particle `p` at slice `s`; `spent` is the cost of finished
    /// steps and `rest` the route bound of everything left.
    fn go(&mut self, s: usize, p: usize, spent: f64, rest: f64) {
        let n = self.costs.n;
        if s > self.s_max {
            let total = spent + rest;
            let better = match &self.best {
                None => total <= self.bound_cap || close(total, self.bound_cap),
                Some((b, _)) => total < *b && !close(total, *b),
            };
            if better && braid_matches(self.problem, &self.cells) {
                self.best = Some((total, self.cells.clone()));
            }
            return;
        }
        let (ns, np) = if p + 1 == n { (s + 1, 0) } else { (s, p + 1) };
        let dest = self.problem.endpoint[p];
        let from = self.cells[s - 1][p];
        let left = self.s_max + 2 - s;
        let old = self.costs.h(left, from, dest);
        for k in 0..n {
            if self.used[s] & (1 << k) != 0 {
                continue;
            }
            self.nodes += 1;
            let spent2 = spent + self.costs.c(from, k);
            let rest2 = rest - old + self.costs.h(left - 1, k, dest);
            let bound = spent2 + rest2;
            let cap = self.cap();
            if bound > cap && !close(bound, cap) {
                continue;
            }
            self.cells[s][p] = k;
            self.used[s] |= 1 << k;
            self.go(ns, np, spent2, rest2);
            self.used[s] &= !(1 << k);
        }
    }
}

fn exact(problem: &DiscreteFlowProblem, costs: &Costs) -> Result<SearchOutcome, FlowError> {
    let n = problem.cells();
    let s_max = problem.interior;
    if n > EXACT_MAX_CELLS || s_max > EXACT_MAX_INTERIOR {
        return Err(FlowError::TooLarge {
            n,
            s: s_max,
            max_n: EXACT_MAX_CELLS,
            max_s: EXACT_MAX_INTERIOR,
        });
    }
    let identity: Vec<usize> = (0..n).collect();
    let mut base = vec![identity.clone(); s_max + 2];
    base[s_max + 1] = problem.endpoint.clone();
    if s_max == 0 {
        if !braid_matches(problem, &base) {
            return Err(FlowError::Infeasible);
        }
        let total = costs.total(&base);
        return Ok(outcome(problem, base, total, false, 0));
    }
    // A heuristic incumbent caps the search when it is admissible.
    let (warm, warm_total, _) = heuristic(problem, costs, 16, 100, 0);
    let cap = if braid_matches(problem, &warm) {
        warm_total
    } else {
        f64::INFINITY
    };
    let rest0: f64 = (0..n)
        .map(|p| costs.h(s_max + 1, p, problem.endpoint[p]))
        .sum();
    // One subtree per cell of particle 0 at the first interior slice; the
    // earliest subtree wins ties, which keeps the lexicographic order.
    let results: Vec<(Option<Found>, usize)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut dfs = Dfs {
                problem,
                costs,
                s_max,
                cells: base.clone(),
                used: vec![0; s_max + 2],
                bound_cap: cap,
                best: None,
                nodes: 1,
            };
            let spent = costs.c(0, k);
            let rest = rest0 - costs.h(s_max + 1, 0, problem.endpoint[0])
                + costs.h(s_max, k, problem.endpoint[0]);
            if spent + rest <= cap || close(spent + rest, cap) {
                dfs.cells[1][0] = k;
                dfs.used[1] = 1 << k;
                let (ns, np) = if n == 1 { (2, 0) } else { (1, 1) };
                dfs.go(ns, np, spent, rest);
            }
            (dfs.best, dfs.nodes)
        })
        .collect();
    let nodes = results.iter().map(|r| r.1).sum();
    let mut best: Option<(f64, Vec<Vec<usize>>)> = None;
    for (found, _) in results {
        if let Some((v, cells)) = found {
            let take = match &best {
                None => true,
                Some((b, _)) => v < *b && !close(v, *b),
            };
            if take {
                best = Some((v, cells));
            }
        }
    }
    let (total, cells) = best.ok_or(FlowError::Infeasible)?;
    Ok(outcome(problem, cells, total, false, nodes))
}

fn heuristic(
    problem: &DiscreteFlowProblem,
    costs: &Costs,
    restarts: usize,
    max_sweeps: usize,
    seed: u64,
) -> (Vec<Vec<usize>>, f64, bool) {
    let n = problem.cells();
    let s_max = problem.interior;
    let identity: Vec<usize> = (0..n).collect();
    let frame = |interior: Vec<Vec<usize>>| {
        let mut cells = vec![identity.clone()];
        cells.extend(interior);
        cells.push(problem.endpoint.clone());
        cells
    };
    let mut starts = vec![
        frame(routed_start(problem, costs)),
        frame(vec![identity.clone(); s_max]),
        frame(vec![problem.endpoint.clone(); s_max]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exhausted = false;
    let mut best: Option<(Vec<Vec<usize>>, f64)> = None;
    let mut consider = |best: &mut Option<(Vec<Vec<usize>>, f64)>, cells| {
        let (cells, total, hit) = descend(costs, cells, max_sweeps);
        exhausted |= hit;
        let take = match best {
            None => true,
            Some((_, b)) => total < *b && !close(total, *b),
        };
        if take {
            *best = Some((cells, total));
        }
    };
    for start in starts.drain(..) {
        consider(&mut best, start);
    }
    for r in 0..restarts {
        let cells = if r % 2 == 0 || s_max == 0 {
            // Fresh random interior.
            frame(
                (0..s_max)
                    .map(|_| {
                        let mut p = identity.clone();
                        p.shuffle(&mut rng);
                        p
                    })
                    .collect(),
            )
        } else {
            // Kick the incumbent: swap two particles in one slice.
            let mut cells = best.as_ref().expect("incumbent").0.clone();
            let s = rng.gen_range(1..=s_max);
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            cells[s].swap(a, b);
            cells
        };
        consider(&mut best, cells);
    }
    let (cells, total) = best.expect("at least one start");
    (cells, total, exhausted)
}

/// Interior slices along each particle's cheapest route, made into
/// permutations by matching particles to their route cells.
fn routed_start(problem: &DiscreteFlowProblem, costs: &Costs) -> Vec<Vec<usize>> {
    let n = problem.cells();
    let s_max = problem.interior;
    let mut at: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(s_max);
    for s in 1..=s_max {
        let left = s_max + 1 - s;
        let want: Vec<usize> = (0..n)
            .map(|p| {
                let dest = problem.endpoint[p];
                (0..n)
                    .min_by(|&a, &b| {
                        let ca = costs.c(at[p], a) + costs.h(left, a, dest);
                        let cb = costs.c(at[p], b) + costs.h(left, b, dest);
                        ca.total_cmp(&cb)
                    })
                    .expect("cells")
            })
            .collect();
        let m: Vec<f64> = (0..n)
            .flat_map(|p| (0..n).map(move |k| (p, k)))
            .map(|(p, k)| costs.c(want[p], k))
            .collect();
        let slice = assign(&m, n);
        at = slice.clone();
        out.push(slice);
    }
    out
}

/// Re-solve each interior slice against its neighbours until a full sweep
/// changes nothing. Returns the result, its total, and whether `max_sweeps`
/// ran out first.
fn descend(
    costs: &Costs,
    mut cells: Vec<Vec<usize>>,
    max_sweeps: usize,
) -> (Vec<Vec<usize>>, f64, bool) {
    let n = costs.n;
    let s_max = cells.len() - 2;
    let mut settled = s_max == 0;
    for _ in 0..max_sweeps {
        if settled {
            break;
        }
        let mut moved = false;
        for s in 1..=s_max {
            let m: Vec<f64> = (0..n)
                .flat_map(|p| (0..n).map(move |k| (p, k)))
                .map(|(p, k)| costs.c(cells[s - 1][p], k) + costs.c(k, cells[s + 1][p]))
                .collect();
            let old: f64 = (0..n).map(|p| m[p * n + cells[s][p]]).sum();
            let next = assign(&m, n);
            let new: f64 = (0..n).map(|p| m[p * n + next[p]]).sum();
            if new < old && !close(new, old) {
                cells[s] = next;
                moved = true;
            }
        }
        settled = !moved;
    }
    let total = costs.total(&cells);
    (cells, total, !settled)
}

/// Minimum-cost perfect matching rows → columns of the `n × n` matrix `m`
/// (Hungarian method with potentials); returns the column of each row.
fn assign(m: &[f64], n: usize) -> Vec<usize> {
    // 1-based arrays with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = m[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[row_of[j] - 1] = j - 1;
    }
    out
}
