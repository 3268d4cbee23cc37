//! Move sequences connecting two step profiles with equal momentum and energy.
//!
//! The planner first looks for an exact plan through value classes (see
//! `classes`): targets produced by collisions are traced back to the source
//! values and the collisions replayed forward. When no such trace is found it
//! falls back to a descent. Both profiles are cut to their common partition,
//! pairing every piece of the working profile with a target piece of the same
//! length. Each step collides (part of) one piece with (part of) a partner,
//! the masses chosen so that the first piece lands on its target value, and a
//! bubble sort of transposes puts the pieces in target order at the end.
//! Every move conserves momentum and energy, so all intermediate profiles stay
//! on the constraint set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{collide, Move, ProfileError, StepProfile};

mod classes;

/// Tolerance on the momentum and energy hypotheses.
pub const INVARIANT_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("momentum differs by {0:e}; planning needs equal momenta")]
    MomentumMismatch(f64),
    #[error("energy differs by {0:e}; planning needs equal energies")]
    EnergyMismatch(f64),
    #[error("eps must be positive, got {0}")]
    BadEps(f64),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub moves: Vec<Move>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate_profiles: Option<Vec<StepProfile>>,
    pub achieved_error: f64,
    pub converged: bool,
}

impl Plan {
    pub fn empty(error: f64, converged: bool) -> Self {
        Self {
            moves: Vec::new(),
            intermediate_profiles: None,
            achieved_error: error,
            converged,
        }
    }

    /// All profiles along the plan, source first.
    pub fn replay(&self, source: &StepProfile) -> Result<Vec<StepProfile>, ProfileError> {
        let mut out = Vec::with_capacity(self.moves.len() + 1);
        out.push(source.clone());
        for m in &self.moves {
            let next = out.last().unwrap().apply(m)?;
            out.push(next);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone)]
pub struct PlannerConfig {
    pub eps: f64,
    pub seed: u64,
    /// Move cap; `None` means `10·K²` with K the larger segment count.
    pub budget: Option<usize>,
    pub record_snapshots: bool,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            eps: 1e-3,
            seed: 0,
            budget: None,
            record_snapshots: false,
        }
    }
}

impl PlannerConfig {
    pub fn with_eps(eps: f64) -> Self {
        Self {
            eps,
            ..Self::default()
        }
    }
}

pub fn default_budget(source: &StepProfile, target: &StepProfile) -> usize {
    let k = source.segments().max(target.segments());
    10 * k * k
}

/// Check the equal-invariant hypotheses.
pub fn check_invariants(source: &StepProfile, target: &StepProfile) -> Result<(), PlanError> {
    let dp = (source.momentum() - target.momentum()).abs();
    if dp > INVARIANT_TOL {
        return Err(PlanError::MomentumMismatch(dp));
    }
    let de = (source.energy() - target.energy()).abs();
    if de > INVARIANT_TOL {
        return Err(PlanError::EnergyMismatch(de));
    }
    Ok(())
}

/// Segments sorted by value as `(segment index, cumulative end)`.
fn sorted_layout(p: &StepProfile) -> Vec<(usize, f64)> {
    let mut order: Vec<usize> = (0..p.segments()).collect();
    order.sort_by(|&a, &b| p.values()[a].total_cmp(&p.values()[b]));
    let lengths: Vec<f64> = p.lengths().collect();
    let mut end = 0.0;
    let mut out: Vec<(usize, f64)> = order
        .into_iter()
        .map(|s| {
            end += lengths[s];
            (s, end)
        })
        .collect();
    out.last_mut().unwrap().1 = 1.0;
    out
}

/// Pieces whose value is within this of the target count as matched.
const MATCH_TOL: f64 = 1e-13;
/// Pieces lighter than this are never cut off; cuts closer than this merge.
const MIN_PIECE: f64 = 1e-10;
/// Smallest accepted drop in squared mismatch, relative to the current one.
const GAIN_FLOOR: f64 = 1e-9;
/// Fractions of each piece tried by the fallback mixing collision.
const MIX_FRACTIONS: [f64; 8] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0];
/// Mass ratios tried by the stall kick.
const KICK_RATIOS: [f64; 7] = [0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875];

pub fn plan(
    source: &StepProfile,
    target: &StepProfile,
    cfg: &PlannerConfig,
) -> Result<Plan, PlanError> {
    if !(cfg.eps > 0.0) {
        return Err(PlanError::BadEps(cfg.eps));
    }
    check_invariants(source, target)?;
    let budget = cfg.budget.unwrap_or_else(|| default_budget(source, target));

    if source.l2_distance(target) <= cfg.eps {
        return finish(source, target, Vec::new(), cfg);
    }
    // A single transpose or collision is tried first so that one-move targets
    // get one-move plans.
    let k = source.segments();
    let singles = (1..k)
        .map(|k| Move::Transpose { k })
        .chain((1..k).map(|k| Move::Collide { k }));
    for mv in singles {
        if source.apply(&mv)?.l2_distance(target) <= cfg.eps {
            return finish(source, target, vec![mv], cfg);
        }
    }

    if let Some(moves) = classes::class_plan(source, target)? {
        if moves.len() <= budget {
            let found = finish(source, target, moves, cfg)?;
            if found.converged {
                return Ok(found);
            }
        }
    }

    let mut work = Workspace::new(source, target)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // Leave room for the final sort, which costs at most n(n-1)/2 transposes.
    let sort_reserve = |w: &Workspace| {
        let n = w.x.segments();
        n * (n - 1) / 2
    };
    let stop2 = (0.5 * cfg.eps).powi(2);
    while work.mismatch2() > stop2 {
        let step = match work.best_fix() {
            Some(step) => step,
            None => match work.best_mix().or_else(|| work.kick(&mut rng)) {
                Some(step) => step,
                None => break,
            },
        };
        let before = work.moves.len();
        let snapshot = (work.x.clone(), work.tgt.clone(), work.y.clone());
        work.collide_pieces(step)?;
        if work.moves.len() + sort_reserve(&work) > budget {
            // Roll back the step that would overrun the budget.
            work.moves.truncate(before);
            (work.x, work.tgt, work.y) = snapshot;
            break;
        }
    }
    work.sort_to_target()?;
    finish(source, target, work.moves, cfg)
}

#[derive(Debug, Clone, Copy)]
struct FixStep {
    /// 0-based positions of the two pieces.
    i: usize,
    j: usize,
    /// Masses taken from pieces `i` and `j`.
    alpha: f64,
    mu: f64,
}

/// Current profile plus a target piece assigned to each of its segments.
///
/// Target pieces have exactly the lengths of the segments assigned to them, so
/// matching values piece by piece and then sorting reproduces the target.
struct Workspace {
    x: StepProfile,
    /// Target piece index per segment of `x`.
    tgt: Vec<usize>,
    /// Target pieces `(length, value)` in positional order.
    y: Vec<(f64, f64)>,
    moves: Vec<Move>,
}

impl Workspace {
    /// Pair source and target pieces through their increasing rearrangements,
    /// the coupling with least L² mismatch, refining the source to match.
    fn new(source: &StepProfile, target: &StepProfile) -> Result<Self, PlanError> {
        let xs = sorted_layout(source);
        let ys = sorted_layout(target);
        // Cut points of both layouts, near-duplicates folded into source cuts.
        let mut cuts: Vec<f64> = xs.iter().map(|&(_, end)| end).collect();
        for &(_, end) in &ys {
            let near = cuts.iter().any(|&c| (c - end).abs() <= MIN_PIECE);
            if !near {
                cuts.push(end);
            }
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();

        // Walk the layouts: each piece is (source segment, target segment, mass).
        let mut pieces = Vec::with_capacity(cuts.len());
        let (mut a, mut b, mut left) = (0usize, 0usize, 0.0);
        for &c in &cuts {
            let mass = c - left;
            if mass > 0.0 {
                pieces.push((xs[a].0, ys[b].0, mass));
            }
            left = c;
            while a + 1 < xs.len() && xs[a].1 <= c + MIN_PIECE {
                a += 1;
            }
            while b + 1 < ys.len() && ys[b].1 <= c + MIN_PIECE {
                b += 1;
            }
        }

        // Target pieces in positional order: grouped by target segment.
        let mut y = Vec::with_capacity(pieces.len());
        let mut y_index = vec![0usize; pieces.len()];
        for seg in 0..target.segments() {
            for (n, &(_, t, mass)) in pieces.iter().enumerate() {
                if t == seg {
                    y_index[n] = y.len();
                    y.push((mass, target.values()[seg]));
                }
            }
        }

        // Refine every source segment into its pieces, left to right.
        let mut w = Workspace {
            x: source.clone(),
            tgt: Vec::with_capacity(pieces.len()),
            y,
            moves: Vec::new(),
        };
        let mut pos = 0usize;
        for seg in 0..source.segments() {
            let mine: Vec<usize> = (0..pieces.len()).filter(|&n| pieces[n].0 == seg).collect();
            for (r, &n) in mine.iter().enumerate() {
                w.tgt.push(y_index[n]);
                if r + 1 < mine.len() {
                    let len = w.mass(pos);
                    let lambda = pieces[n].2 / len;
                    let mv = Move::Refine { k: pos + 1, lambda };
                    w.x = w.x.apply(&mv)?;
                    w.moves.push(mv);
                }
                pos += 1;
            }
        }
        debug_assert_eq!(w.tgt.len(), w.x.segments());
        // Use the realized lengths so every pair matches exactly.
        for p in 0..w.x.segments() {
            let t = w.tgt[p];
            w.y[t].0 = w.mass(p);
        }
        Ok(w)
    }

    fn mass(&self, p: usize) -> f64 {
        let bp = self.x.breakpoints();
        bp[p + 1] - bp[p]
    }

    fn gap(&self, p: usize) -> f64 {
        self.x.values()[p] - self.y[self.tgt[p]].1
    }

    fn mismatch2(&self) -> f64 {
        (0..self.x.segments())
            .map(|p| self.mass(p) * self.gap(p).powi(2))
            .sum()
    }

    /// Collision that moves (part of) piece `i` exactly onto its target value,
    /// chosen for the largest drop in squared mismatch.
    fn best_fix(&self) -> Option<FixStep> {
        let n = self.x.segments();
        let xs = self.x.values();
        let mut best: Option<(f64, usize, FixStep)> = None;
        for i in 0..n {
            let (xi, yi) = (xs[i], self.y[self.tgt[i]].1);
            if (xi - yi).abs() <= MATCH_TOL * (1.0 + yi.abs()) {
                continue;
            }
            let mi = self.mass(i);
            for (j, &xj) in xs.iter().enumerate() {
                if j == i {
                    continue;
                }
                let denom = 2.0 * xj - xi - yi;
                let ratio = (yi - xi) / denom;
                if !(ratio.is_finite() && ratio > 0.0) {
                    continue;
                }
                let mj = self.mass(j);
                let (alpha, mu) = if ratio * mi <= mj {
                    (mi, ratio * mi)
                } else {
                    (mj / ratio, mj)
                };
                if alpha < MIN_PIECE || mu < MIN_PIECE {
                    continue;
                }
                let step = FixStep { i, j, alpha, mu };
                let gain = self.gain(step);
                let dist = i.abs_diff(j);
                let better = match &best {
                    None => gain > 1e-300,
                    Some((g, d, _)) => gain > *g * (1.0 + 1e-9) || (gain >= *g && dist < *d),
                };
                if better {
                    best = Some((gain, dist, step));
                }
            }
        }
        let floor = GAIN_FLOOR * self.mismatch2();
        best.filter(|(g, _, _)| *g > floor).map(|(_, _, s)| s)
    }

    fn gain(&self, s: FixStep) -> f64 {
        let xs = self.x.values();
        let (xi, xj) = (xs[s.i], xs[s.j]);
        let (ei, ej) = (self.gap(s.i), self.gap(s.j));
        let yj = self.y[self.tgt[s.j]].1;
        let (vi, vj) = collide(s.alpha, xi, s.mu, xj);
        let before = s.alpha * ei * ei + s.mu * ej * ej;
        let after = s.alpha * (vi - self.y[self.tgt[s.i]].1).powi(2) + s.mu * (vj - yj).powi(2);
        before - after
    }

    /// Best mismatch-reducing collision over a grid of partial masses.
    fn best_mix(&self) -> Option<FixStep> {
        let n = self.x.segments();
        let mut best: Option<(f64, FixStep)> = None;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                for &fi in &MIX_FRACTIONS {
                    for &fj in &MIX_FRACTIONS {
                        let step = FixStep {
                            i,
                            j,
                            alpha: fi * self.mass(i),
                            mu: fj * self.mass(j),
                        };
                        let gain = self.gain(step);
                        if best.as_ref().is_none_or(|(g, _)| gain > *g * (1.0 + 1e-9)) {
                            best = Some((gain, step));
                        }
                    }
                }
            }
        }
        let floor = GAIN_FLOOR * self.mismatch2();
        best.filter(|(g, _)| *g > floor).map(|(_, s)| s)
    }

    /// Seeded random collision between two pieces, used when no fixing
    /// collision lowers the mismatch.
    fn kick(&self, rng: &mut ChaCha8Rng) -> Option<FixStep> {
        let n = self.x.segments();
        if n < 2 {
            return None;
        }
        let i = rng.gen_range(0..n);
        let mut j = rng.gen_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let r = KICK_RATIOS[rng.gen_range(0..KICK_RATIOS.len())];
        Some(FixStep {
            i,
            j,
            alpha: r * self.mass(i),
            mu: self.mass(j),
        })
    }

    fn push(&mut self, mv: Move) -> Result<(), ProfileError> {
        self.x = self.x.apply(&mv)?;
        match mv {
            Move::Transpose { k } => self.tgt.swap(k - 1, k),
            Move::Refine { k, lambda } => {
                // Split the assigned target piece the same way.
                let t = self.tgt[k - 1];
                let (len, val) = self.y[t];
                self.y[t] = (lambda * len, val);
                self.y.insert(t + 1, ((1.0 - lambda) * len, val));
                for other in self.tgt.iter_mut() {
                    if *other > t {
                        *other += 1;
                    }
                }
                self.tgt.insert(k, t + 1);
            }
            Move::Collide { .. } => {}
        }
        self.moves.push(mv);
        Ok(())
    }

    /// Carry the piece at `from` to position `to` (0-based).
    fn carry(&mut self, from: usize, to: usize) -> Result<(), ProfileError> {
        if from < to {
            for k in from + 1..=to {
                self.push(Move::Transpose { k })?;
            }
        } else {
            for k in (to + 1..=from).rev() {
                self.push(Move::Transpose { k })?;
            }
        }
        Ok(())
    }

    fn collide_pieces(&mut self, s: FixStep) -> Result<(), ProfileError> {
        let FixStep {
            mut i,
            j,
            alpha,
            mu,
        } = s;
        // Bring j next to i, on the side it came from.
        let j = if j > i {
            self.carry(j, i + 1)?;
            i + 1
        } else {
            self.carry(j, i - 1)?;
            i - 1
        };
        if j > i {
            // i keeps its left part; the right part of mass alpha collides.
            let mi = self.mass(i);
            let split_i = mi - alpha > MIN_PIECE;
            if split_i {
                self.push(Move::Refine {
                    k: i + 1,
                    lambda: 1.0 - alpha / mi,
                })?;
                i += 1;
            }
            let jpos = i + 1;
            let mj = self.mass(jpos);
            if mj - mu > MIN_PIECE {
                self.push(Move::Refine {
                    k: jpos + 1,
                    lambda: mu / mj,
                })?;
            }
            self.push(Move::Collide { k: i + 1 })?;
        } else {
            // j sits left of i: j's right part meets i's left part.
            let mj = self.mass(j);
            let mut jpos = j;
            if mj - mu > MIN_PIECE {
                self.push(Move::Refine {
                    k: j + 1,
                    lambda: 1.0 - mu / mj,
                })?;
                jpos += 1;
                i += 1;
            }
            let mi = self.mass(i);
            if mi - alpha > MIN_PIECE {
                self.push(Move::Refine {
                    k: i + 1,
                    lambda: alpha / mi,
                })?;
            }
            self.push(Move::Collide { k: jpos + 1 })?;
        }
        Ok(())
    }

    /// Bubble-sort pieces into target order.
    fn sort_to_target(&mut self) -> Result<(), ProfileError> {
        let n = self.tgt.len();
        for pass in 0..n {
            let mut swapped = false;
            for k in 1..n - pass {
                if self.tgt[k - 1] > self.tgt[k] {
                    self.push(Move::Transpose { k })?;
                    swapped = true;
                }
            }
            if !swapped {
                break;
            }
        }
        Ok(())
    }
}

fn finish(
    source: &StepProfile,
    target: &StepProfile,
    moves: Vec<Move>,
    cfg: &PlannerConfig,
) -> Result<Plan, PlanError> {
    let mut plan = Plan::empty(0.0, false);
    plan.moves = moves;
    let snaps = plan.replay(source)?;
    plan.achieved_error = snaps.last().unwrap().l2_distance(target);
    plan.converged = plan.achieved_error <= cfg.eps;
    if cfg.record_snapshots {
        plan.intermediate_profiles = Some(snaps);
    }
    Ok(plan)
}
/// Apply `n_moves` seeded random moves to `source`.
pub fn random_reachable_target(
    source: &StepProfile,
    n_moves: usize,
    seed: u64,
) -> (StepProfile, Plan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = source.clone();
    let mut moves = Vec::with_capacity(n_moves);
    for _ in 0..n_moves {
        let k = p.segments();
        let kind = if k < 2 { 0 } else { rng.gen_range(0..3) };
        let mv = match kind {
            0 => Move::Refine {
                k: rng.gen_range(1..=k),
                lambda: rng.gen_range(0.1..0.9),
            },
            1 => Move::Transpose {
                k: rng.gen_range(1..k),
            },
            _ => Move::Collide {
                k: rng.gen_range(1..k),
            },
        };
        p = p.apply(&mv).expect("generated move is valid");
        moves.push(mv);
    }
    let plan = Plan {
        moves,
        intermediate_profiles: None,
        achieved_error: 0.0,
        converged: true,
    };
    (p, plan)
}

/// Seeded random profile with `k` segments and values in `[-1, 1]`.
pub fn random_profile(k: usize, rng: &mut impl Rng) -> StepProfile {
    let mut cuts: Vec<f64> = (0..k.saturating_sub(1))
        .map(|_| rng.gen_range(0.02..0.98))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
    let mut breakpoints = vec![0.0];
    breakpoints.extend(cuts);
    breakpoints.push(1.0);
    let values = (0..breakpoints.len() - 1)
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    StepProfile::new(breakpoints, values).expect("sorted cuts")
}
