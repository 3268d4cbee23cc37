//! Derivative-free refinement of an exchange path.
//!
//! The parameters are the cell envelope's weights on a coarse partition of
//! unity in time. Each candidate is re-synthesized and scored by
//! cost + penalty·(endpoint error)². Coordinate descent tries dropping a
//! weight to zero and moving it by ± the current step; when a whole sweep
//! finds nothing, a forward-difference gradient step is tried before the
//! step is halved. A candidate replaces the incumbent only when strictly
//! better, so the objective never increases.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::path::{check_band, ExchangePath};
use super::{ControlError, ControlSetup, ForcingSchedule};
use crate::profile::StepProfile;
use crate::spectral::{Solver, SpectralState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOptions {
    /// Cell amplitude of the initial path, as for the exchange controls.
    pub amplitude: f64,
    /// Number of envelope weights.
    pub basis_size: usize,
    pub penalty: f64,
    pub seed: u64,
    pub max_sweeps: usize,
    /// Initial coordinate step.
    pub step: f64,
    /// Stop once the step falls below this.
    pub min_step: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self {
            amplitude: 1.0,
            basis_size: 4,
            penalty: 1e3,
            seed: 0,
            max_sweeps: 4,
            step: 0.5,
            min_step: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub schedule: ForcingSchedule,
    pub weights: Vec<f64>,
    pub cost: f64,
    pub endpoint_error: f64,
    /// Objective of the initial path, then after every accepted move.
    pub history: Vec<f64>,
    pub evaluations: usize,
}

impl OptimizeReport {
    pub fn objective(&self) -> f64 {
        *self.history.last().expect("initial objective")
    }
}

struct Candidate {
    weights: Vec<f64>,
    objective: f64,
    cost: f64,
    error: f64,
    schedule: ForcingSchedule,
}

/// Smallest interval holding every x₂ where `u` and `v` differ; the whole
/// channel when they agree.
fn differing_band(u: &StepProfile, v: &StepProfile) -> (f64, f64) {
    let mut cuts: Vec<f64> = u
        .breakpoints()
        .iter()
        .chain(v.breakpoints())
        .copied()
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for w in cuts.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if u.value_at(mid) != v.value_at(mid) {
            lo = lo.min(w[0]);
            hi = hi.max(w[1]);
        }
    }
    if lo < hi {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

struct Problem<'a> {
    solver: Solver,
    u: &'a StepProfile,
    v: &'a StepProfile,
    target: SpectralState,
    band: (f64, f64),
    horizon: f64,
    opts: OptimizeOptions,
    setup: &'a ControlSetup,
}

impl Problem<'_> {
    fn evaluate(&self, weights: Vec<f64>) -> Result<Candidate, ControlError> {
        let path = ExchangePath::new(
            &self.solver,
            self.u,
            self.v,
            self.band,
            self.horizon,
            self.opts.amplitude,
            self.setup,
            weights.clone(),
        )?;
        let (schedule, end) = path.synthesize(&self.solver, self.setup)?;
        let error = end.velocity_distance(&self.target)?;
        let cost = schedule.cost();
        Ok(Candidate {
            objective: cost + self.opts.penalty * error * error,
            weights,
            cost,
            error,
            schedule,
        })
    }

    /// Score `weights`; a solver failure marks the candidate infeasible.
    fn try_evaluate(&self, weights: Vec<f64>) -> Result<Option<Candidate>, ControlError> {
        match self.evaluate(weights) {
            Ok(c) => Ok(Some(c)),
            Err(ControlError::Solver(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    /// Evaluate all candidates concurrently and return the first strictly
    /// better than `incumbent` in (objective, index) order.
    fn best_of(
        &self,
        trials: Vec<Vec<f64>>,
        incumbent: f64,
        evaluations: &mut usize,
    ) -> Result<Option<Candidate>, ControlError> {
        *evaluations += trials.len();
        let scored: Vec<Option<Candidate>> = trials
            .into_par_iter()
            .map(|w| self.try_evaluate(w))
            .collect::<Result<_, _>>()?;
        let mut best: Option<Candidate> = None;
        for c in scored.into_iter().flatten() {
            let bar = best.as_ref().map_or(incumbent, |b| b.objective);
            if c.objective < bar {
                best = Some(c);
            }
        }
        Ok(best)
    }
}

/// Refine the exchange path from `u` to `v` over `[0, T]`; never returns a
/// schedule whose penalized objective exceeds the initial path's.
pub fn optimize_schedule(
    u: &StepProfile,
    v: &StepProfile,
    horizon: f64,
    opts: &OptimizeOptions,
    setup: &ControlSetup,
) -> Result<OptimizeReport, ControlError> {
    let band = differing_band(u, v);
    check_band(band, 1, &setup.grid)?;
    let solver = Solver::new(setup.grid);
    let target = solver.from_profile(v, setup.width)?;
    let problem = Problem {
        solver,
        u,
        v,
        target,
        band,
        horizon,
        opts: *opts,
        setup,
    };
    let b = opts.basis_size.max(1);
    let mut evaluations = 1;
    let mut current = problem.evaluate(vec![1.0; b])?;
    let mut history = vec![current.objective];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut step = opts.step;
    for _ in 0..opts.max_sweeps {
        if step < opts.min_step {
            break;
        }
        let mut order: Vec<usize> = (0..b).collect();
        order.shuffle(&mut rng);
        let mut moved = false;
        for i in order {
            let wi = current.weights[i];
            let mut trials = Vec::new();
            for x in [0.0, wi - step, wi + step] {
                if x >= 0.0 && x != wi && !trials.iter().any(|t: &Vec<f64>| t[i] == x) {
                    let mut w = current.weights.clone();
                    w[i] = x;
                    trials.push(w);
                }
            }
            if let Some(c) = problem.best_of(trials, current.objective, &mut evaluations)? {
                current = c;
                history.push(current.objective);
                moved = true;
            }
        }
        if !moved {
            if let Some(c) = gradient_step(&problem, &current, step, &mut evaluations)? {
                current = c;
                history.push(current.objective);
            } else {
                step *= 0.5;
            }
        }
    }
    Ok(OptimizeReport {
        schedule: current.schedule,
        weights: current.weights,
        cost: current.cost,
        endpoint_error: current.error,
        history,
        evaluations,
    })
}

/// Forward-difference gradient, then a short backtracking line search.
fn gradient_step(
    problem: &Problem,
    current: &Candidate,
    step: f64,
    evaluations: &mut usize,
) -> Result<Option<Candidate>, ControlError> {
    let h = 0.1 * step;
    let probes: Vec<Vec<f64>> = (0..current.weights.len())
        .map(|i| {
            let mut w = current.weights.clone();
            w[i] += h;
            w
        })
        .collect();
    *evaluations += probes.len();
    let scored: Vec<Option<Candidate>> = probes
        .into_par_iter()
        .map(|w| problem.try_evaluate(w))
        .collect::<Result<_, _>>()?;
    let mut grad = Vec::with_capacity(scored.len());
    for c in &scored {
        match c {
            Some(c) => grad.push((c.objective - current.objective) / h),
            None => return Ok(None),
        }
    }
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        return Ok(None);
    }
    let trials: Vec<Vec<f64>> = [1.0, 0.5, 0.25]
        .iter()
        .map(|a| {
            current
                .weights
                .iter()
                .zip(&grad)
                .map(|(w, g)| (w - a * step * g / norm).max(0.0))
                .collect()
        })
        .collect();
    problem.best_of(trials, current.objective, evaluations)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> OptimizeOptions {
        OptimizeOptions {
            basis_size: 2,
            max_sweeps: 2,
            ..OptimizeOptions::default()
        }
    }

    #[test]
    fn equal_profiles_optimize_to_nothing() {
        let setup = ControlSetup::default();
        let u = StepProfile::uniform(vec![0.5, -0.5]).unwrap();
        let o = OptimizeOptions {
            penalty: 1e9,
            ..opts()
        };
        let r = optimize_schedule(&u, &u, 2.0, &o, &setup).unwrap();
        assert!(r.cost < 1e-10, "{}", r.cost);
        assert!(r.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn objective_never_increases_and_is_seeded() {
        let setup = ControlSetup::default();
        let u = StepProfile::uniform(vec![1.0, -1.0]).unwrap();
        let v = StepProfile::uniform(vec![-1.0, 1.0]).unwrap();
        let a = optimize_schedule(&u, &v, 3.0, &opts(), &setup).unwrap();
        assert!(a.history.windows(2).all(|w| w[1] < w[0]));
        assert!(a.objective() <= a.history[0]);
        let b = optimize_schedule(&u, &v, 3.0, &opts(), &setup).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn band_covers_the_differences() {
        let u = StepProfile::uniform(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let v = StepProfile::uniform(vec![1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_eq!(differing_band(&u, &v), (0.25, 0.75));
        assert_eq!(differing_band(&u, &u), (0.0, 1.0));
    }
}
