use rand::Rng;
use shearlab::control::{read_schedule, ForcingSchedule};
use shearlab::spectral::{
    write_snapshot, Diagnostics, DiagnosticsWriter, Forcing, Grid, Solver, DIAGNOSTICS_HEADER,
};

use super::profile_or_swap;
use crate::artifacts::Outputs;
use crate::config::SimulateParams;
use crate::error::CliError;

const DEFAULT_HORIZON: f64 = 10.0;

pub fn run(p: &SimulateParams, rng: &mut impl Rng, out: &mut Outputs) -> Result<(), CliError> {
    let profile = profile_or_swap(out, p.profile.as_deref())?;
    let grid = Grid::new(p.n1, p.n2, p.l)?;
    let solver = Solver::new(grid);
    let mut state = solver.from_profile(&profile, p.mollify_width)?;
    if p.perturbation != 0.0 {
        let noise = solver.random_smooth(rng.gen(), p.perturbation, 0.0);
        for (w, n) in state.omega_hat.iter_mut().zip(&noise.omega_hat) {
            *w += n;
        }
    }
    let schedule: Option<ForcingSchedule> = match &p.schedule {
        Some(path) => {
            let s = read_schedule(&out.read(path)?[..])?;
            if s.grid() != grid {
                return Err(CliError::Config(format!(
                    "{} was built on a different grid",
                    path.display()
                )));
            }
            Some(s)
        }
        None => None,
    };
    let horizon = p
        .horizon
        .unwrap_or_else(|| schedule.as_ref().map_or(DEFAULT_HORIZON, |s| s.horizon()));
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CliError::Config(format!(
            "T must be positive, got {horizon}"
        )));
    }
    let dt = match p.dt {
        Some(dt) if dt > 0.0 => dt,
        Some(dt) => return Err(CliError::Config(format!("dt must be positive, got {dt}"))),
        None => 0.5 * solver.stable_dt(solver.max_speed(&state)),
    };
    let steps = ((horizon / dt).ceil() as usize).max(1);
    let every = p.every.max(1);

    let forcing = schedule.as_ref().map(|s| s as &dyn Forcing);
    let mut rows: Vec<(Diagnostics, f64)> = Vec::new();
    let (mut n, mut cost, mut last) = (0usize, 0.0, None::<(f64, f64)>);
    let result = solver.integrate_steps(&mut state, horizon, steps, forcing, |s| {
        if let Some(f) = forcing {
            let norm = f.force_at(s.t).norm();
            if let Some((t0, n0)) = last {
                cost += 0.5 * (s.t - t0) * (n0 + norm);
            }
            last = Some((s.t, norm));
        }
        if n % every == 0 || n == steps {
            rows.push((solver.diagnostics(s), cost));
        }
        n += 1;
    });
    if let Err(e) = result {
        // Diagnostics up to the failure go to stderr; no artifact is written.
        eprintln!("{DIAGNOSTICS_HEADER}");
        for (d, c) in &rows {
            eprintln!("{}", csv_row(d, *c));
        }
        return Err(e.into());
    }

    let mut csv = DiagnosticsWriter::new(Vec::new())?;
    for (d, c) in &rows {
        csv.row(d, *c)?;
    }
    out.add(&p.out, csv.into_inner())?;
    let mut snap = Vec::new();
    write_snapshot(&solver, &state, &mut snap)?;
    out.add(&p.snapshot, snap)
}

fn csv_row(d: &Diagnostics, cost: f64) -> String {
    let mut w = DiagnosticsWriter::new(Vec::new()).expect("in-memory writer");
    w.row(d, cost).expect("in-memory writer");
    let text = String::from_utf8(w.into_inner()).expect("ascii csv");
    text.lines().nth(1).unwrap_or_default().to_string()
}
