//! Conserved quantities and the diagnostics CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Solver, SolverError, SpectralState};

pub const DIAGNOSTICS_HEADER: &str = "t,energy,momentum,enstrophy,m3,m4,linf_u,force_cost_accum";

/// Integrals over the channel `[0,L) × [0,1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub t: f64,
    /// ½∫|u|², from the coefficients.
    pub energy: f64,
    /// ∫u₁.
    pub momentum: f64,
    /// ½∫ω², from the coefficients.
    pub enstrophy: f64,
    /// ∫ωⁿ for n = 1..4 on the physical grid.
    pub moments: [f64; 4],
    pub linf_velocity: f64,
}

impl Solver {
    pub fn diagnostics(&self, state: &SpectralState) -> Diagnostics {
        let g = &self.grid;
        let speed = state.velocity_norm();
        let enstrophy = 0.5 * g.l * state.omega_hat.iter().map(|c| c.norm_sqr()).sum::<f64>();
        let w = self.vorticity(state);
        let area = g.dx1() * g.dx2();
        let mut moments = [0.0; 4];
        for x in &w {
            let mut p = 1.0;
            for m in &mut moments {
                p *= x;
                *m += p * area;
            }
        }
        Diagnostics {
            t: state.t,
            energy: 0.5 * speed * speed,
            momentum: g.l * state.mean.constant,
            enstrophy,
            moments,
            linf_velocity: self.max_speed(state),
        }
    }
}

/// Streams diagnostics rows in the CSV layout of [`DIAGNOSTICS_HEADER`].
pub struct DiagnosticsWriter<W: Write> {
    out: W,
}

impl<W: Write> DiagnosticsWriter<W> {
    pub fn new(mut out: W) -> Result<Self, SolverError> {
        writeln!(out, "{DIAGNOSTICS_HEADER}")?;
        Ok(Self { out })
    }

    pub fn row(&mut self, d: &Diagnostics, force_cost_accum: f64) -> Result<(), SolverError> {
        writeln!(
            self.out,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            d.t,
            d.energy,
            d.momentum,
            d.enstrophy,
            d.moments[2],
            d.moments[3],
            d.linf_velocity,
            force_cost_accum
        )?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::super::Grid;
    use super::*;
    use crate::StepProfile;

    #[test]
    fn zero_state_has_zero_diagnostics() {
        let g = Grid::new(8, 8, 1.0).unwrap();
        let d = Solver::new(g).diagnostics(&SpectralState::zero(g));
        assert_eq!(d.energy, 0.0);
        assert_eq!(d.momentum, 0.0);
        assert_eq!(d.enstrophy, 0.0);
        assert_eq!(d.moments, [0.0; 4]);
        assert_eq!(d.linf_velocity, 0.0);
    }

    #[test]
    fn parallel_flow_matches_profile_functionals() {
        // Wide mollifier on a smooth-enough profile: the mollified energy is
        // computed independently by quadrature of the mollified profile.
        let l = 2.0;
        let g = Grid::new(8, 128, l).unwrap();
        let s = Solver::new(g);
        let p = StepProfile::new(vec![0.0, 0.5, 1.0], vec![1.0, -1.0]).unwrap();
        let w = 0.2;
        let st = s.from_profile(&p, w).unwrap();
        let d = s.diagnostics(&st);
        assert!((d.momentum - l * p.momentum()).abs() < 1e-12);
        let n = 200_000;
        let e: f64 = (0..n)
            .map(|i| super::super::mollified_profile(&p, w, (i as f64 + 0.5) / n as f64).powi(2))
            .sum::<f64>()
            / n as f64;
        assert!(
            (d.energy - 0.5 * l * e).abs() < 1e-8,
            "{} vs {}",
            d.energy,
            0.5 * l * e
        );
        // The mollified energy approaches the step energy as w shrinks.
        assert!(d.energy < l * p.energy());
    }

    #[test]
    fn csv_has_header_and_one_row() {
        let g = Grid::new(8, 8, 1.0).unwrap();
        let d = Solver::new(g).diagnostics(&SpectralState::zero(g));
        let mut w = DiagnosticsWriter::new(Vec::new()).unwrap();
        w.row(&d, 0.5).unwrap();
        let text = String::from_utf8(w.into_inner()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], DIAGNOSTICS_HEADER);
        assert_eq!(lines[1].split(',').count(), 8);
    }
}
