//! `CSFLOW1` field snapshots: a text header line `CSFLOW1 N1 N2 L t`, then
//! little-endian f64 physical vorticity on the `N₁ × N₂` channel grid
//! (row-major, x₂ = j/N₂), then the N₂ values of the x₁-averaged profile.

use std::io::{BufRead, Write};

use super::{Solver, SolverError, SpectralState};

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n1: usize,
    pub n2: usize,
    pub l: f64,
    pub t: f64,
    pub vorticity: Vec<f64>,
    pub mean_profile: Vec<f64>,
}

pub fn write_snapshot(
    solver: &Solver,
    state: &SpectralState,
    mut out: impl Write,
) -> Result<(), SolverError> {
    let g = solver.grid;
    // `{:?}` prints the shortest round-tripping representation.
    writeln!(out, "CSFLOW1 {} {} {:?} {:?}", g.n1, g.n2, g.l, state.t)?;
    for v in solver
        .vorticity(state)
        .iter()
        .chain(&solver.mean_profile(state))
    {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot(mut input: impl BufRead) -> Result<Snapshot, SolverError> {
    let mut header = String::new();
    input.read_line(&mut header)?;
    let bad = |m: &str| SolverError::Format(m.to_string());
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 5 || parts[0] != "CSFLOW1" {
        return Err(bad("expected `CSFLOW1 N1 N2 L t` header"));
    }
    let n1: usize = parts[1].parse().map_err(|_| bad("N1"))?;
    let n2: usize = parts[2].parse().map_err(|_| bad("N2"))?;
    let l: f64 = parts[3].parse().map_err(|_| bad("L"))?;
    let t: f64 = parts[4].parse().map_err(|_| bad("t"))?;
    let mut read = |n: usize| -> Result<Vec<f64>, SolverError> {
        let mut buf = vec![0u8; 8 * n];
        input
            .read_exact(&mut buf)
            .map_err(|_| bad("truncated payload"))?;
        Ok(buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    };
    let vorticity = read(n1 * n2)?;
    let mean_profile = read(n2)?;
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    Ok(Snapshot {
        n1,
        n2,
        l,
        t,
        vorticity,
        mean_profile,
    })
}
