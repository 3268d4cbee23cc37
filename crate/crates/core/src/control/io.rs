//! `CSFORCE1` schedule files: a text header line `CSFORCE1 T n_samples N1 N2
//! L`, then one little-endian f64 record per sample: the start of the
//! sample's concatenated piece, its time within the piece, the stored curl
//! coefficients as (re, im) pairs, and the uniform x₁-component.

use std::io::{BufRead, Write};

use num_complex::Complex64;

use super::{compact_len, ControlError, ForcingSchedule, Piece};
use crate::spectral::Grid;

pub fn write_schedule(schedule: &ForcingSchedule, mut out: impl Write) -> Result<(), ControlError> {
    let g = schedule.grid;
    writeln!(
        out,
        "CSFORCE1 {:?} {} {} {} {:?}",
        schedule.horizon(),
        schedule.n_samples(),
        g.n1,
        g.n2,
        g.l
    )?;
    let mut buf = Vec::new();
    for p in &schedule.pieces {
        for i in 0..p.times.len() {
            buf.clear();
            buf.extend_from_slice(&p.start.to_le_bytes());
            buf.extend_from_slice(&p.times[i].to_le_bytes());
            for z in &p.curls[i] {
                buf.extend_from_slice(&z.re.to_le_bytes());
                buf.extend_from_slice(&z.im.to_le_bytes());
            }
            buf.extend_from_slice(&p.means[i].to_le_bytes());
            out.write_all(&buf)?;
        }
    }
    Ok(())
}

pub fn read_schedule(mut input: impl BufRead) -> Result<ForcingSchedule, ControlError> {
    let bad = |m: &str| ControlError::Format(m.to_string());
    let mut header = String::new();
    input.read_line(&mut header)?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 6 || parts[0] != "CSFORCE1" {
        return Err(bad("expected `CSFORCE1 T n_samples N1 N2 L` header"));
    }
    let horizon: f64 = parts[1].parse().map_err(|_| bad("T"))?;
    let n: usize = parts[2].parse().map_err(|_| bad("n_samples"))?;
    let n1: usize = parts[3].parse().map_err(|_| bad("N1"))?;
    let n2: usize = parts[4].parse().map_err(|_| bad("N2"))?;
    let l: f64 = parts[5].parse().map_err(|_| bad("L"))?;
    let grid = Grid::new(n1, n2, l).map_err(|e| ControlError::Format(e.to_string()))?;
    if n < 2 {
        return Err(ControlError::TooFewSamples);
    }
    let len = compact_len(&grid);
    let mut record = vec![0u8; 8 * (3 + 2 * len)];
    let mut pieces: Vec<Piece> = Vec::new();
    for _ in 0..n {
        input
            .read_exact(&mut record)
            .map_err(|_| bad("truncated payload"))?;
        let x: Vec<f64> = record
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let (start, t) = (x[0], x[1]);
        if !start.is_finite() || !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite value"));
        }
        let curl = x[2..2 + 2 * len]
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        let fresh = pieces
            .last()
            .is_none_or(|p| p.start.to_bits() != start.to_bits());
        if fresh {
            if t != 0.0 {
                return Err(ControlError::BadTimes);
            }
            pieces.push(Piece {
                start,
                times: Vec::new(),
                curls: Vec::new(),
                means: Vec::new(),
            });
        }
        let p = pieces.last_mut().expect("piece");
        if p.times.last().is_some_and(|&prev| !(t >= prev)) {
            return Err(ControlError::BadTimes);
        }
        p.times.push(t);
        p.curls.push(curl);
        p.means.push(x[2 + 2 * len]);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes"));
    }
    if pieces[0].start != 0.0 {
        return Err(ControlError::BadTimes);
    }
    let schedule = ForcingSchedule { grid, pieces };
    if schedule.horizon().to_bits() != horizon.to_bits() {
        return Err(ControlError::HorizonMismatch {
            schedule: schedule.horizon(),
            expected: horizon,
        });
    }
    Ok(schedule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{baseline_ramp, ControlSetup};
    use crate::StepProfile;

    fn sample() -> ForcingSchedule {
        let setup = ControlSetup::default();
        let u = StepProfile::uniform(vec![1.0, -1.0]).unwrap();
        let v = StepProfile::uniform(vec![0.5, 2.0, -1.0]).unwrap();
        let a = baseline_ramp(&u, &v, 0.3, &setup).unwrap();
        let b = baseline_ramp(&v, &u, 0.2, &setup).unwrap();
        a.concat(&b).unwrap()
    }

    #[test]
    fn schedule_round_trip_is_bit_exact() {
        let s = sample();
        let mut buf = Vec::new();
        write_schedule(&s, &mut buf).unwrap();
        let back = read_schedule(buf.as_slice()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.cost().to_bits(), s.cost().to_bits());
        let header = buf.split(|&b| b == b'\n').next().unwrap();
        let header = std::str::from_utf8(header).unwrap();
        assert!(header.starts_with("CSFORCE1 "));
        assert_eq!(header.split_whitespace().count(), 6);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let s = sample();
        let mut buf = Vec::new();
        write_schedule(&s, &mut buf).unwrap();
        assert!(read_schedule(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_schedule(extra.as_slice()).is_err());
        assert!(read_schedule(&b"CSFLOW1 1 2 3 4 5\n"[..]).is_err());
    }
}
