//! Piecewise-constant velocity profiles on the channel height `[0, 1]`.
//!
//! A [`StepProfile`] is a list of breakpoints `0 = b_0 < b_1 < ... < b_K = 1`
//! and one value per segment. Segment lengths act as masses in the
//! elastic-collision move. Segment indices in [`Move`] are 1-based, so
//! `Transpose { k: 1 }` on a two-segment profile exchanges both segments.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProfileError {
    #[error("profile needs at least one segment")]
    Empty,
    #[error("breakpoints must start at 0 and end at 1 (got {first} .. {last})")]
    Endpoints { first: f64, last: f64 },
    #[error("breakpoints not strictly increasing at index {0}")]
    NotIncreasing(usize),
    #[error("expected {expected} values for {segments} segments, got {got}")]
    ValueCount {
        expected: usize,
        segments: usize,
        got: usize,
    },
    #[error("non-finite entry at index {0}")]
    NonFinite(usize),
    #[error("segment index {k} out of range for {segments} segments")]
    IndexOutOfRange { k: usize, segments: usize },
    #[error("split ratio {0} not strictly inside (0, 1)")]
    BadRatio(f64),
    #[error("segment count must be positive")]
    ZeroSegments,
    #[error("tabulated samples must be increasing and cover [0, 1]")]
    BadSamples,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl<'de> Deserialize<'de> for StepProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = RawProfile::deserialize(d)?;
        StepProfile::new(raw.breakpoints, raw.values).map_err(serde::de::Error::custom)
    }
}

impl StepProfile {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self, ProfileError> {
        if breakpoints.len() < 2 {
            return Err(ProfileError::Empty);
        }
        let segments = breakpoints.len() - 1;
        if values.len() != segments {
            return Err(ProfileError::ValueCount {
                expected: segments,
                segments,
                got: values.len(),
            });
        }
        if let Some(i) = breakpoints.iter().position(|b| !b.is_finite()) {
            return Err(ProfileError::NonFinite(i));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ProfileError::NonFinite(i));
        }
        let (first, last) = (breakpoints[0], breakpoints[segments]);
        if first != 0.0 || last != 1.0 {
            return Err(ProfileError::Endpoints { first, last });
        }
        if let Some(i) = breakpoints.windows(2).position(|w| w[1] <= w[0]) {
            return Err(ProfileError::NotIncreasing(i + 1));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(vec![0.0, 1.0], vec![value]).expect("finite constant")
    }

    /// Equal-length segments with the given values.
    pub fn uniform(values: Vec<f64>) -> Result<Self, ProfileError> {
        let k = values.len();
        if k == 0 {
            return Err(ProfileError::Empty);
        }
        let mut breakpoints: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        breakpoints[k] = 1.0;
        Self::new(breakpoints, values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn segments(&self) -> usize {
        self.values.len()
    }

    pub fn lengths(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.windows(2).map(|w| w[1] - w[0])
    }

    /// Value at height `x2`; interior breakpoints take the upper segment.
    pub fn value_at(&self, x2: f64) -> f64 {
        let idx = self.breakpoints[1..self.segments()].partition_point(|&b| b <= x2);
        self.values[idx]
    }

    pub fn momentum(&self) -> f64 {
        self.lengths().zip(&self.values).map(|(l, v)| v * l).sum()
    }

    pub fn energy(&self) -> f64 {
        self.lengths()
            .zip(&self.values)
            .map(|(l, v)| 0.5 * v * v * l)
            .sum()
    }

    /// Exact L² distance on the common refinement of both partitions.
    pub fn l2_distance(&self, other: &StepProfile) -> f64 {
        self.l2_distance_squared(other).sqrt()
    }

    pub fn l2_distance_squared(&self, other: &StepProfile) -> f64 {
        let (a, b) = (&self.breakpoints, &other.breakpoints);
        let (mut i, mut j) = (0usize, 0usize);
        let mut left = 0.0;
        let mut acc = 0.0;
        while i < self.segments() && j < other.segments() {
            let right = a[i + 1].min(b[j + 1]);
            let d = self.values[i] - other.values[j];
            acc += d * d * (right - left);
            left = right;
            if a[i + 1] <= right {
                i += 1;
            }
            if b[j + 1] <= right {
                j += 1;
            }
        }
        acc
    }

    pub fn l2_norm(&self) -> f64 {
        self.lengths()
            .zip(&self.values)
            .map(|(l, v)| v * v * l)
            .sum::<f64>()
            .sqrt()
    }

    pub fn apply(&self, mv: &Move) -> Result<StepProfile, ProfileError> {
        let k = self.segments();
        match *mv {
            Move::Refine { k: seg, lambda } => {
                self.check_index(seg, 0)?;
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(ProfileError::BadRatio(lambda));
                }
                let (a, b) = (self.breakpoints[seg - 1], self.breakpoints[seg]);
                let cut = a + lambda * (b - a);
                if cut <= a || cut >= b {
                    return Err(ProfileError::BadRatio(lambda));
                }
                let mut breakpoints = self.breakpoints.clone();
                breakpoints.insert(seg, cut);
                let mut values = self.values.clone();
                values.insert(seg, self.values[seg - 1]);
                Ok(StepProfile {
                    breakpoints,
                    values,
                })
            }
            Move::Transpose { k: seg } => {
                self.check_index(seg, 1)?;
                let (a, c) = (self.breakpoints[seg - 1], self.breakpoints[seg + 1]);
                let upper = c - self.breakpoints[seg];
                let mut out = self.clone();
                // Clamp keeps the ordering strict when rounding pushes the cut onto an end.
                let mid = (a + upper).clamp(a.next_up(), c.next_down());
                out.breakpoints[seg] = mid;
                out.values.swap(seg - 1, seg);
                Ok(out)
            }
            Move::Collide { k: seg } => {
                self.check_index(seg, 1)?;
                let m1 = self.breakpoints[seg] - self.breakpoints[seg - 1];
                let m2 = self.breakpoints[seg + 1] - self.breakpoints[seg];
                let (u1, u2) = (self.values[seg - 1], self.values[seg]);
                let (v1, v2) = collide(m1, u1, m2, u2);
                let mut out = self.clone();
                out.values[seg - 1] = v1;
                out.values[seg] = v2;
                debug_assert_eq!(out.segments(), k);
                Ok(out)
            }
        }
    }

    pub fn apply_all<'a>(
        &self,
        moves: impl IntoIterator<Item = &'a Move>,
    ) -> Result<StepProfile, ProfileError> {
        let mut p = self.clone();
        for m in moves {
            p = p.apply(m)?;
        }
        Ok(p)
    }

    fn check_index(&self, k: usize, extra: usize) -> Result<(), ProfileError> {
        if k == 0 || k + extra > self.segments() {
            return Err(ProfileError::IndexOutOfRange {
                k,
                segments: self.segments(),
            });
        }
        Ok(())
    }

    /// Merge neighbours whose values differ by at most `tol` (length-weighted
    /// mean) and drop zero-length segments.
    pub fn normalize(&self, tol: f64) -> StepProfile {
        let mut breakpoints = vec![0.0];
        let mut values: Vec<f64> = Vec::with_capacity(self.segments());
        let mut cur_len = 0.0;
        for (i, (len, &v)) in self.lengths().zip(&self.values).enumerate() {
            if len <= 0.0 {
                continue;
            }
            let right = self.breakpoints[i + 1];
            match values.last_mut() {
                Some(last) if (v - *last).abs() <= tol => {
                    *last = (*last * cur_len + v * len) / (cur_len + len);
                    cur_len += len;
                    *breakpoints.last_mut().unwrap() = right;
                }
                _ => {
                    values.push(v);
                    cur_len = len;
                    breakpoints.push(right);
                }
            }
        }
        StepProfile {
            breakpoints,
            values,
        }
    }
}

/// Elastic collision of two point masses; returns the post-collision velocities.
pub fn collide(m1: f64, u1: f64, m2: f64, u2: f64) -> (f64, f64) {
    let u0 = (m1 * u1 + m2 * u2) / (m1 + m2);
    (2.0 * u0 - u1, 2.0 * u0 - u2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase", deny_unknown_fields)]
pub enum Move {
    Refine { k: usize, lambda: f64 },
    Transpose { k: usize },
    Collide { k: usize },
}

/// Samples of a continuous profile, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedProfile {
    x: Vec<f64>,
    u: Vec<f64>,
}

impl TabulatedProfile {
    pub fn new(x: Vec<f64>, u: Vec<f64>) -> Result<Self, ProfileError> {
        if x.len() < 2 || x.len() != u.len() {
            return Err(ProfileError::BadSamples);
        }
        if x[0] > 0.0 || *x.last().unwrap() < 1.0 || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ProfileError::BadSamples);
        }
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(ProfileError::NonFinite(i));
        }
        Ok(Self { x, u })
    }

    /// Sample `f` at `n + 1` equally spaced nodes on `[0, 1]`.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Self {
        let x: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
        let u = x.iter().map(|&t| f(t)).collect();
        Self::new(x, u).expect("uniform nodes")
    }

    fn value(&self, t: f64) -> f64 {
        let j = self
            .x
            .partition_point(|&xi| xi <= t)
            .clamp(1, self.x.len() - 1);
        let (x0, x1) = (self.x[j - 1], self.x[j]);
        let s = (t - x0) / (x1 - x0);
        self.u[j - 1] * (1.0 - s) + self.u[j] * s
    }

    /// Cut points of the interpolant inside `(a, b)`, with both ends.
    fn pieces(&self, a: f64, b: f64) -> Vec<f64> {
        let mut pts = vec![a];
        pts.extend(self.x.iter().copied().filter(|&xi| xi > a && xi < b));
        pts.push(b);
        pts
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        self.pieces(a, b)
            .windows(2)
            .map(|w| 0.5 * (self.value(w[0]) + self.value(w[1])) * (w[1] - w[0]))
            .sum()
    }

    /// Exact L² distance between the interpolant and a step profile.
    pub fn l2_distance(&self, p: &StepProfile) -> f64 {
        let mut acc = 0.0;
        for (k, w) in p.breakpoints().windows(2).enumerate() {
            let c = p.values()[k];
            for seg in self.pieces(w[0], w[1]).windows(2) {
                let h = seg[1] - seg[0];
                let (d0, d1) = (self.value(seg[0]) - c, self.value(seg[1]) - c);
                acc += h * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
            }
        }
        acc.sqrt()
    }
}

/// Uniform `k`-cell partition with cell-average values.
pub fn discretize(samples: &TabulatedProfile, k: usize) -> Result<StepProfile, ProfileError> {
    if k == 0 {
        return Err(ProfileError::ZeroSegments);
    }
    let mut breakpoints: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
    breakpoints[k] = 1.0;
    let values = breakpoints
        .windows(2)
        .map(|w| samples.integral(w[0], w[1]) / (w[1] - w[0]))
        .collect();
    StepProfile::new(breakpoints, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn halves(a: f64, b: f64) -> StepProfile {
        StepProfile::new(vec![0.0, 0.5, 1.0], vec![a, b]).unwrap()
    }

    fn thirds() -> StepProfile {
        StepProfile::new(vec![0.0, 2.0 / 3.0, 1.0], vec![0.0, 3.0]).unwrap()
    }

    #[test]
    fn functionals_match_hand_values() {
        assert_eq!(StepProfile::constant(2.5).momentum(), 2.5);
        assert_eq!(halves(1.0, -1.0).momentum(), 0.0);
        assert!((thirds().momentum() - 1.0).abs() < 1e-15);
        assert_eq!(StepProfile::constant(0.0).energy(), 0.0);
        assert!((halves(1.0, -1.0).energy() - 0.5).abs() < 1e-15);
        assert!((thirds().energy() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn l2_distance_examples() {
        let p = halves(1.0, -1.0);
        assert_eq!(p.l2_distance(&p), 0.0);
        let one = StepProfile::constant(1.0);
        let zero = StepProfile::constant(0.0);
        assert!((one.l2_distance(&zero) - 1.0).abs() < 1e-15);
        assert!((p.l2_distance(&zero) - 1.0).abs() < 1e-15);
        // Misaligned partitions: [0,1/3)=2, rest 0 vs halves 1/-1.
        let q = StepProfile::new(vec![0.0, 1.0 / 3.0, 1.0], vec![2.0, 0.0]).unwrap();
        let expect = (1.0 / 3.0 + 1.0 / 6.0 + 0.5f64).sqrt();
        assert!((p.l2_distance(&q) - expect).abs() < 1e-14);
    }

    #[test]
    fn invalid_profiles_rejected() {
        assert_eq!(
            StepProfile::new(vec![0.0, 1.0], vec![]),
            Err(ProfileError::ValueCount {
                expected: 1,
                segments: 1,
                got: 0
            })
        );
        assert!(matches!(
            StepProfile::new(vec![0.1, 1.0], vec![1.0]),
            Err(ProfileError::Endpoints { .. })
        ));
        assert_eq!(
            StepProfile::new(vec![0.0, 0.5, 0.5, 1.0], vec![1.0, 2.0, 3.0]),
            Err(ProfileError::NotIncreasing(2))
        );
        assert_eq!(
            StepProfile::new(vec![0.0, 1.0], vec![f64::NAN]),
            Err(ProfileError::NonFinite(0))
        );
    }

    #[test]
    fn collide_examples() {
        let p = halves(1.0, 0.0).apply(&Move::Collide { k: 1 }).unwrap();
        assert_eq!(p.values(), &[0.0, 1.0]);
        let q = thirds().apply(&Move::Collide { k: 1 }).unwrap();
        assert!((q.values()[0] - 2.0).abs() < 1e-15);
        assert!((q.values()[1] + 1.0).abs() < 1e-15);
        assert!((q.momentum() - 1.0).abs() < 1e-14);
        assert!((q.energy() - 1.5).abs() < 1e-14);
    }

    #[test]
    fn transpose_moves_breakpoint() {
        let p = thirds().apply(&Move::Transpose { k: 1 }).unwrap();
        assert!((p.breakpoints()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(p.values(), &[3.0, 0.0]);
        let back = p.apply(&Move::Transpose { k: 1 }).unwrap();
        assert!(back.l2_distance(&thirds()) < 1e-12);
    }

    #[test]
    fn refine_keeps_function() {
        let p = thirds();
        let r = p.apply(&Move::Refine { k: 2, lambda: 0.25 }).unwrap();
        assert_eq!(r.segments(), 3);
        assert!((r.breakpoints()[2] - (2.0 / 3.0 + 0.25 / 3.0)).abs() < 1e-15);
        assert_eq!(r.l2_distance(&p), 0.0);
        assert_eq!(r.momentum(), p.momentum());
    }

    #[test]
    fn move_errors() {
        let p = halves(1.0, 2.0);
        assert!(matches!(
            p.apply(&Move::Collide { k: 2 }),
            Err(ProfileError::IndexOutOfRange { k: 2, .. })
        ));
        assert!(matches!(
            p.apply(&Move::Transpose { k: 0 }),
            Err(ProfileError::IndexOutOfRange { .. })
        ));
        assert_eq!(
            p.apply(&Move::Refine { k: 1, lambda: 1.0 }),
            Err(ProfileError::BadRatio(1.0))
        );
        assert_eq!(
            p.apply(&Move::Refine { k: 1, lambda: 0.0 }),
            Err(ProfileError::BadRatio(0.0))
        );
    }

    #[test]
    fn normalize_examples() {
        let merged = halves(1.0, 1.0).normalize(0.0);
        assert_eq!(merged.values(), &[1.0]);
        assert_eq!(merged.breakpoints(), &[0.0, 1.0]);

        let eps = 1e-6;
        let m = halves(1.0, 1.0 + eps / 2.0).normalize(eps);
        assert_eq!(m.segments(), 1);
        assert!((m.values()[0] - (1.0 + eps / 4.0)).abs() < 1e-15);

        let p = thirds();
        assert_eq!(p.normalize(1e-9), p);
    }

    #[test]
    fn discretize_examples() {
        let c = TabulatedProfile::from_fn(10, |_| 0.7);
        for k in [1, 3, 8] {
            let p = discretize(&c, k).unwrap();
            assert!(p.values().iter().all(|v| (v - 0.7).abs() < 1e-15));
        }
        let ramp = TabulatedProfile::new(vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let p = discretize(&ramp, 2).unwrap();
        assert!((p.values()[0] - 0.25).abs() < 1e-15);
        assert!((p.values()[1] - 0.75).abs() < 1e-15);
        assert_eq!(discretize(&ramp, 0), Err(ProfileError::ZeroSegments));
    }

    #[test]
    fn discretize_error_decreases_for_sine() {
        let s = TabulatedProfile::from_fn(2048, |x| (2.0 * std::f64::consts::PI * x).sin());
        let errs: Vec<f64> = [2, 4, 8, 16]
            .iter()
            .map(|&k| s.l2_distance(&discretize(&s, k).unwrap()))
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
        // Cell averages of sin(2πx) at K = 2 are ±2/π: error² = 1/2 − 4/π².
        let expect = (0.5 - 4.0 / std::f64::consts::PI.powi(2)).sqrt();
        assert!((errs[0] - expect).abs() < 1e-5);
    }

    #[test]
    fn json_shapes() {
        let p: StepProfile =
            serde_json::from_str(r#"{"breakpoints":[0,0.5,1],"values":[1,-1]}"#).unwrap();
        assert_eq!(p, halves(1.0, -1.0));
        assert!(
            serde_json::from_str::<StepProfile>(r#"{"breakpoints":[0,1],"values":[]}"#).is_err()
        );
        let moves: Vec<Move> = serde_json::from_str(
            r#"[{"op":"collide","k":3},{"op":"refine","k":2,"lambda":0.25},{"op":"transpose","k":1}]"#,
        )
        .unwrap();
        assert_eq!(moves[0], Move::Collide { k: 3 });
        assert_eq!(moves[1], Move::Refine { k: 2, lambda: 0.25 });
        assert_eq!(
            serde_json::to_string(&moves[1]).unwrap(),
            r#"{"op":"refine","k":2,"lambda":0.25}"#
        );
    }
}
