//! Braid words of the x₁-projection.
//!
//! Strands are ordered by their x₁ coordinate lifted to the universal cover
//! of the period, so a particle that wraps around keeps moving in one
//! direction instead of jumping. Strands are labelled by their rank at the
//! first slice. When the strands at ranks i and i+1 (1-based) trade places,
//! the word gains σᵢ^{±1}:
//!
//! ```text
//!   x₂                          x₂
//!   ^   b ────────── a          ^   a ────────── b
//!   |     ╲        ╱            |     ╲        ╱
//!   |   a ────────── b          |   b ────────── a
//!   +──────────────────> x₁     +──────────────────> x₁
//!        σᵢ  (+1)                    σᵢ⁻¹  (−1)
//! ```
//!
//! σᵢ (+1) means the strand coming from the left passes with the smaller x₂,
//! so the pair turns counterclockwise by half a turn in the (x₁, x₂) plane;
//! σᵢ⁻¹ is the clockwise half turn. Ties in x₁ at a slice are broken by
//! adding `TIE_OFFSET·L·(particle index)` to every lifted x₁.

use serde::{Deserialize, Serialize};

use super::{FlowError, TrajectoryEnsemble};

/// Deterministic x₁ offset per particle index, in units of L.
pub const TIE_OFFSET: f64 = 1e-9;

/// Relative x₂ gap below which a crossing counts as a collision.
const COLLISION_GAP: f64 = 1e-12;

/// Artin generator σᵢ^{±1}; serialized as ±i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i64", try_from = "i64")]
pub struct Generator {
    /// 1-based position of the left strand.
    pub index: usize,
    pub positive: bool,
}

impl Generator {
    pub fn new(index: usize, positive: bool) -> Self {
        Self { index, positive }
    }

    pub fn inverse(self) -> Self {
        Self {
            positive: !self.positive,
            ..self
        }
    }

    pub fn sign(self) -> i64 {
        if self.positive {
            1
        } else {
            -1
        }
    }
}

impl From<Generator> for i64 {
    fn from(g: Generator) -> i64 {
        g.sign() * g.index as i64
    }
}

impl TryFrom<i64> for Generator {
    type Error = String;

    fn try_from(v: i64) -> Result<Self, String> {
        if v == 0 {
            return Err("generator index must be nonzero".into());
        }
        Ok(Self::new(v.unsigned_abs() as usize, v > 0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BraidRecord {
    pub word: Vec<Generator>,
    /// `permutation[q]` is the final rank of the strand that starts at rank q.
    pub permutation: Vec<usize>,
    /// Pairwise winding in full turns, counterclockwise positive.
    pub winding: Vec<Vec<f64>>,
}

impl BraidRecord {
    /// Record of an abstract word on `n` strands; every crossing contributes
    /// ±½ turn to its pair.
    pub fn from_word(word: &[Generator], n: usize) -> Self {
        let mut at: Vec<usize> = (0..n).collect();
        let mut winding = vec![vec![0.0; n]; n];
        for g in word {
            let (a, b) = (at[g.index - 1], at[g.index]);
            winding[a][b] += 0.5 * g.sign() as f64;
            winding[b][a] += 0.5 * g.sign() as f64;
            at.swap(g.index - 1, g.index);
        }
        Self {
            word: word.to_vec(),
            permutation: ranks(&at),
            winding,
        }
    }

    pub fn strands(&self) -> usize {
        self.permutation.len()
    }

    /// Signed generator count.
    pub fn writhe(&self) -> i64 {
        self.word.iter().map(|g| g.sign()).sum()
    }

    /// Permutation produced by applying the word to the identity order.
    pub fn induced_permutation(&self) -> Vec<usize> {
        let mut at: Vec<usize> = (0..self.strands()).collect();
        for g in &self.word {
            at.swap(g.index - 1, g.index);
        }
        ranks(&at)
    }
}

/// Inverse of an arrangement: strand → rank.
fn ranks(at: &[usize]) -> Vec<usize> {
    let mut r = vec![0; at.len()];
    for (pos, &s) in at.iter().enumerate() {
        r[s] = pos;
    }
    r
}

/// Cancel adjacent σᵢσᵢ⁻¹ pairs until none remain.
pub fn free_reduce(word: &[Generator]) -> Vec<Generator> {
    let mut out: Vec<Generator> = Vec::with_capacity(word.len());
    for &g in word {
        if out.last() == Some(&g.inverse()) {
            out.pop();
        } else {
            out.push(g);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Distinct,
    /// No implemented invariant tells the braids apart; this is not a proof
    /// of isotopy.
    Indistinguishable,
}

/// Compare endpoint permutations, writhe, and pairwise winding. Windings
/// of braids with common endpoints differ by whole turns, so they are
/// compared after rounding the difference.
pub fn isotopy_invariants_equal(a: &BraidRecord, b: &BraidRecord) -> Result<Verdict, FlowError> {
    if a.strands() != b.strands() {
        return Err(FlowError::StrandMismatch(a.strands(), b.strands()));
    }
    if a.permutation == b.permutation && free_reduce(&a.word) == free_reduce(&b.word) {
        return Ok(Verdict::Indistinguishable);
    }
    if a.permutation != b.permutation || a.writhe() != b.writhe() {
        return Ok(Verdict::Distinct);
    }
    for (ra, rb) in a.winding.iter().zip(&b.winding) {
        for (x, y) in ra.iter().zip(rb) {
            if (x - y).round() != 0.0 {
                return Ok(Verdict::Distinct);
            }
        }
    }
    Ok(Verdict::Indistinguishable)
}

/// Word, permutation and winding of an ensemble's trajectories, linear
/// between slices.
pub fn braid_word(e: &TrajectoryEnsemble) -> Result<BraidRecord, FlowError> {
    let n = e.particles();
    let slices = e.intervals() + 1;
    // Lifted, tie-broken x₁ per particle and slice.
    let mut x: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = Vec::with_capacity(slices);
        let mut cur = e.positions[i][0][0] + TIE_OFFSET * e.l * i as f64;
        row.push(cur);
        for s in 0..e.intervals() {
            cur += e.step(i, s)[0];
            row.push(cur);
        }
        x.push(row);
    }
    let y = |i: usize, s: usize| e.positions[i][s][1];
    let order_at = |s: usize| -> Vec<usize> {
        let mut o: Vec<usize> = (0..n).collect();
        o.sort_by(|&a, &b| x[a][s].total_cmp(&x[b][s]));
        o
    };
    let first = order_at(0);
    let label = ranks(&first);
    let mut at = first;
    let mut word = Vec::new();
    let mut winding = vec![vec![0.0; n]; n];
    for s in 0..e.intervals() {
        let mut events = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let f0 = x[a][s] - x[b][s];
                let f1 = x[a][s + 1] - x[b][s + 1];
                if f0 == 0.0 || f1 == 0.0 {
                    return Err(FlowError::DegenerateCrossing { interval: s, a, b });
                }
                if (f0 < 0.0) != (f1 < 0.0) {
                    events.push((f0 / (f0 - f1), a, b));
                }
                // Relative vector b − a sweeps a straight segment.
                let r0 = (-f0, y(b, s) - y(a, s));
                let r1 = (-f1, y(b, s + 1) - y(a, s + 1));
                let turn = (r0.0 * r1.1 - r0.1 * r1.0).atan2(r0.0 * r1.0 + r0.1 * r1.1);
                let w = turn / std::f64::consts::TAU;
                winding[label[a]][label[b]] += w;
                winding[label[b]][label[a]] += w;
            }
        }
        events.sort_by(|p, q| p.0.total_cmp(&q.0));
        for (tau, a, b) in events {
            let pa = at.iter().position(|&q| q == a).expect("strand");
            let pb = at.iter().position(|&q| q == b).expect("strand");
            if pa.abs_diff(pb) != 1 {
                return Err(FlowError::DegenerateCrossing { interval: s, a, b });
            }
            let (left, right, pos) = if pa < pb { (a, b, pa) } else { (b, a, pb) };
            let lerp = |i: usize| y(i, s) + tau * (y(i, s + 1) - y(i, s));
            let gap = lerp(right) - lerp(left);
            if gap.abs() <= COLLISION_GAP {
                return Err(FlowError::DegenerateCrossing { interval: s, a, b });
            }
            word.push(Generator::new(pos + 1, gap > 0.0));
            at.swap(pos, pos + 1);
        }
    }
    // Final ranks from an independent sort of the last slice.
    let last = order_at(slices - 1);
    let final_rank = ranks(&last);
    let mut permutation = vec![0; n];
    for i in 0..n {
        permutation[label[i]] = final_rank[i];
    }
    Ok(BraidRecord {
        word,
        permutation,
        winding,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{CellGrid, TrajectoryEnsemble};
    use super::*;
    use crate::StepProfile;

    fn g(i: i64) -> Generator {
        Generator::try_from(i).unwrap()
    }

    /// Strand a runs from left to right of a resting strand b, passing at
    /// height `h` while b sits at 0.5; endpoints are level with b.
    fn single_crossing(h: f64) -> TrajectoryEnsemble {
        TrajectoryEnsemble::new(
            2.0,
            vec![
                vec![[0.2, 0.5], [0.5, h], [0.8, 0.5]],
                vec![[0.5 + 1e-3, 0.5], [0.5 + 1e-3, 0.5], [0.5 + 1e-3, 0.5]],
            ],
        )
        .unwrap()
    }

    #[test]
    fn parallel_slab_has_empty_word() {
        let grid = CellGrid::new(4, 3, 2.0).unwrap();
        let e = TrajectoryEnsemble::parallel_flow(&grid, &StepProfile::constant(0.7), 10.0, 50);
        let r = braid_word(&e).unwrap();
        assert!(r.word.is_empty());
        assert!(r.winding.iter().flatten().all(|w| w.abs() < 1e-12));
        assert_eq!(r.permutation, (0..12).collect::<Vec<_>>());
    }

    #[test]
    fn single_crossing_gives_one_generator_and_half_turn() {
        let below = braid_word(&single_crossing(0.3)).unwrap();
        assert_eq!(below.word, vec![g(1)]);
        assert!((below.winding[0][1] - 0.5).abs() < 1e-12);
        assert_eq!(below.permutation, vec![1, 0]);
        let above = braid_word(&single_crossing(0.7)).unwrap();
        assert_eq!(above.word, vec![g(-1)]);
        assert!((above.winding[0][1] + 0.5).abs() < 1e-12);
        assert_eq!(
            isotopy_invariants_equal(&below, &above).unwrap(),
            Verdict::Distinct
        );
    }

    #[test]
    fn collision_at_crossing_is_rejected() {
        let err = braid_word(&single_crossing(0.5)).unwrap_err();
        assert!(matches!(err, FlowError::DegenerateCrossing { .. }));
    }

    #[test]
    fn wrapping_strand_keeps_its_direction() {
        // Strand 0 moves right through the period boundary, strand 1 rests.
        let e = TrajectoryEnsemble::new(
            1.0,
            vec![
                vec![[0.7, 0.2], [0.95, 0.2], [0.2, 0.2], [0.45, 0.2]],
                vec![[0.5, 0.8], [0.5, 0.8], [0.5, 0.8], [0.5, 0.8]],
            ],
        )
        .unwrap();
        let r = braid_word(&e).unwrap();
        // In the lifted picture strand 0 stays right of strand 1.
        assert!(r.word.is_empty());
    }

    #[test]
    fn free_reduction_cancels_inverse_pairs() {
        let w = vec![g(1), g(2), g(-2), g(-1), g(3)];
        assert_eq!(free_reduce(&w), vec![g(3)]);
        let a = BraidRecord::from_word(&[g(1), g(-1)], 2);
        let b = BraidRecord::from_word(&[], 2);
        assert_eq!(
            isotopy_invariants_equal(&a, &b).unwrap(),
            Verdict::Indistinguishable
        );
        let c = BraidRecord::from_word(&[g(1)], 3);
        assert!(isotopy_invariants_equal(&a, &c).is_err());
    }

    #[test]
    fn word_json_uses_signed_indices() {
        let r = BraidRecord::from_word(&[g(1), g(-2)], 3);
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.starts_with(r#"{"word":[1,-2],"permutation":"#), "{s}");
        let back: BraidRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
        assert!(serde_json::from_str::<Generator>("0").is_err());
    }

    #[test]
    fn word_of_random_ensemble_induces_its_permutation() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.gen_range(2..6);
            let e = TrajectoryEnsemble::new(
                1.0,
                (0..n)
                    .map(|_| {
                        (0..5)
                            .map(|_| [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
                            .collect()
                    })
                    .collect(),
            )
            .unwrap();
            let r = braid_word(&e).unwrap();
            assert_eq!(r.induced_permutation(), r.permutation);
            for a in 0..n {
                for b in 0..n {
                    assert_eq!(r.winding[a][b], r.winding[b][a]);
                }
            }
        }
    }
}
