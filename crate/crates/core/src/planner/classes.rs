//! Exact plans through value classes.
//!
//! A class gathers every segment carrying one value. The last collision of
//! any move sequence leaves its two products as whole classes, so undoing
//! collisions of whole target classes walks back to the source classes. The
//! undone collisions, replayed forward with partners split in proportion,
//! reach the target values exactly; transposes and refines then arrange the
//! pieces.

use std::collections::VecDeque;

use super::MIN_PIECE;
use crate::profile::{collide, Move, ProfileError, StepProfile};

const VALUE_TOL: f64 = 1e-9;
const MASS_TOL: f64 = 1e-9;
const NODE_CAP: usize = 100_000;
const MAX_DEPTH: usize = 12;

#[derive(Debug, Clone, Copy)]
struct Class {
    value: f64,
    mass: f64,
}

fn same(a: f64, b: f64) -> bool {
    (a - b).abs() <= VALUE_TOL * (1.0 + a.abs().max(b.abs()))
}

fn add(cs: &mut Vec<Class>, value: f64, mass: f64) {
    match cs.iter_mut().find(|c| same(c.value, value)) {
        Some(c) => c.mass += mass,
        None => cs.push(Class { value, mass }),
    }
}

fn classes(p: &StepProfile) -> Vec<Class> {
    let mut out = Vec::new();
    for (&v, m) in p.values().iter().zip(p.lengths()) {
        add(&mut out, v, m);
    }
    out
}

/// Depth-first search for undone collisions, iteratively deepened.
struct Search<'a> {
    source: &'a [Class],
    nodes: usize,
    /// Forward collision inputs, last collision first.
    path: Vec<(Class, Class)>,
}

impl Search<'_> {
    fn is_source(&self, state: &[Class]) -> bool {
        state.len() == self.source.len()
            && state.iter().all(|c| {
                self.source
                    .iter()
                    .any(|s| same(s.value, c.value) && (s.mass - c.mass).abs() <= MASS_TOL)
            })
    }

    fn novel(&self, state: &[Class]) -> usize {
        state
            .iter()
            .filter(|c| !self.source.iter().any(|s| same(s.value, c.value)))
            .count()
    }

    fn dfs(&mut self, state: &[Class], depth: usize) -> bool {
        if self.is_source(state) {
            return true;
        }
        if depth == 0 || self.novel(state) > 2 * depth || self.nodes >= NODE_CAP {
            return false;
        }
        self.nodes += 1;
        let n = state.len();
        // Undos whose products are already known come first.
        let mut cands = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (state[i], state[j]);
                let (wa, wb) = collide(a.mass, a.value, b.mass, b.value);
                if same(wa, a.value) {
                    continue;
                }
                let known = |w: f64| {
                    self.source.iter().any(|s| same(s.value, w))
                        || (0..n).any(|q| q != i && q != j && same(state[q].value, w))
                };
                let score = usize::from(known(wa)) + usize::from(known(wb));
                cands.push((score, i, j, wa, wb));
            }
        }
        cands.sort_by_key(|c| std::cmp::Reverse(c.0));
        for (_, i, j, wa, wb) in cands {
            let (a, b) = (state[i], state[j]);
            let mut next: Vec<Class> = (0..n)
                .filter(|&q| q != i && q != j)
                .map(|q| state[q])
                .collect();
            add(&mut next, wa, a.mass);
            add(&mut next, wb, b.mass);
            if self.novel(&next) > 2 * (depth - 1) {
                continue;
            }
            self.path.push((
                Class {
                    value: wa,
                    mass: a.mass,
                },
                Class {
                    value: wb,
                    mass: b.mass,
                },
            ));
            if self.dfs(&next, depth - 1) {
                return true;
            }
            self.path.pop();
        }
        false
    }
}

/// Forward collisions `(a, b)` taking the source classes to the target ones.
fn collisions(source: &StepProfile, target: &StepProfile) -> Option<Vec<(Class, Class)>> {
    let src = classes(source);
    let tgt = classes(target);
    let mut search = Search {
        source: &src,
        nodes: 0,
        path: Vec::new(),
    };
    for depth in 0..=MAX_DEPTH {
        if search.dfs(&tgt, depth) {
            search.path.reverse();
            return Some(search.path);
        }
        if search.nodes >= NODE_CAP {
            break;
        }
    }
    None
}

/// Working profile with a stable identity per segment.
struct Tracker {
    x: StepProfile,
    ids: Vec<usize>,
    next_id: usize,
    moves: Vec<Move>,
}

impl Tracker {
    fn new(x: &StepProfile) -> Self {
        Self {
            x: x.clone(),
            ids: (0..x.segments()).collect(),
            next_id: x.segments(),
            moves: Vec::new(),
        }
    }

    fn push(&mut self, mv: Move) -> Result<(), ProfileError> {
        self.x = self.x.apply(&mv)?;
        match mv {
            Move::Transpose { k } => self.ids.swap(k - 1, k),
            Move::Refine { k, .. } => {
                self.ids.insert(k, self.next_id);
                self.next_id += 1;
            }
            Move::Collide { .. } => {}
        }
        self.moves.push(mv);
        Ok(())
    }

    fn pos(&self, id: usize) -> usize {
        self.ids.iter().position(|&q| q == id).expect("live id")
    }

    fn mass(&self, p: usize) -> f64 {
        let bp = self.x.breakpoints();
        bp[p + 1] - bp[p]
    }

    /// Keep `left` mass of segment `p` under its id; the rest gets a new id,
    /// returned when a cut was made.
    fn split(&mut self, p: usize, left: f64) -> Result<Option<usize>, ProfileError> {
        let m = self.mass(p);
        if left <= MIN_PIECE || m - left <= MIN_PIECE {
            return Ok(None);
        }
        self.push(Move::Refine {
            k: p + 1,
            lambda: left / m,
        })?;
        Ok(Some(self.ids[p + 1]))
    }

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

    /// Ids of segments with value `c.value` holding mass `c.mass` in total.
    fn take(&mut self, c: Class) -> Result<VecDeque<usize>, ProfileError> {
        let mut out = VecDeque::new();
        let mut need = c.mass;
        let mut p = 0;
        while p < self.x.segments() && need > MIN_PIECE {
            if same(self.x.values()[p], c.value) {
                let m = self.mass(p);
                if m > need {
                    self.split(p, need)?;
                }
                need -= self.mass(p);
                out.push_back(self.ids[p]);
            }
            p += 1;
        }
        Ok(out)
    }

    /// Collide mass `a.mass` of value `a.value` with mass `b.mass` of
    /// `b.value`, pairing pieces in the fixed ratio so every pair collides
    /// to the same two values.
    fn collide_classes(&mut self, a: Class, b: Class) -> Result<(), ProfileError> {
        let mut qa = self.take(a)?;
        let mut qb = self.take(b)?;
        let r = b.mass / a.mass;
        while let (Some(&ia), Some(&ib)) = (qa.front(), qb.front()) {
            let ma = self.mass(self.pos(ia));
            let mb = self.mass(self.pos(ib));
            let need = ma * r;
            if mb > need {
                if let Some(rest) = self.split(self.pos(ib), need)? {
                    qb[0] = rest;
                    qb.push_front(ib);
                }
            } else if let Some(rest) = self.split(self.pos(ia), mb / r)? {
                qa[0] = rest;
                qa.push_front(ia);
            }
            qa.pop_front();
            qb.pop_front();
            let (pa, pb) = (self.pos(ia), self.pos(ib));
            if pb < pa {
                self.carry(pb, pa - 1)?;
            } else {
                self.carry(pb, pa + 1)?;
            }
            let k = self.pos(ia).min(self.pos(ib)) + 1;
            self.push(Move::Collide { k })?;
        }
        Ok(())
    }

    /// Lay out pieces segment by segment in target order.
    fn arrange(&mut self, target: &StepProfile) -> Result<(), ProfileError> {
        let mut p = 0;
        for (&v, len) in target.values().iter().zip(target.lengths()) {
            let mut need = len;
            while need > MIN_PIECE && p < self.x.segments() {
                let Some(q) = (p..self.x.segments()).find(|&q| same(self.x.values()[q], v)) else {
                    break;
                };
                self.carry(q, p)?;
                if self.mass(p) > need {
                    self.split(p, need)?;
                }
                need -= self.mass(p);
                p += 1;
            }
        }
        Ok(())
    }
}

/// Exact move sequence from `source` to `target` when the target's values
/// can be traced back to the source's by whole-class collisions.
pub(super) fn class_plan(
    source: &StepProfile,
    target: &StepProfile,
) -> Result<Option<Vec<Move>>, ProfileError> {
    let Some(forward) = collisions(source, target) else {
        return Ok(None);
    };
    let mut t = Tracker::new(source);
    for (a, b) in forward {
        t.collide_classes(a, b)?;
    }
    t.arrange(target)?;
    Ok(Some(t.moves))
}
