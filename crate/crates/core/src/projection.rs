//! Euclidean projection onto feasible action sets.
//!
//! Every supported constraint decomposes into pieces with a closed-form
//! projection (ball, box, halfspace, slab, weighted l1 ball). Intersections
//! are handled with Dykstra's alternating projections. The one non-convex
//! form, `PositivePartSum` with signed weights, is solved by enumerating the
//! sign orthants of `w_i a_i` and keeping the nearest candidate.
//!
//! [`project_onto_feasible`] is the counted "QP operation": it is the only
//! entry point used at run time and every call bumps the caller's
//! [`QpCounter`] and the process-wide tally exactly once.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::constraint::{dot, ConstraintKind, ConstraintSpec};
use crate::error::{AcrlError, Result};
use crate::mdp::{ActionBox, ActionVec, EnvState};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 10_000;
const MAX_RESIDUAL: f64 = 1e-6;

static PROJECTION_CALLS: AtomicU64 = AtomicU64::new(0);

/// Projection calls made through [`project_onto_feasible`] by this process.
pub fn projection_calls_total() -> u64 {
    PROJECTION_CALLS.load(Ordering::SeqCst)
}

/// Shared, cloneable tally of projection (QP) operations.
#[derive(Clone, Debug, Default)]
pub struct QpCounter(Arc<AtomicU64>);

impl QpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::SeqCst);
        PROJECTION_CALLS.fetch_add(1, Ordering::SeqCst);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionReport {
    pub projected: ActionVec,
    pub moved: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Radial scaling onto `{x : |x|^2 <= radius_sq}`.
pub fn project_ball(a: &[f64], radius_sq: f64) -> ActionVec {
    let norm_sq: f64 = a.iter().map(|x| x * x).sum();
    if norm_sq <= radius_sq {
        return ActionVec::new(a.to_vec());
    }
    let scale = radius_sq.sqrt() / norm_sq.sqrt();
    ActionVec::new(a.iter().map(|x| x * scale).collect())
}

/// Componentwise clamp.
pub fn project_box(a: &[f64], lo: &[f64], hi: &[f64]) -> Result<ActionVec> {
    if lo.len() != a.len() || hi.len() != a.len() {
        return Err(AcrlError::DimensionMismatch { expected: lo.len().min(hi.len()), got: a.len() });
    }
    Ok(ActionVec::new(a.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.clamp(*l, *h)).collect()))
}

/// Closed form `a - max(0, w.a - b) / |w|^2 * w`.
pub fn project_halfspace(a: &[f64], w: &[f64], b: f64) -> Vec<f64> {
    let excess = dot(w, a) - b;
    let wn = dot(w, w);
    if excess <= 0.0 || wn == 0.0 {
        return a.to_vec();
    }
    let step = excess / wn;
    a.iter().zip(w).map(|(x, wi)| x - step * wi).collect()
}

/// Projection onto `{x : sum_i |w_i x_i| <= cap}` by soft thresholding at the
/// exact Lagrange multiplier.
pub fn project_weighted_l1(a: &[f64], w: &[f64], cap: f64) -> Vec<f64> {
    let w: Vec<f64> = w.iter().map(|x| x.abs()).collect();
    let total: f64 = a.iter().zip(&w).map(|(x, w)| (w * x).abs()).sum();
    if total <= cap {
        return a.to_vec();
    }
    // Breakpoints |a_i| / w_i in decreasing order.
    let mut idx: Vec<usize> = (0..a.len()).filter(|&i| w[i] > 0.0).collect();
    idx.sort_by(|&i, &j| {
        let bi = a[i].abs() / w[i];
        let bj = a[j].abs() / w[j];
        bj.partial_cmp(&bi).unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    let mut theta = 0.0;
    for (k, &i) in idx.iter().enumerate() {
        s1 += w[i] * a[i].abs();
        s2 += w[i] * w[i];
        theta = (s1 - cap) / s2;
        let next = idx.get(k + 1).map_or(0.0, |&j| a[j].abs() / w[j]);
        if theta >= next {
            break;
        }
    }
    a.iter()
        .zip(&w)
        .map(|(x, wi)| x.signum() * (x.abs() - theta * wi).max(0.0))
        .collect()
}

/// Closed-form projectable convex set.
#[derive(Clone, Debug, PartialEq)]
enum Piece {
    Ball { radius_sq: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Halfspace { w: Vec<f64>, b: f64 },
    Slab { w: Vec<f64>, lo: f64, hi: f64 },
    WeightedL1 { w: Vec<f64>, cap: f64 },
}

impl Piece {
    fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Piece::Ball { radius_sq } => project_ball(x, *radius_sq).into_inner(),
            Piece::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).map(|(x, (l, h))| x.clamp(*l, *h)).collect()
            }
            Piece::Halfspace { w, b } => project_halfspace(x, w, *b),
            Piece::Slab { w, lo, hi } => {
                let v = dot(w, x);
                let wn = dot(w, w);
                let shift = if v > *hi {
                    (hi - v) / wn
                } else if v < *lo {
                    (lo - v) / wn
                } else {
                    return x.to_vec();
                };
                x.iter().zip(w).map(|(x, wi)| x + shift * wi).collect()
            }
            Piece::WeightedL1 { w, cap } => project_weighted_l1(x, w, *cap),
        }
    }

    /// Copy shrunk inward by a relative margin `delta`.
    fn tightened(&self, delta: f64) -> Piece {
        if delta == 0.0 {
            return self.clone();
        }
        match self {
            Piece::Ball { radius_sq } => Piece::Ball { radius_sq: radius_sq * (1.0 - delta) },
            Piece::Box { lo, hi } => {
                let (lo, hi) = lo
                    .iter()
                    .zip(hi)
                    .map(|(l, h)| {
                        if l.is_finite() && h.is_finite() {
                            let m = delta * (h - l);
                            (l + m, h - m)
                        } else {
                            let lo = if l.is_finite() { l + delta * (1.0 + l.abs()) } else { *l };
                            let hi = if h.is_finite() { h - delta * (1.0 + h.abs()) } else { *h };
                            (lo, hi)
                        }
                    })
                    .unzip();
                Piece::Box { lo, hi }
            }
            Piece::Halfspace { w, b } => {
                Piece::Halfspace { w: w.clone(), b: b - delta * (1.0 + b.abs()) * dot(w, w).sqrt() }
            }
            Piece::Slab { w, lo, hi } => {
                let m = delta * (hi - lo).max(1.0);
                Piece::Slab { w: w.clone(), lo: lo + m, hi: hi - m }
            }
            Piece::WeightedL1 { w, cap } => Piece::WeightedL1 { w: w.clone(), cap: cap * (1.0 - delta) },
        }
    }

    fn violation(&self, x: &[f64]) -> f64 {
        let v = match self {
            Piece::Ball { radius_sq } => x.iter().map(|x| x * x).sum::<f64>() - radius_sq,
            Piece::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| (l - x).max(x - h))
                .fold(f64::NEG_INFINITY, f64::max),
            Piece::Halfspace { w, b } => dot(w, x) - b,
            Piece::Slab { w, lo, hi } => {
                let v = dot(w, x);
                (lo - v).max(v - hi)
            }
            Piece::WeightedL1 { w, cap } => {
                x.iter().zip(w).map(|(x, w)| (w * x).abs()).sum::<f64>() - cap
            }
        };
        v.max(0.0)
    }
}

fn pieces_of(spec: &ConstraintSpec, s: &EnvState) -> Result<Vec<Piece>> {
    let n = spec.dim;
    Ok(match &spec.kind {
        ConstraintKind::Ball { radius_sq } => vec![Piece::Ball { radius_sq: *radius_sq }],
        ConstraintKind::Box { lo, hi } => vec![Piece::Box { lo: lo.clone(), hi: hi.clone() }],
        ConstraintKind::WeightedAbsSum { cap, .. } => {
            let w = spec.weights_at(s)?.expect("weighted kind").to_vec();
            vec![Piece::WeightedL1 { w, cap: *cap }]
        }
        ConstraintKind::SignedSumBand { total, band, per_cap } => vec![
            Piece::Slab { w: vec![1.0; n], lo: total - band, hi: total + band },
            Piece::Box { lo: vec![f64::NEG_INFINITY; n], hi: vec![*per_cap; n] },
        ],
        ConstraintKind::LinearSystem { rows, rhs } => rows
            .iter()
            .zip(rhs)
            .map(|(w, b)| Piece::Halfspace { w: w.clone(), b: *b })
            .collect(),
        ConstraintKind::PositivePartSum { .. } => {
            return Err(AcrlError::NotProjectable("PositivePartSum"))
        }
        ConstraintKind::ActionMask { .. } => return Err(AcrlError::NotProjectable("ActionMask")),
    })
}

fn dykstra(a: &[f64], pieces: &[Piece], max_iter: usize, tol: f64) -> (Vec<f64>, usize) {
    let mut x = a.to_vec();
    let mut corrections = vec![vec![0.0; a.len()]; pieces.len()];
    let mut iterations = 0;
    let mut prev_change = f64::INFINITY;
    for it in 0..max_iter.max(1) {
        iterations = it + 1;
        let start = x.clone();
        // The iterate can stall for a sweep while the corrections still
        // move, so both count towards the change.
        let mut change: f64 = 0.0;
        for (piece, p) in pieces.iter().zip(corrections.iter_mut()) {
            let shifted: Vec<f64> = x.iter().zip(p.iter()).map(|(x, p)| x + p).collect();
            let y = piece.project(&shifted);
            for ((pi, si), yi) in p.iter_mut().zip(&shifted).zip(&y) {
                let next = si - yi;
                change = change.max((next - *pi).abs());
                *pi = next;
            }
            x = y;
        }
        let change = x.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(change, f64::max);
        // Convergence is linear and can be slow; bound the remaining
        // distance by the geometric tail at the observed rate.
        let rate = if prev_change > 0.0 && prev_change.is_finite() { (change / prev_change).min(0.999_999) } else { 0.0 };
        prev_change = change;
        if change / (1.0 - rate) < tol {
            break;
        }
    }
    // Final pass so the last-visited piece does not hide violations of
    // earlier ones.
    for piece in pieces {
        if piece.violation(&x) > 0.0 {
            x = piece.project(&x);
        }
    }
    (x, iterations)
}

fn report(
    a: &[f64],
    x: Vec<f64>,
    iterations: usize,
    specs: &[ConstraintSpec],
    s: &EnvState,
) -> Result<ProjectionReport> {
    let mut residual: f64 = 0.0;
    for spec in specs {
        residual = residual.max(spec.violation(s, &x)?);
    }
    let moved = x.iter().zip(a).any(|(p, q)| p.to_bits() != q.to_bits());
    Ok(ProjectionReport { projected: ActionVec::new(x), moved, iterations, residual })
}

/// Dykstra's alternating projection onto the intersection of `sets`.
pub fn project_dykstra(
    a: &[f64],
    sets: &[ConstraintSpec],
    s: &EnvState,
    max_iter: usize,
    tol: f64,
) -> Result<ProjectionReport> {
    let mut pieces = Vec::new();
    for spec in sets {
        if spec.dim != a.len() {
            return Err(AcrlError::DimensionMismatch { expected: spec.dim, got: a.len() });
        }
        pieces.extend(pieces_of(spec, s)?);
    }
    let (x, iterations) = dykstra(a, &pieces, max_iter, tol);
    let report = report(a, x, iterations, sets, s)?;
    if report.residual > MAX_RESIDUAL {
        return Err(AcrlError::NoConvergence { report });
    }
    Ok(report)
}

/// Nearest point of `{sum_i max(w_i a_i, 0) <= cap} ∩ box` by orthant
/// enumeration.
fn project_positive_part(
    a: &[f64],
    w: &[f64],
    cap: f64,
    abox: &ActionBox,
    delta: f64,
    max_iter: usize,
    tol: f64,
) -> (Vec<f64>, usize) {
    let n = a.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    for pattern in 0u32..(1 << n) {
        let positive = |i: usize| pattern & (1 << i) != 0;
        // Sign constraints of the orthant, folded into the action box.
        let mut lo = abox.lo.clone();
        let mut hi = abox.hi.clone();
        let mut g = vec![0.0; n];
        for i in 0..n {
            let sign = if positive(i) { 1.0 } else { -1.0 };
            let sw = sign * w[i];
            if sw > 0.0 {
                lo[i] = lo[i].max(0.0);
            } else if sw < 0.0 {
                hi[i] = hi[i].min(0.0);
            }
            if positive(i) {
                g[i] = w[i];
            }
        }
        if lo.iter().zip(&hi).any(|(l, h)| l > h) {
            continue;
        }
        let pieces = [
            Piece::Halfspace { w: g, b: cap }.tightened(delta),
            Piece::Box { lo, hi }.tightened(delta),
        ];
        let (x, it) = dykstra(a, &pieces, max_iter, tol);
        iterations += it;
        let d: f64 = x.iter().zip(a).map(|(p, q)| (p - q).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    (best.map(|(_, x)| x).unwrap_or_else(|| a.to_vec()), iterations)
}

fn nearest_allowed(allowed: &[Vec<bool>], s: &EnvState, a: f64) -> Vec<f64> {
    let state = s.vector.first().copied().unwrap_or(0.0).max(0.0) as usize;
    let row = allowed.get(state).map(Vec::as_slice).unwrap_or(&[]);
    let best = row
        .iter()
        .enumerate()
        .filter(|(_, ok)| **ok)
        .min_by(|(i, _), (j, _)| {
            let di = (*i as f64 - a).abs();
            let dj = (*j as f64 - a).abs();
            di.partial_cmp(&dj).unwrap_or(std::cmp::Ordering::Equal)
        })
        .map_or(0, |(i, _)| i);
    vec![best as f64]
}

/// Nearest point of `C(s) ∩ box` to `a`. The returned action passes
/// `spec.is_feasible` and `abox.contains` exactly: if round-off leaves the
/// raw projection a hair outside, the sets are shrunk by a tiny relative
/// margin and the projection repeated.
pub fn project_onto_feasible(
    spec: &ConstraintSpec,
    s: &EnvState,
    a: &ActionVec,
    abox: &ActionBox,
    counter: &QpCounter,
) -> Result<ProjectionReport> {
    counter.bump();
    if a.len() != spec.dim || a.len() != abox.dim() {
        return Err(AcrlError::DimensionMismatch { expected: spec.dim, got: a.len() });
    }
    let box_spec = abox.as_constraint();
    let specs = [spec.clone(), box_spec];
    let mut last = None;
    for delta in [0.0, 1e-13, 1e-11, 1e-9, 1e-7] {
        let (x, iterations) = match &spec.kind {
            ConstraintKind::ActionMask { allowed } => (nearest_allowed(allowed, s, a[0]), 1),
            ConstraintKind::PositivePartSum { cap, .. } => {
                let w = spec.weights_at(s)?.expect("weighted kind").to_vec();
                project_positive_part(a, &w, *cap, abox, delta, DEFAULT_MAX_ITER, DEFAULT_TOL)
            }
            _ => {
                let mut pieces: Vec<Piece> =
                    pieces_of(spec, s)?.iter().map(|p| p.tightened(delta)).collect();
                pieces.push(Piece::Box { lo: abox.lo.clone(), hi: abox.hi.clone() }.tightened(delta));
                dykstra(a, &pieces, DEFAULT_MAX_ITER, DEFAULT_TOL)
            }
        };
        let candidate = ActionVec::new(x);
        let rep = report(a, candidate.0.clone(), iterations, &specs, s)?;
        if spec.is_feasible(s, &candidate)? && abox.contains(&candidate) {
            return Ok(rep);
        }
        last = Some(rep);
    }
    Err(AcrlError::NoConvergence { report: last.expect("at least one attempt") })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s0() -> EnvState {
        EnvState::new(vec![0.0])
    }

    #[test]
    fn tightening_keeps_infinite_bounds() {
        let p = Piece::Box { lo: vec![f64::NEG_INFINITY], hi: vec![40.0] }.tightened(1e-9);
        match p {
            Piece::Box { lo, hi } => {
                assert_eq!(lo[0], f64::NEG_INFINITY);
                assert!(hi[0] < 40.0 && hi[0] > 39.99);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn ball_examples() {
        let p = project_ball(&[3.0, 4.0], 1.0);
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_ball(&[0.1, 0.1], 0.05).0, vec![0.1, 0.1]);
    }

    #[test]
    fn box_examples() {
        let p = project_box(&[2.0, -2.0], &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(p.0, vec![1.0, -1.0]);
        assert_eq!(project_box(&[0.3, -0.2], &[-1.0, -1.0], &[1.0, 1.0]).unwrap().0, vec![0.3, -0.2]);
        assert!(project_box(&[0.0], &[-1.0, -1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn single_halfspace_matches_closed_form() {
        let w = [1.0, -2.0, 0.5];
        let b = 1.0;
        let a = [3.0, -1.0, 2.0];
        let spec = ConstraintSpec::linear(vec![w.to_vec()], vec![b]);
        let rep = project_dykstra(&a, &[spec], &s0(), DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        let excess = dot(&w, &a) - b;
        let wn = dot(&w, &w);
        for i in 0..3 {
            let expected = a[i] - excess / wn * w[i];
            assert!((rep.projected[i] - expected).abs() < 1e-10);
        }
        assert!(rep.moved);
    }

    #[test]
    fn feasible_point_is_a_fixed_point() {
        let spec = ConstraintSpec::signed_sum_band(3, 90.0, 5.0, 40.0);
        let bx = ConstraintSpec::boxed(vec![0.0; 3], vec![40.0; 3]);
        let a = [30.0, 30.0, 30.0];
        let rep = project_dykstra(&a, &[spec, bx], &s0(), DEFAULT_MAX_ITER, DEFAULT_TOL).unwrap();
        assert!(!rep.moved);
        assert_eq!(rep.iterations, 1);
        assert_eq!(rep.projected.0, a.to_vec());
    }

    #[test]
    fn bss_overallocation_is_pulled_onto_the_band() {
        let spec = ConstraintSpec::signed_sum_band(3, 90.0, 5.0, 40.0);
        let bx = ConstraintSpec::boxed(vec![0.0; 3], vec![40.0; 3]);
        let rep = project_dykstra(&[50.0, 50.0, 50.0], &[spec, bx], &s0(), DEFAULT_MAX_ITER, DEFAULT_TOL)
            .unwrap();
        for x in rep.projected.iter() {
            assert!((x - 95.0 / 3.0).abs() < 1e-8);
        }
        assert!(rep.residual <= 1e-8);
    }

    #[test]
    fn weighted_l1_projection_hits_the_cap() {
        let w = [1.0, 2.0, 0.5];
        let p = project_weighted_l1(&[10.0, -10.0, 4.0], &w, 5.0);
        let total: f64 = p.iter().zip(&w).map(|(x, w)| (x * w).abs()).sum();
        assert!((total - 5.0).abs() < 1e-12);
        // Signs are preserved and nothing flips across zero.
        assert!(p[0] >= 0.0 && p[1] <= 0.0 && p[2] >= 0.0);
    }

    #[test]
    fn counted_projection_is_exactly_feasible() {
        let counter = QpCounter::new();
        let spec = ConstraintSpec::ball(2, 0.05);
        let abox = ActionBox::uniform(2, -1.0, 1.0);
        for k in 0..200 {
            let t = k as f64 * 0.1;
            let a = ActionVec::new(vec![t.cos() * 0.9, t.sin() * 0.7]);
            let rep = project_onto_feasible(&spec, &s0(), &a, &abox, &counter).unwrap();
            assert!(spec.is_feasible(&s0(), &rep.projected).unwrap());
        }
        assert_eq!(counter.get(), 200);
    }

    #[test]
    fn positive_part_sum_projection() {
        let spec = ConstraintSpec::positive_part_sum(vec![2.0, -1.0, 1.0], 1.0);
        let abox = ActionBox::uniform(3, -2.0, 2.0);
        let a = ActionVec::new(vec![1.5, 1.5, 1.0]);
        let rep = project_onto_feasible(&spec, &s0(), &a, &abox, &QpCounter::new()).unwrap();
        assert!(spec.is_feasible(&s0(), &rep.projected).unwrap());
        // w_1 a_1 < 0, so that component is untouched.
        assert!((rep.projected[1] - 1.5).abs() < 1e-9);
        // Remaining pair: project (1.5, 1.0) onto 2 x + z <= 1.
        let t = (2.0 * 1.5 + 1.0 - 1.0) / 5.0;
        assert!((rep.projected[0] - (1.5 - 2.0 * t)).abs() < 1e-7);
        assert!((rep.projected[2] - (1.0 - t)).abs() < 1e-7);
    }

    #[test]
    fn mask_projection_picks_nearest_allowed() {
        let spec = ConstraintSpec::action_mask(vec![vec![false, true, false, true]]);
        let abox = ActionBox::uniform(1, 0.0, 3.0);
        let rep =
            project_onto_feasible(&spec, &s0(), &ActionVec::new(vec![2.0]), &abox, &QpCounter::new())
                .unwrap();
        assert_eq!(rep.projected.0, vec![1.0]);
    }
}
