//! Declarative feasible-set descriptions and the membership oracle.
//!
//! Every feasibility check in the crate goes through [`ConstraintSpec::is_feasible`].
//! Boundaries are feasible: all inequalities are evaluated as `<=` on the given
//! floats with no slack.

use serde::{Deserialize, Serialize};

use crate::error::{AcrlError, Result};
use crate::mdp::{ActionVec, EnvState};

/// The inequality family describing a feasible set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstraintKind {
    /// `sum a_i^2 <= radius_sq`
    Ball { radius_sq: f64 },
    /// `lo_i <= a_i <= hi_i`
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `sum |w_i a_i| <= cap`
    WeightedAbsSum { weights: Vec<f64>, cap: f64 },
    /// `sum max(w_i a_i, 0) <= cap`
    PositivePartSum { weights: Vec<f64>, cap: f64 },
    /// `|sum a_i - total| <= band` and `a_i <= per_cap`
    SignedSumBand { total: f64, band: f64, per_cap: f64 },
    /// `A a <= b`, one row per inequality.
    LinearSystem { rows: Vec<Vec<f64>>, rhs: Vec<f64> },
    /// Discrete actions: `allowed[state][action]`. The state index is
    /// `s.vector[0]`, the action index is `a[0]`.
    ActionMask { allowed: Vec<Vec<bool>> },
}

impl ConstraintKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ball { .. } => "Ball",
            Self::Box { .. } => "Box",
            Self::WeightedAbsSum { .. } => "WeightedAbsSum",
            Self::PositivePartSum { .. } => "PositivePartSum",
            Self::SignedSumBand { .. } => "SignedSumBand",
            Self::LinearSystem { .. } => "LinearSystem",
            Self::ActionMask { .. } => "ActionMask",
        }
    }
}

/// Where state-dependent weights come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightSource {
    /// `w = s.vector[offset .. offset + dim]`, e.g. joint velocities.
    StateSlice { offset: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub dim: usize,
    pub kind: ConstraintKind,
    /// Overrides the static weights of `WeightedAbsSum` / `PositivePartSum`.
    pub state_weights: Option<WeightSource>,
}

impl ConstraintSpec {
    pub fn new(dim: usize, kind: ConstraintKind) -> Self {
        Self { dim, kind, state_weights: None }
    }

    pub fn ball(dim: usize, radius_sq: f64) -> Self {
        Self::new(dim, ConstraintKind::Ball { radius_sq })
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "box bounds differ in length");
        Self::new(lo.len(), ConstraintKind::Box { lo, hi })
    }

    pub fn weighted_abs_sum(weights: Vec<f64>, cap: f64) -> Self {
        Self::new(weights.len(), ConstraintKind::WeightedAbsSum { weights, cap })
    }

    pub fn positive_part_sum(weights: Vec<f64>, cap: f64) -> Self {
        Self::new(weights.len(), ConstraintKind::PositivePartSum { weights, cap })
    }

    pub fn signed_sum_band(dim: usize, total: f64, band: f64, per_cap: f64) -> Self {
        Self::new(dim, ConstraintKind::SignedSumBand { total, band, per_cap })
    }

    pub fn linear(rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Self {
        assert_eq!(rows.len(), rhs.len(), "row count differs from rhs length");
        let dim = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == dim), "ragged constraint matrix");
        Self::new(dim, ConstraintKind::LinearSystem { rows, rhs })
    }

    pub fn action_mask(allowed: Vec<Vec<bool>>) -> Self {
        Self::new(1, ConstraintKind::ActionMask { allowed })
    }

    pub fn with_state_weights(mut self, source: WeightSource) -> Self {
        self.state_weights = Some(source);
        self
    }

    /// True for every kind except the discrete mask and state-weighted
    /// positive-part sums, which are handled by enumeration.
    pub fn is_convex(&self) -> bool {
        !matches!(
            self.kind,
            ConstraintKind::ActionMask { .. } | ConstraintKind::PositivePartSum { .. }
        )
    }

    fn check_dim(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.dim {
            return Err(AcrlError::DimensionMismatch { expected: self.dim, got: a.len() });
        }
        Ok(())
    }

    /// Weights in effect at state `s` (static or read from the state).
    pub fn weights_at<'a>(&'a self, s: &'a EnvState) -> Result<Option<&'a [f64]>> {
        let fixed = match &self.kind {
            ConstraintKind::WeightedAbsSum { weights, .. }
            | ConstraintKind::PositivePartSum { weights, .. } => weights.as_slice(),
            _ => return Ok(None),
        };
        match self.state_weights {
            None => Ok(Some(fixed)),
            Some(WeightSource::StateSlice { offset }) => {
                let end = offset + self.dim;
                if s.vector.len() < end {
                    return Err(AcrlError::DimensionMismatch { expected: end, got: s.vector.len() });
                }
                Ok(Some(&s.vector[offset..end]))
            }
        }
    }

    /// Membership test for `C(s)`.
    pub fn is_feasible(&self, s: &EnvState, a: &ActionVec) -> Result<bool> {
        self.check_dim(a)?;
        let a = a.as_slice();
        let ok = match &self.kind {
            ConstraintKind::Ball { radius_sq } => a.iter().map(|x| x * x).sum::<f64>() <= *radius_sq,
            ConstraintKind::Box { lo, hi } => {
                a.iter().zip(lo.iter().zip(hi)).all(|(x, (l, h))| *l <= *x && *x <= *h)
            }
            ConstraintKind::WeightedAbsSum { cap, .. } => {
                let w = self.weights_at(s)?.expect("weighted kind");
                a.iter().zip(w).map(|(x, w)| (w * x).abs()).sum::<f64>() <= *cap
            }
            ConstraintKind::PositivePartSum { cap, .. } => {
                let w = self.weights_at(s)?.expect("weighted kind");
                a.iter().zip(w).map(|(x, w)| (w * x).max(0.0)).sum::<f64>() <= *cap
            }
            ConstraintKind::SignedSumBand { total, band, per_cap } => {
                let sum: f64 = a.iter().sum();
                (sum - total).abs() <= *band && a.iter().all(|x| *x <= *per_cap)
            }
            ConstraintKind::LinearSystem { rows, rhs } => rows
                .iter()
                .zip(rhs)
                .all(|(row, b)| dot(row, a) <= *b),
            ConstraintKind::ActionMask { allowed } => match mask_lookup(allowed, s, a) {
                Some(ok) => ok,
                None => false,
            },
        };
        Ok(ok)
    }

    /// Largest constraint residual, zero iff feasible (up to the sign
    /// convention of each inequality). Used for projection reports.
    pub fn violation(&self, s: &EnvState, a: &[f64]) -> Result<f64> {
        self.check_dim(a)?;
        let v = match &self.kind {
            ConstraintKind::Ball { radius_sq } => a.iter().map(|x| x * x).sum::<f64>() - radius_sq,
            ConstraintKind::Box { lo, hi } => a
                .iter()
                .zip(lo.iter().zip(hi))
                .map(|(x, (l, h))| (l - x).max(x - h))
                .fold(f64::NEG_INFINITY, f64::max),
            ConstraintKind::WeightedAbsSum { cap, .. } => {
                let w = self.weights_at(s)?.expect("weighted kind");
                a.iter().zip(w).map(|(x, w)| (w * x).abs()).sum::<f64>() - cap
            }
            ConstraintKind::PositivePartSum { cap, .. } => {
                let w = self.weights_at(s)?.expect("weighted kind");
                a.iter().zip(w).map(|(x, w)| (w * x).max(0.0)).sum::<f64>() - cap
            }
            ConstraintKind::SignedSumBand { total, band, per_cap } => {
                let sum: f64 = a.iter().sum();
                let cap_excess = a.iter().map(|x| x - per_cap).fold(f64::NEG_INFINITY, f64::max);
                ((sum - total).abs() - band).max(cap_excess)
            }
            ConstraintKind::LinearSystem { rows, rhs } => rows
                .iter()
                .zip(rhs)
                .map(|(row, b)| dot(row, a) - b)
                .fold(f64::NEG_INFINITY, f64::max),
            ConstraintKind::ActionMask { allowed } => {
                let ok = mask_lookup(allowed, s, a).unwrap_or(false);
                if ok {
                    0.0
                } else {
                    1.0
                }
            }
        };
        Ok(v.max(0.0))
    }
}

fn mask_lookup(allowed: &[Vec<bool>], s: &EnvState, a: &[f64]) -> Option<bool> {
    let state = *s.vector.first()?;
    let action = a[0];
    if state < 0.0 || action < 0.0 || state.fract() != 0.0 || action.fract() != 0.0 {
        return None;
    }
    allowed.get(state as usize)?.get(action as usize).copied()
}

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
