//! Three-factor Hebbian plasticity with a global reinforcement schedule.
//!
//! A plastic synapse changes only when its source and target neurons fire in
//! the same step: `+2` during a potentiation step (`r = 1`), `-2` otherwise,
//! saturating at the 8-bit even range. The reinforcement signal is periodic:
//! active at frame-local steps 5 and 7 of every 12-step frame.

use crate::engine::FRAME_STEPS;
use crate::quant::{QuantMatrix, WeightRole, WEIGHT_MAX, WEIGHT_MIN};
use thiserror::Error;

/// Parameters of the three-factor rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlasticRule {
    pub potentiation_delta: i16,
    pub depression_delta: i16,
    pub clip_lo: i16,
    pub clip_hi: i16,
    pub step_granularity: i16,
}

impl Default for PlasticRule {
    fn default() -> Self {
        PlasticRule {
            potentiation_delta: 2,
            depression_delta: -2,
            clip_lo: WEIGHT_MIN,
            clip_hi: WEIGHT_MAX,
            step_granularity: 2,
        }
    }
}

impl PlasticRule {
    /// Weight change for one pre/post coincidence under reinforcement `r`.
    /// Equals `(2r - 1) * 2` for binary factors.
    #[inline]
    pub fn delta(&self, r: u8) -> i16 {
        if r == 1 {
            self.potentiation_delta
        } else {
            self.depression_delta
        }
    }
}

/// Frame-local steps (1-based) at which the reinforcement channel is on.
pub const REINFORCEMENT_STEPS: [u32; 2] = [5, 7];

/// Global third factor: 1 at frame-local steps 5 and 7 of each 12-step
/// frame, 0 elsewhere.
#[inline]
pub fn reinforcement(global_step: u64) -> u8 {
    debug_assert!(global_step >= 1);
    let local = ((global_step - 1) % FRAME_STEPS as u64) as u32 + 1;
    u8::from(REINFORCEMENT_STEPS.contains(&local))
}

/// Pure form of the rule: the update for one synapse given the binary pre
/// spike, post spike, and reinforcement factors.
#[inline]
pub fn rule_delta(rule: &PlasticRule, pre: u8, post: u8, r: u8) -> i16 {
    if pre == 1 && post == 1 {
        rule.delta(r)
    } else {
        0
    }
}

/// Applies the rule across a spike-set pair, saturating in place. Returns the
/// applied changes as (row, col, delta).
pub fn apply_rule(
    pre: &[u32],
    post: &[u32],
    r: u8,
    rule: &PlasticRule,
    weights: &mut QuantMatrix,
) -> Vec<(u32, u32, i16)> {
    let delta = rule.delta(r);
    let mut applied = Vec::with_capacity(pre.len() * post.len());
    for &j in post {
        for &i in pre {
            let d = weights.saturating_add(j as usize, i as usize, delta);
            applied.push((j, i, d));
        }
    }
    applied
}

/// Synapse groups sharing one logical weight matrix, each with its role.
#[derive(Clone, Debug)]
pub struct SyncGroup {
    pub name: String,
    /// (engine group id, role); exactly one member carries `Forward`.
    pub members: Vec<(usize, WeightRole)>,
}

/// Result of checking one synchronization group.
#[derive(Clone, Debug)]
pub struct SyncReport {
    pub name: String,
    pub max_abs_discrepancy: i32,
    /// (group id, row, col) of the first worst offender, if any.
    pub worst: Option<(usize, usize, usize)>,
}

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("sync group {name}: group {group} differs from reference by {diff} at ({row}, {col})")]
    Violation { name: String, group: usize, diff: i32, row: usize, col: usize },
    #[error("sync group {name} has no Forward member")]
    NoForward { name: String },
}

/// Checks that every member of a sync group matches the forward reference
/// under its role. The negated-transpose comparison clamps `-(-256)` to the
/// representable `254`, since that is the closest value a copy can hold.
pub fn verify_sync(
    group: &SyncGroup,
    lookup: impl Fn(usize) -> QuantMatrix,
) -> Result<SyncReport, SyncError> {
    let forward_id = group
        .members
        .iter()
        .find(|(_, role)| *role == WeightRole::Forward)
        .map(|(id, _)| *id)
        .ok_or_else(|| SyncError::NoForward { name: group.name.clone() })?;
    let reference = lookup(forward_id);
    let mut report =
        SyncReport { name: group.name.clone(), max_abs_discrepancy: 0, worst: None };
    for &(id, role) in &group.members {
        let expected = match role {
            WeightRole::Forward | WeightRole::ForwardCopy => reference.clone(),
            WeightRole::Transpose => reference.transposed(),
            WeightRole::NegatedTranspose => reference.transposed().negated(),
        };
        let actual = lookup(id);
        let (diff, at) = actual.max_abs_diff(&expected);
        if diff > report.max_abs_discrepancy {
            report.max_abs_discrepancy = diff;
            report.worst = at.map(|(r, c)| (id, r, c));
        }
    }
    Ok(report)
}

/// Like [`verify_sync`] but errors on any nonzero discrepancy.
pub fn require_sync(
    group: &SyncGroup,
    lookup: impl Fn(usize) -> QuantMatrix,
) -> Result<(), SyncError> {
    let report = verify_sync(group, &lookup)?;
    if report.max_abs_discrepancy != 0 {
        let (g, r, c) = report.worst.unwrap_or((0, 0, 0));
        return Err(SyncError::Violation {
            name: report.name,
            group: g,
            diff: report.max_abs_discrepancy,
            row: r,
            col: c,
        });
    }
    Ok(())
}
