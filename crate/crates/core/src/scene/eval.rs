use serde::{Deserialize, Serialize};

use crate::cloud::Cloud;
use crate::error::{validation, Result};
use crate::grasp::{gripper_collides, rotation_angle, GraspPose, GripperModel};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalThresholds {
    /// Meters.
    pub translation: f64,
    /// Degrees.
    pub rotation_deg: f64,
    pub k: usize,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        EvalThresholds {
            translation: 0.02,
            rotation_deg: 15.0,
            k: 20,
        }
    }
}

impl EvalThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.translation >= 0.0) || !(self.rotation_deg >= 0.0) || self.k == 0 {
            return validation(format!("invalid evaluation thresholds {self:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub precision_at_k: f64,
    pub coverage: f64,
    /// Over the same top-k proposals as the precision.
    pub collision_rate: f64,
    pub k: usize,
    pub proposals: usize,
    pub labels: usize,
}

/// Translations within `translation` and rotations within `rotation_deg`,
/// the label's 180° flip counting as the same grasp.
pub fn pose_matches(p: &GraspPose, label: &GraspPose, th: &EvalThresholds) -> bool {
    if (p.t - label.t).norm() > th.translation {
        return false;
    }
    let lim = th.rotation_deg.to_radians();
    rotation_angle(&p.r, &label.r) <= lim || rotation_angle(&p.r, &label.flipped().r) <= lim
}

/// Proposal indices by descending score, input order among equals.
pub fn ranked(proposals: &[GraspPose]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..proposals.len()).collect();
    order.sort_by(|&i, &j| proposals[j].score.total_cmp(&proposals[i].score));
    order
}

pub fn evaluate(
    proposals: &[GraspPose],
    labels: &[GraspPose],
    cloud: &Cloud,
    th: &EvalThresholds,
    gripper: &GripperModel,
) -> Result<EvalMetrics> {
    th.validate()?;
    let mut m = EvalMetrics {
        k: th.k,
        proposals: proposals.len(),
        labels: labels.len(),
        ..EvalMetrics::default()
    };
    if proposals.is_empty() {
        log::warn!("evaluate: no proposals, all metrics are zero");
        return Ok(m);
    }
    let top: Vec<usize> = ranked(proposals).into_iter().take(th.k).collect();
    let hits = top
        .iter()
        .filter(|&&i| labels.iter().any(|l| pose_matches(&proposals[i], l, th)))
        .count();
    m.precision_at_k = hits as f64 / top.len() as f64;
    let collisions = top
        .iter()
        .filter(|&&i| gripper_collides(&proposals[i], cloud, gripper))
        .count();
    m.collision_rate = collisions as f64 / top.len() as f64;
    if labels.is_empty() {
        log::warn!("evaluate: no labels, coverage is zero");
    } else {
        let covered = labels
            .iter()
            .filter(|l| proposals.iter().any(|p| pose_matches(p, l, th)))
            .count();
        m.coverage = covered as f64 / labels.len() as f64;
    }
    Ok(m)
}
