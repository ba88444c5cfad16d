use pcfg_tensor::{Reduction, Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

use super::{argmax, NetConfig, PerPointPrediction, PredVars};
use crate::cloud::{associate_labels, Cloud, Point};
use crate::error::{validation, Result};
use crate::grasp::{
    bin_to_width, contact_to_pose, control_points_world, width_to_bin, ContactGrasp, GraspPose, GripperModel,
    PoseDistance, WIDTH_BINS,
};

/// Per-point supervision derived from labelled contacts.
#[derive(Clone, Debug, PartialEq)]
pub struct Targets {
    /// 1.0 for positive points, 0.0 otherwise.
    pub label: Vec<f64>,
    pub positives: Vec<usize>,
    /// Matched ground-truth pose of every positive.
    pub gt: Vec<GraspPose>,
    /// Width bin of the matched label.
    pub bins: Vec<usize>,
    pub contacts: Vec<Point>,
}

impl Targets {
    /// Both contacts of every label act as label points; a point within
    /// `radius` of one is positive and supervised by that contact's pose.
    pub fn new(cloud: &Cloud, labels: &[ContactGrasp], gripper: &GripperModel, radius: f64) -> Result<Self> {
        let mut label_points = Vec::with_capacity(labels.len() * 2);
        let mut poses = Vec::with_capacity(labels.len() * 2);
        let mut bins = Vec::with_capacity(labels.len() * 2);
        for g in labels {
            for side in [g.clone(), g.opposite()] {
                label_points.push(side.c);
                poses.push(contact_to_pose(&side, gripper)?);
                bins.push(width_to_bin(side.width, gripper)?);
            }
        }
        let label_cloud = Cloud::new(label_points, cloud.frame())?;
        let matches = associate_labels(cloud, &label_cloud, radius)?;
        let mut t = Targets {
            label: vec![0.0; cloud.len()],
            positives: Vec::new(),
            gt: Vec::new(),
            bins: Vec::new(),
            contacts: Vec::new(),
        };
        for (i, m) in matches.iter().enumerate() {
            if let Some(j) = m.label {
                t.label[i] = 1.0;
                t.positives.push(i);
                t.gt.push(poses[j].clone());
                t.bins.push(bins[j]);
                t.contacts.push(cloud.points()[i]);
            }
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.label.len()
    }

    pub fn is_empty(&self) -> bool {
        self.label.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_bce: f64,
    pub l_adds: f64,
    pub l_width: f64,
    pub l_total: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars<'t> {
    pub bce: Var<'t>,
    pub adds: Var<'t>,
    pub width: Var<'t>,
    pub total: Var<'t>,
}

impl LossVars<'_> {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            l_bce: self.bce.value().item(),
            l_adds: self.adds.value().item(),
            l_width: self.width.value().item(),
            l_total: self.total.value().item(),
        }
    }
}

/// Indices of the `k` largest `|ŝ − y|`, lowest index first among equals.
pub fn hard_points(score: &[f64], label: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..score.len()).collect();
    let err = |i: usize| (score[i] - label[i]).abs();
    order.sort_by(|&i, &j| err(j).total_cmp(&err(i)).then(i.cmp(&j)));
    order.truncate(k);
    order
}

fn unit_rows<'t>(x: Var<'t>) -> Result<Var<'t>> {
    let inv = x.row_norm()?.add_scalar(1e-12).recip();
    Ok(x.scale_rows(inv)?)
}

fn col(tape: &Tape, v: Vec<f64>) -> Result<Var<'_>> {
    let n = v.len();
    Ok(tape.constant(Tensor::new(&[n, 1], v)?))
}

fn point_rows(tape: &Tape, pts: impl Iterator<Item = Point>) -> Result<Var<'_>> {
    let d: Vec<f64> = pts.flat_map(|p| p.into_iter()).collect();
    let n = d.len() / 3;
    Ok(tape.constant(Tensor::new(&[n, 3], d)?))
}

/// Control-point distance between the decoded and matched poses of every
/// positive, minimized over the matched pose and its flip; `[P, 1]`.
fn pose_term<'t>(
    pred: &PredVars<'t>,
    targets: &Targets,
    gripper: &GripperModel,
    mode: PoseDistance,
) -> Result<Var<'t>> {
    let tape = pred.z1.tape();
    let pos = &targets.positives;
    let z1 = pred.z1.gather_rows(pos)?;
    let z2 = pred.z2.gather_rows(pos)?;
    let b = unit_rows(z1)?;
    let along = b.mul(z2)?.row_sum()?;
    let a = unit_rows(z2.sub(b.scale_rows(along)?)?)?;

    // width enters only through the arg-max bin, as a constant
    let logits = pred.width.value();
    let widths: Vec<f64> = (0..pos.len())
        .map(|r| bin_to_width(argmax(&logits.row(pos[r])[..WIDTH_BINS]), gripper))
        .collect();

    let c = point_rows(tape, targets.contacts.iter().copied())?;
    let gt_cp: Vec<[nalgebra::Vector3<f64>; 5]> = targets.gt.iter().map(|g| control_points_world(g, gripper)).collect();
    let flip_cp: Vec<[nalgebra::Vector3<f64>; 5]> =
        targets.gt.iter().map(|g| control_points_world(&g.flipped(), gripper)).collect();

    let mut direct = Vec::with_capacity(5);
    let mut flipped = Vec::with_capacity(5);
    for (j, v) in gripper.control_points().iter().enumerate() {
        // control points have no y component: cp = c + (w/2 + vx)·b + (d + vz)·a
        let along_b = col(tape, widths.iter().map(|w| w / 2.0 + v.x).collect())?;
        let cp = c.add(b.scale_rows(along_b)?)?.add(a.scale(gripper.d + v.z))?;
        let g = point_rows(tape, gt_cp.iter().map(|p| [p[j].x, p[j].y, p[j].z]))?;
        let f = point_rows(tape, flip_cp.iter().map(|p| [p[j].x, p[j].y, p[j].z]))?;
        direct.push(cp.sub(g)?);
        flipped.push(cp.sub(f)?);
    }
    let reduce = |diffs: &[Var<'t>]| -> Result<Var<'t>> {
        match mode {
            PoseDistance::Stacked => Ok(Var::concat_cols(diffs)?.row_norm()?),
            PoseDistance::Sum => {
                let mut acc = diffs[0].row_norm()?;
                for d in &diffs[1..] {
                    acc = acc.add(d.row_norm()?)?;
                }
                Ok(acc)
            }
        }
    };
    Ok(reduce(&direct)?.minimum(reduce(&flipped)?)?)
}

/// `α·L_bce + β·L_add-s + γ·L_width` on the tape.
pub fn loss_tape<'t>(
    pred: &PredVars<'t>,
    targets: &Targets,
    cfg: &NetConfig,
    gripper: &GripperModel,
) -> Result<LossVars<'t>> {
    let tape = pred.score.tape();
    let n = targets.len();
    if pred.score.shape() != [n, 1] {
        return validation(format!("score shape {:?} for {n} targets", pred.score.shape()));
    }
    if cfg.topk > n {
        return validation(format!("topk {} exceeds the point count {n}", cfg.topk));
    }
    let y = Tensor::new(&[n, 1], targets.label.clone())?;
    let per_point = pred.score.bce(&y, Reduction::None)?;
    let hard = hard_points(pred.score.value().data(), &targets.label, cfg.topk);
    let bce = per_point.gather_rows(&hard)?.mean();

    let (adds, width) = if targets.positives.is_empty() {
        log::warn!("no positive points: pose and width terms are zero");
        let zero = tape.constant(Tensor::scalar(0.0));
        (zero, zero)
    } else {
        let d = pose_term(pred, targets, gripper, cfg.pose_distance)?;
        let s = pred.score.gather_rows(&targets.positives)?;
        let s = if cfg.stop_score_grad {
            tape.constant((*s.value()).clone())
        } else {
            s
        };
        let adds = d.mul(s)?.mean();
        let p = targets.positives.len();
        let mut onehot = vec![0.0; p * WIDTH_BINS];
        for (r, &bin) in targets.bins.iter().enumerate() {
            onehot[r * WIDTH_BINS + bin] = 1.0;
        }
        let width = pred
            .width
            .gather_rows(&targets.positives)?
            .sigmoid()
            .bce(&Tensor::new(&[p, WIDTH_BINS], onehot)?, Reduction::Mean)?;
        (adds, width)
    };
    let total = bce.scale(cfg.alpha).add(adds.scale(cfg.beta))?.add(width.scale(cfg.gamma))?;
    Ok(LossVars { bce, adds, width, total })
}

/// Loss of fixed predictions.
pub fn loss_total(
    pred: &PerPointPrediction,
    targets: &Targets,
    cfg: &NetConfig,
    gripper: &GripperModel,
) -> Result<LossBreakdown> {
    let tape = Tape::new();
    let n = pred.len();
    let rows3 = |v: &[Point]| Tensor::new(&[v.len(), 3], v.iter().flat_map(|p| p.iter().copied()).collect());
    let vars = PredVars {
        score: tape.constant(Tensor::new(&[n, 1], pred.score.clone())?),
        width: tape.constant(Tensor::new(&[n, WIDTH_BINS], pred.width_logits.clone())?),
        z1: tape.constant(rows3(&pred.z1)?),
        z2: tape.constant(rows3(&pred.z2)?),
    };
    Ok(loss_tape(&vars, targets, cfg, gripper)?.breakdown())
}
