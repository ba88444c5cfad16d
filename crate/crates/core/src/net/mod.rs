//! Grasp prediction network.
//!
//! Two multi-scale set-abstraction stages over the original points (the
//! first one consuming the shape features as extra channels), two feature
//! propagation stages back to every point, and four per-point heads: score,
//! width-bin logits and the two unnormalized rotation vectors `z1`, `z2`.

mod loss;
mod train;

pub use loss::*;
pub use train::*;

use pcfg_tensor::{ParamStore, Tape, Var};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{fps_points, knn_points, query_ball_indexed, Cloud, Point};
use crate::error::{validation, Result};
use crate::grasp::{bin_to_width, orthonormalize, pose_from_axes, GraspPose, GripperModel, Vec3, WIDTH_BINS};
use crate::nn::{grouped_mlp, init_grouped_mlp, init_mlp, mlp, Bound};
use crate::pcf::{FeatureMatrix, Grouping};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaConfig {
    pub centroids: usize,
    pub radii: Vec<f64>,
    pub fanouts: Vec<usize>,
    pub mlp_widths: Vec<Vec<usize>>,
}

impl SaConfig {
    pub fn out_channels(&self) -> usize {
        self.mlp_widths.iter().map(|w| w.last().copied().unwrap_or(0)).sum()
    }
}

/// Multiplicative learning-rate decay every `every` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub every: u64,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub sa: Vec<SaConfig>,
    /// Widths of the two propagation MLPs, coarse stage first.
    pub fp_widths: Vec<Vec<usize>>,
    /// Hidden width of every head.
    pub head_width: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub topk: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub lr_decay: Option<StepDecay>,
    /// Treat the score weight of the pose term as a constant.
    pub stop_score_grad: bool,
    pub pose_distance: crate::grasp::PoseDistance,
    pub label_radius: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        let sa_widths = vec![vec![64, 64, 128]; 3];
        NetConfig {
            sa: vec![
                SaConfig {
                    centroids: 512,
                    radii: vec![0.04, 0.08, 0.16],
                    fanouts: vec![64, 64, 128],
                    mlp_widths: vec![vec![32, 32, 64], vec![64, 64, 128], vec![64, 64, 128]],
                },
                SaConfig {
                    centroids: 128,
                    radii: vec![0.08, 0.16, 0.32],
                    fanouts: vec![64, 64, 128],
                    mlp_widths: sa_widths,
                },
            ],
            fp_widths: vec![vec![256, 128], vec![128, 128]],
            head_width: 128,
            alpha: 1.0,
            beta: 10.0,
            gamma: 1.0,
            topk: 108,
            lr: 1e-4,
            weight_decay: 5e-4,
            lr_decay: None,
            stop_score_grad: false,
            pose_distance: crate::grasp::PoseDistance::Sum,
            label_radius: 0.002,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sa.len() != 2 || self.fp_widths.len() != 2 {
            return validation(format!(
                "net config: expected 2 set-abstraction and 2 propagation stages, got {} and {}",
                self.sa.len(),
                self.fp_widths.len()
            ));
        }
        for (l, sa) in self.sa.iter().enumerate() {
            if sa.radii.is_empty() || sa.radii.len() != sa.fanouts.len() || sa.radii.len() != sa.mlp_widths.len() {
                return validation(format!("net config: stage {l} has mismatched radii/fan-outs/MLPs"));
            }
            if sa.radii.iter().any(|r| !(*r > 0.0)) || sa.radii.windows(2).any(|w| w[1] <= w[0]) {
                return validation(format!("net config: stage {l} radii must be positive and strictly increasing"));
            }
            if sa.centroids == 0 || sa.fanouts.contains(&0) {
                return validation(format!("net config: stage {l} needs positive centroid and fan-out counts"));
            }
            if sa.mlp_widths.iter().any(|w| w.is_empty() || w.contains(&0)) {
                return validation(format!("net config: stage {l} has an empty MLP"));
            }
        }
        if self.sa[1].centroids > self.sa[0].centroids {
            return validation("net config: second stage has more centroids than the first");
        }
        if self.fp_widths.iter().any(|w| w.is_empty() || w.contains(&0)) || self.head_width == 0 {
            return validation("net config: empty propagation or head MLP");
        }
        if !(self.alpha > 0.0 && self.beta > 0.0 && self.gamma > 0.0) {
            return validation("net config: loss weights must be positive");
        }
        if self.topk == 0 {
            return validation("net config: topk must be positive");
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return validation("net config: negative learning rate or weight decay");
        }
        if let Some(d) = self.lr_decay {
            if d.every == 0 || !(d.factor > 0.0) {
                return validation("net config: lr decay needs a positive period and factor");
            }
        }
        if !(self.label_radius > 0.0) {
            return validation("net config: label radius must be positive");
        }
        Ok(())
    }

    pub fn learning_rate(&self, step: u64) -> f64 {
        match self.lr_decay {
            Some(d) => self.lr * d.factor.powi((step / d.every) as i32),
            None => self.lr,
        }
    }
}

/// Network outputs, one record per original point.
#[derive(Clone, Debug, PartialEq)]
pub struct PerPointPrediction {
    pub score: Vec<f64>,
    /// `len × WIDTH_BINS`, row-major.
    pub width_logits: Vec<f64>,
    pub z1: Vec<Point>,
    pub z2: Vec<Point>,
}

impl PerPointPrediction {
    pub fn len(&self) -> usize {
        self.score.len()
    }

    pub fn is_empty(&self) -> bool {
        self.score.is_empty()
    }

    pub fn width_bin(&self, i: usize) -> usize {
        argmax(&self.width_logits[i * WIDTH_BINS..(i + 1) * WIDTH_BINS])
    }

    fn from_vars(v: &PredVars<'_>) -> Self {
        let rows = |x: Var<'_>| x.value().data().chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
        PerPointPrediction {
            score: v.score.value().data().to_vec(),
            width_logits: v.width.value().data().to_vec(),
            z1: rows(v.z1),
            z2: rows(v.z2),
        }
    }
}

/// First index of the maximum.
pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Head outputs on a tape: `score` `[n,1]` (sigmoid), `width` `[n,10]`
/// logits, `z1`/`z2` `[n,3]`.
#[derive(Clone, Copy, Debug)]
pub struct PredVars<'t> {
    pub score: Var<'t>,
    pub width: Var<'t>,
    pub z1: Var<'t>,
    pub z2: Var<'t>,
}

/// Inverse-distance interpolation from a coarse set onto a dense one.
#[derive(Clone, Debug)]
pub struct Interpolation {
    pub idx: Vec<usize>,
    pub weights: Vec<f64>,
    pub k: usize,
}

impl Interpolation {
    fn new(coarse: &[Point], dense: &[Point], k: usize) -> Result<Self> {
        let k = k.min(coarse.len());
        let g = knn_points(coarse, dense, k)?;
        let mut weights = Vec::with_capacity(g.neighbor_idx.len());
        for (m, p) in dense.iter().enumerate() {
            let w: Vec<f64> = g
                .neighbors(m)
                .iter()
                .map(|&i| 1.0 / (crate::cloud::dist2(coarse[i], *p).sqrt() + 1e-8))
                .collect();
            let s: f64 = w.iter().sum();
            weights.extend(w.iter().map(|x| x / s));
        }
        Ok(Interpolation {
            idx: g.neighbor_idx,
            weights,
            k,
        })
    }
}

/// Sampling, grouping and interpolation indices of one input cloud; depends
/// only on point positions, not on parameters.
#[derive(Clone, Debug)]
pub struct NetGeometry {
    pub points: Vec<Point>,
    pub sa_centers: [Vec<usize>; 2],
    pub sa_groups: [Vec<Grouping>; 2],
    /// Second-stage centroids onto first-stage centroids, then onto points.
    pub fp: [Interpolation; 2],
}

/// Index of the point farthest from the centroid (lowest index on ties).
/// Starting sampling there makes the sampled set independent of input order.
pub fn farthest_from_centroid(points: &[Point]) -> usize {
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let d = crate::cloud::dist2(*p, c);
        if d > best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn stage_groups(src: &[Point], centers: &[usize], sa: &SaConfig) -> Result<Vec<Grouping>> {
    let center_pts: Vec<Point> = centers.iter().map(|&i| src[i]).collect();
    sa.radii
        .iter()
        .zip(&sa.fanouts)
        .map(|(&r, &k)| Ok(Grouping::new(query_ball_indexed(src, centers, r, k)?, src, &center_pts, r)))
        .collect()
}

impl NetGeometry {
    pub fn new(cloud: &Cloud, cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let points = cloud.points().to_vec();
        if points.len() < cfg.sa[0].centroids {
            return validation(format!(
                "net needs at least {} points, got {}",
                cfg.sa[0].centroids,
                points.len()
            ));
        }
        let c1 = fps_points(&points, cfg.sa[0].centroids, farthest_from_centroid(&points))?;
        let g1 = stage_groups(&points, &c1, &cfg.sa[0])?;
        let l1: Vec<Point> = c1.iter().map(|&i| points[i]).collect();
        let c2 = fps_points(&l1, cfg.sa[1].centroids, farthest_from_centroid(&l1))?;
        let g2 = stage_groups(&l1, &c2, &cfg.sa[1])?;
        let l2: Vec<Point> = c2.iter().map(|&i| l1[i]).collect();
        let fp = [Interpolation::new(&l2, &l1, 3)?, Interpolation::new(&l1, &points, 3)?];
        Ok(NetGeometry {
            points,
            sa_centers: [c1, c2],
            sa_groups: [g1, g2],
            fp,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

const HEADS: [(&str, usize); 4] = [("score", 1), ("width", WIDTH_BINS), ("z1", 3), ("z2", 3)];

fn sa_stage<'t>(p: &Bound<'t>, l: usize, groups: &[Grouping], sa: &SaConfig, feats: Var<'t>) -> Result<Var<'t>> {
    let m = groups[0].group.len();
    let parts = groups
        .iter()
        .enumerate()
        .map(|(s, g)| grouped_mlp(p, &format!("net.sa{l}.s{s}"), sa.mlp_widths[s].len(), &g.input(0..m), Some(feats)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Var::concat_cols(&parts)?)
}

/// Full network on the tape; `features` is the `[n, c]` shape feature
/// matrix row-aligned with `geo.points`.
pub fn net_tape<'t>(p: &Bound<'t>, geo: &NetGeometry, features: Var<'t>, cfg: &NetConfig) -> Result<PredVars<'t>> {
    let n = geo.len();
    if features.shape()[0] != n {
        return validation(format!("{} feature rows for {n} points", features.shape()[0]));
    }
    let l1 = sa_stage(p, 0, &geo.sa_groups[0], &cfg.sa[0], features)?;
    let l2 = sa_stage(p, 1, &geo.sa_groups[1], &cfg.sa[1], l1)?;

    let up = |x: Var<'t>, it: &Interpolation| x.weighted_gather(&it.idx, &it.weights, it.k);
    let h1 = Var::concat_cols(&[up(l2, &geo.fp[0])?, l1])?;
    let h1 = mlp(p, "net.fp0", cfg.fp_widths[0].len(), h1, true)?;
    let h0 = Var::concat_cols(&[up(h1, &geo.fp[1])?, features])?;
    let trunk = mlp(p, "net.fp1", cfg.fp_widths[1].len(), h0, true)?;

    let head = |name: &str| mlp(p, &format!("net.head.{name}"), 2, trunk, false);
    Ok(PredVars {
        score: head("score")?.sigmoid(),
        width: head("width")?,
        z1: head("z1")?,
        z2: head("z2")?,
    })
}

pub fn init_net_params(params: &mut ParamStore, cfg: &NetConfig, feature_channels: usize, rng: &mut ChaCha8Rng) {
    let mut feat = feature_channels;
    for (l, sa) in cfg.sa.iter().enumerate() {
        for (s, widths) in sa.mlp_widths.iter().enumerate() {
            init_grouped_mlp(params, &format!("net.sa{l}.s{s}"), feat, widths, rng);
        }
        feat = sa.out_channels();
    }
    let c1 = cfg.sa[0].out_channels();
    let c2 = cfg.sa[1].out_channels();
    init_mlp(params, "net.fp0", c2 + c1, &cfg.fp_widths[0], rng);
    let w0 = *cfg.fp_widths[0].last().expect("validated");
    init_mlp(params, "net.fp1", w0 + feature_channels, &cfg.fp_widths[1], rng);
    let trunk = *cfg.fp_widths[1].last().expect("validated");
    for (name, out) in HEADS {
        init_mlp(params, &format!("net.head.{name}"), trunk, &[cfg.head_width, out], rng);
    }
}

/// Frozen-parameter forward pass.
pub fn forward(cloud: &Cloud, features: &FeatureMatrix, cfg: &NetConfig, params: &ParamStore) -> Result<PerPointPrediction> {
    if features.rows() != cloud.len() {
        return validation(format!("{} feature rows for {} points", features.rows(), cloud.len()));
    }
    let geo = NetGeometry::new(cloud, cfg)?;
    forward_geometry(&geo, features, cfg, params)
}

pub fn forward_geometry(
    geo: &NetGeometry,
    features: &FeatureMatrix,
    cfg: &NetConfig,
    params: &ParamStore,
) -> Result<PerPointPrediction> {
    let tape = Tape::new();
    let p = Bound::new(&tape, params, false);
    let f = tape.constant(features.to_tensor());
    let out = net_tape(&p, geo, f, cfg)?;
    Ok(PerPointPrediction::from_vars(&out))
}

/// Decoded poses plus the number of points skipped for a degenerate
/// rotation.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded {
    pub grasps: Vec<GraspPose>,
    /// Source point of each grasp.
    pub source: Vec<usize>,
    pub degenerate: usize,
}

/// One grasp per point: contact at the point, Gram-Schmidt axes from
/// `(z1, z2)`, width at the center of the arg-max bin, score `ŝ`.
pub fn decode_grasps(pred: &PerPointPrediction, cloud: &Cloud, gripper: &GripperModel) -> Result<Decoded> {
    if pred.len() != cloud.len() {
        return validation(format!("{} predictions for {} points", pred.len(), cloud.len()));
    }
    let mut out = Decoded {
        grasps: Vec::new(),
        source: Vec::new(),
        degenerate: 0,
    };
    for (i, c) in cloud.points().iter().enumerate() {
        let s = pred.score[i];
        let finite = s.is_finite() && pred.z1[i].iter().chain(&pred.z2[i]).all(|v| v.is_finite());
        let axes = if finite {
            orthonormalize(Vec3::from(pred.z1[i]), Vec3::from(pred.z2[i])).ok()
        } else {
            None
        };
        match axes {
            Some((b, a)) => {
                let w = bin_to_width(pred.width_bin(i), gripper);
                out.grasps.push(pose_from_axes(Vec3::from(*c), a, b, w, gripper.d, s.clamp(0.0, 1.0)));
                out.source.push(i);
            }
            None => out.degenerate += 1,
        }
    }
    Ok(out)
}
