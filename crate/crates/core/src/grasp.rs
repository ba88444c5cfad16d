//! Contact-based grasp representation.
//!
//! A grasp is a contact point `c`, unit approach `a`, unit baseline `b` and
//! opening width `w`. Its pose is `t = c + (w/2)·b + d·a` with rotation
//! columns `[b, a×b, a]`, so the gripper frame has x along the baseline and
//! z along the approach vector. The gripper base sits at the frame origin;
//! fingers extend towards −z and the baseline (where the contacts lie) is at
//! depth `d`.

use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::cloud::{Cloud, Point};
use crate::error::{argument, validation, PcfError, Result};

pub type Vec3 = Vector3<f64>;

pub const WIDTH_BINS: usize = 10;

/// Parallel-jaw gripper dimensions in meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GripperModel {
    /// Base to baseline.
    pub d: f64,
    pub w_max: f64,
    /// Baseline to fingertip.
    pub finger_length: f64,
    pub finger_thickness: f64,
    /// Finger extent along the gripper y axis.
    pub finger_depth: f64,
    pub plate_thickness: f64,
}

impl Default for GripperModel {
    fn default() -> Self {
        GripperModel {
            d: 0.1034,
            w_max: 0.08,
            finger_length: 0.046,
            finger_thickness: 0.01,
            finger_depth: 0.02,
            plate_thickness: 0.01,
        }
    }
}

impl GripperModel {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d", self.d),
            ("w_max", self.w_max),
            ("finger_length", self.finger_length),
            ("finger_thickness", self.finger_thickness),
            ("finger_depth", self.finger_depth),
            ("plate_thickness", self.plate_thickness),
        ];
        for (name, v) in dims {
            if !(v > 0.0) || !v.is_finite() {
                return validation(format!("gripper {name} must be positive, got {v}"));
            }
        }
        Ok(())
    }

    /// Base, two shoulders on the baseline, two fingertips; gripper frame.
    pub fn control_points(&self) -> [Vec3; 5] {
        let h = self.w_max / 2.0;
        let tip = self.d + self.finger_length;
        [
            Vec3::zeros(),
            Vec3::new(h, 0.0, -self.d),
            Vec3::new(-h, 0.0, -self.d),
            Vec3::new(h, 0.0, -tip),
            Vec3::new(-h, 0.0, -tip),
        ]
    }

    pub fn bin_width(&self) -> f64 {
        self.w_max / WIDTH_BINS as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactGrasp {
    pub c: Point,
    pub a: Point,
    pub b: Point,
    pub width: f64,
}

impl ContactGrasp {
    pub fn new(c: Point, a: Point, b: Point, width: f64) -> Result<Self> {
        let g = ContactGrasp { c, a, b, width };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = (Vec3::from(self.a), Vec3::from(self.b));
        if self.c.iter().any(|v| !v.is_finite()) {
            return validation("contact point is not finite");
        }
        if (a.norm() - 1.0).abs() > 1e-9 || (b.norm() - 1.0).abs() > 1e-9 {
            return validation(format!("approach/baseline must be unit, got |a|={} |b|={}", a.norm(), b.norm()));
        }
        if a.dot(&b).abs() >= 1e-6 {
            return validation(format!("approach and baseline not orthogonal: a·b={}", a.dot(&b)));
        }
        if !(self.width >= 0.0) || !self.width.is_finite() {
            return validation(format!("width must be non-negative, got {}", self.width));
        }
        Ok(())
    }

    /// The same grasp seen from the opposite finger: contact moved across the
    /// opening and the baseline reversed. Maps to the same `t` with the
    /// flipped rotation.
    pub fn opposite(&self) -> ContactGrasp {
        let c = Vec3::from(self.c) + self.width * Vec3::from(self.b);
        ContactGrasp {
            c: c.into(),
            a: self.a,
            b: [-self.b[0], -self.b[1], -self.b[2]],
            width: self.width,
        }
    }
}

/// SE(3) grasp pose with width and score. Serialized as
/// `{"R": rows, "t": [..], "width": w, "score": s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseJson", into = "PoseJson")]
pub struct GraspPose {
    pub r: Matrix3<f64>,
    pub t: Vec3,
    pub width: f64,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
struct PoseJson {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
    width: f64,
    score: f64,
}

impl TryFrom<PoseJson> for GraspPose {
    type Error = PcfError;
    fn try_from(j: PoseJson) -> Result<Self> {
        let r = Matrix3::from_fn(|i, k| j.r[i][k]);
        let p = GraspPose {
            r,
            t: Vec3::from(j.t),
            width: j.width,
            score: j.score,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<GraspPose> for PoseJson {
    fn from(p: GraspPose) -> Self {
        PoseJson {
            r: std::array::from_fn(|i| std::array::from_fn(|k| p.r[(i, k)])),
            t: p.t.into(),
            width: p.width,
            score: p.score,
        }
    }
}

impl GraspPose {
    pub fn validate(&self) -> Result<()> {
        let ortho = (self.r.transpose() * self.r - Matrix3::identity()).abs().max();
        let det = self.r.determinant();
        if !(ortho < 1e-9) || !((det - 1.0).abs() < 1e-9) {
            return validation(format!("not a rotation: |RᵀR−I|∞={ortho:e}, det={det}"));
        }
        if self.t.iter().any(|v| !v.is_finite()) || !self.width.is_finite() {
            return validation("pose has non-finite translation or width");
        }
        if !(0.0..=1.0).contains(&self.score) {
            return validation(format!("score {} outside [0,1]", self.score));
        }
        Ok(())
    }

    pub fn baseline(&self) -> Vec3 {
        self.r.column(0).into()
    }

    pub fn approach(&self) -> Vec3 {
        self.r.column(2).into()
    }

    /// Rotated 180° about the approach axis; the gripper is symmetric under
    /// this flip.
    pub fn flipped(&self) -> GraspPose {
        let mut r = self.r;
        for i in 0..3 {
            r[(i, 0)] = -r[(i, 0)];
            r[(i, 1)] = -r[(i, 1)];
        }
        GraspPose { r, ..self.clone() }
    }

    pub fn to_gripper_frame(&self, p: Vec3) -> Vec3 {
        self.r.transpose() * (p - self.t)
    }
}

/// Gram-Schmidt: `b̂ = z1/‖z1‖` and `â` the normalized residual of `z2`
/// against `b̂`. Returns `(b̂, â)`.
pub fn orthonormalize(z1: Vec3, z2: Vec3) -> Result<(Vec3, Vec3)> {
    let n1 = z1.norm();
    if !(n1 > 1e-9) || !n1.is_finite() {
        return Err(PcfError::DegenerateRotation(format!("baseline vector norm {n1:e}")));
    }
    let b = z1 / n1;
    let n2 = z2.norm();
    let resid = z2 - b.dot(&z2) * b;
    let rn = resid.norm();
    // rn / n2 is the sine of the angle between z1 and z2
    if !(n2 > 1e-9) || !n2.is_finite() || !(rn > n2 * 1e-6) {
        return Err(PcfError::DegenerateRotation(format!(
            "approach vector parallel to baseline (|z2|={n2:e}, residual {rn:e})"
        )));
    }
    Ok((b, resid / rn))
}

pub fn contact_to_pose(g: &ContactGrasp, gripper: &GripperModel) -> Result<GraspPose> {
    g.validate()?;
    if g.width > gripper.w_max {
        return validation(format!("width {} exceeds w_max {}", g.width, gripper.w_max));
    }
    let (a, b) = (Vec3::from(g.a), Vec3::from(g.b));
    Ok(pose_from_axes(Vec3::from(g.c), a, b, g.width, gripper.d, 1.0))
}

/// Pose construction without validation; `a` and `b` must already be orthonormal.
pub(crate) fn pose_from_axes(c: Vec3, a: Vec3, b: Vec3, width: f64, d: f64, score: f64) -> GraspPose {
    let y = a.cross(&b);
    GraspPose {
        r: Matrix3::from_columns(&[b, y, a]),
        t: c + (width / 2.0) * b + d * a,
        width,
        score,
    }
}

pub fn control_points_world(pose: &GraspPose, gripper: &GripperModel) -> [Vec3; 5] {
    gripper.control_points().map(|v| pose.r * v + pose.t)
}

/// Reduction over the five control-point displacements.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseDistance {
    /// Sum of per-point Euclidean distances.
    #[default]
    Sum,
    /// One norm over the stacked 15-vector.
    Stacked,
}

impl FromStr for PoseDistance {
    type Err = PcfError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(PoseDistance::Sum),
            "stacked" => Ok(PoseDistance::Stacked),
            other => argument(format!("unknown pose distance `{other}` (sum|stacked)")),
        }
    }
}

fn point_set_distance(p: &[Vec3; 5], q: &[Vec3; 5], mode: PoseDistance) -> f64 {
    match mode {
        PoseDistance::Sum => p.iter().zip(q).map(|(a, b)| (a - b).norm()).sum(),
        PoseDistance::Stacked => p.iter().zip(q).map(|(a, b)| (a - b).norm_squared()).sum::<f64>().sqrt(),
    }
}

/// Control-point distance to `gt`, minimized over `gt` and its flip.
pub fn adds_distance(pred: &GraspPose, gt: &GraspPose, gripper: &GripperModel, mode: PoseDistance) -> f64 {
    let p = control_points_world(pred, gripper);
    let direct = point_set_distance(&p, &control_points_world(gt, gripper), mode);
    let flipped = point_set_distance(&p, &control_points_world(&gt.flipped(), gripper), mode);
    direct.min(flipped)
}

pub fn width_to_bin(w: f64, gripper: &GripperModel) -> Result<usize> {
    if !(0.0..=gripper.w_max).contains(&w) {
        return validation(format!("width {w} outside [0, {}]", gripper.w_max));
    }
    Ok(((w / gripper.bin_width()).floor() as usize).min(WIDTH_BINS - 1))
}

pub fn bin_to_width(bin: usize, gripper: &GripperModel) -> f64 {
    (bin as f64 + 0.5) * gripper.bin_width()
}

/// Point containment against two finger boxes and a palm plate. Fingers
/// occupy `w/2 < |x| ≤ w/2 + thickness` from the base down to the
/// fingertips; the plate sits just behind the base. The opening corridor
/// `|x| ≤ w/2`, which includes the contact surfaces, is free.
pub fn gripper_collides(pose: &GraspPose, cloud: &Cloud, gripper: &GripperModel) -> bool {
    let half = pose.width / 2.0;
    let outer = half + gripper.finger_thickness;
    let plate_half = gripper.w_max / 2.0 + gripper.finger_thickness;
    let y_half = gripper.finger_depth / 2.0;
    let tip = -(gripper.d + gripper.finger_length);
    cloud.points().iter().any(|p| {
        let q = pose.to_gripper_frame(Vec3::from(*p));
        let (ax, ay, z) = (q.x.abs(), q.y.abs(), q.z);
        if ay > y_half {
            return false;
        }
        let finger = ax > half && ax <= outer && z >= tip && z <= 0.0;
        let plate = ax <= plate_half && z > 0.0 && z <= gripper.plate_thickness;
        finger || plate
    })
}

/// Geodesic angle between two rotations, radians.
pub fn rotation_angle(r1: &Matrix3<f64>, r2: &Matrix3<f64>) -> f64 {
    let c = ((r1.transpose() * r2).trace() - 1.0) / 2.0;
    c.clamp(-1.0, 1.0).acos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Frame;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn orthonormalize_examples() {
        let (b, a) = orthonormalize(v(0.0, 2.0, 0.0), v(1.0, 1.0, 0.0)).unwrap();
        assert!((b - v(0.0, 1.0, 0.0)).norm() < 1e-15);
        assert!((a - v(1.0, 0.0, 0.0)).norm() < 1e-15);
        let (b, a) = orthonormalize(v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)).unwrap();
        assert_eq!((b, a), (v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)));
        assert!(matches!(
            orthonormalize(v(3.0, 0.0, 0.0), v(6.0, 0.0, 0.0)),
            Err(PcfError::DegenerateRotation(_))
        ));
        assert!(orthonormalize(Vec3::zeros(), v(0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn contact_to_pose_examples() {
        let gripper = GripperModel { d: 0.10, ..Default::default() };
        let g = ContactGrasp::new([0.10, 0.0, 0.50], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], 0.06).unwrap();
        let p = contact_to_pose(&g, &gripper).unwrap();
        assert!((p.t - v(0.10, 0.03, 0.60)).norm() < 1e-15);

        let g = ContactGrasp::new([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 0.0).unwrap();
        let p = contact_to_pose(&g, &gripper).unwrap();
        assert_eq!(p.r, Matrix3::identity());
        assert_eq!(p.r.determinant(), 1.0);
        assert!((p.t - v(0.0, 0.0, 0.10)).norm() < 1e-15);

        let too_wide = ContactGrasp::new([0.0; 3], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0], 0.09).unwrap();
        assert!(contact_to_pose(&too_wide, &gripper).is_err());
        assert!(ContactGrasp::new([0.0; 3], [0.0, 0.0, 1.0], [0.0, 0.6, 0.8], 0.01).is_err());
    }

    #[test]
    fn opposite_contact_gives_flipped_pose() {
        let gripper = GripperModel::default();
        let g = ContactGrasp::new([0.1, 0.2, 0.3], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0], 0.05).unwrap();
        let p = contact_to_pose(&g, &gripper).unwrap();
        let q = contact_to_pose(&g.opposite(), &gripper).unwrap();
        assert!((p.t - q.t).norm() < 1e-15);
        assert!((p.flipped().r - q.r).abs().max() < 1e-15);
    }

    #[test]
    fn control_point_examples() {
        let gripper = GripperModel::default();
        let id = GraspPose { r: Matrix3::identity(), t: Vec3::zeros(), width: 0.04, score: 1.0 };
        assert_eq!(control_points_world(&id, &gripper), gripper.control_points());
        let shifted = GraspPose { t: v(0.0, 0.0, 0.1), ..id.clone() };
        for (w, g) in control_points_world(&shifted, &gripper).iter().zip(gripper.control_points()) {
            assert!((w - g - v(0.0, 0.0, 0.1)).norm() < 1e-15);
        }
        // 180° about z swaps each finger pair, base stays on the axis
        let w = control_points_world(&id.flipped(), &gripper);
        let g = gripper.control_points();
        assert_eq!(w[0], g[0]);
        assert!((w[1] - g[2]).norm() < 1e-15 && (w[2] - g[1]).norm() < 1e-15);
        assert!((w[3] - g[4]).norm() < 1e-15 && (w[4] - g[3]).norm() < 1e-15);
    }

    #[test]
    fn adds_examples() {
        let gripper = GripperModel::default();
        let gt = GraspPose { r: Matrix3::identity(), t: v(0.1, 0.2, 0.3), width: 0.04, score: 1.0 };
        assert_eq!(adds_distance(&gt, &gt, &gripper, PoseDistance::Sum), 0.0);
        assert!(adds_distance(&gt.flipped(), &gt, &gripper, PoseDistance::Sum) < 1e-15);
        let moved = GraspPose { t: gt.t + v(0.01, 0.0, 0.0), ..gt.clone() };
        assert!((adds_distance(&moved, &gt, &gripper, PoseDistance::Sum) - 0.05).abs() < 1e-12);
        let stacked = adds_distance(&moved, &gt, &gripper, PoseDistance::Stacked);
        assert!((stacked - 0.01 * 5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn width_bins() {
        let g = GripperModel::default();
        assert_eq!(width_to_bin(0.0, &g).unwrap(), 0);
        assert_eq!(width_to_bin(0.08, &g).unwrap(), 9);
        assert_eq!(width_to_bin(0.037, &g).unwrap(), 4);
        assert!((bin_to_width(4, &g) - 0.036).abs() < 1e-15);
        assert!(width_to_bin(-0.001, &g).is_err());
        assert!(width_to_bin(0.0801, &g).is_err());
        for k in 0..WIDTH_BINS {
            assert_eq!(width_to_bin(bin_to_width(k, &g), &g).unwrap(), k);
        }
    }

    #[test]
    fn collision_examples() {
        let g = GripperModel::default();
        let pose = GraspPose { r: Matrix3::identity(), t: Vec3::zeros(), width: 0.04, score: 1.0 };
        assert!(!gripper_collides(&pose, &Cloud::empty(Frame::Camera), &g));
        let cloud = |p: Point| Cloud::new(vec![p], Frame::Camera).unwrap();
        // between the fingers, on the baseline
        assert!(!gripper_collides(&pose, &cloud([0.0, 0.0, -g.d]), &g));
        // on the contact surface itself
        assert!(!gripper_collides(&pose, &cloud([0.02, 0.0, -g.d]), &g));
        // inside the +x finger
        assert!(gripper_collides(&pose, &cloud([0.025, 0.0, -0.12]), &g));
        // inside the palm plate
        assert!(gripper_collides(&pose, &cloud([0.0, 0.0, 0.005]), &g));
        // beyond the fingertips
        assert!(!gripper_collides(&pose, &cloud([0.025, 0.0, -0.2]), &g));
    }

    #[test]
    fn pose_json_round_trip_and_validation() {
        let g = ContactGrasp::new([0.1, 0.2, 0.3], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0], 0.05).unwrap();
        let mut p = contact_to_pose(&g, &GripperModel::default()).unwrap();
        p.score = 0.25;
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"R\":[["));
        let back: GraspPose = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = s.replace("\"score\":0.25", "\"score\":1.5");
        assert!(serde_json::from_str::<GraspPose>(&bad).is_err());
        let cj = serde_json::to_value(&g).unwrap();
        assert_eq!(cj["width"], 0.05);
        assert!(cj.get("c").is_some());
    }
}
