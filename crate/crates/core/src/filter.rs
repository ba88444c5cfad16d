//! Score filter: re-weights grasp confidences by how well the grasp
//! approach lines up with the direction from the robot base to the grasp,
//! both projected into the robot base plane.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{validation, PcfError, Result};
use crate::grasp::{GraspPose, Vec3};

/// Projections shorter than this are degenerate.
pub const DEGENERATE_NORM: f64 = 1e-6;

/// Robot base plane and the camera-to-robot transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FrameJson", into = "FrameJson")]
pub struct RobotFrame {
    pub origin: Vec3,
    pub z_axis: Vec3,
    pub r_cr: Matrix3<f64>,
    /// Camera origin in robot coordinates; zero when absent.
    pub t_cr: Vec3,
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    origin: [f64; 3],
    z_axis: [f64; 3],
    #[serde(rename = "R_cr")]
    r_cr: [[f64; 3]; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t_cr: Option<[f64; 3]>,
}

impl TryFrom<FrameJson> for RobotFrame {
    type Error = PcfError;
    fn try_from(j: FrameJson) -> Result<Self> {
        RobotFrame::new(
            Vec3::from(j.origin),
            Vec3::from(j.z_axis),
            Matrix3::from_fn(|i, k| j.r_cr[i][k]),
            Vec3::from(j.t_cr.unwrap_or([0.0; 3])),
        )
    }
}

impl From<RobotFrame> for FrameJson {
    fn from(f: RobotFrame) -> Self {
        FrameJson {
            origin: f.origin.into(),
            z_axis: f.z_axis.into(),
            r_cr: std::array::from_fn(|i| std::array::from_fn(|k| f.r_cr[(i, k)])),
            t_cr: (f.t_cr != Vec3::zeros()).then(|| f.t_cr.into()),
        }
    }
}

impl RobotFrame {
    pub fn new(origin: Vec3, z_axis: Vec3, r_cr: Matrix3<f64>, t_cr: Vec3) -> Result<Self> {
        let f = RobotFrame {
            origin,
            z_axis,
            r_cr,
            t_cr,
        };
        f.validate()?;
        Ok(f)
    }

    /// Camera and robot frames coincide.
    pub fn identity(origin: Vec3, z_axis: Vec3) -> Result<Self> {
        RobotFrame::new(origin, z_axis, Matrix3::identity(), Vec3::zeros())
    }

    pub fn validate(&self) -> Result<()> {
        if (self.z_axis.norm() - 1.0).abs() > 1e-9 {
            return validation(format!("robot z axis must be unit, has norm {}", self.z_axis.norm()));
        }
        let ortho = (self.r_cr.transpose() * self.r_cr - Matrix3::identity()).abs().max();
        let det = self.r_cr.determinant();
        if !(ortho < 1e-9) || !((det - 1.0).abs() < 1e-9) {
            return validation(format!("R_cr is not a rotation: |RᵀR−I|∞={ortho:e}, det={det}"));
        }
        if self.origin.iter().chain(self.t_cr.iter()).any(|v| !v.is_finite()) {
            return validation("robot frame has non-finite coordinates");
        }
        Ok(())
    }

    /// Unit in-plane direction of `v`, or `None` when `v` is (nearly)
    /// parallel to the plane normal.
    pub fn project_to_base_plane(&self, v: Vec3) -> Option<Vec3> {
        let r = v - v.dot(&self.z_axis) * self.z_axis;
        let n = r.norm();
        (n >= DEGENERATE_NORM).then(|| r / n)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `sigmoid(A·a)` with `A` the projected base-to-grasp direction and `a` the
/// projected approach, both in robot coordinates; 0.5 if either projection
/// degenerates.
pub fn direction_score(grasp: &GraspPose, frame: &RobotFrame) -> f64 {
    let g_o = frame.r_cr * grasp.t + frame.t_cr;
    let to_grasp = frame.project_to_base_plane(g_o - frame.origin);
    let approach = frame.project_to_base_plane(frame.r_cr * grasp.approach());
    match (to_grasp, approach) {
        (Some(big_a), Some(a)) => sigmoid(big_a.dot(&a)),
        _ => 0.5,
    }
}

/// A grasp with its network score kept in `pose.score`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilteredGrasp {
    #[serde(flatten)]
    pub pose: GraspPose,
    pub direction_score: f64,
    pub filtered_score: f64,
}

/// `S = s_d · ŝ`, sorted by `S` descending; equal `S` keep input order.
pub fn apply_filter(grasps: &[GraspPose], frame: &RobotFrame) -> Vec<FilteredGrasp> {
    let mut out: Vec<FilteredGrasp> = grasps
        .iter()
        .map(|g| {
            let s_d = direction_score(g, frame);
            FilteredGrasp {
                pose: g.clone(),
                direction_score: s_d,
                filtered_score: s_d * g.score,
            }
        })
        .collect();
    out.sort_by(|x, y| y.filtered_score.total_cmp(&x.filtered_score));
    out
}
