//! Stage helpers shared by the command-line tool and the end-to-end tests.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cloud::{fps, Cloud, Frame};
use crate::error::{validation, Result};
use crate::grasp::{contact_to_pose, ContactGrasp, GraspPose, GripperModel, Vec3};
use crate::net::{decode_grasps, forward, Decoded, ModelConfig, NetConfig, SaConfig};
use crate::pcf::{concat_points, pcf_forward, FeatureMatrix, PcfConfig};
use crate::scene::{gen_antipodal_labels, render_view, AntipodalConfig, Scene, ViewSpec};
use pcfg_tensor::ParamStore;

/// An upright cylinder on the table, labelled, seen by one camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderSetup {
    pub radius: f64,
    pub height: f64,
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub labels: AntipodalConfig,
}

impl Default for CylinderSetup {
    fn default() -> Self {
        CylinderSetup {
            radius: 0.025,
            height: 0.12,
            eye: [0.35, 0.0, 0.10],
            target: [0.0, 0.0, 0.06],
            labels: AntipodalConfig {
                count: 4000,
                ..AntipodalConfig::default()
            },
        }
    }
}

impl CylinderSetup {
    pub fn scene<R: Rng>(&self, gripper: &GripperModel, rng: &mut R) -> Result<Scene> {
        let mut scene = Scene::cylinder(self.radius, self.height, [0.0, 0.0]);
        scene.validate()?;
        scene.labels = gen_antipodal_labels(&scene, &self.labels, gripper, rng)?;
        Ok(scene)
    }

    pub fn view(&self) -> Result<ViewSpec> {
        ViewSpec::looking_at(Vec3::from(self.eye), Vec3::from(self.target))
    }
}

/// Camera looking along its own +z.
pub const CAMERA_VIEW_DIR: [f64; 3] = [0.0, 0.0, 1.0];

/// Rendered view downsampled to exactly `count` points by FPS from index 0.
pub fn partial_view<R: Rng>(scene: &Scene, view: &ViewSpec, count: usize, rng: &mut R) -> Result<Cloud> {
    let cloud = render_view(scene, view, rng)?;
    if cloud.len() < count {
        return validation(format!("view has {} visible points, need {count}", cloud.len()));
    }
    Ok(cloud.select(&fps(&cloud, count, 0)?))
}

/// Scene labels expressed in the camera frame of `view`.
pub fn camera_labels(scene: &Scene, view: &ViewSpec) -> Vec<ContactGrasp> {
    let to_cam = view.camera.inverse();
    scene.labels.iter().map(|l| l.transformed(&to_cam).contact).collect()
}

pub fn label_poses(labels: &[ContactGrasp], gripper: &GripperModel) -> Result<Vec<GraspPose>> {
    labels.iter().map(|g| contact_to_pose(g, gripper)).collect()
}

/// Frozen-parameter features for `original` given its completion.
pub fn features(original: &Cloud, completion: &Cloud, cfg: &PcfConfig, params: &ParamStore) -> Result<FeatureMatrix> {
    let concat = concat_points(original, completion, cfg.points)?;
    pcf_forward(original, &concat, cfg, params)
}

/// Decoded grasps for every original point, highest score first, at most
/// `max` of them.
pub fn propose(
    original: &Cloud,
    features: &FeatureMatrix,
    cfg: &ModelConfig,
    params: &ParamStore,
    max: usize,
) -> Result<Decoded> {
    if original.frame() != Frame::Camera {
        log::warn!("proposing grasps on a {}-frame cloud", original.frame().as_str());
    }
    let pred = forward(original, features, &cfg.net, params)?;
    let mut d = decode_grasps(&pred, original, &cfg.gripper)?;
    let order = crate::scene::ranked(&d.grasps);
    let keep: Vec<usize> = order.into_iter().take(max).collect();
    d.grasps = keep.iter().map(|&i| d.grasps[i].clone()).collect();
    d.source = keep.iter().map(|&i| d.source[i]).collect();
    Ok(d)
}

/// Narrow, shallow variant of the default model: same structure and point
/// count, fewer centroids and channels. Used where the full model is too
/// slow for a CPU test budget.
pub fn reduced_model() -> ModelConfig {
    ModelConfig {
        pcf: PcfConfig {
            points: 1024,
            radii: vec![0.04, 0.08, 0.16],
            fanouts: vec![16, 16, 32],
            mlp_widths: vec![vec![16, 32]; 3],
        },
        net: NetConfig {
            sa: vec![
                SaConfig {
                    centroids: 128,
                    radii: vec![0.04, 0.08, 0.16],
                    fanouts: vec![16, 16, 32],
                    mlp_widths: vec![vec![32, 32]; 3],
                },
                SaConfig {
                    centroids: 32,
                    radii: vec![0.08, 0.16, 0.32],
                    fanouts: vec![16, 16, 16],
                    mlp_widths: vec![vec![32, 32]; 3],
                },
            ],
            fp_widths: vec![vec![64], vec![64]],
            head_width: 32,
            ..NetConfig::default()
        },
        gripper: GripperModel::default(),
    }
}
